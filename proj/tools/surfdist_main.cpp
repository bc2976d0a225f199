// Batch front end: validate -> flatten -> distances -> matrices -> statistics
// -> landmark propagation. Every subcommand is a thin wrapper over the
// library; outputs are bit-identical to direct library calls.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "surfdist/analysis.hpp"
#include "surfdist/distances.hpp"
#include "surfdist/errors.hpp"
#include "surfdist/flatten.hpp"
#include "surfdist/mesh.hpp"

using nlohmann::json;
using namespace surfdist;

namespace {

constexpr const char* kVersion = "0.1.0";

// One table holds every tunable; the config file and the command-line flags
// both write into it, flags last.
struct Defaults {
    int samples = 256;
    double R = 0.5;
    int rotations = 64;
    int theta_refine = 16;
    int max_peaks = 8;
    int peak_ring = 2;
    double peak_prominence = 0.05;
    double rbf_bandwidth = 0.3;
    int quad_radial = 16;
    int quad_angular = 32;
    int alpha_angular = 16;
    int alpha_radial = 5;
    double alpha_max = 0.6;
    int grid_theta = 16;
    long long permutations = 10000;
    std::uint64_t seed = 0;
    double diffusion_tol = 0.05;
    int diffusion_max_iterations = 100;
    double solver_tol = 1e-10;
    std::string metric = "cP";
    int jobs = 1;
};

void print_defaults(const Defaults& d) {
    std::printf("%-26s %-12s %s\n", "key", "value", "meaning");
    auto row = [](const char* k, const std::string& v, const char* m) {
        std::printf("%-26s %-12s %s\n", k, v.c_str(), m);
    };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", v);
        return std::string(buf);
    };
    row("samples", std::to_string(d.samples), "farthest-point samples per surface");
    row("R", num(d.R), "hyperbolic neighborhood radius");
    row("rotations", std::to_string(d.rotations), "rotation grid size (theta values)");
    row("theta_refine", std::to_string(d.theta_refine), "local rotation refinement steps (cP)");
    row("max_peaks", std::to_string(d.max_peaks), "density peaks kept per surface (cP)");
    row("peak_ring", std::to_string(d.peak_ring), "local-maximum neighborhood ring (cP)");
    row("peak_prominence", num(d.peak_prominence), "peak prominence, fraction of density range");
    row("rbf_bandwidth", num(d.rbf_bandwidth), "disk deformation kernel width (cP)");
    row("quad_radial", std::to_string(d.quad_radial), "neighborhood quadrature rings (cWn)");
    row("quad_angular", std::to_string(d.quad_angular), "neighborhood quadrature angles (cWn)");
    row("alpha_angular", std::to_string(d.alpha_angular), "Mobius grid directions (cW)");
    row("alpha_radial", std::to_string(d.alpha_radial), "Mobius grid rings (cW)");
    row("alpha_max", num(d.alpha_max), "Mobius grid radius bound (cW)");
    row("grid_theta", std::to_string(d.grid_theta), "Mobius grid rotations (cW)");
    row("permutations", std::to_string(d.permutations), "Mantel permutation count");
    row("seed", std::to_string(d.seed), "Mantel permutation seed");
    row("diffusion_tol", num(d.diffusion_tol), "area-correction residual tolerance");
    row("diffusion_max_iterations", std::to_string(d.diffusion_max_iterations),
        "area-correction iteration cap");
    row("solver_tol", num(d.solver_tol), "flattening solve relative residual");
    row("metric", d.metric, "distance to compute: cP | cWn | cW");
    row("jobs", std::to_string(d.jobs), "worker threads for matrix runs");
}

int parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    int out = 0;
    try {
        out = std::stoi(v, &pos);
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "' needs an integer, got '" + v + "'");
    }
    if (pos != v.size())
        throw ParseError("config key '" + key + "' needs an integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "' needs a number, got '" + v + "'");
    }
    if (pos != v.size())
        throw ParseError("config key '" + key + "' needs a number, got '" + v + "'");
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

void apply_config(const std::filesystem::path& path, Defaults& d) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected key = value");
        if (key == "samples") d.samples = parse_int(key, value);
        else if (key == "R") d.R = parse_double(key, value);
        else if (key == "rotations") d.rotations = parse_int(key, value);
        else if (key == "theta_refine") d.theta_refine = parse_int(key, value);
        else if (key == "max_peaks") d.max_peaks = parse_int(key, value);
        else if (key == "peak_ring") d.peak_ring = parse_int(key, value);
        else if (key == "peak_prominence") d.peak_prominence = parse_double(key, value);
        else if (key == "rbf_bandwidth") d.rbf_bandwidth = parse_double(key, value);
        else if (key == "quad_radial") d.quad_radial = parse_int(key, value);
        else if (key == "quad_angular") d.quad_angular = parse_int(key, value);
        else if (key == "alpha_angular") d.alpha_angular = parse_int(key, value);
        else if (key == "alpha_radial") d.alpha_radial = parse_int(key, value);
        else if (key == "alpha_max") d.alpha_max = parse_double(key, value);
        else if (key == "grid_theta") d.grid_theta = parse_int(key, value);
        else if (key == "permutations") d.permutations = parse_int(key, value);
        else if (key == "seed") d.seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "diffusion_tol") d.diffusion_tol = parse_double(key, value);
        else if (key == "diffusion_max_iterations")
            d.diffusion_max_iterations = parse_int(key, value);
        else if (key == "solver_tol") d.solver_tol = parse_double(key, value);
        else if (key == "metric") d.metric = value;
        else if (key == "jobs") d.jobs = parse_int(key, value);
        else throw ParseError(path.string() + ": unknown config key '" + key + "'");
    }
}

void validate_ranges(const Defaults& d) {
    auto fail = [](const std::string& msg) { throw ParseError("parameter out of range: " + msg); };
    if (d.samples < 1) fail("samples must be >= 1");
    if (!(d.R > 0.0)) fail("R must be positive");
    if (d.rotations < 1) fail("rotations must be >= 1");
    if (d.theta_refine < 0) fail("theta_refine must be >= 0");
    if (d.max_peaks < 1) fail("max_peaks must be >= 1");
    if (d.peak_ring < 1) fail("peak_ring must be >= 1");
    if (d.peak_prominence < 0.0) fail("peak_prominence must be >= 0");
    if (!(d.rbf_bandwidth > 0.0)) fail("rbf_bandwidth must be positive");
    if (d.quad_radial < 1 || d.quad_angular < 1) fail("quadrature grid must be >= 1 x 1");
    if (d.alpha_angular < 1) fail("alpha_angular must be >= 1");
    if (d.alpha_radial < 0) fail("alpha_radial must be >= 0");
    if (!(d.alpha_max > 0.0) || d.alpha_max >= 1.0) fail("alpha_max must lie in (0,1)");
    if (d.grid_theta < 1) fail("grid_theta must be >= 1");
    if (d.permutations < 99) fail("permutations must be >= 99");
    if (!(d.diffusion_tol > 0.0)) fail("diffusion_tol must be positive");
    if (d.diffusion_max_iterations < 1) fail("diffusion_max_iterations must be >= 1");
    if (!(d.solver_tol > 0.0)) fail("solver_tol must be positive");
    if (d.metric != "cP" && d.metric != "cWn" && d.metric != "cW")
        fail("metric must be cP, cWn or cW");
    if (d.jobs < 1) fail("jobs must be >= 1");
}

json config_json(const Defaults& d) {
    // jobs is an execution detail, not part of the mathematical configuration,
    // so it stays out of the hash (outputs are parallelism-independent).
    return json{{"samples", d.samples},
                {"R", d.R},
                {"rotations", d.rotations},
                {"theta_refine", d.theta_refine},
                {"max_peaks", d.max_peaks},
                {"peak_ring", d.peak_ring},
                {"peak_prominence", d.peak_prominence},
                {"rbf_bandwidth", d.rbf_bandwidth},
                {"quad_radial", d.quad_radial},
                {"quad_angular", d.quad_angular},
                {"alpha_angular", d.alpha_angular},
                {"alpha_radial", d.alpha_radial},
                {"alpha_max", d.alpha_max},
                {"grid_theta", d.grid_theta},
                {"permutations", d.permutations},
                {"seed", d.seed},
                {"diffusion_tol", d.diffusion_tol},
                {"diffusion_max_iterations", d.diffusion_max_iterations},
                {"solver_tol", d.solver_tol},
                {"metric", d.metric}};
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_provenance(const std::string& out_path, const std::string& command, const Defaults& d,
                      const std::vector<std::string>& inputs) {
    json cfg = config_json(d);
    json p{{"tool", "surfdist"},
           {"version", kVersion},
           {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                         "." + std::to_string(EIGEN_MINOR_VERSION)},
           {"command", command},
           {"config", cfg},
           {"config_hash", fnv1a_hex(cfg.dump())},
           {"inputs", inputs}};
    std::string path = out_path + ".provenance.json";
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << p.dump(2) << "\n";
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

struct Manifest {
    std::vector<std::string> ids;
    std::vector<std::filesystem::path> paths;
    std::vector<std::string> label_names;
    std::vector<std::vector<std::string>> labels;
};

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty manifest " + path.string());
    auto head = split_csv(line);
    if (head.size() < 2 || head[0] != "id" || head[1] != "mesh_path")
        throw ParseError("manifest header must start with id,mesh_path");
    Manifest mf;
    mf.label_names.assign(head.begin() + 2, head.end());
    auto dir = path.parent_path();
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != head.size())
            throw ParseError("manifest row has " + std::to_string(cells.size()) +
                             " cells, header has " + std::to_string(head.size()));
        if (!seen.insert(cells[0]).second)
            throw ParseError("duplicate manifest id '" + cells[0] + "'");
        mf.ids.push_back(cells[0]);
        std::filesystem::path mp = cells[1];
        if (mp.is_relative()) mp = dir / mp;
        mf.paths.push_back(mp);
        mf.labels.emplace_back(cells.begin() + 2, cells.end());
    }
    if (mf.ids.empty()) throw ParseError("manifest " + path.string() + " lists no specimens");
    return mf;
}

CpOptions cp_options(const Defaults& d) {
    CpOptions o;
    o.samples = d.samples;
    o.rotations = d.rotations;
    o.theta_refine = d.theta_refine;
    o.max_peaks = d.max_peaks;
    o.peak_ring = d.peak_ring;
    o.peak_prominence = d.peak_prominence;
    o.rbf_bandwidth = d.rbf_bandwidth;
    o.correction.tol = d.diffusion_tol;
    o.correction.max_iterations = d.diffusion_max_iterations;
    o.jobs = 1;
    return o;
}

NeighborhoodSpec cwn_spec(const Defaults& d) {
    NeighborhoodSpec spec;
    spec.R = d.R;
    spec.quad.radial = d.quad_radial;
    spec.quad.angular = d.quad_angular;
    spec.rotations = d.rotations;
    return spec;
}

MobiusGrid cw_grid(const Defaults& d) {
    MobiusGrid g;
    g.alpha_angular = d.alpha_angular;
    g.alpha_radial = d.alpha_radial;
    g.theta = d.grid_theta;
    g.alpha_max = d.alpha_max;
    return g;
}

struct Flattened {
    TriMesh mesh;
    FlatMap flat;
};

Flattened prepare(const std::filesystem::path& path, const Defaults& d, std::string id = "") {
    Flattened out;
    out.mesh = normalize_mesh(load_mesh_file(path, std::move(id)));
    FlattenOptions fo;
    fo.solver_tol = d.solver_tol;
    out.flat = flatten(out.mesh, fo);
    return out;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_validate(const std::vector<std::string>& paths) {
    bool all_pass = true;
    for (const auto& p : paths) {
        TriMesh mesh = parse_mesh_file(p);
        TopologyReport rep = validate_disk_topology(mesh);
        std::printf("%s: %s vertices=%d edges=%d faces=%d euler=%d boundary_loops=%d%s%s\n",
                    mesh.specimen_id.c_str(), rep.pass ? "PASS" : "FAIL", rep.vertex_count,
                    rep.edge_count, rep.face_count, rep.euler_characteristic,
                    rep.boundary_loop_count, rep.detail.empty() ? "" : " — ",
                    rep.detail.c_str());
        all_pass = all_pass && rep.pass;
    }
    return all_pass ? 0 : 1;
}

int cmd_flatten(const std::string& mesh_path, const std::string& out_path, const Defaults& d) {
    TriMesh mesh = load_mesh_file(mesh_path);
    FlattenOptions fo;
    fo.solver_tol = d.solver_tol;
    FlatMap flat = flatten(mesh, fo);
    double distortion = mean_angle_distortion(mesh, flat.disk_coords);
    std::printf("%s: %d vertices, %d clamped cotangent weights, mean angle distortion %.6g rad\n",
                mesh.specimen_id.c_str(), flat.vertex_count(), flat.clamped_weight_count,
                distortion);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw ParseError("cannot write " + out_path);
        save_flatmap_csv(flat, out);
        write_provenance(out_path, "flatten", d, {mesh_path});
    }
    return 0;
}

int cmd_dist(const std::string& pathA, const std::string& pathB, const std::string& out_path,
             const Defaults& d) {
    Flattened A = prepare(pathA, d);
    Flattened B = prepare(pathB, d);
    double value = 0.0;
    if (d.metric == "cP") {
        CpResult res = cp_distance(A.mesh, B.mesh, A.flat, B.flat, cp_options(d));
        value = res.value;
        if (!out_path.empty()) {
            std::ofstream out(out_path);
            if (!out) throw ParseError("cannot write " + out_path);
            save_correspondence_csv(res.map, out);
            write_provenance(out_path, "dist", d, {pathA, pathB});
        }
    } else {
        int nA = std::min(d.samples, A.mesh.vertex_count());
        int nB = std::min(d.samples, B.mesh.vertex_count());
        SampleSet sA = sample_surface(A.flat, A.mesh, nA);
        SampleSet sB = sample_surface(B.flat, B.mesh, nB);
        if (d.metric == "cWn") {
            CwnResult res = cwn_distance(A.flat, B.flat, sA, sB, cwn_spec(d));
            value = res.value;
            if (!out_path.empty()) {
                CorrespondenceMap map =
                    cwn_correspondence(res, sA, sB, A.mesh, A.flat, B.mesh, B.flat);
                std::ofstream out(out_path);
                if (!out) throw ParseError("cannot write " + out_path);
                save_correspondence_csv(map, out);
                write_provenance(out_path, "dist", d, {pathA, pathB});
            }
        } else {
            if (!out_path.empty())
                throw ParseError("metric cW does not produce a correspondence map");
            value = cw_distance(sA, sB, cw_grid(d));
        }
    }
    std::printf("%.17g\n", value);
    return 0;
}

int cmd_matrix(const std::string& manifest_path, const std::string& out_path, const Defaults& d) {
    Manifest mf = read_manifest(manifest_path);
    const int n = static_cast<int>(mf.ids.size());
    std::vector<Flattened> surf(n);
    std::vector<SampleSet> samples(n);
    for (int i = 0; i < n; ++i) {
        surf[i] = prepare(mf.paths[i], d, mf.ids[i]);
        if (d.metric != "cP")
            samples[i] = sample_surface(surf[i].flat, surf[i].mesh,
                                        std::min(d.samples, surf[i].mesh.vertex_count()));
    }

    std::function<double(int, int)> fn;
    if (d.metric == "cP") {
        fn = [&](int i, int j) {
            return cp_distance(surf[i].mesh, surf[j].mesh, surf[i].flat, surf[j].flat,
                               cp_options(d))
                .value;
        };
    } else if (d.metric == "cWn") {
        fn = [&](int i, int j) {
            return cwn_distance(surf[i].flat, surf[j].flat, samples[i], samples[j], cwn_spec(d))
                .value;
        };
    } else {
        fn = [&](int i, int j) { return cw_distance(samples[i], samples[j], cw_grid(d)); };
    }

    DistanceMatrix dm = pairwise_matrix(mf.ids, fn, d.metric, d.jobs);

    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot write " + out_path);
    save_matrix_csv(dm, out);

    std::string log_path = out_path + ".log";
    std::ofstream log(log_path);
    if (!log) throw ParseError("cannot write " + log_path);
    char buf[64];
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", dm.values(i, j));
            log << mf.ids[i] << ',' << mf.ids[j] << ',' << buf << '\n';
        }
    for (const auto& f : dm.failures) log << "# failed " << f << '\n';
    write_provenance(out_path, "matrix", d, {manifest_path});

    std::printf("%d specimens, %d pairs, metric %s%s\n", n, n * (n - 1) / 2, d.metric.c_str(),
                dm.complete ? "" : " (incomplete)");
    for (const auto& f : dm.failures) std::fprintf(stderr, "failed pair %s\n", f.c_str());
    return dm.complete ? 0 : 1;
}

int cmd_mantel(const std::string& pathA, const std::string& pathB, const std::string& json_path,
               const Defaults& d) {
    std::ifstream inA(pathA), inB(pathB);
    if (!inA) throw ParseError("cannot open " + pathA);
    if (!inB) throw ParseError("cannot open " + pathB);
    DistanceMatrix D1 = load_matrix_csv(inA);
    DistanceMatrix D2 = load_matrix_csv(inB);
    MantelResult res = mantel(D1, D2, static_cast<int>(d.permutations), d.seed);
    std::printf("r = %.17g\nsignificance = %.17g\n", res.r, res.significance);
    if (!json_path.empty()) {
        json out{{"r", res.r},
                 {"significance", res.significance},
                 {"permutations", d.permutations},
                 {"seed", d.seed}};
        std::ofstream o(json_path);
        if (!o) throw ParseError("cannot write " + json_path);
        o << out.dump(2) << "\n";
        write_provenance(json_path, "mantel", d, {pathA, pathB});
    }
    return 0;
}

int cmd_classify(const std::string& matrix_path, const std::string& manifest_path,
                 const std::string& level, const std::string& json_path, const Defaults& d) {
    std::ifstream in(matrix_path);
    if (!in) throw ParseError("cannot open " + matrix_path);
    DistanceMatrix D = load_matrix_csv(in);
    Manifest mf = read_manifest(manifest_path);

    int col = -1;
    for (std::size_t k = 0; k < mf.label_names.size(); ++k)
        if (mf.label_names[k] == level) col = static_cast<int>(k);
    if (col < 0) {
        try {
            col = parse_int("level", level) - 1;
        } catch (const ParseError&) {
            throw ParseError("unknown label column '" + level + "'");
        }
    }
    if (col < 0 || col >= static_cast<int>(mf.label_names.size()))
        throw ParseError("label column " + level + " out of range (manifest has " +
                         std::to_string(mf.label_names.size()) + ")");

    std::vector<std::string> labels;
    for (const auto& id : D.ids) {
        auto it = std::find(mf.ids.begin(), mf.ids.end(), id);
        if (it == mf.ids.end()) throw ParseError("matrix id '" + id + "' is not in the manifest");
        labels.push_back(mf.labels[it - mf.ids.begin()][col]);
    }

    ClassificationReport rep = loo_classify(D, labels);
    std::printf("success rate: %.17g%%\n", rep.success_rate);
    for (int i = 0; i < D.size(); ++i)
        std::printf("%s: actual %s, nearest %s (%s)\n", D.ids[i].c_str(), rep.actual[i].c_str(),
                    D.ids[rep.nearest[i]].c_str(), rep.assigned[i].c_str());
    if (!json_path.empty()) {
        json conf = json::object();
        for (const auto& [actual, row] : rep.confusion) {
            conf[actual] = json::object();
            for (const auto& [assigned, count] : row) conf[actual][assigned] = count;
        }
        json out{{"success_rate", rep.success_rate},
                 {"level", mf.label_names[col]},
                 {"assigned", rep.assigned},
                 {"actual", rep.actual},
                 {"confusion", conf}};
        std::ofstream o(json_path);
        if (!o) throw ParseError("cannot write " + json_path);
        o << out.dump(2) << "\n";
        write_provenance(json_path, "classify", d, {matrix_path, manifest_path});
    }
    return 0;
}

int cmd_propagate(const std::vector<std::string>& map_paths,
                  const std::vector<std::string>& mesh_paths, const std::string& landmarks_path,
                  const std::string& out_path, const Defaults& d) {
    if (mesh_paths.size() != map_paths.size() + 1)
        throw ParseError("a chain of k maps needs k+1 meshes (got " +
                         std::to_string(map_paths.size()) + " maps, " +
                         std::to_string(mesh_paths.size()) + " meshes)");
    std::vector<CorrespondenceMap> maps;
    for (const auto& p : map_paths) {
        std::ifstream in(p);
        if (!in) throw ParseError("cannot open " + p);
        maps.push_back(load_correspondence_csv(in));
    }
    std::vector<TriMesh> meshes;
    for (const auto& p : mesh_paths) meshes.push_back(load_mesh_file(p));

    std::ifstream lin(landmarks_path);
    if (!lin) throw ParseError("cannot open " + landmarks_path);
    LandmarkSet lms = load_landmarks(lin, meshes.front());

    PropagationResult res = propagate_along_path(maps, lms, meshes);
    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot write " + out_path);
    save_landmarks(res.landmarks, out);
    write_provenance(out_path, "propagate", d, mesh_paths);

    int degenerate = 0;
    for (std::size_t k = 0; k < res.degenerate.size(); ++k)
        if (res.degenerate[k]) {
            ++degenerate;
            std::fprintf(stderr, "landmark '%s' crossed a degenerate image triangle\n",
                         res.landmarks.entries[k].label.c_str());
        }
    std::printf("propagated %zu landmarks through %zu maps (%d degenerate)\n",
                res.landmarks.entries.size(), maps.size(), degenerate);
    return 0;
}

int cmd_heatmap(const std::string& pathA, const std::string& pathB, const std::string& out_path,
                const std::string& order_mode, const Defaults& d) {
    std::ifstream inA(pathA), inB(pathB);
    if (!inA) throw ParseError("cannot open " + pathA);
    if (!inB) throw ParseError("cannot open " + pathB);
    DistanceMatrix upper = load_matrix_csv(inA);
    DistanceMatrix lower = load_matrix_csv(inB);
    std::vector<int> order;
    if (order_mode == "seriate") {
        order = seriate(upper);
    } else {
        order.resize(upper.size());
        for (int i = 0; i < upper.size(); ++i) order[i] = i;
    }
    heatmap_export(upper, lower, order, out_path);
    write_provenance(out_path, "heatmap", d, {pathA, pathB});
    std::printf("wrote %dx%d pixmap to %s\n", upper.size(), upper.size(), out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    Defaults d;
    if (const char* env = std::getenv("SURFDIST_JOBS")) {
        int j = std::atoi(env);
        if (j >= 1) d.jobs = j;
    }

    // The config file seeds the defaults before flag parsing, so flags win.
    try {
        for (int i = 1; i < argc; ++i) {
            std::string a = argv[i];
            if (a == "--config" && i + 1 < argc) apply_config(argv[i + 1], d);
            else if (a.rfind("--config=", 0) == 0) apply_config(a.substr(9), d);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    CLI::App app{"landmark-free geometric distances between disk-type surfaces"};
    app.set_version_flag("--version", kVersion);
    std::string config_path;
    app.add_option("--config", config_path, "flat key = value configuration file")
        ->expected(1);
    bool show_defaults = false;
    app.add_flag("--show-defaults", show_defaults, "print the defaults table and exit");

    std::function<int()> run;

    auto* validate = app.add_subcommand("validate", "check meshes for disk topology");
    std::vector<std::string> validate_paths;
    validate->add_option("meshes", validate_paths, "mesh files (.off/.ply)")->required();
    validate->callback([&] { run = [&] { return cmd_validate(validate_paths); }; });

    auto* flat = app.add_subcommand("flatten", "conformally flatten a mesh to the unit disk");
    std::string flat_mesh, flat_out;
    flat->add_option("mesh", flat_mesh, "mesh file")->required();
    flat->add_option("-o,--output", flat_out, "flat map CSV path");
    flat->add_option("--solver-tol", d.solver_tol, "flattening solve relative residual");
    flat->callback([&] { run = [&] { return cmd_flatten(flat_mesh, flat_out, d); }; });

    auto* dist = app.add_subcommand("dist", "distance between two surfaces");
    std::string dist_a, dist_b, dist_out;
    dist->add_option("meshA", dist_a, "first mesh")->required();
    dist->add_option("meshB", dist_b, "second mesh")->required();
    dist->add_option("--metric", d.metric, "cP | cWn | cW")
        ->check(CLI::IsMember({"cP", "cWn", "cW"}));
    dist->add_option("-o,--output", dist_out, "correspondence CSV path (cP/cWn)");
    dist->add_option("--samples", d.samples, "farthest-point samples per surface");
    dist->add_option("--R", d.R, "hyperbolic neighborhood radius (cWn)");
    dist->add_option("--rotations", d.rotations, "rotation grid size");
    dist->add_option("--theta-refine", d.theta_refine, "local rotation refinement steps (cP)");
    dist->add_option("--max-peaks", d.max_peaks, "density peaks kept per surface (cP)");
    dist->add_option("--peak-prominence", d.peak_prominence,
                     "peak prominence, fraction of density range (cP)");
    dist->add_option("--rbf-bandwidth", d.rbf_bandwidth, "disk deformation kernel width (cP)");
    dist->add_option("--diffusion-tol", d.diffusion_tol, "area-correction residual tolerance");
    dist->callback([&] { run = [&] { return cmd_dist(dist_a, dist_b, dist_out, d); }; });

    auto* matrix = app.add_subcommand("matrix", "pairwise distance matrix from a manifest");
    std::string matrix_manifest, matrix_out;
    matrix->add_option("manifest", matrix_manifest, "manifest CSV: id,mesh_path,label1,...")
        ->required();
    matrix->add_option("-o,--output", matrix_out, "matrix CSV path")->required();
    matrix->add_option("--metric", d.metric, "cP | cWn | cW")
        ->check(CLI::IsMember({"cP", "cWn", "cW"}));
    matrix->add_option("--jobs", d.jobs, "worker threads (env SURFDIST_JOBS)");
    matrix->add_option("--samples", d.samples, "farthest-point samples per surface");
    matrix->add_option("--R", d.R, "hyperbolic neighborhood radius (cWn)");
    matrix->add_option("--rotations", d.rotations, "rotation grid size");
    matrix->add_option("--diffusion-tol", d.diffusion_tol, "area-correction residual tolerance");
    matrix->callback([&] { run = [&] { return cmd_matrix(matrix_manifest, matrix_out, d); }; });

    auto* mantel_cmd = app.add_subcommand("mantel", "permutation correlation of two matrices");
    std::string mantel_a, mantel_b, mantel_json;
    mantel_cmd->add_option("matrixA", mantel_a, "first distance matrix CSV")->required();
    mantel_cmd->add_option("matrixB", mantel_b, "second distance matrix CSV")->required();
    mantel_cmd->add_option("--permutations", d.permutations, "permutation count");
    mantel_cmd->add_option("--seed", d.seed, "permutation seed");
    mantel_cmd->add_option("--json", mantel_json, "write the result as JSON");
    mantel_cmd->callback(
        [&] { run = [&] { return cmd_mantel(mantel_a, mantel_b, mantel_json, d); }; });

    auto* classify = app.add_subcommand("classify", "leave-one-out nearest-neighbor labels");
    std::string cls_matrix, cls_manifest, cls_level = "1", cls_json;
    classify->add_option("matrix", cls_matrix, "distance matrix CSV")->required();
    classify->add_option("manifest", cls_manifest, "manifest CSV with label columns")->required();
    classify->add_option("--level", cls_level, "label column name or 1-based index");
    classify->add_option("--json", cls_json, "write the report as JSON");
    classify->callback(
        [&] { run = [&] { return cmd_classify(cls_matrix, cls_manifest, cls_level, cls_json, d); }; });

    auto* propagate = app.add_subcommand("propagate", "push landmarks through correspondences");
    std::vector<std::string> prop_maps, prop_meshes;
    std::string prop_landmarks, prop_out;
    propagate->add_option("--map", prop_maps, "correspondence CSV (repeat to chain)")->required();
    propagate->add_option("--mesh", prop_meshes, "surface meshes along the chain (k+1 of them)")
        ->required();
    propagate->add_option("--landmarks", prop_landmarks, "landmark CSV on the first mesh")
        ->required();
    propagate->add_option("-o,--output", prop_out, "propagated landmark CSV path")->required();
    propagate->callback([&] {
        run = [&] { return cmd_propagate(prop_maps, prop_meshes, prop_landmarks, prop_out, d); };
    });

    auto* heatmap = app.add_subcommand("heatmap", "two-triangle distance pixmap (P6)");
    std::string hm_a, hm_b, hm_out, hm_order = "seriate";
    heatmap->add_option("matrixA", hm_a, "upper-triangle matrix CSV")->required();
    heatmap->add_option("matrixB", hm_b, "lower-triangle matrix CSV")->required();
    heatmap->add_option("-o,--output", hm_out, "output pixmap path")->required();
    heatmap->add_option("--order", hm_order, "row ordering")
        ->check(CLI::IsMember({"seriate", "input"}));
    heatmap->callback([&] { run = [&] { return cmd_heatmap(hm_a, hm_b, hm_out, hm_order, d); }; });

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (show_defaults) {
        print_defaults(d);
        return 0;
    }
    if (!run) {
        std::fputs(app.help().c_str(), stderr);
        return 2;
    }

    try {
        validate_ranges(d);
        return run();
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
