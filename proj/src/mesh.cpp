#include "surfdist/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace surfdist {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

double TriMesh::face_area(int f) const {
    const auto& t = faces[f];
    Vec3 e1 = vertices[t[1]] - vertices[t[0]];
    Vec3 e2 = vertices[t[2]] - vertices[t[0]];
    return 0.5 * e1.cross(e2).norm();
}

double TriMesh::total_area() const {
    double a = 0.0;
    for (int f = 0; f < face_count(); ++f) a += face_area(f);
    return a;
}

double TriMesh::bbox_diagonal() const {
    if (vertices.empty()) return 0.0;
    Vec3 lo = vertices[0], hi = vertices[0];
    for (const auto& v : vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
}

// ---------------------------------------------------------------------------
// Topology validation
// ---------------------------------------------------------------------------

TopologyReport validate_disk_topology(const TriMesh& mesh) {
    TopologyReport rep;
    rep.vertex_count = mesh.vertex_count();
    rep.face_count = mesh.face_count();

    const int nv = mesh.vertex_count();
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            if (f[k] < 0 || f[k] >= nv) {
                rep.detail = "face references out-of-range vertex index";
                return rep;
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            rep.detail = "face repeats a vertex";
            return rep;
        }
    }
    if (mesh.face_count() == 0) {
        rep.detail = "mesh has no faces";
        return rep;
    }

    const double diag = mesh.bbox_diagonal();
    const double dup_tol = 1e-9 * diag;

    // Duplicate vertices within dup_tol, via a uniform spatial hash.
    rep.no_duplicate_vertices = true;
    if (dup_tol > 0.0) {
        const double cell = dup_tol;
        auto key = [cell](const Vec3& p) {
            return std::array<std::int64_t, 3>{
                static_cast<std::int64_t>(std::floor(p.x() / cell)),
                static_cast<std::int64_t>(std::floor(p.y() / cell)),
                static_cast<std::int64_t>(std::floor(p.z() / cell))};
        };
        struct KeyHash {
            std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
                std::size_t h = 1469598103934665603ull;
                for (auto v : k) {
                    h ^= static_cast<std::size_t>(v);
                    h *= 1099511628211ull;
                }
                return h;
            }
        };
        std::unordered_map<std::array<std::int64_t, 3>, std::vector<int>, KeyHash> grid;
        grid.reserve(mesh.vertices.size() * 2);
        for (int i = 0; i < nv && rep.no_duplicate_vertices; ++i) {
            auto k = key(mesh.vertices[i]);
            for (std::int64_t dx = -1; dx <= 1 && rep.no_duplicate_vertices; ++dx)
                for (std::int64_t dy = -1; dy <= 1 && rep.no_duplicate_vertices; ++dy)
                    for (std::int64_t dz = -1; dz <= 1 && rep.no_duplicate_vertices; ++dz) {
                        auto it = grid.find({k[0] + dx, k[1] + dy, k[2] + dz});
                        if (it == grid.end()) continue;
                        for (int j : it->second) {
                            if ((mesh.vertices[i] - mesh.vertices[j]).norm() <= dup_tol) {
                                rep.no_duplicate_vertices = false;
                                rep.detail = "duplicate vertices " + std::to_string(j) + " and " +
                                             std::to_string(i);
                                break;
                            }
                        }
                    }
            grid[k].push_back(i);
        }
    }

    rep.positive_face_areas = true;
    const double area_tol = dup_tol * dup_tol;
    for (int f = 0; f < mesh.face_count(); ++f) {
        if (!(mesh.face_area(f) > area_tol)) {
            rep.positive_face_areas = false;
            if (rep.detail.empty()) rep.detail = "degenerate face " + std::to_string(f);
            break;
        }
    }

    // Directed edge census. Oriented manifold with boundary: every directed
    // edge appears at most once, every undirected edge in 1 or 2 faces.
    std::map<std::pair<int, int>, int> directed;
    rep.oriented = true;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            auto e = std::make_pair(f[k], f[(k + 1) % 3]);
            if (++directed[e] > 1) rep.oriented = false;
        }
    }
    if (!rep.oriented && rep.detail.empty()) rep.detail = "inconsistent orientation (directed edge repeated)";

    rep.manifold = true;
    int edge_count = 0;
    std::map<std::pair<int, int>, int> boundary_next; // boundary directed edge a->b
    for (const auto& [e, cnt] : directed) {
        auto rev = std::make_pair(e.second, e.first);
        auto it = directed.find(rev);
        int undirected = cnt + (it != directed.end() && e.first < e.second ? it->second : 0);
        if (e.first < e.second || it == directed.end()) {
            ++edge_count;
            int total = cnt + (it != directed.end() ? it->second : 0);
            if (total > 2) {
                rep.manifold = false;
                if (rep.detail.empty())
                    rep.detail = "edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                                 ") shared by more than 2 faces";
            }
        }
        (void)undirected;
        if (it == directed.end() && cnt == 1) {
            // boundary directed edge; record for loop tracing
            if (boundary_next.count({e.first, e.second}) == 0) boundary_next[{e.first, e.second}] = 0;
        }
    }
    rep.edge_count = edge_count;
    rep.euler_characteristic = rep.vertex_count - rep.edge_count + rep.face_count;

    // Trace boundary loops. A boundary vertex with two outgoing boundary
    // edges is a pinch point (non-manifold vertex).
    std::unordered_map<int, std::vector<int>> out_edges;
    for (const auto& [e, _] : boundary_next) out_edges[e.first].push_back(e.second);
    for (const auto& [v, outs] : out_edges) {
        if (outs.size() > 1) {
            rep.manifold = false;
            if (rep.detail.empty()) rep.detail = "pinched boundary vertex " + std::to_string(v);
        }
    }
    std::unordered_map<int, bool> visited;
    int loops = 0;
    for (const auto& [e, _] : boundary_next) {
        if (visited[e.first]) continue;
        ++loops;
        int start = e.first, cur = e.first;
        int guard = 0;
        while (guard++ <= static_cast<int>(boundary_next.size()) + 1) {
            visited[cur] = true;
            auto it = out_edges.find(cur);
            if (it == out_edges.end() || it->second.empty()) {
                rep.manifold = false;
                if (rep.detail.empty()) rep.detail = "open boundary chain at vertex " + std::to_string(cur);
                break;
            }
            cur = it->second.front();
            if (cur == start) break;
        }
    }
    rep.boundary_loop_count = loops;
    rep.single_boundary_loop = (loops == 1);

    rep.pass = rep.manifold && rep.oriented && rep.positive_face_areas && rep.no_duplicate_vertices &&
               rep.single_boundary_loop && rep.euler_characteristic == 1;
    if (rep.pass) rep.detail.clear();
    if (!rep.pass && rep.detail.empty()) {
        if (!rep.single_boundary_loop)
            rep.detail = "expected 1 boundary loop, found " + std::to_string(loops);
        else
            rep.detail = "Euler characteristic " + std::to_string(rep.euler_characteristic) + ", expected 1";
    }
    return rep;
}

void require_disk_topology(const TriMesh& mesh) {
    TopologyReport rep = validate_disk_topology(mesh);
    if (rep.pass) return;
    if (!rep.no_duplicate_vertices || !rep.positive_face_areas) throw GeometryError(rep.detail);
    throw TopologyError(rep.detail);
}

// ---------------------------------------------------------------------------
// OFF / PLY loading
// ---------------------------------------------------------------------------

namespace {

// Word tokenizer for OFF that drops '#' comments.
class TokenStream {
public:
    explicit TokenStream(std::istream& in) : in_(in) {}

    std::string next() {
        std::string tok;
        while (true) {
            if (pos_ >= line_.size()) {
                if (!std::getline(in_, line_)) return {};
                auto hash = line_.find('#');
                if (hash != std::string::npos) line_.resize(hash);
                pos_ = 0;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(line_[pos_]))) {
                ++pos_;
                continue;
            }
            std::size_t start = pos_;
            while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
            tok = line_.substr(start, pos_ - start);
            return tok;
        }
    }

    long next_int(const char* what) {
        std::string t = next();
        if (t.empty()) throw ParseError(std::string("unexpected end of file reading ") + what);
        char* end = nullptr;
        long v = std::strtol(t.c_str(), &end, 10);
        if (end != t.c_str() + t.size()) throw ParseError(std::string("bad integer '") + t + "' for " + what);
        return v;
    }

    double next_double(const char* what) {
        std::string t = next();
        if (t.empty()) throw ParseError(std::string("unexpected end of file reading ") + what);
        char* end = nullptr;
        double v = std::strtod(t.c_str(), &end);
        if (end != t.c_str() + t.size()) throw ParseError(std::string("bad number '") + t + "' for " + what);
        return v;
    }

private:
    std::istream& in_;
    std::string line_;
    std::size_t pos_ = 0;
};

TriMesh parse_off(std::istream& in) {
    TokenStream ts(in);
    std::string magic = ts.next();
    if (magic != "OFF") throw ParseError("missing OFF header");
    long nv = ts.next_int("vertex count");
    long nf = ts.next_int("face count");
    ts.next_int("edge count");
    if (nv < 0 || nf < 0) throw ParseError("negative counts in OFF header");

    TriMesh mesh;
    mesh.vertices.reserve(nv);
    for (long i = 0; i < nv; ++i) {
        double x = ts.next_double("vertex x");
        double y = ts.next_double("vertex y");
        double z = ts.next_double("vertex z");
        mesh.vertices.emplace_back(x, y, z);
    }
    mesh.faces.reserve(nf);
    for (long f = 0; f < nf; ++f) {
        long cnt = ts.next_int("face vertex count");
        if (cnt != 3) throw ParseError("OFF face " + std::to_string(f) + " is not a triangle");
        std::array<int, 3> tri{};
        for (int k = 0; k < 3; ++k) tri[k] = static_cast<int>(ts.next_int("face index"));
        mesh.faces.push_back(tri);
    }
    return mesh;
}

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(const std::string& name) {
    if (name == "char" || name == "int8") return PlyType::i8;
    if (name == "uchar" || name == "uint8") return PlyType::u8;
    if (name == "short" || name == "int16") return PlyType::i16;
    if (name == "ushort" || name == "uint16") return PlyType::u16;
    if (name == "int" || name == "int32") return PlyType::i32;
    if (name == "uint" || name == "uint32") return PlyType::u32;
    if (name == "float" || name == "float32") return PlyType::f32;
    if (name == "double" || name == "float64") return PlyType::f64;
    throw ParseError("unsupported PLY property type '" + name + "'");
}

std::size_t ply_type_size(PlyType t) {
    switch (t) {
        case PlyType::i8:
        case PlyType::u8: return 1;
        case PlyType::i16:
        case PlyType::u16: return 2;
        case PlyType::i32:
        case PlyType::u32:
        case PlyType::f32: return 4;
        case PlyType::f64: return 8;
    }
    return 0;
}

double read_binary_scalar(std::istream& in, PlyType t) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(ply_type_size(t)));
    if (!in) throw ParseError("unexpected end of binary PLY data");
    switch (t) {
        case PlyType::i8: return static_cast<double>(static_cast<std::int8_t>(buf[0]));
        case PlyType::u8: return static_cast<double>(buf[0]);
        case PlyType::i16: {
            std::int16_t v;
            std::memcpy(&v, buf, 2);
            return v;
        }
        case PlyType::u16: {
            std::uint16_t v;
            std::memcpy(&v, buf, 2);
            return v;
        }
        case PlyType::i32: {
            std::int32_t v;
            std::memcpy(&v, buf, 4);
            return v;
        }
        case PlyType::u32: {
            std::uint32_t v;
            std::memcpy(&v, buf, 4);
            return v;
        }
        case PlyType::f32: {
            float v;
            std::memcpy(&v, buf, 4);
            return v;
        }
        case PlyType::f64: {
            double v;
            std::memcpy(&v, buf, 8);
            return v;
        }
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    bool is_list = false;
    PlyType count_type = PlyType::u8;
    PlyType value_type = PlyType::f64;
};

struct PlyElement {
    std::string name;
    long count = 0;
    std::vector<PlyProperty> props;
};

TriMesh parse_ply(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty PLY stream");
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "ply") throw ParseError("missing ply magic");

    bool binary = false;
    std::vector<PlyElement> elements;
    while (true) {
        if (!std::getline(in, line)) throw ParseError("unterminated PLY header");
        if (line.size() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
        if (kw == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt == "ascii")
                binary = false;
            else if (fmt == "binary_little_endian")
                binary = true;
            else
                throw ParseError("unsupported PLY format '" + fmt + "'");
            continue;
        }
        if (kw == "element") {
            PlyElement el;
            ls >> el.name >> el.count;
            if (!ls) throw ParseError("malformed element line in PLY header");
            elements.push_back(el);
            continue;
        }
        if (kw == "property") {
            if (elements.empty()) throw ParseError("property before element in PLY header");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                std::string ct, vt;
                ls >> ct >> vt >> p.name;
                p.count_type = ply_type(ct);
                p.value_type = ply_type(vt);
            } else {
                p.value_type = ply_type(t);
                ls >> p.name;
            }
            if (p.name.empty()) throw ParseError("malformed property line in PLY header");
            elements.back().props.push_back(p);
            continue;
        }
        if (kw == "end_header") break;
        throw ParseError("unknown PLY header keyword '" + kw + "'");
    }

    TriMesh mesh;
    auto ascii_scalar = [&in](const char* what) {
        double v;
        if (!(in >> v)) throw ParseError(std::string("unexpected end of ASCII PLY data reading ") + what);
        return v;
    };

    for (const auto& el : elements) {
        int xi = -1, yi = -1, zi = -1;
        int list_prop = -1;
        for (std::size_t p = 0; p < el.props.size(); ++p) {
            if (el.props[p].name == "x") xi = static_cast<int>(p);
            if (el.props[p].name == "y") yi = static_cast<int>(p);
            if (el.props[p].name == "z") zi = static_cast<int>(p);
            if (el.props[p].is_list &&
                (el.props[p].name == "vertex_indices" || el.props[p].name == "vertex_index"))
                list_prop = static_cast<int>(p);
        }
        const bool is_vertex = (el.name == "vertex");
        const bool is_face = (el.name == "face");
        if (is_vertex && (xi < 0 || yi < 0 || zi < 0))
            throw ParseError("PLY vertex element lacks x/y/z properties");
        if (is_face && list_prop < 0) throw ParseError("PLY face element lacks vertex_indices list");

        for (long i = 0; i < el.count; ++i) {
            double coords[3] = {0, 0, 0};
            std::vector<long> indices;
            for (std::size_t p = 0; p < el.props.size(); ++p) {
                const auto& prop = el.props[p];
                if (prop.is_list) {
                    long n = static_cast<long>(binary ? read_binary_scalar(in, prop.count_type)
                                                      : ascii_scalar("list count"));
                    for (long k = 0; k < n; ++k) {
                        double v = binary ? read_binary_scalar(in, prop.value_type)
                                          : ascii_scalar("list value");
                        if (static_cast<int>(p) == list_prop) indices.push_back(static_cast<long>(v));
                    }
                } else {
                    double v = binary ? read_binary_scalar(in, prop.value_type) : ascii_scalar("scalar");
                    if (static_cast<int>(p) == xi) coords[0] = v;
                    if (static_cast<int>(p) == yi) coords[1] = v;
                    if (static_cast<int>(p) == zi) coords[2] = v;
                }
            }
            if (is_vertex) mesh.vertices.emplace_back(coords[0], coords[1], coords[2]);
            if (is_face) {
                if (indices.size() != 3)
                    throw ParseError("PLY face " + std::to_string(i) + " is not a triangle");
                mesh.faces.push_back({static_cast<int>(indices[0]), static_cast<int>(indices[1]),
                                      static_cast<int>(indices[2])});
            }
        }
    }
    return mesh;
}

} // namespace

TriMesh parse_mesh(std::istream& in, MeshFormat format, std::string specimen_id) {
    TriMesh mesh = (format == MeshFormat::off) ? parse_off(in) : parse_ply(in);
    mesh.specimen_id = std::move(specimen_id);
    return mesh;
}

TriMesh parse_mesh_file(const std::filesystem::path& path, std::string specimen_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open mesh file " + path.string());
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    MeshFormat fmt;
    if (ext == ".off")
        fmt = MeshFormat::off;
    else if (ext == ".ply")
        fmt = MeshFormat::ply;
    else
        throw ParseError("unknown mesh extension '" + ext + "' (expected .off or .ply)");
    if (specimen_id.empty()) specimen_id = path.stem().string();
    return parse_mesh(in, fmt, std::move(specimen_id));
}

TriMesh load_mesh(std::istream& in, MeshFormat format, std::string specimen_id) {
    TriMesh mesh = parse_mesh(in, format, std::move(specimen_id));
    require_disk_topology(mesh);
    return mesh;
}

TriMesh load_mesh_file(const std::filesystem::path& path, std::string specimen_id) {
    TriMesh mesh = parse_mesh_file(path, std::move(specimen_id));
    require_disk_topology(mesh);
    return mesh;
}

void save_off(const TriMesh& mesh, std::ostream& out) {
    out << "OFF\n" << mesh.vertex_count() << ' ' << mesh.face_count() << ' ' << 0 << '\n';
    for (const auto& v : mesh.vertices)
        out << fmt17(v.x()) << ' ' << fmt17(v.y()) << ' ' << fmt17(v.z()) << '\n';
    for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

void save_ply(const TriMesh& mesh, std::ostream& out, bool binary) {
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << mesh.vertex_count() << '\n';
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "element face " << mesh.face_count() << '\n';
    out << "property list uchar int vertex_indices\nend_header\n";
    if (binary) {
        for (const auto& v : mesh.vertices) {
            double c[3] = {v.x(), v.y(), v.z()};
            out.write(reinterpret_cast<const char*>(c), sizeof(c));
        }
        for (const auto& f : mesh.faces) {
            unsigned char n = 3;
            std::int32_t idx[3] = {f[0], f[1], f[2]};
            out.write(reinterpret_cast<const char*>(&n), 1);
            out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
        }
    } else {
        for (const auto& v : mesh.vertices)
            out << fmt17(v.x()) << ' ' << fmt17(v.y()) << ' ' << fmt17(v.z()) << '\n';
        for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
}

void save_mesh_file(const TriMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open output file " + path.string());
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".off")
        save_off(mesh, out);
    else if (ext == ".ply")
        save_ply(mesh, out);
    else
        throw ParseError("unknown mesh extension '" + ext + "'");
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

std::vector<double> vertex_areas(const TriMesh& mesh) {
    std::vector<double> areas(mesh.vertex_count(), 0.0);
    for (int f = 0; f < mesh.face_count(); ++f) {
        double third = mesh.face_area(f) / 3.0;
        for (int k = 0; k < 3; ++k) areas[mesh.faces[f][k]] += third;
    }
    return areas;
}

Vec3 area_centroid(const TriMesh& mesh) {
    Vec3 c = Vec3::Zero();
    double total = 0.0;
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        double a = mesh.face_area(f);
        Vec3 fc = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
        c += a * fc;
        total += a;
    }
    if (total <= 0.0) throw GeometryError("zero-area mesh");
    return c / total;
}

TriMesh normalize_mesh(const TriMesh& mesh) {
    double area = mesh.total_area();
    if (!(area > 0.0)) throw GeometryError("zero-area mesh");
    Vec3 c = area_centroid(mesh);
    double s = 1.0 / std::sqrt(area);
    TriMesh out = mesh;
    for (auto& v : out.vertices) v = (v - c) * s;
    return out;
}

// ---------------------------------------------------------------------------
// Surface points and landmarks
// ---------------------------------------------------------------------------

Vec3 surface_point_position(const TriMesh& mesh, const SurfacePoint& p) {
    if (p.face < 0 || p.face >= mesh.face_count())
        throw GeometryError("surface point face index out of range");
    const auto& t = mesh.faces[p.face];
    return p.bary[0] * mesh.vertices[t[0]] + p.bary[1] * mesh.vertices[t[1]] +
           p.bary[2] * mesh.vertices[t[2]];
}

namespace {

// Closest point on triangle abc to p, returned as barycentric coordinates.
std::array<double, 3> closest_point_bary(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return {1.0, 0.0, 0.0};

    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return {0.0, 1.0, 0.0};

    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        double v = d1 / (d1 - d3);
        return {1.0 - v, v, 0.0};
    }

    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return {0.0, 0.0, 1.0};

    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        double w = d2 / (d2 - d6);
        return {1.0 - w, 0.0, w};
    }

    double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {0.0, 1.0 - w, w};
    }

    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    return {1.0 - v - w, v, w};
}

} // namespace

SurfacePoint snap_to_surface(const TriMesh& mesh, const Vec3& point) {
    SurfacePoint best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        auto bary = closest_point_bary(point, mesh.vertices[t[0]], mesh.vertices[t[1]],
                                       mesh.vertices[t[2]]);
        Vec3 q = bary[0] * mesh.vertices[t[0]] + bary[1] * mesh.vertices[t[1]] +
                 bary[2] * mesh.vertices[t[2]];
        double d2 = (q - point).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best.face = f;
            best.bary = bary;
        }
    }
    return best;
}

Vec3 landmark_to_point(const TriMesh& mesh, const Landmark& lm) {
    return surface_point_position(mesh, SurfacePoint{lm.face, lm.bary});
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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
    for (auto& s : out) {
        std::size_t b = s.find_first_not_of(" \t");
        std::size_t e = s.find_last_not_of(" \t");
        s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

} // namespace

LandmarkSet load_landmarks(std::istream& in, const TriMesh& mesh) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty landmark file");
    auto header = split_csv_line(line);
    bool intrinsic;
    if (header.size() == 5 && header[0] == "label" && header[1] == "face")
        intrinsic = true;
    else if (header.size() == 4 && header[0] == "label" && header[1] == "x")
        intrinsic = false;
    else
        throw ParseError("landmark header must be 'label,face,b0,b1,b2' or 'label,x,y,z'");

    LandmarkSet set;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("landmark line " + std::to_string(line_no) + " has wrong field count");
        Landmark lm;
        lm.label = cells[0];
        try {
            if (intrinsic) {
                lm.face = std::stoi(cells[1]);
                for (int k = 0; k < 3; ++k) lm.bary[k] = std::stod(cells[2 + k]);
            } else {
                Vec3 p(std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]));
                SurfacePoint sp = snap_to_surface(mesh, p);
                lm.face = sp.face;
                lm.bary = sp.bary;
            }
        } catch (const std::exception&) {
            throw ParseError("bad numeric field on landmark line " + std::to_string(line_no));
        }
        if (lm.face < 0 || lm.face >= mesh.face_count())
            throw ParseError("landmark '" + lm.label + "' has out-of-range face index");
        double s = lm.bary[0] + lm.bary[1] + lm.bary[2];
        if (std::abs(s - 1.0) > 1e-12)
            throw ParseError("landmark '" + lm.label + "' barycentric coordinates do not sum to 1");
        for (double b : lm.bary)
            if (b < -1e-12) throw ParseError("landmark '" + lm.label + "' has negative barycentric coordinate");
        for (const auto& other : set.entries)
            if (other.label == lm.label)
                throw ParseError("duplicate landmark label '" + lm.label + "'");
        set.entries.push_back(lm);
    }
    return set;
}

void save_landmarks(const LandmarkSet& set, std::ostream& out) {
    out << "label,face,b0,b1,b2\n";
    for (const auto& lm : set.entries) {
        out << lm.label << ',' << lm.face << ',' << fmt17(lm.bary[0]) << ',' << fmt17(lm.bary[1])
            << ',' << fmt17(lm.bary[2]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Boundary loop and graph geodesics
// ---------------------------------------------------------------------------

std::vector<int> boundary_loop(const TriMesh& mesh) {
    // Boundary directed edges are the face edges whose reverse never occurs;
    // for counterclockwise faces they trace the boundary counterclockwise.
    std::map<std::pair<int, int>, bool> directed;
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) directed[{f[k], f[(k + 1) % 3]}] = true;

    std::unordered_map<int, int> next;
    for (const auto& [e, _] : directed) {
        if (!directed.count({e.second, e.first})) {
            if (next.count(e.first)) throw TopologyError("pinched boundary vertex " + std::to_string(e.first));
            next[e.first] = e.second;
        }
    }
    if (next.empty()) throw TopologyError("mesh has no boundary");

    int start = next.begin()->first;
    for (const auto& [v, _] : next) start = std::min(start, v);

    std::vector<int> loop;
    int cur = start;
    do {
        loop.push_back(cur);
        auto it = next.find(cur);
        if (it == next.end()) throw TopologyError("open boundary chain");
        cur = it->second;
        if (loop.size() > next.size()) throw TopologyError("boundary loop does not close");
    } while (cur != start);
    if (loop.size() != next.size()) throw TopologyError("multiple boundary loops");
    return loop;
}

std::vector<double> graph_geodesics(const TriMesh& mesh, std::span<const int> sources) {
    const int nv = mesh.vertex_count();
    std::vector<std::vector<std::pair<int, double>>> adj(nv);
    std::map<std::pair<int, int>, bool> seen;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            auto key = std::minmax(a, b);
            if (seen.emplace(std::make_pair(key.first, key.second), true).second) {
                double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
                adj[a].emplace_back(b, len);
                adj[b].emplace_back(a, len);
            }
        }
    }
    std::vector<double> dist(nv, std::numeric_limits<double>::infinity());
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
    for (int s : sources) {
        dist[s] = 0.0;
        pq.emplace(0.0, s);
    }
    while (!pq.empty()) {
        auto [d, v] = pq.top();
        pq.pop();
        if (d > dist[v]) continue;
        for (auto [w, len] : adj[v]) {
            double nd = d + len;
            if (nd < dist[w]) {
                dist[w] = nd;
                pq.emplace(nd, w);
            }
        }
    }
    return dist;
}

} // namespace surfdist
