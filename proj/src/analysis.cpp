#include "surfdist/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "surfdist/errors.hpp"
#include "surfdist/parallel.hpp"

namespace surfdist {

DistanceMatrix make_distance_matrix(std::vector<std::string> ids, const Eigen::MatrixXd& raw,
                                    std::string metric) {
    const int n = static_cast<int>(ids.size());
    if (raw.rows() != n || raw.cols() != n)
        throw GeometryError("distance matrix shape does not match the id list");
    DistanceMatrix dm;
    dm.ids = std::move(ids);
    dm.metric = std::move(metric);
    dm.values = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double a = raw(i, j), b = raw(j, i);
            if (std::isnan(a) || std::isnan(b)) {
                dm.values(i, j) = dm.values(j, i) = std::numeric_limits<double>::quiet_NaN();
                dm.complete = false;
                continue;
            }
            if (a < -1e-12 || b < -1e-12) throw GeometryError("negative distance entry");
            dm.max_asymmetry = std::max(dm.max_asymmetry, std::abs(a - b));
            double v = std::max(0.0, 0.5 * (a + b));
            dm.values(i, j) = dm.values(j, i) = v;
        }
    return dm;
}

void save_matrix_csv(const DistanceMatrix& dm, std::ostream& out) {
    out << dm.metric;
    for (const auto& id : dm.ids) out << ',' << id;
    out << '\n';
    char buf[64];
    for (int i = 0; i < dm.size(); ++i) {
        out << dm.ids[i];
        for (int j = 0; j < dm.size(); ++j) {
            std::snprintf(buf, sizeof(buf), ",%.17g", dm.values(i, j));
            out << buf;
        }
        out << '\n';
    }
}

namespace {

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

} // namespace

DistanceMatrix load_matrix_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty distance matrix file");
    auto head = split_csv(line);
    if (head.size() < 2) throw ParseError("distance matrix header needs at least one id");
    DistanceMatrix dm;
    dm.metric = head[0];
    dm.ids.assign(head.begin() + 1, head.end());
    const int n = dm.size();
    dm.values.resize(n, n);
    for (int i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw ParseError("distance matrix is missing rows");
        auto cells = split_csv(line);
        if (static_cast<int>(cells.size()) != n + 1)
            throw ParseError("distance matrix row has wrong cell count");
        if (cells[0] != dm.ids[i]) throw ParseError("row ids disagree with column ids");
        for (int j = 0; j < n; ++j) {
            std::size_t used = 0;
            try {
                dm.values(i, j) = std::stod(cells[j + 1], &used);
            } catch (const std::exception&) {
                used = std::string::npos;
            }
            if (used != cells[j + 1].size())
                throw ParseError("bad numeric cell '" + cells[j + 1] + "' in row " + dm.ids[i]);
        }
    }
    return dm;
}

DistanceMatrix pairwise_matrix(const std::vector<std::string>& ids,
                               const std::function<double(int, int)>& metric_fn,
                               const std::string& metric_tag, int jobs) {
    const int n = static_cast<int>(ids.size());
    if (n < 2) throw GeometryError("pairwise matrix needs at least 2 specimens");
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.push_back({i, j});

    std::vector<double> result(pairs.size());
    std::vector<std::string> error(pairs.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t p) {
        auto [i, j] = pairs[p];
        try {
            result[p] = metric_fn(i, j);
        } catch (const std::exception& e) {
            result[p] = std::numeric_limits<double>::quiet_NaN();
            error[p] = e.what();
        }
    });

    Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        auto [i, j] = pairs[p];
        raw(i, j) = raw(j, i) = result[p];
    }
    DistanceMatrix dm = make_distance_matrix(ids, raw, metric_tag);
    for (std::size_t p = 0; p < pairs.size(); ++p)
        if (!error[p].empty()) {
            auto [i, j] = pairs[p];
            dm.failures.push_back(ids[i] + "|" + ids[j] + ": " + error[p]);
        }
    return dm;
}

// ---------------------------------------------------------------------------
// Mantel
// ---------------------------------------------------------------------------

namespace {

std::vector<double> upper_entries(const Eigen::MatrixXd& m) {
    std::vector<double> x;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = i + 1; j < m.cols(); ++j) x.push_back(m(i, j));
    return x;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        throw GeometryError("Mantel statistic undefined on a constant matrix");
    return sxy / std::sqrt(sxx * syy);
}

// platform-stable Fisher-Yates (std::shuffle is implementation-defined)
void stable_shuffle(std::vector<int>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng() % i]);
}

Eigen::MatrixXd align_by_ids(const DistanceMatrix& D1, const DistanceMatrix& D2) {
    if (D1.size() != D2.size()) throw GeometryError("distance matrices differ in size");
    std::vector<int> pos(D1.size());
    for (int i = 0; i < D1.size(); ++i) {
        auto it = std::find(D2.ids.begin(), D2.ids.end(), D1.ids[i]);
        if (it == D2.ids.end())
            throw GeometryError("distance matrices do not share id: " + D1.ids[i]);
        pos[i] = static_cast<int>(it - D2.ids.begin());
    }
    Eigen::MatrixXd out(D1.size(), D1.size());
    for (int i = 0; i < D1.size(); ++i)
        for (int j = 0; j < D1.size(); ++j) out(i, j) = D2.values(pos[i], pos[j]);
    return out;
}

} // namespace

std::vector<std::vector<int>> mantel_permutation_stream(int n, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::vector<int>> out;
    out.reserve(count);
    for (int k = 0; k < count; ++k) {
        stable_shuffle(idx, rng);
        out.push_back(idx);
    }
    return out;
}

MantelResult mantel(const DistanceMatrix& D1, const DistanceMatrix& D2, int permutations,
                    std::uint64_t seed) {
    if (permutations < 99) throw GeometryError("Mantel needs at least 99 permutations");
    if (D1.size() < 3) throw GeometryError("Mantel needs at least 3 specimens");
    Eigen::MatrixXd y_mat = align_by_ids(D1, D2);
    std::vector<double> x = upper_entries(D1.values);
    std::vector<double> y = upper_entries(y_mat);
    MantelResult res;
    res.r = pearson(x, y);

    auto perms = mantel_permutation_stream(D1.size(), permutations, seed);
    std::vector<double> yp(y.size());
    long long count = 0;
    for (const auto& pi : perms) {
        std::size_t k = 0;
        for (int i = 0; i < D1.size(); ++i)
            for (int j = i + 1; j < D1.size(); ++j) yp[k++] = y_mat(pi[i], pi[j]);
        if (pearson(x, yp) >= res.r) ++count;
    }
    res.significance = static_cast<double>(1 + count) / (permutations + 1);
    return res;
}

// ---------------------------------------------------------------------------
// classification
// ---------------------------------------------------------------------------

ClassificationReport loo_classify(const DistanceMatrix& D, const std::vector<std::string>& labels) {
    const int n = D.size();
    if (n < 2) throw GeometryError("classification needs at least 2 specimens");
    if (static_cast<int>(labels.size()) != n)
        throw GeometryError("label list does not match the matrix");
    for (const auto& l : labels)
        if (l.empty()) throw GeometryError("empty taxonomic label");

    ClassificationReport rep;
    rep.actual = labels;
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        int best = -1;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (best < 0 || D.values(i, j) < D.values(i, best)) best = j;
        }
        rep.nearest.push_back(best);
        rep.assigned.push_back(labels[best]);
        rep.confusion[labels[i]][labels[best]]++;
        if (labels[best] == labels[i]) ++correct;
    }
    rep.success_rate = 100.0 * correct / n;
    return rep;
}

// ---------------------------------------------------------------------------
// landmark propagation
// ---------------------------------------------------------------------------

PropagationResult propagate_landmarks(const CorrespondenceMap& map, const LandmarkSet& landmarks,
                                      const TriMesh& source_mesh, const TriMesh& target_mesh) {
    if (static_cast<int>(map.images.size()) != source_mesh.vertex_count())
        throw GeometryError("correspondence does not match the source mesh");
    PropagationResult out;
    for (const Landmark& lm : landmarks.entries) {
        if (lm.face < 0 || lm.face >= source_mesh.face_count())
            throw GeometryError("landmark face out of range");
        const auto& f = source_mesh.faces[lm.face];
        Vec3 img[3];
        for (int k = 0; k < 3; ++k) img[k] = surface_point_position(target_mesh, map.images[f[k]]);
        Vec3 p = lm.bary[0] * img[0] + lm.bary[1] * img[1] + lm.bary[2] * img[2];
        SurfacePoint sp = snap_to_surface(target_mesh, p);
        out.landmarks.entries.push_back({lm.label, sp.face, sp.bary});
        double src_area = source_mesh.face_area(lm.face);
        double img_area = 0.5 * (img[1] - img[0]).cross(img[2] - img[0]).norm();
        out.degenerate.push_back(img_area <= 1e-9 * src_area);
    }
    return out;
}

PropagationResult propagate_along_path(std::span<const CorrespondenceMap> maps,
                                       const LandmarkSet& landmarks,
                                       std::span<const TriMesh> meshes) {
    if (maps.empty()) throw GeometryError("empty correspondence path");
    if (meshes.size() != maps.size() + 1)
        throw GeometryError("a path of k maps needs k+1 meshes");
    for (std::size_t k = 0; k + 1 < maps.size(); ++k)
        if (maps[k].target_id != maps[k + 1].source_id)
            throw GeometryError("correspondence chain mismatch: '" + maps[k].target_id +
                                "' feeds '" + maps[k + 1].source_id + "'");
    PropagationResult out;
    out.landmarks = landmarks;
    out.degenerate.assign(landmarks.entries.size(), 0);
    for (std::size_t k = 0; k < maps.size(); ++k) {
        PropagationResult step =
            propagate_landmarks(maps[k], out.landmarks, meshes[k], meshes[k + 1]);
        out.landmarks = std::move(step.landmarks);
        for (std::size_t l = 0; l < out.degenerate.size(); ++l)
            out.degenerate[l] = out.degenerate[l] || step.degenerate[l];
    }
    return out;
}

// ---------------------------------------------------------------------------
// seriation and heatmap
// ---------------------------------------------------------------------------

std::vector<int> seriate(const DistanceMatrix& D) {
    const int n = D.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (n <= 2) return order;

    std::vector<double> off;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) off.push_back(D.values(i, j));
    std::sort(off.begin(), off.end());
    double sigma = off[off.size() / 2];
    if (!(sigma > 0.0)) return order;

    Eigen::MatrixXd W(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            W(i, j) = i == j ? 0.0
                             : std::exp(-D.values(i, j) * D.values(i, j) / (2.0 * sigma * sigma));
    Eigen::MatrixXd L = -W;
    for (int i = 0; i < n; ++i) L(i, i) = W.row(i).sum();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(L);
    Eigen::VectorXd fiedler = eig.eigenvectors().col(1);
    if (fiedler(0) > 0.0) fiedler = -fiedler;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fiedler(a) < fiedler(b); });
    return order;
}

void heatmap_export(const DistanceMatrix& upper, const DistanceMatrix& lower,
                    const std::vector<int>& order, std::ostream& out) {
    const int n = upper.size();
    if (lower.size() != n) throw GeometryError("heatmap matrices differ in size");
    for (int i = 0; i < n; ++i)
        if (upper.ids[i] != lower.ids[i]) throw GeometryError("heatmap matrices differ in ids");
    if (static_cast<int>(order.size()) != n) throw GeometryError("order must list every specimen");
    std::vector<char> seen(n, 0);
    for (int v : order) {
        if (v < 0 || v >= n || seen[v]) throw GeometryError("order is not a permutation");
        seen[v] = 1;
    }

    double max_u = 0.0, max_l = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            max_u = std::max(max_u, upper.values(i, j));
            max_l = std::max(max_l, lower.values(i, j));
        }
    auto pixel = [](double t, unsigned char rgb[3]) {
        t = std::clamp(t, 0.0, 1.0);
        rgb[0] = static_cast<unsigned char>(std::lround(255.0 * t));
        rgb[1] = 0;
        rgb[2] = static_cast<unsigned char>(std::lround(128.0 * (1.0 - t)));
    };

    out << "P6\n" << n << ' ' << n << "\n255\n";
    unsigned char rgb[3];
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (r == c) {
                pixel(0.0, rgb);
            } else if (c > r) {
                pixel(max_u > 0.0 ? upper.values(order[r], order[c]) / max_u : 0.0, rgb);
            } else {
                pixel(max_l > 0.0 ? lower.values(order[r], order[c]) / max_l : 0.0, rgb);
            }
            out.write(reinterpret_cast<const char*>(rgb), 3);
        }
}

void heatmap_export(const DistanceMatrix& upper, const DistanceMatrix& lower,
                    const std::vector<int>& order, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    heatmap_export(upper, lower, order, out);
}

} // namespace surfdist
