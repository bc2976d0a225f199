#include "surfdist/distances.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <json.hpp>

#include "surfdist/errors.hpp"
#include "surfdist/parallel.hpp"

namespace surfdist {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

std::vector<std::vector<std::pair<int, double>>> edge_graph(const TriMesh& mesh) {
    std::vector<std::set<int>> nbr(mesh.vertex_count());
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            nbr[f[k]].insert(f[(k + 1) % 3]);
            nbr[f[(k + 1) % 3]].insert(f[k]);
        }
    std::vector<std::vector<std::pair<int, double>>> graph(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v)
        for (int u : nbr[v]) graph[v].push_back({u, (mesh.vertices[v] - mesh.vertices[u]).norm()});
    return graph;
}

double triangle_area_3d(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

} // namespace

SampleSet sample_surface(const FlatMap& flat, const TriMesh& mesh, int n) {
    const int nv = mesh.vertex_count();
    if (flat.vertex_count() != nv) throw GeometryError("flat map does not match mesh");
    if (n < 1 || n > nv)
        throw GeometryError("sample count " + std::to_string(n) + " out of range 1.." +
                            std::to_string(nv));

    // argmax with a relative-tolerance tie band, smallest index inside it, so
    // symmetric meshes sample identically under last-ulp geometric drift
    auto robust_argmax = [](const auto& value, int count) {
        double top = value(0);
        for (int i = 1; i < count; ++i) top = std::max(top, value(i));
        double cut = top - 1e-9 * std::abs(top);
        for (int i = 0; i < count; ++i)
            if (value(i) >= cut) return i;
        return 0;
    };
    int seed = robust_argmax([&](int i) { return flat.hyper_factor[i]; }, nv);

    auto graph = edge_graph(mesh);
    std::vector<double> nearest(nv, std::numeric_limits<double>::infinity());
    std::vector<int> chosen;
    chosen.reserve(n);
    using Item = std::pair<double, int>;
    auto relax_from = [&](int s) {
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
        nearest[s] = 0.0;
        heap.push({0.0, s});
        while (!heap.empty()) {
            auto [d, v] = heap.top();
            heap.pop();
            if (d > nearest[v]) continue;
            for (auto [u, len] : graph[v]) {
                double nd = d + len;
                if (nd < nearest[u]) {
                    nearest[u] = nd;
                    heap.push({nd, u});
                }
            }
        }
    };
    chosen.push_back(seed);
    relax_from(seed);
    while (static_cast<int>(chosen.size()) < n) {
        int far = robust_argmax([&](int i) { return nearest[i]; }, nv);
        chosen.push_back(far);
        relax_from(far);
    }

    SampleSet out;
    out.vertices = std::move(chosen);
    double mass = 0.0;
    for (int v : out.vertices) {
        out.points.push_back(flat.disk_coords[v]);
        out.f.push_back(flat.factor[v]);
        out.fhat.push_back(flat.hyper_factor[v]);
        out.weight.push_back(flat.factor[v] * flat.planar_weight[v]);
        mass += out.weight.back();
    }
    if (!(mass > 0.0)) throw GeometryError("sample set carries no mass");
    for (double& w : out.weight) w /= mass;
    return out;
}

std::vector<MobiusTransform> MobiusGrid::enumerate() const {
    if (theta < 1 || alpha_angular < 1 || alpha_radial < 0 || !(alpha_max > 0.0) ||
        alpha_max >= 1.0)
        throw GeometryError("invalid Möbius grid specification");
    std::vector<Complex> alphas{Complex{0.0, 0.0}};
    for (int k = 1; k <= alpha_radial; ++k)
        for (int l = 0; l < alpha_angular; ++l)
            alphas.push_back(std::polar(alpha_max * k / alpha_radial, two_pi * l / alpha_angular));
    std::vector<MobiusTransform> out;
    out.reserve(static_cast<std::size_t>(theta) * alphas.size());
    for (int t = 0; t < theta; ++t)
        for (Complex a : alphas) out.push_back({two_pi * t / theta, a});
    return out;
}

double cw_distance(const SampleSet& samplesA, const SampleSet& samplesB, const MobiusGrid& grid) {
    auto transforms = grid.enumerate();
    const int m = samplesA.size(), n = samplesB.size();
    if (m < 1 || n < 1) throw GeometryError("empty sample set");
    DiscreteMeasure mu{samplesA.vertices, samplesA.weight};
    DiscreteMeasure nu{samplesB.vertices, samplesB.weight};
    Eigen::MatrixXd cost(m, n);
    double best = std::numeric_limits<double>::infinity();
    for (const MobiusTransform& mt : transforms) {
        for (int i = 0; i < m; ++i) {
            if (samplesA.weight[i] == 0.0) {
                cost.row(i).setZero();
                continue;
            }
            Complex zi = mobius_apply(mt, samplesA.points[i]);
            for (int j = 0; j < n; ++j)
                cost(i, j) =
                    samplesB.weight[j] > 0.0 ? hyperbolic_distance(zi, samplesB.points[j]) : 0.0;
        }
        best = std::min(best, solve_kantorovich(mu, nu, cost).total_cost);
    }
    return best;
}

// ---------------------------------------------------------------------------
// cWn: tables of interpolated f̂ on the transported polar grid. The angular
// node count is the lcm of the requested density and the rotation count, so
// each grid rotation is an exact index shift; this keeps the cost symmetric
// under swapping the two surfaces up to float noise.
// ---------------------------------------------------------------------------

namespace {

struct PolarRings {
    std::vector<double> radius;      // ring node radii
    std::vector<double> node_weight; // η-area carried by each node of the ring
};

PolarRings polar_rings(double R, int radial, int angular_nodes) {
    if (!(R > 0.0)) throw GeometryError("neighborhood radius must be positive");
    if (radial < 1 || angular_nodes < 1) throw GeometryError("invalid neighborhood grid");
    PolarRings pr;
    const double r_max = euclidean_radius(R);
    auto eta_disk = [](double rho) { return std::numbers::pi * rho * rho / (1.0 - rho * rho); };
    for (int k = 0; k < radial; ++k) {
        double r0 = r_max * k / radial;
        double r1 = r_max * (k + 1) / radial;
        pr.radius.push_back(0.5 * (r0 + r1));
        pr.node_weight.push_back((eta_disk(r1) - eta_disk(r0)) / angular_nodes);
    }
    return pr;
}

// interpolated f̂ around each centre on the transported polar grid
std::vector<double> neighborhood_table(const FlatMap& flat, const DiskLocator& loc,
                                       std::span<const Complex> centers, const PolarRings& rings,
                                       int angular_nodes) {
    const int nrad = static_cast<int>(rings.radius.size());
    std::vector<double> table(centers.size() * nrad * angular_nodes);
    std::size_t q = 0;
    for (Complex z : centers) {
        MobiusTransform to_z = mobius_inverse(MobiusTransform{0.0, z});
        for (int k = 0; k < nrad; ++k)
            for (int l = 0; l < angular_nodes; ++l) {
                Complex node = std::polar(rings.radius[k], two_pi * l / angular_nodes);
                table[q++] = loc.interpolate(flat.hyper_factor, mobius_apply(to_z, node));
            }
    }
    return table;
}

double min_rotation_cost(const double* a, const double* b, const PolarRings& rings, int L,
                         int rotations) {
    const int nrad = static_cast<int>(rings.radius.size());
    const int step = L / rotations;
    double best = std::numeric_limits<double>::infinity();
    for (int t = 0; t < rotations; ++t) {
        int off = t * step;
        double s = 0.0;
        for (int k = 0; k < nrad; ++k) {
            const double* ak = a + static_cast<std::size_t>(k) * L;
            const double* bk = b + static_cast<std::size_t>(k) * L;
            double ring = 0.0;
            for (int l = 0; l < L; ++l) {
                int idx = l + off;
                if (idx >= L) idx -= L;
                ring += std::abs(ak[l] - bk[idx]);
            }
            s += rings.node_weight[k] * ring;
        }
        best = std::min(best, s);
    }
    return best;
}

} // namespace

double cwn_cost(Complex zA, Complex zB, const FlatMap& flatA, const FlatMap& flatB,
                const NeighborhoodSpec& spec) {
    if (std::abs(zA) >= 1.0 || std::abs(zB) >= 1.0)
        throw GeometryError("neighborhood centers must be interior points");
    if (spec.rotations < 1) throw GeometryError("rotation grid is empty");
    const int L = std::lcm(spec.quad.angular, spec.rotations);
    PolarRings rings = polar_rings(spec.R, spec.quad.radial, L);
    DiskLocator locA(flatA), locB(flatB);
    Complex ca[1] = {zA}, cb[1] = {zB};
    auto ta = neighborhood_table(flatA, locA, std::span<const Complex>(ca, 1), rings, L);
    auto tb = neighborhood_table(flatB, locB, std::span<const Complex>(cb, 1), rings, L);
    return min_rotation_cost(ta.data(), tb.data(), rings, L, spec.rotations);
}

CwnResult cwn_distance(const FlatMap& flatA, const FlatMap& flatB, const SampleSet& samplesA,
                       const SampleSet& samplesB, const NeighborhoodSpec& spec) {
    const int nA = samplesA.size(), nB = samplesB.size();
    if (nA < 1 || nB < 1) throw GeometryError("empty sample set");
    if (spec.rotations < 1) throw GeometryError("rotation grid is empty");
    const int L = std::lcm(spec.quad.angular, spec.rotations);
    PolarRings rings = polar_rings(spec.R, spec.quad.radial, L);
    const int nrad = static_cast<int>(rings.radius.size());
    DiskLocator locA(flatA), locB(flatB);
    auto ta = neighborhood_table(flatA, locA, samplesA.points, rings, L);
    auto tb = neighborhood_table(flatB, locB, samplesB.points, rings, L);

    Eigen::MatrixXd cost(nA, nB);
    const std::size_t stride = static_cast<std::size_t>(nrad) * L;
    for (int i = 0; i < nA; ++i)
        for (int j = 0; j < nB; ++j)
            cost(i, j) =
                min_rotation_cost(ta.data() + i * stride, tb.data() + j * stride, rings, L,
                                  spec.rotations);

    DiscreteMeasure mu{samplesA.vertices, samplesA.weight};
    DiscreteMeasure nu{samplesB.vertices, samplesB.weight};
    TransportPlan plan = solve_kantorovich(mu, nu, cost);
    return {plan.total_cost, std::move(plan)};
}

// ---------------------------------------------------------------------------
// peaks
// ---------------------------------------------------------------------------

std::vector<Peak> detect_peaks(const FlatMap& flat, int ring, double min_prominence) {
    const int nv = flat.vertex_count();
    if (ring < 1) throw GeometryError("peak ring must be >= 1");
    const auto& h = flat.hyper_factor;

    std::vector<std::set<int>> nbr(nv);
    for (const auto& f : flat.faces)
        for (int k = 0; k < 3; ++k) {
            nbr[f[k]].insert(f[(k + 1) % 3]);
            nbr[f[(k + 1) % 3]].insert(f[k]);
        }

    // k-ring local maxima among interior vertices
    std::vector<char> locmax(nv, 0);
    std::vector<int> frontier, next, seen_at(nv, -1);
    for (int v = 0; v < nv; ++v) {
        if (flat.is_boundary[v]) continue;
        bool ok = true;
        frontier.assign(1, v);
        seen_at[v] = v;
        for (int depth = 0; depth < ring && ok; ++depth) {
            next.clear();
            for (int x : frontier)
                for (int u : nbr[x]) {
                    if (seen_at[u] == v) continue;
                    seen_at[u] = v;
                    if (h[u] > h[v]) {
                        ok = false;
                        break;
                    }
                    next.push_back(u);
                }
            frontier.swap(next);
        }
        locmax[v] = ok;
    }

    // topographic prominence by a descending union-find sweep
    std::vector<int> order(nv);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int p, int q) {
        return h[p] != h[q] ? h[p] > h[q] : p < q;
    });
    double h_min = h.empty() ? 0.0 : h[order.back()];

    std::vector<int> parent(nv, -1), comp_peak(nv, -1);
    std::vector<double> prominence(nv, 0.0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    auto higher = [&](int p, int q) { return h[p] != h[q] ? h[p] > h[q] : p < q; };
    for (int v : order) {
        parent[v] = v;
        comp_peak[v] = v;
        for (int u : nbr[v]) {
            if (parent[u] < 0) continue; // not yet activated
            int ru = find(u), rv = find(v);
            if (ru == rv) continue;
            int pu = comp_peak[ru], pv = comp_peak[rv];
            int dying = higher(pu, pv) ? pv : pu;
            int living = dying == pu ? pv : pu;
            prominence[dying] = h[dying] - h[v];
            parent[ru] = rv;
            comp_peak[rv] = living;
        }
    }
    if (nv > 0) {
        int top = comp_peak[find(order.front())];
        prominence[top] = h[top] - h_min;
    }

    std::vector<Peak> peaks;
    for (int v : order) {
        if (!locmax[v]) continue;
        if (!(prominence[v] > min_prominence)) continue;
        peaks.push_back({flat.disk_coords[v], h[v], prominence[v], v});
    }
    return peaks; // order[] is already f̂-descending
}

// ---------------------------------------------------------------------------
// rigid alignment
// ---------------------------------------------------------------------------

AlignResult rigid_align(std::span<const Vec3> source, std::span<const Vec3> target,
                        std::span<const double> weights, bool allow_reflection) {
    const std::size_t n = source.size();
    if (n != target.size() || n != weights.size())
        throw GeometryError("rigid_align requires equal-length point and weight lists");
    if (n < 3) throw GeometryError("rigid_align requires at least 3 points");
    double W = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw GeometryError("rigid_align weights must be nonnegative");
        W += w;
    }
    if (!(W > 0.0)) throw GeometryError("rigid_align weights must not all vanish");

    Vec3 cx = Vec3::Zero(), cy = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        cx += weights[i] * source[i];
        cy += weights[i] * target[i];
    }
    cx /= W;
    cy /= W;
    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i)
        H += weights[i] * (source[i] - cx) * (target[i] - cy).transpose();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0))
        throw GeometryError("rigid_align: degenerate configuration (cross-covariance rank < 2)");
    Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    if (!allow_reflection && (V * U.transpose()).determinant() < 0.0) D(2, 2) = -1.0;

    RigidMotion motion;
    motion.rotation = V * D * U.transpose();
    motion.translation = cy - motion.rotation * cx;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        ss += weights[i] * (motion.apply(source[i]) - target[i]).squaredNorm();
    return {motion, std::sqrt(std::max(0.0, ss))};
}

double discrete_procrustes(std::span<const Vec3> X, std::span<const Vec3> Y) {
    if (X.size() != Y.size()) throw GeometryError("landmark counts differ");
    std::vector<double> ones(X.size(), 1.0);
    return rigid_align(X, Y, ones).residual;
}

// ---------------------------------------------------------------------------
// peak-alignment deformation
// ---------------------------------------------------------------------------

Complex DiskDeformation::operator()(Complex z) const {
    if (centers.empty()) return z;
    Complex d{0.0, 0.0};
    const double s2 = 2.0 * bandwidth * bandwidth;
    for (std::size_t j = 0; j < centers.size(); ++j)
        d += coeffs[j] * std::exp(-std::norm(z - centers[j]) / s2);
    return z + (1.0 - std::norm(z)) * d;
}

DiskDeformation align_peak_deformation(std::span<const Complex> moved_source_peaks,
                                       std::span<const Complex> target_peaks, double bandwidth) {
    DiskDeformation rho;
    rho.bandwidth = bandwidth;
    const int na = static_cast<int>(moved_source_peaks.size());
    const int nb = static_cast<int>(target_peaks.size());
    const int k = std::min(na, nb);
    if (k == 0) return rho;

    // greedy globally-nearest matching; ties by smallest index pair
    std::vector<char> useda(na, 0), usedb(nb, 0);
    std::vector<std::pair<int, int>> matches;
    for (int round = 0; round < k; ++round) {
        int bi = -1, bj = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (int i = 0; i < na; ++i) {
            if (useda[i]) continue;
            for (int j = 0; j < nb; ++j) {
                if (usedb[j]) continue;
                double d = std::abs(moved_source_peaks[i] - target_peaks[j]);
                if (d < bd) {
                    bd = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        useda[bi] = 1;
        usedb[bj] = 1;
        matches.push_back({bi, bj});
    }
    std::sort(matches.begin(), matches.end());

    Eigen::MatrixXcd M(k, k);
    Eigen::VectorXcd rhs(k);
    const double s2 = 2.0 * bandwidth * bandwidth;
    for (int i = 0; i < k; ++i) {
        Complex ai = moved_source_peaks[matches[i].first];
        double taper = 1.0 - std::norm(ai);
        for (int j = 0; j < k; ++j) {
            Complex aj = moved_source_peaks[matches[j].first];
            M(i, j) = taper * std::exp(-std::norm(ai - aj) / s2);
        }
        rhs(i) = target_peaks[matches[i].second] - ai;
    }
    Eigen::VectorXcd c = M.partialPivLu().solve(rhs);

    rho.centers.resize(k);
    rho.coeffs.resize(k);
    for (int i = 0; i < k; ++i) {
        rho.centers[i] = moved_source_peaks[matches[i].first];
        rho.coeffs[i] = c(i);
    }

    // keep the displacement field contractive so the map stays injective
    double lip = 0.0;
    for (int i = 0; i < k; ++i)
        lip += std::abs(rho.coeffs[i]) * (2.0 + std::exp(-0.5) / bandwidth);
    if (lip > 0.95)
        for (auto& cc : rho.coeffs) cc *= 0.95 / lip;
    return rho;
}

// ---------------------------------------------------------------------------
// area-preserving correction
// ---------------------------------------------------------------------------

AreaCorrectionResult area_preserving_correction(std::vector<Complex> images,
                                                const TriMesh& source_mesh,
                                                const TriMesh& target_mesh,
                                                const FlatMap& target_flat,
                                                const AreaCorrectionOptions& options) {
    const int nv = source_mesh.vertex_count();
    const int nf = source_mesh.face_count();
    if (static_cast<int>(images.size()) != nv)
        throw GeometryError("image list does not match the source mesh");
    DiskLocator loc(target_flat);

    std::vector<double> src_area(nf);
    std::vector<double> vert_area(nv, 0.0);
    for (int t = 0; t < nf; ++t) {
        src_area[t] = std::max(source_mesh.face_area(t), 1e-300);
        for (int k = 0; k < 3; ++k) vert_area[source_mesh.faces[t][k]] += src_area[t];
    }

    auto locate_all = [&](const std::vector<Complex>& u, std::vector<SurfacePoint>& sp,
                          std::vector<Vec3>& pos, std::vector<Complex>& snapped) {
        sp.resize(nv);
        pos.resize(nv);
        snapped.resize(nv);
        for (int v = 0; v < nv; ++v) {
            sp[v] = loc.locate_clamped(u[v]);
            pos[v] = surface_point_position(target_mesh, sp[v]);
            const auto& f = target_flat.faces[sp[v].face];
            snapped[v] = sp[v].bary[0] * target_flat.disk_coords[f[0]] +
                         sp[v].bary[1] * target_flat.disk_coords[f[1]] +
                         sp[v].bary[2] * target_flat.disk_coords[f[2]];
        }
    };
    auto residual_of = [&](const std::vector<Vec3>& pos, std::vector<double>& ratio) {
        ratio.resize(nf);
        double res = 0.0;
        for (int t = 0; t < nf; ++t) {
            const auto& f = source_mesh.faces[t];
            ratio[t] = triangle_area_3d(pos[f[0]], pos[f[1]], pos[f[2]]) / src_area[t];
            res = std::max(res, std::abs(ratio[t] - 1.0));
        }
        return res;
    };
    // total misplaced mass; drives progress once the max face is pinned on a
    // quadrature noise floor
    auto misplacement_of = [&](const std::vector<double>& ratio) {
        double m = 0.0;
        for (int t = 0; t < nf; ++t) m += src_area[t] * std::abs(ratio[t] - 1.0);
        return m;
    };

    std::vector<SurfacePoint> sp;
    std::vector<Vec3> pos;
    std::vector<Complex> snapped;
    std::vector<double> ratio;
    locate_all(images, sp, pos, snapped);
    images = snapped;
    double res = residual_of(pos, ratio);

    AreaCorrectionResult out;
    out.iterations = 0;
    int iter = 0;
    const double h_img = std::sqrt(std::numbers::pi / std::max(1, nf));

    // Rearranging mass needs long-range coordination: a raw gradient flow on
    // the log-ratio field stalls once local trades stop helping, so smooth the
    // field through a Poisson solve on the source mesh and flow along that
    // potential's gradient instead.
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> poisson;
    bool have_poisson = false;
    if (res > options.tol && options.max_iterations > 0) {
        std::vector<Eigen::Triplet<double>> trip;
        std::vector<double> dg(nv, 0.0);
        for (int t = 0; t < nf; ++t) {
            const auto& f = source_mesh.faces[t];
            for (int k = 0; k < 3; ++k) {
                int i = f[k], j = f[(k + 1) % 3], o = f[(k + 2) % 3];
                Vec3 e1 = source_mesh.vertices[i] - source_mesh.vertices[o];
                Vec3 e2 = source_mesh.vertices[j] - source_mesh.vertices[o];
                double cross = e1.cross(e2).norm();
                double w = cross < 1e-300 ? 0.0 : 0.5 * std::max(e1.dot(e2) / cross, 0.0);
                if (w <= 0.0) continue;
                trip.emplace_back(i, j, -w);
                trip.emplace_back(j, i, -w);
                dg[i] += w;
                dg[j] += w;
            }
        }
        // small mass shift pins the constant mode without boundary conditions
        for (int v = 0; v < nv; ++v)
            trip.emplace_back(v, v, dg[v] + 1e-8 * std::max(vert_area[v], 1e-300));
        Eigen::SparseMatrix<double> L(nv, nv);
        L.setFromTriplets(trip.begin(), trip.end());
        poisson.compute(L);
        have_poisson = poisson.info() == Eigen::Success;
    }

    // uphill PL gradient of the potential over the image triangulation: points
    // flow toward expansion maxima, contracting them; vertices of faces pinned
    // at the current max stay put so the bulk can keep draining mass without
    // nudging the max upward
    std::vector<char> frozen(nv, 0);
    auto flow_velocity = [&](const std::vector<double>& sigma_face, std::vector<Complex>& vel) {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nv);
        for (int t = 0; t < nf; ++t)
            for (int k = 0; k < 3; ++k)
                rhs[source_mesh.faces[t][k]] += src_area[t] / 3.0 * sigma_face[t];
        rhs.array() -= rhs.mean();
        Eigen::VectorXd u = have_poisson ? poisson.solve(rhs).eval() : rhs;
        vel.assign(nv, Complex{0.0, 0.0});
        for (int t = 0; t < nf; ++t) {
            const auto& f = source_mesh.faces[t];
            Complex u0 = images[f[0]], u1 = images[f[1]], u2 = images[f[2]];
            double twice_area = (u1.real() - u0.real()) * (u2.imag() - u0.imag()) -
                                (u2.real() - u0.real()) * (u1.imag() - u0.imag());
            if (std::abs(twice_area) < 1e-18) continue;
            auto perp = [](Complex e) { return Complex(-e.imag(), e.real()); };
            Complex g = (u[f[0]] * perp(u2 - u1) + u[f[1]] * perp(u0 - u2) +
                         u[f[2]] * perp(u1 - u0)) /
                        twice_area;
            for (int k = 0; k < 3; ++k) vel[f[k]] += src_area[t] * g;
        }
        double gmax = 0.0;
        for (int v = 0; v < nv; ++v) {
            if (frozen[v]) {
                vel[v] = Complex{0.0, 0.0};
                continue;
            }
            vel[v] /= vert_area[v] > 0.0 ? vert_area[v] : 1.0;
            gmax = std::max(gmax, std::abs(vel[v]));
        }
        return gmax;
    };
    // local pressure force: shrink expanded cells, grow contracted ones; a
    // genuine descent direction for the misplaced mass when the smoothed
    // transport flow stalls circulating
    auto area_force = [&](std::vector<Complex>& vel) {
        vel.assign(nv, Complex{0.0, 0.0});
        auto perp = [](Complex e) { return Complex(-e.imag(), e.real()); };
        for (int t = 0; t < nf; ++t) {
            const auto& f = source_mesh.faces[t];
            double w = std::clamp(ratio[t] - 1.0, -1.0, 1.0);
            if (w == 0.0) continue;
            for (int k = 0; k < 3; ++k)
                vel[f[k]] -= 0.5 * w * perp(images[f[(k + 2) % 3]] - images[f[(k + 1) % 3]]);
        }
        double gmax = 0.0;
        for (int v = 0; v < nv; ++v) {
            if (frozen[v]) {
                vel[v] = Complex{0.0, 0.0};
                continue;
            }
            vel[v] /= vert_area[v] > 0.0 ? vert_area[v] : 1.0;
            gmax = std::max(gmax, std::abs(vel[v]));
        }
        return gmax;
    };
    double mis = misplacement_of(ratio);
    // strict mode insists the max deviation drops; bulk mode holds it (the max
    // face is pinned on a quadrature noise floor) while draining total
    // misplaced mass
    auto try_direction = [&](const std::vector<Complex>& vel, double gmax, bool bulk) {
        if (!(gmax > 1e-14)) return false;
        double step = std::min(1.0, 4.0 * h_img / gmax);
        for (int half = 0; half < 20; ++half, step *= 0.5) {
            std::vector<Complex> trial(nv);
            for (int v = 0; v < nv; ++v) trial[v] = images[v] + step * vel[v];
            std::vector<SurfacePoint> sp2;
            std::vector<Vec3> pos2;
            std::vector<Complex> snapped2;
            std::vector<double> ratio2;
            locate_all(trial, sp2, pos2, snapped2);
            double res2 = residual_of(pos2, ratio2);
            double mis2 = misplacement_of(ratio2);
            bool better = bulk ? res2 <= res && mis2 < mis - 1e-15 : res2 < res - 1e-15;
            if (better) {
                images = std::move(snapped2);
                sp = std::move(sp2);
                pos = std::move(pos2);
                ratio = std::move(ratio2);
                res = res2;
                mis = mis2;
                return true;
            }
        }
        return false;
    };

    std::vector<double> sigma(nf), emphasized(nf);
    std::vector<Complex> vel;
    int phase = 0;  // 0: push the max down, 1: drain bulk mass around it
    while (res > options.tol && iter < options.max_iterations) {
        double smax = 0.0;
        for (int t = 0; t < nf; ++t) {
            sigma[t] = std::log(std::max(ratio[t], 1e-12));
            smax = std::max(smax, std::abs(sigma[t]));
        }
        std::fill(frozen.begin(), frozen.end(), 0);
        bool accepted = false;
        if (phase == 0 || iter % 4 == 0) {
            double gmax = flow_velocity(sigma, vel);
            accepted = try_direction(vel, gmax, false);
            if (!accepted && smax > 0.0) {
                // retarget the flow at the worst offenders
                for (int t = 0; t < nf; ++t) {
                    double w = std::abs(sigma[t]) / smax;
                    emphasized[t] = sigma[t] * w * w * w;
                }
                double gme = flow_velocity(emphasized, vel);
                accepted = try_direction(vel, gme, false);
            }
            if (!accepted) {
                // the lumped flow cancels over alternating-sign clusters; the
                // raw per-face force still sees them
                double gmf = area_force(vel);
                accepted = try_direction(vel, gmf, false);
            }
            if (accepted) phase = 0;
        }
        if (!accepted) {
            double cut = std::max(res * 0.95, options.tol);
            for (int t = 0; t < nf; ++t)
                if (std::abs(ratio[t] - 1.0) >= cut)
                    for (int k = 0; k < 3; ++k) frozen[source_mesh.faces[t][k]] = 1;
            double gmax = flow_velocity(sigma, vel);
            accepted = try_direction(vel, gmax, true);
            if (!accepted) {
                double gmf = area_force(vel);
                accepted = try_direction(vel, gmf, true);
            }
            if (accepted) phase = 1;
        }
        ++iter;
        if (!accepted) break;
    }

    out.disk_images = std::move(images);
    out.images = std::move(sp);
    out.residual = res;
    out.iterations = iter;
    out.converged = res <= options.tol;
    return out;
}

// ---------------------------------------------------------------------------
// correspondence export / import
// ---------------------------------------------------------------------------

void save_correspondence_csv(const CorrespondenceMap& map, std::ostream& out) {
    nlohmann::json meta;
    meta["method"] = map.method;
    meta["source_id"] = map.source_id;
    meta["target_id"] = map.target_id;
    meta["distance"] = map.distance;
    meta["residual"] = map.residual;
    meta["converged"] = map.corrector_converged;
    std::vector<double> motion;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) motion.push_back(map.motion.rotation(r, c));
    for (int r = 0; r < 3; ++r) motion.push_back(map.motion.translation(r));
    meta["motion"] = motion;
    out << "# " << meta.dump() << "\n";
    out << "source_vertex,target_face,b0,b1,b2\n";
    char buf[160];
    for (std::size_t v = 0; v < map.images.size(); ++v) {
        const SurfacePoint& p = map.images[v];
        std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%.17g,%.17g\n", v, p.face, p.bary[0],
                      p.bary[1], p.bary[2]);
        out << buf;
    }
}

CorrespondenceMap load_correspondence_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.size() < 2 || line[0] != '#')
        throw ParseError("correspondence file must start with a '#' JSON header");
    CorrespondenceMap map;
    nlohmann::json meta = nlohmann::json::parse(line.substr(1));
    map.method = meta.value("method", "");
    map.source_id = meta.value("source_id", "");
    map.target_id = meta.value("target_id", "");
    map.distance = meta.value("distance", 0.0);
    map.residual = meta.value("residual", 0.0);
    map.corrector_converged = meta.value("converged", true);
    if (meta.contains("motion")) {
        auto mv = meta["motion"].get<std::vector<double>>();
        if (mv.size() != 12) throw ParseError("correspondence motion must hold 12 numbers");
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) map.motion.rotation(r, c) = mv[3 * r + c];
        for (int r = 0; r < 3; ++r) map.motion.translation(r) = mv[9 + r];
    }
    if (!std::getline(in, line) || line.rfind("source_vertex,", 0) != 0)
        throw ParseError("correspondence file missing its column header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        SurfacePoint p;
        std::size_t v;
        if (std::sscanf(line.c_str(), "%zu,%d,%lg,%lg,%lg", &v, &p.face, &p.bary[0], &p.bary[1],
                        &p.bary[2]) != 5)
            throw ParseError("bad correspondence row: " + line);
        if (v != map.images.size()) throw ParseError("correspondence rows out of order");
        map.images.push_back(p);
    }
    return map;
}

// ---------------------------------------------------------------------------
// continuous Procrustes
// ---------------------------------------------------------------------------

namespace {

std::vector<Complex> peak_anchors(const FlatMap& flat, const CpOptions& opt) {
    const auto& h = flat.hyper_factor;
    auto [lo, hi] = std::minmax_element(h.begin(), h.end());
    double range = h.empty() ? 0.0 : *hi - *lo;
    auto peaks = detect_peaks(flat, opt.peak_ring, opt.peak_prominence * range);
    if (static_cast<int>(peaks.size()) > opt.max_peaks) peaks.resize(opt.max_peaks);
    std::vector<Complex> out;
    for (const Peak& p : peaks) out.push_back(p.location);
    if (out.empty()) {
        // no prominent peak: fall back to the f-weighted centroid
        Complex c{0.0, 0.0};
        for (int v = 0; v < flat.vertex_count(); ++v)
            c += flat.factor[v] * flat.planar_weight[v] * flat.disk_coords[v];
        if (std::abs(c) > 0.9) c *= 0.9 / std::abs(c);
        out.push_back(c);
    }
    return out;
}

} // namespace

CpResult cp_distance(const TriMesh& meshA, const TriMesh& meshB, const FlatMap& flatA,
                     const FlatMap& flatB, const CpOptions& options) {
    if (std::abs(meshA.total_area() - 1.0) > 1e-6 || std::abs(meshB.total_area() - 1.0) > 1e-6)
        throw GeometryError("cp_distance expects unit-area meshes (normalize first)");
    if (flatA.vertex_count() != meshA.vertex_count() ||
        flatB.vertex_count() != meshB.vertex_count())
        throw GeometryError("flat maps do not match their meshes");

    SampleSet sA = sample_surface(flatA, meshA, std::min(options.samples, meshA.vertex_count()));
    DiskLocator locB(flatB);
    std::vector<Complex> pA = peak_anchors(flatA, options);
    std::vector<Complex> pB = peak_anchors(flatB, options);
    std::vector<Vec3> xs(sA.size());
    for (int i = 0; i < sA.size(); ++i) xs[i] = meshA.vertices[sA.vertices[i]];

    const int T = std::max(1, options.rotations);
    // ia/ib == -1 marks the mass-centred branch: both canonical densities are
    // already centred, so a bare rotation with no anchor warp is a candidate
    // in its own right -- often the only sane one when peak sets disagree
    auto branch = [&](int ia, int ib, double theta) {
        MobiusTransform m = mobius_family_fixing(ia < 0 ? Complex{0.0, 0.0} : pA[ia],
                                                 ib < 0 ? Complex{0.0, 0.0} : pB[ib], theta);
        DiskDeformation rho;
        rho.bandwidth = options.rbf_bandwidth;
        if (ia >= 0) {
            std::vector<Complex> moved(pA.size());
            for (std::size_t k = 0; k < pA.size(); ++k) moved[k] = mobius_apply(m, pA[k]);
            rho = align_peak_deformation(moved, pB, options.rbf_bandwidth);
        }
        return std::pair{m, rho};
    };
    auto evaluate = [&](int ia, int ib, double theta) -> double {
        auto [m, rho] = branch(ia, ib, theta);
        std::vector<Vec3> ys(sA.size());
        for (int i = 0; i < sA.size(); ++i) {
            SurfacePoint sp = locB.locate_clamped(rho(mobius_apply(m, sA.points[i])));
            ys[i] = surface_point_position(meshB, sp);
        }
        try {
            return rigid_align(xs, ys, sA.weight, options.allow_reflection).residual;
        } catch (const GeometryError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    const std::size_t pairs = pA.size() * pB.size();
    const std::size_t count = (pairs + 1) * static_cast<std::size_t>(T);
    std::vector<double> value(count);
    parallel_for(count, options.jobs, [&](std::size_t c) {
        std::size_t pair = c / T;
        int t = static_cast<int>(c % T);
        int ia = pair == pairs ? -1 : static_cast<int>(pair / pB.size());
        int ib = pair == pairs ? -1 : static_cast<int>(pair % pB.size());
        value[c] = evaluate(ia, ib, two_pi * t / T);
    });
    // Best rotation per peak pair; the sweep value only ranks candidates.  The
    // reported distance lives on the corrected full-vertex map, and near-tied
    // pairs can land far apart after correction, so a handful of finalists is
    // evaluated through the full pipeline and the true minimum kept.
    struct Finalist {
        double sweep;
        int ia, ib, t;
    };
    auto by_sweep = [](const Finalist& x, const Finalist& y) {
        if (x.sweep != y.sweep) return x.sweep < y.sweep;
        return std::tie(x.ia, x.ib, x.t) < std::tie(y.ia, y.ib, y.t);
    };
    std::vector<Finalist> finalists;
    for (std::size_t pair = 0; pair <= pairs; ++pair) {
        std::size_t base = pair * T;
        int ia = pair == pairs ? -1 : static_cast<int>(pair / pB.size());
        int ib = pair == pairs ? -1 : static_cast<int>(pair % pB.size());
        // up to three rotation basins per pair: on nearly rotation-symmetric
        // shapes the sweep valley is flat and the winning basin after
        // correction is often not the winning basin before it
        std::vector<Finalist> basins;
        for (int t = 0; t < T; ++t) {
            double v = value[base + t];
            if (!std::isfinite(v)) continue;
            if (T > 1 && (v > value[base + (t + T - 1) % T] || v > value[base + (t + 1) % T]))
                continue;
            basins.push_back({v, ia, ib, t});
        }
        std::sort(basins.begin(), basins.end(), by_sweep);
        if (basins.size() > 3) basins.resize(3);
        finalists.insert(finalists.end(), basins.begin(), basins.end());
    }
    std::sort(finalists.begin(), finalists.end(), by_sweep);
    // the centred branch is kept even when outranked on the sweep: it corrects
    // well precisely on pairs where anchored branches cram mass boundary-ward
    Finalist centred{};
    bool have_centred = false;
    for (const Finalist& f : finalists)
        if (f.ia < 0) {
            centred = f;
            have_centred = true;
            break;
        }
    if (finalists.size() > 8) finalists.resize(8);
    if (have_centred &&
        std::none_of(finalists.begin(), finalists.end(), [](const Finalist& f) { return f.ia < 0; }))
        finalists.push_back(centred);

    std::vector<double> wts = vertex_areas(meshA);
    CpResult out;
    out.value = std::numeric_limits<double>::infinity();
    for (const Finalist& fin : finalists) {
        if (!std::isfinite(fin.sweep)) continue;
        double theta_best = two_pi * fin.t / T;
        double v_best = fin.sweep;
        if (options.theta_refine > 0) {
            double span = two_pi / T;
            for (int k = 0; k <= 2 * options.theta_refine; ++k) {
                double th = theta_best - span + span * k / options.theta_refine;
                double v = evaluate(fin.ia, fin.ib, th);
                if (v < v_best) {
                    v_best = v;
                    theta_best = th;
                }
            }
        }

        auto [m, rho] = branch(fin.ia, fin.ib, theta_best);
        std::vector<Complex> images(meshA.vertex_count());
        for (int v = 0; v < meshA.vertex_count(); ++v)
            images[v] = rho(mobius_apply(m, flatA.disk_coords[v]));
        AreaCorrectionResult corr = area_preserving_correction(std::move(images), meshA, meshB,
                                                               flatB, options.correction);

        std::vector<Vec3> ys(meshA.vertex_count());
        for (int v = 0; v < meshA.vertex_count(); ++v)
            ys[v] = surface_point_position(meshB, corr.images[v]);
        AlignResult final_align;
        try {
            final_align = rigid_align(meshA.vertices, ys, wts, options.allow_reflection);
        } catch (const GeometryError&) {
            continue;
        }
        if (final_align.residual < out.value) {
            out.value = final_align.residual;
            out.motion = final_align.motion;
            out.map.images = corr.images;
            out.map.residual = corr.residual;
            out.map.corrector_converged = corr.converged;
        }
    }
    if (!std::isfinite(out.value))
        throw GeometryError("no usable rigid alignment among cP candidates");

    out.map.source_id = meshA.specimen_id;
    out.map.target_id = meshB.specimen_id;
    out.map.method = "cP";
    out.map.distance = out.value;
    out.map.motion = out.motion;
    return out;
}

CorrespondenceMap cwn_correspondence(const CwnResult& result, const SampleSet& samplesA,
                                     const SampleSet& samplesB, const TriMesh& meshA,
                                     const FlatMap& flatA, const TriMesh& meshB,
                                     const FlatMap& flatB) {
    std::vector<int> match = plan_as_soft_correspondence(result.plan);
    if (match.size() != static_cast<std::size_t>(samplesA.size()))
        throw GeometryError("plan does not match the sample set");

    // vertex -> (first incident face, corner) lookup on the target
    std::vector<std::pair<int, int>> at_face(meshB.vertex_count(), {-1, -1});
    for (int t = 0; t < meshB.face_count(); ++t)
        for (int k = 0; k < 3; ++k) {
            int v = meshB.faces[t][k];
            if (at_face[v].first < 0) at_face[v] = {t, k};
        }

    CorrespondenceMap map;
    map.source_id = flatA.source_id;
    map.target_id = flatB.source_id;
    map.method = "cWn-argmax";
    map.distance = result.value;
    map.images.resize(meshA.vertex_count());
    for (int v = 0; v < meshA.vertex_count(); ++v) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int k = 0; k < samplesA.size(); ++k) {
            double d = std::abs(flatA.disk_coords[v] - samplesA.points[k]);
            if (d < bd) {
                bd = d;
                best = k;
            }
        }
        int tv = samplesB.vertices[match[best]];
        SurfacePoint p;
        p.face = at_face[tv].first;
        p.bary = {0.0, 0.0, 0.0};
        p.bary[at_face[tv].second] = 1.0;
        map.images[v] = p;
    }

    double res = 0.0;
    for (int t = 0; t < meshA.face_count(); ++t) {
        const auto& f = meshA.faces[t];
        Vec3 a = surface_point_position(meshB, map.images[f[0]]);
        Vec3 b = surface_point_position(meshB, map.images[f[1]]);
        Vec3 c = surface_point_position(meshB, map.images[f[2]]);
        res = std::max(res, std::abs(triangle_area_3d(a, b, c) /
                                         std::max(meshA.face_area(t), 1e-300) -
                                     1.0));
    }
    map.residual = res;
    return map;
}

} // namespace surfdist
