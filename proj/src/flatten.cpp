#include "surfdist/flatten.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "surfdist/errors.hpp"

namespace surfdist {

namespace {

double triangle_area_2d(Complex a, Complex b, Complex c) {
    return 0.5 * ((b.real() - a.real()) * (c.imag() - a.imag()) -
                  (c.real() - a.real()) * (b.imag() - a.imag()));
}

double cotangent(const Vec3& a, const Vec3& b) {
    // cot of the angle between a and b
    double cross = a.cross(b).norm();
    if (cross < 1e-300) return 0.0;
    return a.dot(b) / cross;
}

std::vector<char> boundary_flags(const TriMesh& mesh) {
    std::vector<char> flags(mesh.vertex_count(), 0);
    std::map<std::pair<int, int>, int> undirected;
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            undirected[std::minmax(a, b)]++;
        }
    for (const auto& [e, cnt] : undirected)
        if (cnt == 1) {
            flags[e.first] = 1;
            flags[e.second] = 1;
        }
    return flags;
}

// Lumped planar vertex areas of the flattened triangulation with boundary
// vertices zeroed; these are the quadrature weights for integrals in dx dy.
std::vector<double> planar_quadrature(const std::vector<std::array<int, 3>>& faces,
                                      const std::vector<Complex>& coords,
                                      const std::vector<char>& is_boundary) {
    std::vector<double> w(coords.size(), 0.0);
    for (const auto& f : faces) {
        double third = triangle_area_2d(coords[f[0]], coords[f[1]], coords[f[2]]) / 3.0;
        for (int k = 0; k < 3; ++k) w[f[k]] += third;
    }
    for (std::size_t i = 0; i < w.size(); ++i)
        if (is_boundary[i]) w[i] = 0.0;
    return w;
}

} // namespace

std::vector<double> conformal_factor(const TriMesh& mesh, const std::vector<Complex>& disk_coords) {
    if (static_cast<int>(disk_coords.size()) != mesh.vertex_count())
        throw GeometryError("disk coordinate count does not match mesh");
    auto bnd = boundary_flags(mesh);
    std::vector<double> surf = vertex_areas(mesh);
    std::vector<double> planar(mesh.vertex_count(), 0.0);
    for (const auto& f : mesh.faces) {
        double third = triangle_area_2d(disk_coords[f[0]], disk_coords[f[1]], disk_coords[f[2]]) / 3.0;
        for (int k = 0; k < 3; ++k) planar[f[k]] += third;
    }
    std::vector<double> f(mesh.vertex_count());
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        if (!(planar[i] > 0.0))
            throw GeometryError("zero planar area at vertex " + std::to_string(i));
        f[i] = surf[i] / planar[i];
    }
    double mass = 0.0;
    for (int i = 0; i < mesh.vertex_count(); ++i)
        if (!bnd[i]) mass += f[i] * planar[i];
    if (!(mass > 0.0)) throw GeometryError("conformal factor has zero interior mass");
    for (auto& v : f) v /= mass;
    return f;
}

FlatMap flatten(const TriMesh& mesh, const FlattenOptions& options) {
    require_disk_topology(mesh);
    const int nv = mesh.vertex_count();

    // Boundary to the unit circle by cumulative chord length, smallest
    // boundary vertex index pinned at angle 0.
    std::vector<int> loop = boundary_loop(mesh);
    const int nb = static_cast<int>(loop.size());
    std::vector<double> seg(nb);
    double total = 0.0;
    for (int k = 0; k < nb; ++k) {
        seg[k] = (mesh.vertices[loop[(k + 1) % nb]] - mesh.vertices[loop[k]]).norm();
        total += seg[k];
    }
    if (!(total > 0.0)) throw GeometryError("degenerate boundary loop");

    std::vector<Complex> coords(nv, Complex{0.0, 0.0});
    std::vector<char> bnd(nv, 0);
    double acc = 0.0;
    for (int k = 0; k < nb; ++k) {
        double angle = 2.0 * std::numbers::pi * acc / total;
        coords[loop[k]] = std::polar(1.0, angle);
        bnd[loop[k]] = 1;
        acc += seg[k];
    }

    // Cotangent edge weights from the 3D metric, clamped at 0.
    std::map<std::pair<int, int>, double> weight;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int i = f[k], j = f[(k + 1) % 3], o = f[(k + 2) % 3];
            double cot = cotangent(mesh.vertices[i] - mesh.vertices[o],
                                   mesh.vertices[j] - mesh.vertices[o]);
            weight[std::minmax(i, j)] += 0.5 * cot;
        }
    }
    int clamped = 0;
    for (auto& [e, w] : weight) {
        if (w < 0.0) {
            w = 0.0;
            ++clamped;
        }
    }

    // Dirichlet problem on interior vertices.
    std::vector<int> interior_index(nv, -1);
    std::vector<int> interior;
    for (int i = 0; i < nv; ++i)
        if (!bnd[i]) {
            interior_index[i] = static_cast<int>(interior.size());
            interior.push_back(i);
        }
    const int ni = static_cast<int>(interior.size());

    if (ni > 0) {
        std::vector<Eigen::Triplet<double>> triplets;
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ni, 2);
        std::vector<double> diag(ni, 0.0);
        for (const auto& [e, w] : weight) {
            if (w == 0.0) continue;
            auto [i, j] = e;
            int ii = interior_index[i], jj = interior_index[j];
            if (ii >= 0) diag[ii] += w;
            if (jj >= 0) diag[jj] += w;
            if (ii >= 0 && jj >= 0) {
                triplets.emplace_back(ii, jj, -w);
                triplets.emplace_back(jj, ii, -w);
            } else if (ii >= 0) {
                rhs(ii, 0) += w * coords[j].real();
                rhs(ii, 1) += w * coords[j].imag();
            } else if (jj >= 0) {
                rhs(jj, 0) += w * coords[i].real();
                rhs(jj, 1) += w * coords[i].imag();
            }
        }
        for (int k = 0; k < ni; ++k) triplets.emplace_back(k, k, diag[k]);

        Eigen::SparseMatrix<double> L(ni, ni);
        L.setFromTriplets(triplets.begin(), triplets.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(L);
        if (solver.info() != Eigen::Success)
            throw SolverError("harmonic flattening system is singular");
        Eigen::MatrixXd sol = solver.solve(rhs);
        if (solver.info() != Eigen::Success) throw SolverError("harmonic flattening solve failed");

        double rhs_norm = rhs.norm();
        if (rhs_norm > 0.0) {
            double rel = (L * sol - rhs).norm() / rhs_norm;
            if (rel > options.solver_tol)
                throw SolverError("harmonic flattening residual " + std::to_string(rel) +
                                  " exceeds tolerance");
        }
        for (int k = 0; k < ni; ++k) coords[interior[k]] = Complex(sol(k, 0), sol(k, 1));
    }

    for (std::size_t t = 0; t < mesh.faces.size(); ++t) {
        const auto& f = mesh.faces[t];
        if (!(triangle_area_2d(coords[f[0]], coords[f[1]], coords[f[2]]) > 0.0))
            throw SolverError("flipped triangle " + std::to_string(t) + " after flattening");
    }

    FlatMap flat;
    flat.disk_coords = std::move(coords);
    flat.is_boundary = std::move(bnd);
    flat.faces = mesh.faces;
    flat.source_id = mesh.specimen_id;
    flat.clamped_weight_count = clamped;
    flat.planar_weight = planar_quadrature(flat.faces, flat.disk_coords, flat.is_boundary);
    flat.factor = conformal_factor(mesh, flat.disk_coords);
    flat.hyper_factor.resize(nv);
    for (int i = 0; i < nv; ++i) {
        double d = 1.0 - std::norm(flat.disk_coords[i]);
        flat.hyper_factor[i] = d * d * flat.factor[i];
    }

    if (options.canonical_recentre) {
        // One Mobius step only cancels the density centroid to first order, so
        // iterate, rebuilding the discrete densities from the moved coordinates
        // each time; the residual shrinks quadratically.
        for (int iter = 0; iter < 32; ++iter) {
            Complex centroid{0.0, 0.0};
            for (int i = 0; i < nv; ++i)
                centroid += flat.factor[i] * flat.planar_weight[i] * flat.disk_coords[i];
            if (!(std::abs(centroid) > 1e-13) || !(std::abs(centroid) < 1.0)) break;
            MobiusTransform m{0.0, centroid};
            for (auto& z : flat.disk_coords) z = mobius_apply(m, z);
            flat.planar_weight = planar_quadrature(flat.faces, flat.disk_coords, flat.is_boundary);
            flat.factor = conformal_factor(mesh, flat.disk_coords);
            for (int i = 0; i < nv; ++i) {
                double d = 1.0 - std::norm(flat.disk_coords[i]);
                flat.hyper_factor[i] = d * d * flat.factor[i];
            }
        }
    }
    return flat;
}

FlatMap recentre(const FlatMap& flat, const MobiusTransform& m) {
    FlatMap out;
    const std::size_t n = flat.disk_coords.size();
    out.disk_coords.resize(n);
    out.factor.resize(n);
    out.hyper_factor.resize(n);
    out.planar_weight.resize(n);
    out.is_boundary = flat.is_boundary;
    out.faces = flat.faces;
    out.source_id = flat.source_id;
    out.clamped_weight_count = flat.clamped_weight_count;
    for (std::size_t i = 0; i < n; ++i) {
        Complex z = flat.disk_coords[i];
        Complex w = mobius_apply(m, z);
        double jac = mobius_jacobian(m, z);
        out.disk_coords[i] = w;
        out.factor[i] = flat.factor[i] / jac;
        out.planar_weight[i] = flat.planar_weight[i] * jac;
        double d = 1.0 - std::norm(w);
        out.hyper_factor[i] = d * d * out.factor[i];
    }
    return out;
}

double mean_angle_distortion(const TriMesh& mesh, const std::vector<Complex>& disk_coords) {
    double sum = 0.0;
    int corners = 0;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int i = f[k], j = f[(k + 1) % 3], o = f[(k + 2) % 3];
            Vec3 e1 = mesh.vertices[j] - mesh.vertices[i];
            Vec3 e2 = mesh.vertices[o] - mesh.vertices[i];
            double a3 = std::atan2(e1.cross(e2).norm(), e1.dot(e2));
            Complex u = disk_coords[j] - disk_coords[i];
            Complex v = disk_coords[o] - disk_coords[i];
            double a2 = std::abs(std::arg(v / u));
            sum += std::abs(a3 - a2);
            ++corners;
        }
    }
    return corners ? sum / corners : 0.0;
}

void save_flatmap_csv(const FlatMap& flat, std::ostream& out) {
    out << "vertex,re,im,factor,hyper_factor\n";
    char buf[160];
    for (int i = 0; i < flat.vertex_count(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", i,
                      flat.disk_coords[i].real(), flat.disk_coords[i].imag(), flat.factor[i],
                      flat.hyper_factor[i]);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// DiskLocator
// ---------------------------------------------------------------------------

DiskLocator::DiskLocator(const FlatMap& flat)
    : DiskLocator(std::span<const std::array<int, 3>>(flat.faces),
                  std::span<const Complex>(flat.disk_coords)) {}

DiskLocator::DiskLocator(std::span<const std::array<int, 3>> faces, std::span<const Complex> coords)
    : faces_(faces.begin(), faces.end()), coords_(coords.begin(), coords.end()) {
    grid_n_ = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(faces_.size()))), 8, 256);
    cell_ = 2.0 / grid_n_;
    cells_.assign(static_cast<std::size_t>(grid_n_) * grid_n_, {});
    for (int t = 0; t < static_cast<int>(faces_.size()); ++t) {
        const auto& f = faces_[t];
        double x0 = 1.0, x1 = -1.0, y0 = 1.0, y1 = -1.0;
        for (int k = 0; k < 3; ++k) {
            x0 = std::min(x0, coords_[f[k]].real());
            x1 = std::max(x1, coords_[f[k]].real());
            y0 = std::min(y0, coords_[f[k]].imag());
            y1 = std::max(y1, coords_[f[k]].imag());
        }
        int cx0 = std::clamp(static_cast<int>((x0 + 1.0) / cell_), 0, grid_n_ - 1);
        int cx1 = std::clamp(static_cast<int>((x1 + 1.0) / cell_), 0, grid_n_ - 1);
        int cy0 = std::clamp(static_cast<int>((y0 + 1.0) / cell_), 0, grid_n_ - 1);
        int cy1 = std::clamp(static_cast<int>((y1 + 1.0) / cell_), 0, grid_n_ - 1);
        for (int cy = cy0; cy <= cy1; ++cy)
            for (int cx = cx0; cx <= cx1; ++cx)
                cells_[static_cast<std::size_t>(cy) * grid_n_ + cx].push_back(t);
    }
}

int DiskLocator::cell_index(double x, double y) const {
    int cx = std::clamp(static_cast<int>((x + 1.0) / cell_), 0, grid_n_ - 1);
    int cy = std::clamp(static_cast<int>((y + 1.0) / cell_), 0, grid_n_ - 1);
    return cy * grid_n_ + cx;
}

std::optional<SurfacePoint> DiskLocator::locate(Complex z) const {
    const auto& cand = cells_[cell_index(z.real(), z.imag())];
    const double tol = -1e-12;
    for (int t : cand) {
        const auto& f = faces_[t];
        Complex a = coords_[f[0]], b = coords_[f[1]], c = coords_[f[2]];
        double area = triangle_area_2d(a, b, c);
        if (area <= 0.0) continue;
        double b0 = triangle_area_2d(z, b, c) / area;
        double b1 = triangle_area_2d(a, z, c) / area;
        double b2 = triangle_area_2d(a, b, z) / area;
        if (b0 >= tol && b1 >= tol && b2 >= tol) {
            double s = b0 + b1 + b2;
            SurfacePoint p;
            p.face = t;
            p.bary = {std::max(0.0, b0 / s), std::max(0.0, b1 / s), std::max(0.0, b2 / s)};
            double ss = p.bary[0] + p.bary[1] + p.bary[2];
            for (auto& v : p.bary) v /= ss;
            return p;
        }
    }
    return std::nullopt;
}

SurfacePoint DiskLocator::locate_clamped(Complex z) const {
    if (auto hit = locate(z)) return *hit;
    // nearest point on the triangulation, searched over expanding grid rings
    SurfacePoint best;
    double best_d2 = std::numeric_limits<double>::infinity();
    const double x = z.real(), y = z.imag();
    auto visit = [&](int t) {
        const auto& f = faces_[t];
        Complex a = coords_[f[0]], b = coords_[f[1]], c = coords_[f[2]];
        Complex ab = b - a, ac = c - a, ap = Complex(x, y) - a;
        double d00 = std::norm(ab), d11 = std::norm(ac);
        double d01 = ab.real() * ac.real() + ab.imag() * ac.imag();
        double d20 = ap.real() * ab.real() + ap.imag() * ab.imag();
        double d21 = ap.real() * ac.real() + ap.imag() * ac.imag();
        double denom = d00 * d11 - d01 * d01;
        double v = 0.0, w = 0.0;
        if (denom > 0.0) {
            v = (d11 * d20 - d01 * d21) / denom;
            w = (d00 * d21 - d01 * d20) / denom;
        }
        v = std::clamp(v, 0.0, 1.0);
        w = std::clamp(w, 0.0, 1.0);
        if (v + w > 1.0) {
            double s = v + w;
            v /= s;
            w /= s;
        }
        Complex q = a + v * ab + w * ac;
        double d2 = std::norm(q - Complex(x, y));
        if (d2 < best_d2) {
            best_d2 = d2;
            best.face = t;
            best.bary = {1.0 - v - w, v, w};
        }
    };
    int cx = std::clamp(static_cast<int>((x + 1.0) / cell_), 0, grid_n_ - 1);
    int cy = std::clamp(static_cast<int>((y + 1.0) / cell_), 0, grid_n_ - 1);
    for (int ring = 0; ring < 2 * grid_n_; ++ring) {
        for (int dy = -ring; dy <= ring; ++dy) {
            int gy = cy + dy;
            if (gy < 0 || gy >= grid_n_) continue;
            int step = (std::abs(dy) == ring) ? 1 : 2 * ring;
            for (int dx = -ring; dx <= ring; dx += step) {
                int gx = cx + dx;
                if (gx < 0 || gx >= grid_n_) continue;
                for (int t : cells_[static_cast<std::size_t>(gy) * grid_n_ + gx]) visit(t);
            }
        }
        // cells beyond this ring hold faces at least ring*cell away
        double reach = ring * cell_;
        if (best.face >= 0 && best_d2 <= reach * reach) break;
    }
    return best;
}

double DiskLocator::interpolate(std::span<const double> vertex_values, Complex z,
                                double outside_value) const {
    auto hit = locate(z);
    if (!hit) return outside_value;
    const auto& f = faces_[hit->face];
    return hit->bary[0] * vertex_values[f[0]] + hit->bary[1] * vertex_values[f[1]] +
           hit->bary[2] * vertex_values[f[2]];
}

} // namespace surfdist
