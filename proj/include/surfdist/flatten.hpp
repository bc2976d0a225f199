#pragma once
#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surfdist/hyperbolic.hpp"
#include "surfdist/mesh.hpp"

namespace surfdist {

// Conformal flattening of a disk-type mesh to the unit disk.
//
// `factor` is the normalized conformal factor f (a probability density with
// respect to dx dy), `hyper_factor` is f_hat = (1-|z|^2)^2 f, the density
// with respect to the Mobius-invariant hyperbolic measure. `planar_weight`
// holds the per-vertex quadrature weights used for every integral over the
// disk; boundary vertices carry weight 0 so that sums of f dx dy and
// f_hat d eta agree exactly (the hyperbolic measure diverges on the circle).
struct FlatMap {
    std::vector<Complex> disk_coords;
    std::vector<double> factor;
    std::vector<double> hyper_factor;
    std::vector<double> planar_weight;
    std::vector<char> is_boundary;
    std::vector<std::array<int, 3>> faces; // flattened triangulation, same indexing as the mesh
    std::string source_id;
    int clamped_weight_count = 0; // cotangent weights clamped to 0 (mesh-quality diagnostic)

    [[nodiscard]] int vertex_count() const { return static_cast<int>(disk_coords.size()); }
};

struct FlattenOptions {
    double solver_tol = 1e-10;      // relative residual for the harmonic solve
    bool canonical_recentre = true; // move the f-weighted centroid to the origin
};

// Discrete harmonic map with cotangent weights (negative weights clamped
// to 0) and the boundary fixed to the unit circle by cumulative arc length,
// followed by canonical Mobius recentring. Throws SolverError on a singular
// system or flipped triangles.
[[nodiscard]] FlatMap flatten(const TriMesh& mesh, const FlattenOptions& options = {});

// Per-vertex area-distortion density of a given flattening, normalized so
// the discrete integral over the disk equals 1.
[[nodiscard]] std::vector<double> conformal_factor(const TriMesh& mesh,
                                                   const std::vector<Complex>& disk_coords);

// Push-forward of a FlatMap by a disk Mobius transformation. Coordinates
// move, densities divide by the Jacobian, quadrature weights multiply by
// it, so all discrete integrals and f_hat values are preserved exactly.
[[nodiscard]] FlatMap recentre(const FlatMap& flat, const MobiusTransform& m);

// Mean absolute corner-angle difference between the 3D mesh and its
// flattened triangulation (conformality diagnostic, radians).
[[nodiscard]] double mean_angle_distortion(const TriMesh& mesh,
                                           const std::vector<Complex>& disk_coords);

// CSV export: vertex,re,im,factor,hyper_factor.
void save_flatmap_csv(const FlatMap& flat, std::ostream& out);

// Point location and piecewise-linear interpolation on a flattened
// triangulation, with a uniform acceleration grid. Points outside the
// triangulated region interpolate to a caller-supplied outside value.
class DiskLocator {
public:
    explicit DiskLocator(const FlatMap& flat);
    DiskLocator(std::span<const std::array<int, 3>> faces, std::span<const Complex> coords);

    // Face + barycentric coordinates if the point lies in the triangulation.
    [[nodiscard]] std::optional<SurfacePoint> locate(Complex z) const;

    // Nearest point of the triangulation (clamps points that fall in the
    // sliver between the polygonal boundary and the unit circle).
    [[nodiscard]] SurfacePoint locate_clamped(Complex z) const;

    [[nodiscard]] double interpolate(std::span<const double> vertex_values, Complex z,
                                     double outside_value = 0.0) const;

private:
    std::vector<std::array<int, 3>> faces_;
    std::vector<Complex> coords_;
    int grid_n_ = 0;
    double cell_ = 0.0;
    std::vector<std::vector<int>> cells_;

    [[nodiscard]] int cell_index(double x, double y) const;
};

} // namespace surfdist
