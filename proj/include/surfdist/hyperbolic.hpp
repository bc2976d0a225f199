#pragma once
#include <complex>
#include <vector>

namespace surfdist {

using Complex = std::complex<double>;

// Disk-preserving Mobius transformation m(z) = e^{i theta} (z - alpha) / (1 - z conj(alpha)),
// theta in [0, 2pi), |alpha| < 1. Maps the open unit disk bijectively onto
// itself and the unit circle onto itself.
struct MobiusTransform {
    double theta = 0.0;
    Complex alpha{0.0, 0.0};

    [[nodiscard]] static MobiusTransform identity() { return {}; }
    [[nodiscard]] bool is_identity(double tol = 0.0) const;
};

[[nodiscard]] Complex mobius_apply(const MobiusTransform& m, Complex z);

// |m'(z)|^2, the planar area scale of the map at z.
[[nodiscard]] double mobius_jacobian(const MobiusTransform& m, Complex z);

// Canonical (theta, alpha) parameters of m2 after m1 (closed under the group).
[[nodiscard]] MobiusTransform mobius_compose(const MobiusTransform& m2, const MobiusTransform& m1);

[[nodiscard]] MobiusTransform mobius_inverse(const MobiusTransform& m);

// Geodesic distance in the Poincare disk, d(0,z) = ln[(1+|z|)/(1-|z|)].
// Requires |z|, |z'| < 1.
[[nodiscard]] double hyperbolic_distance(Complex z, Complex zp);

// The one-parameter family of disk Mobius maps sending z to z':
// (translate z' from origin) o (rotate by theta) o (translate z to origin).
// Sweeping theta over [0, 2pi) enumerates the whole constrained family.
[[nodiscard]] MobiusTransform mobius_family_fixing(Complex z, Complex zp, double theta);

// Quadrature node for integration against the hyperbolic measure
// d eta = (1 - |z|^2)^{-2} dx dy.
struct QuadSample {
    Complex point;
    double weight; // eta-measure of the node's cell
};

struct NeighborhoodGrid {
    int radial = 16;
    int angular = 32;
};

// Polar quadrature grid covering the hyperbolic ball N(z, R), transported
// from the fixed grid in N(0, R) by a Mobius map taking 0 to z. Cell
// weights are exact eta-areas, so integrating a constant recovers the
// eta-area of N(0, R) exactly; eta-invariance makes them transferable.
[[nodiscard]] std::vector<QuadSample> neighborhood_samples(Complex z, double R,
                                                           NeighborhoodGrid grid = {});

// Euclidean radius of N(0, R): ln((1+r)/(1-r)) = R.
[[nodiscard]] double euclidean_radius(double R);

// eta-area of N(0, R).
[[nodiscard]] double hyperbolic_ball_area(double R);

struct FlatMap;

// Per-vertex weights under d eta: planar quadrature weight / (1-|z|^2)^2,
// zero on boundary vertices where the measure diverges.
[[nodiscard]] std::vector<double> hyperbolic_vertex_measure(const FlatMap& flat);

} // namespace surfdist
