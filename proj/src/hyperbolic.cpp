#include "surfdist/hyperbolic.hpp"

#include <cmath>
#include <numbers>

#include "surfdist/errors.hpp"
#include "surfdist/flatten.hpp"

namespace surfdist {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double wrap_angle(double theta) {
    theta = std::fmod(theta, two_pi);
    if (theta < 0.0) theta += two_pi;
    return theta;
}

} // namespace

bool MobiusTransform::is_identity(double tol) const {
    return std::abs(alpha) <= tol && (theta <= tol || two_pi - theta <= tol);
}

Complex mobius_apply(const MobiusTransform& m, Complex z) {
    return std::polar(1.0, m.theta) * (z - m.alpha) / (1.0 - z * std::conj(m.alpha));
}

double mobius_jacobian(const MobiusTransform& m, Complex z) {
    // |m'(z)| = (1 - |alpha|^2) / |1 - z conj(alpha)|^2
    double num = 1.0 - std::norm(m.alpha);
    double den = std::norm(1.0 - z * std::conj(m.alpha));
    double deriv = num / den;
    return deriv * deriv;
}

MobiusTransform mobius_compose(const MobiusTransform& m2, const MobiusTransform& m1) {
    // Substituting m1 into m2 gives e^{i theta2} (A z - B) / (C - D z) with
    // D = e^{i theta1} conj(B) and C = e^{i theta1} conj(A), so the canonical
    // parameters are alpha = B/A and phase = e^{i theta2} A / C.
    Complex e1 = std::polar(1.0, m1.theta);
    Complex A = e1 + m2.alpha * std::conj(m1.alpha);
    Complex B = e1 * m1.alpha + m2.alpha;
    Complex C = e1 * std::conj(A);
    Complex phase = std::polar(1.0, m2.theta) * A / C;

    MobiusTransform out;
    out.alpha = B / A;
    out.theta = wrap_angle(std::arg(phase));
    return out;
}

MobiusTransform mobius_inverse(const MobiusTransform& m) {
    MobiusTransform out;
    out.theta = wrap_angle(-m.theta);
    out.alpha = -std::polar(1.0, m.theta) * m.alpha;
    return out;
}

double hyperbolic_distance(Complex z, Complex zp) {
    if (std::abs(z) >= 1.0 || std::abs(zp) >= 1.0)
        throw GeometryError("hyperbolic distance requires points strictly inside the unit disk");
    double r = std::abs((zp - z) / (1.0 - std::conj(z) * zp));
    return std::log((1.0 + r) / (1.0 - r));
}

MobiusTransform mobius_family_fixing(Complex z, Complex zp, double theta) {
    MobiusTransform to_origin{0.0, z};           // z -> 0
    MobiusTransform rotate{wrap_angle(theta), Complex{0.0, 0.0}};
    MobiusTransform from_origin{0.0, -zp};       // 0 -> z'
    return mobius_compose(from_origin, mobius_compose(rotate, to_origin));
}

double euclidean_radius(double R) {
    return std::tanh(R / 2.0);
}

double hyperbolic_ball_area(double R) {
    // integral over |w| < tanh(R/2) of (1-|w|^2)^{-2} dx dy
    double s = std::sinh(R / 2.0);
    return std::numbers::pi * s * s;
}

std::vector<QuadSample> neighborhood_samples(Complex z, double R, NeighborhoodGrid grid) {
    if (!(R > 0.0)) throw GeometryError("neighborhood radius must be positive");
    if (std::abs(z) >= 1.0) throw GeometryError("neighborhood center must be inside the disk");
    const double r_max = euclidean_radius(R);
    MobiusTransform to_z = mobius_inverse(MobiusTransform{0.0, z}); // 0 -> z

    std::vector<QuadSample> out;
    out.reserve(static_cast<std::size_t>(grid.radial) * grid.angular);
    auto eta_disk = [](double rho) { return std::numbers::pi * rho * rho / (1.0 - rho * rho); };
    for (int k = 0; k < grid.radial; ++k) {
        double r0 = r_max * k / grid.radial;
        double r1 = r_max * (k + 1) / grid.radial;
        double ring_area = (eta_disk(r1) - eta_disk(r0)) / grid.angular;
        double rc = 0.5 * (r0 + r1);
        for (int l = 0; l < grid.angular; ++l) {
            double phi = two_pi * l / grid.angular;
            Complex node = std::polar(rc, phi);
            out.push_back({mobius_apply(to_z, node), ring_area});
        }
    }
    return out;
}

std::vector<double> hyperbolic_vertex_measure(const FlatMap& flat) {
    std::vector<double> weights(flat.disk_coords.size(), 0.0);
    for (std::size_t i = 0; i < flat.disk_coords.size(); ++i) {
        if (flat.is_boundary[i]) continue;
        double d = 1.0 - std::norm(flat.disk_coords[i]);
        weights[i] = flat.planar_weight[i] / (d * d);
    }
    return weights;
}

} // namespace surfdist
