#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surfdist/flatten.hpp"
#include "surfdist/hyperbolic.hpp"
#include "surfdist/mesh.hpp"
#include "surfdist/transport.hpp"

namespace surfdist {

// Farthest-point sample of a flattened surface. weight holds the f̂·dη mass
// of each site (equivalently its interior surface vertex area), renormalized
// to sum to 1; boundary sites carry weight 0.
struct SampleSet {
    std::vector<int> vertices;
    std::vector<Complex> points;
    std::vector<double> weight;
    std::vector<double> f;
    std::vector<double> fhat;

    int size() const { return static_cast<int>(vertices.size()); }
};

// Farthest-point sampling in the surface (graph geodesic) metric, seeded at
// the maximum-f̂ vertex; ties by smallest vertex index.
SampleSet sample_surface(const FlatMap& flat, const TriMesh& mesh, int n);

// Product grid over the Möbius group used by the cW search: alpha = 0 plus
// alpha_radial rings of alpha_angular directions up to |alpha| = alpha_max,
// crossed with theta rotations. Doubling any count yields a nested superset.
struct MobiusGrid {
    int alpha_angular = 16;
    int alpha_radial = 5;
    int theta = 16;
    double alpha_max = 0.6;

    std::vector<MobiusTransform> enumerate() const;
};

// Conformal Wasserstein distance: min over the Möbius grid of the Kantorovich
// cost between the pushed-forward source masses and the target masses under
// hyperbolic ground cost. An upper bound of the continuous infimum.
double cw_distance(const SampleSet& samplesA, const SampleSet& samplesB, const MobiusGrid& grid);

struct NeighborhoodSpec {
    double R = 0.5;
    NeighborhoodGrid quad;
    int rotations = 64;
};

// Neighborhood dissimilarity: min over the rotation grid of
// integral over N(zA,R) of |f̂_A - f̂_B after the zA->zB Möbius| dη.
double cwn_cost(Complex zA, Complex zB, const FlatMap& flatA, const FlatMap& flatB,
                const NeighborhoodSpec& spec = {});

struct CwnResult {
    double value = 0.0;
    TransportPlan plan;
};

// Conformal Wasserstein neighborhood dissimilarity distance: one Kantorovich
// solve over the n x n cwn_cost matrix with f̂·dη marginals.
CwnResult cwn_distance(const FlatMap& flatA, const FlatMap& flatB, const SampleSet& samplesA,
                       const SampleSet& samplesB, const NeighborhoodSpec& spec = {});

struct Peak {
    Complex location;
    double fhat = 0.0;
    double prominence = 0.0;
    int vertex = -1;
};

// Interior vertices that are k-ring local maxima of f̂ with topographic
// prominence strictly above the threshold, sorted by f̂ descending.
std::vector<Peak> detect_peaks(const FlatMap& flat, int ring = 2, double min_prominence = 0.0);

struct RigidMotion {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
    static RigidMotion identity() { return {}; }
};

struct AlignResult {
    RigidMotion motion;
    double residual = 0.0; // sqrt(sum_i w_i |R x_i + t - y_i|^2)
};

// Weighted least-squares rigid registration (closed form via SVD of the
// cross-covariance). Proper rotations only unless allow_reflection.
AlignResult rigid_align(std::span<const Vec3> source, std::span<const Vec3> target,
                        std::span<const double> weights, bool allow_reflection = false);

// d_P: rigid_align residual with unit weights, landmarks matched by order.
double discrete_procrustes(std::span<const Vec3> X, std::span<const Vec3> Y);

// Smooth disk self-map: identity plus a radial-basis displacement pinned at
// matched peak pairs, tapered to zero on the boundary circle, scaled down if
// needed to stay injective.
struct DiskDeformation {
    std::vector<Complex> centers;
    std::vector<Complex> coeffs;
    double bandwidth = 0.3;

    Complex operator()(Complex z) const;
    bool is_identity() const { return centers.empty(); }
};

DiskDeformation align_peak_deformation(std::span<const Complex> moved_source_peaks,
                                       std::span<const Complex> target_peaks,
                                       double bandwidth = 0.3);

struct AreaCorrectionOptions {
    double tol = 0.05;
    int max_iterations = 100;
};

struct AreaCorrectionResult {
    std::vector<Complex> disk_images;     // corrected images in the target disk
    std::vector<SurfacePoint> images;     // the same points on the target mesh
    double residual = 0.0;                // max over source faces of |area ratio - 1|
    int iterations = 0;
    bool converged = true;
};

// Local mass-diffusion correction nudging image points until the per-face
// pushed-area ratio is near 1. Residual is non-increasing; non-convergence is
// flagged, never thrown.
AreaCorrectionResult area_preserving_correction(std::vector<Complex> images,
                                                const TriMesh& source_mesh,
                                                const TriMesh& target_mesh,
                                                const FlatMap& target_flat,
                                                const AreaCorrectionOptions& options = {});

struct CorrespondenceMap {
    std::string source_id;
    std::string target_id;
    std::string method;                // "cP" or "cWn-argmax"
    std::vector<SurfacePoint> images;  // one per source vertex
    double residual = 0.0;             // area-distortion residual
    double distance = 0.0;
    RigidMotion motion;
    bool corrector_converged = true;
};

void save_correspondence_csv(const CorrespondenceMap& map, std::ostream& out);
CorrespondenceMap load_correspondence_csv(std::istream& in);

struct CpOptions {
    int samples = 256;
    int rotations = 64;
    int theta_refine = 16;       // local theta subdivisions around the sweep winner
    int max_peaks = 8;
    int peak_ring = 2;
    double peak_prominence = 0.05; // relative to the f̂ range
    double rbf_bandwidth = 0.3;
    bool allow_reflection = false;
    AreaCorrectionOptions correction;
    int jobs = 1;
};

struct CpResult {
    double value = 0.0;
    RigidMotion motion;
    CorrespondenceMap map;
};

// Continuous Procrustes distance: sweep peak pairs (plus the mass-centred
// configuration) x rotation grid, rank candidates on the sample quadrature by
// optimal rigid alignment, then push the leading finalists through rotation
// refinement and area-preserving correction, reporting the best corrected
// distance, motion, and full-vertex correspondence.
CpResult cp_distance(const TriMesh& meshA, const TriMesh& meshB, const FlatMap& flatA,
                     const FlatMap& flatB, const CpOptions& options = {});

// Sample-level argmax correspondence from a cWn plan, extended to all source
// vertices through their nearest sample site.
CorrespondenceMap cwn_correspondence(const CwnResult& result, const SampleSet& samplesA,
                                     const SampleSet& samplesB, const TriMesh& meshA,
                                     const FlatMap& flatA, const TriMesh& meshB,
                                     const FlatMap& flatB);

} // namespace surfdist
