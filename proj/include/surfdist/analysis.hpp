#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surfdist/distances.hpp"
#include "surfdist/mesh.hpp"

namespace surfdist {

// Symmetric nonnegative distance matrix with labeled rows/columns. Raw
// asymmetry of the input is recorded, then averaged away.
struct DistanceMatrix {
    std::vector<std::string> ids;
    Eigen::MatrixXd values;
    std::string metric; // cP | cWn | cW | ODLP
    double max_asymmetry = 0.0;
    bool complete = true;
    std::vector<std::string> failures; // "idA|idB: message" per failed pair

    int size() const { return static_cast<int>(ids.size()); }
};

DistanceMatrix make_distance_matrix(std::vector<std::string> ids, const Eigen::MatrixXd& raw,
                                    std::string metric);

// CSV layout: cell (0,0) holds the metric tag, first row and column the ids.
void save_matrix_csv(const DistanceMatrix& dm, std::ostream& out);
DistanceMatrix load_matrix_csv(std::istream& in);

// Deterministic parallel pair driver: metric_fn(i, j) is evaluated once per
// unordered pair (i < j) into a fixed slot, so any job count yields the same
// matrix. Per-pair failures are recorded and leave the matrix incomplete.
DistanceMatrix pairwise_matrix(const std::vector<std::string>& ids,
                               const std::function<double(int, int)>& metric_fn,
                               const std::string& metric_tag, int jobs = 1);

struct MantelResult {
    double r = 0.0;
    double significance = 1.0;
};

// Pearson correlation of strict-upper-triangle entries; one-sided permutation
// significance (1 + #{r_perm >= r}) / (permutations + 1), permuting rows and
// columns of D2 jointly. Matrices are aligned by id first.
MantelResult mantel(const DistanceMatrix& D1, const DistanceMatrix& D2, int permutations = 10000,
                    std::uint64_t seed = 0);

// The exact joint-permutation stream mantel consumes (for mirrored-scheme
// verification).
std::vector<std::vector<int>> mantel_permutation_stream(int n, int count, std::uint64_t seed);

struct ClassificationReport {
    double success_rate = 0.0; // percent
    std::vector<int> nearest;
    std::vector<std::string> assigned;
    std::vector<std::string> actual;
    std::map<std::string, std::map<std::string, int>> confusion; // actual -> assigned -> count
};

// Leave-one-out nearest-neighbor classification; ties by smallest index.
ClassificationReport loo_classify(const DistanceMatrix& D, const std::vector<std::string>& labels);

struct PropagationResult {
    LandmarkSet landmarks;
    std::vector<char> degenerate; // per landmark: image triangle collapsed
};

// Push landmarks through a piecewise-linear correspondence: interpolate the
// per-vertex images with the landmark's barycentric weights, then re-express
// the point on the target surface.
PropagationResult propagate_landmarks(const CorrespondenceMap& map, const LandmarkSet& landmarks,
                                      const TriMesh& source_mesh, const TriMesh& target_mesh);

// Left-to-right composition along a chain of maps; meshes holds the n+1
// surfaces the n maps connect.
PropagationResult propagate_along_path(std::span<const CorrespondenceMap> maps,
                                       const LandmarkSet& landmarks,
                                       std::span<const TriMesh> meshes);

// Fiedler-vector ordering of the Gaussian-affinity graph Laplacian; sign
// fixed so the first specimen's coordinate is nonpositive.
std::vector<int> seriate(const DistanceMatrix& D);

// Binary P6 pixmap, one pixel per cell in the given order: strict upper
// triangle from `upper`, strict lower from `lower`, diagonal deep blue;
// each triangle linearly scaled to its own maximum.
void heatmap_export(const DistanceMatrix& upper, const DistanceMatrix& lower,
                    const std::vector<int>& order, std::ostream& out);
void heatmap_export(const DistanceMatrix& upper, const DistanceMatrix& lower,
                    const std::vector<int>& order, const std::string& path);

} // namespace surfdist
