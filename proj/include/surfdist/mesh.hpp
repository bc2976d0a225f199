#pragma once
#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surfdist/errors.hpp"

namespace surfdist {

using Vec3 = Eigen::Vector3d;

// Embedded triangulated surface with disk topology. Vertices are 3D
// positions in arbitrary length units; faces are counterclockwise-oriented
// vertex-index triples. Immutable by convention once validated.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::string specimen_id;

    [[nodiscard]] int vertex_count() const { return static_cast<int>(vertices.size()); }
    [[nodiscard]] int face_count() const { return static_cast<int>(faces.size()); }

    [[nodiscard]] double face_area(int f) const;
    [[nodiscard]] double total_area() const;
    [[nodiscard]] double bbox_diagonal() const;
};

// Diagnostic produced by validate_disk_topology. `pass` is true iff the
// mesh is an oriented manifold with exactly one boundary loop, Euler
// characteristic 1, strictly positive face areas and no duplicate vertices.
struct TopologyReport {
    int vertex_count = 0;
    int edge_count = 0;
    int face_count = 0;
    int boundary_loop_count = 0;
    int euler_characteristic = 0;
    bool manifold = false;
    bool oriented = false;
    bool positive_face_areas = false;
    bool no_duplicate_vertices = false;
    bool single_boundary_loop = false;
    bool pass = false;
    std::string detail; // first failure, empty when pass
};

[[nodiscard]] TopologyReport validate_disk_topology(const TriMesh& mesh);

// Throws TopologyError / GeometryError when the report does not pass.
void require_disk_topology(const TriMesh& mesh);

enum class MeshFormat { off, ply };

// Parses an OFF or PLY stream (ASCII; PLY also binary little-endian)
// without topology checks — for diagnostics that want a report rather
// than an exception. Throws ParseError only.
[[nodiscard]] TriMesh parse_mesh(std::istream& in, MeshFormat format, std::string specimen_id = "");
[[nodiscard]] TriMesh parse_mesh_file(const std::filesystem::path& path, std::string specimen_id = "");

// parse_mesh plus disk-topology validation. Throws ParseError /
// TopologyError / GeometryError.
[[nodiscard]] TriMesh load_mesh(std::istream& in, MeshFormat format, std::string specimen_id = "");

// Dispatches on file extension (.off / .ply).
[[nodiscard]] TriMesh load_mesh_file(const std::filesystem::path& path, std::string specimen_id = "");

// ASCII writers; coordinates printed with 17 significant digits so a
// load -> save -> load round trip is bit-exact.
void save_off(const TriMesh& mesh, std::ostream& out);
void save_ply(const TriMesh& mesh, std::ostream& out, bool binary = false);
void save_mesh_file(const TriMesh& mesh, const std::filesystem::path& path);

// Barycentric-lumped vertex areas: one third of each incident face area.
[[nodiscard]] std::vector<double> vertex_areas(const TriMesh& mesh);

// Area-weighted centroid of the surface (integral of x over dA / area).
[[nodiscard]] Vec3 area_centroid(const TriMesh& mesh);

// Centers the mesh at its area-weighted centroid and scales it to unit
// total surface area. Idempotent; throws GeometryError on zero area.
[[nodiscard]] TriMesh normalize_mesh(const TriMesh& mesh);

// A point on the surface: face index plus barycentric coordinates
// (nonnegative, summing to 1).
struct SurfacePoint {
    int face = -1;
    std::array<double, 3> bary{0.0, 0.0, 0.0};
};

[[nodiscard]] Vec3 surface_point_position(const TriMesh& mesh, const SurfacePoint& p);

// Closest point on the surface to an arbitrary 3D point (exhaustive
// face search).
[[nodiscard]] SurfacePoint snap_to_surface(const TriMesh& mesh, const Vec3& point);

// Named surface point; landmarks are stored intrinsically so they compose
// cleanly under correspondence maps.
struct Landmark {
    std::string label;
    int face = -1;
    std::array<double, 3> bary{0.0, 0.0, 0.0};
};

struct LandmarkSet {
    std::vector<Landmark> entries;
};

[[nodiscard]] Vec3 landmark_to_point(const TriMesh& mesh, const Landmark& lm);

// CSV with header `label,face,b0,b1,b2`, or `label,x,y,z` in which case
// each point is snapped to the nearest surface point of `mesh`.
[[nodiscard]] LandmarkSet load_landmarks(std::istream& in, const TriMesh& mesh);
void save_landmarks(const LandmarkSet& set, std::ostream& out);

// Boundary vertices in counterclockwise loop order, starting at the
// smallest-index boundary vertex. Requires valid disk topology.
[[nodiscard]] std::vector<int> boundary_loop(const TriMesh& mesh);

// Single-source-set shortest path distances along mesh edges (graph
// geodesics, the surface-metric approximation used for sampling).
[[nodiscard]] std::vector<double> graph_geodesics(const TriMesh& mesh, std::span<const int> sources);

} // namespace surfdist
