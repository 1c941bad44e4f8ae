#pragma once

#include <array>
#include <string>
#include <vector>

#include "corrpose/geometry.hpp"

namespace corrpose {

// Triangle mesh in the model frame, units are meters. `symmetries` lists the
// discrete symmetry transforms of the object and always includes identity.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    double diameter = 0.0;  // max pairwise vertex distance
    std::vector<Pose> symmetries{Pose::identity()};

    void validate() const;
    Vec3 centroid() const;
    double bounding_radius() const;  // max vertex distance from the origin
};

// Max pairwise vertex distance, exact (O(n^2) over at most 2000 farthest-point
// samples for large meshes).
double compute_diameter(const Mesh& mesh);

// Deterministic farthest-point subsample of the vertex set. Starts at vertex 0,
// ties broken by lowest index. Returns all vertices when count >= |V|.
std::vector<Vec3> farthest_point_sample(const std::vector<Vec3>& vertices, int count);

// Loaders. Format chosen by extension (.obj ascii v/f records, .ply binary
// little-endian). An optional JSON metadata file supplies "diameter_m" and
// "symmetries_discrete" (list of 4x4 row-major matrices). Diameter is computed
// from the vertices when metadata does not provide it.
Mesh load_mesh(const std::string& path, const std::string& metadata_path = "");
Mesh load_obj(const std::string& path);
Mesh load_ply(const std::string& path);
void apply_mesh_metadata(Mesh& mesh, const std::string& metadata_path);

// Built-in benchmark solids, centered on the origin.
Mesh make_cube(double edge = 0.1);
Mesh make_icosphere(int subdivisions = 3, double radius = 0.05);
Mesh make_l_bracket(double long_arm = 0.12, double short_arm = 0.08, double thickness = 0.03);

// The 24 rotations of the octahedral group, for cube metadata and tests.
std::vector<Pose> cube_rotational_symmetries();

// Lookup by name ("cube", "icosphere", "l_bracket") or filesystem path.
Mesh mesh_by_name(const std::string& name_or_path, const std::string& metadata_path = "");

}  // namespace corrpose
