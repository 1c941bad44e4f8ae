#pragma once

#include <string>
#include <vector>

#include "corrpose/geometry.hpp"
#include "corrpose/mesh.hpp"

namespace corrpose {

// One of the 42 out-of-plane template viewpoints. `direction` is the unit
// vector from the model origin toward the camera; `camera_pose` maps model
// frame to camera frame and looks at the origin.
struct Viewpoint {
    Vec3 direction = Vec3::UnitZ();
    Pose camera_pose;
    double radius = 1.0;  // camera distance, meters
};

// Depth-and-mask render of the model from one viewpoint. The mask is depth > 0
// by construction.
struct Template {
    Viewpoint viewpoint;
    DepthMap depth;
    Intrinsics intrinsics;
    int size = 0;  // square image side, pixels

    bool mask(int x, int y) const { return depth.at(x, y) > 0.0; }
    int mask_count() const;
};

struct TemplateSet {
    std::vector<Template> templates;  // exactly 42
    std::string mesh_id;
};

struct TemplateConfig {
    int size = 224;            // grid width 14 at 16 px patches
    double fill_fraction = 0.9;  // projected object extent relative to the crop
    double focal_px = 0.0;     // 0 = use size (≈53° fov)
    std::string mesh_id = "object";
};

// Vertices of a once-subdivided icosahedron: 12 base vertices followed by the
// 30 normalized edge midpoints in (min,max)-index order. All unit length.
std::vector<Vec3> icosphere_viewpoints();

// Camera pose at distance `radius` along `direction`, looking at the origin.
// Up is world +y, or +x for the degenerate pole directions.
Pose look_at_origin(const Vec3& direction, double radius);

// Software z-buffer rasterization of the mesh: nearest-surface z-depth per
// pixel, 0 where no surface. Pixel centers at integer+0.5, top-left fill rule.
DepthMap render_depth(const Mesh& mesh, const Pose& pose, const Intrinsics& k, int width,
                      int height);
Template rasterize(const Mesh& mesh, const Pose& pose, const Intrinsics& k, int size);

// Distance at which a bounding sphere of `radius` fills `fill_fraction` of a
// square image of side `size` under focal length `focal`.
double camera_distance_for_fill(double radius, double focal, int size, double fill_fraction);

Intrinsics template_intrinsics(const TemplateConfig& cfg);

// One template per icosphere viewpoint, deterministic given cfg.
TemplateSet build_templates(const Mesh& mesh, const TemplateConfig& cfg = {});

// Directory layout: index.json plus one .depth raw file per template
// (header: width,height as u32 LE, then f32 row-major).
void save_templates(const TemplateSet& set, const std::string& dir);
TemplateSet load_templates(const std::string& dir);

void save_depth_raw(const DepthMap& depth, const std::string& path);
DepthMap load_depth_raw(const std::string& path);

}  // namespace corrpose
