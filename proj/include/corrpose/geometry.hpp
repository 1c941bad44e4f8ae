#pragma once

#include <Eigen/Dense>
#include <vector>

#include "corrpose/error.hpp"

namespace corrpose {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// Rigid transform mapping model-frame points into the camera frame.
// Rotations are stored as matrices throughout; quaternions appear only at
// serialization boundaries elsewhere.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return Pose{}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    Pose inverse() const {
        Pose out;
        out.rotation = rotation.transpose();
        out.translation = -(rotation.transpose() * translation);
        return out;
    }

    // this ∘ other: applies `other` first, then this.
    Pose compose(const Pose& other) const {
        Pose out;
        out.rotation = rotation * other.rotation;
        out.translation = rotation * other.translation + translation;
        return out;
    }

    // Orthonormal with det +1 within tol.
    bool is_rigid(double tol = 1e-9) const;
};

// Camera intrinsics of an ideal pinhole. Pixel origin is the top-left image
// corner; the center of pixel cell (i, j) is at coordinate (i + 0.5, j + 0.5).
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    Mat3 matrix() const {
        Mat3 k = Mat3::Identity();
        k(0, 0) = fx;
        k(1, 1) = fy;
        k(0, 2) = cx;
        k(1, 2) = cy;
        return k;
    }
};

// Per-pixel z-depth in meters, row-major, 0 = no surface.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    DepthMap() = default;
    DepthMap(int w, int h) : width(w), height(h), values(size_t(w) * size_t(h), 0.0) {}

    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    double at(int x, int y) const { return values[size_t(y) * width + x]; }
    double& at(int x, int y) { return values[size_t(y) * width + x]; }

    // Value of the pixel cell containing the (real-valued) coordinate.
    // Throws OutOfBoundsError for coordinates outside the image.
    double sample(const Vec2& px) const;

    bool contains(const Vec2& px) const {
        return px.x() >= 0.0 && px.x() < double(width) && px.y() >= 0.0 && px.y() < double(height);
    }
};

struct PointSet {
    std::vector<Vec3> points;
    std::vector<double> weights;  // empty = uniform

    size_t size() const { return points.size(); }
};

// Pinhole projection of a single camera- or model-frame point.
// `index` is reported in the BehindCameraError when z <= 1e-9.
Vec2 project_point(const Pose& pose, const Intrinsics& k, const Vec3& p, int index = -1);

std::vector<Vec2> project(const Pose& pose, const Intrinsics& k, const PointSet& pts);

// Inverse of projection through a depth map: returns the model-frame point on
// the ray through `pixel` at the depth stored in the pixel cell containing it.
Vec3 backproject(const Pose& pose, const Intrinsics& k, const DepthMap& depth, const Vec2& pixel);

// Same ray construction with an explicit depth value.
Vec3 backproject_at_depth(const Pose& pose, const Intrinsics& k, const Vec2& pixel, double depth);

// Depth of the rendered surface at a sub-pixel location, reconstructed by
// plane extrapolation of inverse depth from the containing cell (exact for
// planar faces; rasterized depth is stored at cell centers). Gradients come
// from the better-matching one-sided neighbor so silhouette cells stay sane.
// Returns 0 where the cell has no surface.
double surface_depth_at(const DepthMap& depth, const Vec2& px);

// Weighted least-squares rigid alignment: argmin_{R,t} sum_i w_i |dst_i - (R src_i + t)|^2
// with det(R) = +1 enforced. Throws DegenerateError when the weighted
// cross-covariance has rank < 2 (collinear or coincident points).
Pose kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
            const std::vector<double>& weights = {});
Pose kabsch(const PointSet& src, const PointSet& dst);

// Rotation helpers (axis-angle <-> matrix, geodesic metric).
Mat3 rotation_exp(const Vec3& axis_angle);
Vec3 rotation_log(const Mat3& r);
double rotation_geodesic_angle(const Mat3& a, const Mat3& b);

// Minimum geodesic angle between p and gt∘S over the listed symmetries.
double symmetry_aware_rotation_error(const Pose& p, const Pose& gt, const std::vector<Pose>& symmetries);

}  // namespace corrpose
