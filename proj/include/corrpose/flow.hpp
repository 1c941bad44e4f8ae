#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrpose/geometry.hpp"

namespace corrpose {

// Dense probabilistic flow over a rendered image: per-pixel Laplace mean mu
// and scale b, plus certainty (non-occlusion) and sensitivity (pose
// informativeness) maps in [0,1]. Row-major.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<Vec2> mu;
    std::vector<double> b;
    std::vector<double> certainty;
    std::vector<double> sensitivity;

    FlowField() = default;
    FlowField(int w, int h)
        : width(w),
          height(h),
          mu(size_t(w) * h, Vec2::Zero()),
          b(size_t(w) * h, 1.0),
          certainty(size_t(w) * h, 1.0),
          sensitivity(size_t(w) * h, 1.0) {}

    size_t pixel_count() const { return size_t(width) * height; }
    size_t index(int x, int y) const { return size_t(y) * width + x; }
    void validate() const;
};

// Probability that the true flow lies within L1 radius R of the mean:
// 1 - exp(-R/b). Strictly increasing in R, strictly decreasing in b.
double flow_probability(double b, double radius);

// Elementwise certainty * sensitivity * P_R.
std::vector<double> fuse_confidence(const FlowField& f, double radius);

struct RgbdConfig {
    double certainty_threshold = 0.5;
    double inlier_threshold_m = 0.005;
    int hypotheses = 128;
    uint64_t seed = 0;
};

// RGB-D pose path: 3D-3D correspondences from rendered pixels (backprojected
// under pose_init) to their flow targets lifted through the query depth map,
// filtered by certainty, then a robust MSAC-style Kabsch fit with an inlier
// refit. Deterministic given cfg.seed and invariant to pixel enumeration order.
Pose rgbd_pose(const FlowField& f, const DepthMap& depth_q, const DepthMap& depth_r,
               const Intrinsics& k, const Pose& pose_init, const RgbdConfig& cfg = {});

// Single file: u32 LE header length, JSON header {width, height, planes},
// then f32 planes in order mu_x, mu_y, b, certainty, sensitivity.
void save_flow(const FlowField& f, const std::string& path);
FlowField load_flow(const std::string& path);

}  // namespace corrpose
