#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "corrpose/geometry.hpp"

namespace corrpose {

// 2D-3D correspondences: model-frame points, their observed pixels, and an
// optional per-correspondence weight (empty = uniform).
struct Corr2D3D {
    std::vector<Vec3> points3d;
    std::vector<Vec2> points2d;
    std::vector<double> weights;

    size_t size() const { return points3d.size(); }
    void check() const {
        if (points3d.size() != points2d.size()) throw ShapeError("corr: 2d/3d size mismatch");
        if (!weights.empty() && weights.size() != points3d.size())
            throw ShapeError("corr: weight count mismatch");
    }
};

// EPnP (control-point formulation) followed by a Gauss-Newton reprojection
// polish. Handles planar point sets via a 3-control-point fallback. Needs at
// least 4 correspondences.
Pose epnp(const Corr2D3D& corr, const Intrinsics& k);

// Mean reprojection error of `pose` over the correspondences, pixels.
double mean_reprojection_error(const Corr2D3D& corr, const Intrinsics& k, const Pose& pose);

struct RansacConfig {
    int iterations = 256;
    double threshold_px = 2.0;
    uint64_t seed = 0;
};

struct RansacResult {
    Pose pose;
    std::vector<bool> inliers;
    int inlier_count = 0;
};

// Classic hypothesize-and-verify loop over EPnP minimal samples with a final
// weighted refit on the consensus set. Deterministic given cfg.seed. Throws
// NoConsensusError when the best hypothesis supports fewer than 4 inliers.
RansacResult ransac_pnp(const Corr2D3D& corr, const Intrinsics& k, const RansacConfig& cfg = {});

// Dense weighted reprojection refinement problem. `flow` holds the per-pixel
// target displacement Y and `confidence` the weight W, both row-major over the
// rendered image; pixels participate when confidence > 0 and depth_r > 0.
struct RefineProblem {
    Pose pose_init;
    int width = 0;
    int height = 0;
    std::vector<Vec2> flow;
    std::vector<double> confidence;
    DepthMap depth_r;
    Intrinsics k;

    size_t pixel_count() const { return size_t(width) * size_t(height); }
    void check() const;
};

struct RefineResult {
    Pose pose;
    // Objective value before LM and after each accepted LM step; the sequence
    // is non-increasing by construction and asserted by callers.
    std::vector<double> lm_objectives;
    int gn_iterations = 0;
    double final_objective = 0.0;
};

// Minimizes 1/2 sum |W(u,v) (pi(R x + t) - (center(u,v) + Y(u,v)))|^2 with the
// pixels' 3D points backprojected from depth_r under pose_init: three
// Levenberg-Marquardt iterations, then Gauss-Newton to convergence
// (step norm < 1e-10 or 10 iterations).
RefineResult refine_pose(const RefineProblem& p);

// Jacobians of the converged pose w.r.t. flow components and confidence
// weights. Pose perturbations live in the left-multiplied axis-angle +
// translation chart at the solution: pose(d) = (exp([d_r]x) R, t + d_t).
// Columns are indexed by row-major pixel; inactive pixels have zero columns.
struct PnPJacobians {
    Eigen::Matrix<double, 6, Eigen::Dynamic> d_pose_d_flow;    // 6 x 2*pixels
    Eigen::Matrix<double, 6, Eigen::Dynamic> d_pose_d_weight;  // 6 x pixels
};

// refine_pose followed by implicit differentiation of the stationarity
// condition of the weighted reprojection objective at the solution. Throws
// SingularSystemError when the system Hessian has condition number > 1e12.
std::pair<RefineResult, PnPJacobians> refine_pose_grad(const RefineProblem& p);

// Shared Gauss-Newton reprojection polish over explicit correspondences,
// used by epnp and the RANSAC refit.
Pose polish_reprojection(const Corr2D3D& corr, const Intrinsics& k, Pose pose, int max_iters = 15);

}  // namespace corrpose
