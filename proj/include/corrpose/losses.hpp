#pragma once

#include <vector>

#include "corrpose/correspondence.hpp"
#include "corrpose/flow.hpp"
#include "corrpose/geometry.hpp"

namespace corrpose {

// Training-time objective values. All losses are means over their supports so
// values are comparable across image sizes.
struct LossBreakdown {
    double l_cls = 0.0;
    double l_reg = 0.0;
    double l_coarse = 0.0;   // l_cls + 2 * l_reg
    double l_flow = 0.0;
    double l_cert = 0.0;
    double l_pose = 0.0;
    double l_refiner = 0.0;  // l_flow + 5 * l_cert + 20 * l_pose
};

inline constexpr double kCoarseRegWeight = 2.0;
inline constexpr double kRefinerCertWeight = 5.0;
inline constexpr double kRefinerPoseWeight = 20.0;

// Cross-entropy over all cells plus L1 offset regression over matched cells.
LossBreakdown coarse_loss(const ClassTensor& c, const OffsetTensor& u, const CellLabels& gt);

// Laplace negative log-likelihood, mean over masked pixels:
// |mu - gt|_1 / b + 2 log b.
double flow_nll(const FlowField& f, const std::vector<Vec2>& gt_flow,
                const std::vector<bool>& mask);

// Same value plus analytic per-pixel gradients w.r.t. mu and b.
struct FlowNllGrad {
    double value = 0.0;
    std::vector<Vec2> d_mu;
    std::vector<double> d_b;
};
FlowNllGrad flow_nll_with_grad(const FlowField& f, const std::vector<Vec2>& gt_flow,
                               const std::vector<bool>& mask);

// Binary cross-entropy of the certainty map against labels derived from where
// the flow lands: 1 iff inside the query-image ground-truth mask (nearest
// pixel, out-of-frame = 0). Mean over the render mask.
double certainty_bce(const std::vector<Vec2>& flow, const std::vector<double>& certainty,
                     int width, int height, const std::vector<bool>& gt_mask_q,
                     const std::vector<bool>& render_mask);

// Disentangled point-matching pose loss: predicted rotation, xy-translation,
// and z-translation are substituted into the ground truth one group at a time;
// each term is the mean L1 distance between the transformed point sets.
double pose_loss(const Pose& p, const Pose& gt, const PointSet& pts);

double refiner_loss(double l_flow, double l_cert, double l_pose);

// Positive/negative label for selection training: translation within
// (0.01, 0.01, 0.05) m componentwise and geodesic rotation within 5 degrees.
bool selection_label(const Pose& p, const Pose& gt);

}  // namespace corrpose
