#include "corrpose/losses.hpp"

#include <algorithm>
#include <cmath>

namespace corrpose {

namespace {
constexpr double kBceClamp = 1e-7;
}

LossBreakdown coarse_loss(const ClassTensor& c, const OffsetTensor& u, const CellLabels& gt) {
    if (c.grid != u.grid || c.grid != gt.grid)
        throw ShapeError("coarse_loss: grid size mismatch");
    const int g = c.grid;
    LossBreakdown out;
    double ce = 0.0, reg = 0.0;
    int cells = 0, matched = 0;
    for (int y = 0; y < g; ++y) {
        for (int x = 0; x < g; ++x) {
            int label = gt.cls_at(x, y);
            if (label < 0 || label >= c.classes())
                throw ShapeError("coarse_loss: class label out of range");
            double p = std::max(c.cell(x, y)[label], kBceClamp);
            ce += -std::log(p);
            ++cells;
            if (label != gt.no_match_class()) {
                Vec2 d = u.at(x, y) - gt.offset_at(x, y);
                reg += std::abs(d.x()) + std::abs(d.y());
                ++matched;
            }
        }
    }
    out.l_cls = ce / double(cells);
    out.l_reg = matched > 0 ? reg / double(matched) : 0.0;
    out.l_coarse = out.l_cls + kCoarseRegWeight * out.l_reg;
    return out;
}

double flow_nll(const FlowField& f, const std::vector<Vec2>& gt_flow,
                const std::vector<bool>& mask) {
    return flow_nll_with_grad(f, gt_flow, mask).value;
}

FlowNllGrad flow_nll_with_grad(const FlowField& f, const std::vector<Vec2>& gt_flow,
                               const std::vector<bool>& mask) {
    size_t n = f.pixel_count();
    if (gt_flow.size() != n || mask.size() != n)
        throw ShapeError("flow_nll: field size mismatch");
    FlowNllGrad out;
    out.d_mu.assign(n, Vec2::Zero());
    out.d_b.assign(n, 0.0);
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        if (!(f.b[i] > 0.0)) throw Error("flow_nll: nonpositive scale inside mask");
        ++count;
    }
    if (count == 0) throw EmptyInputError("flow_nll: empty mask");
    const double inv = 1.0 / double(count);
    for (size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        Vec2 d = f.mu[i] - gt_flow[i];
        double l1 = std::abs(d.x()) + std::abs(d.y());
        sum += l1 / f.b[i] + 2.0 * std::log(f.b[i]);
        out.d_mu[i] = Vec2{d.x() > 0 ? 1.0 : (d.x() < 0 ? -1.0 : 0.0),
                           d.y() > 0 ? 1.0 : (d.y() < 0 ? -1.0 : 0.0)} *
                      (inv / f.b[i]);
        out.d_b[i] = inv * (-l1 / (f.b[i] * f.b[i]) + 2.0 / f.b[i]);
    }
    out.value = sum * inv;
    return out;
}

double certainty_bce(const std::vector<Vec2>& flow, const std::vector<double>& certainty,
                     int width, int height, const std::vector<bool>& gt_mask_q,
                     const std::vector<bool>& render_mask) {
    size_t n = size_t(width) * height;
    if (flow.size() != n || certainty.size() != n || gt_mask_q.size() != n ||
        render_mask.size() != n)
        throw ShapeError("certainty_bce: plane size mismatch");
    double sum = 0.0;
    size_t count = 0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            size_t i = size_t(y) * width + x;
            if (!render_mask[i]) continue;
            Vec2 target = Vec2{x + 0.5, y + 0.5} + flow[i];
            int tx = int(std::floor(target.x()));
            int ty = int(std::floor(target.y()));
            bool label = tx >= 0 && tx < width && ty >= 0 && ty < height &&
                         gt_mask_q[size_t(ty) * width + tx];
            double p = std::clamp(certainty[i], kBceClamp, 1.0 - kBceClamp);
            sum += label ? -std::log(p) : -std::log(1.0 - p);
            ++count;
        }
    }
    if (count == 0) throw EmptyInputError("certainty_bce: empty render mask");
    return sum / double(count);
}

namespace {

double mean_l1_distance(const Pose& a, const Pose& b, const PointSet& pts) {
    double sum = 0.0;
    for (const Vec3& p : pts.points) sum += (a.apply(p) - b.apply(p)).cwiseAbs().sum();
    return sum / double(pts.points.size());
}

}  // namespace

double pose_loss(const Pose& p, const Pose& gt, const PointSet& pts) {
    if (pts.points.empty()) throw EmptyInputError("pose_loss: empty point set");
    Pose rot_only = gt;      // predicted R, ground-truth t
    rot_only.rotation = p.rotation;
    Pose xy_only = gt;       // predicted (tx, ty), ground-truth R and tz
    xy_only.translation.x() = p.translation.x();
    xy_only.translation.y() = p.translation.y();
    Pose z_only = gt;        // predicted tz, rest ground truth
    z_only.translation.z() = p.translation.z();
    return mean_l1_distance(rot_only, gt, pts) + mean_l1_distance(xy_only, gt, pts) +
           mean_l1_distance(z_only, gt, pts);
}

double refiner_loss(double l_flow, double l_cert, double l_pose) {
    return l_flow + kRefinerCertWeight * l_cert + kRefinerPoseWeight * l_pose;
}

bool selection_label(const Pose& p, const Pose& gt) {
    Vec3 dt = p.translation - gt.translation;
    if (std::abs(dt.x()) > 0.01 || std::abs(dt.y()) > 0.01 || std::abs(dt.z()) > 0.05)
        return false;
    return rotation_geodesic_angle(p.rotation, gt.rotation) <= 5.0 * M_PI / 180.0;
}

}  // namespace corrpose
