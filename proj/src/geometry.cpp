#include "corrpose/geometry.hpp"

#include <cmath>

namespace corrpose {

namespace {
constexpr double kMinDepth = 1e-9;
}

bool Pose::is_rigid(double tol) const {
    Mat3 rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
}

double DepthMap::sample(const Vec2& px) const {
    int ix = int(std::floor(px.x()));
    int iy = int(std::floor(px.y()));
    if (!in_bounds(ix, iy))
        throw OutOfBoundsError("depth lookup outside image: (" + std::to_string(px.x()) + ", " +
                               std::to_string(px.y()) + ")");
    return at(ix, iy);
}

Vec2 project_point(const Pose& pose, const Intrinsics& k, const Vec3& p, int index) {
    Vec3 q = pose.apply(p);
    if (q.z() <= kMinDepth) throw BehindCameraError(index);
    return {k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
}

std::vector<Vec2> project(const Pose& pose, const Intrinsics& k, const PointSet& pts) {
    std::vector<Vec2> out;
    out.reserve(pts.points.size());
    for (size_t i = 0; i < pts.points.size(); ++i)
        out.push_back(project_point(pose, k, pts.points[i], int(i)));
    return out;
}

Vec3 backproject(const Pose& pose, const Intrinsics& k, const DepthMap& depth, const Vec2& pixel) {
    double d = depth.sample(pixel);
    if (d <= 0.0)
        throw ZeroDepthError("no surface at pixel (" + std::to_string(pixel.x()) + ", " +
                             std::to_string(pixel.y()) + ")");
    return backproject_at_depth(pose, k, pixel, d);
}

Vec3 backproject_at_depth(const Pose& pose, const Intrinsics& k, const Vec2& pixel,
                          double depth) {
    Vec3 cam{(pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth};
    return pose.rotation.transpose() * (cam - pose.translation);
}

double surface_depth_at(const DepthMap& depth, const Vec2& px) {
    int cx = int(std::floor(px.x()));
    int cy = int(std::floor(px.y()));
    if (!depth.in_bounds(cx, cy))
        throw OutOfBoundsError("surface lookup outside image: (" + std::to_string(px.x()) +
                               ", " + std::to_string(px.y()) + ")");
    double dc = depth.at(cx, cy);
    if (dc <= 0.0) return 0.0;
    double izc = 1.0 / dc;
    auto grad = [&](int dx, int dy) {
        double fwd = std::numeric_limits<double>::quiet_NaN();
        double bwd = std::numeric_limits<double>::quiet_NaN();
        if (depth.in_bounds(cx + dx, cy + dy) && depth.at(cx + dx, cy + dy) > 0.0)
            fwd = 1.0 / depth.at(cx + dx, cy + dy) - izc;
        if (depth.in_bounds(cx - dx, cy - dy) && depth.at(cx - dx, cy - dy) > 0.0)
            bwd = izc - 1.0 / depth.at(cx - dx, cy - dy);
        if (std::isnan(fwd) && std::isnan(bwd)) return 0.0;
        if (std::isnan(fwd)) return bwd;
        if (std::isnan(bwd)) return fwd;
        // The smaller slope is the one less likely to straddle a silhouette.
        return std::abs(fwd) < std::abs(bwd) ? fwd : bwd;
    };
    double iz = izc + grad(1, 0) * (px.x() - (cx + 0.5)) + grad(0, 1) * (px.y() - (cy + 0.5));
    if (!(iz > 0.0)) return dc;
    return 1.0 / iz;
}

Pose kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
            const std::vector<double>& weights) {
    if (src.size() != dst.size()) throw ShapeError("kabsch: src/dst size mismatch");
    if (!weights.empty() && weights.size() != src.size())
        throw ShapeError("kabsch: weight count mismatch");
    if (src.size() < 3) throw InsufficientSupportError("kabsch: need at least 3 points");

    double wsum = 0.0;
    Vec3 src_mean = Vec3::Zero();
    Vec3 dst_mean = Vec3::Zero();
    for (size_t i = 0; i < src.size(); ++i) {
        double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0.0) throw Error("kabsch: negative weight");
        wsum += w;
        src_mean += w * src[i];
        dst_mean += w * dst[i];
    }
    if (wsum <= 0.0) throw InsufficientSupportError("kabsch: all weights zero");
    src_mean /= wsum;
    dst_mean /= wsum;

    Mat3 h = Mat3::Zero();
    for (size_t i = 0; i < src.size(); ++i) {
        double w = weights.empty() ? 1.0 : weights[i];
        h += w * (src[i] - src_mean) * (dst[i] - dst_mean).transpose();
    }

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3& sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(1) <= 1e-9 * sv(0))
        throw DegenerateError("kabsch: cross-covariance rank < 2 (collinear points?)");

    Vec3 s = Vec3::Ones();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) s(2) = -1.0;
    Pose out;
    out.rotation = svd.matrixV() * s.asDiagonal() * svd.matrixU().transpose();
    out.translation = dst_mean - out.rotation * src_mean;
    return out;
}

Pose kabsch(const PointSet& src, const PointSet& dst) {
    const std::vector<double>& w = src.weights.empty() ? dst.weights : src.weights;
    return kabsch(src.points, dst.points, w);
}

Mat3 rotation_exp(const Vec3& w) {
    double theta = w.norm();
    Mat3 wx;
    wx << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    if (theta < 1e-12) return Mat3::Identity() + wx + 0.5 * wx * wx;
    double a = std::sin(theta) / theta;
    double b = (1.0 - std::cos(theta)) / (theta * theta);
    return Mat3::Identity() + a * wx + b * wx * wx;
}

Vec3 rotation_log(const Mat3& r) {
    double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    double theta = std::acos(c);
    Vec3 axis{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
    if (theta < 1e-7) return 0.5 * axis;  // r ≈ I + [w]x
    if (theta > M_PI - 1e-5) {
        // Near pi the skew part vanishes; recover the axis from R + I.
        Mat3 m = r + Mat3::Identity();
        int col = 0;
        m.colwise().norm().maxCoeff(&col);
        Vec3 v = m.col(col).normalized();
        // Sign is chosen to stay consistent with the skew part where nonzero.
        if (axis.dot(v) < 0.0) v = -v;
        return theta * v;
    }
    return theta / (2.0 * std::sin(theta)) * axis;
}

double rotation_geodesic_angle(const Mat3& a, const Mat3& b) {
    Mat3 r = a.transpose() * b;
    // atan2 form: well conditioned near 0, unlike acos of the trace.
    Vec3 axis{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
    double s = 0.5 * axis.norm();
    double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::atan2(s, c);
}

double symmetry_aware_rotation_error(const Pose& p, const Pose& gt,
                                     const std::vector<Pose>& symmetries) {
    if (symmetries.empty()) return rotation_geodesic_angle(p.rotation, gt.rotation);
    double best = std::numeric_limits<double>::infinity();
    for (const Pose& s : symmetries) {
        Pose q = gt.compose(s);
        best = std::min(best, rotation_geodesic_angle(p.rotation, q.rotation));
    }
    return best;
}

}  // namespace corrpose
