#include <cmath>

#include "corrpose/pnp.hpp"

namespace corrpose {

namespace {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

struct ActivePixel {
    int pixel;     // row-major index into the field
    Vec3 point;    // model-frame point backprojected under pose_init
    Vec2 target;   // pixel center + flow
    double weight;
};

std::vector<ActivePixel> collect_active(const RefineProblem& p) {
    std::vector<ActivePixel> active;
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            size_t idx = size_t(y) * p.width + x;
            double w = p.confidence[idx];
            if (w <= 0.0) continue;
            if (p.depth_r.at(x, y) <= 0.0) continue;
            Vec2 center{x + 0.5, y + 0.5};
            ActivePixel a;
            a.pixel = int(idx);
            a.point = backproject(p.pose_init, p.k, p.depth_r, center);
            a.target = center + p.flow[idx];
            a.weight = w;
            if (!a.target.allFinite() || !std::isfinite(w))
                throw NonFiniteError("refine_pose: non-finite flow or confidence");
            active.push_back(a);
        }
    }
    return active;
}

double objective(const std::vector<ActivePixel>& active, const Intrinsics& k, const Pose& pose) {
    double f = 0.0;
    for (const ActivePixel& a : active) {
        Vec3 q = pose.apply(a.point);
        if (q.z() <= 1e-12) return std::numeric_limits<double>::infinity();
        Vec2 uv{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
        f += 0.5 * (a.weight * (uv - a.target)).squaredNorm();
    }
    if (!std::isfinite(f)) throw NonFiniteError("refine_pose: non-finite objective");
    return f;
}

// Gauss-Newton normal equations at `pose`. Returns false when a point falls
// behind the camera.
bool normal_equations(const std::vector<ActivePixel>& active, const Intrinsics& k,
                      const Pose& pose, Mat6& h, Vec6& g) {
    h.setZero();
    g.setZero();
    for (const ActivePixel& a : active) {
        Vec3 s = pose.rotation * a.point;
        Vec3 q = s + pose.translation;
        if (q.z() <= 1e-12) return false;
        Vec2 uv{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
        Vec2 e = uv - a.target;
        Eigen::Matrix<double, 2, 3> dpi;
        dpi << k.fx / q.z(), 0, -k.fx * q.x() / (q.z() * q.z()), 0, k.fy / q.z(),
            -k.fy * q.y() / (q.z() * q.z());
        Eigen::Matrix<double, 3, 6> jq;
        jq.block<3, 3>(0, 0) = -skew(s);
        jq.block<3, 3>(0, 3) = Mat3::Identity();
        Eigen::Matrix<double, 2, 6> b = dpi * jq;
        double w2 = a.weight * a.weight;
        h += w2 * b.transpose() * b;
        g += w2 * b.transpose() * e;
    }
    return true;
}

Pose apply_step(const Pose& pose, const Vec6& step) {
    Pose next;
    next.rotation = rotation_exp(step.head<3>()) * pose.rotation;
    next.translation = pose.translation + step.tail<3>();
    return next;
}

}  // namespace

void RefineProblem::check() const {
    size_t n = pixel_count();
    if (flow.size() != n || confidence.size() != n)
        throw ShapeError("refine problem: flow/confidence size mismatch");
    if (depth_r.width != width || depth_r.height != height)
        throw ShapeError("refine problem: depth size mismatch");
    for (double w : confidence)
        if (w < 0.0 || w > 1.0) throw Error("refine problem: confidence outside [0,1]");
}

RefineResult refine_pose(const RefineProblem& p) {
    p.check();
    std::vector<ActivePixel> active = collect_active(p);
    if (active.size() < 3)
        throw InsufficientSupportError("refine_pose: fewer than 3 usable pixels");

    RefineResult result;
    Pose pose = p.pose_init;
    double f = objective(active, p.k, pose);
    result.lm_objectives.push_back(f);

    // Three LM rounds: damping shrinks on acceptance, grows on rejection.
    double lambda = 1e-3;
    for (int round = 0; round < 3; ++round) {
        Mat6 h;
        Vec6 g;
        if (!normal_equations(active, p.k, pose, h, g)) break;
        Vec6 diag = h.diagonal().cwiseMax(1e-12);
        bool accepted = false;
        for (int attempt = 0; attempt < 32 && !accepted; ++attempt) {
            Mat6 damped = h;
            damped.diagonal() += lambda * diag;
            Vec6 step = damped.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda = std::min(lambda * 10.0, 1e15);
                continue;
            }
            Pose cand = apply_step(pose, step);
            double fc = objective(active, p.k, cand);
            if (fc <= f) {
                pose = cand;
                f = fc;
                result.lm_objectives.push_back(f);
                lambda = std::max(lambda * 0.1, 1e-15);
                accepted = true;
            } else {
                lambda = std::min(lambda * 10.0, 1e15);
            }
        }
        if (!accepted) break;  // stationary: no damping level improves
    }

    // Plain Gauss-Newton to convergence. Steps are applied unconditionally;
    // near the optimum the objective comparison sits below double rounding, so
    // gating on it stalls the quadratic tail. Reverting to the pre-GN pose
    // only guards against genuine divergence, never against ulp noise.
    const Pose pre_gn_pose = pose;
    const double pre_gn_f = f;
    for (int it = 0; it < 10; ++it) {
        ++result.gn_iterations;
        Mat6 h;
        Vec6 g;
        if (!normal_equations(active, p.k, pose, h, g)) break;
        Vec6 step = (h + 1e-14 * Mat6::Identity()).ldlt().solve(-g);
        if (!step.allFinite()) break;
        Pose cand = apply_step(pose, step);
        double fc = objective(active, p.k, cand);
        if (!std::isfinite(fc)) break;
        pose = cand;
        f = fc;
        if (step.norm() < 1e-10) break;
    }
    if (!(f <= pre_gn_f * (1.0 + 1e-9) + 1e-300)) {
        pose = pre_gn_pose;
        f = pre_gn_f;
    }

    result.pose = pose;
    result.final_objective = f;
    return result;
}

std::pair<RefineResult, PnPJacobians> refine_pose_grad(const RefineProblem& p) {
    RefineResult result = refine_pose(p);
    const Pose& pose = result.pose;
    std::vector<ActivePixel> active = collect_active(p);

    // Full Hessian of the objective at the solution, including the
    // second-order residual terms; required for implicit differentiation on
    // problems with nonzero residuals.
    Mat6 hess = Mat6::Zero();
    const size_t npx = p.pixel_count();
    PnPJacobians jac;
    jac.d_pose_d_flow = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, 2 * npx);
    jac.d_pose_d_weight = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, npx);

    struct PerPixel {
        int pixel;
        Eigen::Matrix<double, 2, 6> b;
        Vec2 e;
        double w;
    };
    std::vector<PerPixel> terms;
    terms.reserve(active.size());

    for (const ActivePixel& a : active) {
        Vec3 s = pose.rotation * a.point;
        Vec3 q = s + pose.translation;
        if (q.z() <= 1e-12) throw SingularSystemError("refine_pose_grad: point behind camera");
        double z = q.z();
        Vec2 uv{p.k.fx * q.x() / z + p.k.cx, p.k.fy * q.y() / z + p.k.cy};
        Vec2 e = uv - a.target;

        Eigen::Matrix<double, 2, 3> dpi;
        dpi << p.k.fx / z, 0, -p.k.fx * q.x() / (z * z), 0, p.k.fy / z,
            -p.k.fy * q.y() / (z * z);
        Eigen::Matrix<double, 3, 6> jq;
        jq.block<3, 3>(0, 0) = -skew(s);
        jq.block<3, 3>(0, 3) = Mat3::Identity();
        Eigen::Matrix<double, 2, 6> b = dpi * jq;
        double w2 = a.weight * a.weight;

        hess += w2 * b.transpose() * b;

        // Second derivatives of pi w.r.t. camera point q.
        Mat3 hpi_x = Mat3::Zero();
        hpi_x(0, 2) = hpi_x(2, 0) = -p.k.fx / (z * z);
        hpi_x(2, 2) = 2.0 * p.k.fx * q.x() / (z * z * z);
        Mat3 hpi_y = Mat3::Zero();
        hpi_y(1, 2) = hpi_y(2, 1) = -p.k.fy / (z * z);
        hpi_y(2, 2) = 2.0 * p.k.fy * q.y() / (z * z * z);

        // Second derivative of the rotation action: Hessian of q_a w.r.t. the
        // axis-angle increment is (e_a s^T + s e_a^T)/2 - s_a I.
        std::array<Mat3, 3> hq;
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 ea = Vec3::Zero();
            ea(axis) = 1.0;
            hq[axis] = 0.5 * (ea * s.transpose() + s * ea.transpose()) - s(axis) * Mat3::Identity();
        }

        for (int c = 0; c < 2; ++c) {
            const Mat3& hpi = c == 0 ? hpi_x : hpi_y;
            Mat6 t = jq.transpose() * hpi * jq;
            for (int axis = 0; axis < 3; ++axis)
                t.block<3, 3>(0, 0) += dpi(c, axis) * hq[axis];
            hess += w2 * e(c) * t;
        }

        terms.push_back({a.pixel, b, e, a.weight});
    }

    Eigen::JacobiSVD<Mat6> svd(hess, Eigen::ComputeFullU | Eigen::ComputeFullV);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(5);
    if (!(smin > 0.0) || smax / smin > 1e12)
        throw SingularSystemError("refine_pose_grad: Hessian condition number above 1e12");

    // g(theta*, Y, W) = 0 with g = sum W^2 B^T e:
    //   d theta / d Y_k = -H^{-1} dg/dY_k =  H^{-1} W^2 B^T
    //   d theta / d W_k = -H^{-1} (2 W B^T e)
    for (const PerPixel& t : terms) {
        Eigen::Matrix<double, 6, 2> flow_cols =
            svd.solve(t.w * t.w * t.b.transpose());
        jac.d_pose_d_flow.col(2 * t.pixel) = flow_cols.col(0);
        jac.d_pose_d_flow.col(2 * t.pixel + 1) = flow_cols.col(1);
        jac.d_pose_d_weight.col(t.pixel) = svd.solve(Vec6(-2.0 * t.w * t.b.transpose() * t.e));
    }
    return {result, jac};
}

}  // namespace corrpose
