#include <algorithm>
#include <cmath>
#include <random>

#include "corrpose/pnp.hpp"

namespace corrpose {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Camera coordinates of all points from control points and barycentrics; flips
// the sign when the cloud lands behind the camera.
std::vector<Vec3> points_from_control(const MatrixXd& alphas, const std::vector<Vec3>& ctrl_cam) {
    const int n = int(alphas.rows());
    const int ncp = int(ctrl_cam.size());
    std::vector<Vec3> cam(n, Vec3::Zero());
    double zsum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ncp; ++j) cam[i] += alphas(i, j) * ctrl_cam[j];
        zsum += cam[i].z();
    }
    if (zsum < 0.0)
        for (Vec3& p : cam) p = -p;
    return cam;
}

double reproj_error2(const Corr2D3D& corr, const Intrinsics& k, const Pose& pose) {
    double sum = 0.0;
    for (size_t i = 0; i < corr.size(); ++i) {
        Vec3 q = pose.apply(corr.points3d[i]);
        if (q.z() <= 1e-12) return std::numeric_limits<double>::infinity();
        Vec2 uv{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
        sum += (uv - corr.points2d[i]).squaredNorm();
    }
    return sum;
}

// Distance constraints between control points: rho_ab = |c_a - c_b|^2.
struct BetaSystem {
    std::vector<std::pair<int, int>> pairs;
    VectorXd rho;
    // dv[k][pair] = v_k(a) - v_k(b), one 3-vector per null vector and pair
    std::vector<std::vector<Vec3>> dv;
};

BetaSystem beta_system(const std::vector<Vec3>& ctrl_model, const MatrixXd& null_vecs) {
    BetaSystem s;
    const int ncp = int(ctrl_model.size());
    for (int a = 0; a < ncp; ++a)
        for (int b = a + 1; b < ncp; ++b) s.pairs.push_back({a, b});
    s.rho.resize(int(s.pairs.size()));
    for (size_t p = 0; p < s.pairs.size(); ++p)
        s.rho(int(p)) =
            (ctrl_model[s.pairs[p].first] - ctrl_model[s.pairs[p].second]).squaredNorm();
    const int nv = int(null_vecs.cols());
    s.dv.resize(nv);
    for (int kx = 0; kx < nv; ++kx) {
        s.dv[kx].resize(s.pairs.size());
        for (size_t p = 0; p < s.pairs.size(); ++p) {
            auto [a, b] = s.pairs[p];
            Vec3 va = null_vecs.block<3, 1>(3 * a, kx);
            Vec3 vb = null_vecs.block<3, 1>(3 * b, kx);
            s.dv[kx][p] = va - vb;
        }
    }
    return s;
}

// Gauss-Newton on the distance residuals |sum_k beta_k dv_k|^2 - rho.
VectorXd refine_betas(const BetaSystem& s, VectorXd betas, int iters = 10) {
    const int nb = int(betas.size());
    const int np = int(s.pairs.size());
    for (int it = 0; it < iters; ++it) {
        MatrixXd j(np, nb);
        VectorXd r(np);
        for (int p = 0; p < np; ++p) {
            Vec3 acc = Vec3::Zero();
            for (int kx = 0; kx < nb; ++kx) acc += betas(kx) * s.dv[kx][p];
            r(p) = acc.squaredNorm() - s.rho(p);
            for (int kx = 0; kx < nb; ++kx) j(p, kx) = 2.0 * acc.dot(s.dv[kx][p]);
        }
        VectorXd step = (j.transpose() * j + 1e-12 * MatrixXd::Identity(nb, nb))
                            .ldlt()
                            .solve(-j.transpose() * r);
        betas += step;
        if (step.norm() < 1e-14) break;
    }
    return betas;
}

// L matrix row for a pair: entries for the quadratic terms of the chosen
// unknown layout.
VectorXd solve_ls(const MatrixXd& a, const VectorXd& b) {
    return a.colPivHouseholderQr().solve(b);
}

std::vector<VectorXd> initial_betas(const BetaSystem& s, int nv) {
    const int np = int(s.pairs.size());
    std::vector<VectorXd> cands;

    {  // case 1: x = b1 v1
        MatrixXd l(np, 1);
        for (int p = 0; p < np; ++p) l(p, 0) = s.dv[0][p].squaredNorm();
        VectorXd sol = solve_ls(l, s.rho);
        VectorXd b = VectorXd::Zero(nv);
        b(0) = std::sqrt(std::max(0.0, sol(0)));
        cands.push_back(b);
    }
    if (nv >= 2) {  // case 2: unknowns b11, b12, b22
        MatrixXd l(np, 3);
        for (int p = 0; p < np; ++p) {
            l(p, 0) = s.dv[0][p].squaredNorm();
            l(p, 1) = 2.0 * s.dv[0][p].dot(s.dv[1][p]);
            l(p, 2) = s.dv[1][p].squaredNorm();
        }
        VectorXd sol = solve_ls(l, s.rho);
        VectorXd b = VectorXd::Zero(nv);
        if (sol(0) < 0.0) {
            b(0) = std::sqrt(-sol(0));
            b(1) = sol(2) < 0.0 ? std::sqrt(-sol(2)) : 0.0;
        } else {
            b(0) = std::sqrt(sol(0));
            b(1) = sol(2) > 0.0 ? std::sqrt(sol(2)) : 0.0;
        }
        if (sol(1) < 0.0) b(0) = -b(0);
        cands.push_back(b);
    }
    if (nv >= 3) {  // case 3: unknowns b11, b12, b22, b13, b23
        MatrixXd l(np, 5);
        for (int p = 0; p < np; ++p) {
            l(p, 0) = s.dv[0][p].squaredNorm();
            l(p, 1) = 2.0 * s.dv[0][p].dot(s.dv[1][p]);
            l(p, 2) = s.dv[1][p].squaredNorm();
            l(p, 3) = 2.0 * s.dv[0][p].dot(s.dv[2][p]);
            l(p, 4) = 2.0 * s.dv[1][p].dot(s.dv[2][p]);
        }
        if (np >= 5) {
            VectorXd sol = solve_ls(l, s.rho);
            VectorXd b = VectorXd::Zero(nv);
            if (sol(0) < 0.0) {
                b(0) = std::sqrt(-sol(0));
                b(1) = sol(2) < 0.0 ? std::sqrt(-sol(2)) : 0.0;
            } else {
                b(0) = std::sqrt(sol(0));
                b(1) = sol(2) > 0.0 ? std::sqrt(sol(2)) : 0.0;
            }
            if (sol(1) < 0.0) b(0) = -b(0);
            if (b(0) != 0.0) b(2) = sol(3) / (2.0 * b(0));
            cands.push_back(b);
        }
    }
    return cands;
}

}  // namespace

double mean_reprojection_error(const Corr2D3D& corr, const Intrinsics& k, const Pose& pose) {
    if (corr.size() == 0) return 0.0;
    double sum = 0.0;
    for (size_t i = 0; i < corr.size(); ++i) {
        Vec3 q = pose.apply(corr.points3d[i]);
        if (q.z() <= 1e-12) return std::numeric_limits<double>::infinity();
        Vec2 uv{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
        sum += (uv - corr.points2d[i]).norm();
    }
    return sum / double(corr.size());
}

Pose polish_reprojection(const Corr2D3D& corr, const Intrinsics& k, Pose pose, int max_iters) {
    const size_t n = corr.size();
    for (int it = 0; it < max_iters; ++it) {
        Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        double f = 0.0;
        bool behind = false;
        for (size_t i = 0; i < n; ++i) {
            double w = corr.weights.empty() ? 1.0 : corr.weights[i];
            if (w <= 0.0) continue;
            Vec3 s = pose.rotation * corr.points3d[i];
            Vec3 q = s + pose.translation;
            if (q.z() <= 1e-12) {
                behind = true;
                break;
            }
            Vec2 uv{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
            Vec2 e = uv - corr.points2d[i];
            Eigen::Matrix<double, 2, 3> a;
            a << k.fx / q.z(), 0, -k.fx * q.x() / (q.z() * q.z()), 0, k.fy / q.z(),
                -k.fy * q.y() / (q.z() * q.z());
            Eigen::Matrix<double, 3, 6> jq;
            jq.block<3, 3>(0, 0) = -skew(s);
            jq.block<3, 3>(0, 3) = Mat3::Identity();
            Eigen::Matrix<double, 2, 6> b = a * jq;
            h += w * b.transpose() * b;
            g += w * b.transpose() * e;
            f += w * e.squaredNorm();
        }
        if (behind) break;
        Eigen::Matrix<double, 6, 1> step =
            (h + 1e-14 * Eigen::Matrix<double, 6, 6>::Identity()).ldlt().solve(-g);
        if (!step.allFinite()) break;
        Pose next;
        next.rotation = rotation_exp(step.head<3>()) * pose.rotation;
        next.translation = pose.translation + step.tail<3>();
        pose = next;
        if (step.norm() < 1e-14) break;
    }
    return pose;
}

Pose epnp(const Corr2D3D& corr, const Intrinsics& k) {
    corr.check();
    const int n = int(corr.size());
    if (n < 4) throw InsufficientSupportError("epnp: need at least 4 correspondences");

    // Control points: centroid plus principal directions scaled by the
    // cloud's standard deviation; 3 control points in the planar case.
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : corr.points3d) centroid += p;
    centroid /= double(n);
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : corr.points3d) cov += (p - centroid) * (p - centroid).transpose();
    cov /= double(n);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);  // ascending eigenvalues
    Vec3 evals = eig.eigenvalues().cwiseMax(0.0);
    if (evals(1) <= 1e-12 * std::max(evals(2), 1e-300))
        throw DegenerateError("epnp: collinear 3D points");
    const bool planar = evals(0) <= 1e-10 * evals(2);
    const int ncp = planar ? 3 : 4;

    std::vector<Vec3> ctrl(ncp);
    ctrl[0] = centroid;
    for (int j = 1; j < ncp; ++j) {
        // Strongest directions first.
        Vec3 dir = eig.eigenvectors().col(3 - j);
        ctrl[j] = centroid + std::sqrt(std::max(evals(3 - j), 1e-12)) * dir;
    }

    // Barycentric coordinates of every point w.r.t. the control points.
    MatrixXd alphas(n, ncp);
    MatrixXd basis(3, ncp - 1);
    for (int j = 1; j < ncp; ++j) basis.col(j - 1) = ctrl[j] - ctrl[0];
    Eigen::ColPivHouseholderQR<MatrixXd> basis_qr(basis);
    for (int i = 0; i < n; ++i) {
        VectorXd a = basis_qr.solve(corr.points3d[i] - centroid);
        alphas(i, 0) = 1.0 - a.sum();
        for (int j = 1; j < ncp; ++j) alphas(i, j) = a(j - 1);
    }

    // M x = 0 over the stacked camera-frame control point coordinates.
    const int dim = 3 * ncp;
    MatrixXd m(2 * n, dim);
    for (int i = 0; i < n; ++i) {
        double u = corr.points2d[i].x();
        double v = corr.points2d[i].y();
        for (int j = 0; j < ncp; ++j) {
            double a = alphas(i, j);
            m(2 * i, 3 * j) = a * k.fx;
            m(2 * i, 3 * j + 1) = 0.0;
            m(2 * i, 3 * j + 2) = a * (k.cx - u);
            m(2 * i + 1, 3 * j) = 0.0;
            m(2 * i + 1, 3 * j + 1) = a * k.fy;
            m(2 * i + 1, 3 * j + 2) = a * (k.cy - v);
        }
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> mtm(m.transpose() * m);
    const int nv = planar ? 3 : 4;
    MatrixXd null_vecs = mtm.eigenvectors().leftCols(nv);  // ascending: smallest first

    BetaSystem bs = beta_system(ctrl, null_vecs);
    std::vector<VectorXd> candidates = initial_betas(bs, nv);

    Pose best;
    double best_err = std::numeric_limits<double>::infinity();
    for (VectorXd betas : candidates) {
        betas = refine_betas(bs, betas);
        std::vector<Vec3> ctrl_cam(ncp);
        for (int j = 0; j < ncp; ++j) {
            Vec3 acc = Vec3::Zero();
            for (int kx = 0; kx < nv; ++kx)
                acc += betas(kx) * Vec3(null_vecs.block<3, 1>(3 * j, kx));
            ctrl_cam[j] = acc;
        }
        std::vector<Vec3> cam = points_from_control(alphas, ctrl_cam);
        Pose pose;
        try {
            pose = kabsch(corr.points3d, cam);
        } catch (const Error&) {
            continue;
        }
        double err = reproj_error2(corr, k, pose);
        if (err < best_err) {
            best_err = err;
            best = pose;
        }
    }
    if (!std::isfinite(best_err)) throw DegenerateError("epnp: no usable beta case");

    best = polish_reprojection(corr, k, best);
    for (size_t i = 0; i < corr.size(); ++i)
        if (best.apply(corr.points3d[i]).z() <= 1e-9) throw BehindCameraError(int(i));
    return best;
}

RansacResult ransac_pnp(const Corr2D3D& corr, const Intrinsics& k, const RansacConfig& cfg) {
    corr.check();
    const int n = int(corr.size());
    if (n < 4) throw InsufficientSupportError("ransac_pnp: need at least 4 correspondences");

    const int sample_size = std::min(6, n);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    const double thr2 = cfg.threshold_px * cfg.threshold_px;

    auto count_inliers = [&](const Pose& pose, std::vector<bool>& mask) {
        int count = 0;
        mask.assign(n, false);
        for (int i = 0; i < n; ++i) {
            Vec3 q = pose.apply(corr.points3d[i]);
            if (q.z() <= 1e-9) continue;
            Vec2 uv{k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy};
            if ((uv - corr.points2d[i]).squaredNorm() <= thr2) {
                mask[i] = true;
                ++count;
            }
        }
        return count;
    };

    int best_count = 0;
    std::vector<bool> best_mask(n, false);
    Pose best_pose;
    std::vector<int> sample(sample_size);
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int s = 0; s < sample_size; ++s) {
            int idx;
            bool dup;
            do {
                idx = pick(rng);
                dup = false;
                for (int t = 0; t < s; ++t) dup |= sample[t] == idx;
            } while (dup);
            sample[s] = idx;
        }
        Corr2D3D sub;
        for (int s : sample) {
            sub.points3d.push_back(corr.points3d[s]);
            sub.points2d.push_back(corr.points2d[s]);
        }
        Pose hyp;
        try {
            hyp = epnp(sub, k);
        } catch (const Error&) {
            continue;
        }
        std::vector<bool> mask;
        int count = count_inliers(hyp, mask);
        if (count > best_count) {
            best_count = count;
            best_mask = mask;
            best_pose = hyp;
        }
    }
    if (best_count < 4) throw NoConsensusError("ransac_pnp: best consensus below 4 inliers");

    // Refit on all inliers, weighted by the correspondence weights.
    Corr2D3D inlier_set;
    for (int i = 0; i < n; ++i) {
        if (!best_mask[i]) continue;
        inlier_set.points3d.push_back(corr.points3d[i]);
        inlier_set.points2d.push_back(corr.points2d[i]);
        if (!corr.weights.empty()) inlier_set.weights.push_back(corr.weights[i]);
    }
    RansacResult out;
    try {
        Pose refit = epnp(inlier_set, k);
        refit = polish_reprojection(inlier_set, k, refit);
        out.pose = refit;
    } catch (const Error&) {
        out.pose = best_pose;  // keep the consensus hypothesis if the refit degenerates
    }
    out.inlier_count = count_inliers(out.pose, out.inliers);
    if (out.inlier_count < 4) {
        out.pose = best_pose;
        out.inlier_count = count_inliers(out.pose, out.inliers);
    }
    return out;
}

}  // namespace corrpose
