#include "corrpose/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace corrpose {

void FlowField::validate() const {
    size_t n = pixel_count();
    if (mu.size() != n || b.size() != n || certainty.size() != n || sensitivity.size() != n)
        throw ShapeError("flow field: plane size mismatch");
    for (double v : b)
        if (!(v > 0.0)) throw Error("flow field: scale b must be positive");
    for (double v : certainty)
        if (v < 0.0 || v > 1.0) throw Error("flow field: certainty outside [0,1]");
    for (double v : sensitivity)
        if (v < 0.0 || v > 1.0) throw Error("flow field: sensitivity outside [0,1]");
}

double flow_probability(double b, double radius) {
    if (!(b > 0.0)) throw Error("flow_probability: scale must be positive");
    if (radius < 0.0) throw Error("flow_probability: radius must be nonnegative");
    return 1.0 - std::exp(-radius / b);
}

std::vector<double> fuse_confidence(const FlowField& f, double radius) {
    f.validate();
    std::vector<double> w(f.pixel_count());
    for (size_t i = 0; i < w.size(); ++i)
        w[i] = f.certainty[i] * f.sensitivity[i] * flow_probability(f.b[i], radius);
    return w;
}

Pose rgbd_pose(const FlowField& f, const DepthMap& depth_q, const DepthMap& depth_r,
               const Intrinsics& k, const Pose& pose_init, const RgbdConfig& cfg) {
    f.validate();
    if (depth_r.width != f.width || depth_r.height != f.height)
        throw ShapeError("rgbd_pose: rendered depth size mismatch");

    // src: model-frame points of rendered pixels; dst: camera-frame points of
    // their flow targets lifted through the query depth. The list is assembled
    // in scanline order, which makes the result independent of how callers
    // enumerate pixels.
    std::vector<Vec3> src, dst;
    for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
            size_t i = f.index(x, y);
            if (f.certainty[i] < cfg.certainty_threshold) continue;
            if (depth_r.at(x, y) <= 0.0) continue;
            Vec2 center{x + 0.5, y + 0.5};
            Vec2 target = center + f.mu[i];
            if (!depth_q.contains(target)) continue;
            double dq = depth_q.sample(target);
            if (dq <= 0.0) continue;
            src.push_back(backproject(pose_init, k, depth_r, center));
            dst.push_back({(target.x() - k.cx) / k.fx * dq, (target.y() - k.cy) / k.fy * dq, dq});
        }
    }
    const int n = int(src.size());
    if (n < 3) throw InsufficientSupportError("rgbd_pose: fewer than 3 usable correspondences");

    const double thr2 = cfg.inlier_threshold_m * cfg.inlier_threshold_m;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);

    auto msac_score = [&](const Pose& pose, std::vector<bool>* mask) {
        double score = 0.0;
        if (mask) mask->assign(n, false);
        for (int i = 0; i < n; ++i) {
            double r2 = (dst[i] - pose.apply(src[i])).squaredNorm();
            if (r2 <= thr2) {
                score += r2;
                if (mask) (*mask)[i] = true;
            } else {
                score += thr2;
            }
        }
        return score;
    };

    double best_score = std::numeric_limits<double>::infinity();
    Pose best_pose;
    bool have = false;
    for (int it = 0; it < cfg.hypotheses; ++it) {
        int a = pick(rng), b2 = pick(rng), c = pick(rng);
        if (a == b2 || b2 == c || a == c) continue;
        std::vector<Vec3> s{src[a], src[b2], src[c]};
        std::vector<Vec3> d{dst[a], dst[b2], dst[c]};
        Pose hyp;
        try {
            hyp = kabsch(s, d);
        } catch (const Error&) {
            continue;
        }
        double score = msac_score(hyp, nullptr);
        if (score < best_score) {
            best_score = score;
            best_pose = hyp;
            have = true;
        }
    }
    // All-point fit as a fallback hypothesis; also covers tiny n.
    try {
        Pose all = kabsch(src, dst);
        double score = msac_score(all, nullptr);
        if (!have || score < best_score) {
            best_score = score;
            best_pose = all;
            have = true;
        }
    } catch (const Error&) {
    }
    if (!have) throw DegenerateError("rgbd_pose: no valid hypothesis");

    std::vector<bool> mask;
    msac_score(best_pose, &mask);
    std::vector<Vec3> si, di;
    for (int i = 0; i < n; ++i)
        if (mask[i]) {
            si.push_back(src[i]);
            di.push_back(dst[i]);
        }
    if (int(si.size()) < 3) throw InsufficientSupportError("rgbd_pose: fewer than 3 inliers");
    return kabsch(si, di);
}

void save_flow(const FlowField& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write flow file: " + path);
    nlohmann::json header;
    header["width"] = f.width;
    header["height"] = f.height;
    header["planes"] = {"mu_x", "mu_y", "b", "certainty", "sensitivity"};
    std::string hs = header.dump();
    uint32_t len = uint32_t(hs.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(hs.data(), hs.size());
    auto write_plane = [&](auto getter) {
        for (size_t i = 0; i < f.pixel_count(); ++i) {
            float v = float(getter(i));
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
    };
    write_plane([&](size_t i) { return f.mu[i].x(); });
    write_plane([&](size_t i) { return f.mu[i].y(); });
    write_plane([&](size_t i) { return f.b[i]; });
    write_plane([&](size_t i) { return f.certainty[i]; });
    write_plane([&](size_t i) { return f.sensitivity[i]; });
    if (!out) throw IoError("failed writing flow file: " + path);
}

FlowField load_flow(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open flow file: " + path);
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    in.read(hs.data(), len);
    nlohmann::json header = nlohmann::json::parse(hs);
    FlowField f(header.at("width").get<int>(), header.at("height").get<int>());
    auto read_plane = [&](auto setter) {
        for (size_t i = 0; i < f.pixel_count(); ++i) {
            float v = 0;
            in.read(reinterpret_cast<char*>(&v), 4);
            setter(i, double(v));
        }
    };
    read_plane([&](size_t i, double v) { f.mu[i].x() = v; });
    read_plane([&](size_t i, double v) { f.mu[i].y() = v; });
    read_plane([&](size_t i, double v) { f.b[i] = v; });
    read_plane([&](size_t i, double v) { f.certainty[i] = v; });
    read_plane([&](size_t i, double v) { f.sensitivity[i] = v; });
    if (!in) throw IoError("truncated flow file: " + path);
    return f;
}

}  // namespace corrpose
