#include "corrpose/mocks.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace corrpose {

void NoiseModel::check() const {
    if (class_flip_prob < 0.0 || class_flip_prob > 1.0)
        throw ConfigError("noise model: class_flip_prob outside [0,1]");
    if (occlusion_frac < 0.0 || occlusion_frac > 1.0)
        throw ConfigError("noise model: occlusion_frac outside [0,1]");
    if (offset_sigma < 0.0 || flow_sigma_b < 0.0)
        throw ConfigError("noise model: negative sigma");
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

SyntheticScene make_scene(const Mesh& mesh, const Pose& gt, const Intrinsics& k, int size) {
    SyntheticScene s;
    s.mesh = &mesh;
    s.gt_pose = gt;
    s.k = k;
    s.size = size;
    s.depth = render_depth(mesh, gt, k, size, size);
    return s;
}

SyntheticScene sample_scene(const Mesh& mesh, const Intrinsics& k, int size, std::mt19937_64& rng,
                            const SceneSamplingConfig& cfg) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Vec3 dir{gauss(rng), gauss(rng), gauss(rng)};
    while (dir.norm() < 1e-6) dir = {gauss(rng), gauss(rng), gauss(rng)};
    dir.normalize();

    double base = camera_distance_for_fill(mesh.bounding_radius(), k.fx, size, cfg.fill_fraction);
    double dist = base * (1.0 + cfg.distance_jitter * (2.0 * unif(rng) - 1.0));

    Pose pose = look_at_origin(dir, dist);
    double roll = 2.0 * M_PI * unif(rng);
    Pose inplane;
    inplane.rotation = rotation_exp(Vec3{0, 0, roll});
    pose.rotation = inplane.rotation * pose.rotation;
    pose.translation = inplane.rotation * pose.translation;
    pose.translation.x() += dist * cfg.lateral_jitter * (2.0 * unif(rng) - 1.0);
    pose.translation.y() += dist * cfg.lateral_jitter * (2.0 * unif(rng) - 1.0);
    return make_scene(mesh, pose, k, size);
}

Pose sample_pose_noise(const Pose& gt, std::mt19937_64& rng, const Vec3& trans_sigma,
                       double rot_sigma_deg) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    double s = rot_sigma_deg * M_PI / 180.0;
    Vec3 euler{gauss(rng) * s, gauss(rng) * s, gauss(rng) * s};
    Mat3 noise = rotation_exp(Vec3::UnitX() * euler.x()) *
                 rotation_exp(Vec3::UnitY() * euler.y()) *
                 rotation_exp(Vec3::UnitZ() * euler.z());
    Pose out = gt;
    out.rotation = noise * gt.rotation;
    out.translation.x() += gauss(rng) * trans_sigma.x();
    out.translation.y() += gauss(rng) * trans_sigma.y();
    out.translation.z() += gauss(rng) * trans_sigma.z();
    return out;
}

std::pair<ClassTensor, OffsetTensor> mock_coarse(const SyntheticScene& scene,
                                                 const Template& tmpl, const NoiseModel& nm,
                                                 uint64_t stream) {
    nm.check();
    const int patch = 16;
    if (scene.size != tmpl.size) throw ShapeError("mock_coarse: scene/template size mismatch");
    GtCorrespondences gt = gt_correspondences(scene.gt_pose, tmpl.viewpoint.camera_pose, scene.k,
                                              tmpl.intrinsics, scene.size, scene.depth,
                                              tmpl.depth, patch);
    const int g = gt.labels.grid;
    const int no_match = gt.labels.no_match_class();

    std::mt19937_64 rng(mix_seed(nm.seed, stream));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<int> cls = gt.labels.cls;
    std::vector<Vec2> offsets(gt.labels.offset.begin(), gt.labels.offset.end());

    std::vector<int> on_object;
    for (int i = 0; i < g * g; ++i)
        if (cls[i] != no_match) on_object.push_back(i);

    // Occlusion: a contiguous region grown by BFS from a random on-object cell.
    if (nm.occlusion_frac > 0.0 && !on_object.empty()) {
        size_t target = size_t(std::ceil(nm.occlusion_frac * double(on_object.size())));
        std::uniform_int_distribution<size_t> pick(0, on_object.size() - 1);
        int start = on_object[pick(rng)];
        std::vector<bool> seen(size_t(g) * g, false);
        std::deque<int> queue{start};
        seen[start] = true;
        std::vector<int> region;
        while (!queue.empty() && region.size() < target) {
            int cell = queue.front();
            queue.pop_front();
            region.push_back(cell);
            int cx = cell % g, cy = cell / g;
            const int dx[4] = {0, 0, -1, 1};
            const int dy[4] = {-1, 1, 0, 0};
            for (int d = 0; d < 4; ++d) {
                int nx = cx + dx[d], ny = cy + dy[d];
                if (nx < 0 || nx >= g || ny < 0 || ny >= g) continue;
                int ni = ny * g + nx;
                if (seen[ni] || cls[ni] == no_match) continue;
                seen[ni] = true;
                queue.push_back(ni);
            }
        }
        for (int cell : region) cls[cell] = no_match;
    }

    // Class flips and offset noise on the surviving matched cells.
    for (int i = 0; i < g * g; ++i) {
        if (cls[i] == no_match) continue;
        if (nm.class_flip_prob > 0.0 && unif(rng) < nm.class_flip_prob) {
            // Uniform over the K-1 classes other than the current one.
            std::uniform_int_distribution<int> wrong(0, g * g - 1);
            int pickc = wrong(rng);
            if (pickc >= cls[i]) ++pickc;
            cls[i] = pickc;
        }
        if (nm.offset_sigma > 0.0) {
            Vec2 noisy = offsets[i] + Vec2{gauss(rng), gauss(rng)} * nm.offset_sigma;
            offsets[i] = noisy.cwiseMax(-0.5).cwiseMin(0.5);
        }
    }

    // One-hot with label smoothing so every cell is a valid distribution.
    const double eps = 0.01;
    ClassTensor c(g);
    OffsetTensor u(g);
    const int classes = c.classes();
    for (int y = 0; y < g; ++y) {
        for (int x = 0; x < g; ++x) {
            int i = y * g + x;
            double* p = c.cell(x, y);
            for (int kk = 0; kk < classes; ++kk) p[kk] = eps / double(classes - 1);
            p[cls[i]] = 1.0 - eps;
            if (cls[i] != no_match) u.set(x, y, offsets[i]);
        }
    }
    return {std::move(c), std::move(u)};
}

MockRefinerOutput mock_refiner(const SyntheticScene& scene, const Pose& pose_init,
                               const NoiseModel& nm, uint64_t stream) {
    nm.check();
    MockRefinerOutput out;
    out.render = rasterize(*scene.mesh, pose_init, scene.k, scene.size);
    const DepthMap& depth_r = out.render.depth;

    FlowField f(scene.size, scene.size);
    std::mt19937_64 rng(mix_seed(nm.seed, mix_seed(stream, 0x5151)));
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    auto laplace = [&]() {
        double v = std::clamp(unif(rng), -0.5 + 1e-12, 0.5 - 1e-12);
        return -nm.flow_sigma_b * std::copysign(std::log(1.0 - 2.0 * std::abs(v)), v);
    };

    bool any = false;
    const double vis_tol = 1e-4;
    for (int y = 0; y < scene.size; ++y) {
        for (int x = 0; x < scene.size; ++x) {
            size_t i = f.index(x, y);
            f.b[i] = nm.flow_sigma_b > 0.0 ? nm.flow_sigma_b : 1e-3;
            f.sensitivity[i] = 0.0;
            f.certainty[i] = 0.0;
            if (depth_r.at(x, y) <= 0.0) continue;
            any = true;
            f.sensitivity[i] = 1.0;

            Vec2 center{x + 0.5, y + 0.5};
            Vec3 model_pt = backproject(pose_init, scene.k, depth_r, center);
            Vec3 in_q = scene.gt_pose.apply(model_pt);
            if (in_q.z() <= 1e-9) continue;
            Vec2 target{scene.k.fx * in_q.x() / in_q.z() + scene.k.cx,
                        scene.k.fy * in_q.y() / in_q.z() + scene.k.cy};
            f.mu[i] = target - center;
            if (nm.flow_sigma_b > 0.0) f.mu[i] += Vec2{laplace(), laplace()};

            // Certainty labels come from the true target, not the noisy flow.
            bool visible = scene.depth.contains(target);
            if (visible) {
                double dq = surface_depth_at(scene.depth, target);
                visible = dq > 0.0 && std::abs(dq - in_q.z()) <= vis_tol;
            }
            f.certainty[i] = visible ? 1.0 : 0.0;
        }
    }
    if (!any) throw Error("mock_refiner: object not visible under pose_init");
    out.flow = std::move(f);
    return out;
}

int mock_selector(const std::vector<Pose>& hypotheses, const SyntheticScene& scene) {
    if (hypotheses.empty()) throw EmptyInputError("mock_selector: no hypotheses");
    double best_score = -std::numeric_limits<double>::infinity();
    int best = 0;
    for (int h = 0; h < int(hypotheses.size()); ++h) {
        DepthMap render = render_depth(*scene.mesh, hypotheses[h], scene.k, scene.size,
                                       scene.size);
        double sum = 0.0;
        size_t count = 0;
        for (size_t i = 0; i < render.values.size(); ++i) {
            double a = render.values[i], b = scene.depth.values[i];
            if (a <= 0.0 && b <= 0.0) continue;
            // Union of masks; a missing side contributes its full depth.
            sum += std::abs(a - b);
            ++count;
        }
        double score = count == 0 ? -std::numeric_limits<double>::infinity()
                                  : -sum / double(count);
        if (score > best_score) {
            best_score = score;
            best = h;
        }
    }
    return best;
}

}  // namespace corrpose
