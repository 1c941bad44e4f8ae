#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "corrpose/evaluation.hpp"
#include "corrpose/mocks.hpp"
#include "corrpose/pipeline.hpp"
#include "test_util.hpp"

using namespace corrpose;
using namespace corrpose::testutil;

namespace {

const int kSize = 224;
const Intrinsics kCam{double(kSize), double(kSize), kSize * 0.5, kSize * 0.5};

SyntheticScene frontal_scene(const Mesh& mesh, const Vec3& dir = {0.15, -0.1, 0.98}) {
    double dist = camera_distance_for_fill(mesh.bounding_radius(), kCam.fx, kSize, 0.8);
    return make_scene(mesh, look_at_origin(dir.normalized(), dist), kCam, kSize);
}

}  // namespace

TEST_CASE("mock_coarse: noiseless oracle reproduces ground-truth matches") {
    Mesh mesh = make_l_bracket();
    SyntheticScene scene = frontal_scene(mesh);
    TemplateConfig tcfg;
    tcfg.size = kSize;
    TemplateSet templates = build_templates(mesh, tcfg);
    const Template& tmpl = templates.templates[7];

    NoiseModel nm;
    auto [c, u] = mock_coarse(scene, tmpl, nm);
    c.validate();
    u.validate();
    MatchSet decoded = decode_matches(c, u);

    GtCorrespondences gt = gt_correspondences(scene.gt_pose, tmpl.viewpoint.camera_pose, scene.k,
                                              tmpl.intrinsics, kSize, scene.depth, tmpl.depth);
    REQUIRE(decoded.matches.size() == gt.matches.matches.size());
    for (size_t i = 0; i < decoded.matches.size(); ++i) {
        CHECK((decoded.matches[i].query_px - gt.matches.matches[i].query_px).norm() < 1e-9);
        CHECK((decoded.matches[i].target_px - gt.matches.matches[i].target_px).norm() < 1e-9);
    }
}

TEST_CASE("mock_coarse: full occlusion kills every match") {
    Mesh mesh = make_cube(0.1);
    SyntheticScene scene = frontal_scene(mesh);
    TemplateConfig tcfg;
    tcfg.size = kSize;
    TemplateSet templates = build_templates(mesh, tcfg);
    NoiseModel nm;
    nm.occlusion_frac = 1.0;
    nm.seed = 5;
    auto [c, u] = mock_coarse(scene, templates.templates[0], nm);
    CHECK(similarity_score(c) == 0.0);
    CHECK(decode_matches(c, u).matches.empty());
}

TEST_CASE("mock_coarse: flip count lands in the binomial 99% interval") {
    Mesh mesh = make_icosphere(2, 0.05);
    SyntheticScene scene = frontal_scene(mesh);
    TemplateConfig tcfg;
    tcfg.size = kSize;
    TemplateSet templates = build_templates(mesh, tcfg);
    // Use the best-scoring template so plenty of cells are co-visible.
    NoiseModel clean;
    std::vector<double> scores;
    for (size_t t = 0; t < templates.templates.size(); ++t)
        scores.push_back(similarity_score(mock_coarse(scene, templates.templates[t], clean).first));
    const Template& tmpl = templates.templates[select_template(scores)];

    auto [c0, u0] = mock_coarse(scene, tmpl, clean);
    std::vector<int> gt_cls(c0.grid * c0.grid);
    int on_object = 0;
    for (int y = 0; y < c0.grid; ++y)
        for (int x = 0; x < c0.grid; ++x) {
            gt_cls[y * c0.grid + x] = c0.argmax(x, y);
            on_object += c0.argmax(x, y) != c0.no_match_class();
        }
    REQUIRE(on_object >= 40);

    NoiseModel nm;
    nm.class_flip_prob = 0.3;
    nm.seed = 1234;
    auto [c1, u1] = mock_coarse(scene, tmpl, nm);
    int flipped = 0;
    for (int y = 0; y < c0.grid; ++y)
        for (int x = 0; x < c0.grid; ++x) {
            int i = y * c0.grid + x;
            if (gt_cls[i] == c0.no_match_class()) continue;
            flipped += c1.argmax(x, y) != gt_cls[i];
        }
    double mean = 0.3 * on_object;
    double sd = std::sqrt(on_object * 0.3 * 0.7);
    CHECK(flipped >= int(mean - 2.576 * sd) - 1);
    CHECK(flipped <= int(mean + 2.576 * sd) + 1);
}

TEST_CASE("mock_coarse: deterministic in (scene, seed, stream)") {
    Mesh mesh = make_cube(0.1);
    SyntheticScene scene = frontal_scene(mesh);
    TemplateConfig tcfg;
    tcfg.size = kSize;
    TemplateSet templates = build_templates(mesh, tcfg);
    NoiseModel nm;
    nm.class_flip_prob = 0.2;
    nm.offset_sigma = 0.1;
    nm.occlusion_frac = 0.2;
    nm.seed = 77;
    auto [c1, u1] = mock_coarse(scene, templates.templates[11], nm, 4);
    auto [c2, u2] = mock_coarse(scene, templates.templates[11], nm, 4);
    CHECK(c1.probs == c2.probs);
    CHECK(u1.xy == u2.xy);
    auto [c3, u3] = mock_coarse(scene, templates.templates[11], nm, 5);
    CHECK(c1.probs != c3.probs);
}

TEST_CASE("mock_refiner: zero noise composes with refine_pose to recover gt") {
    Mesh mesh = make_l_bracket();
    SyntheticScene scene = frontal_scene(mesh);
    std::mt19937_64 rng(3);
    Pose init = sample_pose_noise(scene.gt_pose, rng, {0.005, 0.005, 0.01}, 5.0);
    NoiseModel nm;
    MockRefinerOutput out = mock_refiner(scene, init, nm);
    out.flow.validate();

    RefineProblem p;
    p.pose_init = init;
    p.width = kSize;
    p.height = kSize;
    p.flow = out.flow.mu;
    p.confidence = fuse_confidence(out.flow, 1.0);
    p.depth_r = out.render.depth;
    p.k = scene.k;
    RefineResult res = refine_pose(p);
    CHECK(pose_rotation_error(res.pose, scene.gt_pose) < 1e-6);
    CHECK(pose_translation_error(res.pose, scene.gt_pose) < 1e-6);
}

TEST_CASE("mock_refiner: Laplace flow noise has per-axis mean |x| = b") {
    Mesh mesh = make_cube(0.12);
    SyntheticScene scene = frontal_scene(mesh, {0.05, 0.02, 0.99});
    NoiseModel noisy;
    noisy.flow_sigma_b = 2.0;
    noisy.seed = 9;
    MockRefinerOutput with_noise = mock_refiner(scene, scene.gt_pose, noisy);
    NoiseModel clean;
    MockRefinerOutput without = mock_refiner(scene, scene.gt_pose, clean);

    double sum_x = 0.0, sum_y = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < with_noise.flow.pixel_count(); ++i) {
        if (with_noise.render.depth.values[i] <= 0.0) continue;
        Vec2 noise = with_noise.flow.mu[i] - without.flow.mu[i];
        sum_x += std::abs(noise.x());
        sum_y += std::abs(noise.y());
        ++count;
    }
    REQUIRE(count >= 10000);
    CHECK(sum_x / double(count) == doctest::Approx(2.0).epsilon(0.05));
    CHECK(sum_y / double(count) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("mock_refiner: occluded flow targets get certainty zero") {
    Mesh mesh = make_cube(0.1);
    SyntheticScene scene = frontal_scene(mesh, {0.0, 0.0, 1.0});
    // Rotate the initial pose far enough that part of the rendered surface is
    // the cube's back/side in the query view.
    Pose init = scene.gt_pose;
    init.rotation = init.rotation * rotation_exp(Vec3{0, M_PI / 2.5, 0});
    NoiseModel nm;
    MockRefinerOutput out = mock_refiner(scene, init, nm);

    int zero_cert = 0;
    for (size_t i = 0; i < out.flow.pixel_count(); ++i) {
        if (out.render.depth.values[i] <= 0.0) continue;
        if (out.flow.certainty[i] == 0.0) ++zero_cert;
        // Independent recheck of the visibility label.
        int x = int(i % size_t(kSize)), y = int(i / size_t(kSize));
        Vec3 model_pt = backproject(init, scene.k, out.render.depth, {x + 0.5, y + 0.5});
        Vec3 in_q = scene.gt_pose.apply(model_pt);
        Vec2 target{scene.k.fx * in_q.x() / in_q.z() + scene.k.cx,
                    scene.k.fy * in_q.y() / in_q.z() + scene.k.cy};
        bool visible = scene.depth.contains(target) &&
                       surface_depth_at(scene.depth, target) > 0.0 &&
                       std::abs(surface_depth_at(scene.depth, target) - in_q.z()) <= 1e-4;
        CHECK(out.flow.certainty[i] == (visible ? 1.0 : 0.0));
    }
    CHECK(zero_cert > 0);
}

TEST_CASE("mock_selector: prefers the ground-truth hypothesis") {
    Mesh mesh = make_l_bracket();
    SyntheticScene scene = frontal_scene(mesh);
    Pose flipped = scene.gt_pose;
    flipped.rotation = flipped.rotation * rotation_exp(Vec3{0, M_PI, 0});
    CHECK(mock_selector({scene.gt_pose, flipped}, scene) == 0);
    CHECK(mock_selector({flipped, scene.gt_pose}, scene) == 1);
    CHECK(mock_selector({flipped}, scene) == 0);
    CHECK_THROWS_AS(mock_selector({}, scene), EmptyInputError);
}

TEST_CASE("mock_selector: agrees with the min-MSSD hypothesis on noisy sets") {
    Mesh mesh = make_l_bracket();
    SyntheticScene scene = frontal_scene(mesh);
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> shift(0, 4);
    int agree = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        // Hypotheses of graded quality in shuffled slots; both the selector
        // and the MSSD oracle should find the cleanest one.
        int offset = shift(rng);
        std::vector<Pose> hyps(5);
        for (int h = 0; h < 5; ++h) {
            double scale = 0.25 + 1.0 * h;
            hyps[(h + offset) % 5] = sample_pose_noise(
                scene.gt_pose, rng, Vec3{0.003, 0.003, 0.008} * scale, 4.0 * scale);
        }
        int chosen = mock_selector(hyps, scene);
        int best = 0;
        double best_err = std::numeric_limits<double>::infinity();
        for (int h = 0; h < 5; ++h) {
            double e = mssd(hyps[h], scene.gt_pose, mesh);
            if (e < best_err) {
                best_err = e;
                best = h;
            }
        }
        agree += chosen == best;
    }
    CHECK(agree >= 90);
}

TEST_CASE("scene sampling is deterministic and keeps the object in frame") {
    Mesh mesh = make_icosphere(2, 0.06);
    std::mt19937_64 a(5), b(5);
    SyntheticScene sa = sample_scene(mesh, kCam, kSize, a);
    SyntheticScene sb = sample_scene(mesh, kCam, kSize, b);
    CHECK((sa.gt_pose.rotation - sb.gt_pose.rotation).cwiseAbs().maxCoeff() == 0.0);
    int mask = 0;
    for (double v : sa.depth.values) mask += v > 0.0;
    CHECK(mask > 500);
}
