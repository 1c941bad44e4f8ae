#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "corrpose/evaluation.hpp"
#include "test_util.hpp"

using namespace corrpose;
using namespace corrpose::testutil;

namespace {
const int kSize = 224;
const Intrinsics kCam{double(kSize), double(kSize), kSize * 0.5, kSize * 0.5};
}

TEST_CASE("estimate_scene: zero-noise pipeline recovers the pose") {
    for (const char* name : {"cube", "icosphere", "l_bracket"}) {
        Mesh mesh = mesh_by_name(name);
        TemplateConfig tcfg;
        tcfg.size = kSize;
        TemplateSet templates = build_templates(mesh, tcfg);
        std::mt19937_64 rng(101);
        NoiseModel nm;
        PipelineConfig cfg;
        for (int s = 0; s < 4; ++s) {
            SyntheticScene scene = sample_scene(mesh, kCam, kSize, rng);
            SceneEstimate est = estimate_scene(scene, templates, nm, cfg);
            REQUIRE(est.ok);
            CHECK(pose_rotation_error(est.pose, scene.gt_pose) < 0.1 * M_PI / 180.0);
            CHECK(pose_translation_error(est.pose, scene.gt_pose) < 1e-3 * mesh.diameter);
            CHECK(est.similarity_scores.size() == 42);
            CHECK(est.selected_template >= 0);
        }
    }
}

TEST_CASE("estimate_scene: oracle similarity peaks at the aligned template") {
    Mesh mesh = make_l_bracket();
    TemplateConfig tcfg;
    tcfg.size = kSize;
    TemplateSet templates = build_templates(mesh, tcfg);
    NoiseModel nm;
    // Query scene taken exactly from template 13's viewpoint.
    const Template& target = templates.templates[13];
    SyntheticScene scene = make_scene(mesh, target.viewpoint.camera_pose, target.intrinsics,
                                      kSize);
    std::vector<double> scores;
    for (size_t t = 0; t < templates.templates.size(); ++t) {
        auto [c, u] = mock_coarse(scene, templates.templates[t], nm, t);
        scores.push_back(similarity_score(c));
    }
    CHECK(select_template(scores) == 13);
}

TEST_CASE("estimate_scene: N hypotheses are traced and selection stays sane") {
    Mesh mesh = make_l_bracket();
    TemplateConfig tcfg;
    tcfg.size = kSize;
    TemplateSet templates = build_templates(mesh, tcfg);
    std::mt19937_64 rng(77);
    SyntheticScene scene = sample_scene(mesh, kCam, kSize, rng);
    NoiseModel nm;
    nm.offset_sigma = 0.05;
    nm.seed = 3;
    PipelineConfig cfg;
    cfg.hypotheses = 5;
    SceneEstimate est = estimate_scene(scene, templates, nm, cfg);
    REQUIRE(est.ok);
    CHECK(est.hypotheses.size() == 5);
    CHECK(est.selected_hypothesis >= 0);
    CHECK(est.selected_hypothesis < 5);
    for (const HypothesisTrace& h : est.hypotheses) {
        if (!h.ok) continue;
        for (const auto& seq : h.lm_objectives)
            for (size_t i = 1; i < seq.size(); ++i) CHECK(seq[i] <= seq[i - 1]);
    }
}

TEST_CASE("refine_only: recovers from standard training noise") {
    Mesh mesh = make_cube(0.1);
    std::mt19937_64 rng(55);
    SyntheticScene scene = sample_scene(mesh, kCam, kSize, rng);
    Pose init = sample_pose_noise(scene.gt_pose, rng);
    NoiseModel nm;
    PipelineConfig cfg;
    cfg.refine_outer_iters = 3;
    SceneEstimate est = refine_only(scene, init, nm, cfg);
    REQUIRE(est.ok);
    CHECK(pose_rotation_error(est.pose, scene.gt_pose) < 0.1 * M_PI / 180.0);
    CHECK(pose_translation_error(est.pose, scene.gt_pose) < 1e-4);
}

TEST_CASE("run_benchmark: zero noise reaches AR 1.0 and is deterministic") {
    BenchmarkConfig cfg;
    cfg.meshes = {"cube", "l_bracket"};
    cfg.scenes_per_mesh = 3;
    cfg.seed = 11;
    BenchmarkReport a = run_benchmark(cfg);
    CHECK(a.overall.ar == doctest::Approx(1.0));
    CHECK(a.overall.ar ==
          doctest::Approx((a.overall.ar_vsd + a.overall.ar_mssd + a.overall.ar_mspd) / 3.0)
              .epsilon(1e-12));
    for (const SceneResult& r : a.scenes) {
        CHECK(!r.failed);
        CHECK(r.rotation_error_rad < 0.1 * M_PI / 180.0);
    }

    BenchmarkReport b = run_benchmark(cfg);
    REQUIRE(a.scenes.size() == b.scenes.size());
    for (size_t i = 0; i < a.scenes.size(); ++i) {
        CHECK(a.scenes[i].error.mssd == b.scenes[i].error.mssd);
        CHECK((a.scenes[i].estimated.rotation - b.scenes[i].estimated.rotation)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("run_benchmark: multi-hypothesis never loses to single on shared seeds") {
    BenchmarkConfig base;
    base.meshes = {"l_bracket"};
    base.scenes_per_mesh = 6;
    base.seed = 21;
    base.noise.class_flip_prob = 0.1;
    base.noise.offset_sigma = 0.1;
    base.noise.flow_sigma_b = 1.0;
    base.noise.occlusion_frac = 0.15;

    BenchmarkConfig n1 = base;
    n1.pipeline.hypotheses = 1;
    BenchmarkConfig n5 = base;
    n5.pipeline.hypotheses = 5;
    BenchmarkReport r1 = run_benchmark(n1);
    BenchmarkReport r5 = run_benchmark(n5);
    CHECK(r5.overall.ar >= r1.overall.ar - 0.02);
}

TEST_CASE("run_benchmark: jobs > 1 reproduces the single-threaded report") {
    BenchmarkConfig cfg;
    cfg.meshes = {"cube"};
    cfg.scenes_per_mesh = 4;
    cfg.seed = 31;
    cfg.noise.offset_sigma = 0.05;
    BenchmarkReport a = run_benchmark(cfg);
    cfg.jobs = 2;
    BenchmarkReport b = run_benchmark(cfg);
    REQUIRE(a.scenes.size() == b.scenes.size());
    for (size_t i = 0; i < a.scenes.size(); ++i)
        CHECK(a.scenes[i].error.mssd == b.scenes[i].error.mssd);
    CHECK(a.overall.ar == b.overall.ar);
}
