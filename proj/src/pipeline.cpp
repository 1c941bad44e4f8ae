#include "corrpose/pipeline.hpp"

#include <chrono>
#include <cmath>

namespace corrpose {

namespace {

double now_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

// 2D-3D correspondences from decoded matches: the template pixel lifts to a
// model-frame surface point through the template depth, paired with the query
// pixel.
Corr2D3D matches_to_2d3d(const MatchSet& matches, const Template& tmpl) {
    Corr2D3D corr;
    for (const Match& m : matches.matches) {
        if (!tmpl.depth.contains(m.target_px)) continue;
        double d = surface_depth_at(tmpl.depth, m.target_px);
        if (d <= 0.0) continue;
        corr.points3d.push_back(
            backproject_at_depth(tmpl.viewpoint.camera_pose, tmpl.intrinsics, m.target_px, d));
        corr.points2d.push_back(m.query_px);
        corr.weights.push_back(m.weight);
    }
    return corr;
}

}  // namespace

double rendered_agreement_score(const SyntheticScene& scene, const Pose& hypothesis,
                                double depth_tol) {
    DepthMap render = render_depth(*scene.mesh, hypothesis, scene.k, scene.size, scene.size);
    size_t agree = 0, unions = 0;
    for (size_t i = 0; i < render.values.size(); ++i) {
        double a = render.values[i], b = scene.depth.values[i];
        if (a <= 0.0 && b <= 0.0) continue;
        ++unions;
        if (a > 0.0 && b > 0.0 && std::abs(a - b) <= depth_tol) ++agree;
    }
    return unions == 0 ? 0.0 : double(agree) / double(unions);
}

SceneEstimate estimate_scene(const SyntheticScene& scene, const TemplateSet& templates,
                             const NoiseModel& nm, const PipelineConfig& cfg) {
    SceneEstimate out;
    double t0 = now_seconds();

    // Coarse tensors and similarity per template; the oracle stream is keyed
    // by template index so results do not depend on N.
    std::vector<std::pair<ClassTensor, OffsetTensor>> tensors;
    tensors.reserve(templates.templates.size());
    out.similarity_scores.reserve(templates.templates.size());
    for (size_t t = 0; t < templates.templates.size(); ++t) {
        tensors.push_back(mock_coarse(scene, templates.templates[t], nm, uint64_t(t)));
        out.similarity_scores.push_back(similarity_score(tensors.back().first));
    }
    std::vector<int> ranked = select_template_topn(out.similarity_scores,
                                                   std::max(1, cfg.hypotheses));
    out.selected_template = ranked.empty() ? -1 : ranked[0];
    out.seconds_coarse = now_seconds() - t0;

    t0 = now_seconds();
    for (size_t h = 0; h < ranked.size(); ++h) {
        int t = ranked[h];
        HypothesisTrace trace;
        trace.template_index = t;
        trace.similarity = out.similarity_scores[t];
        try {
            MatchSet matches = decode_matches(tensors[t].first, tensors[t].second);
            Corr2D3D corr = matches_to_2d3d(matches, templates.templates[t]);
            RansacConfig rcfg = cfg.ransac;
            rcfg.seed = mix_seed(cfg.ransac.seed, uint64_t(t));
            trace.coarse_pose = ransac_pnp(corr, scene.k, rcfg).pose;

            Pose pose = trace.coarse_pose;
            for (int round = 0; round < cfg.refine_outer_iters; ++round) {
                MockRefinerOutput ref = mock_refiner(scene, pose, nm, mix_seed(h, round));
                RefineProblem problem;
                problem.pose_init = pose;
                problem.width = scene.size;
                problem.height = scene.size;
                problem.flow = ref.flow.mu;
                problem.confidence = fuse_confidence(ref.flow, cfg.radius_px);
                problem.depth_r = ref.render.depth;
                problem.k = scene.k;
                RefineResult res = refine_pose(problem);
                trace.lm_objectives.push_back(res.lm_objectives);
                pose = res.pose;
            }
            trace.refined_pose = pose;
            trace.ok = true;
        } catch (const Error& e) {
            trace.error = e.what();
        }
        out.hypotheses.push_back(std::move(trace));
    }
    out.seconds_refine = now_seconds() - t0;

    t0 = now_seconds();
    double tol = cfg.select_depth_tol_frac * scene.mesh->diameter;
    int best = -1;
    double best_score = -1.0;
    for (size_t h = 0; h < out.hypotheses.size(); ++h) {
        HypothesisTrace& trace = out.hypotheses[h];
        if (!trace.ok) continue;
        trace.select_score = out.hypotheses.size() > 1
                                 ? rendered_agreement_score(scene, trace.refined_pose, tol)
                                 : 1.0;
        if (trace.select_score > best_score) {
            best_score = trace.select_score;
            best = int(h);
        }
    }
    out.seconds_select = now_seconds() - t0;

    if (best < 0) {
        out.error = out.hypotheses.empty() ? "no hypotheses"
                                           : out.hypotheses[0].error;
        return out;
    }
    out.selected_hypothesis = best;
    out.pose = out.hypotheses[best].refined_pose;
    out.ok = true;
    return out;
}

SceneEstimate refine_only(const SyntheticScene& scene, const Pose& pose_init,
                          const NoiseModel& nm, const PipelineConfig& cfg) {
    SceneEstimate out;
    double t0 = now_seconds();
    HypothesisTrace trace;
    trace.coarse_pose = pose_init;
    try {
        Pose pose = pose_init;
        for (int round = 0; round < cfg.refine_outer_iters; ++round) {
            MockRefinerOutput ref = mock_refiner(scene, pose, nm, uint64_t(round));
            RefineProblem problem;
            problem.pose_init = pose;
            problem.width = scene.size;
            problem.height = scene.size;
            problem.flow = ref.flow.mu;
            problem.confidence = fuse_confidence(ref.flow, cfg.radius_px);
            problem.depth_r = ref.render.depth;
            problem.k = scene.k;
            RefineResult res = refine_pose(problem);
            trace.lm_objectives.push_back(res.lm_objectives);
            pose = res.pose;
        }
        trace.refined_pose = pose;
        trace.ok = true;
        out.pose = pose;
        out.ok = true;
        out.selected_hypothesis = 0;
    } catch (const Error& e) {
        trace.error = e.what();
        out.error = e.what();
    }
    out.seconds_refine = now_seconds() - t0;
    out.hypotheses.push_back(std::move(trace));
    return out;
}

}  // namespace corrpose
