#pragma once

#include <string>
#include <vector>

#include "corrpose/mocks.hpp"
#include "corrpose/pnp.hpp"

namespace corrpose {

struct PipelineConfig {
    RansacConfig ransac;
    double radius_px = 1.0;       // P_R radius for confidence fusion
    int refine_outer_iters = 2;   // render-and-compare rounds
    int hypotheses = 1;           // N
    // Depth agreement tolerance of the hypothesis selection score, as a
    // fraction of the mesh diameter.
    double select_depth_tol_frac = 0.02;
};

struct HypothesisTrace {
    int template_index = -1;
    double similarity = 0.0;
    Pose coarse_pose;
    Pose refined_pose;
    std::vector<std::vector<double>> lm_objectives;  // per outer iteration
    double select_score = 0.0;
    bool ok = false;
    std::string error;
};

struct SceneEstimate {
    bool ok = false;
    std::string error;
    Pose pose;
    int selected_template = -1;
    int selected_hypothesis = -1;
    std::vector<double> similarity_scores;  // one per template
    std::vector<HypothesisTrace> hypotheses;
    double seconds_coarse = 0.0;
    double seconds_refine = 0.0;
    double seconds_select = 0.0;
};

// Re-rendered agreement score used to rank refined hypotheses without access
// to the ground-truth pose: the fraction of the mask union where the
// hypothesis render agrees with the observed scene depth within tol.
double rendered_agreement_score(const SyntheticScene& scene, const Pose& hypothesis,
                                double depth_tol);

// Full pipeline on one scene: oracle coarse tensors for all templates,
// similarity ranking, RANSAC+EPnP per hypothesis, render-and-compare
// refinement, and (for N > 1) agreement-based selection.
SceneEstimate estimate_scene(const SyntheticScene& scene, const TemplateSet& templates,
                             const NoiseModel& nm, const PipelineConfig& cfg);

// Refinement-only variant starting from a given initial pose.
SceneEstimate refine_only(const SyntheticScene& scene, const Pose& pose_init,
                          const NoiseModel& nm, const PipelineConfig& cfg);

}  // namespace corrpose
