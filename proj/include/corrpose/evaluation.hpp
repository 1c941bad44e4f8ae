#pragma once

#include <map>
#include <string>
#include <vector>

#include "corrpose/mesh.hpp"
#include "corrpose/pipeline.hpp"

namespace corrpose {

// BOP-style pose errors for one estimate. vsd holds one value per tau in
// {0.05, ..., 0.50} x diameter.
struct PoseError {
    std::vector<double> vsd;
    double mssd = 0.0;  // meters
    double mspd = 0.0;  // pixels
};

inline std::vector<double> vsd_tau_fractions() {
    std::vector<double> taus;
    for (int i = 1; i <= 10; ++i) taus.push_back(0.05 * i);
    return taus;
}

// min over symmetries S of max over sampled vertices |p(x) - gt(S(x))|.
double mssd(const Pose& p, const Pose& gt, const Mesh& mesh);

// Same, measured as reprojection distance in pixels.
double mspd(const Pose& p, const Pose& gt, const Mesh& mesh, const Intrinsics& k);

// Visible Surface Discrepancy against a scene depth map, one value per tau.
// Occlusion tolerance delta defaults to the 15 mm convention. Throws when the
// visibility union is empty.
std::vector<double> vsd_multi(const Pose& p, const Pose& gt, const Mesh& mesh,
                              const Intrinsics& k, const DepthMap& scene_depth,
                              const std::vector<double>& taus, double delta = 0.015);
double vsd(const Pose& p, const Pose& gt, const Mesh& mesh, const Intrinsics& k,
           const DepthMap& scene_depth, double tau, double delta = 0.015);

PoseError compute_pose_error(const Pose& p, const Pose& gt, const Mesh& mesh,
                             const Intrinsics& k, const DepthMap& scene_depth);

// A PoseError that fails every threshold; stands in for failed estimates.
PoseError worst_pose_error();

struct RecallSummary {
    double ar_vsd = 0.0;
    double ar_mssd = 0.0;
    double ar_mspd = 0.0;
    double ar = 0.0;  // mean of the three
};

// Threshold-averaged recalls: MSSD over theta in {0.05,...,0.50} x diameter,
// MSPD over {5r,...,50r} px with r = image_width/640, VSD over the full
// tau x theta product with theta in {0.05,...,0.50}.
RecallSummary average_recall(const std::vector<PoseError>& errors, const Mesh& mesh,
                             const Intrinsics& k, int image_width = 0);

struct SceneResult {
    std::string mesh_name;
    int scene_id = 0;
    bool failed = false;
    std::string error_message;
    PoseError error;
    double rotation_error_rad = 0.0;
    double translation_error_m = 0.0;
    double seconds = 0.0;
    Pose estimated;
    Pose gt;
    double score = 0.0;
    std::vector<std::vector<double>> lm_objectives;
    SceneEstimate detail;  // full pipeline trace
};

struct MeshRecall {
    std::string mesh_name;
    RecallSummary recall;
    int scenes = 0;
    int failures = 0;
};

struct BenchmarkReport {
    std::vector<SceneResult> scenes;
    std::vector<MeshRecall> per_mesh;
    RecallSummary overall;  // mean of the per-mesh recalls
    std::map<std::string, double> stage_seconds;
};

struct BenchmarkConfig {
    std::vector<std::string> meshes{"cube", "icosphere", "l_bracket"};
    int scenes_per_mesh = 20;
    NoiseModel noise;
    uint64_t seed = 0;
    int image_size = 224;
    int jobs = 1;
    PipelineConfig pipeline;
    // "full" runs coarse+refine; "refine_only" starts refinement from the
    // ground-truth pose perturbed by the standard training noise.
    std::string mode = "full";
};

// Deterministic synthetic benchmark: seeded scenes per mesh, oracle
// predictors, full pipeline, BOP-style errors and recalls. Per-scene failures
// are recorded, not thrown.
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

// Serialization of results.
void write_report_json(const BenchmarkReport& report, const std::string& path);
// BOP-convention CSV: scene_id,im_id,obj_id,score,R,t,time with t in mm.
void write_bop_csv(const BenchmarkReport& report, const std::string& path);

// Minimal SVG plotting (histogram / line chart) for the CLI.
void write_svg_histogram(const std::vector<double>& values, int bins, const std::string& title,
                         const std::string& path);
void write_svg_lines(const std::vector<double>& xs,
                     const std::map<std::string, std::vector<double>>& series,
                     const std::string& title, const std::string& path);

}  // namespace corrpose
