#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "corrpose/correspondence.hpp"
#include "corrpose/flow.hpp"
#include "corrpose/mesh.hpp"
#include "corrpose/templates.hpp"

namespace corrpose {

// Noise injected by the oracle predictors. All-zero fields give exact oracles.
struct NoiseModel {
    double class_flip_prob = 0.0;  // per matched cell
    double offset_sigma = 0.0;     // patches, Gaussian, clamped to [-0.5, 0.5]
    double flow_sigma_b = 0.0;     // pixels, Laplace scale of injected flow noise
    double occlusion_frac = 0.0;   // fraction of on-object cells made no-match
    uint64_t seed = 0;

    void check() const;
};

// Splitmix64 step; used to derive independent deterministic substreams.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// A synthetic observation: the mesh under a ground-truth pose with its
// rendered depth standing in for the query image.
struct SyntheticScene {
    const Mesh* mesh = nullptr;
    Pose gt_pose;
    Intrinsics k;
    int size = 0;
    DepthMap depth;  // rendered under gt_pose
};

SyntheticScene make_scene(const Mesh& mesh, const Pose& gt, const Intrinsics& k, int size);

struct SceneSamplingConfig {
    double fill_fraction = 0.8;
    double distance_jitter = 0.1;   // relative, uniform
    double lateral_jitter = 0.02;   // relative to distance, uniform
};

// Random viewpoint, in-plane roll, and jittered distance; object stays in frame.
SyntheticScene sample_scene(const Mesh& mesh, const Intrinsics& k, int size, std::mt19937_64& rng,
                            const SceneSamplingConfig& cfg = {});

// Perturbation used to produce refiner training inputs: Gaussian translation
// noise sigma (0.01, 0.01, 0.05) m and 15-degree-per-Euler-axis rotation noise.
Pose sample_pose_noise(const Pose& gt, std::mt19937_64& rng,
                       const Vec3& trans_sigma = {0.01, 0.01, 0.05},
                       double rot_sigma_deg = 15.0);

// Oracle coarse predictor: ground-truth correspondence tensors with label
// smoothing, optional class flips, clamped Gaussian offset noise, and a
// BFS-grown occluded region of no-match cells. Deterministic given
// (scene, nm.seed, stream).
std::pair<ClassTensor, OffsetTensor> mock_coarse(const SyntheticScene& scene,
                                                 const Template& tmpl, const NoiseModel& nm,
                                                 uint64_t stream = 0);

struct MockRefinerOutput {
    FlowField flow;
    Template render;  // depth render at pose_init
};

// Oracle refiner: exact flow induced by pose_init -> gt_pose plus Laplace
// noise; b = flow_sigma_b (1e-3 when noiseless); certainty = ground-truth
// visibility of the flow target in the query view; sensitivity = 1 on mask.
MockRefinerOutput mock_refiner(const SyntheticScene& scene, const Pose& pose_init,
                               const NoiseModel& nm, uint64_t stream = 0);

// Oracle selector: scores each hypothesis by negative mean absolute rendered
// depth difference against the scene's ground-truth render over the mask
// union; returns the argmax (ties -> lowest index).
int mock_selector(const std::vector<Pose>& hypotheses, const SyntheticScene& scene);

}  // namespace corrpose
