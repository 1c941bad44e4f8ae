// Command-line front end: template generation, synthetic-scene estimation,
// benchmark evaluation, PnP-layer gradient checking, and noise sweeps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "corrpose/evaluation.hpp"
#include "corrpose/mesh.hpp"
#include "corrpose/templates.hpp"

using namespace corrpose;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitThreshold = 1;
constexpr int kExitUsage = 2;

json pose_json(const Pose& p) {
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) r[3 * i + c] = p.rotation(i, c);
    return {{"R", r}, {"t", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
}

NoiseModel parse_noise(const json& j) {
    reject_unknown(j, {"class_flip_prob", "offset_sigma", "flow_sigma_b", "occlusion_frac"},
                   "noise");
    NoiseModel nm;
    nm.class_flip_prob = j.value("class_flip_prob", 0.0);
    nm.offset_sigma = j.value("offset_sigma", 0.0);
    nm.flow_sigma_b = j.value("flow_sigma_b", 0.0);
    nm.occlusion_frac = j.value("occlusion_frac", 0.0);
    nm.check();
    return nm;
}

BenchmarkConfig parse_benchmark_config(const json& j, const std::string& where) {
    reject_unknown(j,
                   {"seed", "meshes", "scenes_per_mesh", "hypotheses", "image_size", "jobs",
                    "mode", "noise", "out_dir", "radius_px", "refine_outer_iters", "sweep"},
                   where);
    BenchmarkConfig cfg;
    if (j.contains("meshes")) {
        cfg.meshes.clear();
        for (const auto& m : j.at("meshes")) cfg.meshes.push_back(m.get<std::string>());
        if (cfg.meshes.empty()) throw ConfigError("meshes: list must be non-empty");
    }
    cfg.seed = j.value("seed", 0ULL);
    cfg.scenes_per_mesh = j.value("scenes_per_mesh", 20);
    if (cfg.scenes_per_mesh <= 0) throw ConfigError("scenes_per_mesh: must be positive");
    cfg.image_size = j.value("image_size", 224);
    if (cfg.image_size < 32 || cfg.image_size % 16 != 0)
        throw ConfigError("image_size: must be a multiple of 16, at least 32");
    cfg.jobs = j.value("jobs", 1);
    if (cfg.jobs < 1) throw ConfigError("jobs: must be at least 1");
    cfg.mode = j.value("mode", std::string("full"));
    if (cfg.mode != "full" && cfg.mode != "refine_only")
        throw ConfigError("mode: expected \"full\" or \"refine_only\"");
    if (j.contains("noise")) cfg.noise = parse_noise(j.at("noise"));
    cfg.pipeline.hypotheses = j.value("hypotheses", 1);
    if (cfg.pipeline.hypotheses < 1 || cfg.pipeline.hypotheses > 42)
        throw ConfigError("hypotheses: must be in [1, 42]");
    cfg.pipeline.radius_px = j.value("radius_px", 1.0);
    if (cfg.pipeline.radius_px <= 0.0) throw ConfigError("radius_px: must be positive");
    cfg.pipeline.refine_outer_iters = j.value("refine_outer_iters", 2);
    if (cfg.pipeline.refine_outer_iters < 1)
        throw ConfigError("refine_outer_iters: must be at least 1");
    return cfg;
}

// Environment override has the last word on the seed.
void apply_env_seed(BenchmarkConfig& cfg) {
    if (const char* env = std::getenv("CORRPOSE_SEED")) {
        try {
            cfg.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("CORRPOSE_SEED must be an unsigned integer");
        }
    }
}

void write_trace_json(const BenchmarkReport& report, const std::string& path) {
    json traces = json::array();
    for (const SceneResult& r : report.scenes) {
        json t{{"mesh", r.mesh_name},
               {"scene_id", r.scene_id},
               {"failed", r.failed},
               {"selected_template", r.detail.selected_template},
               {"selected_hypothesis", r.detail.selected_hypothesis},
               {"similarity_scores", r.detail.similarity_scores}};
        json hyps = json::array();
        for (const HypothesisTrace& h : r.detail.hypotheses) {
            json hj{{"template", h.template_index},
                    {"similarity", h.similarity},
                    {"ok", h.ok},
                    {"select_score", h.select_score},
                    {"lm_objectives", h.lm_objectives}};
            if (h.ok) {
                hj["coarse_pose"] = pose_json(h.coarse_pose);
                hj["refined_pose"] = pose_json(h.refined_pose);
            } else {
                hj["error"] = h.error;
            }
            hyps.push_back(hj);
        }
        t["hypotheses"] = hyps;
        traces.push_back(t);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write trace file: " + path);
    out << traces.dump(2) << "\n";
}

int cmd_gen_templates(const std::string& mesh_path, const std::string& out_dir, int size,
                      const std::string& metadata, const std::string& mesh_id) {
    if (size < 32 || size % 16 != 0)
        throw ConfigError("--size must be a multiple of 16, at least 32");
    Mesh mesh = mesh_by_name(mesh_path, metadata);
    TemplateConfig cfg;
    cfg.size = size;
    cfg.mesh_id = mesh_id.empty() ? std::filesystem::path(mesh_path).stem().string() : mesh_id;
    TemplateSet set = build_templates(mesh, cfg);
    save_templates(set, out_dir);
    std::cout << "wrote " << set.templates.size() << " templates to " << out_dir << "\n";
    return kExitOk;
}

int cmd_estimate(const std::string& config_path) {
    json j = load_config(config_path);
    BenchmarkConfig cfg = parse_benchmark_config(j, config_path);
    apply_env_seed(cfg);
    std::string out_dir = j.value("out_dir", std::string("out"));
    std::filesystem::create_directories(out_dir);

    BenchmarkReport report = run_benchmark(cfg);
    write_bop_csv(report, out_dir + "/results.csv");
    write_trace_json(report, out_dir + "/trace.json");

    int failures = 0;
    for (const SceneResult& r : report.scenes) {
        if (r.failed) {
            ++failures;
            std::cerr << "scene " << r.mesh_name << "/" << r.scene_id
                      << " failed: " << r.error_message << "\n";
        }
    }
    std::cout << "estimated " << report.scenes.size() - failures << "/" << report.scenes.size()
              << " scenes, ar=" << report.overall.ar << "\n";
    return failures == int(report.scenes.size()) ? kExitThreshold : kExitOk;
}

int cmd_evaluate(const std::string& config_path) {
    json j = load_config(config_path);
    BenchmarkConfig cfg = parse_benchmark_config(j, config_path);
    apply_env_seed(cfg);
    std::string out_dir = j.value("out_dir", std::string("out"));
    std::filesystem::create_directories(out_dir);

    BenchmarkReport report = run_benchmark(cfg);
    write_report_json(report, out_dir + "/report.json");
    write_bop_csv(report, out_dir + "/results.csv");
    std::vector<double> mssd_errors;
    for (const SceneResult& r : report.scenes)
        if (!r.failed) mssd_errors.push_back(r.error.mssd);
    write_svg_histogram(mssd_errors, 20, "MSSD (m)", out_dir + "/mssd_hist.svg");

    std::cout << "ar=" << report.overall.ar << " ar_vsd=" << report.overall.ar_vsd
              << " ar_mssd=" << report.overall.ar_mssd
              << " ar_mspd=" << report.overall.ar_mspd << "\n";
    return kExitOk;
}

// Random dense refinement problems for the gradient check: scattered depth,
// noisy flow, patchy confidence.
RefineProblem random_refine_problem(std::mt19937_64& rng) {
    const int side = 8;
    std::uniform_real_distribution<double> depth_dist(0.8, 1.2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Pose pose_init;
    Vec3 axis{gauss(rng), gauss(rng), gauss(rng)};
    pose_init.rotation = rotation_exp(axis.normalized() * unif(rng) * M_PI);
    pose_init.translation = {0.2 * (unif(rng) - 0.5), 0.2 * (unif(rng) - 0.5),
                             1.0 + 0.3 * unif(rng)};
    Pose pose_gt = pose_init;
    Vec3 axis2{gauss(rng), gauss(rng), gauss(rng)};
    pose_gt.rotation = rotation_exp(axis2.normalized() * 0.05) * pose_init.rotation;
    pose_gt.translation += Vec3{gauss(rng), gauss(rng), gauss(rng)} * 0.01;

    Intrinsics k{5.0 * side, 5.0 * side, side * 0.5, side * 0.5};
    RefineProblem p;
    p.pose_init = pose_init;
    p.width = side;
    p.height = side;
    p.k = k;
    p.depth_r = DepthMap(side, side);
    p.flow.assign(size_t(side) * side, Vec2::Zero());
    p.confidence.assign(size_t(side) * side, 0.0);
    auto laplace = [&]() {
        double v = std::clamp(unif(rng) - 0.5, -0.499, 0.499);
        return -0.3 * std::copysign(std::log(1.0 - 2.0 * std::abs(v)), v);
    };
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            size_t i = size_t(y) * side + x;
            p.depth_r.at(x, y) = depth_dist(rng);
            Vec2 center{x + 0.5, y + 0.5};
            Vec3 model_pt = backproject(pose_init, k, p.depth_r, center);
            Vec2 target = project_point(pose_gt, k, model_pt);
            p.flow[i] = target - center + Vec2{laplace(), laplace()};
            p.confidence[i] = unif(rng) < 0.1 ? 0.0 : 0.3 + 0.7 * unif(rng);
        }
    }
    return p;
}

int cmd_gradcheck(uint64_t seed, int count, bool corrupt) {
    if (count <= 0) throw ConfigError("--count must be positive");
    if (const char* env = std::getenv("CORRPOSE_SEED")) {
        try {
            seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("CORRPOSE_SEED must be an unsigned integer");
        }
    }

    auto tangent_at = [](const Pose& base, const Pose& moved) {
        Eigen::Matrix<double, 6, 1> d;
        d.head<3>() = rotation_log(moved.rotation * base.rotation.transpose());
        d.tail<3>() = moved.translation - base.translation;
        return d;
    };

    double worst = 0.0;
    int worst_problem = -1;
    std::mt19937_64 rng(seed);
    for (int n = 0; n < count; ++n) {
        RefineProblem p = random_refine_problem(rng);
        auto [res, jac] = refine_pose_grad(p);
        if (corrupt) jac.d_pose_d_flow(0, 0) += 1e-2;  // negative-control hook

        double max_norm = 0.0;
        for (int c = 0; c < jac.d_pose_d_flow.cols(); ++c)
            max_norm = std::max(max_norm, jac.d_pose_d_flow.col(c).norm());
        const double floor = std::max(1e-12, 1e-6 * max_norm);
        const double h_flow = 1e-4;
        const double h_weight = 1e-3;

        for (size_t i = 0; i < p.pixel_count(); ++i) {
            for (int axis = 0; axis < 2; ++axis) {
                RefineProblem plus = p, minus = p;
                plus.flow[i][axis] += h_flow;
                minus.flow[i][axis] -= h_flow;
                Eigen::Matrix<double, 6, 1> fd =
                    (tangent_at(res.pose, refine_pose(plus).pose) -
                     tangent_at(res.pose, refine_pose(minus).pose)) /
                    (2.0 * h_flow);
                Eigen::Matrix<double, 6, 1> an = jac.d_pose_d_flow.col(2 * i + axis);
                if (an.norm() <= floor && fd.norm() <= floor) continue;
                double rel = (an - fd).norm() / std::max({an.norm(), fd.norm(), floor});
                if (rel > worst) {
                    worst = rel;
                    worst_problem = n;
                }
            }
            if (p.confidence[i] > 0.0) {
                RefineProblem plus = p, minus = p;
                plus.confidence[i] = std::min(1.0, plus.confidence[i] + h_weight);
                minus.confidence[i] = std::max(0.0, minus.confidence[i] - h_weight);
                double actual_h = (plus.confidence[i] - minus.confidence[i]) * 0.5;
                if (actual_h <= 0.0) continue;
                Eigen::Matrix<double, 6, 1> fd =
                    (tangent_at(res.pose, refine_pose(plus).pose) -
                     tangent_at(res.pose, refine_pose(minus).pose)) /
                    (2.0 * actual_h);
                Eigen::Matrix<double, 6, 1> an = jac.d_pose_d_weight.col(i);
                if (an.norm() <= floor && fd.norm() <= floor) continue;
                double rel = (an - fd).norm() / std::max({an.norm(), fd.norm(), floor});
                if (rel > worst) {
                    worst = rel;
                    worst_problem = n;
                }
            }
        }
    }
    std::cout << "max relative error over " << count << " problems: " << worst << "\n";
    if (worst >= 1e-3) {
        std::cerr << "gradient check FAILED (worst problem index " << worst_problem << ", seed "
                  << seed << ")\n";
        return kExitThreshold;
    }
    return kExitOk;
}

int cmd_sweep(const std::string& config_path) {
    json j = load_config(config_path);
    if (!j.contains("sweep")) throw ConfigError("sweep config requires a \"sweep\" object");
    const json& sw = j.at("sweep");
    reject_unknown(sw, {"param", "values"}, "sweep");
    std::string param = sw.value("param", std::string());
    std::vector<double> values;
    if (sw.contains("values"))
        for (const auto& v : sw.at("values")) values.push_back(v.get<double>());
    const std::vector<std::string> sweepable{"class_flip_prob", "offset_sigma", "flow_sigma_b",
                                             "occlusion_frac", "scale"};
    if (std::find(sweepable.begin(), sweepable.end(), param) == sweepable.end())
        throw ConfigError("sweep.param: expected one of class_flip_prob, offset_sigma, "
                          "flow_sigma_b, occlusion_frac, scale");
    if (values.empty()) throw ConfigError("sweep.values: grid must be non-empty");

    BenchmarkConfig base = parse_benchmark_config(j, config_path);
    apply_env_seed(base);
    std::string out_dir = j.value("out_dir", std::string("out"));
    std::filesystem::create_directories(out_dir);

    std::ofstream csv(out_dir + "/sweep.csv");
    if (!csv) throw IoError("cannot write sweep csv");
    csv << "param,value,ar,ar_vsd,ar_mssd,ar_mspd,failures\n";
    std::map<std::string, std::vector<double>> series;
    for (double v : values) {
        BenchmarkConfig cfg = base;
        if (param == "class_flip_prob") cfg.noise.class_flip_prob = v;
        else if (param == "offset_sigma") cfg.noise.offset_sigma = v;
        else if (param == "flow_sigma_b") cfg.noise.flow_sigma_b = v;
        else if (param == "occlusion_frac") cfg.noise.occlusion_frac = v;
        else {  // combined scale
            cfg.noise.class_flip_prob = std::min(1.0, 0.2 * v);
            cfg.noise.offset_sigma = 0.25 * v;
            cfg.noise.flow_sigma_b = 2.0 * v;
            cfg.noise.occlusion_frac = std::min(1.0, 0.3 * v);
        }
        cfg.noise.check();
        BenchmarkReport report = run_benchmark(cfg);
        int failures = 0;
        for (const SceneResult& r : report.scenes) failures += r.failed;
        csv << param << "," << v << "," << report.overall.ar << "," << report.overall.ar_vsd
            << "," << report.overall.ar_mssd << "," << report.overall.ar_mspd << "," << failures
            << "\n";
        series["ar"].push_back(report.overall.ar);
        series["ar_mssd"].push_back(report.overall.ar_mssd);
        std::cout << param << "=" << v << " ar=" << report.overall.ar << "\n";
    }
    write_svg_lines(values, series, "AR vs " + param, out_dir + "/sweep.svg");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"correspondence-based 6DoF pose estimation pipeline"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-templates", "render the 42-viewpoint template set");
    std::string mesh_path, out_dir, metadata, mesh_id;
    int size = 224;
    gen->add_option("mesh", mesh_path, "mesh file (.obj/.ply) or builtin name")->required();
    gen->add_option("out", out_dir, "output directory")->required();
    gen->add_option("--size", size, "square template size in pixels");
    gen->add_option("--metadata", metadata, "per-model JSON metadata");
    gen->add_option("--mesh-id", mesh_id, "identifier stored in the index");

    auto* est = app.add_subcommand("estimate", "run the pipeline on synthetic scenes");
    std::string est_config;
    est->add_option("config", est_config, "JSON run configuration")->required();

    auto* eval = app.add_subcommand("evaluate", "run the synthetic benchmark and report AR");
    std::string eval_config;
    eval->add_option("config", eval_config, "JSON run configuration")->required();

    auto* grad = app.add_subcommand("gradcheck", "verify PnP-layer gradients numerically");
    uint64_t gc_seed = 0;
    int gc_count = 20;
    bool gc_corrupt = false;
    grad->add_option("--seed", gc_seed, "RNG seed");
    grad->add_option("--count", gc_count, "number of random problems");
    grad->add_flag("--corrupt-jacobian", gc_corrupt, "negative-control hook: inject an error");

    auto* sweep = app.add_subcommand("sweep", "benchmark across a noise grid");
    std::string sweep_config;
    sweep->add_option("config", sweep_config, "JSON sweep configuration")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_templates(mesh_path, out_dir, size, metadata, mesh_id);
        if (est->parsed()) return cmd_estimate(est_config);
        if (eval->parsed()) return cmd_evaluate(eval_config);
        if (grad->parsed()) return cmd_gradcheck(gc_seed, gc_count, gc_corrupt);
        if (sweep->parsed()) return cmd_sweep(sweep_config);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitThreshold;
    }
    return kExitUsage;
}
