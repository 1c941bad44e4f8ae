#include "corrpose/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace corrpose {

namespace {

constexpr int kMetricSamples = 1000;

std::vector<Vec3> metric_samples(const Mesh& mesh) {
    return farthest_point_sample(mesh.vertices, kMetricSamples);
}

double now_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace

double mssd(const Pose& p, const Pose& gt, const Mesh& mesh) {
    std::vector<Vec3> pts = metric_samples(mesh);
    std::vector<Vec3> est(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) est[i] = p.apply(pts[i]);
    double best = std::numeric_limits<double>::infinity();
    for (const Pose& s : mesh.symmetries) {
        Pose gs = gt.compose(s);
        double worst = 0.0;
        for (size_t i = 0; i < pts.size(); ++i)
            worst = std::max(worst, (est[i] - gs.apply(pts[i])).norm());
        best = std::min(best, worst);
    }
    return best;
}

double mspd(const Pose& p, const Pose& gt, const Mesh& mesh, const Intrinsics& k) {
    std::vector<Vec3> pts = metric_samples(mesh);
    std::vector<Vec2> est(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) est[i] = project_point(p, k, pts[i], int(i));
    double best = std::numeric_limits<double>::infinity();
    for (const Pose& s : mesh.symmetries) {
        Pose gs = gt.compose(s);
        double worst = 0.0;
        for (size_t i = 0; i < pts.size(); ++i)
            worst = std::max(worst, (est[i] - project_point(gs, k, pts[i], int(i))).norm());
        best = std::min(best, worst);
    }
    return best;
}

std::vector<double> vsd_multi(const Pose& p, const Pose& gt, const Mesh& mesh,
                              const Intrinsics& k, const DepthMap& scene_depth,
                              const std::vector<double>& taus, double delta) {
    DepthMap d_est = render_depth(mesh, p, k, scene_depth.width, scene_depth.height);
    DepthMap d_gt = render_depth(mesh, gt, k, scene_depth.width, scene_depth.height);

    // bop19 visibility: the model surface is visible where it exists and is
    // not behind the recorded scene surface by more than delta; pixels with
    // missing scene depth count as visible.
    auto visible = [&](const DepthMap& d_model, size_t i) {
        double dm = d_model.values[i];
        if (dm <= 0.0) return false;
        double ds = scene_depth.values[i];
        return ds == 0.0 || dm - ds <= delta;
    };

    size_t union_count = 0;
    size_t inter_count = 0;
    std::vector<double> exceed(taus.size(), 0.0);
    for (size_t i = 0; i < scene_depth.values.size(); ++i) {
        bool vis_gt = visible(d_gt, i);
        bool vis_est = visible(d_est, i) || (vis_gt && d_est.values[i] > 0.0);
        if (!vis_gt && !vis_est) continue;
        ++union_count;
        if (vis_gt && vis_est) {
            ++inter_count;
            double diff = std::abs(d_gt.values[i] - d_est.values[i]);
            for (size_t t = 0; t < taus.size(); ++t)
                if (diff > taus[t]) exceed[t] += 1.0;
        }
    }
    if (union_count == 0) throw Error("vsd: empty visibility union");
    double comp = double(union_count - inter_count);
    std::vector<double> out(taus.size());
    for (size_t t = 0; t < taus.size(); ++t)
        out[t] = (exceed[t] + comp) / double(union_count);
    return out;
}

double vsd(const Pose& p, const Pose& gt, const Mesh& mesh, const Intrinsics& k,
           const DepthMap& scene_depth, double tau, double delta) {
    return vsd_multi(p, gt, mesh, k, scene_depth, {tau}, delta)[0];
}

PoseError compute_pose_error(const Pose& p, const Pose& gt, const Mesh& mesh,
                             const Intrinsics& k, const DepthMap& scene_depth) {
    PoseError e;
    e.mssd = mssd(p, gt, mesh);
    e.mspd = mspd(p, gt, mesh, k);
    std::vector<double> taus;
    for (double f : vsd_tau_fractions()) taus.push_back(f * mesh.diameter);
    e.vsd = vsd_multi(p, gt, mesh, k, scene_depth, taus);
    return e;
}

PoseError worst_pose_error() {
    PoseError e;
    e.mssd = std::numeric_limits<double>::infinity();
    e.mspd = std::numeric_limits<double>::infinity();
    e.vsd.assign(10, 1.0);
    return e;
}

RecallSummary average_recall(const std::vector<PoseError>& errors, const Mesh& mesh,
                             const Intrinsics& k, int image_width) {
    if (errors.empty()) throw EmptyInputError("average_recall: empty error list");
    if (image_width <= 0) image_width = int(std::lround(2.0 * k.cx));
    const double r = double(image_width) / 640.0;

    RecallSummary out;
    int hits = 0, total = 0;
    for (int i = 1; i <= 10; ++i) {
        double theta = 0.05 * i * mesh.diameter;
        for (const PoseError& e : errors) {
            hits += e.mssd < theta;
            ++total;
        }
    }
    out.ar_mssd = double(hits) / double(total);

    hits = 0;
    total = 0;
    for (int i = 1; i <= 10; ++i) {
        double theta = 5.0 * i * r;
        for (const PoseError& e : errors) {
            hits += e.mspd < theta;
            ++total;
        }
    }
    out.ar_mspd = double(hits) / double(total);

    hits = 0;
    total = 0;
    for (const PoseError& e : errors) {
        if (e.vsd.size() != 10) throw ShapeError("average_recall: vsd must have 10 taus");
        for (double v : e.vsd)
            for (int i = 1; i <= 10; ++i) {
                hits += v < 0.05 * i;
                ++total;
            }
    }
    out.ar_vsd = double(hits) / double(total);

    out.ar = (out.ar_vsd + out.ar_mssd + out.ar_mspd) / 3.0;
    return out;
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
    if (cfg.scenes_per_mesh <= 0) throw ConfigError("benchmark: scenes_per_mesh must be > 0");
    if (cfg.mode != "full" && cfg.mode != "refine_only")
        throw ConfigError("benchmark: unknown mode '" + cfg.mode + "'");
    cfg.noise.check();

    BenchmarkReport report;
    double t_pipeline = 0.0;
    double t_metrics = 0.0;

    Intrinsics k{double(cfg.image_size), double(cfg.image_size), cfg.image_size * 0.5,
                 cfg.image_size * 0.5};

    for (size_t mi = 0; mi < cfg.meshes.size(); ++mi) {
        Mesh mesh = mesh_by_name(cfg.meshes[mi]);
        TemplateConfig tcfg;
        tcfg.size = cfg.image_size;
        tcfg.mesh_id = cfg.meshes[mi];
        TemplateSet templates = build_templates(mesh, tcfg);

        std::vector<SceneResult> results(cfg.scenes_per_mesh);
        auto run_scene = [&](int si) {
            SceneResult& r = results[si];
            r.mesh_name = cfg.meshes[mi];
            r.scene_id = si;
            double t0 = now_seconds();
            uint64_t scene_seed = mix_seed(cfg.seed, mix_seed(mi, uint64_t(si)));
            std::mt19937_64 rng(scene_seed);
            SyntheticScene scene = sample_scene(mesh, k, cfg.image_size, rng);
            r.gt = scene.gt_pose;

            NoiseModel nm = cfg.noise;
            nm.seed = scene_seed;
            PipelineConfig pcfg = cfg.pipeline;
            pcfg.ransac.seed = scene_seed;

            SceneEstimate est;
            if (cfg.mode == "refine_only") {
                Pose init = sample_pose_noise(scene.gt_pose, rng);
                est = refine_only(scene, init, nm, pcfg);
            } else {
                est = estimate_scene(scene, templates, nm, pcfg);
            }
            for (const HypothesisTrace& h : est.hypotheses)
                for (const auto& seq : h.lm_objectives) r.lm_objectives.push_back(seq);
            r.detail = est;
            double t1 = now_seconds();
            if (!est.ok) {
                r.failed = true;
                r.error_message = est.error;
                r.error = worst_pose_error();
                r.rotation_error_rad = M_PI;
                r.translation_error_m = std::numeric_limits<double>::infinity();
            } else {
                r.estimated = est.pose;
                r.score = est.selected_hypothesis >= 0
                              ? est.hypotheses[est.selected_hypothesis].select_score
                              : 0.0;
                r.error = compute_pose_error(est.pose, scene.gt_pose, mesh, k, scene.depth);
                r.rotation_error_rad =
                    rotation_geodesic_angle(est.pose.rotation, scene.gt_pose.rotation);
                r.translation_error_m = (est.pose.translation - scene.gt_pose.translation).norm();
            }
            r.seconds = t1 - t0;
        };

        double t0 = now_seconds();
        if (cfg.jobs > 1) {
            std::vector<std::thread> workers;
            std::atomic<int> next{0};
            for (int w = 0; w < cfg.jobs; ++w)
                workers.emplace_back([&]() {
                    for (int si = next.fetch_add(1); si < cfg.scenes_per_mesh;
                         si = next.fetch_add(1))
                        run_scene(si);
                });
            for (auto& w : workers) w.join();
        } else {
            for (int si = 0; si < cfg.scenes_per_mesh; ++si) run_scene(si);
        }
        double mid = now_seconds();
        t_pipeline += mid - t0;

        std::vector<PoseError> errors;
        int failures = 0;
        for (const SceneResult& r : results) {
            errors.push_back(r.error);
            failures += r.failed;
        }
        MeshRecall mr;
        mr.mesh_name = cfg.meshes[mi];
        mr.recall = average_recall(errors, mesh, k, cfg.image_size);
        mr.scenes = cfg.scenes_per_mesh;
        mr.failures = failures;
        report.per_mesh.push_back(mr);
        report.scenes.insert(report.scenes.end(), results.begin(), results.end());
        t_metrics += now_seconds() - mid;
    }

    for (const MeshRecall& mr : report.per_mesh) {
        report.overall.ar_vsd += mr.recall.ar_vsd;
        report.overall.ar_mssd += mr.recall.ar_mssd;
        report.overall.ar_mspd += mr.recall.ar_mspd;
    }
    double nm = double(report.per_mesh.size());
    report.overall.ar_vsd /= nm;
    report.overall.ar_mssd /= nm;
    report.overall.ar_mspd /= nm;
    report.overall.ar =
        (report.overall.ar_vsd + report.overall.ar_mssd + report.overall.ar_mspd) / 3.0;
    report.stage_seconds["pipeline"] = t_pipeline;
    report.stage_seconds["metrics"] = t_metrics;
    return report;
}

namespace {

nlohmann::json pose_json(const Pose& p) {
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) r[3 * i + c] = p.rotation(i, c);
    return {{"R", r}, {"t", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

nlohmann::json recall_json(const RecallSummary& r) {
    return {{"ar_vsd", r.ar_vsd}, {"ar_mssd", r.ar_mssd}, {"ar_mspd", r.ar_mspd}, {"ar", r.ar}};
}

}  // namespace

void write_report_json(const BenchmarkReport& report, const std::string& path) {
    nlohmann::json j;
    j["overall"] = recall_json(report.overall);
    j["per_mesh"] = nlohmann::json::array();
    for (const MeshRecall& mr : report.per_mesh)
        j["per_mesh"].push_back({{"mesh", mr.mesh_name},
                                 {"recall", recall_json(mr.recall)},
                                 {"scenes", mr.scenes},
                                 {"failures", mr.failures}});
    j["stage_seconds"] = report.stage_seconds;
    j["scenes"] = nlohmann::json::array();
    for (const SceneResult& r : report.scenes) {
        nlohmann::json s{{"mesh", r.mesh_name},
                         {"scene_id", r.scene_id},
                         {"failed", r.failed},
                         {"mssd", r.error.mssd},
                         {"mspd", r.error.mspd},
                         {"vsd", r.error.vsd},
                         {"rotation_error_rad", r.rotation_error_rad},
                         {"translation_error_m",
                          std::isfinite(r.translation_error_m) ? r.translation_error_m : -1.0},
                         {"seconds", r.seconds}};
        if (!r.failed) {
            s["pose"] = pose_json(r.estimated);
            s["gt"] = pose_json(r.gt);
        } else {
            s["error"] = r.error_message;
        }
        j["scenes"].push_back(s);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << j.dump(2) << "\n";
}

void write_bop_csv(const BenchmarkReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write csv: " + path);
    out << "scene_id,im_id,obj_id,score,R,t,time\n";
    std::map<std::string, int> obj_ids;
    for (const SceneResult& r : report.scenes) {
        if (!obj_ids.count(r.mesh_name)) obj_ids[r.mesh_name] = int(obj_ids.size()) + 1;
        if (r.failed) continue;
        int obj = obj_ids[r.mesh_name];
        out << obj << "," << r.scene_id << "," << obj << "," << r.score << ",";
        char buf[64];
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 3; ++c) {
                std::snprintf(buf, sizeof(buf), "%.9f", r.estimated.rotation(i, c));
                out << buf << (i == 2 && c == 2 ? "" : " ");
            }
        out << ",";
        for (int i = 0; i < 3; ++i) {
            std::snprintf(buf, sizeof(buf), "%.6f", r.estimated.translation(i) * 1000.0);
            out << buf << (i == 2 ? "" : " ");
        }
        out << "," << r.seconds << "\n";
    }
}

namespace {

void write_svg(const std::string& path, const std::string& body, const std::string& title) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write svg: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='640' height='420' "
           "viewBox='0 0 640 420'>\n"
        << "<rect width='640' height='420' fill='white'/>\n"
        << "<text x='320' y='24' text-anchor='middle' font-family='sans-serif' "
           "font-size='16'>"
        << title << "</text>\n"
        << body << "</svg>\n";
}

}  // namespace

void write_svg_histogram(const std::vector<double>& values, int bins, const std::string& title,
                         const std::string& path) {
    if (bins <= 0) bins = 10;
    double lo = 0.0, hi = 1.0;
    if (!values.empty()) {
        auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        lo = *mn;
        hi = *mx;
        if (hi <= lo) hi = lo + 1.0;
    }
    std::vector<int> counts(bins, 0);
    for (double v : values) {
        int b = std::min(bins - 1, int((v - lo) / (hi - lo) * bins));
        counts[std::max(0, b)]++;
    }
    int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
    std::string body;
    const double x0 = 60, y0 = 380, w = 520, h = 320;
    for (int b = 0; b < bins; ++b) {
        double bh = h * counts[b] / double(peak);
        double bx = x0 + w * b / double(bins);
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "<rect x='%.1f' y='%.1f' width='%.1f' height='%.1f' fill='#4878cf'/>\n",
                      bx, y0 - bh, w / bins - 2.0, bh);
        body += buf;
    }
    char axis[256];
    std::snprintf(axis, sizeof(axis),
                  "<text x='60' y='400' font-family='sans-serif' font-size='12'>%.4g</text>"
                  "<text x='560' y='400' font-family='sans-serif' font-size='12'>%.4g</text>\n",
                  lo, hi);
    body += axis;
    write_svg(path, body, title);
}

void write_svg_lines(const std::vector<double>& xs,
                     const std::map<std::string, std::vector<double>>& series,
                     const std::string& title, const std::string& path) {
    const double x0 = 60, y0 = 380, w = 520, h = 320;
    double xlo = xs.empty() ? 0.0 : xs.front();
    double xhi = xs.empty() ? 1.0 : xs.back();
    if (xhi <= xlo) xhi = xlo + 1.0;
    std::string body;
    static const char* colors[] = {"#4878cf", "#d65f5f", "#6acc65", "#956cb4"};
    int ci = 0;
    double legend_y = 40;
    for (const auto& [name, ys] : series) {
        std::string pts;
        for (size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
            double px = x0 + (xs[i] - xlo) / (xhi - xlo) * w;
            double py = y0 - std::clamp(ys[i], 0.0, 1.0) * h;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px, py);
            pts += buf;
        }
        const char* color = colors[ci % 4];
        body += "<polyline fill='none' stroke='" + std::string(color) + "' stroke-width='2' points='" +
                pts + "'/>\n";
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "<text x='540' y='%.0f' font-family='sans-serif' font-size='12' "
                      "fill='%s'>%s</text>\n",
                      legend_y, color, name.c_str());
        body += buf;
        legend_y += 16;
        ++ci;
    }
    char axis[512];
    std::snprintf(axis, sizeof(axis),
                  "<line x1='60' y1='380' x2='580' y2='380' stroke='black'/>"
                  "<line x1='60' y1='60' x2='60' y2='380' stroke='black'/>"
                  "<text x='60' y='400' font-family='sans-serif' font-size='12'>%.4g</text>"
                  "<text x='560' y='400' font-family='sans-serif' font-size='12'>%.4g</text>"
                  "<text x='40' y='380' font-family='sans-serif' font-size='12'>0</text>"
                  "<text x='40' y='66' font-family='sans-serif' font-size='12'>1</text>\n",
                  xlo, xhi);
    body += axis;
    write_svg(path, body, title);
}

}  // namespace corrpose
