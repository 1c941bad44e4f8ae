#include "corrpose/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace corrpose {

int ClassTensor::argmax(int x, int y) const {
    const double* p = cell(x, y);
    int best = 0;
    for (int k = 1; k < classes(); ++k)
        if (p[k] > p[best]) best = k;
    return best;
}

double ClassTensor::max_prob(int x, int y) const {
    const double* p = cell(x, y);
    return *std::max_element(p, p + classes());
}

void ClassTensor::validate() const {
    for (int y = 0; y < grid; ++y)
        for (int x = 0; x < grid; ++x) {
            const double* p = cell(x, y);
            double sum = 0.0;
            for (int k = 0; k < classes(); ++k) {
                if (p[k] < 0.0) throw Error("class tensor: negative probability");
                sum += p[k];
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw Error("class tensor: cell probabilities do not sum to 1");
        }
}

void OffsetTensor::validate() const {
    for (double v : xy)
        if (v < -0.5 || v > 0.5) throw Error("offset tensor: component outside [-0.5, 0.5]");
}

MatchSet decode_matches(const ClassTensor& c, const OffsetTensor& u, int patch) {
    if (c.grid != u.grid) throw ShapeError("decode_matches: grid size mismatch");
    const int g = c.grid;
    MatchSet out;
    out.image_size = g * patch;
    for (int j = 0; j < g; ++j) {
        for (int i = 0; i < g; ++i) {
            int cls = c.argmax(i, j);
            if (cls == c.no_match_class()) continue;
            Vec2 off = u.at(i, j);
            Match m;
            m.query_px = {(i + 0.5) * patch, (j + 0.5) * patch};
            m.target_px = {(cls % g + 0.5 + off.x()) * patch, (cls / g + 0.5 + off.y()) * patch};
            m.weight = c.max_prob(i, j);
            out.matches.push_back(m);
        }
    }
    return out;
}

double similarity_score(const ClassTensor& c) {
    double s = 0.0;
    for (int y = 0; y < c.grid; ++y)
        for (int x = 0; x < c.grid; ++x)
            if (c.argmax(x, y) != c.no_match_class()) s += c.max_prob(x, y);
    return s;
}

int select_template(const std::vector<double>& scores) {
    if (scores.empty()) throw EmptyInputError("select_template: empty score list");
    int best = 0;
    for (int i = 1; i < int(scores.size()); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

std::vector<int> select_template_topn(const std::vector<double>& scores, int n) {
    if (scores.empty()) throw EmptyInputError("select_template: empty score list");
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    idx.resize(std::min<size_t>(idx.size(), size_t(std::max(0, n))));
    return idx;
}

std::pair<int, Vec2> gt_class_and_offset(const Vec2& target_px, int patch, int grid) {
    double size = double(patch) * grid;
    if (target_px.x() < 0.0 || target_px.x() >= size || target_px.y() < 0.0 ||
        target_px.y() >= size)
        throw OutOfBoundsError("gt_class_and_offset: target pixel outside template");
    double sx = target_px.x() / patch;
    double sy = target_px.y() / patch;
    int cx = int(std::floor(sx));
    int cy = int(std::floor(sy));
    Vec2 offset{sx - cx - 0.5, sy - cy - 0.5};
    return {cy * grid + cx, offset};
}

GtCorrespondences gt_correspondences(const Pose& pose_q, const Pose& pose_t,
                                     const Intrinsics& k_q, const Intrinsics& k_t, int size,
                                     const DepthMap& depth_q, const DepthMap& depth_t,
                                     int patch) {
    if (size % patch != 0) throw ShapeError("gt_correspondences: size must be a patch multiple");
    const int g = size / patch;
    const double occlusion_tol = 1e-4;  // meters

    GtCorrespondences out;
    out.labels = CellLabels(g);
    out.matches.image_size = size;

    for (int j = 0; j < g; ++j) {
        for (int i = 0; i < g; ++i) {
            Vec2 center{(i + 0.5) * patch, (j + 0.5) * patch};
            // Patch centers sit between depth samples; the extrapolated lookup
            // lands the 3D point on the actual surface.
            double dq = surface_depth_at(depth_q, center);
            if (dq <= 0.0) continue;  // background patch

            Vec3 x = backproject_at_depth(pose_q, k_q, center, dq);
            Vec3 in_t = pose_t.apply(x);
            if (in_t.z() <= 1e-9) continue;
            Vec2 target{k_t.fx * in_t.x() / in_t.z() + k_t.cx,
                        k_t.fy * in_t.y() / in_t.z() + k_t.cy};
            if (!depth_t.contains(target)) continue;  // out of template frame

            double dt = surface_depth_at(depth_t, target);
            if (dt <= 0.0 || std::abs(dt - in_t.z()) > occlusion_tol) continue;  // occluded

            auto [cls, offset] = gt_class_and_offset(target, patch, g);
            out.labels.cls_at(i, j) = cls;
            out.labels.offset_at(i, j) = offset;
            out.matches.matches.push_back({center, target, 1.0});
        }
    }
    return out;
}

GtCorrespondences gt_correspondences(const Mesh& mesh, const Pose& pose_q, const Pose& pose_t,
                                     const Intrinsics& k_q, const Intrinsics& k_t, int size,
                                     int patch) {
    DepthMap dq = render_depth(mesh, pose_q, k_q, size, size);
    DepthMap dt = render_depth(mesh, pose_t, k_t, size, size);
    return gt_correspondences(pose_q, pose_t, k_q, k_t, size, dq, dt, patch);
}

void save_matches_jsonl(const MatchSet& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write match file: " + path);
    for (const Match& match : m.matches) {
        nlohmann::json j;
        j["q"] = {match.query_px.x(), match.query_px.y()};
        j["t"] = {match.target_px.x(), match.target_px.y()};
        j["w"] = match.weight;
        out << j.dump() << "\n";
    }
}

MatchSet load_matches_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open match file: " + path);
    MatchSet out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Match m;
        m.query_px = {j.at("q").at(0).get<double>(), j.at("q").at(1).get<double>()};
        m.target_px = {j.at("t").at(0).get<double>(), j.at("t").at(1).get<double>()};
        m.weight = j.at("w").get<double>();
        out.matches.push_back(m);
    }
    return out;
}

}  // namespace corrpose
