#pragma once

#include <string>
#include <vector>

#include "corrpose/geometry.hpp"
#include "corrpose/mesh.hpp"
#include "corrpose/templates.hpp"

namespace corrpose {

// Patch-classification probabilities: a GxG grid of K-vectors, K = G*G + 1.
// Class y*G + x names template cell (x, y); the last class (index G*G) means
// the query patch has no matching template part.
struct ClassTensor {
    int grid = 0;
    std::vector<double> probs;  // [y][x][k], row-major

    ClassTensor() = default;
    explicit ClassTensor(int g) : grid(g), probs(size_t(g) * g * (size_t(g) * g + 1), 0.0) {}

    int classes() const { return grid * grid + 1; }
    int no_match_class() const { return grid * grid; }

    double* cell(int x, int y) { return probs.data() + (size_t(y) * grid + x) * classes(); }
    const double* cell(int x, int y) const {
        return probs.data() + (size_t(y) * grid + x) * classes();
    }

    int argmax(int x, int y) const;
    double max_prob(int x, int y) const;
    // Rows sum to 1 within 1e-6, entries nonnegative.
    void validate() const;
};

// Sub-patch xy offsets in [-0.5, 0.5], one 2-vector per grid cell.
struct OffsetTensor {
    int grid = 0;
    std::vector<double> xy;  // [y][x][2]

    OffsetTensor() = default;
    explicit OffsetTensor(int g) : grid(g), xy(size_t(g) * g * 2, 0.0) {}

    Vec2 at(int x, int y) const {
        size_t i = (size_t(y) * grid + x) * 2;
        return {xy[i], xy[i + 1]};
    }
    void set(int x, int y, const Vec2& v) {
        size_t i = (size_t(y) * grid + x) * 2;
        xy[i] = v.x();
        xy[i + 1] = v.y();
    }
    void validate() const;
};

struct Match {
    Vec2 query_px;
    Vec2 target_px;
    double weight = 1.0;
};

struct MatchSet {
    std::vector<Match> matches;
    int image_size = 0;
};

// Per-cell ground-truth labels: class index per cell (no-match = G*G) and the
// sub-patch offset for matched cells.
struct CellLabels {
    int grid = 0;
    std::vector<int> cls;       // [y][x]
    std::vector<Vec2> offset;   // [y][x], meaningful only where cls != no-match

    explicit CellLabels(int g = 0)
        : grid(g), cls(size_t(g) * g, g * g), offset(size_t(g) * g, Vec2::Zero()) {}
    int no_match_class() const { return grid * grid; }
    int& cls_at(int x, int y) { return cls[size_t(y) * grid + x]; }
    int cls_at(int x, int y) const { return cls[size_t(y) * grid + x]; }
    Vec2& offset_at(int x, int y) { return offset[size_t(y) * grid + x]; }
    const Vec2& offset_at(int x, int y) const { return offset[size_t(y) * grid + x]; }
};

// Decode the hybrid representation into semi-dense matches. Query point of
// cell (i,j) is its patch center; the target point is the classified template
// cell center shifted by the offset, all scaled back to pixels. No-match cells
// emit nothing; match weight is the max class probability.
MatchSet decode_matches(const ClassTensor& c, const OffsetTensor& u, int patch = 16);

// Sum of max class probabilities over cells whose argmax is not no-match.
double similarity_score(const ClassTensor& c);

// Argmax with ties broken by lowest index.
int select_template(const std::vector<double>& scores);
// N distinct highest-scoring indices, descending score, ties by lower index.
std::vector<int> select_template_topn(const std::vector<double>& scores, int n);

// Inverse of decode for one target pixel: the class index of the containing
// patch and the centered sub-patch offset.
std::pair<int, Vec2> gt_class_and_offset(const Vec2& target_px, int patch, int grid);

struct GtCorrespondences {
    MatchSet matches;
    CellLabels labels;
};

// Oracle correspondences between a query view and a template view of the same
// mesh: each on-object query patch center is backprojected through the query
// depth and reprojected into the template; cells that are occluded in the
// template view (depth test, 1e-4 m) or land out of frame are no-match.
GtCorrespondences gt_correspondences(const Pose& pose_q, const Pose& pose_t,
                                     const Intrinsics& k_q, const Intrinsics& k_t, int size,
                                     const DepthMap& depth_q, const DepthMap& depth_t,
                                     int patch = 16);
// Convenience overload that renders both views of the mesh.
GtCorrespondences gt_correspondences(const Mesh& mesh, const Pose& pose_q, const Pose& pose_t,
                                     const Intrinsics& k_q, const Intrinsics& k_t, int size,
                                     int patch = 16);

// JSON-lines serialization: {"q":[x,y],"t":[x,y],"w":w} per match.
void save_matches_jsonl(const MatchSet& m, const std::string& path);
MatchSet load_matches_jsonl(const std::string& path);

}  // namespace corrpose
