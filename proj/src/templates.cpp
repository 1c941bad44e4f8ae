#include "corrpose/templates.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace corrpose {

int Template::mask_count() const {
    int n = 0;
    for (double d : depth.values) n += d > 0.0;
    return n;
}

std::vector<Vec3> icosphere_viewpoints() {
    const double t = (1.0 + std::sqrt(5.0)) * 0.5;
    std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                               {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                               {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& v : verts) v.normalize();
    const std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    std::set<std::pair<int, int>> edges;
    for (const auto& f : faces)
        for (auto [a, b] : {std::pair{f[0], f[1]}, {f[1], f[2]}, {f[2], f[0]}})
            edges.insert(std::minmax(a, b));
    for (const auto& [a, b] : edges) verts.push_back((verts[a] + verts[b]).normalized());
    return verts;  // 12 + 30
}

Pose look_at_origin(const Vec3& direction, double radius) {
    Vec3 d = direction.normalized();
    Vec3 center = d * radius;       // camera position in model frame
    Vec3 forward = -d;              // camera +z points at the origin
    Vec3 up = Vec3::UnitY();
    if (std::abs(d.y()) > 1.0 - 1e-9) up = Vec3::UnitX();  // pole views
    Vec3 right = up.cross(forward).normalized();
    Vec3 cam_up = forward.cross(right);
    Pose pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = cam_up.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -(pose.rotation * center);
    return pose;
}

DepthMap render_depth(const Mesh& mesh, const Pose& pose, const Intrinsics& k, int width,
                      int height) {
    DepthMap depth(width, height);
    const double near = 1e-9;
    for (const auto& tri : mesh.triangles) {
        Vec3 q0 = pose.apply(mesh.vertices[tri[0]]);
        Vec3 q1 = pose.apply(mesh.vertices[tri[1]]);
        Vec3 q2 = pose.apply(mesh.vertices[tri[2]]);
        if (q0.z() <= near || q1.z() <= near || q2.z() <= near) continue;

        Vec2 p0{k.fx * q0.x() / q0.z() + k.cx, k.fy * q0.y() / q0.z() + k.cy};
        Vec2 p1{k.fx * q1.x() / q1.z() + k.cx, k.fy * q1.y() / q1.z() + k.cy};
        Vec2 p2{k.fx * q2.x() / q2.z() + k.cx, k.fy * q2.y() / q2.z() + k.cy};
        double iz0 = 1.0 / q0.z(), iz1 = 1.0 / q1.z(), iz2 = 1.0 / q2.z();

        auto edge = [](const Vec2& a, const Vec2& b, const Vec2& c) {
            return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        };
        double area = edge(p0, p1, p2);
        if (area == 0.0) continue;
        if (area < 0.0) {  // normalize winding so interior edge values are positive
            std::swap(p1, p2);
            std::swap(iz1, iz2);
            area = -area;
        }

        int x0 = std::max(0, int(std::floor(std::min({p0.x(), p1.x(), p2.x()}) - 0.5)));
        int x1 = std::min(width - 1, int(std::ceil(std::max({p0.x(), p1.x(), p2.x()}) - 0.5)));
        int y0 = std::max(0, int(std::floor(std::min({p0.y(), p1.y(), p2.y()}) - 0.5)));
        int y1 = std::min(height - 1, int(std::ceil(std::max({p0.y(), p1.y(), p2.y()}) - 0.5)));
        if (x0 > x1 || y0 > y1) continue;

        // Top edges run rightward, left edges upward (y grows downward).
        auto top_left = [](const Vec2& a, const Vec2& b) {
            double dx = b.x() - a.x(), dy = b.y() - a.y();
            return dy < 0.0 || (dy == 0.0 && dx > 0.0);
        };
        bool tl0 = top_left(p0, p1), tl1 = top_left(p1, p2), tl2 = top_left(p2, p0);

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                Vec2 c{x + 0.5, y + 0.5};
                double e0 = edge(p0, p1, c);
                double e1 = edge(p1, p2, c);
                double e2 = edge(p2, p0, c);
                bool inside = (e0 > 0.0 || (e0 == 0.0 && tl0)) &&
                              (e1 > 0.0 || (e1 == 0.0 && tl1)) &&
                              (e2 > 0.0 || (e2 == 0.0 && tl2));
                if (!inside) continue;
                // 1/z is linear in screen space, so this is perspective-correct.
                double iz = (e1 * iz0 + e2 * iz1 + e0 * iz2) / area;
                double z = 1.0 / iz;
                double& d = depth.at(x, y);
                if (d == 0.0 || z < d) d = z;
            }
        }
    }
    return depth;
}

Template rasterize(const Mesh& mesh, const Pose& pose, const Intrinsics& k, int size) {
    if (mesh.vertices.empty() || mesh.triangles.empty()) throw Error("rasterize: empty mesh");
    if (size <= 0) throw Error("rasterize: nonpositive image size");
    Template t;
    t.depth = render_depth(mesh, pose, k, size, size);
    t.intrinsics = k;
    t.size = size;
    t.viewpoint.camera_pose = pose;
    return t;
}

double camera_distance_for_fill(double radius, double focal, int size, double fill_fraction) {
    // focal * radius / dist == fill_fraction * size / 2
    return 2.0 * focal * radius / (fill_fraction * double(size));
}

Intrinsics template_intrinsics(const TemplateConfig& cfg) {
    double f = cfg.focal_px > 0.0 ? cfg.focal_px : double(cfg.size);
    return Intrinsics{f, f, cfg.size * 0.5, cfg.size * 0.5};
}

TemplateSet build_templates(const Mesh& mesh, const TemplateConfig& cfg) {
    Intrinsics k = template_intrinsics(cfg);
    double dist = camera_distance_for_fill(mesh.bounding_radius(), k.fx, cfg.size,
                                           cfg.fill_fraction);
    TemplateSet set;
    set.mesh_id = cfg.mesh_id;
    std::vector<Vec3> dirs = icosphere_viewpoints();
    set.templates.reserve(dirs.size());
    for (const Vec3& d : dirs) {
        Viewpoint vp;
        vp.direction = d;
        vp.radius = dist;
        vp.camera_pose = look_at_origin(d, dist);
        Template t = rasterize(mesh, vp.camera_pose, k, cfg.size);
        t.viewpoint = vp;
        set.templates.push_back(std::move(t));
    }
    return set;
}

void save_depth_raw(const DepthMap& depth, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write depth file: " + path);
    uint32_t w = uint32_t(depth.width), h = uint32_t(depth.height);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    for (double v : depth.values) {
        float f = float(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
    if (!out) throw IoError("failed writing depth file: " + path);
}

DepthMap load_depth_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open depth file: " + path);
    uint32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    DepthMap depth{int(w), int(h)};
    for (double& v : depth.values) {
        float f = 0;
        in.read(reinterpret_cast<char*>(&f), 4);
        v = double(f);
    }
    if (!in) throw IoError("truncated depth file: " + path);
    return depth;
}

namespace {

nlohmann::json pose_to_json(const Pose& p) {
    nlohmann::json j;
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) r[3 * i + c] = p.rotation(i, c);
    j["R"] = r;
    j["t"] = {p.translation.x(), p.translation.y(), p.translation.z()};
    return j;
}

Pose pose_from_json(const nlohmann::json& j) {
    Pose p;
    const auto& r = j.at("R");
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) p.rotation(i, c) = r.at(3 * i + c).get<double>();
    const auto& t = j.at("t");
    for (int i = 0; i < 3; ++i) p.translation(i) = t.at(i).get<double>();
    return p;
}

}  // namespace

void save_templates(const TemplateSet& set, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create template directory: " + dir);

    nlohmann::json index;
    index["mesh_id"] = set.mesh_id;
    index["templates"] = nlohmann::json::array();
    for (size_t i = 0; i < set.templates.size(); ++i) {
        const Template& t = set.templates[i];
        char name[32];
        std::snprintf(name, sizeof(name), "t%03zu.depth", i);
        save_depth_raw(t.depth, dir + "/" + name);
        nlohmann::json entry;
        entry["file"] = name;
        entry["size"] = t.size;
        entry["direction"] = {t.viewpoint.direction.x(), t.viewpoint.direction.y(),
                              t.viewpoint.direction.z()};
        entry["radius"] = t.viewpoint.radius;
        entry["pose"] = pose_to_json(t.viewpoint.camera_pose);
        entry["intrinsics"] = {{"fx", t.intrinsics.fx},
                               {"fy", t.intrinsics.fy},
                               {"cx", t.intrinsics.cx},
                               {"cy", t.intrinsics.cy}};
        index["templates"].push_back(entry);
    }
    std::ofstream out(dir + "/index.json");
    if (!out) throw IoError("cannot write template index: " + dir + "/index.json");
    out << index.dump(2) << "\n";
}

TemplateSet load_templates(const std::string& dir) {
    std::ifstream in(dir + "/index.json");
    if (!in) throw IoError("cannot open template index: " + dir + "/index.json");
    nlohmann::json index;
    try {
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed template index: ") + e.what());
    }
    TemplateSet set;
    set.mesh_id = index.value("mesh_id", "");
    for (const auto& entry : index.at("templates")) {
        Template t;
        t.depth = load_depth_raw(dir + "/" + entry.at("file").get<std::string>());
        t.size = entry.at("size").get<int>();
        t.viewpoint.direction = {entry.at("direction").at(0).get<double>(),
                                 entry.at("direction").at(1).get<double>(),
                                 entry.at("direction").at(2).get<double>()};
        t.viewpoint.radius = entry.at("radius").get<double>();
        t.viewpoint.camera_pose = pose_from_json(entry.at("pose"));
        const auto& ki = entry.at("intrinsics");
        t.intrinsics = Intrinsics{ki.at("fx").get<double>(), ki.at("fy").get<double>(),
                                  ki.at("cx").get<double>(), ki.at("cy").get<double>()};
        set.templates.push_back(std::move(t));
    }
    return set;
}

}  // namespace corrpose
