#include "corrpose/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace corrpose {

void Mesh::validate() const {
    const int n = int(vertices.size());
    for (const auto& t : triangles)
        for (int idx : t)
            if (idx < 0 || idx >= n) throw Error("mesh: triangle index out of range");
    if (!(diameter > 0.0)) throw Error("mesh: diameter must be positive");
    bool has_identity = false;
    for (const Pose& s : symmetries)
        if ((s.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9 &&
            s.translation.norm() < 1e-9)
            has_identity = true;
    if (!has_identity) throw Error("mesh: symmetry list must contain identity");
}

Vec3 Mesh::centroid() const {
    Vec3 c = Vec3::Zero();
    for (const Vec3& v : vertices) c += v;
    return vertices.empty() ? c : Vec3(c / double(vertices.size()));
}

double Mesh::bounding_radius() const {
    double r = 0.0;
    for (const Vec3& v : vertices) r = std::max(r, v.norm());
    return r;
}

std::vector<Vec3> farthest_point_sample(const std::vector<Vec3>& vertices, int count) {
    if (count <= 0 || vertices.empty()) return {};
    if (count >= int(vertices.size())) return vertices;
    std::vector<Vec3> out;
    out.reserve(count);
    std::vector<double> dist(vertices.size(), std::numeric_limits<double>::infinity());
    size_t next = 0;
    for (int k = 0; k < count; ++k) {
        out.push_back(vertices[next]);
        const Vec3 added = vertices[next];
        double best = -1.0;
        size_t best_i = 0;
        for (size_t i = 0; i < vertices.size(); ++i) {
            dist[i] = std::min(dist[i], (vertices[i] - added).squaredNorm());
            if (dist[i] > best) {
                best = dist[i];
                best_i = i;
            }
        }
        next = best_i;
    }
    return out;
}

double compute_diameter(const Mesh& mesh) {
    std::vector<Vec3> pts = mesh.vertices.size() > 2000
                                ? farthest_point_sample(mesh.vertices, 2000)
                                : mesh.vertices;
    double d2 = 0.0;
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j)
            d2 = std::max(d2, (pts[i] - pts[j]).squaredNorm());
    return std::sqrt(d2);
}

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh file: " + path);
    Mesh mesh;
    mesh.symmetries = {Pose::identity()};
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) throw IoError("malformed vertex record in " + path);
            mesh.vertices.push_back({x, y, z});
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                // "f 1 2 3" or "f 1/2/3 ..." — the vertex index precedes the first '/'.
                size_t slash = tok.find('/');
                int i = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
                if (i < 0) i = int(mesh.vertices.size()) + i + 1;  // negative = relative
                idx.push_back(i - 1);
            }
            if (idx.size() < 3) throw IoError("face with fewer than 3 vertices in " + path);
            for (size_t k = 2; k < idx.size(); ++k)  // fan-triangulate polygons
                mesh.triangles.push_back({idx[0], idx[k - 1], idx[k]});
        }
    }
    if (mesh.vertices.empty()) throw IoError("no vertices in " + path);
    mesh.diameter = compute_diameter(mesh);
    mesh.validate();
    return mesh;
}

namespace {

struct PlyProperty {
    std::string type;
    std::string name;
    bool is_list = false;
    std::string count_type;
};

size_t scalar_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
        t == "float32")
        return 4;
    if (t == "double" || t == "float64" || t == "int64" || t == "uint64") return 8;
    throw IoError("unknown ply scalar type: " + t);
}

double read_scalar(std::ifstream& in, const std::string& t) {
    auto rd = [&](auto v) -> double {
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        return double(v);
    };
    size_t sz = scalar_size(t);
    if (t == "float" || t == "float32") return rd(float{});
    if (t == "double" || t == "float64") return rd(double{});
    if (sz == 1) return t[0] == 'u' ? rd(uint8_t{}) : rd(int8_t{});
    if (sz == 2) return t[0] == 'u' ? rd(uint16_t{}) : rd(int16_t{});
    if (sz == 4) return t[0] == 'u' ? rd(uint32_t{}) : rd(int32_t{});
    return t[0] == 'u' ? rd(uint64_t{}) : rd(int64_t{});
}

}  // namespace

Mesh load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open mesh file: " + path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) throw IoError("not a ply file: " + path);

    struct Element {
        std::string name;
        size_t count = 0;
        std::vector<PlyProperty> props;
    };
    std::vector<Element> elements;
    bool binary_le = false;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "format") {
            std::string fmt;
            ss >> fmt;
            binary_le = (fmt == "binary_little_endian");
            if (!binary_le) throw IoError("only binary little-endian ply is supported: " + path);
        } else if (tag == "element") {
            Element e;
            ss >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            PlyProperty p;
            std::string t;
            ss >> t;
            if (t == "list") {
                p.is_list = true;
                ss >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ss >> p.name;
            }
            if (elements.empty()) throw IoError("property before element in " + path);
            elements.back().props.push_back(p);
        } else if (tag == "end_header") {
            break;
        }
    }

    Mesh mesh;
    mesh.symmetries = {Pose::identity()};
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            for (size_t i = 0; i < e.count; ++i) {
                Vec3 v = Vec3::Zero();
                for (const auto& p : e.props) {
                    double val = read_scalar(in, p.type);
                    if (p.name == "x") v.x() = val;
                    else if (p.name == "y") v.y() = val;
                    else if (p.name == "z") v.z() = val;
                }
                mesh.vertices.push_back(v);
            }
        } else if (e.name == "face") {
            for (size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.props) {
                    if (!p.is_list) {
                        read_scalar(in, p.type);
                        continue;
                    }
                    int n = int(read_scalar(in, p.count_type));
                    std::vector<int> idx(n);
                    for (int j = 0; j < n; ++j) idx[j] = int(read_scalar(in, p.type));
                    for (int j = 2; j < n; ++j)
                        mesh.triangles.push_back({idx[0], idx[j - 1], idx[j]});
                }
            }
        } else {
            // Skip unknown fixed-size elements.
            size_t row = 0;
            for (const auto& p : e.props) {
                if (p.is_list) throw IoError("unsupported list property outside faces in " + path);
                row += scalar_size(p.type);
            }
            in.seekg(std::streamoff(row * e.count), std::ios::cur);
        }
    }
    if (!in) throw IoError("truncated ply data in " + path);
    if (mesh.vertices.empty()) throw IoError("no vertices in " + path);
    mesh.diameter = compute_diameter(mesh);
    mesh.validate();
    return mesh;
}

void apply_mesh_metadata(Mesh& mesh, const std::string& metadata_path) {
    std::ifstream in(metadata_path);
    if (!in) throw IoError("cannot open mesh metadata: " + metadata_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed mesh metadata " + metadata_path + ": " + e.what());
    }
    if (j.contains("diameter_m")) mesh.diameter = j["diameter_m"].get<double>();
    if (j.contains("symmetries_discrete")) {
        mesh.symmetries.clear();
        mesh.symmetries.push_back(Pose::identity());
        for (const auto& m : j["symmetries_discrete"]) {
            if (m.size() != 16) throw IoError("symmetry matrix must have 16 entries");
            Pose s;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) s.rotation(r, c) = m[4 * r + c].get<double>();
                s.translation(r) = m[4 * r + 3].get<double>();
            }
            if ((s.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9 &&
                s.translation.norm() < 1e-9)
                continue;  // identity already present
            mesh.symmetries.push_back(s);
        }
    }
    mesh.validate();
}

Mesh load_mesh(const std::string& path, const std::string& metadata_path) {
    Mesh mesh;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
        mesh = load_ply(path);
    else if (path.size() >= 4 && path.substr(path.size() - 4) == ".obj")
        mesh = load_obj(path);
    else
        throw IoError("unsupported mesh extension (want .obj or .ply): " + path);
    if (!metadata_path.empty()) apply_mesh_metadata(mesh, metadata_path);
    return mesh;
}

namespace {

void append_box(Mesh& mesh, const Vec3& lo, const Vec3& hi) {
    int base = int(mesh.vertices.size());
    for (int i = 0; i < 8; ++i)
        mesh.vertices.push_back({i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                                 i & 4 ? hi.z() : lo.z()});
    static const int faces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                    {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    for (const auto& f : faces) {
        mesh.triangles.push_back({base + f[0], base + f[1], base + f[2]});
        mesh.triangles.push_back({base + f[0], base + f[2], base + f[3]});
    }
}

}  // namespace

Mesh make_cube(double edge) {
    Mesh mesh;
    double h = edge * 0.5;
    append_box(mesh, {-h, -h, -h}, {h, h, h});
    mesh.diameter = compute_diameter(mesh);
    mesh.symmetries = cube_rotational_symmetries();
    mesh.validate();
    return mesh;
}

Mesh make_icosphere(int subdivisions, double radius) {
    const double t = (1.0 + std::sqrt(5.0)) * 0.5;
    std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                               {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                               {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = (verts[a] + verts[b]).normalized();
            verts.push_back(m);
            int idx = int(verts.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    Mesh mesh;
    for (const Vec3& v : verts) mesh.vertices.push_back(v * radius);
    mesh.triangles = faces;
    mesh.diameter = compute_diameter(mesh);
    mesh.validate();
    return mesh;
}

Mesh make_l_bracket(double long_arm, double short_arm, double thickness) {
    // Two boxes joined into an L; no symmetry other than identity.
    Mesh mesh;
    append_box(mesh, {0, 0, 0}, {thickness, long_arm, thickness});
    append_box(mesh, {0, 0, 0}, {short_arm, thickness, thickness});
    Vec3 c = mesh.centroid();
    for (Vec3& v : mesh.vertices) v -= c;
    mesh.diameter = compute_diameter(mesh);
    mesh.validate();
    return mesh;
}

std::vector<Pose> cube_rotational_symmetries() {
    std::vector<Pose> out;
    auto axis_rot = [](const Vec3& axis, double angle) { return rotation_exp(axis * angle); };
    std::vector<Mat3> rots;
    auto push_unique = [&](const Mat3& r) {
        for (const Mat3& q : rots)
            if ((q - r).cwiseAbs().maxCoeff() < 1e-9) return;
        rots.push_back(r);
    };
    std::vector<Mat3> gens = {axis_rot({1, 0, 0}, M_PI / 2), axis_rot({0, 1, 0}, M_PI / 2),
                              axis_rot({0, 0, 1}, M_PI / 2)};
    push_unique(Mat3::Identity());
    // Close the group under the generators.
    bool grew = true;
    while (grew) {
        grew = false;
        size_t n = rots.size();
        for (size_t i = 0; i < n; ++i)
            for (const Mat3& g : gens) {
                size_t before = rots.size();
                push_unique(g * rots[i]);
                if (rots.size() != before) grew = true;
            }
    }
    for (const Mat3& r : rots) {
        Pose p;
        p.rotation = r;
        out.push_back(p);
    }
    return out;
}

Mesh mesh_by_name(const std::string& name_or_path, const std::string& metadata_path) {
    if (name_or_path == "cube") return make_cube();
    if (name_or_path == "icosphere") return make_icosphere();
    if (name_or_path == "l_bracket") return make_l_bracket();
    return load_mesh(name_or_path, metadata_path);
}

}  // namespace corrpose
