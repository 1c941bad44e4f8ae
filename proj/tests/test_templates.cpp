#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "corrpose/mesh.hpp"
#include "corrpose/templates.hpp"

using namespace corrpose;

namespace {

// Exact point-to-triangle distance, used as the surface oracle.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return (p - a).norm();
    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return (p - b).norm();
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return (p - c).norm();
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    Vec3 n = ab.cross(ac).normalized();
    return std::abs(n.dot(ap));
}

double distance_to_mesh(const Vec3& p, const Mesh& mesh) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : mesh.triangles)
        best = std::min(best, point_triangle_distance(p, mesh.vertices[t[0]],
                                                      mesh.vertices[t[1]], mesh.vertices[t[2]]));
    return best;
}

}  // namespace

TEST_CASE("icosphere viewpoints: 42 distinct unit directions") {
    auto dirs = icosphere_viewpoints();
    REQUIRE(dirs.size() == 42);
    for (const Vec3& d : dirs) CHECK(std::abs(d.norm() - 1.0) < 1e-12);
    for (size_t i = 0; i < dirs.size(); ++i)
        for (size_t j = i + 1; j < dirs.size(); ++j)
            CHECK((dirs[i] - dirs[j]).norm() > 1e-6);
}

TEST_CASE("icosphere viewpoints: brute-force min pairwise angle") {
    auto dirs = icosphere_viewpoints();
    double min_angle = M_PI;
    for (size_t i = 0; i < dirs.size(); ++i)
        for (size_t j = i + 1; j < dirs.size(); ++j) {
            double c = std::clamp(dirs[i].dot(dirs[j]), -1.0, 1.0);
            min_angle = std::min(min_angle, std::acos(c));
        }
    // Half the icosahedron edge angle: atan(2)/2.
    CHECK(min_angle == doctest::Approx(std::atan(2.0) * 0.5).epsilon(1e-12));
}

TEST_CASE("icosphere viewpoints: uniformity of nearest-neighbor gaps") {
    auto dirs = icosphere_viewpoints();
    double min_gap = M_PI, max_gap = 0.0;
    for (size_t i = 0; i < dirs.size(); ++i) {
        double nn = M_PI;
        for (size_t j = 0; j < dirs.size(); ++j) {
            if (i == j) continue;
            nn = std::min(nn, std::acos(std::clamp(dirs[i].dot(dirs[j]), -1.0, 1.0)));
        }
        min_gap = std::min(min_gap, nn);
        max_gap = std::max(max_gap, nn);
    }
    CHECK(max_gap < 2.0 * min_gap);
}

TEST_CASE("look_at_origin: camera z-axis points at the model origin") {
    auto dirs = icosphere_viewpoints();
    for (const Vec3& d : dirs) {
        Pose pose = look_at_origin(d, 2.0);
        CHECK(pose.is_rigid(1e-9));
        // The origin lands on the optical axis at the camera distance.
        Vec3 origin_cam = pose.apply(Vec3::Zero());
        CHECK(std::abs(origin_cam.x()) < 1e-12);
        CHECK(std::abs(origin_cam.y()) < 1e-12);
        CHECK(origin_cam.z() == doctest::Approx(2.0));
    }
}

TEST_CASE("rasterize: single fronto-parallel triangle at z=1") {
    Mesh mesh;
    mesh.vertices = {{-1, -1, 1}, {1, -1, 1}, {0, 1, 1}};
    mesh.triangles = {{0, 1, 2}};
    mesh.diameter = 2.0;
    Intrinsics k{16, 16, 16, 16};
    Template t = rasterize(mesh, Pose::identity(), k, 32);
    int covered = 0;
    for (double v : t.depth.values) {
        if (v > 0.0) {
            CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
            ++covered;
        }
    }
    CHECK(covered > 50);
    CHECK(t.mask(16, 16));
}

TEST_CASE("rasterize: sphere min depth approaches center distance minus radius") {
    Mesh sphere = make_icosphere(3, 1.0);  // 1280 faces
    CHECK(sphere.triangles.size() == 1280);
    Pose pose;
    pose.translation = {0, 0, 3};
    Intrinsics k{128, 128, 64, 64};
    Template t = rasterize(sphere, pose, k, 128);
    double min_depth = std::numeric_limits<double>::infinity();
    for (double v : t.depth.values)
        if (v > 0.0) min_depth = std::min(min_depth, v);
    CHECK(min_depth == doctest::Approx(2.0).epsilon(1e-2));
}

TEST_CASE("rasterize: mask shrinks when the object moves away") {
    Mesh cube = make_cube(0.5);
    Intrinsics k{128, 128, 64, 64};
    Pose near_pose, far_pose;
    near_pose.translation = {0, 0, 3};
    far_pose.translation = {0, 0, 6};
    Template tn = rasterize(cube, near_pose, k, 128);
    Template tf = rasterize(cube, far_pose, k, 128);
    CHECK(tn.mask_count() > tf.mask_count());
    CHECK(tf.mask_count() > 0);
}

TEST_CASE("rasterize: masked pixels backproject onto the mesh surface") {
    Mesh cube = make_cube(0.4);
    Pose pose = look_at_origin(Vec3{0.3, 0.5, 0.8}.normalized(), 1.5);
    Intrinsics k{96, 96, 48, 48};
    Template t = rasterize(cube, pose, k, 96);
    int checked = 0;
    for (int y = 0; y < 96 && checked < 500; y += 2) {
        for (int x = 0; x < 96 && checked < 500; x += 2) {
            if (!t.mask(x, y)) continue;
            Vec3 p = backproject(pose, k, t.depth, {x + 0.5, y + 0.5});
            CHECK(distance_to_mesh(p, cube) < 1e-6);
            ++checked;
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("build_templates: 42 templates, deterministic, non-empty masks") {
    Mesh cube = make_cube(0.1);  // carries the octahedral symmetry list
    CHECK(cube.symmetries.size() == 24);
    TemplateConfig cfg;
    cfg.size = 96;
    TemplateSet a = build_templates(cube, cfg);
    REQUIRE(a.templates.size() == 42);
    for (const Template& t : a.templates) CHECK(t.mask_count() > 0);

    TemplateSet b = build_templates(cube, cfg);
    for (size_t i = 0; i < 42; ++i)
        CHECK(std::memcmp(a.templates[i].depth.values.data(), b.templates[i].depth.values.data(),
                          a.templates[i].depth.values.size() * sizeof(double)) == 0);
}

TEST_CASE("template set: save/load round trip") {
    Mesh mesh = make_l_bracket();
    TemplateConfig cfg;
    cfg.size = 64;
    cfg.mesh_id = "l_bracket";
    TemplateSet set = build_templates(mesh, cfg);
    std::string dir = std::filesystem::temp_directory_path() / "corrpose_tpl_test";
    std::filesystem::remove_all(dir);
    save_templates(set, dir);
    CHECK(std::filesystem::exists(dir + "/index.json"));

    TemplateSet loaded = load_templates(dir);
    REQUIRE(loaded.templates.size() == 42);
    CHECK(loaded.mesh_id == "l_bracket");
    for (size_t i = 0; i < 42; ++i) {
        const Template& x = set.templates[i];
        const Template& y = loaded.templates[i];
        CHECK((x.viewpoint.camera_pose.rotation - y.viewpoint.camera_pose.rotation)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        for (size_t p = 0; p < x.depth.values.size(); ++p)
            CHECK(std::abs(x.depth.values[p] - y.depth.values[p]) <
                  1e-6 * std::max(1.0, x.depth.values[p]));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("mesh loaders: obj and metadata") {
    std::string dir = std::filesystem::temp_directory_path() / "corrpose_mesh_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream obj(dir + "/tri.obj");
        obj << "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
            << "f 1 2 3\nf 1/1 2/2 4/4\n";
    }
    Mesh mesh = load_obj(dir + "/tri.obj");
    CHECK(mesh.vertices.size() == 4);
    CHECK(mesh.triangles.size() == 2);
    CHECK(mesh.diameter == doctest::Approx(std::sqrt(2.0)));

    {
        std::ofstream meta(dir + "/tri.json");
        meta << R"({"diameter_m": 2.5, "symmetries_discrete": )"
             << R"([[1,0,0,0, 0,-1,0,0, 0,0,-1,0, 0,0,0,1]]})";
    }
    apply_mesh_metadata(mesh, dir + "/tri.json");
    CHECK(mesh.diameter == doctest::Approx(2.5));
    CHECK(mesh.symmetries.size() == 2);
    CHECK_THROWS_AS(load_obj(dir + "/missing.obj"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("mesh loaders: binary ply round-ish trip") {
    std::string path =
        (std::filesystem::temp_directory_path() / "corrpose_test.ply").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "ply\nformat binary_little_endian 1.0\n"
            << "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
            << "element face 1\nproperty list uchar int vertex_indices\nend_header\n";
        float verts[9] = {0, 0, 0, 1, 0, 0, 0, 1, 0};
        out.write(reinterpret_cast<const char*>(verts), sizeof(verts));
        unsigned char n = 3;
        int idx[3] = {0, 1, 2};
        out.write(reinterpret_cast<const char*>(&n), 1);
        out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
    Mesh mesh = load_ply(path);
    CHECK(mesh.vertices.size() == 3);
    CHECK(mesh.triangles.size() == 1);
    std::filesystem::remove(path);
}

TEST_CASE("farthest point sampling is deterministic and spans the set") {
    Mesh sphere = make_icosphere(2, 1.0);
    auto a = farthest_point_sample(sphere.vertices, 50);
    auto b = farthest_point_sample(sphere.vertices, 50);
    REQUIRE(a.size() == 50);
    for (size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).norm() == 0.0);
    auto all = farthest_point_sample(sphere.vertices, 100000);
    CHECK(all.size() == sphere.vertices.size());
}
