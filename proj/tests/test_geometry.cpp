#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "corrpose/geometry.hpp"
#include "test_util.hpp"

using namespace corrpose;
using namespace corrpose::testutil;

TEST_CASE("project: pinhole identity") {
    Intrinsics k{1, 1, 0, 0};
    PointSet pts;
    pts.points = {{0, 0, 1}};
    auto uv = project(Pose::identity(), k, pts);
    CHECK(uv[0].x() == doctest::Approx(0.0));
    CHECK(uv[0].y() == doctest::Approx(0.0));
}

TEST_CASE("project: direct substitution") {
    Intrinsics k{100, 100, 50, 50};
    Vec2 uv = project_point(Pose::identity(), k, {0.1, 0, 1});
    CHECK(uv.x() == doctest::Approx(60.0));
    CHECK(uv.y() == doctest::Approx(50.0));
}

TEST_CASE("project: behind-camera error names the offending index") {
    Intrinsics k{1, 1, 0, 0};
    PointSet pts;
    pts.points = {{0, 0, 1}, {0, 0, -1}};
    try {
        project(Pose::identity(), k, pts);
        FAIL("expected BehindCameraError");
    } catch (const BehindCameraError& e) {
        CHECK(e.index == 1);
    }
}

TEST_CASE("backproject: direct substitution") {
    Intrinsics k{1, 1, 0, 0};
    DepthMap depth(4, 4);
    depth.at(0, 0) = 2.0;
    Vec3 p = backproject(Pose::identity(), k, depth, {0, 0});
    CHECK((p - Vec3{0, 0, 2}).norm() == doctest::Approx(0.0));

    Pose shifted;
    shifted.translation = {0, 0, 1};
    Vec3 q = backproject(shifted, k, depth, {0, 0});
    CHECK((q - Vec3{0, 0, 1}).norm() == doctest::Approx(0.0));
}

TEST_CASE("backproject: zero-depth pixel error") {
    Intrinsics k{1, 1, 0, 0};
    DepthMap depth(4, 4);
    CHECK_THROWS_AS(backproject(Pose::identity(), k, depth, {1, 1}), ZeroDepthError);
}

TEST_CASE("project after backproject is the identity on valid pixels") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> px(0.0, 32.0);
    std::uniform_real_distribution<double> dz(0.5, 3.0);
    Intrinsics k{40, 42, 16, 16};
    for (int trial = 0; trial < 10; ++trial) {
        Pose pose = random_pose(rng);
        DepthMap depth(32, 32);
        for (double& v : depth.values) v = dz(rng);
        for (int i = 0; i < 100; ++i) {
            Vec2 pixel{px(rng), px(rng)};
            Vec3 p = backproject(pose, k, depth, pixel);
            Vec2 back = project_point(pose, k, p);
            CHECK((back - pixel).norm() < 1e-9);
        }
    }
}

TEST_CASE("kabsch: src == dst gives identity") {
    std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    Pose p = kabsch(pts, pts);
    CHECK((p.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.translation.norm() < 1e-12);
}

TEST_CASE("kabsch: recovers a known transform") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Pose gt = random_pose(rng);
        std::vector<Vec3> src, dst;
        for (int i = 0; i < 10; ++i) {
            Vec3 p{unif(rng), unif(rng), unif(rng)};
            src.push_back(p);
            dst.push_back(gt.apply(p));
        }
        Pose est = kabsch(src, dst);
        CHECK(pose_rotation_error(est, gt) < 1e-9);
        CHECK(pose_translation_error(est, gt) < 1e-9);
    }
}

TEST_CASE("kabsch: collinear points are degenerate") {
    std::vector<Vec3> src = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    std::vector<Vec3> dst = src;
    CHECK_THROWS_AS(kabsch(src, dst), DegenerateError);
}

TEST_CASE("kabsch: all-zero weights rejected") {
    std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    CHECK_THROWS_AS(kabsch(pts, pts, {0, 0, 0}), InsufficientSupportError);
}

TEST_CASE("kabsch: binary weights equal the weight-1 subset exactly") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Pose gt = random_pose(rng);
    std::vector<Vec3> src, dst, sub_src, sub_dst;
    std::vector<double> w;
    for (int i = 0; i < 12; ++i) {
        Vec3 p{unif(rng), unif(rng), unif(rng)};
        Vec3 q = gt.apply(p) + Vec3{unif(rng), unif(rng), unif(rng)} * 0.01;
        src.push_back(p);
        dst.push_back(q);
        bool keep = i % 3 != 0;
        w.push_back(keep ? 1.0 : 0.0);
        if (keep) {
            sub_src.push_back(p);
            sub_dst.push_back(q);
        }
    }
    Pose a = kabsch(src, dst, w);
    Pose b = kabsch(sub_src, sub_dst);
    CHECK((a.rotation - b.rotation).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.translation - b.translation).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kabsch: residual invariant under shared pre-composition") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<Vec3> src, dst;
    Pose gt = random_pose(rng);
    for (int i = 0; i < 15; ++i) {
        Vec3 p{unif(rng), unif(rng), unif(rng)};
        src.push_back(p);
        dst.push_back(gt.apply(p) + Vec3{unif(rng), unif(rng), unif(rng)} * 0.05);
    }
    auto residual = [](const std::vector<Vec3>& s, const std::vector<Vec3>& d) {
        Pose p = kabsch(s, d);
        double r = 0.0;
        for (size_t i = 0; i < s.size(); ++i) r += (d[i] - p.apply(s[i])).squaredNorm();
        return r;
    };
    double base = residual(src, dst);
    Pose t = random_pose(rng, 0.3, 0.0);
    std::vector<Vec3> src2, dst2;
    for (size_t i = 0; i < src.size(); ++i) {
        src2.push_back(t.apply(src[i]));
        dst2.push_back(t.apply(dst[i]));
    }
    CHECK(residual(src2, dst2) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("pose invariants: compose with inverse is identity, rotations stay rigid") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Pose p = random_pose(rng);
        CHECK(p.is_rigid());
        Pose id = p.compose(p.inverse());
        CHECK((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(id.translation.norm() < 1e-9);
    }
}

TEST_CASE("rotation exp/log round trip, including near pi") {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, M_PI - 1e-9);
    for (int trial = 0; trial < 200; ++trial) {
        Vec3 axis{gauss(rng), gauss(rng), gauss(rng)};
        axis.normalize();
        double a = trial % 5 == 0 ? M_PI - 1e-4 : angle(rng);
        Vec3 w = axis * a;
        Vec3 back = rotation_log(rotation_exp(w));
        CHECK((back - w).norm() < 1e-6);
    }
    CHECK(rotation_log(Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("symmetry-aware rotation error picks the best symmetry") {
    Pose gt;
    Pose sym;
    sym.rotation = rotation_exp(Vec3{0, 0, M_PI / 2});
    Pose p = gt.compose(sym);
    CHECK(symmetry_aware_rotation_error(p, gt, {Pose::identity(), sym}) < 1e-12);
    CHECK(symmetry_aware_rotation_error(p, gt, {Pose::identity()}) ==
          doctest::Approx(M_PI / 2));
}
