#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "splitgs/camera.hpp"

using namespace splitgs;

namespace {

Camera simple_camera(double fx = 100, double fy = 100, double cx = 32, double cy = 32) {
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.width = 64;
    cam.height = 64;
    cam.near = 0.05;
    cam.far = 50.0;
    return cam;
}

}  // namespace

TEST_CASE("project_point principal point and similar triangles") {
    Camera cam = simple_camera();
    auto p = project_point(cam, {0, 0, 5});
    REQUIRE(p.has_value());
    CHECK(p->screen.x() == doctest::Approx(32.0));
    CHECK(p->screen.y() == doctest::Approx(32.0));
    CHECK(p->depth == doctest::Approx(5.0));

    Camera cam2 = simple_camera(100, 100, 0, 0);
    auto q = project_point(cam2, {1, 0, 2});
    REQUIRE(q.has_value());
    CHECK(q->screen.x() == doctest::Approx(50.0));
}

TEST_CASE("project_point culls behind the near plane") {
    Camera cam = simple_camera();
    CHECK_FALSE(project_point(cam, {0, 0, cam.near / 2}).has_value());
    CHECK_FALSE(project_point(cam, {0, 0, -1}).has_value());
}

TEST_CASE("projection_jacobian on-axis and scaling") {
    Camera cam = simple_camera();
    auto j = projection_jacobian(cam, {0, 0, 2});
    CHECK(j(0, 0) == doctest::Approx(50.0));
    CHECK(j(1, 1) == doctest::Approx(50.0));
    CHECK(j(0, 2) == doctest::Approx(0.0));
    CHECK(j(1, 2) == doctest::Approx(0.0));

    auto j2 = projection_jacobian(cam, {0, 0, 4});
    CHECK(j2(0, 0) == doctest::Approx(j(0, 0) / 2));
    CHECK(j2(1, 1) == doctest::Approx(j(1, 1) / 2));

    CHECK_THROWS_AS(projection_jacobian(cam, {0, 0, -1}), InvalidParameterError);
}

TEST_CASE("projection_jacobian matches finite differences of project_point") {
    Camera cam = simple_camera(87, 121, 30, 34);
    // Generic world point; identity extrinsics so p_cam == p_world.
    const Eigen::Vector3d p(0.4, -0.7, 3.1);
    auto j = projection_jacobian(cam, p);
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
        Eigen::Vector3d dp = p, dm = p;
        dp[a] += h;
        dm[a] -= h;
        const auto sp = project_point(cam, dp)->screen;
        const auto sm = project_point(cam, dm)->screen;
        CHECK(std::abs(j(0, a) - (sp.x() - sm.x()) / (2 * h)) < 1e-4);
        CHECK(std::abs(j(1, a) - (sp.y() - sm.y()) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("project_covariance symbolic on-axis case") {
    const double f = 90.0, d = 3.0;
    Camera cam = simple_camera(f, f, 32, 32);
    Covariance3 eye;
    auto s2 = project_covariance(cam, {0, 0, d}, eye, 0.0);
    // J = [[f/d,0,0],[0,f/d,0]] at the axis, so J Sigma J^T = (f/d)^2 I.
    const double expected = (f / d) * (f / d);
    CHECK(s2(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(s2(1, 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(s2(0, 1)) < 1e-12);

    auto dil = project_covariance(cam, {0, 0, d}, eye, 0.3);
    CHECK(dil(0, 0) == doctest::Approx(expected + 0.3).epsilon(1e-12));
    CHECK(dil(1, 1) == doctest::Approx(expected + 0.3).epsilon(1e-12));
}

TEST_CASE("project_covariance symmetric positive definite") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> n(0.0, 1.0);
    Camera cam = simple_camera();
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
        if (q.norm() < 0.1) continue;
        Eigen::Vector3d s(0.1 + std::abs(n(rng)), 0.1 + std::abs(n(rng)), 0.1 + std::abs(n(rng)));
        auto cov = assemble_covariance(q, s);
        Eigen::Vector3d p(n(rng), n(rng), 3 + std::abs(n(rng)));
        auto s2 = project_covariance(cam, p, cov, 0.3);
        CHECK(std::abs(s2(0, 1) - s2(1, 0)) < 1e-12);
        CHECK(s2(0, 0) > 0);
        CHECK(s2.determinant() > 0);
    }
}

TEST_CASE("in-plane translation of camera and point leaves projected covariance unchanged") {
    Camera cam = Camera::look_at({0.3, -0.2, -1.0}, {0, 0, 1.5}, {0, -1, 0}, 80, 80, 64, 64);
    auto cov = assemble_covariance(Eigen::Vector4d(0.8, 0.1, -0.3, 0.2).normalized(), {0.4, 0.7, 1.2});
    const Eigen::Vector3d p(0.2, 0.1, 1.8);
    auto base = project_covariance(cam, p, cov, 0.3);

    //

    const Eigen::Vector3d shift = cam.rotation().transpose() * Eigen::Vector3d(0.37, -0.21, 0.0);
    Camera moved = cam;
    moved.world_to_camera.topRightCorner<3, 1>() = -moved.rotation() * (cam.position() + shift);
    auto shifted = project_covariance(moved, p + shift, cov, 0.3);
    CHECK((base - shifted).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("project_gaussian_backward matches finite differences") {
    Camera cam = Camera::look_at({0.4, 0.2, -0.8}, {0, 0, 1.4}, {0, -1, 0}, 75, 91, 64, 48);
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n(0.0, 1.0);

    for (int trial = 0; trial < 4; ++trial) {
        const Eigen::Vector3d p(0.3 * n(rng), 0.3 * n(rng), 1.5 + 0.3 * n(rng));
        Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
        Eigen::Vector3d s(0.2 + 0.1 * std::abs(n(rng)), 0.3, 0.5);
        Eigen::Matrix3d sigma = assemble_covariance(q, s).sym;

        // Random adjoints; cov2 adjoint in full-matrix convention.
        Eigen::Vector2d gscreen(n(rng), n(rng));
        Eigen::Matrix2d gcov2;
        gcov2 << n(rng), n(rng), 0, n(rng);
        gcov2(1, 0) = gcov2(0, 1);
        const double gdepth = n(rng);

        auto loss = [&](const Eigen::Vector3d& pp, const Eigen::Matrix3d& ss) {
            Covariance3 c3{ss};
            auto pg = project_gaussian(cam, pp, c3, 0.3);
            REQUIRE(pg.has_value());
            return gscreen.dot(pg->screen) + (gcov2.array() * pg->cov2.array()).sum() +
                   gdepth * pg->depth;
        };

        Covariance3 c3{sigma};
        auto pg = project_gaussian(cam, p, c3, 0.3);
        REQUIRE(pg.has_value());
        Eigen::Vector3d dp = Eigen::Vector3d::Zero();
        Eigen::Matrix3d dcov = Eigen::Matrix3d::Zero();
        project_gaussian_backward(cam, pg->cache, gscreen, gcov2, gdepth, dp, dcov);

        const double h = 1e-6;
        for (int a = 0; a < 3; ++a) {
            Eigen::Vector3d pp = p, pm = p;
            pp[a] += h;
            pm[a] -= h;
            const double fd = (loss(pp, sigma) - loss(pm, sigma)) / (2 * h);
            CHECK(dp[a] == doctest::Approx(fd).epsilon(1e-4));
        }
        // Symmetric perturbations of the 3D covariance.
        for (int r = 0; r < 3; ++r)
            for (int c = r; c < 3; ++c) {
                Eigen::Matrix3d sp = sigma, sm = sigma;
                sp(r, c) += h;
                sp(c, r) = sp(r, c);
                sm(r, c) -= h;
                sm(c, r) = sm(r, c);
                const double fd = (loss(p, sp) - loss(p, sm)) / (2 * h);
                const double analytic = r == c ? dcov(r, c) : dcov(r, c) + dcov(c, r);
                CHECK(analytic == doctest::Approx(fd).epsilon(1e-4));
            }
    }
}

TEST_CASE("camera validation") {
    Camera cam = simple_camera();
    CHECK_NOTHROW(cam.validate());
    cam.fx = -1;
    CHECK_THROWS_AS(cam.validate(), InvalidParameterError);
}
