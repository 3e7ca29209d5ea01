#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "splitgs/gaussian.hpp"

using namespace splitgs;

namespace {

// Rotation matrix from axis-angle, independent of quat_to_rotation.
Eigen::Matrix3d axis_angle_rotation(const Eigen::Vector3d& axis, double angle) {
    Eigen::Matrix3d k;
    k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
    return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

Eigen::Vector4d random_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

// Independent real SH basis table (degree <= 1 is what the default engine
// uses; degrees 2-3 are covered against the closed-form polynomials).
void reference_basis_deg1(const Eigen::Vector3d& d, double* b) {
    b[0] = 0.5 * std::sqrt(1.0 / M_PI);
    const double c1 = std::sqrt(3.0 / (4.0 * M_PI));
    b[1] = -c1 * d.y();
    b[2] = c1 * d.z();
    b[3] = -c1 * d.x();
}

}  // namespace

TEST_CASE("assemble_covariance identity rotation unit scale") {
    auto cov = assemble_covariance({1, 0, 0, 0}, {1, 1, 1});
    CHECK((cov.sym - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("assemble_covariance axis-aligned scaling") {
    auto cov = assemble_covariance({1, 0, 0, 0}, {2, 1, 1});
    Eigen::Matrix3d expected = Eigen::Vector3d(4, 1, 1).asDiagonal();
    CHECK((cov.sym - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("assemble_covariance 90 degrees about z against matrix-product oracle") {
    const double half = M_PI / 4.0;
    Eigen::Vector4d q(std::cos(half), 0, 0, std::sin(half));
    auto cov = assemble_covariance(q, {2, 1, 1});

    Eigen::Matrix3d r = axis_angle_rotation({0, 0, 1}, M_PI / 2.0);
    Eigen::Matrix3d s = Eigen::Vector3d(2, 1, 1).asDiagonal();
    Eigen::Matrix3d oracle = r * s * s.transpose() * r.transpose();
    CHECK((cov.sym - oracle).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((cov.sym - Eigen::Matrix3d(Eigen::Vector3d(1, 4, 1).asDiagonal())).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("assemble_covariance quaternion sign flip is exact") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20; ++i) {
        Eigen::Vector4d q = random_quat(rng);
        Eigen::Vector3d s(0.5 + i * 0.1, 1.0, 2.0);
        auto a = assemble_covariance(q, s);
        auto b = assemble_covariance(-q, s);
        CHECK((a.sym - b.sym).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("assemble_covariance eigenvalues equal squared scales") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 20; ++i) {
        Eigen::Vector4d q = random_quat(rng);
        Eigen::Vector3d s(0.3, 1.1, 2.7);
        auto cov = assemble_covariance(q, s);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov.sym);
        Eigen::Vector3d expected(0.09, 1.21, 7.29);
        std::sort(expected.data(), expected.data() + 3);
        CHECK((eig.eigenvalues() - expected).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("assemble_covariance rejects bad inputs") {
    CHECK_THROWS_AS(assemble_covariance({1, 0, 0, 0}, {0, 1, 1}), InvalidParameterError);
    CHECK_THROWS_AS(assemble_covariance({1, 0, 0, 0}, {1, -2, 1}), InvalidParameterError);
    Eigen::Vector4d nanq(std::nan(""), 0, 0, 0);
    CHECK_THROWS_AS(assemble_covariance(nanq, {1, 1, 1}), InvalidParameterError);
}

TEST_CASE("assemble_covariance_backward matches finite differences") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::Vector4d q = random_quat(rng) * 1.3;  // raw, not unit
        Eigen::Vector3d ls(0.2 * n(rng), 0.2 * n(rng), 0.2 * n(rng));
        Eigen::Matrix3d g;
        for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = n(rng);
        g = 0.5 * (g + g.transpose()).eval();

        auto loss = [&](const Eigen::Vector4d& qq, const Eigen::Vector3d& lls) {
            auto cov = assemble_covariance(qq, lls.array().exp());
            return (g.array() * cov.sym.array()).sum();
        };

        Eigen::Vector4d dq = Eigen::Vector4d::Zero();
        Eigen::Vector3d dls = Eigen::Vector3d::Zero();
        assemble_covariance_backward(q, ls.array().exp(), g, dq, dls);

        const double h = 1e-6;
        for (int k = 0; k < 4; ++k) {
            Eigen::Vector4d qp = q, qm = q;
            qp[k] += h;
            qm[k] -= h;
            const double fd = (loss(qp, ls) - loss(qm, ls)) / (2 * h);
            CHECK(dq[k] == doctest::Approx(fd).epsilon(1e-5));
        }
        for (int k = 0; k < 3; ++k) {
            Eigen::Vector3d lp = ls, lm = ls;
            lp[k] += h;
            lm[k] -= h;
            const double fd = (loss(q, lp) - loss(q, lm)) / (2 * h);
            CHECK(dls[k] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("evaluate_density closed forms") {
    Covariance3 eye;
    CHECK(evaluate_density(eye, {0, 0, 0}) == 1.0);
    CHECK(evaluate_density(eye, {1, 0, 0}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

    Covariance3 aniso;
    aniso.sym = Eigen::Vector3d(4, 1, 1).asDiagonal();
    // Quadratic-form oracle: offset^T diag(1/4,1,1) offset = 1 for (2,0,0).
    const Eigen::Vector3d off(2, 0, 0);
    const double q = off.dot(Eigen::Vector3d(1.0 / 4, 1, 1).asDiagonal() * off);
    CHECK(evaluate_density(aniso, off) == doctest::Approx(std::exp(-0.5 * q)).epsilon(1e-12));
}

TEST_CASE("evaluate_density monotone along rays") {
    auto cov = assemble_covariance(Eigen::Vector4d(0.9, 0.2, -0.1, 0.3).normalized(), {0.5, 1, 2});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::Vector3d dir(n(rng), n(rng), n(rng));
        dir.normalize();
        double prev = evaluate_density(cov, Eigen::Vector3d::Zero());
        for (int s = 1; s <= 10; ++s) {
            double cur = evaluate_density(cov, dir * (0.3 * s));
            CHECK(cur <= prev + 1e-15);
            prev = cur;
        }
    }
}

TEST_CASE("evaluate_density throws on degenerate covariance") {
    Covariance3 bad;
    bad.sym = Eigen::Matrix3d::Zero();
    CHECK_THROWS_AS(evaluate_density(bad, {1, 0, 0}), DegenerateGaussianError);
}

TEST_CASE("evaluate_sh degree 0 is the constant basis") {
    std::vector<double> sh = {1, 1, 1};
    auto rgb = evaluate_sh(sh.data(), 0, {0, 0, 1});
    CHECK(rgb.x() == doctest::Approx(0.2820948).epsilon(1e-6));
    auto rgb2 = evaluate_sh(sh.data(), 0, Eigen::Vector3d(1, 0, 0));
    CHECK((rgb - rgb2).norm() == 0.0);
}

TEST_CASE("evaluate_sh degree 1 against independent basis table") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<double> sh(12);
    for (auto& v : sh) v = u(rng);
    sh[0] = 1.2;
    sh[4] = 0.9;
    sh[8] = 1.1;  // keep raw values positive

    const Eigen::Vector3d dir(0, 0, 1);
    double b[4];
    reference_basis_deg1(dir, b);
    auto rgb = evaluate_sh(sh.data(), 1, dir);
    for (int c = 0; c < 3; ++c) {
        double expected = 0;
        for (int k = 0; k < 4; ++k) expected += b[k] * sh[c * 4 + k];
        CHECK(rgb[c] == doctest::Approx(std::max(expected, 0.0)).epsilon(1e-12));
    }
}

TEST_CASE("evaluate_sh clamps negatives to zero") {
    std::vector<double> sh(3, -2.0);
    auto rgb = evaluate_sh(sh.data(), 0, {0, 0, 1});
    CHECK(rgb.minCoeff() == 0.0);
}

TEST_CASE("evaluate_sh_backward matches finite differences (degrees 1..3)") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int degree = 1; degree <= 3; ++degree) {
        const int n = sh_coeff_count(degree);
        std::vector<double> sh(3 * n);
        for (auto& v : sh) v = u(rng);
        for (int c = 0; c < 3; ++c) sh[c * n] = 1.5;  // positive raw values

        Eigen::Vector3d dir(0.3, -0.5, 0.9);
        dir.normalize();
        Eigen::Vector3d adj(0.7, -0.4, 1.1);

        std::vector<double> dsh(3 * n, 0.0);
        Eigen::Vector3d ddir;
        evaluate_sh_backward(sh.data(), degree, dir, adj, dsh.data(), ddir);

        const double h = 1e-6;
        for (int k = 0; k < 3 * n; ++k) {
            std::vector<double> p = sh, m = sh;
            p[k] += h;
            m[k] -= h;
            const double fd = (adj.dot(evaluate_sh(p.data(), degree, dir)) -
                               adj.dot(evaluate_sh(m.data(), degree, dir))) /
                              (2 * h);
            CHECK(dsh[k] == doctest::Approx(fd).epsilon(1e-5));
        }
        // Direction gradient on the raw (pre-normalization is caller's job) dir.
        for (int a = 0; a < 3; ++a) {
            Eigen::Vector3d dp = dir, dm = dir;
            dp[a] += h;
            dm[a] -= h;
            const double fd = (adj.dot(evaluate_sh(sh.data(), degree, dp)) -
                               adj.dot(evaluate_sh(sh.data(), degree, dm))) /
                              (2 * h);
            CHECK(ddir[a] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("quat_to_rotation_backward matches finite differences") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
        if (q.norm() < 0.1) continue;
        Eigen::Matrix3d g;
        for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = n(rng);

        Eigen::Vector4d dq = quat_to_rotation_backward(q, g);
        const double h = 1e-6;
        for (int k = 0; k < 4; ++k) {
            Eigen::Vector4d qp = q, qm = q;
            qp[k] += h;
            qm[k] -= h;
            const double fd = ((g.array() * quat_to_rotation(qp).array()).sum() -
                               (g.array() * quat_to_rotation(qm).array()).sum()) /
                              (2 * h);
            CHECK(dq[k] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("GaussianPrimitive activations") {
    GaussianPrimitive g;
    g.opacity_logit = 0.0;
    CHECK(g.opacity() == doctest::Approx(0.5));
    g.log_scale = Eigen::Vector3d(0, std::log(2.0), std::log(0.5));
    CHECK(g.scale().isApprox(Eigen::Vector3d(1, 2, 0.5)));
}
