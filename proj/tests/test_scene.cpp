#include <doctest.h>

#include <cmath>
#include <random>

#include "splitgs/scene.hpp"

using namespace splitgs;

namespace {

constexpr double kShDc = 0.28209479177387814;

GaussianCloud small_cloud(std::mt19937_64& rng, size_t n, const Eigen::Vector3d& center,
                          double spread, int degree = 1) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> color(0.2, 0.8);
    GaussianCloud cloud;
    cloud.sh_degree = degree;
    cloud.resize(n);
    const int coeffs = sh_coeff_count(degree);
    for (size_t i = 0; i < n; ++i) {
        cloud.center[i] = center + spread * Eigen::Vector3d(g(rng), g(rng), g(rng));
        cloud.rotation[i] = Eigen::Vector4d(1.0 + 0.1 * g(rng), 0.1 * g(rng), 0.1 * g(rng), 0.1 * g(rng));
        cloud.log_scale[i] = Eigen::Vector3d::Constant(std::log(0.08 + 0.02 * std::abs(g(rng))));
        cloud.opacity_logit[i] = 0.5 * g(rng);
        for (int c = 0; c < 3; ++c) cloud.sh(static_cast<Eigen::Index>(i), c * coeffs) = color(rng) / kShDc;
    }
    return cloud;
}

Scene small_scene(uint64_t seed, size_t ns = 6, size_t nd = 4, int hidden = 16, int depth = 2) {
    std::mt19937_64 rng(seed);
    Scene scene;
    scene.encoding = EncodingConfig{4, 3};
    scene.static_set.cloud = small_cloud(rng, ns, {0, 0, 1.6}, 0.3);
    scene.dynamic_set.cloud = small_cloud(rng, nd, {0.2, 0.1, 1.3}, 0.15);
    scene.init_mlps(hidden, depth, seed);
    return scene;
}

Camera scene_camera() {
    return Camera::look_at({0, 0, -0.5}, {0, 0, 1.5}, {0, -1, 0}, 24, 24, 16, 16, 0.05, 10.0);
}

void randomize_mlp(Mlp& net, uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    auto& w = net.weights.back();
    for (int r = 0; r < w.rows(); ++r)
        for (int c = 0; c < w.cols(); ++c) w(r, c) = n(rng);
    for (int r = 0; r < net.biases.back().size(); ++r) net.biases.back()[r] = n(rng);
}

}  // namespace

TEST_CASE("static appearance is the frozen base with a zero-initialized head") {
    Scene scene = small_scene(1);
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
        auto app = static_appearance_at(scene.static_set, t, scene.encoding);
        CHECK((app.sh - scene.static_set.cloud.sh).cwiseAbs().maxCoeff() == 0.0);
        for (size_t i = 0; i < scene.static_set.size(); ++i)
            CHECK(app.opacity_logit[static_cast<Eigen::Index>(i)] ==
                  scene.static_set.cloud.opacity_logit[i]);
    }
}

TEST_CASE("static appearance varies over time once the head is nonzero, geometry untouched") {
    Scene scene = small_scene(2);
    randomize_mlp(scene.static_set.app_mlp, 99, 0.3);
    auto a = static_appearance_at(scene.static_set, 0.1, scene.encoding);
    auto b = static_appearance_at(scene.static_set, 0.9, scene.encoding);
    CHECK((a.sh - b.sh).cwiseAbs().maxCoeff() > 1e-6);
    // Geometry is not part of the appearance path at all; spot-check that the
    // resolved scene keeps identical static (mu, Sigma) across times.
    SceneEvalOptions opts;
    SceneEvalCache ca, cb;
    scene_forward(scene, 0.1, scene_camera(), RenderSelection::kStaticOnly, opts, &ca);
    scene_forward(scene, 0.9, scene_camera(), RenderSelection::kStaticOnly, opts, &cb);
    for (size_t i = 0; i < ca.static_pg.size(); ++i) {
        CHECK((ca.static_pg[i].mu_world - cb.static_pg[i].mu_world).norm() == 0.0);
        CHECK((ca.static_pg[i].quat_raw - cb.static_pg[i].quat_raw).norm() == 0.0);
        CHECK((ca.static_pg[i].log_s - cb.static_pg[i].log_s).norm() == 0.0);
    }
}

TEST_CASE("hand-set single-layer appearance head matches manual residual evaluation") {
    Scene scene = small_scene(3, 2, 1);
    const int out_dim = scene.static_set.cloud.sh_dim() + 1;
    const int in_dim = scene.encoding.input_dim();
    Mlp app;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n(0.0, 0.2);
    Eigen::MatrixXd w(out_dim, in_dim);
    for (int r = 0; r < out_dim; ++r)
        for (int c = 0; c < in_dim; ++c) w(r, c) = n(rng);
    Eigen::VectorXd b(out_dim);
    for (int r = 0; r < out_dim; ++r) b[r] = n(rng);
    app.weights = {w};
    app.biases = {b};
    scene.static_set.app_mlp = app;

    const double t = 0.4;
    auto got = static_appearance_at(scene.static_set, t, scene.encoding);
    for (size_t i = 0; i < scene.static_set.size(); ++i) {
        Eigen::VectorXd x = encode_input(scene.static_set.cloud.center[i], t, scene.encoding);
        Eigen::VectorXd dw = w * x + b;
        for (int k = 0; k < out_dim - 1; ++k)
            CHECK(got.sh(static_cast<Eigen::Index>(i), k) ==
                  doctest::Approx(scene.static_set.cloud.sh(static_cast<Eigen::Index>(i), k) + dw[k])
                      .epsilon(1e-12));
        CHECK(got.opacity_logit[static_cast<Eigen::Index>(i)] ==
              doctest::Approx(scene.static_set.cloud.opacity_logit[i] + dw[out_dim - 1])
                  .epsilon(1e-12));
    }
}

TEST_CASE("deformation is the identity with a zero-initialized head") {
    Scene scene = small_scene(4);
    for (double t : {0.0, 0.5, 1.0}) {
        auto d = deform_at(scene.dynamic_set, t, scene.encoding);
        for (size_t i = 0; i < scene.dynamic_set.size(); ++i) {
            CHECK((d.center[i] - scene.dynamic_set.cloud.center[i]).norm() == 0.0);
            CHECK((d.rotation[i] - scene.dynamic_set.cloud.rotation[i]).norm() == 0.0);
            CHECK((d.log_scale[i] - scene.dynamic_set.cloud.log_scale[i]).norm() == 0.0);
        }
    }
}

TEST_CASE("forced position offset shifts centers and leaves covariance unchanged") {
    Scene scene = small_scene(5);
    // Zero weights, bias = (0.1, 0, 0) on the position block only.
    auto& net = scene.dynamic_set.deform_mlp;
    for (auto& w : net.weights) w.setZero();
    for (auto& b : net.biases) b.setZero();
    net.biases.back()[0] = 0.1;

    auto d = deform_at(scene.dynamic_set, 0.6, scene.encoding);
    for (size_t i = 0; i < scene.dynamic_set.size(); ++i) {
        const Eigen::Vector3d expected =
            scene.dynamic_set.cloud.center[i] + Eigen::Vector3d(0.1, 0, 0);
        CHECK((d.center[i] - expected).norm() < 1e-15);
        auto base = assemble_covariance(scene.dynamic_set.cloud.rotation[i],
                                        scene.dynamic_set.cloud.log_scale[i].array().exp());
        CHECK((d.covariance[i].sym - base.sym).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("random rotation and scale offsets reassemble per the covariance rule") {
    Scene scene = small_scene(6);
    randomize_mlp(scene.dynamic_set.deform_mlp, 77, 0.2);
    const double t = 0.35;
    auto d = deform_at(scene.dynamic_set, t, scene.encoding);
    for (size_t i = 0; i < scene.dynamic_set.size(); ++i) {
        auto oracle = assemble_covariance(d.rotation[i], d.log_scale[i].array().exp());
        CHECK((d.covariance[i].sym - oracle.sym).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("scene_at union cardinality and source tags") {
    Scene scene = small_scene(7);
    Camera cam = scene_camera();
    auto both = scene_at(scene, 0.5, cam, RenderSelection::kBoth);
    auto stat = scene_at(scene, 0.5, cam, RenderSelection::kStaticOnly);
    auto dyn = scene_at(scene, 0.5, cam, RenderSelection::kDynamicOnly);
    CHECK(both.size() == stat.size() + dyn.size());
    CHECK(both.size() <= scene.static_set.size() + scene.dynamic_set.size());
    for (const auto& g : stat) CHECK(g.source.set == 0);
    for (const auto& g : dyn) CHECK(g.source.set == 1);
}

TEST_CASE("identity at initialization: renders equal across time") {
    Scene scene = small_scene(8);
    Camera cam = scene_camera();
    RenderOutput base =
        render(scene_at(scene, 0.0, cam, RenderSelection::kBoth), cam, scene.background);
    for (double t : {0.25, 0.5, 1.0}) {
        RenderOutput out =
            render(scene_at(scene, t, cam, RenderSelection::kBoth), cam, scene.background);
        double max_diff = 0;
        for (size_t i = 0; i < base.color.size(); ++i)
            max_diff = std::max(max_diff, std::abs(base.color[i] - out.color[i]));
        CHECK(max_diff < 1e-6);
    }
}

TEST_CASE("transparent dynamic set reduces to the static-only render") {
    Scene scene = small_scene(9);
    for (auto& l : scene.dynamic_set.cloud.opacity_logit) l = -40.0;  // alpha ~ 4e-18
    Camera cam = scene_camera();
    RenderOutput both =
        render(scene_at(scene, 0.3, cam, RenderSelection::kBoth), cam, scene.background);
    RenderOutput stat =
        render(scene_at(scene, 0.3, cam, RenderSelection::kStaticOnly), cam, scene.background);
    double max_diff = 0;
    for (size_t i = 0; i < both.color.size(); ++i)
        max_diff = std::max(max_diff, std::abs(both.color[i] - stat.color[i]));
    CHECK(max_diff < 1e-6);
}

TEST_CASE("static geometry is bit-identical across timestamps") {
    Scene scene = small_scene(10);
    randomize_mlp(scene.static_set.app_mlp, 13, 0.4);  // appearance varies
    SceneEvalOptions opts;
    SceneEvalCache c1, c2;
    scene_forward(scene, 0.2, scene_camera(), RenderSelection::kStaticOnly, opts, &c1);
    scene_forward(scene, 0.9, scene_camera(), RenderSelection::kStaticOnly, opts, &c2);
    for (size_t i = 0; i < c1.static_pg.size(); ++i) {
        if (c1.static_pg[i].list_index < 0) continue;
        CHECK(c1.static_pg[i].mu_world == c2.static_pg[i].mu_world);
        CHECK(c1.static_pg[i].log_s == c2.static_pg[i].log_s);
    }
}

TEST_CASE("scene_forward rejects out-of-range time") {
    Scene scene = small_scene(11);
    CHECK_THROWS_AS(scene_at(scene, 1.5, scene_camera(), RenderSelection::kBoth),
                    InvalidParameterError);
}

TEST_CASE("scene_backward routes gradients through every parameter group") {
    Scene scene = small_scene(12, 4, 3);
    randomize_mlp(scene.static_set.app_mlp, 1, 0.05);
    randomize_mlp(scene.dynamic_set.deform_mlp, 2, 0.05);
    randomize_mlp(scene.dynamic_set.app_mlp, 3, 0.05);
    Camera cam = scene_camera();
    const double t = 0.45;

    SceneEvalOptions opts;
    SceneEvalCache cache;
    auto list = scene_forward(scene, t, cam, RenderSelection::kBoth, opts, &cache);
    REQUIRE(!list.empty());

    // Fixed random adjoint over all splat fields.
    std::mt19937_64 rng(55);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<SplatGrads> adj(list.size());
    for (auto& a : adj) {
        a.screen = {n(rng), n(rng)};
        a.cov2 << n(rng), 0.0, 0.0, n(rng);
        const double off = n(rng);
        a.cov2(0, 1) = a.cov2(1, 0) = off;
        a.rgb = {n(rng), n(rng), n(rng)};
        a.alpha = n(rng);
        a.depth = n(rng);
    }

    auto objective = [&](const Scene& s) {
        SceneEvalCache c;
        auto l = scene_forward(s, t, cam, RenderSelection::kBoth, opts, &c);
        REQUIRE(l.size() == adj.size());
        double acc = 0;
        for (size_t i = 0; i < l.size(); ++i) {
            acc += adj[i].screen.dot(l[i].screen);
            acc += (adj[i].cov2.array() * l[i].cov2.array()).sum();
            acc += adj[i].rgb.dot(l[i].rgb);
            acc += adj[i].alpha * l[i].alpha;
            acc += adj[i].depth * l[i].depth;
        }
        return acc;
    };

    SceneGrads grads = SceneGrads::zeros_like(scene);
    scene_backward(scene, cache, adj, grads);

    const double h = 1e-6;
    auto fd_check = [&](double analytic, auto mutate) {
        Scene p = scene, m = scene;
        mutate(p, h);
        mutate(m, -h);
        const double fd = (objective(p) - objective(m)) / (2 * h);
        if (std::abs(analytic) > 1e-9 || std::abs(fd) > 1e-9)
            CHECK(std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8}) <
                  2e-3);
    };

    for (size_t i = 0; i < scene.static_set.size(); ++i) {
        for (int a = 0; a < 3; ++a)
            fd_check(grads.static_cloud.center[i][a],
                     [&, a](Scene& s, double d) { s.static_set.cloud.center[i][a] += d; });
        fd_check(grads.static_cloud.opacity_logit[i],
                 [&](Scene& s, double d) { s.static_set.cloud.opacity_logit[i] += d; });
        fd_check(grads.static_cloud.sh(static_cast<Eigen::Index>(i), 0),
                 [&](Scene& s, double d) { s.static_set.cloud.sh(static_cast<Eigen::Index>(i), 0) += d; });
    }
    for (size_t i = 0; i < scene.dynamic_set.size(); ++i) {
        for (int a = 0; a < 3; ++a)
            fd_check(grads.dyn_cloud.center[i][a],
                     [&, a](Scene& s, double d) { s.dynamic_set.cloud.center[i][a] += d; });
        for (int a = 0; a < 4; ++a)
            fd_check(grads.dyn_cloud.rotation[i][a],
                     [&, a](Scene& s, double d) { s.dynamic_set.cloud.rotation[i][a] += d; });
        for (int a = 0; a < 3; ++a)
            fd_check(grads.dyn_cloud.log_scale[i][a],
                     [&, a](Scene& s, double d) { s.dynamic_set.cloud.log_scale[i][a] += d; });
    }
    // One spot-check per MLP parameter block.
    fd_check(grads.static_app.weights[0](0, 0),
             [&](Scene& s, double d) { s.static_set.app_mlp.weights[0](0, 0) += d; });
    fd_check(grads.deform.weights[0](1, 2),
             [&](Scene& s, double d) { s.dynamic_set.deform_mlp.weights[0](1, 2) += d; });
    fd_check(grads.dyn_app.biases[0][0],
             [&](Scene& s, double d) { s.dynamic_set.app_mlp.biases[0][0] += d; });
}
