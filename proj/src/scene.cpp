#include "splitgs/scene.hpp"

#include <cmath>

namespace splitgs {

void GaussianCloud::validate() const {
    const size_t n = size();
    if (rotation.size() != n || log_scale.size() != n || opacity_logit.size() != n ||
        static_cast<size_t>(sh.rows()) != n)
        throw ContractViolationError("GaussianCloud: field sizes disagree");
    if (sh.cols() != sh_dim()) throw ContractViolationError("GaussianCloud: sh width mismatch");
    if (sh_degree < 0 || sh_degree > kMaxShDegree)
        throw InvalidParameterError("GaussianCloud: sh_degree out of range");
}

void GaussianCloud::resize(size_t n) {
    center.resize(n, Eigen::Vector3d::Zero());
    rotation.resize(n, Eigen::Vector4d(1, 0, 0, 0));
    log_scale.resize(n, Eigen::Vector3d::Zero());
    opacity_logit.resize(n, 0.0);
    ShMatrix old = sh;
    sh = ShMatrix::Zero(static_cast<Eigen::Index>(n), sh_dim());
    const Eigen::Index copy = std::min<Eigen::Index>(old.rows(), sh.rows());
    if (copy > 0 && old.cols() == sh.cols()) sh.topRows(copy) = old.topRows(copy);
}

GaussianPrimitive GaussianCloud::primitive(size_t i) const {
    GaussianPrimitive g;
    g.center = center[i];
    g.rotation = rotation[i];
    g.log_scale = log_scale[i];
    g.opacity_logit = opacity_logit[i];
    g.sh_degree = sh_degree;
    g.sh_coeffs.assign(sh.row(static_cast<Eigen::Index>(i)).data(),
                       sh.row(static_cast<Eigen::Index>(i)).data() + sh.cols());
    return g;
}

void GaussianCloud::set_primitive(size_t i, const GaussianPrimitive& g) {
    center[i] = g.center;
    rotation[i] = g.rotation;
    log_scale[i] = g.log_scale;
    opacity_logit[i] = g.opacity_logit;
    if (static_cast<int>(g.sh_coeffs.size()) != sh_dim())
        throw ContractViolationError("set_primitive: sh size mismatch");
    for (int c = 0; c < sh_dim(); ++c) sh(static_cast<Eigen::Index>(i), c) = g.sh_coeffs[c];
}

void GaussianCloud::keep(const std::vector<char>& mask) {
    if (mask.size() != size()) throw ContractViolationError("GaussianCloud::keep: mask size");
    size_t dst = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        if (dst != i) {
            center[dst] = center[i];
            rotation[dst] = rotation[i];
            log_scale[dst] = log_scale[i];
            opacity_logit[dst] = opacity_logit[i];
            sh.row(static_cast<Eigen::Index>(dst)) = sh.row(static_cast<Eigen::Index>(i));
        }
        ++dst;
    }
    center.resize(dst);
    rotation.resize(dst);
    log_scale.resize(dst);
    opacity_logit.resize(dst);
    sh.conservativeResize(static_cast<Eigen::Index>(dst), Eigen::NoChange);
}

void GaussianCloud::append_row_copy(size_t src) {
    center.push_back(center[src]);
    rotation.push_back(rotation[src]);
    log_scale.push_back(log_scale[src]);
    opacity_logit.push_back(opacity_logit[src]);
    sh.conservativeResize(sh.rows() + 1, Eigen::NoChange);
    sh.row(sh.rows() - 1) = sh.row(static_cast<Eigen::Index>(src));
}

CloudGrads CloudGrads::zeros_like(const GaussianCloud& cloud) {
    CloudGrads g;
    g.center.assign(cloud.size(), Eigen::Vector3d::Zero());
    g.rotation.assign(cloud.size(), Eigen::Vector4d::Zero());
    g.log_scale.assign(cloud.size(), Eigen::Vector3d::Zero());
    g.opacity_logit.assign(cloud.size(), 0.0);
    g.sh = ShMatrix::Zero(cloud.sh.rows(), cloud.sh.cols());
    return g;
}

void CloudGrads::set_zero() {
    for (auto& v : center) v.setZero();
    for (auto& v : rotation) v.setZero();
    for (auto& v : log_scale) v.setZero();
    std::fill(opacity_logit.begin(), opacity_logit.end(), 0.0);
    sh.setZero();
}

void Scene::init_mlps(int hidden, int depth, uint64_t seed) {
    const int in = encoding.input_dim();
    static_set.app_mlp = Mlp::create(in, hidden, depth, static_set.cloud.sh_dim() + 1, seed);
    dynamic_set.deform_mlp = Mlp::create(in, hidden, depth, 10, seed + 1);
    dynamic_set.app_mlp = Mlp::create(in, hidden, depth, dynamic_set.cloud.sh_dim() + 1, seed + 2);
}

SceneGrads SceneGrads::zeros_like(const Scene& scene) {
    SceneGrads g;
    g.static_cloud = CloudGrads::zeros_like(scene.static_set.cloud);
    g.static_app = MlpGrads::zeros_like(scene.static_set.app_mlp);
    g.dyn_cloud = CloudGrads::zeros_like(scene.dynamic_set.cloud);
    g.deform = MlpGrads::zeros_like(scene.dynamic_set.deform_mlp);
    g.dyn_app = MlpGrads::zeros_like(scene.dynamic_set.app_mlp);
    return g;
}

void SceneGrads::set_zero() {
    static_cloud.set_zero();
    static_app.set_zero();
    dyn_cloud.set_zero();
    deform.set_zero();
    dyn_app.set_zero();
}

namespace {

Eigen::MatrixXd encode_batch(const std::vector<Eigen::Vector3d>& centers, double t,
                             const EncodingConfig& enc) {
    Eigen::MatrixXd x(enc.input_dim(), static_cast<Eigen::Index>(centers.size()));
    for (size_t i = 0; i < centers.size(); ++i)
        encode_input_into(centers[i], t, enc, x.col(static_cast<Eigen::Index>(i)).data());
    return x;
}

constexpr int kDeformOut = 10;  // (dmu 3, drot 4, dlog_scale 3)

}  // namespace

StaticAppearance static_appearance_at(const StaticSet& set, double t, const EncodingConfig& enc,
                                      bool apply_app) {
    StaticAppearance out;
    const size_t n = set.size();
    out.sh = set.cloud.sh;
    out.opacity_logit.resize(static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < n; ++i)
        out.opacity_logit[static_cast<Eigen::Index>(i)] = set.cloud.opacity_logit[i];
    if (!apply_app || n == 0) return out;

    Eigen::MatrixXd x = encode_batch(set.cloud.center, t, enc);
    Eigen::MatrixXd dw = mlp_forward(set.app_mlp, x);
    const int shd = set.cloud.sh_dim();
    for (size_t i = 0; i < n; ++i) {
        const auto col = dw.col(static_cast<Eigen::Index>(i));
        for (int c = 0; c < shd; ++c) out.sh(static_cast<Eigen::Index>(i), c) += col[c];
        out.opacity_logit[static_cast<Eigen::Index>(i)] += col[shd];
    }
    return out;
}

DeformedGeometry deform_at(const DynamicSet& set, double t, const EncodingConfig& enc) {
    DeformedGeometry out;
    const size_t n = set.size();
    out.center.resize(n);
    out.rotation.resize(n);
    out.log_scale.resize(n);
    out.covariance.resize(n);
    if (n == 0) return out;

    Eigen::MatrixXd x = encode_batch(set.cloud.center, t, enc);
    Eigen::MatrixXd d = mlp_forward(set.deform_mlp, x);
    for (size_t i = 0; i < n; ++i) {
        const auto col = d.col(static_cast<Eigen::Index>(i));
        out.center[i] = set.cloud.center[i] + col.segment<3>(0);
        Eigen::Vector4d q = set.cloud.rotation[i] + col.segment<4>(3);
        if (q.norm() < 1e-8) {
            log_warn("deform_at: degenerate deformed quaternion, falling back to canonical");
            q = set.cloud.rotation[i];
        }
        out.rotation[i] = q;
        out.log_scale[i] = set.cloud.log_scale[i] + col.segment<3>(7);
        out.covariance[i] = assemble_covariance(q, out.log_scale[i].array().exp());
    }
    return out;
}

namespace {

struct EffectiveGaussian {
    Eigen::Vector3d mu;
    Eigen::Vector4d quat;   // raw; fallback already applied
    bool quat_fallback = false;
    Eigen::Vector3d log_s;
    double logit = 0;
    const double* sh_row = nullptr;
};

void emit_set(int32_t set_tag, const std::vector<EffectiveGaussian>& gs, int sh_degree,
              const Camera& cam, const SceneEvalOptions& opts,
              std::vector<RenderReadyGaussian>& out, std::vector<SceneEvalCache::PerGaussian>* pg) {
    const Eigen::Vector3d cam_pos = cam.position();
    for (size_t i = 0; i < gs.size(); ++i) {
        const auto& eg = gs[i];
        SceneEvalCache::PerGaussian cache_entry;
        cache_entry.mu_world = eg.mu;
        cache_entry.quat_raw = eg.quat;
        cache_entry.quat_fallback = eg.quat_fallback;
        cache_entry.log_s = eg.log_s;
        cache_entry.logit = eg.logit;
        cache_entry.alpha = sigmoid(eg.logit);

        auto keep = [&]() -> bool {
            Covariance3 cov = assemble_covariance(eg.quat, eg.log_s.array().exp());
            auto proj = project_gaussian(cam, eg.mu, cov, opts.dilation);
            if (!proj) return false;
            // Expanded-frustum test: keep off-screen centers whose 3-sigma
            // footprint still reaches the image.
            const double a = proj->cov2(0, 0), b = proj->cov2(0, 1), c = proj->cov2(1, 1);
            const double lmax = 0.5 * (a + c) + std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
            const double margin = opts.frustum_margin_sigma * std::sqrt(std::max(0.0, lmax));
            if (proj->screen.x() < -margin || proj->screen.x() >= cam.width + margin ||
                proj->screen.y() < -margin || proj->screen.y() >= cam.height + margin)
                return false;

            Eigen::Vector3d to_g = eg.mu - cam_pos;
            const double r = to_g.norm();
            cache_entry.dir_norm = r;
            cache_entry.dir = r > 1e-12 ? Eigen::Vector3d(to_g / r) : Eigen::Vector3d(0, 0, 1);
            cache_entry.proj = proj->cache;

            RenderReadyGaussian rg;
            rg.screen = proj->screen;
            rg.cov2 = proj->cov2;
            rg.depth = proj->depth;
            rg.rgb = evaluate_sh(eg.sh_row, sh_degree, cache_entry.dir);
            rg.alpha = cache_entry.alpha;
            rg.source = {set_tag, static_cast<int32_t>(i)};
            cache_entry.list_index = static_cast<int32_t>(out.size());
            out.push_back(rg);
            return true;
        };
        if (!keep()) cache_entry.list_index = -1;
        if (pg) pg->push_back(cache_entry);
    }
}

}  // namespace

std::vector<RenderReadyGaussian> scene_forward(const Scene& scene, double t, const Camera& cam,
                                               RenderSelection which, const SceneEvalOptions& opts,
                                               SceneEvalCache* cache) {
    if (t < 0.0 || t > 1.0) throw InvalidParameterError("scene_forward: t outside [0,1]");
    scene.static_set.cloud.validate();
    scene.dynamic_set.cloud.validate();

    SceneEvalCache local;
    SceneEvalCache& c = cache ? *cache : local;
    c = SceneEvalCache{};
    c.t = t;
    c.cam = cam;
    c.which = which;
    c.opts = opts;

    std::vector<RenderReadyGaussian> out;

    if (which != RenderSelection::kDynamicOnly) {
        const auto& set = scene.static_set;
        const size_t n = set.size();
        c.static_sh_eff = set.cloud.sh;
        Eigen::VectorXd logit_eff(static_cast<Eigen::Index>(n));
        for (size_t i = 0; i < n; ++i) logit_eff[static_cast<Eigen::Index>(i)] = set.cloud.opacity_logit[i];
        if (opts.apply_static_app && n > 0) {
            c.static_app_applied = true;
            c.static_enc = encode_batch(set.cloud.center, t, scene.encoding);
            Eigen::MatrixXd dw = mlp_forward(set.app_mlp, c.static_enc, &c.static_app_cache);
            const int shd = set.cloud.sh_dim();
            for (size_t i = 0; i < n; ++i) {
                const auto col = dw.col(static_cast<Eigen::Index>(i));
                for (int k = 0; k < shd; ++k) c.static_sh_eff(static_cast<Eigen::Index>(i), k) += col[k];
                logit_eff[static_cast<Eigen::Index>(i)] += col[shd];
            }
        }
        std::vector<EffectiveGaussian> gs(n);
        for (size_t i = 0; i < n; ++i) {
            gs[i].mu = set.cloud.center[i];
            gs[i].quat = set.cloud.rotation[i];
            gs[i].log_s = set.cloud.log_scale[i];
            gs[i].logit = logit_eff[static_cast<Eigen::Index>(i)];
            gs[i].sh_row = c.static_sh_eff.row(static_cast<Eigen::Index>(i)).data();
        }
        emit_set(0, gs, set.cloud.sh_degree, cam, opts, out, &c.static_pg);
        c.static_alpha.resize(n);
        for (size_t i = 0; i < n; ++i) c.static_alpha[i] = c.static_pg[i].alpha;
    }

    if (which != RenderSelection::kStaticOnly) {
        const auto& set = scene.dynamic_set;
        const size_t n = set.size();
        if (n > 0) {
            c.dyn_enc = encode_batch(set.cloud.center, t, scene.encoding);
            Eigen::MatrixXd d = mlp_forward(set.deform_mlp, c.dyn_enc, &c.deform_cache);

            c.dyn_sh_eff = set.cloud.sh;
            Eigen::VectorXd logit_eff(static_cast<Eigen::Index>(n));
            for (size_t i = 0; i < n; ++i) logit_eff[static_cast<Eigen::Index>(i)] = set.cloud.opacity_logit[i];
            if (opts.apply_dynamic_app && set.use_app_mlp) {
                c.dyn_app_applied = true;
                Eigen::MatrixXd dw = mlp_forward(set.app_mlp, c.dyn_enc, &c.dyn_app_cache);
                const int shd = set.cloud.sh_dim();
                for (size_t i = 0; i < n; ++i) {
                    const auto col = dw.col(static_cast<Eigen::Index>(i));
                    for (int k = 0; k < shd; ++k) c.dyn_sh_eff(static_cast<Eigen::Index>(i), k) += col[k];
                    logit_eff[static_cast<Eigen::Index>(i)] += col[shd];
                }
            }

            std::vector<EffectiveGaussian> gs(n);
            for (size_t i = 0; i < n; ++i) {
                const auto col = d.col(static_cast<Eigen::Index>(i));
                gs[i].mu = set.cloud.center[i] + col.segment<3>(0);
                Eigen::Vector4d q = set.cloud.rotation[i] + col.segment<4>(3);
                if (q.norm() < 1e-8) {
                    log_warn("scene_forward: degenerate deformed quaternion, using canonical");
                    q = set.cloud.rotation[i];
                    gs[i].quat_fallback = true;
                }
                gs[i].quat = q;
                gs[i].log_s = set.cloud.log_scale[i] + col.segment<3>(7);
                gs[i].logit = logit_eff[static_cast<Eigen::Index>(i)];
                gs[i].sh_row = c.dyn_sh_eff.row(static_cast<Eigen::Index>(i)).data();
            }
            emit_set(1, gs, set.cloud.sh_degree, cam, opts, out, &c.dyn_pg);
        }
    }
    return out;
}

void scene_backward(const Scene& scene, const SceneEvalCache& cache,
                    const std::vector<SplatGrads>& splat_grads, SceneGrads& grads) {
    const Camera& cam = cache.cam;

    auto backprop_set = [&](const GaussianCloud& cloud,
                            const std::vector<SceneEvalCache::PerGaussian>& pg,
                            const ShMatrix& sh_eff, CloudGrads& cg, Eigen::MatrixXd* app_dY,
                            Eigen::MatrixXd* deform_dY) {
        const int shd = cloud.sh_dim();
        for (size_t i = 0; i < pg.size(); ++i) {
            const auto& e = pg[i];
            if (e.list_index < 0) continue;
            const SplatGrads& sg = splat_grads[static_cast<size_t>(e.list_index)];
            const Eigen::Index row = static_cast<Eigen::Index>(i);

            // Opacity through the sigmoid.
            const double dlogit = sigmoid_grad_from_value(e.alpha) * sg.alpha;

            // Color through the SH basis and the normalized view direction.
            Eigen::VectorXd dsh_row = Eigen::VectorXd::Zero(shd);
            Eigen::Vector3d ddir = Eigen::Vector3d::Zero();
            evaluate_sh_backward(sh_eff.row(row).data(), cloud.sh_degree, e.dir, sg.rgb,
                                 dsh_row.data(), ddir);
            Eigen::Vector3d dmu = (ddir - e.dir * e.dir.dot(ddir)) / std::max(e.dir_norm, 1e-12);

            // Screen center, 2D covariance and depth through the projection.
            Eigen::Matrix3d dcov3 = Eigen::Matrix3d::Zero();
            project_gaussian_backward(cam, e.proj, sg.screen, sg.cov2, sg.depth, dmu, dcov3);

            // 3D covariance to quaternion and log-scale.
            Eigen::Vector4d dquat = Eigen::Vector4d::Zero();
            Eigen::Vector3d dlog_s = Eigen::Vector3d::Zero();
            assemble_covariance_backward(e.quat_raw, e.log_s.array().exp(), dcov3, dquat, dlog_s);

            if (deform_dY) {
                auto col = deform_dY->col(row);
                col.segment<3>(0) += dmu;
                if (!e.quat_fallback) col.segment<4>(3) += dquat;
                col.segment<3>(7) += dlog_s;
            }
            cg.center[i] += dmu;
            cg.rotation[i] += dquat;
            cg.log_scale[i] += dlog_s;
            cg.opacity_logit[i] += dlogit;
            cg.sh.row(row) += dsh_row.transpose();
            if (app_dY) {
                auto col = app_dY->col(row);
                col.segment(0, shd) += dsh_row;
                col[shd] += dlogit;
            }
        }
    };

    if (cache.which != RenderSelection::kDynamicOnly && !cache.static_pg.empty()) {
        Eigen::MatrixXd app_dY;
        if (cache.static_app_applied)
            app_dY = Eigen::MatrixXd::Zero(scene.static_set.app_mlp.output_dim(),
                                           static_cast<Eigen::Index>(cache.static_pg.size()));
        backprop_set(scene.static_set.cloud, cache.static_pg, cache.static_sh_eff,
                     grads.static_cloud, cache.static_app_applied ? &app_dY : nullptr, nullptr);
        if (cache.static_app_applied) {
            Eigen::MatrixXd dx =
                mlp_backward(scene.static_set.app_mlp, cache.static_app_cache, app_dY, grads.static_app);
            for (size_t i = 0; i < cache.static_pg.size(); ++i)
                encode_input_backward(scene.static_set.cloud.center[i], scene.encoding,
                                      dx.col(static_cast<Eigen::Index>(i)).data(),
                                      grads.static_cloud.center[i]);
        }
    }

    if (cache.which != RenderSelection::kStaticOnly && !cache.dyn_pg.empty()) {
        const auto& set = scene.dynamic_set;
        Eigen::MatrixXd deform_dY = Eigen::MatrixXd::Zero(
            kDeformOut, static_cast<Eigen::Index>(cache.dyn_pg.size()));
        Eigen::MatrixXd app_dY;
        if (cache.dyn_app_applied)
            app_dY = Eigen::MatrixXd::Zero(set.app_mlp.output_dim(),
                                           static_cast<Eigen::Index>(cache.dyn_pg.size()));
        backprop_set(set.cloud, cache.dyn_pg, cache.dyn_sh_eff, grads.dyn_cloud,
                     cache.dyn_app_applied ? &app_dY : nullptr, &deform_dY);

        Eigen::MatrixXd dx = mlp_backward(set.deform_mlp, cache.deform_cache, deform_dY, grads.deform);
        for (size_t i = 0; i < cache.dyn_pg.size(); ++i)
            encode_input_backward(set.cloud.center[i], scene.encoding,
                                  dx.col(static_cast<Eigen::Index>(i)).data(),
                                  grads.dyn_cloud.center[i]);
        if (cache.dyn_app_applied) {
            Eigen::MatrixXd dxa = mlp_backward(set.app_mlp, cache.dyn_app_cache, app_dY, grads.dyn_app);
            for (size_t i = 0; i < cache.dyn_pg.size(); ++i)
                encode_input_backward(set.cloud.center[i], scene.encoding,
                                      dxa.col(static_cast<Eigen::Index>(i)).data(),
                                      grads.dyn_cloud.center[i]);
        }
    }
}

}  // namespace splitgs
