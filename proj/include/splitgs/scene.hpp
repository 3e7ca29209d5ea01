#pragma once

#include <optional>
#include <vector>

#include "splitgs/camera.hpp"
#include "splitgs/encoding.hpp"
#include "splitgs/gaussian.hpp"
#include "splitgs/mlp.hpp"
#include "splitgs/rasterizer.hpp"

namespace splitgs {

using ShMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Structure-of-arrays gaussian storage; rows align across all fields.
struct GaussianCloud {
    std::vector<Eigen::Vector3d> center;
    std::vector<Eigen::Vector4d> rotation;   // raw quaternions (w,x,y,z)
    std::vector<Eigen::Vector3d> log_scale;
    std::vector<double> opacity_logit;
    ShMatrix sh;  // N x 3*(degree+1)^2, channel-major rows
    int sh_degree = 1;

    size_t size() const { return center.size(); }
    int sh_dim() const { return 3 * sh_coeff_count(sh_degree); }
    void validate() const;
    void resize(size_t n);
    GaussianPrimitive primitive(size_t i) const;
    void set_primitive(size_t i, const GaussianPrimitive& g);
    void keep(const std::vector<char>& mask);
    void append_row_copy(size_t src);
};

/// Gradient sink shaped like a GaussianCloud.
struct CloudGrads {
    std::vector<Eigen::Vector3d> center;
    std::vector<Eigen::Vector4d> rotation;
    std::vector<Eigen::Vector3d> log_scale;
    std::vector<double> opacity_logit;
    ShMatrix sh;

    static CloudGrads zeros_like(const GaussianCloud& cloud);
    void set_zero();
};

/// Static branch: geometry is time-invariant; appearance varies by an MLP
/// residual on top of the frozen base (sh, opacity) parameters.
struct StaticSet {
    GaussianCloud cloud;
    Mlp app_mlp;

    size_t size() const { return cloud.size(); }
};

/// Dynamic branch: canonical geometry deformed per timestamp by an MLP, with
/// an optional residual appearance MLP.
struct DynamicSet {
    GaussianCloud cloud;
    Mlp deform_mlp;
    Mlp app_mlp;
    bool use_app_mlp = true;

    size_t size() const { return cloud.size(); }
};

struct Scene {
    StaticSet static_set;
    DynamicSet dynamic_set;
    EncodingConfig encoding;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();

    /// Build the MLPs for the given cloud SH layout.
    void init_mlps(int hidden, int depth, uint64_t seed);
};

enum class RenderSelection { kStaticOnly, kDynamicOnly, kBoth };

struct SceneEvalOptions {
    bool apply_static_app = true;
    bool apply_dynamic_app = true;
    double dilation = 0.3;          // screen-space covariance dilation, px^2
    double frustum_margin_sigma = 3.0;
};

/// Effective per-gaussian appearance of the static set at time t:
/// w(t) = w0 + MLP_app([gamma(mu), gamma(t)]).
struct StaticAppearance {
    ShMatrix sh;                   // N x 3C
    Eigen::VectorXd opacity_logit; // N
};
StaticAppearance static_appearance_at(const StaticSet& set, double t, const EncodingConfig& enc,
                                      bool apply_app = true);

/// Deformed dynamic geometry at time t (canonical + predicted offsets).
struct DeformedGeometry {
    std::vector<Eigen::Vector3d> center;
    std::vector<Eigen::Vector4d> rotation;   // raw canonical + delta (pre-normalization)
    std::vector<Eigen::Vector3d> log_scale;
    std::vector<Covariance3> covariance;
};
DeformedGeometry deform_at(const DynamicSet& set, double t, const EncodingConfig& enc);

/// Intermediates of one scene evaluation, retained for the backward pass.
struct SceneEvalCache {
    struct PerGaussian {
        int32_t list_index = -1;  // index into the emitted render list, -1 if culled
        Eigen::Vector3d mu_world;
        Eigen::Vector4d quat_raw;     // quaternion fed to covariance assembly
        bool quat_fallback = false;   // degenerate deformed quaternion, canonical used
        Eigen::Vector3d log_s;
        double logit = 0, alpha = 0;
        Eigen::Vector3d dir;          // unit view direction
        double dir_norm = 0;
        ProjectionCache proj;
    };

    double t = 0;
    Camera cam;
    RenderSelection which = RenderSelection::kBoth;
    SceneEvalOptions opts;

    bool static_app_applied = false;
    Eigen::MatrixXd static_enc;   // in x Ns
    MlpCache static_app_cache;
    ShMatrix static_sh_eff;       // Ns x 3C
    std::vector<PerGaussian> static_pg;
    std::vector<double> static_alpha;  // activated opacity at t for all static gaussians

    bool dyn_app_applied = false;
    Eigen::MatrixXd dyn_enc;      // in x Nd
    MlpCache deform_cache;
    MlpCache dyn_app_cache;
    ShMatrix dyn_sh_eff;
    std::vector<PerGaussian> dyn_pg;
};

/// Resolve the scene at time t into a render-ready list (projection included;
/// frustum-culled gaussians are dropped). Cache may be null.
std::vector<RenderReadyGaussian> scene_forward(const Scene& scene, double t, const Camera& cam,
                                               RenderSelection which, const SceneEvalOptions& opts,
                                               SceneEvalCache* cache);

inline std::vector<RenderReadyGaussian> scene_at(const Scene& scene, double t, const Camera& cam,
                                                 RenderSelection which = RenderSelection::kBoth,
                                                 const SceneEvalOptions& opts = {}) {
    return scene_forward(scene, t, cam, which, opts, nullptr);
}

struct SceneGrads {
    CloudGrads static_cloud;
    MlpGrads static_app;
    CloudGrads dyn_cloud;
    MlpGrads deform;
    MlpGrads dyn_app;

    static SceneGrads zeros_like(const Scene& scene);
    void set_zero();
};

/// Chain splat-space gradients back to every scene parameter.
void scene_backward(const Scene& scene, const SceneEvalCache& cache,
                    const std::vector<SplatGrads>& splat_grads, SceneGrads& grads);

}  // namespace splitgs
