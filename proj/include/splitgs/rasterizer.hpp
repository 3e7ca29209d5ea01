#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "splitgs/camera.hpp"
#include "splitgs/image.hpp"

namespace splitgs {

/// Identifies the originating primitive of a render-ready splat.
struct SourceRef {
    int32_t set = 0;  // 0 = static, 1 = dynamic
    int32_t index = 0;
};

/// One projected, activated gaussian ready for compositing.
struct RenderReadyGaussian {
    Eigen::Vector2d screen = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2 = Eigen::Matrix2d::Identity();
    double depth = 0;
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    double alpha = 0.5;
    SourceRef source;
};

struct PerGaussianStats {
    bool rendered = false;   // contributed weight >= weight_epsilon somewhere
    double max_weight = 0;   // max per-pixel compositing weight w*T
    int32_t coverage = 0;    // pixels with weight >= weight_epsilon
    SourceRef source;
};

struct RenderOutput {
    ImageF color;        // H x W x 3
    ImageF depth;        // H x W, background pixels carry the far sentinel
    ImageF accum_alpha;  // H x W
    std::vector<PerGaussianStats> per_gaussian;  // parallel to the input list
};

struct RasterOptions {
    enum class Precision { kDouble, kSingle };

    int tile_size = 16;
    double transmittance_min = 1e-4;  // early termination; 0 disables
    double weight_epsilon = 1e-4;     // stats threshold
    double alpha_clamp = 0.99;        // per-pixel weight ceiling
    double extent_sigma = 3.0;        // footprint bound for binning; 0 = exact (no bound)
    double accum_alpha_min = 1e-4;    // below this, depth falls back to far
    bool deterministic = true;
    int num_threads = 0;  // 0 = hardware concurrency
    bool retain_forward = false;
    Precision precision = Precision::kDouble;
};

/// Retained forward data for the backward pass.
struct ForwardState {
    struct Entry {
        int32_t local;  // index into the owning tile's gauss_ids
        double w;       // clamped per-pixel weight
    };
    struct Tile {
        int x0 = 0, y0 = 0, w = 0, h = 0;
        std::vector<int32_t> gauss_ids;   // depth-sorted global indices
        std::vector<int32_t> offsets;     // per-pixel CSR into entries, size w*h+1
        std::vector<Entry> entries;
    };
    int width = 0, height = 0;
    size_t gaussian_count = 0;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    double far = 0;
    RasterOptions options;
    std::vector<Tile> tiles;
    // Per-gaussian conic (inverse 2D covariance) rows (a, b, c); NaN if culled.
    std::vector<std::array<double, 3>> conics;
    bool valid = false;
};

/// Front-to-back over-compositing of one pixel. Splats must be depth-sorted;
/// alpha in (0,1].
Eigen::Vector3d composite_pixel(const std::vector<std::pair<Eigen::Vector3d, double>>& splats,
                                const Eigen::Vector3d& background, double transmittance_min = 1e-4);

/// Tile-binned forward render. Input order does not matter; sorting is
/// internal. Pass `state` (with opts.retain_forward) to enable backward.
RenderOutput render(const std::vector<RenderReadyGaussian>& gaussians, const Camera& cam,
                    const Eigen::Vector3d& background, const RasterOptions& opts = {},
                    ForwardState* state = nullptr);

/// Gradients w.r.t. one splat's screen-space fields. cov2 uses the
/// full-matrix convention (symmetric, off-diagonal split across both slots).
struct SplatGrads {
    Eigen::Vector2d screen = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2 = Eigen::Matrix2d::Zero();
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    double alpha = 0;
    double depth = 0;
};

/// Analytic adjoint of render(). `dL_dcolor` is H x W x 3; `dL_ddepth`
/// (H x W) may be null.
std::vector<SplatGrads> render_backward(const std::vector<RenderReadyGaussian>& gaussians,
                                        const ForwardState& state, const ImageF& dL_dcolor,
                                        const ImageF* dL_ddepth = nullptr);

}  // namespace splitgs
