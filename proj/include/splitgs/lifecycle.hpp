#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splitgs/rasterizer.hpp"
#include "splitgs/scene.hpp"

namespace splitgs {

/// Long-term rendering evidence for one static gaussian.
struct VisibilityRecord {
    int64_t rendered_count = 0;    // frames where the gaussian was rendered
    double transparency_sum = 0;   // sum of (1 - alpha(t)) over rendered frames
    int64_t frames_seen = 0;       // T
};

struct VisibilityStats {
    std::vector<VisibilityRecord> records;

    void resize(size_t n) { records.resize(n); }
    void reset() { records.assign(records.size(), {}); }
    size_t size() const { return records.size(); }
};

struct PruneConfig {
    double min_render_frequency = 0.05;   // tau_f
    double max_mean_transparency = 0.98;  // tau_t over rendered frames
    bool enable_frequency_rule = true;
    bool enable_transparency_rule = true;
};

/// Fold one frame's render into the stats. `static_alpha` holds the
/// activated opacity at this frame's time for every static gaussian.
void accumulate_visibility(VisibilityStats& stats, const RenderOutput& render_output,
                           std::span<const double> static_alpha);

struct VisibilityScore {
    double vbar = 0;  // transparency_sum / T
    double freq = 0;  // rendered_count / T
};

/// Integrated visibility score and render frequency per gaussian.
std::vector<VisibilityScore> visibility_score(const VisibilityStats& stats);

struct PruneReport {
    struct Removed {
        size_t index;
        double vbar;
        double freq;
    };
    std::vector<Removed> removed;
    std::vector<char> keep_mask;  // lockstep editing of optimizer state etc.
    size_t survivors = 0;
};

/// Remove gaussians that are rarely rendered or persistently transparent.
/// Throws PruneGuardError (without mutating) if fewer than 1% would survive.
PruneReport prune_static(StaticSet& set, const VisibilityStats& stats, const PruneConfig& cfg);

struct DensifyConfig {
    double grad_threshold = 2e-4;       // mean screen-space gradient norm
    double size_threshold = 0.02;       // world units; split above, clone below
    double split_scale_shrink = 1.6;
    size_t max_gaussians = 200000;
    bool reset_opacity = false;
    double reset_opacity_logit = -2.0;
};

/// Running mean of per-gaussian screen-space gradient norms.
struct DensifyStats {
    std::vector<double> grad_norm_sum;
    std::vector<int64_t> grad_count;

    void resize(size_t n) {
        grad_norm_sum.resize(n, 0.0);
        grad_count.resize(n, 0);
    }
    void reset() {
        std::fill(grad_norm_sum.begin(), grad_norm_sum.end(), 0.0);
        std::fill(grad_count.begin(), grad_count.end(), 0);
    }
};

struct DensifyReport {
    std::vector<size_t> cloned;      // parents that were cloned (child appended)
    std::vector<size_t> split;       // parents replaced by two children
    std::vector<char> keep_mask;     // over the pre-densify rows (split parents removed)
    size_t appended = 0;             // rows appended after keep filtering
    bool skipped_budget = false;
};

/// 3DGS-style densification: clone small high-gradient gaussians in place,
/// split large ones into two shrunken children along the major axis.
DensifyReport densify(GaussianCloud& cloud, const DensifyStats& stats, const DensifyConfig& cfg);

}  // namespace splitgs
