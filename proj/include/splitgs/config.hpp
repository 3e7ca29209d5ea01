#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "splitgs/encoding.hpp"
#include "splitgs/lifecycle.hpp"
#include "splitgs/losses.hpp"
#include "splitgs/mlp.hpp"
#include "splitgs/rasterizer.hpp"

namespace splitgs {

/// Every tunable of the training pipeline.
struct TrainConfig {
    // Phase iteration counts.
    int64_t dap_iterations = 500;
    int64_t s1_iterations = 30000;
    int64_t s2_iterations = 40000;

    // A single Adam optimizer over all trainable parameters with one
    // exponential schedule. total_steps == 0 resolves to the phase total.
    LrSchedule lr{8e-4, 1.6e-6, 0};
    AdamConfig adam;

    LossWeights loss;
    PruneConfig prune;
    EncodingConfig encoding{10, 6};
    DensifyConfig densify;

    int64_t densify_interval = 500;
    int64_t densify_warmup = 500;
    int64_t prune_interval = 1000;
    int64_t prune_warmup = 500;

    uint64_t seed = 0;
    RasterOptions::Precision precision = RasterOptions::Precision::kDouble;
    bool deterministic = true;
    int num_threads = 0;

    int sh_degree = 1;
    int mlp_hidden = 64;
    int mlp_depth = 4;

    // Module toggles (ablation switches).
    bool enable_dap = true;
    bool enable_vdp = true;
    bool enable_static_app = true;   // appearance model (APP)
    bool enable_dynamic_app = true;

    double dilation = 0.3;
    double init_opacity = 0.1;
    // A point seeds the dynamic set when it projects into the dynamic mask
    // region in at least this fraction of the frames that see it.
    double init_dynamic_fraction = 0.5;

    int64_t checkpoint_interval = 0;  // 0 = only final

    /// Paper-scale defaults (30k/40k schedule).
    static TrainConfig paper_scale();
    /// Desk-scale defaults: minutes on a laptop CPU.
    static TrainConfig desk_scale();

    RasterOptions raster_options(bool retain) const;
    int64_t total_iterations() const { return dap_iterations + s1_iterations + s2_iterations; }
    /// lr schedule with total_steps resolved.
    LrSchedule resolved_lr() const;

    std::string to_json_string() const;
    static TrainConfig from_json_string(const std::string& text);
    /// Load a JSON config file; missing keys keep preset/default values.
    static TrainConfig load_file(const std::filesystem::path& path);
};

}  // namespace splitgs
