#pragma once

#include <functional>
#include <random>
#include <string>

#include "splitgs/checkpoint.hpp"
#include "splitgs/config.hpp"
#include "splitgs/dataset.hpp"
#include "splitgs/lifecycle.hpp"
#include "splitgs/losses.hpp"
#include "splitgs/scene.hpp"

namespace splitgs {

struct IterationRecord {
    int64_t iter = 0;  // global step
    TrainPhase phase = TrainPhase::kNone;
    double total = 0;
    double loss_static = 0;
    double loss_dynamic = 0;
    double loss_joint = 0;
    double loss_depth = 0;
    size_t n_static = 0;
    size_t n_dynamic = 0;
    double lr = 0;
};

struct PruneEvent {
    int64_t iter = 0;
    size_t removed = 0;
    size_t survivors = 0;
};

struct DensifyEvent {
    int64_t iter = 0;
    int32_t set = 0;  // 0 static, 1 dynamic
    size_t cloned = 0;
    size_t split = 0;
};

struct TrainReport {
    std::vector<IterationRecord> iterations;
    std::vector<PruneEvent> prune_events;
    std::vector<DensifyEvent> densify_events;
    double wallclock_seconds = 0;
};

struct EvalFrameRecord {
    size_t frame = 0;
    double psnr = 0;
    double ssim = 0;
};

struct EvalSummary {
    std::vector<EvalFrameRecord> per_frame;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

/// Seed a scene from the dataset: init_points.txt when present (one gaussian
/// per point, kNN-scaled), otherwise uniform points in the scene bounds.
/// Points that project into the dynamic mask region in enough frames seed
/// the dynamic set.
Scene init_scene(const Dataset& dataset, const TrainConfig& cfg);

/// Drives pretraining, both main stages, and evaluation over one dataset.
class Trainer {
public:
    Trainer(const Dataset& dataset, const TrainConfig& cfg);
    Trainer(const Dataset& dataset, const Checkpoint& ckpt);  // resume

    /// Depth-aware pretraining (skipped with a notice when no depth maps).
    void pretrain_dap();
    /// Region-supervised disentanglement with pruning and densification.
    void train_stage1();
    /// Joint optimization; static geometry and base appearance stay frozen.
    void train_stage2();
    /// Remaining phases per config flags and checkpoint position.
    void run_all();

    EvalSummary evaluate() const;
    /// Render one frame's view at an arbitrary time.
    RenderOutput render_view(double t, const Camera& cam, RenderSelection which) const;

    Checkpoint make_checkpoint() const;

    const Scene& scene() const { return scene_; }
    Scene& scene_mutable() { return scene_; }
    const TrainReport& report() const { return report_; }
    const TrainConfig& config() const { return cfg_; }
    TrainPhase phase() const { return phase_; }

    /// Visibility pass over the whole dataset (used by prune-report).
    VisibilityStats collect_visibility() const;

    /// JSON-line progress sink (defaults to none).
    std::function<void(const std::string&)> log_line;
    /// Called after every checkpoint_interval iterations when set.
    std::function<void(const Checkpoint&)> on_checkpoint;

private:
    struct ParamView {
        std::string name;
        double* data;
        const double* grad;
        size_t count;
        size_t row_width;  // for lockstep slot editing
    };

    void train_loop(TrainPhase target, int64_t iterations);
    double step_dap(const Frame& frame);
    double step_stage1(const Frame& frame);
    double step_stage2(const Frame& frame);
    void apply_gradients(TrainPhase phase);
    std::vector<ParamView> trainable_params(TrainPhase phase);
    void run_lifecycle(int64_t phase_step);
    void ensure_stat_sizes();
    void record(const IterationRecord& rec);
    void emit_log(const IterationRecord& rec);

    const Dataset& dataset_;
    TrainConfig cfg_;
    Scene scene_;
    SceneGrads grads_;
    AdamOptimizer optimizer_;
    std::mt19937_64 rng_;
    TrainPhase phase_ = TrainPhase::kNone;
    int64_t phase_step_ = 0;
    int64_t global_step_ = 0;
    LrSchedule lr_;
    VisibilityStats visibility_;
    DensifyStats densify_static_;
    DensifyStats densify_dynamic_;
    DepthAlignment depth_align_;
    bool depth_align_done_ = false;
    TrainReport report_;
    IterationRecord last_rec_;
};

/// Serialize per-iteration progress as a JSON line.
std::string iteration_json(const IterationRecord& rec);

/// Serialize an evaluation summary (per-frame records + averages).
std::string eval_json(const EvalSummary& summary);

}  // namespace splitgs
