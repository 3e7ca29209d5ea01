#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitgs/errors.hpp"

namespace splitgs {

/// Fully-connected ReLU network, identity output. Weights are row-major
/// (out x in); biases are column vectors.
struct Mlp {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
    int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
    int layer_count() const { return static_cast<int>(weights.size()); }
    size_t parameter_count() const;

    /// Hidden layers get uniform fan-in init; the final layer starts at zero
    /// so residual heads begin at identity.
    static Mlp create(int input, int hidden, int depth, int output, uint64_t seed);
};

/// Pre-activations retained by a batched forward pass.
struct MlpCache {
    Eigen::MatrixXd input;                 // in x N
    std::vector<Eigen::MatrixXd> pre_act;  // per layer, out_l x N
};

/// Gradient sink with the same shapes as the network parameters.
struct MlpGrads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static MlpGrads zeros_like(const Mlp& net);
    void set_zero();
};

/// Batched forward: columns are samples.
Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache = nullptr);

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x, MlpCache* cache = nullptr);

/// Reverse-mode gradients. Returns dL/dx; parameter gradients accumulate
/// into `grads`.
Eigen::MatrixXd mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& dL_dy,
                             MlpGrads& grads);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moments for one named parameter array.
struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
    int64_t step = 0;
};

/// Bias-corrected Adam update on a raw array. Throws TrainingDivergenceError
/// on non-finite gradients.
void adam_step(double* params, const double* grads, size_t n, AdamSlot& slot, double lr,
               const AdamConfig& cfg = {}, const std::string& name = {});

/// Single optimizer over named parameter arrays; slots survive freezes and
/// stage changes, and can be edited in lockstep with set mutations.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::string& name, double* params, const double* grads, size_t n, double lr);

    /// Keep only rows where keep[i] is true; row_width doubles per row.
    void prune_rows(const std::string& name, const std::vector<char>& keep, size_t row_width);
    /// Append `rows` zero-initialized rows.
    void append_rows(const std::string& name, size_t rows, size_t row_width);
    void reset();

    const std::map<std::string, AdamSlot>& slots() const { return slots_; }
    std::map<std::string, AdamSlot>& slots() { return slots_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::map<std::string, AdamSlot> slots_;
};

/// Exponential decay from lr_initial to lr_final over total_steps.
struct LrSchedule {
    double lr_initial = 8e-4;
    double lr_final = 1.6e-6;
    int64_t total_steps = 70000;
};

/// lr_initial * (lr_final/lr_initial)^(step/total_steps); out-of-range steps
/// clamp with a warning.
double lr_at(const LrSchedule& sched, int64_t step);

}  // namespace splitgs
