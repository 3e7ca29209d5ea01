#include "splitgs/mlp.hpp"

#include <cmath>
#include <random>

namespace splitgs {

size_t Mlp::parameter_count() const {
    size_t n = 0;
    for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

Mlp Mlp::create(int input, int hidden, int depth, int output, uint64_t seed) {
    if (input <= 0 || hidden <= 0 || depth < 1 || output <= 0)
        throw InvalidParameterError("Mlp::create: non-positive dimensions");
    Mlp net;
    std::mt19937_64 rng(seed);
    auto make_layer = [&](int rows, int cols, bool zero) {
        Eigen::MatrixXd w(rows, cols);
        if (zero) {
            w.setZero();
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) w(i, j) = dist(rng);
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(rows));
    };
    int prev = input;
    for (int d = 0; d < depth; ++d) {
        make_layer(hidden, prev, false);
        prev = hidden;
    }
    make_layer(output, prev, true);
    return net;
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
    MlpGrads g;
    for (size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

void MlpGrads::set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
}

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache) {
    if (net.weights.empty()) throw ContractViolationError("mlp_forward: empty network");
    if (x.rows() != net.input_dim())
        throw ContractViolationError("mlp_forward: input dim mismatch");
    if (cache) {
        cache->input = x;
        cache->pre_act.clear();
    }
    Eigen::MatrixXd h = x;
    const int layers = net.layer_count();
    for (int l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = (net.weights[l] * h).colwise() + net.biases[l];
        if (cache) cache->pre_act.push_back(z);
        if (l + 1 < layers)
            h = z.cwiseMax(0.0);
        else
            h = std::move(z);
    }
    return h;
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x, MlpCache* cache) {
    return mlp_forward(net, Eigen::MatrixXd(x), cache).col(0);
}

Eigen::MatrixXd mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& dL_dy,
                             MlpGrads& grads) {
    const int layers = net.layer_count();
    if (static_cast<int>(cache.pre_act.size()) != layers)
        throw ContractViolationError("mlp_backward: cache does not match network");
    if (dL_dy.rows() != net.output_dim() || dL_dy.cols() != cache.input.cols())
        throw ContractViolationError("mlp_backward: adjoint shape mismatch");
    if (grads.weights.size() != net.weights.size())
        throw ContractViolationError("mlp_backward: gradient sink shape mismatch");

    Eigen::MatrixXd delta = dL_dy;
    for (int l = layers - 1; l >= 0; --l) {
        // Activation of the previous layer (input for l == 0).
        Eigen::MatrixXd prev =
            l == 0 ? cache.input : Eigen::MatrixXd(cache.pre_act[l - 1].cwiseMax(0.0));
        grads.weights[l].noalias() += delta * prev.transpose();
        grads.biases[l] += delta.rowwise().sum();
        if (l == 0) {
            return net.weights[0].transpose() * delta;
        }
        delta = net.weights[l].transpose() * delta;
        // ReLU gate of layer l-1.
        delta.array() *= (cache.pre_act[l - 1].array() > 0.0).cast<double>();
    }
    return {};
}

void adam_step(double* params, const double* grads, size_t n, AdamSlot& slot, double lr,
               const AdamConfig& cfg, const std::string& name) {
    if (slot.m.size() != n) {
        slot.m.assign(n, 0.0);
        slot.v.assign(n, 0.0);
        slot.step = 0;
    }
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i]))
            throw TrainingDivergenceError("adam_step: non-finite gradient in '" + name +
                                          "' at index " + std::to_string(i));
    }
    slot.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(slot.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(slot.step));
    for (size_t i = 0; i < n; ++i) {
        slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * grads[i];
        slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

void AdamOptimizer::step(const std::string& name, double* params, const double* grads, size_t n,
                         double lr) {
    adam_step(params, grads, n, slots_[name], lr, cfg_, name);
}

void AdamOptimizer::prune_rows(const std::string& name, const std::vector<char>& keep,
                               size_t row_width) {
    auto it = slots_.find(name);
    if (it == slots_.end()) return;
    AdamSlot& slot = it->second;
    if (slot.m.size() != keep.size() * row_width)
        throw ContractViolationError("AdamOptimizer::prune_rows: size mismatch for " + name);
    size_t dst = 0;
    for (size_t r = 0; r < keep.size(); ++r) {
        if (!keep[r]) continue;
        for (size_t c = 0; c < row_width; ++c) {
            slot.m[dst * row_width + c] = slot.m[r * row_width + c];
            slot.v[dst * row_width + c] = slot.v[r * row_width + c];
        }
        ++dst;
    }
    slot.m.resize(dst * row_width);
    slot.v.resize(dst * row_width);
}

void AdamOptimizer::append_rows(const std::string& name, size_t rows, size_t row_width) {
    auto it = slots_.find(name);
    if (it == slots_.end()) return;
    it->second.m.resize(it->second.m.size() + rows * row_width, 0.0);
    it->second.v.resize(it->second.v.size() + rows * row_width, 0.0);
}

void AdamOptimizer::reset() { slots_.clear(); }

double lr_at(const LrSchedule& sched, int64_t step) {
    if (!(sched.lr_final > 0) || sched.lr_initial < sched.lr_final)
        throw InvalidParameterError("LrSchedule: need lr_initial >= lr_final > 0");
    if (step < 0) {
        log_warn("lr_at: step below range, clamped to 0");
        step = 0;
    } else if (step > sched.total_steps) {
        log_warn("lr_at: step beyond total_steps, clamped");
        step = sched.total_steps;
    }
    if (sched.total_steps == 0) return sched.lr_final;
    const double frac = static_cast<double>(step) / static_cast<double>(sched.total_steps);
    return sched.lr_initial * std::pow(sched.lr_final / sched.lr_initial, frac);
}

}  // namespace splitgs
