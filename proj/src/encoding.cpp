#include "splitgs/encoding.hpp"

#include <cmath>
#include <numbers>

namespace splitgs {

void encode_scalar(double p, int bands, double* out) {
    if (!std::isfinite(p)) throw InvalidParameterError("encode_scalar: non-finite input");
    double arg = std::numbers::pi * p;
    for (int k = 0; k < bands; ++k) {
        out[2 * k] = std::sin(arg);
        out[2 * k + 1] = std::cos(arg);
        arg *= 2.0;
    }
}

Eigen::VectorXd encode_scalar(double p, int bands) {
    Eigen::VectorXd v(2 * bands);
    encode_scalar(p, bands, v.data());
    return v;
}

void encode_scalar_grad(double p, int bands, double* out) {
    double arg = std::numbers::pi * p;
    double factor = std::numbers::pi;
    for (int k = 0; k < bands; ++k) {
        out[2 * k] = factor * std::cos(arg);
        out[2 * k + 1] = -factor * std::sin(arg);
        arg *= 2.0;
        factor *= 2.0;
    }
}

void encode_input_into(const Eigen::Vector3d& mu, double t, const EncodingConfig& cfg, double* out) {
    const int ls = 2 * cfg.l_spatial;
    encode_scalar(mu.x(), cfg.l_spatial, out);
    encode_scalar(mu.y(), cfg.l_spatial, out + ls);
    encode_scalar(mu.z(), cfg.l_spatial, out + 2 * ls);
    encode_scalar(t, cfg.l_temporal, out + 3 * ls);
}

Eigen::VectorXd encode_input(const Eigen::Vector3d& mu, double t, const EncodingConfig& cfg) {
    cfg.validate();
    Eigen::VectorXd v(cfg.input_dim());
    encode_input_into(mu, t, cfg, v.data());
    return v;
}

void encode_input_backward(const Eigen::Vector3d& mu, const EncodingConfig& cfg,
                           const double* dL_dencoded, Eigen::Vector3d& dL_dmu) {
    const int ls = 2 * cfg.l_spatial;
    double grad[2 * 64];
    if (cfg.l_spatial > 64) throw InvalidParameterError("encode_input_backward: too many bands");
    for (int axis = 0; axis < 3; ++axis) {
        encode_scalar_grad(mu[axis], cfg.l_spatial, grad);
        double acc = 0.0;
        const double* g = dL_dencoded + axis * ls;
        for (int i = 0; i < ls; ++i) acc += g[i] * grad[i];
        dL_dmu[axis] += acc;
    }
}

}  // namespace splitgs
