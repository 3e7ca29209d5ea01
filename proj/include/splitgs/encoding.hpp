#pragma once

#include <Eigen/Core>

#include "splitgs/errors.hpp"

namespace splitgs {

/// Frequency-band counts for the shared sinusoidal encoding.
struct EncodingConfig {
    int l_spatial = 10;   // bands per spatial coordinate
    int l_temporal = 6;   // bands for t

    int input_dim() const { return 6 * l_spatial + 2 * l_temporal; }
    void validate() const {
        if (l_spatial < 1 || l_temporal < 1)
            throw InvalidParameterError("EncodingConfig: band counts must be >= 1");
    }
};

/// gamma(p): interleaved (sin(2^k pi p), cos(2^k pi p)) for k = 0..L-1.
void encode_scalar(double p, int bands, double* out);

Eigen::VectorXd encode_scalar(double p, int bands);

/// d(gamma)/dp for each of the 2L components.
void encode_scalar_grad(double p, int bands, double* out);

/// [gamma(mu_x), gamma(mu_y), gamma(mu_z), gamma(t)].
Eigen::VectorXd encode_input(const Eigen::Vector3d& mu, double t, const EncodingConfig& cfg);

/// Writes the encoding into a preallocated column (length cfg.input_dim()).
void encode_input_into(const Eigen::Vector3d& mu, double t, const EncodingConfig& cfg, double* out);

/// Accumulate dL/dmu from the adjoint of the encoded vector. Only the
/// spatial block carries gradient; t is not a trainable input.
void encode_input_backward(const Eigen::Vector3d& mu, const EncodingConfig& cfg,
                           const double* dL_dencoded, Eigen::Vector3d& dL_dmu);

}  // namespace splitgs
