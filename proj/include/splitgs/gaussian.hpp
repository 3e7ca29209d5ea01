#pragma once

#include <Eigen/Core>
#include <vector>

#include "splitgs/errors.hpp"

namespace splitgs {

constexpr int kMaxShDegree = 3;

/// Number of SH coefficients per channel for a given degree: (degree+1)^2.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// One anisotropic 3D Gaussian. Scale is stored in log-space and opacity in
/// logit-space so unconstrained gradient steps keep both valid.
struct GaussianPrimitive {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d(1, 0, 0, 0);  // quaternion (w,x,y,z)
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    double opacity_logit = 0.0;
    std::vector<double> sh_coeffs;  // channel-major: [r0..rC-1, g0.., b0..]
    int sh_degree = 1;

    double opacity() const;
    Eigen::Vector3d scale() const { return log_scale.array().exp(); }
};

/// 3x3 symmetric positive semi-definite covariance.
struct Covariance3 {
    Eigen::Matrix3d sym = Eigen::Matrix3d::Identity();
};

double sigmoid(double x);
/// d(sigmoid)/dx expressed through the activated value a = sigmoid(x).
inline double sigmoid_grad_from_value(double a) { return a * (1.0 - a); }

/// Rotation matrix of a quaternion (normalized internally).
Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q);

/// Backpropagate dL/dR to the raw (unnormalized) quaternion.
Eigen::Vector4d quat_to_rotation_backward(const Eigen::Vector4d& q, const Eigen::Matrix3d& dL_dR);

/// Sigma = R diag(s^2) R^T for a normalized quaternion and linear scale.
Covariance3 assemble_covariance(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scale);

/// Gradients of assemble_covariance. `dL_dSigma` uses the full-matrix
/// convention (symmetric, off-diagonals already split). Scale gradient is
/// returned w.r.t. log-scale.
void assemble_covariance_backward(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scale,
                                  const Eigen::Matrix3d& dL_dSigma, Eigen::Vector4d& dL_drotation,
                                  Eigen::Vector3d& dL_dlog_scale);

/// exp(-1/2 offset^T Sigma^-1 offset). Near-singular covariances get a
/// 1e-9*I regularizer; still-singular ones raise DegenerateGaussianError.
double evaluate_density(const Covariance3& cov, const Eigen::Vector3d& offset);

/// Real SH basis values for a unit direction, degrees 0..3, 1..16 terms.
void sh_basis(int degree, const Eigen::Vector3d& dir, double* out);

/// View-dependent color: per channel sum_k basis_k * coeff_k, clamped >= 0.
/// `sh_coeffs` is channel-major ([r..., g..., b...]), 3*(degree+1)^2 values.
Eigen::Vector3d evaluate_sh(const double* sh_coeffs, int degree, const Eigen::Vector3d& view_dir);

/// Gradients of evaluate_sh w.r.t. coefficients and the (unit) direction.
/// The zero-clamp gates gradients on channels where the raw value was < 0.
void evaluate_sh_backward(const double* sh_coeffs, int degree, const Eigen::Vector3d& view_dir,
                          const Eigen::Vector3d& dL_drgb, double* dL_dsh, Eigen::Vector3d& dL_ddir);

}  // namespace splitgs
