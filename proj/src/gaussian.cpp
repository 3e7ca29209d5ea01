#include "splitgs/gaussian.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace splitgs {

namespace {

// Real SH basis constants (Condon-Shortley phase folded into the signs
// used in sh_basis below).
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double GaussianPrimitive::opacity() const { return sigmoid(opacity_logit); }

Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q) {
    if (!q.allFinite()) throw InvalidParameterError("quat_to_rotation: non-finite quaternion");
    double n = q.norm();
    if (n < 1e-12) throw InvalidParameterError("quat_to_rotation: zero-norm quaternion");
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Vector4d quat_to_rotation_backward(const Eigen::Vector4d& q, const Eigen::Matrix3d& g) {
    double n = q.norm();
    if (n < 1e-12) throw InvalidParameterError("quat_to_rotation_backward: zero-norm quaternion");
    Eigen::Vector4d u = q / n;
    const double w = u[0], x = u[1], y = u[2], z = u[3];

    Eigen::Vector4d du;
    du[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    du[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                 z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    du[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                 w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    du[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));

    // Through the normalization: dq = (I - u u^T)/n * du.
    return (du - u * u.dot(du)) / n;
}

Covariance3 assemble_covariance(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scale) {
    if (!rotation.allFinite() || !scale.allFinite())
        throw InvalidParameterError("assemble_covariance: non-finite inputs");
    if ((scale.array() <= 0.0).any())
        throw InvalidParameterError("assemble_covariance: scale must be positive");
    Eigen::Matrix3d r = quat_to_rotation(rotation);
    Eigen::Matrix3d m = r * scale.array().square().matrix().asDiagonal() * r.transpose();
    Covariance3 cov;
    cov.sym = 0.5 * (m + m.transpose());
    return cov;
}

void assemble_covariance_backward(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scale,
                                  const Eigen::Matrix3d& dL_dSigma, Eigen::Vector4d& dL_drotation,
                                  Eigen::Vector3d& dL_dlog_scale) {
    Eigen::Matrix3d g = 0.5 * (dL_dSigma + dL_dSigma.transpose());
    Eigen::Matrix3d r = quat_to_rotation(rotation);
    Eigen::Vector3d s2 = scale.array().square();

    Eigen::Matrix3d dR = 2.0 * g * r * s2.asDiagonal();
    dL_drotation = quat_to_rotation_backward(rotation, dR);

    Eigen::Matrix3d rtgr = r.transpose() * g * r;
    for (int k = 0; k < 3; ++k) dL_dlog_scale[k] = 2.0 * s2[k] * rtgr(k, k);
}

double evaluate_density(const Covariance3& cov, const Eigen::Vector3d& offset) {
    if (!offset.allFinite()) throw InvalidParameterError("evaluate_density: non-finite offset");
    Eigen::Matrix3d sigma = cov.sym;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(sigma);
    double lmax = eig.eigenvalues().maxCoeff();
    double lmin = eig.eigenvalues().minCoeff();
    if (!(lmax > 0.0)) throw DegenerateGaussianError("evaluate_density: non-positive covariance");
    if (lmin <= lmax / 1e12) {
        sigma += 1e-9 * Eigen::Matrix3d::Identity();
        eig.compute(sigma);
        lmin = eig.eigenvalues().minCoeff();
        if (lmin <= 0.0)
            throw DegenerateGaussianError("evaluate_density: covariance singular after regularization");
    }
    double q = offset.dot(sigma.ldlt().solve(offset));
    return std::exp(-0.5 * std::max(q, 0.0));
}

void sh_basis(int degree, const Eigen::Vector3d& dir, double* b) {
    const double x = dir[0], y = dir[1], z = dir[2];
    b[0] = kC0;
    if (degree < 1) return;
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (2.0 * zz - xx - yy);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    b[9] = kC3[0] * y * (3.0 * xx - yy);
    b[10] = kC3[1] * x * y * z;
    b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    b[14] = kC3[5] * z * (xx - yy);
    b[15] = kC3[6] * x * (xx - yy - 3.0 * zz);
}

namespace {

// d(basis_k)/d(dir) for each active term.
void sh_basis_dir_grad(int degree, const Eigen::Vector3d& dir, Eigen::Vector3d* db) {
    const double x = dir[0], y = dir[1], z = dir[2];
    db[0].setZero();
    if (degree < 1) return;
    db[1] = {0, -kC1, 0};
    db[2] = {0, 0, kC1};
    db[3] = {-kC1, 0, 0};
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    db[4] = {kC2[0] * y, kC2[0] * x, 0};
    db[5] = {0, kC2[1] * z, kC2[1] * y};
    db[6] = {-2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z};
    db[7] = {kC2[3] * z, 0, kC2[3] * x};
    db[8] = {2 * kC2[4] * x, -2 * kC2[4] * y, 0};
    if (degree < 3) return;
    db[9] = {kC3[0] * 6 * x * y, kC3[0] * (3 * xx - 3 * yy), 0};
    db[10] = {kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y};
    db[11] = {kC3[2] * (-2 * x * y), kC3[2] * (4 * zz - xx - 3 * yy), kC3[2] * 8 * y * z};
    db[12] = {kC3[3] * (-6 * x * z), kC3[3] * (-6 * y * z), kC3[3] * (6 * zz - 3 * xx - 3 * yy)};
    db[13] = {kC3[4] * (4 * zz - 3 * xx - yy), kC3[4] * (-2 * x * y), kC3[4] * 8 * x * z};
    db[14] = {kC3[5] * 2 * x * z, kC3[5] * (-2 * y * z), kC3[5] * (xx - yy)};
    db[15] = {kC3[6] * (3 * xx - yy - 3 * zz), kC3[6] * (-2 * x * y), kC3[6] * (-6 * x * z)};
}

}  // namespace

Eigen::Vector3d evaluate_sh(const double* sh_coeffs, int degree, const Eigen::Vector3d& view_dir) {
    const int n = sh_coeff_count(degree);
    double b[16];
    sh_basis(degree, view_dir, b);
    Eigen::Vector3d rgb;
    for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (int k = 0; k < n; ++k) v += b[k] * sh_coeffs[c * n + k];
        rgb[c] = std::max(v, 0.0);
    }
    return rgb;
}

void evaluate_sh_backward(const double* sh_coeffs, int degree, const Eigen::Vector3d& view_dir,
                          const Eigen::Vector3d& dL_drgb, double* dL_dsh, Eigen::Vector3d& dL_ddir) {
    const int n = sh_coeff_count(degree);
    double b[16];
    Eigen::Vector3d db[16];
    sh_basis(degree, view_dir, b);
    sh_basis_dir_grad(degree, view_dir, db);
    dL_ddir.setZero();
    for (int c = 0; c < 3; ++c) {
        double raw = 0.0;
        for (int k = 0; k < n; ++k) raw += b[k] * sh_coeffs[c * n + k];
        const double gate = raw > 0.0 ? 1.0 : 0.0;  // clamp at zero
        const double g = gate * dL_drgb[c];
        for (int k = 0; k < n; ++k) {
            dL_dsh[c * n + k] += g * b[k];
            dL_ddir += g * sh_coeffs[c * n + k] * db[k];
        }
    }
}

}  // namespace splitgs
