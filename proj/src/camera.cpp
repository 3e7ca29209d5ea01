#include "splitgs/camera.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace splitgs {

void Camera::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw InvalidParameterError("Camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidParameterError("Camera: non-positive image size");
    if (!(near > 0) || !(far > near)) throw InvalidParameterError("Camera: need 0 < near < far");
    Eigen::Matrix3d r = rotation();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw InvalidParameterError("Camera: rotation block not orthonormal");
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fx, double fy, int width, int height,
                       double near, double far) {
    Eigen::Vector3d fwd = (target - eye).normalized();
    Eigen::Vector3d right = fwd.cross(up).normalized();   // y-down frame: right = forward x up
    Eigen::Vector3d down = fwd.cross(right).normalized();
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.far = far;
    Eigen::Matrix3d r;
    r.row(0) = right;
    r.row(1) = down;
    r.row(2) = fwd;
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

std::optional<ProjectedPoint> project_point(const Camera& cam, const Eigen::Vector3d& p_world) {
    if (!p_world.allFinite()) throw InvalidParameterError("project_point: non-finite point");
    Eigen::Vector3d p = cam.rotation() * p_world + cam.translation();
    if (p.z() <= cam.near) return std::nullopt;
    ProjectedPoint out;
    out.screen = {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
    out.depth = p.z();
    return out;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Eigen::Vector3d& p_cam) {
    const double x = p_cam.x(), y = p_cam.y(), z = p_cam.z();
    if (z <= 0) throw InvalidParameterError("projection_jacobian: z must be positive");
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / z, 0, -cam.fx * x / (z * z),
         0, cam.fy / z, -cam.fy * y / (z * z);
    return j;
}

std::optional<ProjectedGaussian> project_gaussian(const Camera& cam, const Eigen::Vector3d& p_world,
                                                  const Covariance3& cov, double dilation) {
    Eigen::Matrix3d w_rot = cam.rotation();
    Eigen::Vector3d p = w_rot * p_world + cam.translation();
    if (p.z() <= cam.near) return std::nullopt;

    ProjectedGaussian out;
    out.cache.p_cam = p;
    out.cache.jacobian = projection_jacobian(cam, p);
    out.cache.cov_cam = w_rot * cov.sym * w_rot.transpose();
    out.screen = {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
    out.depth = p.z();
    Eigen::Matrix2d c2 = out.cache.jacobian * out.cache.cov_cam * out.cache.jacobian.transpose();
    c2 = 0.5 * (c2 + c2.transpose());
    c2.diagonal().array() += dilation;
    out.cov2 = c2;
    return out;
}

Eigen::Matrix2d project_covariance(const Camera& cam, const Eigen::Vector3d& p_world,
                                   const Covariance3& cov, double dilation) {
    auto pg = project_gaussian(cam, p_world, cov, dilation);
    if (!pg) throw InvalidParameterError("project_covariance: point behind near plane");
    return pg->cov2;
}

void project_gaussian_backward(const Camera& cam, const ProjectionCache& cache,
                               const Eigen::Vector2d& dL_dscreen, const Eigen::Matrix2d& dL_dcov2,
                               double dL_ddepth, Eigen::Vector3d& dL_dp_world,
                               Eigen::Matrix3d& dL_dcov3) {
    const Eigen::Matrix3d w_rot = cam.rotation();
    const Eigen::Matrix<double, 2, 3>& j = cache.jacobian;
    const double x = cache.p_cam.x(), y = cache.p_cam.y(), z = cache.p_cam.z();

    Eigen::Matrix2d g2 = 0.5 * (dL_dcov2 + dL_dcov2.transpose());

    // Sigma2 = J M J^T with M = W Sigma W^T.
    Eigen::Matrix3d dM = j.transpose() * g2 * j;
    dL_dcov3 += w_rot.transpose() * dM * w_rot;

    Eigen::Matrix<double, 2, 3> dJ = 2.0 * g2 * j * cache.cov_cam;

    Eigen::Vector3d dp = Eigen::Vector3d::Zero();
    const double z2 = z * z, z3 = z2 * z;
    dp.x() += dJ(0, 2) * (-cam.fx / z2);
    dp.y() += dJ(1, 2) * (-cam.fy / z2);
    dp.z() += dJ(0, 0) * (-cam.fx / z2) + dJ(1, 1) * (-cam.fy / z2) +
              dJ(0, 2) * (2.0 * cam.fx * x / z3) + dJ(1, 2) * (2.0 * cam.fy * y / z3);

    // screen = (fx x/z + cx, fy y/z + cy): the same Jacobian transposed.
    dp += j.transpose() * dL_dscreen;
    dp.z() += dL_ddepth;

    dL_dp_world += w_rot.transpose() * dp;
}

}  // namespace splitgs
