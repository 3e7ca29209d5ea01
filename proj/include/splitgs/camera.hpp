#pragma once

#include <Eigen/Core>
#include <optional>

#include "splitgs/gaussian.hpp"

namespace splitgs {

/// Pinhole camera. Rays are +z forward, y down, pixel origin at top-left.
struct Camera {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
    double near = 0.05;
    double far = 100.0;

    Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    /// Camera center in world coordinates.
    Eigen::Vector3d position() const { return -rotation().transpose() * translation(); }

    void validate() const;

    /// Right-handed look-at with +z forward and y down.
    static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up, double fx, double fy, int width, int height,
                          double near = 0.05, double far = 100.0);
};

struct ProjectedPoint {
    Eigen::Vector2d screen;  // pixels
    double depth = 0;        // camera z
};

/// World point to pixel coordinates. Empty when z <= near (caller culls).
std::optional<ProjectedPoint> project_point(const Camera& cam, const Eigen::Vector3d& p_world);

/// 2x3 Jacobian of the pinhole projection at a camera-space point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Eigen::Vector3d& p_cam);

/// Screen-space covariance J W Sigma W^T J^T plus an isotropic anti-alias
/// dilation (default 0.3 px^2).
Eigen::Matrix2d project_covariance(const Camera& cam, const Eigen::Vector3d& p_world,
                                   const Covariance3& cov, double dilation = 0.3);

/// Cached intermediates of one gaussian's projection, consumed by the
/// backward pass.
struct ProjectionCache {
    Eigen::Vector3d p_cam = Eigen::Vector3d::Zero();
    Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
    Eigen::Matrix3d cov_cam = Eigen::Matrix3d::Zero();  // W_rot Sigma W_rot^T
};

struct ProjectedGaussian {
    Eigen::Vector2d screen;
    double depth = 0;
    Eigen::Matrix2d cov2;
    ProjectionCache cache;
};

/// Fused point + covariance projection. Empty when z <= near.
std::optional<ProjectedGaussian> project_gaussian(const Camera& cam, const Eigen::Vector3d& p_world,
                                                  const Covariance3& cov, double dilation);

/// Backward through project_gaussian. `dL_dcov2` uses the full-matrix
/// convention. Outputs accumulate into the provided sinks.
void project_gaussian_backward(const Camera& cam, const ProjectionCache& cache,
                               const Eigen::Vector2d& dL_dscreen, const Eigen::Matrix2d& dL_dcov2,
                               double dL_ddepth, Eigen::Vector3d& dL_dp_world,
                               Eigen::Matrix3d& dL_dcov3);

}  // namespace splitgs
