#pragma once

#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "devo/event_core.hpp"

namespace devo {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Radial-tangential coefficients (k1, k2, p1, p2), OpenCV ordering.
struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;

  bool is_zero() const { return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0; }
  bool operator==(const Distortion&) const = default;
};

class PinholeCamera {
 public:
  PinholeCamera() = default;
  /// Throws ParameterError unless fx, fy > 0 and the principal point lies inside the image.
  PinholeCamera(double fx, double fy, double cx, double cy, int width, int height,
                Distortion distortion = {});

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  SensorSize size() const { return {width_, height_}; }
  const Distortion& distortion() const { return dist_; }

  /// Normalized image plane -> distorted normalized coordinates.
  Eigen::Vector2d distort(const Eigen::Vector2d& xn) const;
  /// Inverse of distort(), solved by Gauss-Newton.
  Eigen::Vector2d undistort(const Eigen::Vector2d& xd) const;
  /// 2x2 Jacobian of distort() at `xn`.
  Eigen::Matrix2d distortion_jacobian(const Eigen::Vector2d& xn) const;

  /// Throws BehindCameraError for z <= 0. The result may fall outside the image.
  Eigen::Vector2d project(const Eigen::Vector3d& p) const;
  std::optional<Eigen::Vector2d> try_project(const Eigen::Vector3d& p) const;
  /// d(pixel)/d(p) for a point in front of the camera.
  Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p) const;

  /// Point on the ray through `pixel` with camera-frame z equal to `z`.
  /// Throws DepthError for z <= 0.
  Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double z) const;

  /// Pixel footprint test: [-0.5, width - 0.5) x [-0.5, height - 0.5).
  bool in_image(const Eigen::Vector2d& pixel) const {
    return pixel.x() >= -0.5 && pixel.y() >= -0.5 && pixel.x() < width_ - 0.5 &&
           pixel.y() < height_ - 0.5;
  }

  bool operator==(const PinholeCamera&) const = default;

 private:
  double fx_ = 1.0, fy_ = 1.0, cx_ = 0.0, cy_ = 0.0;
  int width_ = 1, height_ = 1;
  Distortion dist_;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Rodriguez (axis-angle) vector to rotation matrix. Second-order Taylor
/// expansion below 1e-8 rad.
Eigen::Matrix3d rodriguez_to_matrix(const Eigen::Vector3d& q);
/// Rotation matrix to Rodriguez vector with angle in [0, pi].
Eigen::Vector3d matrix_to_rodriguez(const Eigen::Matrix3d& R);
double rotation_angle(const Eigen::Matrix3d& R);

/// Rigid transform as translation + Rodriguez rotation vector.
struct PoseSE3 {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Vector3d q = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 from_rt(const Eigen::Matrix3d& R, const Eigen::Vector3d& t);
  static PoseSE3 from_matrix(const Eigen::Matrix4d& T);
  /// [t; q] stacked, the layout used by the tracker increments.
  static PoseSE3 from_vector(const Vector6d& theta);

  Eigen::Matrix3d rotation() const { return rodriguez_to_matrix(q); }
  Eigen::Matrix4d matrix() const;
  Vector6d vector() const;
  Eigen::Quaterniond quaternion() const;

  PoseSE3 inverse() const;
  PoseSE3 operator*(const PoseSE3& other) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation() * p + t; }

  double angle() const { return q.norm(); }
};

/// Orthonormal rotation block (det +1) and bottom row 0 0 0 1, each to `tol`.
bool is_rigid(const Eigen::Matrix4d& T, double tol);

/// Depth-camera coordinates -> event-camera coordinates.
struct ExtrinsicCalib {
  PoseSE3 T_ed;
};

enum class WarpStatus { kOk, kBehindCamera, kOutOfBounds };

struct DepthWarp {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double z = 0.0;
  WarpStatus status = WarpStatus::kOk;
};

/// Moves a depth pixel into the event camera: location pi_e(T_ed * z * pi_d^-1(x_d))
/// and the z coordinate of the transformed point. A point behind the event
/// camera is reported, not thrown.
DepthWarp warp_depth_pixel(const ExtrinsicCalib& calib, const PinholeCamera& cam_d,
                           const PinholeCamera& cam_e, const Eigen::Vector2d& x_d, double z_d);

/// Projects a reference-frame point into the current frame, where `T_rel` is
/// the current camera expressed in the reference frame. Empty when the point
/// ends up behind the camera.
std::optional<Eigen::Vector2d> warp_map_point(const PinholeCamera& cam_e,
                                              const Eigen::Vector3d& p_ref, const PoseSE3& T_rel);

}  // namespace devo
