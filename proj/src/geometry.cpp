#include "devo/geometry.hpp"

#include <cmath>

#include "devo/error.hpp"

namespace devo {

PinholeCamera::PinholeCamera(double fx, double fy, double cx, double cy, int width, int height,
                             Distortion distortion)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height), dist_(distortion) {
  if (!(fx > 0.0 && fy > 0.0)) throw ParameterError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ParameterError("image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw ParameterError("principal point outside the image");
  }
}

Eigen::Vector2d PinholeCamera::distort(const Eigen::Vector2d& xn) const {
  if (dist_.is_zero()) return xn;
  const double x = xn.x(), y = xn.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + dist_.k1 * r2 + dist_.k2 * r2 * r2;
  return {x * radial + 2.0 * dist_.p1 * x * y + dist_.p2 * (r2 + 2.0 * x * x),
          y * radial + dist_.p1 * (r2 + 2.0 * y * y) + 2.0 * dist_.p2 * x * y};
}

Eigen::Matrix2d PinholeCamera::distortion_jacobian(const Eigen::Vector2d& xn) const {
  if (dist_.is_zero()) return Eigen::Matrix2d::Identity();
  const double x = xn.x(), y = xn.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + dist_.k1 * r2 + dist_.k2 * r2 * r2;
  const double dradial = dist_.k1 + 2.0 * dist_.k2 * r2;  // d(radial)/d(r2)
  Eigen::Matrix2d J;
  J(0, 0) = radial + 2.0 * x * x * dradial + 2.0 * dist_.p1 * y + 6.0 * dist_.p2 * x;
  J(0, 1) = 2.0 * x * y * dradial + 2.0 * dist_.p1 * x + 2.0 * dist_.p2 * y;
  J(1, 0) = 2.0 * x * y * dradial + 2.0 * dist_.p1 * x + 2.0 * dist_.p2 * y;
  J(1, 1) = radial + 2.0 * y * y * dradial + 6.0 * dist_.p1 * y + 2.0 * dist_.p2 * x;
  return J;
}

Eigen::Vector2d PinholeCamera::undistort(const Eigen::Vector2d& xd) const {
  if (dist_.is_zero()) return xd;
  Eigen::Vector2d xn = xd;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d err = distort(xn) - xd;
    if (err.squaredNorm() < 1e-30) break;
    xn -= distortion_jacobian(xn).inverse() * err;
  }
  return xn;
}

Eigen::Vector2d PinholeCamera::project(const Eigen::Vector3d& p) const {
  if (!(p.z() > 0.0)) throw BehindCameraError("point behind the camera");
  const Eigen::Vector2d xd = distort({p.x() / p.z(), p.y() / p.z()});
  return {fx_ * xd.x() + cx_, fy_ * xd.y() + cy_};
}

std::optional<Eigen::Vector2d> PinholeCamera::try_project(const Eigen::Vector3d& p) const {
  if (!(p.z() > 0.0)) return std::nullopt;
  return project(p);
}

Eigen::Matrix<double, 2, 3> PinholeCamera::projection_jacobian(const Eigen::Vector3d& p) const {
  const double iz = 1.0 / p.z();
  const Eigen::Vector2d xn(p.x() * iz, p.y() * iz);
  Eigen::Matrix<double, 2, 3> dn;
  dn << iz, 0.0, -xn.x() * iz, 0.0, iz, -xn.y() * iz;
  Eigen::Matrix2d K;
  K << fx_, 0.0, 0.0, fy_;
  if (dist_.is_zero()) return K * dn;
  return K * distortion_jacobian(xn) * dn;
}

Eigen::Vector3d PinholeCamera::backproject(const Eigen::Vector2d& pixel, double z) const {
  if (!(z > 0.0)) throw DepthError("depth must be positive");
  const Eigen::Vector2d xn = undistort({(pixel.x() - cx_) / fx_, (pixel.y() - cy_) / fy_});
  return {xn.x() * z, xn.y() * z, z};
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

Eigen::Matrix3d rodriguez_to_matrix(const Eigen::Vector3d& q) {
  const double theta2 = q.squaredNorm();
  const Eigen::Matrix3d K = skew(q);
  if (theta2 < 1e-16) {
    return Eigen::Matrix3d::Identity() + K + 0.5 * K * K;
  }
  const double theta = std::sqrt(theta2);
  return Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * K +
         ((1.0 - std::cos(theta)) / theta2) * K * K;
}

Eigen::Vector3d matrix_to_rodriguez(const Eigen::Matrix3d& R) {
  Eigen::Quaterniond quat(R);
  quat.normalize();
  if (quat.w() < 0.0) quat.coeffs() = -quat.coeffs();
  const Eigen::Vector3d v = quat.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v / quat.w();
  return v * (2.0 * std::atan2(s, quat.w()) / s);
}

double rotation_angle(const Eigen::Matrix3d& R) { return matrix_to_rodriguez(R).norm(); }

PoseSE3 PoseSE3::from_rt(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
  return {t, matrix_to_rodriguez(R)};
}

PoseSE3 PoseSE3::from_matrix(const Eigen::Matrix4d& T) {
  return from_rt(T.topLeftCorner<3, 3>(), T.topRightCorner<3, 1>());
}

PoseSE3 PoseSE3::from_vector(const Vector6d& theta) {
  return {theta.head<3>(), theta.tail<3>()};
}

Eigen::Matrix4d PoseSE3::matrix() const {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = rotation();
  T.topRightCorner<3, 1>() = t;
  return T;
}

Vector6d PoseSE3::vector() const {
  Vector6d v;
  v << t, q;
  return v;
}

Eigen::Quaterniond PoseSE3::quaternion() const {
  const double angle = q.norm();
  if (angle < 1e-12) {
    return Eigen::Quaterniond(1.0, 0.5 * q.x(), 0.5 * q.y(), 0.5 * q.z()).normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, q / angle));
}

PoseSE3 PoseSE3::inverse() const {
  const Eigen::Matrix3d Rt = rotation().transpose();
  return {-(Rt * t), -q};
}

PoseSE3 PoseSE3::operator*(const PoseSE3& other) const {
  const Eigen::Matrix3d R = rotation();
  return from_rt(R * other.rotation(), R * other.t + t);
}

bool is_rigid(const Eigen::Matrix4d& T, double tol) {
  const Eigen::Matrix3d R = T.topLeftCorner<3, 3>();
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(R.determinant() - 1.0) > tol) return false;
  const Eigen::RowVector4d bottom(0.0, 0.0, 0.0, 1.0);
  return (T.row(3) - bottom).cwiseAbs().maxCoeff() <= tol;
}

DepthWarp warp_depth_pixel(const ExtrinsicCalib& calib, const PinholeCamera& cam_d,
                           const PinholeCamera& cam_e, const Eigen::Vector2d& x_d, double z_d) {
  if (!cam_d.in_image(x_d)) throw ParameterError("depth pixel outside the depth image");
  const Eigen::Vector3d p_e = calib.T_ed * cam_d.backproject(x_d, z_d);
  DepthWarp out;
  out.z = p_e.z();
  if (!(p_e.z() > 0.0)) {
    out.status = WarpStatus::kBehindCamera;
    return out;
  }
  out.pixel = cam_e.project(p_e);
  out.status = cam_e.in_image(out.pixel) ? WarpStatus::kOk : WarpStatus::kOutOfBounds;
  return out;
}

std::optional<Eigen::Vector2d> warp_map_point(const PinholeCamera& cam_e,
                                              const Eigen::Vector3d& p_ref, const PoseSE3& T_rel) {
  // T_rel^-1 * p = R^T (p - t)
  const Eigen::Vector3d p_cur = T_rel.rotation().transpose() * (p_ref - T_rel.t);
  return cam_e.try_project(p_cur);
}

}  // namespace devo
