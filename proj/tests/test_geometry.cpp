#include <gtest/gtest.h>

#include <random>

#include "devo/error.hpp"
#include "devo/geometry.hpp"

using namespace devo;
using Eigen::Matrix3d;
using Eigen::Matrix4d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

PinholeCamera vga() { return PinholeCamera(400.0, 400.0, 320.0, 240.0, 640, 480); }

Vector3d random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

PoseSE3 random_pose(std::mt19937_64& rng, double t_scale = 1.0, double r_scale = 1.0) {
  return {random_vec(rng, t_scale), random_vec(rng, r_scale)};
}

// Independent homogeneous matrix from Eigen's angle-axis.
Matrix4d oracle_matrix(const PoseSE3& p) {
  Matrix4d T = Matrix4d::Identity();
  const double a = p.q.norm();
  T.topLeftCorner<3, 3>() =
      a > 0 ? Eigen::AngleAxisd(a, p.q / a).toRotationMatrix() : Matrix3d::Identity();
  T.topRightCorner<3, 1>() = p.t;
  return T;
}

}  // namespace

TEST(PinholeCamera, ValidatesParameters) {
  EXPECT_THROW(PinholeCamera(0.0, 1.0, 1.0, 1.0, 4, 4), ParameterError);
  EXPECT_THROW(PinholeCamera(1.0, -1.0, 1.0, 1.0, 4, 4), ParameterError);
  EXPECT_THROW(PinholeCamera(1.0, 1.0, 4.0, 1.0, 4, 4), ParameterError);
  EXPECT_THROW(PinholeCamera(1.0, 1.0, 1.0, -0.1, 4, 4), ParameterError);
}

TEST(PinholeCamera, ProjectExamples) {
  const PinholeCamera cam = vga();
  EXPECT_TRUE(cam.project({0, 0, 1}).isApprox(Vector2d(320, 240)));
  EXPECT_NEAR(cam.project({1, 0, 2}).x(), 520.0, 1e-12);
  EXPECT_THROW(cam.project({0, 0, -1}), BehindCameraError);
  EXPECT_THROW(cam.project({0, 0, 0}), BehindCameraError);
  EXPECT_FALSE(cam.try_project({0, 0, -1}).has_value());
}

TEST(PinholeCamera, BackprojectExamples) {
  const PinholeCamera cam = vga();
  EXPECT_TRUE(cam.backproject({320, 240}, 2.0).isApprox(Vector3d(0, 0, 2)));
  EXPECT_LT((cam.backproject({520, 240}, 2.0) - Vector3d(1, 0, 2)).norm(), 1e-12);
  EXPECT_THROW(cam.backproject({10, 10}, 0.0), DepthError);
}

TEST(PinholeCamera, RoundTripWithDistortion) {
  const PinholeCamera cam(410.0, 405.0, 318.0, 243.0, 640, 480, {-0.21, 0.05, 0.001, -0.0007});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(0.0, 639.0), uy(0.0, 479.0), uz(0.2, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const Vector2d px(ux(rng), uy(rng));
    const double z = uz(rng);
    const Vector3d p = cam.backproject(px, z);
    EXPECT_DOUBLE_EQ(p.z(), z);
    EXPECT_LT((cam.project(p) - px).norm(), 1e-6);
    const Vector2d xn((px.x() - 318.0) / 410.0, (px.y() - 243.0) / 405.0);
    EXPECT_LT((cam.undistort(cam.distort(xn)) - xn).norm() * 410.0, 1e-6);
  }
}

TEST(PinholeCamera, ProjectionJacobianMatchesFiniteDifferences) {
  const PinholeCamera cam(410.0, 405.0, 318.0, 243.0, 640, 480, {-0.1, 0.02, 0.001, 0.002});
  const Vector3d p(0.3, -0.2, 1.7);
  const Eigen::Matrix<double, 2, 3> J = cam.projection_jacobian(p);
  for (int k = 0; k < 3; ++k) {
    Vector3d d = Vector3d::Zero();
    d(k) = 1e-6;
    const Vector2d fd = (cam.project(p + d) - cam.project(p - d)) / 2e-6;
    EXPECT_LT((J.col(k) - fd).norm(), 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST(Rotation, RodriguezIsOrthonormal) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Matrix3d R = rodriguez_to_matrix(random_vec(rng, 3.0));
    EXPECT_LT((R * R.transpose() - Matrix3d::Identity()).norm(), 1e-12);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
  }
}

TEST(Rotation, MatchesAngleAxisOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const PoseSE3 p{Vector3d::Zero(), random_vec(rng, 1.7)};
    EXPECT_LT((p.rotation() - oracle_matrix(p).topLeftCorner<3, 3>()).norm(), 1e-13);
  }
}

TEST(Rotation, SmallAngleIsSmooth) {
  for (double a : {0.0, 1e-12, 1e-9, 1e-8, 1e-7}) {
    const Vector3d q = a * Vector3d(0.6, -0.8, 0.0);
    const Matrix3d R = rodriguez_to_matrix(q);
    const Matrix3d ref = Matrix3d::Identity() + skew(q) + 0.5 * skew(q) * skew(q);
    EXPECT_LT((R - ref).norm(), 1e-15);
    EXPECT_LT((matrix_to_rodriguez(R) - q).norm(), 1e-15);
  }
}

TEST(Rotation, RoundTripUpToAngleWrap) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ua(0.0, 3.1), uax(-1.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vector3d axis = Vector3d(uax(rng), uax(rng), uax(rng)).normalized();
    const Vector3d q = ua(rng) * axis;
    EXPECT_LT((matrix_to_rodriguez(rodriguez_to_matrix(q)) - q).norm(), 1e-9);
  }
  // Angle beyond pi comes back as the equivalent shorter rotation.
  const Vector3d q = 4.0 * Vector3d::UnitZ();
  EXPECT_LT((matrix_to_rodriguez(rodriguez_to_matrix(q)) - (4.0 - 2.0 * M_PI) * Vector3d::UnitZ()).norm(), 1e-9);
}

TEST(PoseSE3, GroupLaws) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 A = random_pose(rng), B = random_pose(rng), C = random_pose(rng);
    EXPECT_LT(((A * B).inverse().matrix() - (B.inverse() * A.inverse()).matrix()).norm(), 1e-12);
    EXPECT_LT((((A * B) * C).matrix() - (A * (B * C)).matrix()).norm(), 1e-12);
    EXPECT_LT(((A * B).matrix() - oracle_matrix(A) * oracle_matrix(B)).norm(), 1e-12);
    EXPECT_LT(((A * A.inverse()).matrix() - Matrix4d::Identity()).norm(), 1e-12);
  }
}

TEST(PoseSE3, MatrixAndVectorRoundTrip) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const PoseSE3 p = random_pose(rng, 2.0, 1.5);
    const PoseSE3 back = PoseSE3::from_matrix(p.matrix());
    EXPECT_LT((back.t - p.t).norm(), 1e-12);
    EXPECT_LT((back.q - p.q).norm(), 1e-9);
    const PoseSE3 v = PoseSE3::from_vector(p.vector());
    EXPECT_EQ(v.t, p.t);
    EXPECT_EQ(v.q, p.q);
    EXPECT_LT((p.quaternion().toRotationMatrix() - p.rotation()).norm(), 1e-12);
  }
}

TEST(PoseSE3, IsRigid) {
  std::mt19937_64 rng(7);
  Matrix4d T = random_pose(rng).matrix();
  EXPECT_TRUE(is_rigid(T, 1e-6));
  Matrix4d bad = T;
  bad(3, 0) = 1e-3;
  EXPECT_FALSE(is_rigid(bad, 1e-6));
  bad = T;
  bad.topLeftCorner<3, 3>() *= 1.001;
  EXPECT_FALSE(is_rigid(bad, 1e-6));
  bad = T;
  bad.col(0) = -bad.col(0);
  EXPECT_FALSE(is_rigid(bad, 1e-6));
}

TEST(WarpDepthPixel, IdentityCalibration) {
  const PinholeCamera cam = vga();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ux(0.0, 639.0), uy(0.0, 479.0), uz(0.2, 10.0);
  for (int i = 0; i < 200; ++i) {
    const Vector2d x(ux(rng), uy(rng));
    const double z = uz(rng);
    const DepthWarp w = warp_depth_pixel({}, cam, cam, x, z);
    ASSERT_EQ(w.status, WarpStatus::kOk);
    EXPECT_LT((w.pixel - x).norm(), 1e-9);
    EXPECT_NEAR(w.z, z, 1e-9);
  }
}

TEST(WarpDepthPixel, ZTranslationAndBehind) {
  const PinholeCamera cam = vga();
  const DepthWarp w = warp_depth_pixel({PoseSE3{Vector3d(0, 0, 0.5), Vector3d::Zero()}}, cam, cam,
                                       {320, 240}, 2.0);
  EXPECT_EQ(w.status, WarpStatus::kOk);
  EXPECT_NEAR(w.z, 2.5, 1e-12);
  EXPECT_LT((w.pixel - Vector2d(320, 240)).norm(), 1e-12);

  const ExtrinsicCalib flip{PoseSE3{Vector3d::Zero(), Vector3d(M_PI, 0, 0)}};
  EXPECT_EQ(warp_depth_pixel(flip, cam, cam, {320, 240}, 2.0).status, WarpStatus::kBehindCamera);
  const ExtrinsicCalib shift{PoseSE3{Vector3d(5.0, 0, 0), Vector3d::Zero()}};
  EXPECT_EQ(warp_depth_pixel(shift, cam, cam, {320, 240}, 2.0).status, WarpStatus::kOutOfBounds);
}

TEST(WarpDepthPixel, MatchesMatrixOracle) {
  const PinholeCamera cam_d(380.0, 381.0, 322.0, 290.0, 640, 576);
  const PinholeCamera cam_e = vga();
  std::mt19937_64 rng(9);
  const PoseSE3 T_ed{random_vec(rng, 0.05), random_vec(rng, 0.02)};
  const Matrix4d M = oracle_matrix(T_ed);
  std::uniform_real_distribution<double> ux(0.0, 639.0), uy(0.0, 575.0), uz(0.5, 6.0);
  for (int i = 0; i < 300; ++i) {
    const Vector2d x(ux(rng), uy(rng));
    const double z = uz(rng);
    const Eigen::Vector4d P((x.x() - 322.0) / 380.0 * z, (x.y() - 290.0) / 381.0 * z, z, 1.0);
    const Eigen::Vector4d Q = M * P;
    const Vector2d ref(400.0 * Q.x() / Q.z() + 320.0, 400.0 * Q.y() / Q.z() + 240.0);
    const DepthWarp w = warp_depth_pixel({T_ed}, cam_d, cam_e, x, z);
    EXPECT_LT((w.pixel - ref).norm(), 1e-9);
    EXPECT_NEAR(w.z, Q.z(), 1e-12);
  }
}

TEST(WarpMapPoint, IdentityAndRadialZoom) {
  const PinholeCamera cam = vga();
  const Vector3d P(0.4, -0.3, 2.0);
  EXPECT_TRUE(warp_map_point(cam, P, {})->isApprox(cam.project(P)));
  // Moving toward the scene pushes projections away from the principal point.
  const PoseSE3 forward{Vector3d(0, 0, 0.3), Vector3d::Zero()};
  std::mt19937_64 rng(10);
  for (int i = 0; i < 50; ++i) {
    const Vector3d Q = Vector3d(0, 0, 2.5) + random_vec(rng, 0.8);
    const Vector2d c(320, 240);
    const Vector2d before = cam.project(Q) - c, after = *warp_map_point(cam, Q, forward) - c;
    EXPECT_GT(after.norm(), before.norm());
    EXPECT_GT(after.dot(before), 0.0);
  }
  EXPECT_FALSE(warp_map_point(cam, P, {Vector3d(0, 0, 3.0), Vector3d::Zero()}).has_value());
}

TEST(WarpMapPoint, MatchesMatrixOracleAndComposes) {
  const PinholeCamera cam = vga();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const PoseSE3 A = random_pose(rng, 0.1, 0.1), B = random_pose(rng, 0.1, 0.1);
    const Vector3d P = Vector3d(0, 0, 3.0) + random_vec(rng, 1.0);
    const Eigen::Vector4d Q = (oracle_matrix(A).inverse() * P.homogeneous());
    const Vector2d ref(400.0 * Q.x() / Q.z() + 320.0, 400.0 * Q.y() / Q.z() + 240.0);
    EXPECT_LT((*warp_map_point(cam, P, A) - ref).norm(), 1e-10);
    // Warping by A*B equals moving the point into A's frame, then warping by B.
    const Vector3d P_a = A.inverse() * P;
    EXPECT_LT((*warp_map_point(cam, P, A * B) - *warp_map_point(cam, P_a, B)).norm(), 1e-10);
  }
}
