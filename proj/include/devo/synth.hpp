#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "devo/event_core.hpp"
#include "devo/geometry.hpp"
#include "devo/mapping.hpp"
#include "devo/tracking.hpp"

namespace devo::synth {

struct LineSegment {
  Eigen::Vector3d a, b;
};

struct Circle {
  Eigen::Vector3d center;
  Eigen::Vector3d normal;
  double radius = 0.0;
};

/// Finite rectangle {origin + s*u + r*v : s, r in [0, 1]} with u perpendicular to v.
struct Rectangle {
  Eigen::Vector3d origin;
  Eigen::Vector3d u;
  Eigen::Vector3d v;

  /// Ray parameter of the hit, if any, for origin `o` and direction `d`.
  std::optional<double> intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const;
};

/// C1 pose curve: Catmull-Rom splines over positions and over rotation-vector
/// offsets applied to a base rotation, R(t) = R0 * Exp(r(t)).
class PoseSpline {
 public:
  PoseSpline() = default;
  /// Control points sampled every `knot_spacing_us` starting at `t0`.
  PoseSpline(TimeUs t0, TimeUs knot_spacing_us, Eigen::Matrix3d base_rotation,
             std::vector<Eigen::Vector3d> positions, std::vector<Eigen::Vector3d> rotation_offsets);

  /// Linear position and constant angular rate (body frame).
  static PoseSpline constant_velocity(const PoseSE3& start, const Eigen::Vector3d& velocity,
                                      const Eigen::Vector3d& angular_velocity, TimeUs t0,
                                      TimeUs t1);

  /// World <- event camera. Clamped to the covered time span.
  PoseSE3 pose(TimeUs t) const;
  TimeUs begin() const { return t0_; }
  TimeUs end() const;

 private:
  TimeUs t0_ = 0;
  TimeUs spacing_ = 1;
  Eigen::Matrix3d base_ = Eigen::Matrix3d::Identity();
  std::vector<Eigen::Vector3d> pos_;
  std::vector<Eigen::Vector3d> rot_;
};

struct SyntheticScene {
  std::vector<LineSegment> lines;
  std::vector<Circle> circles;
  std::vector<Rectangle> surfaces;
  PoseSpline trajectory;
  PinholeCamera cam_e;
  PinholeCamera cam_d;
  ExtrinsicCalib calib;
};

struct NoiseConfig {
  double bg_rate = 0.0;       // background events per pixel per second
  double jitter_sigma = 0.0;  // Gaussian location noise on edge events (px)
  std::uint64_t seed = 1;
};

struct EventRenderConfig {
  /// Edge samples per projected pixel of edge length. Each sample emits one
  /// event per pixel it travels, so the event rate scales with this density.
  double samples_per_px = 3.2;
  TimeUs time_step_us = 1000;
  bool occlusion = true;
  /// Starts each sample a random fraction of a pixel past its previous event,
  /// so edges fire from t0 on instead of after one full pixel of motion.
  bool random_phase = true;
};

/// Edge-crossing event generator: an edge sample fires whenever its projection
/// has moved one pixel since its previous event. Output is timestamp sorted.
EventStream render_events(const SyntheticScene& scene, TimeUs t0, TimeUs t1,
                          const EventRenderConfig& render, const NoiseConfig& noise);

/// Nearest-surface z-depth in the depth camera; 0 where no surface is hit.
/// With `quantize_mm`, depths are rounded to millimeters as stored on disk.
DepthFrame render_depth(const SyntheticScene& scene, TimeUs t, bool quantize_mm = false);

/// True when no surface blocks the segment from `camera_center` to `p_world`.
bool is_visible(const SyntheticScene& scene, const Eigen::Vector3d& camera_center,
                const Eigen::Vector3d& p_world);

struct ScenarioConfig {
  double duration_s = 5.0;
  double depth_rate_hz = 30.0;
  double gt_rate_hz = 200.0;
  Eigen::Vector3d velocity{0.12, 0.04, 0.06};          // m/s
  Eigen::Vector3d angular_velocity{0.01, 0.05, 0.02};  // rad/s
  NoiseConfig noise{5000.0 / (640.0 * 480.0), 0.3, 7};
  EventRenderConfig render;
  std::uint64_t scene_seed = 42;
};

/// Office-like scene: textured back wall and two foreground panels, seen by a
/// 640x480 event camera and a 640x576 depth camera 5 cm to its side.
SyntheticScene make_office_scene(std::uint64_t seed);

struct SyntheticDataset {
  SyntheticScene scene;
  EventStream events;
  std::vector<TimeUs> depth_times;
  std::vector<TimedPose> groundtruth;  // world <- event camera
};

SyntheticDataset make_constant_velocity_dataset(const ScenarioConfig& cfg);

/// Keeps every depth timestamp that is the first at or after each 1/rate tick.
std::vector<TimeUs> decimate_times(const std::vector<TimeUs>& times, double rate_hz);

}  // namespace devo::synth
