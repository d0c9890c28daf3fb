#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "devo/event_core.hpp"
#include "devo/geometry.hpp"
#include "devo/mapping.hpp"

namespace devo {

/// Huber loss: r^2/2 inside [-k, k], linear outside.
double huber_rho(double r, double k);
/// IRLS weight rho'(r) / r.
double huber_weight(double r, double k);

/// Cloud prepared for alignment: points in canonical order with the constant
/// part of the forward-compositional Jacobian, d(T(inc)^-1 p)/d(inc) at inc = 0,
/// which is [-I, [p]x] and depends on the reference point only.
class AlignmentModel {
 public:
  struct Point {
    Eigen::Vector3d p;
    Eigen::Matrix<double, 3, 6> d_increment;
  };

  explicit AlignmentModel(const SemiDensePointCloud& cloud);

  const std::vector<Point>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<Point> points_;
};

struct TrackingProblem {
  std::shared_ptr<const AlignmentModel> model;
  const ScalarField* field = nullptr;
  PinholeCamera camera;
  PoseSE3 theta_rel_init;  // current camera in the reference frame
};

TrackingProblem make_problem(const SemiDensePointCloud& cloud, const ScalarField& field,
                             const PinholeCamera& camera, const PoseSE3& theta_rel_init = {});

/// Sampled field values at the warped points. `point_index` maps each residual
/// back to its model point; out-of-bounds or behind-camera points are counted
/// in `excluded`.
struct ResidualSet {
  std::vector<double> values;
  std::vector<std::size_t> point_index;
  std::size_t excluded = 0;
};

/// Throws DegenerateProblemError when every point is excluded.
ResidualSet residuals(const TrackingProblem& problem, const PoseSE3& theta_rel);

/// Analytic Jacobian of residuals(problem, T(inc) * theta_rel) with respect to
/// inc = [t; q] at inc = 0. Rows follow residuals(problem, theta_rel).
Eigen::MatrixXd residual_jacobian(const TrackingProblem& problem, const PoseSE3& theta_rel);

struct SolverConfig {
  double huber = 10.0;
  int max_iters = 50;
  double eps = 1e-6;
  std::size_t min_points = 50;
  double max_cond = 1e12;
  double lambda_init = 1e-4;
};

enum class TrackingStatus { kConverged, kMaxIterations, kTooFewPoints, kIllConditioned };

const char* to_string(TrackingStatus status);

struct TrackingResult {
  PoseSE3 theta_rel;
  double final_cost = 0.0;
  int iterations = 0;
  double inlier_fraction = 0.0;
  bool converged = false;
  double residual_rms = 0.0;
  TrackingStatus status = TrackingStatus::kConverged;
  std::size_t used_points = 0;
  double first_step_norm = 0.0;  // norm of the first computed increment
  std::vector<double> cost_history;  // robust cost after each accepted step, starting with the initial cost

  bool lost() const {
    return status == TrackingStatus::kTooFewPoints || status == TrackingStatus::kIllConditioned;
  }
};

/// Robust cost: Huber on in-bounds residuals, plus rho(255) for each excluded
/// point, which is what an unobserved ("never fired") pixel would contribute.
double robust_cost(const TrackingProblem& problem, const PoseSE3& theta_rel, double huber);

/// Levenberg-Marquardt over the forward-compositional increment; each accepted
/// step updates theta_rel <- T(inc) * theta_rel.
TrackingResult solve(const TrackingProblem& problem, const SolverConfig& cfg);

// ---------------------------------------------------------------------------
// Streaming tracker

class EventSource {
 public:
  virtual ~EventSource() = default;
  virtual SensorSize sensor_size() const = 0;
  /// Next event in timestamp order; false at end of stream.
  virtual bool next(Event& out) = 0;
};

class VectorEventSource final : public EventSource {
 public:
  explicit VectorEventSource(const EventStream& stream) : stream_(stream) {}
  SensorSize sensor_size() const override { return stream_.sensor_size(); }
  bool next(Event& out) override {
    if (pos_ >= stream_.size()) return false;
    out = stream_.events()[pos_++];
    return true;
  }

 private:
  const EventStream& stream_;
  std::size_t pos_ = 0;
};

struct Keyframe {
  std::size_t id = 0;
  SemiDensePointCloud cloud;
  std::shared_ptr<const AlignmentModel> model;
  double build_ms = 0.0;
};

struct KeyframeRequest {
  TimeUs t = 0;
  PoseSE3 pose;  // world <- camera at t
  std::shared_ptr<const TimeSurfaceMap> tsm;
};

/// Mapping side as seen by the tracker.
class KeyframeSource {
 public:
  virtual ~KeyframeSource() = default;
  /// Synchronous build used before tracking starts; null when no keyframe can be made.
  virtual std::shared_ptr<const Keyframe> bootstrap(const KeyframeRequest& request) = 0;
  /// Asks for a new keyframe. Must not block on map building in threaded mode.
  virtual void request(const KeyframeRequest& request) = 0;
  /// Most recently published keyframe, or null.
  virtual std::shared_ptr<const Keyframe> latest() = 0;
};

enum class WindowPolicy {
  kSlidingWindow,  // at least `window_min_us` and at least the last `window_min_events` events
  kSinceLastTick,
};

struct TrackerConfig {
  double tau_us = kDefaultTauUs;
  double rate_hz = 100.0;
  WindowPolicy window = WindowPolicy::kSlidingWindow;
  TimeUs window_min_us = 10000;
  std::size_t window_min_events = 30000;
  SolverConfig solver;
  bool constant_velocity = true;
  double trans_thresh = 0.05;
  double rot_thresh = 3.0 * M_PI / 180.0;
  TimeUs bootstrap_timeout_us = 1000000;
};

struct TimedPose {
  TimeUs t = 0;
  PoseSE3 pose;  // world <- camera
};

struct TickDiagnostics {
  TimeUs t = 0;
  bool tracked = false;
  TrackingStatus status = TrackingStatus::kConverged;
  int iterations = 0;
  double inlier_fraction = 0.0;
  double solve_ms = 0.0;
  double field_ms = 0.0;
  double cost = 0.0;
  std::size_t points = 0;
  std::size_t keyframe_id = 0;
  bool keyframe_requested = false;
  bool keyframe_switched = false;
  double keyframe_build_ms = 0.0;  // set on ticks that switched to a new keyframe
};

struct TrackOutcome {
  bool bootstrapped = false;
  std::vector<TimedPose> poses;
  std::vector<TimeUs> lost;  // ticks where tracking was lost
  std::vector<TickDiagnostics> ticks;
};

/// Runs the tracker at a fixed data-time cadence: the first tick is one period
/// after the first event, and ticking stops once the stream ends before a tick.
/// The first successful tick bootstraps the world frame at identity.
/// After a loss no pose is emitted until a new keyframe is published.
/// With `stop_on_loss`, the run ends at the first loss.
TrackOutcome track_stream(EventSource& events, KeyframeSource& keyframes,
                          const PinholeCamera& cam_e, const TrackerConfig& cfg,
                          bool stop_on_loss = false);

}  // namespace devo
