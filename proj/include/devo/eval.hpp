#pragma once

#include <cstddef>
#include <vector>

#include "devo/geometry.hpp"

namespace devo::eval {

struct StampedPose {
  double t = 0.0;  // seconds
  PoseSE3 pose;    // world <- camera
};

/// Pose samples with strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;
  /// Throws ValidationError unless timestamps strictly increase.
  explicit Trajectory(std::vector<StampedPose> samples);

  const std::vector<StampedPose>& samples() const { return samples_; }
  const StampedPose& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

 private:
  std::vector<StampedPose> samples_;
};

inline constexpr double kDefaultMaxDt = 0.02;
inline constexpr double kDefaultRpeDt = 1.0;

struct IndexPair {
  std::size_t est = 0;
  std::size_t gt = 0;
  bool operator==(const IndexPair&) const = default;
};

/// Greedy nearest-timestamp matching: candidate pairs within `max_dt` are taken
/// in order of increasing |dt|, each sample used at most once. Result is sorted
/// by estimate index. Throws EvaluationError when nothing matches.
std::vector<IndexPair> associate(const Trajectory& est, const Trajectory& gt, double max_dt);

/// dst ~ R * src + t.
struct RigidAlignment {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

/// Closed-form least-squares rigid fit (orthogonal Procrustes, no scale).
/// Throws EvaluationError for fewer than 3 points or collinear `src`.
RigidAlignment align_rigid(const std::vector<Eigen::Vector3d>& src,
                           const std::vector<Eigen::Vector3d>& dst);

struct AteResult {
  double rmse_cm = 0.0;
  RigidAlignment alignment;  // gt <- est
  std::size_t pairs = 0;
};

/// Position RMSE after aligning the estimate onto ground truth, in centimeters.
AteResult ate(const Trajectory& est, const Trajectory& gt, double max_dt = kDefaultMaxDt);

struct RpeInterval {
  double t_start = 0.0;
  double dt = 0.0;
  double rot_deg_s = 0.0;
  double trans_cm_s = 0.0;
};

struct RpeResult {
  double r_rpe_deg_s = 0.0;
  double t_rpe_cm_s = 0.0;
  std::vector<RpeInterval> intervals;
};

/// Relative pose error over intervals of ~`delta_t` seconds. For each associated
/// pair i, the later pair j whose ground-truth time is closest to t_i + delta_t
/// (within `max_dt`, ties to the later one) closes the interval; E = (G_i^-1 G_j)^-1 (E_i^-1 E_j). Rates use the
/// ground-truth interval length and are combined as RMS.
RpeResult rpe(const Trajectory& est, const Trajectory& gt, double delta_t = kDefaultRpeDt,
              double max_dt = kDefaultMaxDt);

}  // namespace devo::eval
