#include "devo/tracking.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <tuple>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "devo/error.hpp"
#include "devo/log.hpp"

namespace devo {

double huber_rho(double r, double k) {
  const double a = std::abs(r);
  return a <= k ? 0.5 * r * r : k * a - 0.5 * k * k;
}

double huber_weight(double r, double k) {
  const double a = std::abs(r);
  return a <= k ? 1.0 : k / a;
}

AlignmentModel::AlignmentModel(const SemiDensePointCloud& cloud) {
  std::vector<const MapPoint*> order;
  order.reserve(cloud.points.size());
  for (const MapPoint& m : cloud.points) order.push_back(&m);
  // Canonical order makes every reduction independent of the input order.
  std::sort(order.begin(), order.end(), [](const MapPoint* a, const MapPoint* b) {
    return std::tie(a->pixel.y, a->pixel.x, a->depth, a->point.x(), a->point.y(), a->point.z()) <
           std::tie(b->pixel.y, b->pixel.x, b->depth, b->point.x(), b->point.y(), b->point.z());
  });
  points_.reserve(order.size());
  for (const MapPoint* m : order) {
    Point pt;
    pt.p = m->point;
    pt.d_increment.leftCols<3>() = -Eigen::Matrix3d::Identity();
    pt.d_increment.rightCols<3>() = skew(m->point);
    points_.push_back(pt);
  }
}

TrackingProblem make_problem(const SemiDensePointCloud& cloud, const ScalarField& field,
                             const PinholeCamera& camera, const PoseSE3& theta_rel_init) {
  if (cloud.points.empty()) throw DegenerateProblemError("empty point cloud");
  if (field.width() != camera.width() || field.height() != camera.height()) {
    throw ParameterError("field size does not match the camera");
  }
  TrackingProblem problem;
  problem.model = std::make_shared<const AlignmentModel>(cloud);
  problem.field = &field;
  problem.camera = camera;
  problem.theta_rel_init = theta_rel_init;
  return problem;
}

namespace {

struct Warp {
  Eigen::Matrix3d Rt;  // rotation of T_rel^-1
  Eigen::Vector3d t;   // translation of T_rel

  explicit Warp(const PoseSE3& theta) : Rt(theta.rotation().transpose()), t(theta.t) {}
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return Rt * (p - t); }
};

// One pass over the model. `visit(index, residual, jacobian_row)` is called per
// in-bounds point; the row is only filled when `with_jacobian` is set.
template <typename Visit>
std::size_t for_each_residual(const TrackingProblem& problem, const PoseSE3& theta,
                              bool with_jacobian, Visit&& visit) {
  const Warp warp(theta);
  const PinholeCamera& cam = problem.camera;
  const auto& pts = problem.model->points();
  std::size_t excluded = 0;
  Eigen::Matrix<double, 1, 6> row = Eigen::Matrix<double, 1, 6>::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Eigen::Vector3d pc = warp.apply(pts[i].p);
    if (!(pc.z() > 0.0)) {
      ++excluded;
      continue;
    }
    const Eigen::Vector2d px = cam.project(pc);
    double value = 0.0;
    Eigen::Vector2d grad;
    if (!problem.field->sample(px, &value, with_jacobian ? &grad : nullptr)) {
      ++excluded;
      continue;
    }
    if (with_jacobian) {
      const Eigen::Matrix<double, 1, 3> g_p = grad.transpose() * cam.projection_jacobian(pc);
      row = (g_p * warp.Rt) * pts[i].d_increment;
    }
    visit(i, value, row);
  }
  return excluded;
}

struct NormalEquations {
  Matrix6d H = Matrix6d::Zero();
  Vector6d g = Vector6d::Zero();
  double cost = 0.0;
  std::size_t used = 0;
  std::size_t inliers = 0;
  double sq_sum = 0.0;
};

NormalEquations build_normal_equations(const TrackingProblem& problem, const PoseSE3& theta,
                                       double k) {
  NormalEquations ne;
  const std::size_t excluded = for_each_residual(
      problem, theta, true,
      [&](std::size_t, double r, const Eigen::Matrix<double, 1, 6>& J) {
        const double w = huber_weight(r, k);
        ne.H.noalias() += w * J.transpose() * J;
        ne.g.noalias() += (w * r) * J.transpose();
        ne.cost += huber_rho(r, k);
        ne.sq_sum += r * r;
        ++ne.used;
        if (std::abs(r) <= k) ++ne.inliers;
      });
  ne.cost += static_cast<double>(excluded) * huber_rho(kTsmScale, k);
  return ne;
}

double condition_number(const Matrix6d& H) {
  const Eigen::SelfAdjointEigenSolver<Matrix6d> es(H, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

ResidualSet residuals(const TrackingProblem& problem, const PoseSE3& theta_rel) {
  ResidualSet out;
  out.excluded = for_each_residual(problem, theta_rel, false,
                                   [&](std::size_t i, double r, const auto&) {
                                     out.values.push_back(r);
                                     out.point_index.push_back(i);
                                   });
  if (out.values.empty()) throw DegenerateProblemError("no point projects into the field");
  return out;
}

Eigen::MatrixXd residual_jacobian(const TrackingProblem& problem, const PoseSE3& theta_rel) {
  std::vector<Eigen::Matrix<double, 1, 6>> rows;
  for_each_residual(problem, theta_rel, true,
                    [&](std::size_t, double, const Eigen::Matrix<double, 1, 6>& J) {
                      rows.push_back(J);
                    });
  Eigen::MatrixXd J(static_cast<Eigen::Index>(rows.size()), 6);
  for (std::size_t i = 0; i < rows.size(); ++i) J.row(static_cast<Eigen::Index>(i)) = rows[i];
  return J;
}

double robust_cost(const TrackingProblem& problem, const PoseSE3& theta_rel, double huber) {
  double cost = 0.0;
  const std::size_t excluded = for_each_residual(
      problem, theta_rel, false,
      [&](std::size_t, double r, const auto&) { cost += huber_rho(r, huber); });
  return cost + static_cast<double>(excluded) * huber_rho(kTsmScale, huber);
}

const char* to_string(TrackingStatus status) {
  switch (status) {
    case TrackingStatus::kConverged: return "converged";
    case TrackingStatus::kMaxIterations: return "max_iterations";
    case TrackingStatus::kTooFewPoints: return "too_few_points";
    case TrackingStatus::kIllConditioned: return "ill_conditioned";
  }
  return "unknown";
}

TrackingResult solve(const TrackingProblem& problem, const SolverConfig& cfg) {
  if (!problem.model || !problem.field) throw ParameterError("incomplete tracking problem");
  TrackingResult result;
  result.theta_rel = problem.theta_rel_init;
  const double k = cfg.huber;
  const std::size_t total = problem.model->size();

  NormalEquations ne = build_normal_equations(problem, result.theta_rel, k);
  result.cost_history.push_back(ne.cost);
  double lambda = cfg.lambda_init;
  double nu = 2.0;
  bool first = true;

  auto finish = [&](TrackingStatus status) {
    result.status = status;
    result.converged = status == TrackingStatus::kConverged;
    result.final_cost = ne.cost;
    result.used_points = ne.used;
    result.inlier_fraction = total ? static_cast<double>(ne.inliers) / total : 0.0;
    result.residual_rms = ne.used ? std::sqrt(ne.sq_sum / ne.used) : 0.0;
    return result;
  };

  while (result.iterations < cfg.max_iters) {
    if (ne.used < cfg.min_points) return finish(TrackingStatus::kTooFewPoints);
    if (condition_number(ne.H) > cfg.max_cond) return finish(TrackingStatus::kIllConditioned);
    ++result.iterations;

    // Damped solves until a step does not increase the cost.
    bool accepted = false;
    double step_norm = 0.0;
    while (!accepted) {
      Matrix6d A = ne.H;
      A.diagonal() += lambda * ne.H.diagonal();
      const Vector6d delta = A.ldlt().solve(-ne.g);
      step_norm = delta.norm();
      if (first) {
        result.first_step_norm = step_norm;
        first = false;
      }
      if (!std::isfinite(step_norm)) return finish(TrackingStatus::kIllConditioned);
      if (step_norm < cfg.eps) return finish(TrackingStatus::kConverged);

      const PoseSE3 candidate = PoseSE3::from_vector(delta) * result.theta_rel;
      const double new_cost = robust_cost(problem, candidate, k);
      const double predicted = -(delta.dot(ne.g) + 0.5 * delta.dot(ne.H * delta));
      const double actual = ne.cost - new_cost;
      if (actual >= 0.0 && predicted > 0.0) {
        const double gain = actual / predicted;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * gain - 1.0, 3));
        nu = 2.0;
        result.theta_rel = candidate;
        ne = build_normal_equations(problem, result.theta_rel, k);
        result.cost_history.push_back(ne.cost);
        accepted = true;
      } else {
        lambda *= nu;
        nu *= 2.0;
        // No descent left at any damping: the current estimate is a local minimum.
        if (lambda > 1e16) return finish(TrackingStatus::kConverged);
      }
    }
  }
  return finish(TrackingStatus::kMaxIterations);
}

// ---------------------------------------------------------------------------

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

TrackOutcome track_stream(EventSource& events, KeyframeSource& keyframes,
                          const PinholeCamera& cam_e, const TrackerConfig& cfg,
                          bool stop_on_loss) {
  if (!(cfg.tau_us > 0.0)) throw ParameterError("tau must be positive");
  if (!(cfg.rate_hz > 0.0)) throw ParameterError("tracking rate must be positive");
  if (events.sensor_size() != cam_e.size()) {
    throw ValidationError("event sensor size does not match the event camera");
  }
  TrackOutcome out;
  const TimeUs period = std::max<TimeUs>(1, std::llround(1e6 / cfg.rate_hz));

  Event ev;
  bool have = events.next(ev);
  if (!have) return out;
  const TimeUs t_first = ev.t;

  TimeSurfaceAccumulator acc(events.sensor_size());
  std::deque<TimeUs> recent;  // timestamps of the newest window_min_events events
  std::shared_ptr<const Keyframe> kf;
  bool lost = false;
  std::optional<PoseSE3> last_pose, prev_pose;
  TimeUs prev_tick = t_first;

  for (TimeUs tick = t_first + period;; tick += period) {
    while (have && ev.t <= tick) {
      acc.add(ev);
      if (cfg.window == WindowPolicy::kSlidingWindow && cfg.window_min_events > 0) {
        recent.push_back(ev.t);
        if (recent.size() > cfg.window_min_events) recent.pop_front();
      }
      have = events.next(ev);
    }
    if (!have && acc.latest() < tick) break;

    TimeUs window_start = kNeverFired;
    if (cfg.window == WindowPolicy::kSlidingWindow) {
      window_start = tick - cfg.window_min_us;
      if (!recent.empty()) window_start = std::min(window_start, recent.front());
    } else {
      window_start = prev_tick + 1;
    }
    prev_tick = tick;

    TickDiagnostics diag;
    diag.t = tick;
    const auto field_start = std::chrono::steady_clock::now();
    auto tsm = std::make_shared<const TimeSurfaceMap>(acc.snapshot(tick, cfg.tau_us, window_start));

    if (!kf) {
      kf = keyframes.bootstrap({tick, PoseSE3::identity(), tsm});
      if (!kf) {
        if (tick - t_first > cfg.bootstrap_timeout_us) break;
        continue;
      }
      out.bootstrapped = true;
      last_pose = kf->cloud.pose_ref;
      prev_pose.reset();
      out.poses.push_back({tick, *last_pose});
      diag.tracked = true;
      diag.keyframe_id = kf->id;
      diag.keyframe_switched = true;
      diag.keyframe_build_ms = kf->build_ms;
      diag.points = kf->model->size();
      out.ticks.push_back(diag);
      continue;
    }

    if (auto newest = keyframes.latest(); newest && newest->id != kf->id) {
      kf = newest;
      diag.keyframe_switched = true;
      diag.keyframe_build_ms = kf->build_ms;
      if (lost) {
        lost = false;
        last_pose = kf->cloud.pose_ref;
        prev_pose.reset();
      }
    }
    diag.keyframe_id = kf->id;
    if (lost) {
      out.ticks.push_back(diag);
      continue;
    }

    const PotentialField field = negate_tsm(*tsm);
    diag.field_ms = elapsed_ms(field_start);

    PoseSE3 predicted = *last_pose;
    if (cfg.constant_velocity && prev_pose) predicted = *last_pose * (prev_pose->inverse() * *last_pose);

    TrackingProblem problem;
    problem.model = kf->model;
    problem.field = &field;
    problem.camera = cam_e;
    problem.theta_rel_init = kf->cloud.pose_ref.inverse() * predicted;

    const auto solve_start = std::chrono::steady_clock::now();
    const TrackingResult res = solve(problem, cfg.solver);
    diag.solve_ms = elapsed_ms(solve_start);
    diag.status = res.status;
    diag.iterations = res.iterations;
    diag.inlier_fraction = res.inlier_fraction;
    diag.cost = res.final_cost;
    diag.points = kf->model->size();

    if (res.lost()) {
      DEVO_LOG_WARN("tracking lost at t={} us ({})", tick, to_string(res.status));
      out.lost.push_back(tick);
      out.ticks.push_back(diag);
      lost = true;
      if (stop_on_loss) break;
      continue;
    }

    const PoseSE3 pose = kf->cloud.pose_ref * res.theta_rel;
    prev_pose = last_pose;
    last_pose = pose;
    out.poses.push_back({tick, pose});
    diag.tracked = true;

    if (should_create_keyframe(pose, kf->cloud.pose_ref, cfg.trans_thresh, cfg.rot_thresh)) {
      keyframes.request({tick, pose, tsm});
      diag.keyframe_requested = true;
    }
    out.ticks.push_back(diag);
  }
  return out;
}

}  // namespace devo
