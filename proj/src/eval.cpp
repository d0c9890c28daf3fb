#include "devo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <Eigen/SVD>

#include "devo/error.hpp"

namespace devo::eval {

Trajectory::Trajectory(std::vector<StampedPose> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].t > samples_[i - 1].t)) {
      throw ValidationError("trajectory timestamps must strictly increase");
    }
  }
}

std::vector<IndexPair> associate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  if (est.empty() || gt.empty()) throw EvaluationError("cannot associate an empty trajectory");
  struct Candidate {
    double diff;
    std::size_t i, j;
  };
  std::vector<Candidate> candidates;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].t;
    while (lo < gt.size() && gt[lo].t < t - max_dt) ++lo;
    for (std::size_t j = lo; j < gt.size() && gt[j].t <= t + max_dt; ++j) {
      candidates.push_back({std::abs(gt[j].t - t), i, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.diff, a.i, a.j) < std::tie(b.diff, b.i, b.j);
  });
  std::vector<char> est_used(est.size(), 0), gt_used(gt.size(), 0);
  std::vector<IndexPair> pairs;
  for (const Candidate& c : candidates) {
    if (est_used[c.i] || gt_used[c.j]) continue;
    est_used[c.i] = gt_used[c.j] = 1;
    pairs.push_back({c.i, c.j});
  }
  if (pairs.empty()) throw EvaluationError("no timestamps within max_dt");
  std::sort(pairs.begin(), pairs.end(),
            [](const IndexPair& a, const IndexPair& b) { return a.est < b.est; });
  return pairs;
}

RigidAlignment align_rigid(const std::vector<Eigen::Vector3d>& src,
                           const std::vector<Eigen::Vector3d>& dst) {
  if (src.size() != dst.size()) throw EvaluationError("alignment needs matching point sets");
  if (src.size() < 3) throw EvaluationError("alignment needs at least 3 pairs");
  const double n = static_cast<double>(src.size());
  Eigen::Vector3d mu_s = Eigen::Vector3d::Zero(), mu_d = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) {
    mu_s += src[k];
    mu_d += dst[k];
  }
  mu_s /= n;
  mu_d /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  for (std::size_t k = 0; k < src.size(); ++k) {
    cov += (src[k] - mu_s) * (dst[k] - mu_d).transpose();
    spread += (src[k] - mu_s) * (src[k] - mu_s).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> spread_svd(spread);
  const Eigen::Vector3d sv = spread_svd.singularValues();
  if (!(sv(1) > 1e-12 * std::max(sv(0), 1e-300))) {
    throw EvaluationError("degenerate alignment: positions are collinear");
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if ((V * U.transpose()).determinant() < 0.0) S(2, 2) = -1.0;
  RigidAlignment out;
  out.R = V * S * U.transpose();
  out.t = mu_d - out.R * mu_s;
  return out;
}

AteResult ate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  const std::vector<IndexPair> pairs = associate(est, gt, max_dt);
  std::vector<Eigen::Vector3d> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const IndexPair& p : pairs) {
    src.push_back(est[p.est].pose.t);
    dst.push_back(gt[p.gt].pose.t);
  }
  AteResult out;
  out.alignment = align_rigid(src, dst);
  out.pairs = pairs.size();
  double sq = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    sq += (out.alignment.R * src[k] + out.alignment.t - dst[k]).squaredNorm();
  }
  out.rmse_cm = 100.0 * std::sqrt(sq / static_cast<double>(src.size()));
  return out;
}

RpeResult rpe(const Trajectory& est, const Trajectory& gt, double delta_t, double max_dt) {
  if (!(delta_t > 0.0)) throw EvaluationError("delta_t must be positive");
  if (est.empty() || gt.empty() || !(gt.samples().back().t - gt.samples().front().t > delta_t)) {
    throw EvaluationError("trajectory span shorter than delta_t");
  }
  // Pairs in ground-truth time order; estimate order may cross near the ends.
  std::vector<IndexPair> pairs = associate(est, gt, max_dt);
  std::sort(pairs.begin(), pairs.end(), [](const IndexPair& a, const IndexPair& b) { return a.gt < b.gt; });
  RpeResult out;
  double rot_sq = 0.0, trans_sq = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double target = gt[pairs[i].gt].t + delta_t;
    // Targets increase with i, so the closest partner index never decreases.
    j = std::max(j, i);
    while (j + 1 < pairs.size() &&
           std::abs(gt[pairs[j + 1].gt].t - target) <= std::abs(gt[pairs[j].gt].t - target)) {
      ++j;
    }
    if (j == i || std::abs(gt[pairs[j].gt].t - target) > max_dt) continue;
    const Eigen::Matrix4d G_i = gt[pairs[i].gt].pose.matrix(), G_j = gt[pairs[j].gt].pose.matrix();
    const Eigen::Matrix4d E_i = est[pairs[i].est].pose.matrix(),
                          E_j = est[pairs[j].est].pose.matrix();
    const Eigen::Matrix4d err = (G_i.inverse() * G_j).inverse() * (E_i.inverse() * E_j);
    const double dt = gt[pairs[j].gt].t - gt[pairs[i].gt].t;
    RpeInterval iv;
    iv.t_start = gt[pairs[i].gt].t;
    iv.dt = dt;
    iv.rot_deg_s = rotation_angle(err.topLeftCorner<3, 3>()) * 180.0 / M_PI / dt;
    iv.trans_cm_s = 100.0 * err.topRightCorner<3, 1>().norm() / dt;
    rot_sq += iv.rot_deg_s * iv.rot_deg_s;
    trans_sq += iv.trans_cm_s * iv.trans_cm_s;
    out.intervals.push_back(iv);
  }
  if (out.intervals.empty()) throw EvaluationError("no interval of length delta_t found");
  const double n = static_cast<double>(out.intervals.size());
  out.r_rpe_deg_s = std::sqrt(rot_sq / n);
  out.t_rpe_cm_s = std::sqrt(trans_sq / n);
  return out;
}

}  // namespace devo::eval
