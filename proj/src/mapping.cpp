#include "devo/mapping.hpp"

#include <algorithm>
#include <cmath>

#include "devo/error.hpp"

namespace devo {

ScatterResult scatter_depth(const DepthFrame& depth, const ExtrinsicCalib& calib,
                            const PinholeCamera& cam_e, DepthValidity validity) {
  ScatterResult out;
  const auto& v = depth.values;
  const PinholeCamera& cam_d = depth.camera;
  if (v.width() != cam_d.width() || v.height() != cam_d.height()) {
    throw ValidationError("depth image size does not match its camera");
  }
  out.samples.reserve(v.size());
  // Same arithmetic as warp_depth_pixel, with the rotation and the per-column
  // normalized coordinates hoisted out of the loop.
  const Eigen::Matrix3d R = calib.T_ed.rotation();
  const Eigen::Vector3d& t = calib.T_ed.t;
  const bool undistort = !cam_d.distortion().is_zero();
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      const double z = v(x, y);
      if (!(z > 0.0) || z < validity.min_depth || z > validity.max_depth) {
        ++out.invalid;
        continue;
      }
      Eigen::Vector2d xn((x - cam_d.cx()) / cam_d.fx(), (y - cam_d.cy()) / cam_d.fy());
      if (undistort) xn = cam_d.undistort(xn);
      const Eigen::Vector3d p_e = R * Eigen::Vector3d(xn.x() * z, xn.y() * z, z) + t;
      if (!(p_e.z() > 0.0)) {
        ++out.behind;
        continue;
      }
      const Eigen::Vector2d pixel = cam_e.project(p_e);
      if (!cam_e.in_image(pixel)) {
        ++out.out_of_bounds;
        continue;
      }
      out.samples.push_back({pixel, p_e.z()});
    }
  }
  return out;
}

namespace {

// Samples binned by nearest integer pixel.
class SampleBuckets {
 public:
  SampleBuckets(int width, int height, std::span<const WarpedSample> samples)
      : width_(width), height_(height), offsets_(static_cast<std::size_t>(width) * height + 1, 0) {
    std::vector<std::size_t> cell(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      cell[i] = index(samples[i].pixel);
      ++offsets_[cell[i] + 1];
    }
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    items_.resize(samples.size());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t i = 0; i < samples.size(); ++i) items_[fill[cell[i]]++] = samples[i];
  }

  template <typename F>
  void for_each_near(int x, int y, int reach, F&& f) const {
    for (int yy = std::max(0, y - reach); yy <= std::min(height_ - 1, y + reach); ++yy) {
      for (int xx = std::max(0, x - reach); xx <= std::min(width_ - 1, x + reach); ++xx) {
        const std::size_t c = static_cast<std::size_t>(yy) * width_ + xx;
        for (std::size_t i = offsets_[c]; i < offsets_[c + 1]; ++i) f(items_[i]);
      }
    }
  }

 private:
  std::size_t index(const Eigen::Vector2d& p) const {
    const int x = std::clamp(static_cast<int>(std::lround(p.x())), 0, width_ - 1);
    const int y = std::clamp(static_cast<int>(std::lround(p.y())), 0, height_ - 1);
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_, height_;
  std::vector<std::size_t> offsets_;
  std::vector<WarpedSample> items_;
};

struct Neighbor {
  double z;
  double dist;
  bool operator<(const Neighbor& o) const { return z < o.z || (z == o.z && dist < o.dist); }
};

}  // namespace

SemiDensePointCloud assign_depths(std::span<const Pixel> region,
                                  std::span<const WarpedSample> samples,
                                  const PinholeCamera& cam_e, double radius, double cluster_gap) {
  if (!(radius > 0.0)) throw ParameterError("radius must be positive");
  if (!(cluster_gap > 0.0)) throw ParameterError("cluster_gap must be positive");
  SemiDensePointCloud cloud;
  if (region.empty() || samples.empty()) return cloud;

  const SampleBuckets buckets(cam_e.width(), cam_e.height(), samples);
  // A sample binned at pixel b lies within 0.5 px of b, so this reach is enough.
  const int reach = static_cast<int>(std::ceil(radius + 0.5));
  const double r2 = radius * radius;
  std::vector<Neighbor> near;
  cloud.points.reserve(region.size());

  for (const Pixel& px : region) {
    near.clear();
    const Eigen::Vector2d center(px.x, px.y);
    buckets.for_each_near(px.x, px.y, reach, [&](const WarpedSample& s) {
      const double d2 = (s.pixel - center).squaredNorm();
      if (d2 <= r2) near.push_back({s.z, std::sqrt(d2)});
    });
    if (near.empty()) continue;
    std::sort(near.begin(), near.end());

    std::size_t end = 1;
    while (end < near.size() && near[end].z - near[end - 1].z <= cluster_gap) ++end;

    double depth = 0.0;
    double exact_sum = 0.0;
    std::size_t exact_count = 0;
    for (std::size_t i = 0; i < end; ++i) {
      if (near[i].dist == 0.0) {
        exact_sum += near[i].z;
        ++exact_count;
      }
    }
    if (exact_count > 0) {
      depth = exact_sum / static_cast<double>(exact_count);
    } else {
      double wsum = 0.0, zsum = 0.0;
      for (std::size_t i = 0; i < end; ++i) {
        const double w = 1.0 / near[i].dist;
        wsum += w;
        zsum += w * near[i].z;
      }
      depth = zsum / wsum;
    }
    // Keep the interpolated depth inside the cluster range despite rounding.
    depth = std::clamp(depth, near.front().z, near[end - 1].z);
    cloud.points.push_back({px, cam_e.backproject(center, depth), depth});
  }
  return cloud;
}

bool should_create_keyframe(const PoseSE3& pose_cur, const PoseSE3& pose_ref,
                            double trans_thresh, double rot_thresh) {
  const PoseSE3 rel = pose_ref.inverse() * pose_cur;
  return rel.t.norm() > trans_thresh || rel.angle() > rot_thresh;
}

void subsample_points(SemiDensePointCloud& cloud, std::size_t max_points) {
  const std::size_t n = cloud.points.size();
  if (max_points == 0 || n <= max_points) return;
  std::vector<MapPoint> kept;
  kept.reserve(max_points);
  for (std::size_t k = 0; k < max_points; ++k) kept.push_back(cloud.points[k * n / max_points]);
  cloud.points = std::move(kept);
}

SemiDensePointCloud build_point_cloud(const TimeSurfaceMap& tsm, const DepthFrame& depth,
                                      const ExtrinsicCalib& calib, const PinholeCamera& cam_e,
                                      const MappingConfig& cfg, const PoseSE3& pose_ref) {
  const std::vector<Pixel> region = threshold_mask(tsm, cfg.delta);
  const ScatterResult scattered = scatter_depth(depth, calib, cam_e, cfg.validity);
  SemiDensePointCloud cloud =
      assign_depths(region, scattered.samples, cam_e, cfg.radius, cfg.cluster_gap);
  subsample_points(cloud, cfg.max_points);
  cloud.t_ref = tsm.t_query();
  cloud.pose_ref = pose_ref;
  return cloud;
}

}  // namespace devo
