#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "devo/event_core.hpp"
#include "devo/geometry.hpp"

namespace devo {

/// Dense z-depth image in meters; 0 marks an invalid pixel.
struct DepthFrame {
  Grid<float> values;
  TimeUs timestamp = 0;
  PinholeCamera camera;
};

struct WarpedSample {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();  // sub-pixel location in the event image
  double z = 0.0;                                   // depth in the event camera
};

struct ScatterResult {
  std::vector<WarpedSample> samples;
  std::size_t invalid = 0;        // zero or outside the validity window
  std::size_t behind = 0;         // behind the event camera after the extrinsic transform
  std::size_t out_of_bounds = 0;  // outside the event image
};

struct DepthValidity {
  double min_depth = 0.1;
  double max_depth = 20.0;
};

/// Warps every valid depth pixel into the event camera.
ScatterResult scatter_depth(const DepthFrame& depth, const ExtrinsicCalib& calib,
                            const PinholeCamera& cam_e, DepthValidity validity = {});

struct MapPoint {
  Pixel pixel;                                      // reference event-frame pixel
  Eigen::Vector3d point = Eigen::Vector3d::Zero();  // reference event-camera coordinates
  double depth = 0.0;
};

struct SemiDensePointCloud {
  std::vector<MapPoint> points;
  TimeUs t_ref = 0;
  PoseSE3 pose_ref;  // world <- reference camera
};

/// Assigns a foreground depth to each region pixel.
///
/// Samples within `radius` px of the pixel center are gathered and their depths
/// sorted; clusters are split wherever consecutive depths differ by more than
/// `cluster_gap`. Only the nearest cluster is kept, and the pixel depth is the
/// inverse-distance weighted mean of that cluster (a sample sitting exactly on
/// the center wins outright). The point is then placed on the pixel's own ray.
/// Pixels with no sample in range are dropped. Output follows region order.
SemiDensePointCloud assign_depths(std::span<const Pixel> region,
                                  std::span<const WarpedSample> samples,
                                  const PinholeCamera& cam_e, double radius, double cluster_gap);

/// True iff the baseline between the two poses exceeds either threshold (strictly).
bool should_create_keyframe(const PoseSE3& pose_cur, const PoseSE3& pose_ref,
                            double trans_thresh, double rot_thresh);

struct MappingConfig {
  double delta = kDefaultDelta;
  double radius = 1.5;
  double cluster_gap = 0.3;
  double trans_thresh = 0.05;
  double rot_thresh = 3.0 * M_PI / 180.0;
  TimeUs max_depth_skew_us = 20000;
  DepthValidity validity;
  /// Upper bound on the number of map points; 0 keeps everything.
  std::size_t max_points = 6000;
};

/// Keeps an evenly strided subset of at most `max_points` points, preserving order.
void subsample_points(SemiDensePointCloud& cloud, std::size_t max_points);

/// Threshold + scatter + assign for one reference time.
SemiDensePointCloud build_point_cloud(const TimeSurfaceMap& tsm, const DepthFrame& depth,
                                      const ExtrinsicCalib& calib, const PinholeCamera& cam_e,
                                      const MappingConfig& cfg, const PoseSE3& pose_ref);

}  // namespace devo
