// Shared fixtures for unit and acceptance tests.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "devo/event_core.hpp"
#include "devo/geometry.hpp"
#include "devo/mapping.hpp"

namespace devo::testing {

/// Smooth closed-form field with exact gradients; defined on the whole image.
class SmoothField final : public ScalarField {
 public:
  SmoothField(int w, int h) : w_(w), h_(h) {}
  int width() const override { return w_; }
  int height() const override { return h_; }
  bool sample(const Eigen::Vector2d& p, double* value, Eigen::Vector2d* gradient) const override {
    if (!(p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= w_ - 1.0 && p.y() <= h_ - 1.0)) return false;
    const double x = p.x(), y = p.y();
    const double a = x / 17.0, b = y / 13.0, c = (x + y) / 29.0;
    if (value) *value = 120.0 + 60.0 * std::sin(a) * std::cos(b) + 40.0 * std::sin(c);
    if (gradient) {
      gradient->x() = 60.0 / 17.0 * std::cos(a) * std::cos(b) + 40.0 / 29.0 * std::cos(c);
      gradient->y() = -60.0 / 13.0 * std::sin(a) * std::sin(b) + 40.0 / 29.0 * std::cos(c);
    }
    return true;
  }

 private:
  int w_, h_;
};

/// Integer pixels on the outlines of a few axis-aligned rectangles, each with its own depth.
struct EdgePixel {
  Pixel px;
  double depth;
};

inline std::vector<EdgePixel> rectangle_edges(int w, int h) {
  struct Rect {
    int x0, y0, x1, y1;
    double z;
  };
  const std::vector<Rect> rects{{w / 8, h / 8, w / 2, h / 2, 2.0},
                                {w / 2 + 6, h / 6, w - w / 8, h / 2 + 4, 3.0},
                                {w / 5, h / 2 + 8, w / 2 + 20, h - h / 8, 2.5}};
  std::vector<EdgePixel> out;
  for (const Rect& r : rects) {
    for (int x = r.x0; x <= r.x1; ++x) {
      out.push_back({{x, r.y0}, r.z});
      out.push_back({{x, r.y1}, r.z});
    }
    for (int y = r.y0 + 1; y < r.y1; ++y) {
      out.push_back({{r.x0, y}, r.z});
      out.push_back({{r.x1, y}, r.z});
    }
  }
  return out;
}

/// Field 255 * (1 - exp(-d^2 / (2 sigma^2))), d = distance to the nearest edge pixel.
/// Exactly zero on edge pixels.
inline Grid<double> edge_basin(int w, int h, const std::vector<EdgePixel>& edges, double sigma) {
  Grid<double> g(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double best = 1e300;
      for (const EdgePixel& e : edges) {
        const double dx = x - e.px.x, dy = y - e.px.y;
        best = std::min(best, dx * dx + dy * dy);
      }
      g(x, y) = 255.0 * (1.0 - std::exp(-best / (2.0 * sigma * sigma)));
    }
  }
  return g;
}

/// Reference cloud whose points land exactly on the edge pixels when viewed
/// from `T_rel` (current camera in the reference frame).
inline SemiDensePointCloud cloud_seen_from(const PinholeCamera& cam,
                                           const std::vector<EdgePixel>& edges,
                                           const PoseSE3& T_rel) {
  SemiDensePointCloud cloud;
  for (const EdgePixel& e : edges) {
    const Eigen::Vector3d p_cur = cam.backproject(Eigen::Vector2d(e.px.x, e.px.y), e.depth);
    const Eigen::Vector3d p_ref = T_rel * p_cur;
    const Eigen::Vector2d px_ref = cam.project(p_ref);
    cloud.points.push_back({{static_cast<int>(std::lround(px_ref.x())), static_cast<int>(std::lround(px_ref.y()))},
                            p_ref, p_ref.z()});
  }
  return cloud;
}

}  // namespace devo::testing
