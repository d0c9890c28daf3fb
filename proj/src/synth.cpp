#include "devo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "devo/error.hpp"

namespace devo::synth {

std::optional<double> Rectangle::intersect(const Eigen::Vector3d& o,
                                           const Eigen::Vector3d& d) const {
  const Eigen::Vector3d n = u.cross(v);
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double t = n.dot(origin - o) / denom;
  if (!(t > 0.0)) return std::nullopt;
  const Eigen::Vector3d rel = o + t * d - origin;
  const double s = rel.dot(u) / u.squaredNorm();
  const double r = rel.dot(v) / v.squaredNorm();
  if (s < 0.0 || s > 1.0 || r < 0.0 || r > 1.0) return std::nullopt;
  return t;
}

// ---------------------------------------------------------------------------

PoseSpline::PoseSpline(TimeUs t0, TimeUs knot_spacing_us, Eigen::Matrix3d base_rotation,
                       std::vector<Eigen::Vector3d> positions,
                       std::vector<Eigen::Vector3d> rotation_offsets)
    : t0_(t0), spacing_(knot_spacing_us), base_(base_rotation), pos_(std::move(positions)),
      rot_(std::move(rotation_offsets)) {
  if (spacing_ <= 0) throw ParameterError("knot spacing must be positive");
  if (pos_.size() < 2 || pos_.size() != rot_.size()) {
    throw ParameterError("pose spline needs at least two matching knots");
  }
}

PoseSpline PoseSpline::constant_velocity(const PoseSE3& start, const Eigen::Vector3d& velocity,
                                         const Eigen::Vector3d& angular_velocity, TimeUs t0,
                                         TimeUs t1) {
  const TimeUs spacing = 100000;
  const std::size_t knots = static_cast<std::size_t>((t1 - t0 + spacing - 1) / spacing) + 1;
  std::vector<Eigen::Vector3d> pos, rot;
  for (std::size_t k = 0; k < std::max<std::size_t>(knots, 2); ++k) {
    const double s = static_cast<double>(k) * static_cast<double>(spacing) * 1e-6;
    pos.push_back(start.t + velocity * s);
    rot.push_back(angular_velocity * s);
  }
  return PoseSpline(t0, spacing, start.rotation(), std::move(pos), std::move(rot));
}

TimeUs PoseSpline::end() const {
  return t0_ + spacing_ * static_cast<TimeUs>(pos_.size() - 1);
}

namespace {

template <typename V>
V catmull_rom(const std::vector<V>& knots, std::size_t i, double s) {
  const std::size_t n = knots.size();
  auto at = [&](std::ptrdiff_t k) -> V {
    // Linear extrapolation past the ends keeps straight-line motion exact.
    if (k < 0) return 2.0 * knots[0] - knots[1];
    if (k >= static_cast<std::ptrdiff_t>(n)) return 2.0 * knots[n - 1] - knots[n - 2];
    return knots[static_cast<std::size_t>(k)];
  };
  const auto ii = static_cast<std::ptrdiff_t>(i);
  const V p0 = at(ii), p1 = at(ii + 1);
  const V m0 = 0.5 * (at(ii + 1) - at(ii - 1));
  const V m1 = 0.5 * (at(ii + 2) - at(ii));
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 +
         (s3 - s2) * m1;
}

}  // namespace

PoseSE3 PoseSpline::pose(TimeUs t) const {
  t = std::clamp(t, t0_, end());
  const TimeUs rel = t - t0_;
  std::size_t i = static_cast<std::size_t>(rel / spacing_);
  if (i >= pos_.size() - 1) i = pos_.size() - 2;
  const double s = static_cast<double>(rel - static_cast<TimeUs>(i) * spacing_) /
                   static_cast<double>(spacing_);
  const Eigen::Vector3d p = catmull_rom(pos_, i, s);
  const Eigen::Vector3d r = catmull_rom(rot_, i, s);
  return PoseSE3::from_rt(base_ * rodriguez_to_matrix(r), p);
}

// ---------------------------------------------------------------------------

bool is_visible(const SyntheticScene& scene, const Eigen::Vector3d& camera_center,
                const Eigen::Vector3d& p_world) {
  const Eigen::Vector3d d = p_world - camera_center;
  for (const Rectangle& rect : scene.surfaces) {
    // d is unnormalized, so the point itself sits at ray parameter 1.
    if (auto hit = rect.intersect(camera_center, d); hit && *hit < 1.0 - 1e-6) return false;
  }
  return true;
}

namespace {

struct EdgeSample {
  Eigen::Vector3d p;
  std::int8_t polarity;
};

std::vector<EdgeSample> sample_edges(const SyntheticScene& scene, const PoseSE3& pose0,
                                     double density) {
  std::vector<EdgeSample> out;
  const Eigen::Vector3d center = pose0.t;
  const double f = std::max(scene.cam_e.fx(), scene.cam_e.fy());
  auto count_for = [&](double length, const Eigen::Vector3d& mid) {
    const double dist = std::max((mid - center).norm(), 0.1);
    return std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(length * f / dist * density)));
  };
  std::int8_t polarity = 1;
  for (const LineSegment& l : scene.lines) {
    const std::size_t n = count_for((l.b - l.a).norm(), 0.5 * (l.a + l.b));
    for (std::size_t k = 0; k < n; ++k) {
      const double s = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
      out.push_back({l.a + s * (l.b - l.a), polarity});
    }
    polarity = static_cast<std::int8_t>(-polarity);
  }
  for (const Circle& c : scene.circles) {
    const Eigen::Vector3d n = c.normal.normalized();
    const Eigen::Vector3d e1 = n.unitOrthogonal();
    const Eigen::Vector3d e2 = n.cross(e1);
    const std::size_t count = count_for(2.0 * M_PI * c.radius, c.center);
    for (std::size_t k = 0; k < count; ++k) {
      const double a = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(count);
      out.push_back({c.center + c.radius * (std::cos(a) * e1 + std::sin(a) * e2), polarity});
    }
    polarity = static_cast<std::int8_t>(-polarity);
  }
  return out;
}

}  // namespace

EventStream render_events(const SyntheticScene& scene, TimeUs t0, TimeUs t1,
                          const EventRenderConfig& render, const NoiseConfig& noise) {
  if (t1 <= t0) throw ParameterError("render_events needs t1 > t0");
  if (render.time_step_us <= 0) throw ParameterError("time step must be positive");
  const PinholeCamera& cam = scene.cam_e;
  const SensorSize size = cam.size();
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> jitter(0.0, noise.jitter_sigma > 0 ? noise.jitter_sigma : 1.0);
  std::vector<Event> events;

  const std::vector<EdgeSample> samples =
      sample_edges(scene, scene.trajectory.pose(t0), render.samples_per_px);
  struct Track {
    bool valid = false;
    Eigen::Vector2d last_event;  // projection at the previous event
    Eigen::Vector2d prev;        // projection at the previous time step
  };
  std::vector<Track> tracks(samples.size());

  auto observe = [&](const PoseSE3& pose, const Eigen::Matrix3d& Rt,
                     const Eigen::Vector3d& p) -> std::optional<Eigen::Vector2d> {
    const Eigen::Vector3d pc = Rt * (p - pose.t);
    if (!(pc.z() > 0.0)) return std::nullopt;
    const Eigen::Vector2d px = cam.project(pc);
    if (!cam.in_image(px)) return std::nullopt;
    if (render.occlusion && !is_visible(scene, pose.t, p)) return std::nullopt;
    return px;
  };

  {
    const PoseSE3 pose = scene.trajectory.pose(t0);
    const Eigen::Matrix3d Rt = pose.rotation().transpose();
    const PoseSE3 ahead = scene.trajectory.pose(t0 + render.time_step_us);
    const Eigen::Matrix3d Rt_ahead = ahead.rotation().transpose();
    std::mt19937_64 phase_rng(noise.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto px = observe(pose, Rt, samples[i].p);
      if (!px) continue;
      tracks[i] = {true, *px, *px};
      if (!render.random_phase) continue;
      // Place the previous event up to one pixel behind, against the initial motion.
      const double u = phase(phase_rng);
      const Eigen::Vector3d pc = Rt_ahead * (samples[i].p - ahead.t);
      if (!(pc.z() > 0.0)) continue;
      const Eigen::Vector2d motion = cam.project(pc) - *px;
      if (motion.norm() > 1e-12) tracks[i].last_event = *px - u * motion.normalized();
    }
  }

  for (TimeUs t_prev = t0; t_prev < t1; t_prev += render.time_step_us) {
    const TimeUs t = std::min(t_prev + render.time_step_us, t1);
    const PoseSE3 pose = scene.trajectory.pose(t);
    const Eigen::Matrix3d Rt = pose.rotation().transpose();
    const double dt = static_cast<double>(t - t_prev);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Track& tr = tracks[i];
      const auto px = observe(pose, Rt, samples[i].p);
      if (!px) {
        tr.valid = false;
        continue;
      }
      if (!tr.valid) {
        tr = {true, *px, *px};
        continue;
      }
      // Walk the straight segment prev -> px, firing at each unit-distance crossing.
      double from = 0.0;
      const Eigen::Vector2d seg = *px - tr.prev;
      while ((*px - tr.last_event).norm() >= 1.0) {
        // Smallest alpha >= from with |prev + alpha*seg - last_event| = 1.
        const Eigen::Vector2d w = tr.prev - tr.last_event;
        const double a = seg.squaredNorm();
        const double b = 2.0 * w.dot(seg);
        const double c = w.squaredNorm() - 1.0;
        const double disc = std::max(0.0, b * b - 4 * a * c);
        double alpha = (-b + std::sqrt(disc)) / (2 * a);
        alpha = std::clamp(alpha, from, 1.0);
        from = alpha;
        const Eigen::Vector2d crossing = tr.prev + alpha * seg;
        tr.last_event = crossing;
        Eigen::Vector2d loc = crossing;
        if (noise.jitter_sigma > 0) loc += Eigen::Vector2d(jitter(rng), jitter(rng));
        const long ex = std::lround(loc.x());
        const long ey = std::lround(loc.y());
        if (!size.contains(static_cast<int>(ex), static_cast<int>(ey))) continue;
        const TimeUs te = t_prev + static_cast<TimeUs>(std::llround(alpha * dt));
        events.push_back({te, static_cast<std::uint16_t>(ex), static_cast<std::uint16_t>(ey),
                          samples[i].polarity});
      }
      tr.prev = *px;
    }
  }

  if (noise.bg_rate > 0.0) {
    const double duration_s = static_cast<double>(t1 - t0) * 1e-6;
    std::poisson_distribution<long long> count_dist(noise.bg_rate * size.width * size.height *
                                                    duration_s);
    const long long count = count_dist(rng);
    std::uniform_int_distribution<TimeUs> t_dist(t0, t1);
    std::uniform_int_distribution<int> x_dist(0, size.width - 1), y_dist(0, size.height - 1);
    std::bernoulli_distribution pol(0.5);
    for (long long k = 0; k < count; ++k) {
      const TimeUs te = t_dist(rng);
      const int x = x_dist(rng);
      const int y = y_dist(rng);
      events.push_back({te, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                        static_cast<std::int8_t>(pol(rng) ? 1 : -1)});
    }
  }
  return EventStream::from_unsorted(size, std::move(events));
}

DepthFrame render_depth(const SyntheticScene& scene, TimeUs t, bool quantize_mm) {
  const PinholeCamera& cam = scene.cam_d;
  const PoseSE3 T_wd = scene.trajectory.pose(t) * scene.calib.T_ed;
  const Eigen::Matrix3d R = T_wd.rotation();
  DepthFrame frame{Grid<float>(cam.width(), cam.height(), 0.0f), t, cam};
  for (int y = 0; y < cam.height(); ++y) {
    for (int x = 0; x < cam.width(); ++x) {
      // Ray with unit z in the depth frame, so the hit parameter is the z-depth.
      const Eigen::Vector3d d = R * cam.backproject(Eigen::Vector2d(x, y), 1.0);
      double best = std::numeric_limits<double>::infinity();
      for (const Rectangle& rect : scene.surfaces) {
        if (auto hit = rect.intersect(T_wd.t, d); hit && *hit < best) best = *hit;
      }
      if (!std::isfinite(best)) continue;
      if (quantize_mm) {
        const double mm = std::round(best * 1000.0);
        best = mm <= 65535.0 ? mm / 1000.0 : 0.0;
      }
      frame.values(x, y) = static_cast<float>(best);
    }
  }
  return frame;
}

// ---------------------------------------------------------------------------

namespace {

void add_rectangle_outline(SyntheticScene& scene, const Eigen::Vector3d& o, const Eigen::Vector3d& u,
                           const Eigen::Vector3d& v) {
  scene.lines.push_back({o, o + u});
  scene.lines.push_back({o + u, o + u + v});
  scene.lines.push_back({o + u + v, o + v});
  scene.lines.push_back({o + v, o});
}

}  // namespace

SyntheticScene make_office_scene(std::uint64_t seed) {
  SyntheticScene scene;
  scene.cam_e = PinholeCamera(400.0, 400.0, 320.0, 240.0, 640, 480);
  scene.cam_d = PinholeCamera(380.0, 380.0, 320.0, 288.0, 640, 576);
  // Depth camera 5 cm to the right of the event camera, slightly yawed.
  scene.calib.T_ed = PoseSE3{Eigen::Vector3d(-0.05, 0.002, 0.001), Eigen::Vector3d(0.002, -0.01, 0.001)};

  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX(), ey = Eigen::Vector3d::UnitY(),
                        ez = Eigen::Vector3d::UnitZ();
  // Back wall.
  const double wall_z = 4.0;
  scene.surfaces.push_back({Eigen::Vector3d(-6.0, -4.0, wall_z), 13.0 * ex, 8.0 * ey});
  // Foreground panels.
  const Eigen::Vector3d a_origin(-0.9, -0.7, 2.0), a_u = 1.0 * ex, a_v = 1.1 * ey;
  const Eigen::Vector3d b_origin(0.5, -0.1, 2.7), b_u = 1.2 * ex, b_v = 1.2 * ey;
  scene.surfaces.push_back({a_origin, a_u, a_v});
  scene.surfaces.push_back({b_origin, b_u, b_v});
  add_rectangle_outline(scene, a_origin, a_u, a_v);
  add_rectangle_outline(scene, b_origin, b_u, b_v);
  add_rectangle_outline(scene, a_origin + Eigen::Vector3d(0.15, 0.6, 0.0), 0.35 * ex, 0.3 * ey);
  scene.circles.push_back({a_origin + Eigen::Vector3d(0.7, 0.3, 0.0), -ez, 0.15});
  add_rectangle_outline(scene, b_origin + Eigen::Vector3d(0.2, 0.15, 0.0), 0.45 * ex, 0.25 * ey);
  scene.circles.push_back({b_origin + Eigen::Vector3d(0.8, 0.8, 0.0), -ez, 0.2});

  // Wall texture: jittered grid of rectangles and circles.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double gy = -3.0; gy <= 2.6; gy += 0.9) {
    for (double gx = -4.8; gx <= 5.6; gx += 0.95) {
      const Eigen::Vector3d c(gx + 0.3 * (unit(rng) - 0.5), gy + 0.3 * (unit(rng) - 0.5), wall_z);
      if (unit(rng) < 0.6) {
        const double w = 0.25 + 0.25 * unit(rng);
        const double h = 0.2 + 0.2 * unit(rng);
        add_rectangle_outline(scene, c - Eigen::Vector3d(0.5 * w, 0.5 * h, 0.0), w * ex, h * ey);
      } else {
        scene.circles.push_back({c, -ez, 0.1 + 0.15 * unit(rng)});
      }
    }
  }
  return scene;
}

SyntheticDataset make_constant_velocity_dataset(const ScenarioConfig& cfg) {
  if (!(cfg.duration_s > 0.0)) throw ParameterError("duration must be positive");
  if (!(cfg.depth_rate_hz > 0.0) || !(cfg.gt_rate_hz > 0.0)) {
    throw ParameterError("rates must be positive");
  }
  SyntheticDataset data;
  data.scene = make_office_scene(cfg.scene_seed);
  const TimeUs t0 = 0;
  const TimeUs t1 = static_cast<TimeUs>(std::llround(cfg.duration_s * 1e6));
  data.scene.trajectory = PoseSpline::constant_velocity(PoseSE3::identity(), cfg.velocity,
                                                        cfg.angular_velocity, t0, t1);
  data.events = render_events(data.scene, t0, t1, cfg.render, cfg.noise);
  const double depth_period = 1e6 / cfg.depth_rate_hz;
  for (int k = 0;; ++k) {
    const TimeUs t = t0 + static_cast<TimeUs>(std::llround(k * depth_period));
    if (t > t1) break;
    data.depth_times.push_back(t);
  }
  const double gt_period = 1e6 / cfg.gt_rate_hz;
  for (int k = 0;; ++k) {
    const TimeUs t = t0 + static_cast<TimeUs>(std::llround(k * gt_period));
    if (t > t1) break;
    data.groundtruth.push_back({t, data.scene.trajectory.pose(t)});
  }
  return data;
}

std::vector<TimeUs> decimate_times(const std::vector<TimeUs>& times, double rate_hz) {
  if (!(rate_hz > 0.0)) throw ParameterError("rate must be positive");
  std::vector<TimeUs> out;
  if (times.empty()) return out;
  const double period = 1e6 / rate_hz;
  const TimeUs start = times.front();
  long long next_slot = 0;
  for (TimeUs t : times) {
    const long long slot = static_cast<long long>(std::floor(static_cast<double>(t - start) / period + 1e-9));
    if (slot >= next_slot) {
      out.push_back(t);
      next_slot = slot + 1;
    }
  }
  return out;
}

}  // namespace devo::synth
