// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "devo/error.hpp"
#include "devo/eval.hpp"
#include "devo/io.hpp"
#include "devo/log.hpp"
#include "devo/pipeline.hpp"
#include "devo/synth.hpp"
#include "eval_oracle.hpp"
#include "support.hpp"

using namespace devo;
namespace fs = std::filesystem;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

eval::Trajectory to_trajectory(const std::vector<TimedPose>& poses) {
  std::vector<eval::StampedPose> s;
  for (const TimedPose& p : poses) s.push_back({p.t * 1e-6, p.pose});
  return eval::Trajectory(std::move(s));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Verdict tsm_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> log_tau(std::log(100.0), std::log(1e6));
  std::uniform_real_distribution<double> ratio(0.0, 40.0);
  const int w = 40, h = 25, batches = 1000;  // 1000 pixels x 1000 tau values
  const TimeUs t_query = 100000000;
  double worst = 0.0;
  std::size_t checked = 0;
  for (int b = 0; b < batches; ++b) {
    const double tau = std::exp(log_tau(rng));
    std::vector<Event> ev;
    std::vector<TimeUs> dts;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const TimeUs dt = static_cast<TimeUs>(std::llround(ratio(rng) * tau));
        dts.push_back(dt);
        ev.push_back({t_query - dt, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), 1});
      }
    }
    const TimeSurfaceMap tsm = build_tsm(EventStream::from_unsorted({w, h}, std::move(ev)), t_query, tau);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const long double ref = 255.0L * std::exp(-static_cast<long double>(dts[y * w + x]) / tau);
        const long double got = tsm.value(x, y);
        worst = std::max(worst, static_cast<double>(std::abs(got - ref) / ref));
        ++checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && checked == 1000000 && secs < 5.0,
          fmt("%zu pairs, max rel err %.2e, %.2f s", checked, worst, secs)};
}

Verdict jacobian_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1002);
  const PinholeCamera cam(400.0, 400.0, 320.0, 240.0, 640, 480);
  const testing::SmoothField field(640, 480);
  std::uniform_real_distribution<double> ux(40.0, 600.0), uy(40.0, 440.0), uz(1.0, 5.0), u(-1.0, 1.0);
  SemiDensePointCloud cloud;
  for (int i = 0; i < 300; ++i) {
    const Vector2d px(ux(rng), uy(rng));
    const Vector3d p = cam.backproject(px, uz(rng));
    cloud.points.push_back({{static_cast<int>(px.x()), static_cast<int>(px.y())}, p, p.z()});
  }
  const TrackingProblem prob = make_problem(cloud, field, cam);
  const double step = 1e-6;
  double worst = 0.0;
  std::size_t entries = 0;
  bool rows_stable = true;
  for (int trial = 0; trial < 100; ++trial) {
    const PoseSE3 theta{0.05 * Vector3d(u(rng), u(rng), u(rng)), 0.05 * Vector3d(u(rng), u(rng), u(rng))};
    const Eigen::MatrixXd J = residual_jacobian(prob, theta);
    const ResidualSet base = residuals(prob, theta);
    for (int k = 0; k < 6; ++k) {
      Vector6d d = Vector6d::Zero();
      d(k) = step;
      const ResidualSet rp = residuals(prob, PoseSE3::from_vector(d) * theta);
      const ResidualSet rm = residuals(prob, PoseSE3::from_vector(-d) * theta);
      if (rp.point_index != base.point_index || rm.point_index != base.point_index) {
        rows_stable = false;
        continue;
      }
      for (Eigen::Index i = 0; i < J.rows(); ++i) {
        if (std::abs(J(i, k)) <= 1e-6) continue;
        const double fd = (rp.values[i] - rm.values[i]) / (2.0 * step);
        worst = std::max(worst, std::abs(J(i, k) - fd) / std::abs(J(i, k)));
        ++entries;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {rows_stable && worst <= 1e-4 && secs < 30.0,
          fmt("100 poses, %zu entries, max rel err %.2e, %.2f s", entries, worst, secs)};
}

// Shared by criteria 3, 4, 7 and 8.
struct ClosedLoop {
  synth::SyntheticDataset data;
  fs::path dir;
  RunReport first, second;
  double synth_s = 0.0, run_s = 0.0;
};

Verdict closed_loop(ClosedLoop& cl) {
  const auto t0 = std::chrono::steady_clock::now();
  synth::ScenarioConfig scenario;
  cl.data = synth::make_constant_velocity_dataset(scenario);
  io::write_synthetic_dataset(cl.dir / "synth_cv", cl.data);
  cl.synth_s = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  cl.first = run(cl.dir / "synth_cv", PipelineConfig{}, cl.dir / "run_a", true);
  cl.run_s = seconds_since(t1);
  const double secs = seconds_since(t0);
  if (cl.first.exit_code != kExitOk) return {false, "run failed: " + cl.first.message};
  const eval::Trajectory gt = io::read_trajectory(cl.dir / "synth_cv" / "groundtruth.txt");
  const eval::Trajectory est = io::read_trajectory(cl.dir / "run_a" / "trajectory.txt");
  const double a = eval::ate(est, gt).rmse_cm;
  const eval::RpeResult r = eval::rpe(est, gt);
  const std::size_t n = cl.data.events.size();
  return {n >= 3000000 && a <= 2.0 && r.r_rpe_deg_s <= 0.5 && r.t_rpe_cm_s <= 1.5 && secs < 180.0,
          fmt("%zu events, %zu poses, t_ate %.3f cm, R_rpe %.3f deg/s, t_rpe %.3f cm/s, "
              "synth %.1f s + run %.1f s",
              n, est.size(), a, r.r_rpe_deg_s, r.t_rpe_cm_s, cl.synth_s, cl.run_s)};
}

Verdict depth_rate(const ClosedLoop& cl) {
  const eval::Trajectory gt = io::read_trajectory(cl.dir / "synth_cv" / "groundtruth.txt");
  const io::Calibration calib{cl.data.scene.cam_e, cl.data.scene.cam_d, cl.data.scene.calib};
  std::vector<double> ates;
  std::string detail;
  bool ok = true;
  for (double rate : {30.0, 5.0, 1.0}) {
    std::vector<DepthFrame> frames;
    for (TimeUs t : synth::decimate_times(cl.data.depth_times, rate)) {
      frames.push_back(synth::render_depth(cl.data.scene, t, true));
    }
    const io::DepthMemorySequence depth(std::move(frames));
    VectorEventSource events(cl.data.events);
    const TrackOutcome out = run_tracking(events, depth, calib, PipelineConfig{}, true);
    const bool tracked = out.bootstrapped && out.lost.empty() && out.poses.size() > 400;
    const double a = tracked ? eval::ate(to_trajectory(out.poses), gt).rmse_cm : NAN;
    ates.push_back(a);
    if (rate < 30.0) ok = ok && tracked;
    detail += fmt("%g Hz: %s%zu poses, t_ate %.3f cm; ", rate, tracked ? "" : "LOST, ", out.poses.size(), a);
  }
  ok = ok && std::isfinite(ates[0]) && ates[2] <= 5.0 * ates[0];
  detail += fmt("1 Hz / 30 Hz = %.2f", ates[2] / ates[0]);
  return {ok, detail};
}

Verdict occlusion() {
  // Slanted foreground panel at 1.5-1.8 m over a wall at 4 m, depth camera 8 cm
  // to the side so the panel casts a depth shadow onto the wall.
  synth::SyntheticScene scene;
  scene.cam_e = PinholeCamera(400.0, 400.0, 320.0, 240.0, 640, 480);
  scene.cam_d = PinholeCamera(380.0, 380.0, 320.0, 288.0, 640, 576);
  scene.calib.T_ed = PoseSE3{Vector3d(-0.08, 0.0, 0.0), Vector3d::Zero()};
  scene.trajectory = synth::PoseSpline::constant_velocity(PoseSE3::identity(), Vector3d::Zero(),
                                                          Vector3d::Zero(), 0, 1000000);
  scene.surfaces.push_back({Vector3d(-6.0, -5.0, 4.0), Vector3d(12.0, 0, 0), Vector3d(0, 10.0, 0)});
  const synth::Rectangle panel{Vector3d(-0.4, -0.3, 1.5), Vector3d(0.6, 0, 0.3), Vector3d(0, 0.6, 0)};
  scene.surfaces.push_back(panel);
  const double wall_z = 4.0;
  const DepthFrame depth = synth::render_depth(scene, 0);

  // Events on a 7 px band around the panel silhouette and on a few wall lines.
  const PinholeCamera& cam = scene.cam_e;
  auto surface_z = [&](int x, int y, bool* on_panel) {
    const Vector3d d = cam.backproject(Vector2d(x, y), 1.0);
    const std::optional<double> s = panel.intersect(Vector3d::Zero(), d);
    *on_panel = s.has_value();
    return s ? (*s * d).z() : wall_z;
  };
  Grid<TimeUs> last(640, 480, kNeverFired);
  const TimeUs t_ref = 0;
  for (int y = 0; y < 480; ++y) {
    for (int x = 0; x < 640; ++x) {
      bool here = false;
      surface_z(x, y, &here);
      bool boundary = false;
      for (int dy = -3; dy <= 3 && !boundary; ++dy) {
        for (int dx = -3; dx <= 3 && !boundary; ++dx) {
          if (x + dx < 0 || y + dy < 0 || x + dx >= 640 || y + dy >= 480) continue;
          bool there = false;
          surface_z(x + dx, y + dy, &there);
          boundary = there != here;
        }
      }
      if (boundary || x % 80 == 0 || y % 60 == 0) last(x, y) = t_ref;
    }
  }
  const TimeSurfaceMap tsm(last, t_ref, kDefaultTauUs);
  MappingConfig cfg;
  cfg.max_points = 0;
  const SemiDensePointCloud cloud =
      build_point_cloud(tsm, depth, scene.calib, cam, cfg, PoseSE3::identity());

  std::size_t fg = 0, bg_on_fg = 0;
  double worst = 0.0;
  for (const MapPoint& m : cloud.points) {
    bool on_panel = false;
    const double z_true = surface_z(m.pixel.x, m.pixel.y, &on_panel);
    if (!on_panel) continue;
    ++fg;
    const double err = std::abs(m.depth - z_true);
    worst = std::max(worst, err);
    if (std::abs(m.depth - wall_z) < std::abs(m.depth - z_true)) ++bg_on_fg;
  }
  std::size_t fg_pixels = 0;
  for (const Pixel& p : threshold_mask(tsm, cfg.delta)) {
    bool on_panel = false;
    surface_z(p.x, p.y, &on_panel);
    fg_pixels += on_panel;
  }
  return {fg > 0 && fg == fg_pixels && worst < cfg.cluster_gap / 2.0 && bg_on_fg == 0,
          fmt("%zu foreground points of %zu foreground pixels, max depth err %.4f m (limit %.2f), "
              "%zu background assignments",
              fg, fg_pixels, worst, cfg.cluster_gap / 2.0, bg_on_fg)};
}

Verdict metric_oracles() {
  std::mt19937_64 rng(1006);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_ate = 0.0, worst_rpe = 0.0, worst_inv = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto [est, gt] = testing::random_trajectory_pair(rng);
    const double a = eval::ate(est, gt).rmse_cm;
    const eval::RpeResult r = eval::rpe(est, gt);
    const auto [rr, tr] = testing::oracle_rpe(est, gt, eval::kDefaultRpeDt, eval::kDefaultMaxDt);
    worst_ate = std::max(worst_ate, std::abs(a - testing::oracle_ate_cm(est, gt, eval::kDefaultMaxDt)));
    worst_rpe = std::max({worst_rpe, std::abs(r.r_rpe_deg_s - rr), std::abs(r.t_rpe_cm_s - tr)});

    // Moving the estimate rigidly changes neither metric; moving the ground truth
    // as well leaves RPE unchanged.
    const PoseSE3 A{Vector3d(u(rng), u(rng), u(rng)) * 3.0, Vector3d(u(rng), u(rng), u(rng))};
    const PoseSE3 B{Vector3d(u(rng), u(rng), u(rng)) * 3.0, Vector3d(u(rng), u(rng), u(rng))};
    std::vector<eval::StampedPose> e2, g2;
    for (const auto& s : est.samples()) e2.push_back({s.t, A * s.pose});
    for (const auto& s : gt.samples()) g2.push_back({s.t, B * s.pose});
    const eval::Trajectory est_moved(std::move(e2)), gt_moved(std::move(g2));
    const eval::RpeResult r2 = eval::rpe(est_moved, gt_moved);
    worst_inv = std::max({worst_inv, std::abs(eval::ate(est_moved, gt).rmse_cm - a),
                          std::abs(r2.r_rpe_deg_s - r.r_rpe_deg_s), std::abs(r2.t_rpe_cm_s - r.t_rpe_cm_s)});
  }
  return {worst_ate <= 1e-9 && worst_rpe <= 1e-9 && worst_inv <= 1e-9,
          fmt("50 pairs, max |ate - ref| %.1e, max |rpe - ref| %.1e, max invariance gap %.1e", worst_ate,
              worst_rpe, worst_inv)};
}

Verdict performance(const ClosedLoop& cl) {
  std::ifstream in(cl.dir / "run_a" / "diagnostics.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) header.push_back(f);
  }
  auto col = [&](const char* name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const std::size_t c_tracked = col("tracked"), c_solve = col("solve_ms"), c_switch = col("keyframe_switched"),
                    c_build = col("keyframe_build_ms"), c_points = col("points");
  std::vector<double> solve, build, points;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string s; std::getline(ss, s, ',');) f.push_back(s);
    if (f.size() != header.size()) continue;
    if (f[c_tracked] == "1") {
      solve.push_back(std::stod(f[c_solve]));
      points.push_back(std::stod(f[c_points]));
    }
    if (f[c_switch] == "1") build.push_back(std::stod(f[c_build]));
  }
  if (solve.empty() || build.empty()) return {false, "no tracked ticks or keyframes in diagnostics"};
  const double med = median(solve), worst_build = *std::max_element(build.begin(), build.end());
  return {med <= 10.0 && worst_build <= 50.0,
          fmt("%zu ticks, median solve %.2f ms (median %.0f points), %zu keyframes, max build %.1f ms, "
              "median build %.1f ms",
              solve.size(), med, median(points), build.size(), worst_build, median(build))};
}

Verdict determinism(ClosedLoop& cl) {
  cl.second = run(cl.dir / "synth_cv", PipelineConfig{}, cl.dir / "run_b", true);
  const std::string a = slurp(cl.dir / "run_a" / "trajectory.txt");
  const std::string b = slurp(cl.dir / "run_b" / "trajectory.txt");
  return {cl.second.exit_code == kExitOk && !a.empty() && a == b,
          fmt("%zu bytes vs %zu bytes, %s", a.size(), b.size(), a == b ? "identical" : "DIFFERENT")};
}

}  // namespace

int main() {
  init_logging_from_env();
  ClosedLoop cl;
  cl.dir = fs::temp_directory_path() / ("devo_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(cl.dir);
  fs::create_directories(cl.dir);

  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d: %s (%s)\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  };

  report(1, "time-surface exactness", tsm_exactness);
  report(2, "residual Jacobian vs finite differences", jacobian_check);
  report(3, "closed-loop pose recovery", [&] { return closed_loop(cl); });
  report(4, "depth-rate robustness", [&] { return depth_rate(cl); });
  report(5, "occlusion correctness", occlusion);
  report(6, "metric oracles", metric_oracles);
  report(7, "performance budget", [&] { return performance(cl); });
  report(8, "determinism", [&] { return determinism(cl); });

  fs::remove_all(cl.dir);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
