#include "devo/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "devo/error.hpp"
#include "devo/log.hpp"

namespace devo {

namespace {

using nlohmann::json;

void require(bool ok, const char* field, const char* range) {
  if (!ok) throw ParameterError(std::string("config: ") + field + " must be " + range);
}

/// Reads the keys of `j` into the matching targets; any other key is an error.
class Reader {
 public:
  Reader(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j.is_object()) throw ParseError("config: " + scope_ + " must be an object");
  }

  template <typename T>
  Reader& field(const char* key, T& target) {
    seen_.push_back(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        target = it->template get<T>();
      } catch (const json::exception&) {
        throw ParseError("config: " + scope_ + key + " has the wrong type");
      }
    }
    return *this;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), item.key()) == seen_.end()) {
        throw ParseError("config: unknown key " + scope_ + item.key());
      }
    }
  }

 private:
  const json& j_;
  std::string scope_;
  std::vector<std::string> seen_;
};

}  // namespace

void PipelineConfig::validate() const {
  const TrackerConfig& t = tracker;
  const SolverConfig& s = t.solver;
  const MappingConfig& m = mapping;
  require(t.tau_us > 0.0 && std::isfinite(t.tau_us), "tau_us", "> 0");
  require(m.delta >= 0.0 && m.delta <= kTsmScale, "delta", "in [0, 255]");
  require(t.rate_hz > 0.0 && t.rate_hz <= 1e6, "rate_hz", "in (0, 1e6]");
  require(t.window_min_us >= 0, "window_min_us", ">= 0");
  require(t.bootstrap_timeout_us >= 0, "bootstrap_timeout_us", ">= 0");
  require(s.huber > 0.0, "solver.huber", "> 0");
  require(s.max_iters >= 1, "solver.max_iters", ">= 1");
  require(s.eps > 0.0, "solver.eps", "> 0");
  require(s.min_points >= 6, "solver.min_points", ">= 6");
  require(s.max_cond > 1.0, "solver.max_cond", "> 1");
  require(s.lambda_init > 0.0, "solver.lambda_init", "> 0");
  require(m.radius > 0.0, "mapping.radius", "> 0");
  require(m.cluster_gap > 0.0, "mapping.cluster_gap", "> 0");
  require(m.trans_thresh > 0.0, "mapping.trans_thresh", "> 0");
  require(m.rot_thresh > 0.0 && m.rot_thresh < M_PI, "mapping.rot_thresh_deg", "in (0, 180)");
  require(m.max_depth_skew_us >= 0, "mapping.max_depth_skew_us", ">= 0");
  require(m.validity.min_depth > 0.0 && m.validity.max_depth > m.validity.min_depth,
          "mapping.min_depth/max_depth", "0 < min < max");
}

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  PipelineConfig cfg;
  TrackerConfig& t = cfg.tracker;
  MappingConfig& m = cfg.mapping;
  std::string window = t.window == WindowPolicy::kSlidingWindow ? "sliding" : "since_last_tick";
  json solver = json::object(), mapping = json::object();
  Reader(j, "")
      .field("tau_us", t.tau_us)
      .field("delta", m.delta)
      .field("rate_hz", t.rate_hz)
      .field("window", window)
      .field("window_min_us", t.window_min_us)
      .field("window_min_events", t.window_min_events)
      .field("constant_velocity", t.constant_velocity)
      .field("bootstrap_timeout_us", t.bootstrap_timeout_us)
      .field("seed", cfg.seed)
      .field("solver", solver)
      .field("mapping", mapping)
      .finish();
  Reader(solver, "solver.")
      .field("huber", t.solver.huber)
      .field("max_iters", t.solver.max_iters)
      .field("eps", t.solver.eps)
      .field("min_points", t.solver.min_points)
      .field("max_cond", t.solver.max_cond)
      .field("lambda_init", t.solver.lambda_init)
      .finish();
  double rot_deg = m.rot_thresh * 180.0 / M_PI;
  Reader(mapping, "mapping.")
      .field("radius", m.radius)
      .field("cluster_gap", m.cluster_gap)
      .field("trans_thresh", m.trans_thresh)
      .field("rot_thresh_deg", rot_deg)
      .field("max_depth_skew_us", m.max_depth_skew_us)
      .field("min_depth", m.validity.min_depth)
      .field("max_depth", m.validity.max_depth)
      .field("max_points", m.max_points)
      .finish();
  m.rot_thresh = rot_deg * M_PI / 180.0;
  if (window == "sliding") {
    t.window = WindowPolicy::kSlidingWindow;
  } else if (window == "since_last_tick") {
    t.window = WindowPolicy::kSinceLastTick;
  } else {
    throw ParameterError("config: window must be \"sliding\" or \"since_last_tick\"");
  }
  t.trans_thresh = m.trans_thresh;
  t.rot_thresh = m.rot_thresh;
  cfg.validate();
  return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
  const TrackerConfig& t = cfg.tracker;
  const MappingConfig& m = cfg.mapping;
  const json j{
      {"tau_us", t.tau_us},
      {"delta", m.delta},
      {"rate_hz", t.rate_hz},
      {"window", t.window == WindowPolicy::kSlidingWindow ? "sliding" : "since_last_tick"},
      {"window_min_us", t.window_min_us},
      {"window_min_events", t.window_min_events},
      {"constant_velocity", t.constant_velocity},
      {"bootstrap_timeout_us", t.bootstrap_timeout_us},
      {"seed", cfg.seed},
      {"solver",
       {{"huber", t.solver.huber},
        {"max_iters", t.solver.max_iters},
        {"eps", t.solver.eps},
        {"min_points", t.solver.min_points},
        {"max_cond", t.solver.max_cond},
        {"lambda_init", t.solver.lambda_init}}},
      {"mapping",
       {{"radius", m.radius},
        {"cluster_gap", m.cluster_gap},
        {"trans_thresh", m.trans_thresh},
        {"rot_thresh_deg", m.rot_thresh * 180.0 / M_PI},
        {"max_depth_skew_us", m.max_depth_skew_us},
        {"min_depth", m.validity.min_depth},
        {"max_depth", m.validity.max_depth},
        {"max_points", m.max_points}}}};
  return j.dump(2) + "\n";
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

// ---------------------------------------------------------------------------

std::shared_ptr<const Keyframe> build_keyframe(const KeyframeRequest& request, std::size_t id,
                                               const io::DepthSource& depth,
                                               const io::Calibration& calib,
                                               const MappingConfig& cfg, std::size_t min_points) {
  const auto start = std::chrono::steady_clock::now();
  const std::optional<std::size_t> idx = depth.nearest(request.t);
  if (!idx) return nullptr;
  const TimeUs skew = std::abs(depth.timestamps()[*idx] - request.t);
  if (skew > cfg.max_depth_skew_us) return nullptr;
  const DepthFrame frame = depth.load(*idx);
  auto kf = std::make_shared<Keyframe>();
  kf->id = id;
  kf->cloud = build_point_cloud(*request.tsm, frame, calib.extrinsics, calib.event_camera, cfg,
                                request.pose);
  kf->cloud.t_ref = request.t;
  if (kf->cloud.points.size() < min_points) {
    DEVO_LOG_DEBUG("keyframe at t={} us rejected: {} points", request.t, kf->cloud.points.size());
    return nullptr;
  }
  kf->model = std::make_shared<const AlignmentModel>(kf->cloud);
  kf->build_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  DEVO_LOG_DEBUG("keyframe {} at t={} us: {} points, {:.2f} ms", id, request.t,
                 kf->cloud.points.size(), kf->build_ms);
  return kf;
}

SequentialKeyframeSource::SequentialKeyframeSource(const io::DepthSource& depth,
                                                   io::Calibration calib, MappingConfig cfg,
                                                   std::size_t min_points)
    : depth_(depth), calib_(std::move(calib)), cfg_(cfg), min_points_(min_points) {}

std::shared_ptr<const Keyframe> SequentialKeyframeSource::bootstrap(const KeyframeRequest& request) {
  auto kf = build_keyframe(request, next_id_, depth_, calib_, cfg_, min_points_);
  if (kf) {
    ++next_id_;
    latest_ = kf;
  }
  return kf;
}

void SequentialKeyframeSource::request(const KeyframeRequest& request) {
  if (auto kf = build_keyframe(request, next_id_, depth_, calib_, cfg_, min_points_)) {
    ++next_id_;
    latest_ = kf;
  }
}

ThreadedKeyframeSource::ThreadedKeyframeSource(const io::DepthSource& depth, io::Calibration calib,
                                               MappingConfig cfg, std::size_t min_points)
    : depth_(depth), calib_(std::move(calib)), cfg_(cfg), min_points_(min_points) {}

ThreadedKeyframeSource::~ThreadedKeyframeSource() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const Keyframe> ThreadedKeyframeSource::bootstrap(const KeyframeRequest& request) {
  // Runs on the caller's thread before the worker exists.
  if (worker_.joinable()) throw Error("bootstrap after the mapping worker started");
  auto kf = build_keyframe(request, next_id_, depth_, calib_, cfg_, min_points_);
  if (!kf) return nullptr;
  ++next_id_;
  {
    std::lock_guard<std::mutex> lock(mu_);
    latest_ = kf;
  }
  worker_ = std::thread([this] { loop(); });
  return kf;
}

void ThreadedKeyframeSource::request(const KeyframeRequest& request) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    pending_ = request;
  }
  cv_.notify_one();
}

std::shared_ptr<const Keyframe> ThreadedKeyframeSource::latest() {
  std::lock_guard<std::mutex> lock(mu_);
  return latest_;
}

void ThreadedKeyframeSource::loop() {
  std::unique_lock<std::mutex> lock(mu_);
  while (true) {
    cv_.wait(lock, [&] { return stop_ || pending_.has_value(); });
    if (stop_) return;
    KeyframeRequest req = std::move(*pending_);
    pending_.reset();
    lock.unlock();
    std::shared_ptr<const Keyframe> kf;
    try {
      kf = build_keyframe(req, next_id_, depth_, calib_, cfg_, min_points_);
    } catch (const std::exception& e) {
      DEVO_LOG_ERROR("keyframe build failed: {}", e.what());
    }
    lock.lock();
    if (kf) {
      ++next_id_;
      latest_ = std::move(kf);
    }
  }
}

// ---------------------------------------------------------------------------

TrackOutcome run_tracking(EventSource& events, const io::DepthSource& depth,
                          const io::Calibration& calib, const PipelineConfig& cfg,
                          bool deterministic) {
  cfg.validate();
  TrackerConfig tcfg = cfg.tracker;
  tcfg.trans_thresh = cfg.mapping.trans_thresh;
  tcfg.rot_thresh = cfg.mapping.rot_thresh;
  const std::size_t min_points = cfg.tracker.solver.min_points;
  if (deterministic) {
    SequentialKeyframeSource source(depth, calib, cfg.mapping, min_points);
    return track_stream(events, source, calib.event_camera, tcfg, true);
  }
  ThreadedKeyframeSource source(depth, calib, cfg.mapping, min_points);
  return track_stream(events, source, calib.event_camera, tcfg, true);
}

void write_diagnostics(const std::filesystem::path& path, const std::vector<TickDiagnostics>& ticks) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "t_us,tracked,status,iterations,inlier_fraction,solve_ms,field_ms,cost,points,"
         "keyframe_id,keyframe_requested,keyframe_switched,keyframe_build_ms\n";
  char buf[512];
  for (const TickDiagnostics& d : ticks) {
    std::snprintf(buf, sizeof(buf), "%lld,%d,%s,%d,%.6f,%.4f,%.4f,%.6g,%zu,%zu,%d,%d,%.4f\n",
                  static_cast<long long>(d.t), d.tracked ? 1 : 0, to_string(d.status),
                  d.iterations, d.inlier_fraction, d.solve_ms, d.field_ms, d.cost, d.points,
                  d.keyframe_id, d.keyframe_requested ? 1 : 0, d.keyframe_switched ? 1 : 0,
                  d.keyframe_build_ms);
    out << buf;
  }
}

RunReport run(const std::filesystem::path& dataset_root, const PipelineConfig& cfg,
              const std::filesystem::path& output_dir, bool deterministic) {
  RunReport report;
  try {
    cfg.validate();
  } catch (const Error& e) {
    report.exit_code = kExitConfig;
    report.message = e.what();
    return report;
  }
  io::Dataset ds;
  try {
    ds = io::load_dataset(dataset_root);
    std::filesystem::create_directories(output_dir);
    auto events = ds.open_events();
    report.outcome = run_tracking(*events, *ds.depth, ds.calibration, cfg, deterministic);
  } catch (const Error& e) {
    report.exit_code = kExitDataset;
    report.message = e.what();
    return report;
  }
  io::write_trajectory(output_dir / "trajectory.txt", report.outcome.poses);
  write_diagnostics(output_dir / "diagnostics.csv", report.outcome.ticks);
  if (!report.outcome.bootstrapped) {
    report.exit_code = kExitDataset;
    report.message = "bootstrap failed: no valid first keyframe";
  } else if (!report.outcome.lost.empty()) {
    report.exit_code = kExitLost;
    report.message = "tracking lost at t=" + std::to_string(report.outcome.lost.front()) + " us";
  }
  return report;
}

}  // namespace devo
