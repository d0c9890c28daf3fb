#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "devo/io.hpp"
#include "devo/mapping.hpp"
#include "devo/tracking.hpp"

namespace devo {

struct PipelineConfig {
  TrackerConfig tracker;
  MappingConfig mapping;
  std::uint64_t seed = 0;

  /// Throws ParameterError naming the first out-of-range field.
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys and wrong types are errors.
/// Throws ParseError or ParameterError.
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

/// Builds a keyframe for `request` from the depth frame nearest in time, or
/// returns null when no frame lies within max_depth_skew_us or the cloud has
/// fewer than `min_points` points.
std::shared_ptr<const Keyframe> build_keyframe(const KeyframeRequest& request, std::size_t id,
                                               const io::DepthSource& depth,
                                               const io::Calibration& calib,
                                               const MappingConfig& cfg, std::size_t min_points);

/// Builds keyframes inline on request; the result is visible on the next latest().
class SequentialKeyframeSource final : public KeyframeSource {
 public:
  SequentialKeyframeSource(const io::DepthSource& depth, io::Calibration calib, MappingConfig cfg,
                           std::size_t min_points);
  std::shared_ptr<const Keyframe> bootstrap(const KeyframeRequest& request) override;
  void request(const KeyframeRequest& request) override;
  std::shared_ptr<const Keyframe> latest() override { return latest_; }

 private:
  const io::DepthSource& depth_;
  io::Calibration calib_;
  MappingConfig cfg_;
  std::size_t min_points_;
  std::size_t next_id_ = 0;
  std::shared_ptr<const Keyframe> latest_;
};

/// Mapping worker thread. Requests go into a single slot where a newer request
/// replaces a pending one; request() and latest() never wait for a build.
class ThreadedKeyframeSource final : public KeyframeSource {
 public:
  ThreadedKeyframeSource(const io::DepthSource& depth, io::Calibration calib, MappingConfig cfg,
                         std::size_t min_points);
  ~ThreadedKeyframeSource() override;
  ThreadedKeyframeSource(const ThreadedKeyframeSource&) = delete;
  ThreadedKeyframeSource& operator=(const ThreadedKeyframeSource&) = delete;

  std::shared_ptr<const Keyframe> bootstrap(const KeyframeRequest& request) override;
  void request(const KeyframeRequest& request) override;
  std::shared_ptr<const Keyframe> latest() override;

 private:
  void loop();

  const io::DepthSource& depth_;
  io::Calibration calib_;
  MappingConfig cfg_;
  std::size_t min_points_;
  std::size_t next_id_ = 0;  // touched by the worker only once started

  std::mutex mu_;
  std::condition_variable cv_;
  std::optional<KeyframeRequest> pending_;
  std::shared_ptr<const Keyframe> latest_;
  bool stop_ = false;
  std::thread worker_;
};

/// Tracker over in-memory inputs. Ends at the first tracking loss.
TrackOutcome run_tracking(EventSource& events, const io::DepthSource& depth,
                          const io::Calibration& calib, const PipelineConfig& cfg,
                          bool deterministic);

/// Writes one row per tick: t_us, tracked, status, iterations, inlier_fraction,
/// solve_ms, field_ms, cost, points, keyframe_id, keyframe_requested,
/// keyframe_switched, keyframe_build_ms.
void write_diagnostics(const std::filesystem::path& path, const std::vector<TickDiagnostics>& ticks);

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitDataset = 3, kExitLost = 4 };

struct RunReport {
  int exit_code = kExitOk;
  std::string message;
  TrackOutcome outcome;
};

/// Loads the dataset, tracks it and writes `trajectory.txt` and `diagnostics.csv`
/// into `output_dir`. Dataset problems and bootstrap failure give kExitDataset;
/// a tracking loss truncates the trajectory at the loss and gives kExitLost.
RunReport run(const std::filesystem::path& dataset_root, const PipelineConfig& cfg,
              const std::filesystem::path& output_dir, bool deterministic);

}  // namespace devo
