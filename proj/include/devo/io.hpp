#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "devo/eval.hpp"
#include "devo/event_core.hpp"
#include "devo/geometry.hpp"
#include "devo/mapping.hpp"
#include "devo/tracking.hpp"

namespace devo::synth {
struct SyntheticDataset;
}

namespace devo::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Events: header "# width height", then one "t_us x y p" line per event, p in {0, 1}.

void write_events(const fs::path& path, const EventStream& stream);

/// Streaming reader; holds one line in memory at a time.
class EventFileReader final : public EventSource {
 public:
  /// Reads the header. Throws ParseError for a missing or malformed header.
  explicit EventFileReader(const fs::path& path);

  SensorSize sensor_size() const override { return size_; }
  /// Throws ParseError (with line number) on a malformed or out-of-bounds line
  /// and InputOrderError on decreasing timestamps.
  bool next(Event& out) override;
  std::size_t line() const { return line_; }

 private:
  std::ifstream in_;
  std::string buf_;
  SensorSize size_;
  std::size_t line_ = 0;
  TimeUs last_t_ = kNeverFired;
};

EventStream read_events(const fs::path& path);

// ---------------------------------------------------------------------------
// Depth: binary PGM (P5, maxval 65535, big-endian), millimeters, 0 = invalid.

void write_pgm16(const fs::path& path, const Grid<std::uint16_t>& image);
Grid<std::uint16_t> read_pgm16(const fs::path& path);

/// Meters -> millimeters, rounded; non-finite, non-positive and > 65.535 m map to 0.
Grid<std::uint16_t> depth_to_mm(const Grid<float>& meters);
Grid<float> mm_to_depth(const Grid<std::uint16_t>& mm);

struct DepthIndexEntry {
  TimeUs t = 0;
  std::string file;  // relative to the index file's directory
};

/// "timestamp_us filename" per line; timestamps strictly increasing.
std::vector<DepthIndexEntry> read_depth_index(const fs::path& path);
void write_depth_index(const fs::path& path, const std::vector<DepthIndexEntry>& entries);

/// Random-access depth frames with nearest-timestamp lookup. Read-only after construction.
class DepthSource {
 public:
  virtual ~DepthSource() = default;
  virtual const std::vector<TimeUs>& timestamps() const = 0;
  virtual DepthFrame load(std::size_t index) const = 0;

  /// Index of the frame closest in time (earlier frame on ties); empty if there are none.
  std::optional<std::size_t> nearest(TimeUs t) const;
};

class DepthFileSequence final : public DepthSource {
 public:
  DepthFileSequence(const fs::path& index_path, PinholeCamera camera);
  const std::vector<TimeUs>& timestamps() const override { return times_; }
  /// Throws ParseError for an unreadable file and ValidationError on a size mismatch.
  DepthFrame load(std::size_t index) const override;

 private:
  fs::path dir_;
  std::vector<TimeUs> times_;
  std::vector<std::string> files_;
  PinholeCamera camera_;
};

class DepthMemorySequence final : public DepthSource {
 public:
  /// Frames must have strictly increasing timestamps.
  explicit DepthMemorySequence(std::vector<DepthFrame> frames);
  const std::vector<TimeUs>& timestamps() const override { return times_; }
  DepthFrame load(std::size_t index) const override { return frames_.at(index); }

 private:
  std::vector<DepthFrame> frames_;
  std::vector<TimeUs> times_;
};

// ---------------------------------------------------------------------------
// Calibration JSON.

struct Calibration {
  PinholeCamera event_camera;
  PinholeCamera depth_camera;
  ExtrinsicCalib extrinsics;
};

/// Throws ParseError on malformed JSON and ValidationError when T_ed is not rigid to 1e-6.
Calibration read_calibration(const fs::path& path);
void write_calibration(const fs::path& path, const Calibration& calib);

// ---------------------------------------------------------------------------
// Trajectory text: "timestamp_s tx ty tz qx qy qz qw", world <- camera, qw >= 0.

std::string format_pose_line(const TimedPose& pose);
void write_trajectory(const fs::path& path, const std::vector<TimedPose>& poses);
eval::Trajectory read_trajectory(const fs::path& path);

// ---------------------------------------------------------------------------
// Datasets.

struct DatasetManifest {
  fs::path root;
  fs::path events;
  fs::path depth_index;
  fs::path calibration;
  std::optional<fs::path> groundtruth;
};

inline constexpr const char* kManifestName = "dataset.json";

/// Reads `root/dataset.json`; paths inside are resolved against `root`.
DatasetManifest read_manifest(const fs::path& root);
void write_manifest(const DatasetManifest& manifest);

struct Dataset {
  DatasetManifest manifest;
  Calibration calibration;
  std::shared_ptr<const DepthFileSequence> depth;
  std::optional<eval::Trajectory> groundtruth;

  std::unique_ptr<EventFileReader> open_events() const;
};

/// Validates that every file exists, the calibration parses and the event
/// header agrees with the event camera size.
Dataset load_dataset(const fs::path& root);

/// Writes events, quantized depth frames + index, calibration, ground truth and manifest.
void write_synthetic_dataset(const fs::path& root, const synth::SyntheticDataset& data);

}  // namespace devo::io
