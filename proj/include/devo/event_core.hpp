#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "devo/grid.hpp"

namespace devo {

using TimeUs = std::int64_t;

/// Timestamp stored for pixels that have not fired.
inline constexpr TimeUs kNeverFired = std::numeric_limits<TimeUs>::min();

/// Time-surface values live on the display scale [0, kTsmScale].
inline constexpr double kTsmScale = 255.0;
inline constexpr double kDefaultTauUs = 30000.0;
inline constexpr double kDefaultDelta = 25.0;

struct SensorSize {
  int width = 0;
  int height = 0;
  bool operator==(const SensorSize&) const = default;
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

struct Event {
  TimeUs t = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t polarity = 1;  // +1 / -1
  bool operator==(const Event&) const = default;
};

/// Timestamp-ordered events from one sensor.
class EventStream {
 public:
  EventStream() = default;
  /// Throws ParameterError on out-of-bounds pixels and InputOrderError on
  /// decreasing timestamps.
  EventStream(SensorSize size, std::vector<Event> events);

  /// Stable-sorts by timestamp, so equal timestamps keep their input order.
  static EventStream from_unsorted(SensorSize size, std::vector<Event> events);

  SensorSize sensor_size() const { return size_; }
  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

 private:
  SensorSize size_;
  std::vector<Event> events_;
};

/// Exponential-decay recency image. Immutable once built.
class TimeSurfaceMap {
 public:
  /// Evaluates 255 * exp(-(t_query - t_last) / tau) per pixel. Pixels whose last
  /// event is older than `window_start` count as never fired.
  TimeSurfaceMap(Grid<TimeUs> last_timestamp, TimeUs t_query, double tau,
                 TimeUs window_start = kNeverFired);

  int width() const { return values_.width(); }
  int height() const { return values_.height(); }
  double value(int x, int y) const { return values_(x, y); }
  const Grid<double>& values() const { return values_; }
  const Grid<TimeUs>& last_timestamps() const { return last_; }
  TimeUs t_query() const { return t_query_; }
  double tau() const { return tau_; }

 private:
  Grid<TimeUs> last_;
  Grid<double> values_;
  TimeUs t_query_;
  double tau_;
};

/// Running per-pixel "last event" grid. Feed events in order, snapshot at any
/// time not earlier than the newest event.
class TimeSurfaceAccumulator {
 public:
  explicit TimeSurfaceAccumulator(SensorSize size);

  void add(const Event& e);
  TimeSurfaceMap snapshot(TimeUs t_query, double tau, TimeUs window_start = kNeverFired) const;

  SensorSize sensor_size() const { return size_; }
  TimeUs latest() const { return latest_; }
  std::size_t count() const { return count_; }

 private:
  SensorSize size_;
  Grid<TimeUs> last_;
  TimeUs latest_ = kNeverFired;
  std::size_t count_ = 0;
};

TimeSurfaceMap build_tsm(const EventStream& stream, TimeUs t_query, double tau);

/// Pixels with value strictly above `delta`, in raster order.
std::vector<Pixel> threshold_mask(const TimeSurfaceMap& tsm, double delta);

/// Continuous 2D field sampled at sub-pixel locations. Integer coordinates are
/// pixel centers.
class ScalarField {
 public:
  virtual ~ScalarField() = default;
  virtual int width() const = 0;
  virtual int height() const = 0;
  /// Returns false when `p` is outside the sampling domain. `gradient` may be null.
  virtual bool sample(const Eigen::Vector2d& p, double* value, Eigen::Vector2d* gradient) const = 0;
};

/// Negated time surface: 255 - TSM. Minima sit on recently active edges.
/// Gradients are central differences on the grid, sampled bilinearly like the values.
class PotentialField final : public ScalarField {
 public:
  explicit PotentialField(Grid<double> values);

  int width() const override { return values_.width(); }
  int height() const override { return values_.height(); }
  bool sample(const Eigen::Vector2d& p, double* value, Eigen::Vector2d* gradient) const override;

  const Grid<double>& values() const { return values_; }

 private:
  struct Cell {
    double v, gx, gy;
  };
  Grid<double> values_;
  std::vector<Cell> cells_;
};

Grid<double> negate_values(const Grid<double>& values);
PotentialField negate_tsm(const TimeSurfaceMap& tsm);

/// Scalar time-surface value for a single elapsed time.
inline double decay_value(double elapsed_us, double tau_us) {
  return kTsmScale * std::exp(-elapsed_us / tau_us);
}

}  // namespace devo
