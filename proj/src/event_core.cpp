#include "devo/event_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "devo/error.hpp"

namespace devo {

namespace {

void check_bounds(const SensorSize& size, const Event& e) {
  if (!size.contains(e.x, e.y)) {
    throw ParameterError("event at (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                         ") outside " + std::to_string(size.width) + "x" +
                         std::to_string(size.height) + " sensor");
  }
}

}  // namespace

EventStream::EventStream(SensorSize size, std::vector<Event> events)
    : size_(size), events_(std::move(events)) {
  if (size_.width <= 0 || size_.height <= 0) throw ParameterError("sensor size must be positive");
  for (std::size_t i = 0; i < events_.size(); ++i) {
    check_bounds(size_, events_[i]);
    if (i > 0 && events_[i].t < events_[i - 1].t) {
      throw InputOrderError("event " + std::to_string(i) + " has decreasing timestamp");
    }
  }
}

EventStream EventStream::from_unsorted(SensorSize size, std::vector<Event> events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return EventStream(size, std::move(events));
}

TimeSurfaceMap::TimeSurfaceMap(Grid<TimeUs> last_timestamp, TimeUs t_query, double tau,
                               TimeUs window_start)
    : last_(std::move(last_timestamp)),
      values_(last_.width(), last_.height(), 0.0),
      t_query_(t_query),
      tau_(tau) {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  const auto& last = last_.storage();
  auto& out = values_.storage();
  for (std::size_t i = 0; i < last.size(); ++i) {
    const TimeUs t_last = last[i];
    if (t_last == kNeverFired || t_last < window_start) continue;
    if (t_last > t_query) throw InputOrderError("pixel fired after the query time");
    out[i] = decay_value(static_cast<double>(t_query - t_last), tau);
  }
}

TimeSurfaceAccumulator::TimeSurfaceAccumulator(SensorSize size)
    : size_(size), last_(size.width, size.height, kNeverFired) {}

void TimeSurfaceAccumulator::add(const Event& e) {
  check_bounds(size_, e);
  if (e.t < latest_) throw InputOrderError("event timestamps must be non-decreasing");
  // Polarity is ignored: only the most recent event per pixel matters.
  last_(e.x, e.y) = e.t;
  latest_ = e.t;
  ++count_;
}

TimeSurfaceMap TimeSurfaceAccumulator::snapshot(TimeUs t_query, double tau,
                                                TimeUs window_start) const {
  if (latest_ != kNeverFired && latest_ > t_query) {
    throw InputOrderError("accumulator holds events newer than the query time");
  }
  return TimeSurfaceMap(last_, t_query, tau, window_start);
}

TimeSurfaceMap build_tsm(const EventStream& stream, TimeUs t_query, double tau) {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  TimeSurfaceAccumulator acc(stream.sensor_size());
  for (const Event& e : stream.events()) {
    if (e.t > t_query) throw InputOrderError("event after query time");
    acc.add(e);
  }
  return acc.snapshot(t_query, tau);
}

std::vector<Pixel> threshold_mask(const TimeSurfaceMap& tsm, double delta) {
  if (!(delta >= 0.0 && delta <= kTsmScale)) throw ParameterError("delta must lie in [0, 255]");
  std::vector<Pixel> region;
  const auto& v = tsm.values();
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      if (v(x, y) > delta) region.push_back({x, y});
    }
  }
  return region;
}

PotentialField::PotentialField(Grid<double> values) : values_(std::move(values)) {
  const int w = values_.width();
  const int h = values_.height();
  if (w < 2 || h < 2) throw ParameterError("potential field needs at least 2x2 pixels");
  cells_.resize(values_.size());
  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      Cell& c = cells_[static_cast<std::size_t>(y) * w + x];
      c.v = values_(x, y);
      c.gx = (values_(xp, y) - values_(xm, y)) / (xp - xm);
      c.gy = (values_(x, yp) - values_(x, ym)) / (yp - ym);
    }
  }
}

bool PotentialField::sample(const Eigen::Vector2d& p, double* value,
                            Eigen::Vector2d* gradient) const {
  const int w = values_.width();
  const int h = values_.height();
  const double u = p.x();
  const double v = p.y();
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1 && v <= h - 1)) return false;
  const int x0 = std::min(static_cast<int>(u), w - 2);
  const int y0 = std::min(static_cast<int>(v), h - 2);
  const double a = u - x0;
  const double b = v - y0;
  const double w00 = (1 - a) * (1 - b), w10 = a * (1 - b), w01 = (1 - a) * b, w11 = a * b;
  const Cell& c00 = cells_[static_cast<std::size_t>(y0) * w + x0];
  const Cell& c10 = (&c00)[1];
  const Cell& c01 = (&c00)[w];
  const Cell& c11 = (&c00)[w + 1];
  if (value) *value = w00 * c00.v + w10 * c10.v + w01 * c01.v + w11 * c11.v;
  if (gradient) {
    gradient->x() = w00 * c00.gx + w10 * c10.gx + w01 * c01.gx + w11 * c11.gx;
    gradient->y() = w00 * c00.gy + w10 * c10.gy + w01 * c01.gy + w11 * c11.gy;
  }
  return true;
}

Grid<double> negate_values(const Grid<double>& values) {
  Grid<double> out(values.width(), values.height());
  for (std::size_t i = 0; i < values.size(); ++i) out.data()[i] = kTsmScale - values.data()[i];
  return out;
}

PotentialField negate_tsm(const TimeSurfaceMap& tsm) {
  return PotentialField(negate_values(tsm.values()));
}

}  // namespace devo
