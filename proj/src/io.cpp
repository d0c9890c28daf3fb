#include "devo/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "devo/error.hpp"
#include "devo/synth.hpp"

namespace devo::io {

namespace {

using nlohmann::json;

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

/// Whitespace-separated field scanner over one line.
class Fields {
 public:
  explicit Fields(std::string_view s) : p_(s.data()), end_(s.data() + s.size()) {}

  template <typename T>
  bool next(T& value) {
    skip();
    if (p_ == end_) return false;
    auto [ptr, ec] = std::from_chars(p_, end_, value);
    if (ec != std::errc() || (ptr != end_ && *ptr != ' ' && *ptr != '\t' && *ptr != '\r')) {
      return false;
    }
    p_ = ptr;
    return true;
  }

  bool next_token(std::string& token) {
    skip();
    const char* start = p_;
    while (p_ != end_ && *p_ != ' ' && *p_ != '\t' && *p_ != '\r') ++p_;
    token.assign(start, p_);
    return !token.empty();
  }

  bool done() {
    skip();
    return p_ == end_;
  }

 private:
  void skip() {
    while (p_ != end_ && (*p_ == ' ' || *p_ == '\t' || *p_ == '\r')) ++p_;
  }
  const char* p_;
  const char* end_;
};

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

// ---------------------------------------------------------------------------
// Events

void write_events(const fs::path& path, const EventStream& stream) {
  std::ofstream out = open_out(path, std::ios::binary);
  const SensorSize size = stream.sensor_size();
  out << "# " << size.width << ' ' << size.height << '\n';
  std::string buf;
  buf.reserve(1 << 20);
  auto put = [&buf](auto v) {
    std::array<char, 24> tmp;
    buf.append(tmp.data(), std::to_chars(tmp.data(), tmp.data() + tmp.size(), v).ptr);
  };
  for (const Event& e : stream.events()) {
    put(e.t);
    buf.push_back(' ');
    put(e.x);
    buf.push_back(' ');
    put(e.y);
    buf.push_back(' ');
    buf.push_back(e.polarity > 0 ? '1' : '0');
    buf.push_back('\n');
    if (buf.size() > (1 << 20) - 64) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path.string());
}

EventFileReader::EventFileReader(const fs::path& path) : in_(open_in(path)) {
  if (!std::getline(in_, buf_)) throw ParseError("missing '# width height' header", 1);
  line_ = 1;
  Fields f(buf_);
  std::string hash;
  if (!f.next_token(hash) || hash != "#" || !f.next(size_.width) || !f.next(size_.height) ||
      !f.done() || size_.width <= 0 || size_.height <= 0) {
    throw ParseError("malformed header, expected '# width height'", 1);
  }
}

bool EventFileReader::next(Event& out) {
  while (std::getline(in_, buf_)) {
    ++line_;
    if (blank(buf_)) continue;
    Fields f(buf_);
    TimeUs t = 0;
    int x = 0, y = 0, p = 0;
    if (!f.next(t) || !f.next(x) || !f.next(y) || !f.next(p) || !f.done()) {
      throw ParseError("malformed event, expected 't_us x y p'", line_);
    }
    if (p != 0 && p != 1) throw ParseError("polarity must be 0 or 1", line_);
    if (!size_.contains(x, y)) {
      throw ParseError("event at (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") outside the " + std::to_string(size_.width) + "x" +
                           std::to_string(size_.height) + " sensor",
                       line_);
    }
    if (t < last_t_) {
      throw InputOrderError("event timestamps decrease at line " + std::to_string(line_));
    }
    last_t_ = t;
    out = {t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
           static_cast<std::int8_t>(p == 1 ? 1 : -1)};
    return true;
  }
  return false;
}

EventStream read_events(const fs::path& path) {
  EventFileReader reader(path);
  std::vector<Event> events;
  Event e;
  while (reader.next(e)) events.push_back(e);
  return EventStream(reader.sensor_size(), std::move(events));
}

// ---------------------------------------------------------------------------
// Depth

void write_pgm16(const fs::path& path, const Grid<std::uint16_t>& image) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << "P5\n" << image.width() << ' ' << image.height() << "\n65535\n";
  std::vector<unsigned char> bytes(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::uint16_t v = image.data()[i];
    bytes[2 * i] = static_cast<unsigned char>(v >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Grid<std::uint16_t> read_pgm16(const fs::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  // Header tokens may be separated by whitespace and '#' comments.
  auto token = [&]() {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  const std::string magic = token();
  if (magic != "P5") throw ParseError(path.string() + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0) throw ParseError(path.string() + ": bad PGM size");
  if (maxval != 65535) throw ParseError(path.string() + ": expected maxval 65535");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ParseError(path.string() + ": truncated PGM data");
  }
  Grid<std::uint16_t> image(w, h);
  for (std::size_t i = 0; i < image.size(); ++i) {
    image.data()[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return image;
}

Grid<std::uint16_t> depth_to_mm(const Grid<float>& meters) {
  Grid<std::uint16_t> mm(meters.width(), meters.height(), 0);
  for (std::size_t i = 0; i < meters.size(); ++i) {
    const double v = std::round(static_cast<double>(meters.data()[i]) * 1000.0);
    if (std::isfinite(v) && v > 0.0 && v <= 65535.0) mm.data()[i] = static_cast<std::uint16_t>(v);
  }
  return mm;
}

Grid<float> mm_to_depth(const Grid<std::uint16_t>& mm) {
  Grid<float> meters(mm.width(), mm.height(), 0.0f);
  for (std::size_t i = 0; i < mm.size(); ++i) {
    meters.data()[i] = static_cast<float>(mm.data()[i] / 1000.0);
  }
  return meters;
}

std::vector<DepthIndexEntry> read_depth_index(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<DepthIndexEntry> entries;
  std::string buf;
  std::size_t line = 0;
  while (std::getline(in, buf)) {
    ++line;
    if (blank(buf) || buf.front() == '#') continue;
    Fields f(buf);
    DepthIndexEntry e;
    if (!f.next(e.t) || !f.next_token(e.file) || !f.done()) {
      throw ParseError("malformed depth index entry, expected 'timestamp_us filename'", line);
    }
    if (!entries.empty() && e.t <= entries.back().t) {
      throw ParseError("depth timestamps must strictly increase", line);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_depth_index(const fs::path& path, const std::vector<DepthIndexEntry>& entries) {
  std::ofstream out = open_out(path);
  for (const DepthIndexEntry& e : entries) out << e.t << ' ' << e.file << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

std::optional<std::size_t> DepthSource::nearest(TimeUs t) const {
  const std::vector<TimeUs>& times = timestamps();
  if (times.empty()) return std::nullopt;
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  if (it == times.end()) return times.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - times.begin());
  return (*it - t) < (t - times[hi - 1]) ? hi : hi - 1;
}

DepthFileSequence::DepthFileSequence(const fs::path& index_path, PinholeCamera camera)
    : dir_(index_path.parent_path()), camera_(std::move(camera)) {
  for (DepthIndexEntry& e : read_depth_index(index_path)) {
    times_.push_back(e.t);
    files_.push_back(std::move(e.file));
  }
}

DepthFrame DepthFileSequence::load(std::size_t index) const {
  const fs::path path = dir_ / files_.at(index);
  Grid<std::uint16_t> mm = read_pgm16(path);
  if (mm.width() != camera_.width() || mm.height() != camera_.height()) {
    throw ValidationError(path.string() + ": depth image size does not match the depth camera");
  }
  return {mm_to_depth(mm), times_[index], camera_};
}

DepthMemorySequence::DepthMemorySequence(std::vector<DepthFrame> frames)
    : frames_(std::move(frames)) {
  for (const DepthFrame& f : frames_) {
    if (!times_.empty() && f.timestamp <= times_.back()) {
      throw ValidationError("depth timestamps must strictly increase");
    }
    times_.push_back(f.timestamp);
  }
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

PinholeCamera camera_from_json(const json& j) {
  const std::vector<double> d = j.value("dist", std::vector<double>{0.0, 0.0, 0.0, 0.0});
  if (d.size() != 4) throw ParseError("dist must have 4 coefficients");
  return PinholeCamera(j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                       j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>(),
                       Distortion{d[0], d[1], d[2], d[3]});
}

json camera_to_json(const PinholeCamera& c) {
  const Distortion& d = c.distortion();
  return json{{"fx", c.fx()},       {"fy", c.fy()},         {"cx", c.cx()},
              {"cy", c.cy()},       {"width", c.width()},   {"height", c.height()},
              {"dist", {d.k1, d.k2, d.p1, d.p2}}};
}

json read_json(const fs::path& path) {
  std::ifstream in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

Calibration read_calibration(const fs::path& path) {
  const json j = read_json(path);
  Calibration calib;
  std::vector<double> T;
  try {
    calib.event_camera = camera_from_json(j.at("event_camera"));
    calib.depth_camera = camera_from_json(j.at("depth_camera"));
    T = j.at("T_ed").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (T.size() != 16) throw ParseError(path.string() + ": T_ed needs 16 numbers");
  Eigen::Matrix4d M;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) M(r, c) = T[4 * r + c];
  }
  if (!is_rigid(M, 1e-6)) throw ValidationError(path.string() + ": T_ed is not a rigid transform");
  calib.extrinsics.T_ed = PoseSE3::from_matrix(M);
  return calib;
}

void write_calibration(const fs::path& path, const Calibration& calib) {
  const Eigen::Matrix4d M = calib.extrinsics.T_ed.matrix();
  std::vector<double> T;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) T.push_back(M(r, c));
  }
  const json j{{"event_camera", camera_to_json(calib.event_camera)},
               {"depth_camera", camera_to_json(calib.depth_camera)},
               {"T_ed", T}};
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Trajectory

std::string format_pose_line(const TimedPose& p) {
  Eigen::Quaterniond q = p.pose.quaternion();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  // Seconds are printed from integer microseconds, so no float rounding enters the stamp.
  const TimeUs sec = p.t >= 0 ? p.t / 1000000 : -((-p.t + 999999) / 1000000);
  const TimeUs frac = p.t - sec * 1000000;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld.%06lld %.9f %.9f %.9f %.9f %.9f %.9f %.9f",
                static_cast<long long>(sec), static_cast<long long>(frac), p.pose.t.x(),
                p.pose.t.y(), p.pose.t.z(), q.x(), q.y(), q.z(), q.w());
  return buf;
}

void write_trajectory(const fs::path& path, const std::vector<TimedPose>& poses) {
  std::ofstream out = open_out(path, std::ios::binary);
  for (const TimedPose& p : poses) out << format_pose_line(p) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

eval::Trajectory read_trajectory(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<eval::StampedPose> samples;
  std::string buf;
  std::size_t line = 0;
  while (std::getline(in, buf)) {
    ++line;
    if (blank(buf) || buf.front() == '#') continue;
    Fields f(buf);
    std::array<double, 8> v{};
    for (double& x : v) {
      if (!f.next(x)) throw ParseError("malformed pose, expected 't tx ty tz qx qy qz qw'", line);
    }
    if (!f.done()) throw ParseError("trailing fields in pose line", line);
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    const double n = q.norm();
    if (!(std::abs(n - 1.0) < 1e-3)) throw ParseError("quaternion is not unit length", line);
    q.normalize();
    samples.push_back({v[0], PoseSE3::from_rt(q.toRotationMatrix(), Eigen::Vector3d(v[1], v[2], v[3]))});
    if (samples.size() > 1 && !(samples.back().t > samples[samples.size() - 2].t)) {
      throw ParseError("trajectory timestamps must strictly increase", line);
    }
  }
  return eval::Trajectory(std::move(samples));
}

// ---------------------------------------------------------------------------
// Datasets

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path path = root / kManifestName;
  if (!fs::exists(path)) throw ValidationError("no " + std::string(kManifestName) + " in " + root.string());
  const json j = read_json(path);
  DatasetManifest m;
  m.root = root;
  try {
    m.events = root / j.at("events").get<std::string>();
    m.depth_index = root / j.at("depth_index").get<std::string>();
    m.calibration = root / j.at("calibration").get<std::string>();
    if (j.contains("groundtruth") && !j.at("groundtruth").is_null()) {
      m.groundtruth = root / j.at("groundtruth").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& m) {
  auto rel = [&](const fs::path& p) { return p.lexically_relative(m.root).generic_string(); };
  json j{{"events", rel(m.events)},
         {"depth_index", rel(m.depth_index)},
         {"calibration", rel(m.calibration)}};
  if (m.groundtruth) j["groundtruth"] = rel(*m.groundtruth);
  std::ofstream out = open_out(m.root / kManifestName);
  out << j.dump(2) << '\n';
}

std::unique_ptr<EventFileReader> Dataset::open_events() const {
  return std::make_unique<EventFileReader>(manifest.events);
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = read_manifest(root);
  std::vector<fs::path> required{ds.manifest.events, ds.manifest.depth_index, ds.manifest.calibration};
  if (ds.manifest.groundtruth) required.push_back(*ds.manifest.groundtruth);
  for (const fs::path& p : required) {
    if (!fs::exists(p)) throw ValidationError("missing dataset file " + p.string());
  }
  ds.calibration = read_calibration(ds.manifest.calibration);
  const EventFileReader header(ds.manifest.events);
  if (!(header.sensor_size() == ds.calibration.event_camera.size())) {
    throw ValidationError("events header size does not match the event camera calibration");
  }
  ds.depth = std::make_shared<DepthFileSequence>(ds.manifest.depth_index, ds.calibration.depth_camera);
  if (ds.manifest.groundtruth) ds.groundtruth = read_trajectory(*ds.manifest.groundtruth);
  return ds;
}

void write_synthetic_dataset(const fs::path& root, const synth::SyntheticDataset& data) {
  fs::create_directories(root / "depth");
  DatasetManifest m{root, root / "events.txt", root / "depth.txt", root / "calib.json",
                    root / "groundtruth.txt"};
  write_events(m.events, data.events);
  std::vector<DepthIndexEntry> index;
  for (TimeUs t : data.depth_times) {
    const DepthFrame frame = synth::render_depth(data.scene, t, true);
    char name[64];
    std::snprintf(name, sizeof(name), "depth/%012lld.pgm", static_cast<long long>(t));
    write_pgm16(root / name, depth_to_mm(frame.values));
    index.push_back({t, name});
  }
  write_depth_index(m.depth_index, index);
  write_calibration(m.calibration, {data.scene.cam_e, data.scene.cam_d, data.scene.calib});
  write_trajectory(*m.groundtruth, data.groundtruth);
  write_manifest(m);
}

}  // namespace devo::io
