// devo: run | synth | eval | convert
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "devo/error.hpp"
#include "devo/eval.hpp"
#include "devo/io.hpp"
#include "devo/log.hpp"
#include "devo/pipeline.hpp"
#include "devo/synth.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& dataset, const std::string& config, const std::string& output,
            bool deterministic) {
  devo::PipelineConfig cfg;
  try {
    if (!config.empty()) cfg = devo::load_config(config);
    cfg.validate();
  } catch (const devo::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return devo::kExitConfig;
  }
  const devo::RunReport report = devo::run(dataset, cfg, output, deterministic);
  if (report.exit_code != devo::kExitOk) {
    std::cerr << "devo run: " << report.message << '\n';
  } else {
    std::cerr << "devo run: " << report.outcome.poses.size() << " poses written to "
              << (fs::path(output) / "trajectory.txt").string() << '\n';
  }
  return report.exit_code;
}

int cmd_synth(const std::string& output, const devo::synth::ScenarioConfig& scenario) {
  const devo::synth::SyntheticDataset data = devo::synth::make_constant_velocity_dataset(scenario);
  devo::io::write_synthetic_dataset(output, data);
  std::cerr << "devo synth: " << data.events.size() << " events, " << data.depth_times.size()
            << " depth frames written to " << output << '\n';
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, double rpe_dt,
             double max_dt, const std::string& dump) {
  const devo::eval::Trajectory est = devo::io::read_trajectory(est_path);
  const devo::eval::Trajectory gt = devo::io::read_trajectory(gt_path);
  const devo::eval::AteResult a = devo::eval::ate(est, gt, max_dt);
  const devo::eval::RpeResult r = devo::eval::rpe(est, gt, rpe_dt, max_dt);
  std::printf("R_rpe_deg_s,t_rpe_cm_s,t_ate_cm\n%.6f,%.6f,%.6f\n", r.r_rpe_deg_s, r.t_rpe_cm_s,
              a.rmse_cm);
  if (!dump.empty()) {
    std::ofstream out(dump);
    if (!out) throw devo::Error("cannot write " + dump);
    out << "t_start_s,dt_s,rot_deg_s,trans_cm_s\n";
    char buf[160];
    for (const devo::eval::RpeInterval& iv : r.intervals) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.9f,%.9f\n", iv.t_start, iv.dt, iv.rot_deg_s,
                    iv.trans_cm_s);
      out << buf;
    }
  }
  return 0;
}

/// Copies a synth-format dataset, optionally dropping depth frames to a lower rate.
int cmd_convert(const std::string& input, const std::string& output, double depth_rate) {
  const devo::io::Dataset ds = devo::io::load_dataset(input);
  fs::create_directories(fs::path(output) / "depth");
  devo::io::DatasetManifest m{output, fs::path(output) / "events.txt",
                              fs::path(output) / "depth.txt", fs::path(output) / "calib.json",
                              std::nullopt};
  fs::copy_file(ds.manifest.events, m.events, fs::copy_options::overwrite_existing);
  fs::copy_file(ds.manifest.calibration, m.calibration, fs::copy_options::overwrite_existing);
  if (ds.manifest.groundtruth) {
    m.groundtruth = fs::path(output) / "groundtruth.txt";
    fs::copy_file(*ds.manifest.groundtruth, *m.groundtruth, fs::copy_options::overwrite_existing);
  }
  const std::vector<devo::io::DepthIndexEntry> in_index =
      devo::io::read_depth_index(ds.manifest.depth_index);
  std::vector<devo::TimeUs> times;
  for (const auto& e : in_index) times.push_back(e.t);
  if (depth_rate > 0.0) times = devo::synth::decimate_times(times, depth_rate);
  std::vector<devo::io::DepthIndexEntry> out_index;
  std::size_t k = 0;
  for (const auto& e : in_index) {
    if (k < times.size() && times[k] == e.t) {
      const fs::path dst = fs::path(output) / e.file;
      fs::create_directories(dst.parent_path());
      fs::copy_file(ds.manifest.depth_index.parent_path() / e.file, dst,
                    fs::copy_options::overwrite_existing);
      out_index.push_back(e);
      ++k;
    }
  }
  devo::io::write_depth_index(m.depth_index, out_index);
  devo::io::write_manifest(m);
  std::cerr << "devo convert: " << out_index.size() << " depth frames kept\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  devo::init_logging_from_env();
  CLI::App app{"Depth-event visual odometry"};
  app.require_subcommand(1);

  std::string dataset, config, output = "out";
  bool deterministic = false;
  CLI::App* run = app.add_subcommand("run", "Track a dataset and write trajectory + diagnostics");
  run->add_option("--dataset", dataset, "Dataset root containing dataset.json")->required();
  run->add_option("--config", config, "Pipeline configuration JSON");
  run->add_option("--output", output, "Output directory")->capture_default_str();
  run->add_flag("--deterministic", deterministic, "Single worker, byte-reproducible output");

  devo::synth::ScenarioConfig scenario;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Generate a constant-velocity synthetic dataset");
  synth->add_option("--output", synth_out, "Dataset directory")->required();
  synth->add_option("--seed", scenario.noise.seed, "Event noise seed")->capture_default_str();
  synth->add_option("--scene-seed", scenario.scene_seed, "Scene layout seed")->capture_default_str();
  synth->add_option("--duration", scenario.duration_s, "Seconds")->capture_default_str();
  synth->add_option("--depth-rate", scenario.depth_rate_hz, "Depth frames per second")
      ->capture_default_str();
  synth->add_option("--jitter", scenario.noise.jitter_sigma, "Event location noise (px)")
      ->capture_default_str();

  std::string est, gt, dump;
  double rpe_dt = devo::eval::kDefaultRpeDt, max_dt = devo::eval::kDefaultMaxDt;
  CLI::App* ev = app.add_subcommand("eval", "Compare an estimated trajectory with ground truth");
  ev->add_option("--est", est, "Estimated trajectory")->required();
  ev->add_option("--gt", gt, "Ground-truth trajectory")->required();
  ev->add_option("--rpe-dt", rpe_dt, "RPE interval (s)")->capture_default_str();
  ev->add_option("--max-dt", max_dt, "Association tolerance (s)")->capture_default_str();
  ev->add_option("--dump", dump, "Per-interval RPE CSV");

  std::string conv_in, conv_out;
  double conv_rate = 0.0;
  CLI::App* conv = app.add_subcommand("convert", "Rewrite a synth-format dataset");
  conv->add_option("--input", conv_in, "Source dataset root")->required();
  conv->add_option("--output", conv_out, "Destination dataset root")->required();
  conv->add_option("--depth-rate", conv_rate, "Decimate depth to this rate (Hz)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(dataset, config, output, deterministic);
    if (*synth) return cmd_synth(synth_out, scenario);
    if (*ev) return cmd_eval(est, gt, rpe_dt, max_dt, dump);
    if (*conv) return cmd_convert(conv_in, conv_out, conv_rate);
  } catch (const devo::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return devo::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return devo::kExitDataset;
  }
  return 1;
}
