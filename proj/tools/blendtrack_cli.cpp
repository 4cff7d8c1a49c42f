#include "blendtrack/blendtrack.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct RunFlags {
  std::string data;
  std::string config;
  std::string model;
  std::string test_subject;
  std::string mesh;
  double icd_mm = 32.0;
  std::vector<double> fractions;
  std::string out;

  btrk_run_options options() const {
    btrk_run_options o;
    btrk_run_options_init(&o);
    auto opt = [](const std::string& s) { return s.empty() ? nullptr : s.c_str(); };
    o.data_dir = opt(data);
    o.config_path = opt(config);
    o.model_path = opt(model);
    o.test_subject = opt(test_subject);
    o.mesh_path = opt(mesh);
    o.icd_mm = icd_mm;
    o.fractions = fractions.empty() ? nullptr : fractions.data();
    o.fraction_count = fractions.size();
    o.out = opt(out);
    return o;
  }
};

int finish(btrk_status status, btrk_report** slot) {
  if (status != BTRK_OK) {
    const nlohmann::ordered_json err{
        {"schema", "btrk/1"},
        {"error", {{"category", btrk_status_name(status)}, {"message", btrk_last_error()}}}};
    std::cout << err.dump(2) << '\n';
    return kExitFailure;
  }
  btrk_report* report = *slot;
  std::cout << btrk_report_summary(report) << '\n';
  btrk_report_destroy(report);
  return 0;
}

void add_data_flags(CLI::App* cmd, RunFlags& f, bool needs_subject) {
  cmd->add_option("--data", f.data, "Dataset root containing manifest.json")->required();
  cmd->add_option("--config", f.config, "Training configuration JSON");
  auto* subject = cmd->add_option("--test-subject", f.test_subject, "Held-out subject id");
  if (needs_subject) subject->required();
}

void add_mesh_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--mesh", f.mesh, "Face mesh file (built-in reference mesh when omitted)");
  cmd->add_option("--icd-mm", f.icd_mm, "Inner canthal distance in millimeters")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blend-shape regression from side-view face cameras"};
  app.set_version_flag("--version", btrk_version());
  app.require_subcommand(1);

  btrk_synth_options synth;
  btrk_synth_options_init(&synth);
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic recording study");
  synth_cmd->add_option("--subjects", synth.subjects, "Number of subjects")->capture_default_str();
  synth_cmd->add_option("--clips", synth.clips_per_location, "Clips per location")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Master seed")->capture_default_str();
  synth_cmd->add_option("--duration-s", synth.duration_s, "Clip duration in seconds")->capture_default_str();
  synth_cmd->add_option("--clock-offset-ms", synth.clock_offset_ms, "Label clock minus frame clock")
      ->capture_default_str();
  synth_cmd->add_option("--image-size", synth.image_size, "Square image size in pixels")->capture_default_str();
  synth_cmd->add_option("--invalid-fraction", synth.invalid_fraction, "Fraction of invalid label records")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output dataset directory")->required();

  RunFlags sync;
  auto* sync_cmd = app.add_subcommand("sync", "Estimate clock offsets and report cleaning counts");
  add_data_flags(sync_cmd, sync, false);
  sync_cmd->add_option("--out", sync.out, "Output JSON report")->required();

  RunFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train a user-independent model");
  add_data_flags(train_cmd, train, true);
  add_mesh_flags(train_cmd, train);
  train_cmd->add_option("--out", train.out, "Output run directory")->required();

  RunFlags calib;
  auto* calib_cmd = app.add_subcommand("calibrate", "Fine-tune a model on a short clip of the test subject");
  calib_cmd->add_option("--model", calib.model, "Base model weights")->required();
  add_data_flags(calib_cmd, calib, true);
  add_mesh_flags(calib_cmd, calib);
  calib_cmd->add_option("--out", calib.out, "Output run directory")->required();

  RunFlags curve;
  auto* curve_cmd = app.add_subcommand("curve", "Error versus amount of calibration data");
  curve_cmd->add_option("--model", curve.model, "Base model weights")->required();
  add_data_flags(curve_cmd, curve, true);
  add_mesh_flags(curve_cmd, curve);
  curve_cmd->add_option("--fractions", curve.fractions, "Calibration fractions, ascending in (0, 1]")
      ->delimiter(',');
  curve_cmd->add_option("--out", curve.out, "Output JSON report")->required();

  RunFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model");
  eval_cmd->add_option("--model", eval.model, "Model weights")->required();
  add_data_flags(eval_cmd, eval, false);
  add_mesh_flags(eval_cmd, eval);
  eval_cmd->add_option("--out", eval.out, "Output JSON report")->required();

  btrk_bench_options bench;
  btrk_bench_options_init(&bench);
  std::string bench_model;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench", "Measure per-pair inference latency");
  bench_cmd->add_option("--model", bench_model, "Model weights (fresh model when omitted)");
  bench_cmd->add_option("--pairs", bench.pairs, "Image pairs to time")->capture_default_str()->check(
      CLI::PositiveNumber);
  bench_cmd->add_option("--image-size", bench.image_size, "Square image size for a fresh model")
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Seed for input images and fresh weights")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Output JSON report")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  btrk_report* report = nullptr;
  if (synth_cmd->parsed()) {
    synth.out_dir = synth_out.c_str();
    return finish(btrk_cmd_synth(&synth, &report), &report);
  }
  if (sync_cmd->parsed()) {
    const auto o = sync.options();
    return finish(btrk_cmd_sync(&o, &report), &report);
  }
  if (train_cmd->parsed()) {
    const auto o = train.options();
    return finish(btrk_cmd_train(&o, &report), &report);
  }
  if (calib_cmd->parsed()) {
    const auto o = calib.options();
    return finish(btrk_cmd_calibrate(&o, &report), &report);
  }
  if (curve_cmd->parsed()) {
    const auto o = curve.options();
    return finish(btrk_cmd_curve(&o, &report), &report);
  }
  if (eval_cmd->parsed()) {
    const auto o = eval.options();
    return finish(btrk_cmd_eval(&o, &report), &report);
  }
  if (bench_cmd->parsed()) {
    bench.model_path = bench_model.empty() ? nullptr : bench_model.c_str();
    bench.out = bench_out.c_str();
    return finish(btrk_cmd_bench(&bench, &report), &report);
  }
  return kExitUsage;
}
