#include "blendtrack/commands.hpp"

#include "blendtrack/bench.hpp"
#include "blendtrack/reports.hpp"
#include "blendtrack/synth.hpp"
#include "blendtrack/training.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace blendtrack {

namespace fs = std::filesystem;

namespace {

void write_json(const Json& doc, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::Io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorCategory::Io, "write failed for " + path.string());
}

CommandOutput finish(const Json& doc, const fs::path& path, std::string summary) {
  write_json(doc, path);
  return {doc.dump(2), std::move(summary)};
}

TrainConfig load_config(const std::optional<fs::path>& path) {
  TrainConfig config = path ? load_train_config(*path) : TrainConfig{};
  apply_seed_override(config);
  return config;
}

FaceMesh load_mesh_option(const MeshOptions& opt) {
  return opt.mesh ? load_mesh(*opt.mesh) : make_reference_mesh();
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

ProvenanceCounts evaluation_counts(const Dataset& dataset, const std::vector<ClipKey>& clips) {
  ProvenanceCounts counts;
  for (const auto& key : clips) counts[key] = 2 * dataset.clip(key).pairs.size();
  return counts;
}

Json maybe_evaluate(const nn::RegressorModel& model, const Dataset& dataset, const std::vector<ClipKey>& clips,
                    const FaceMesh& mesh, const MeshOptions& opt, std::optional<double>* overall) {
  if (clips.empty()) return nullptr;
  const Evaluation ev = evaluate(model, dataset, clips, mesh, canthal_scale(mesh, opt.icd_mm));
  if (overall) *overall = ev.vertex.overall_mean_mm;
  return evaluation_json(ev, opt.icd_mm);
}

Json base_header(const char* kind, const TrainConfig& config) {
  return Json{{"schema", kSchema},
              {"kind", kind},
              {"config", Json::parse(train_config_json(config))},
              {"config_hash", config_hash(config)},
              {"seed", config.seed}};
}

}  // namespace

CommandOutput run_synth(const SynthCommand& cmd) {
  synth::StudyConfig sc;
  sc.n_subjects = cmd.subjects;
  sc.clips_per_location = cmd.clips_per_location;
  sc.seed = cmd.seed;
  sc.clip.duration_s = cmd.duration_s;
  sc.clip.clock_offset_ms = cmd.clock_offset_ms;
  sc.clip.image_size = cmd.image_size;
  sc.clip.invalid_fraction = cmd.invalid_fraction;
  if (cmd.image_size < 16) fail(ErrorCategory::InvalidArgument, "image size must be at least 16");
  const synth::StudyPlan plan = synth::plan_study(sc);
  const RecordingManifest manifest = synth::write_study(plan, cmd.out_dir);

  Json clips = Json::array();
  for (const auto& c : manifest.clips) clips.push_back(clip_key_json(c.key));
  const Json doc{{"schema", kSchema},
                 {"kind", "synth"},
                 {"subjects", cmd.subjects},
                 {"clips_per_location", cmd.clips_per_location},
                 {"seed", cmd.seed},
                 {"duration_s", cmd.duration_s},
                 {"clock_offset_ms", cmd.clock_offset_ms},
                 {"image_size", cmd.image_size},
                 {"invalid_fraction", cmd.invalid_fraction},
                 {"manifest", "manifest.json"},
                 {"clips", std::move(clips)}};
  return finish(doc, cmd.out_dir / "synth.json",
                "synth: " + std::to_string(manifest.clips.size()) + " clips for " + std::to_string(cmd.subjects) +
                    " subjects written to " + cmd.out_dir.string());
}

CommandOutput run_sync(const SyncCommand& cmd) {
  const TrainConfig config = load_config(cmd.config);
  const RecordingManifest manifest = load_manifest(cmd.data_dir);
  PipelineConfig pipeline = config.pipeline();
  pipeline.eye_region = manifest.eye_region;
  Json clips = Json::array();
  std::vector<std::int64_t> offsets;
  for (const auto& entry : manifest.clips) {
    const PreparedClip prepared = prepare_recording(load_recording(entry, cmd.data_dir), pipeline);
    offsets.push_back(prepared.sync.offset_ms);
    clips.push_back(sync_report_json(prepared.sync));
  }
  if (offsets.empty()) fail(ErrorCategory::Data, "manifest lists no clips");
  std::sort(offsets.begin(), offsets.end());
  const std::size_t mid = offsets.size() / 2;
  const double median = offsets.size() % 2 == 1 ? static_cast<double>(offsets[mid])
                                                 : 0.5 * static_cast<double>(offsets[mid - 1] + offsets[mid]);
  const Json doc{{"schema", kSchema},
                 {"kind", "sync"},
                 {"offset_ms", median},
                 {"match_tolerance_ms", config.match_tolerance_ms},
                 {"offset_search_ms", config.offset_search_ms},
                 {"warnings", manifest.warnings},
                 {"clips", std::move(clips)}};
  return finish(doc, cmd.out, "sync: median offset " + fmt("%.1f", median) + " ms over " +
                                  std::to_string(offsets.size()) + " clips");
}

CommandOutput run_train(const TrainCommand& cmd) {
  const TrainConfig config = load_config(cmd.config);
  const FaceMesh mesh = load_mesh_option(cmd.mesh);
  const Dataset dataset = load_dataset(cmd.data_dir, config.pipeline());
  const SplitPlan split = make_split(dataset, cmd.test_subject, config.seed);
  const IndependentResult result = train_user_independent(dataset, config, split);
  fs::create_directories(cmd.out_dir);
  nn::save_weights(result.model, cmd.out_dir / kModelFileName);

  const auto held_out = dataset.clips_of(cmd.test_subject);
  std::optional<double> overall;
  Json doc = base_header("train", config);
  doc["model_file"] = kModelFileName;
  doc["split"] = split_json(split);
  doc["provenance"] = {{"independent_training", provenance_json(result.provenance)},
                       {"evaluation", provenance_json(evaluation_counts(dataset, held_out))}};
  doc["metrics"] = {{"epoch_losses", result.epoch_losses},
                    {"held_out", maybe_evaluate(result.model, dataset, held_out, mesh, cmd.mesh, &overall)}};
  return finish(doc, cmd.out_dir / kRunManifestName,
                "train: held-out subject " + cmd.test_subject + " overall error " + fmt("%.3f", *overall) +
                    " mm; model written to " + (cmd.out_dir / kModelFileName).string());
}

CommandOutput run_calibrate(const CalibrateCommand& cmd) {
  const TrainConfig config = load_config(cmd.config);
  const FaceMesh mesh = load_mesh_option(cmd.mesh);
  const nn::RegressorModel base = nn::load_weights(cmd.model);
  const Dataset dataset = load_dataset(cmd.data_dir, config.pipeline());
  const SplitPlan split = make_split(dataset, cmd.test_subject, config.seed);
  const CalibrationResult result = calibrate(base, dataset, config, split);
  fs::create_directories(cmd.out_dir);
  nn::save_weights(result.model, cmd.out_dir / kModelFileName);

  Json doc = base_header("calibrate", config);
  doc["model_file"] = kModelFileName;
  doc["base_model"] = cmd.model.generic_string();
  doc["split"] = split_json(split);
  Json provenance = Json::object();
  const fs::path base_manifest = cmd.model.parent_path() / kRunManifestName;
  if (fs::exists(base_manifest)) {
    std::ifstream in(base_manifest);
    try {
      const Json base_doc = Json::parse(in);
      if (base_doc.contains("provenance") && base_doc["provenance"].contains("independent_training"))
        provenance["independent_training"] = base_doc["provenance"]["independent_training"];
    } catch (const Json::exception& e) {
      fail(ErrorCategory::Parse, base_manifest.string() + ": " + e.what());
    }
  }
  provenance["calibration"] = provenance_json(result.provenance);
  provenance["evaluation"] = provenance_json(evaluation_counts(dataset, split.evaluation_clips()));
  doc["provenance"] = std::move(provenance);

  Json metrics = Json::object();
  std::string summary = "calibrate: " + std::to_string(result.calibration_frames) + " frames (" +
                        fmt("%.1f", result.seconds) + " s) from " + split.calibration_clip.to_string();
  for (const auto& [name, clips] : {std::pair{"same_location", split.same_location},
                                    std::pair{"another_location", split.another_location}}) {
    std::optional<double> ind;
    std::optional<double> cal;
    Json part{{"independent", maybe_evaluate(base, dataset, clips, mesh, cmd.mesh, &ind)},
              {"calibrated", maybe_evaluate(result.model, dataset, clips, mesh, cmd.mesh, &cal)}};
    part["improvement"] = ind && cal ? Json(improvement_ratio(*ind, *cal)) : Json(nullptr);
    if (ind && cal) summary += "; " + std::string(name) + " " + fmt("%.3f", *ind) + " -> " + fmt("%.3f", *cal) + " mm";
    metrics[name] = std::move(part);
  }
  metrics["calibration"] = {{"calibration_frames", result.calibration_frames},
                            {"calibration_samples", result.calibration_samples},
                            {"pool_samples", result.pool_samples},
                            {"seconds", result.seconds},
                            {"epoch_losses", result.epoch_losses}};
  doc["metrics"] = std::move(metrics);
  return finish(doc, cmd.out_dir / kRunManifestName, summary);
}

CommandOutput run_curve(const CurveCommand& cmd) {
  const TrainConfig config = load_config(cmd.config);
  const FaceMesh mesh = load_mesh_option(cmd.mesh);
  const MmScale scale = canthal_scale(mesh, cmd.mesh.icd_mm);
  const nn::RegressorModel base = nn::load_weights(cmd.model);
  const Dataset dataset = load_dataset(cmd.data_dir, config.pipeline());
  const SplitPlan split = make_split(dataset, cmd.test_subject, config.seed);
  const auto eval_clips = split.evaluation_clips();
  if (eval_clips.empty())
    fail(ErrorCategory::Data, "test subject " + cmd.test_subject + " has no clips besides the calibration clip");
  const auto points = calibration_curve(base, dataset, config, split, cmd.fractions, mesh, scale);
  const Evaluation independent = evaluate(base, dataset, eval_clips, mesh, scale);

  Json list = Json::array();
  std::string summary = "curve:";
  for (const auto& p : points) {
    list.push_back({{"fraction", p.fraction},
                    {"seconds", p.seconds},
                    {"seed", p.seed},
                    {"overall_mean_mm", p.evaluation.vertex.overall_mean_mm},
                    {"eye_mean_mm", p.evaluation.vertex.eye_mean_mm},
                    {"mouth_mean_mm", p.evaluation.vertex.mouth_mean_mm}});
    summary += " " + fmt("%.2f", p.fraction) + "->" + fmt("%.3f", p.evaluation.vertex.overall_mean_mm) + "mm";
  }
  Json doc = base_header("curve", config);
  doc["split"] = split_json(split);
  doc["icd_mm"] = cmd.mesh.icd_mm;
  doc["independent_overall_mean_mm"] = independent.vertex.overall_mean_mm;
  doc["points"] = std::move(list);
  return finish(doc, cmd.out, summary);
}

CommandOutput run_eval(const EvalCommand& cmd) {
  const TrainConfig config = load_config(cmd.config);
  const FaceMesh mesh = load_mesh_option(cmd.mesh);
  const nn::RegressorModel model = nn::load_weights(cmd.model);
  const Dataset dataset = load_dataset(cmd.data_dir, config.pipeline());
  std::vector<ClipKey> clips;
  if (cmd.test_subject) {
    clips = dataset.clips_of(*cmd.test_subject);
    if (clips.empty()) fail(ErrorCategory::Data, "subject '" + *cmd.test_subject + "' not in dataset");
  } else {
    for (const auto& c : dataset.clips()) clips.push_back(c.key);
  }
  const Evaluation ev = evaluate(model, dataset, clips, mesh, canthal_scale(mesh, cmd.mesh.icd_mm));
  Json keys = Json::array();
  for (const auto& k : clips) keys.push_back(clip_key_json(k));
  Json doc{{"schema", kSchema}, {"kind", "eval"}, {"pairs", ev.pairs}, {"clips", std::move(keys)}};
  doc.update(evaluation_json(ev, cmd.mesh.icd_mm));
  return finish(doc, cmd.out,
                "eval: " + std::to_string(ev.pairs) + " pairs, overall " + fmt("%.3f", ev.vertex.overall_mean_mm) +
                    " mm (eye " + fmt("%.3f", ev.vertex.eye_mean_mm) + ", mouth " +
                    fmt("%.3f", ev.vertex.mouth_mean_mm) + ")");
}

CommandOutput run_bench(const BenchCommand& cmd) {
  const nn::RegressorModel model =
      cmd.model ? nn::load_weights(*cmd.model) : nn::RegressorModel::create({cmd.image_size, cmd.image_size}, cmd.seed);
  const BenchReport report = bench_forward(model, cmd.pairs, cmd.seed);
  return finish(bench_json(report), cmd.out,
                "bench: " + fmt("%.3f", report.mean_ms_per_pair) + " ms/pair (" + fmt("%.1f", report.expected_fps) +
                    " fps) over " + std::to_string(report.pairs_measured) + " pairs");
}

}  // namespace blendtrack
