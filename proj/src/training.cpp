#include "blendtrack/training.hpp"

#include "blendtrack/error.hpp"
#include "blendtrack/parallel.hpp"
#include "blendtrack/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace blendtrack {

using nlohmann::json;

// --- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  const auto bad = [](const std::string& what) { fail(ErrorCategory::InvalidArgument, "train config: " + what); };
  if (epochs_independent < 1 || epochs_calibration < 1) bad("epochs must be at least 1");
  if (!(calibration_fraction > 0.0 && calibration_fraction <= 1.0)) bad("calibration_fraction must lie in (0, 1]");
  if (batch_size < 1) bad("batch_size must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be finite and >= 0");
  if (!(loss_base > 0.0) || !std::isfinite(loss_base)) bad("loss_base must be finite and > 0");
  if (!(augment.gain_range.lo > 0.0 && augment.gain_range.lo <= augment.gain_range.hi))
    bad("augment.gain_range must satisfy 0 < lo <= hi");
  if (input_size.height < 8 || input_size.width < 8) bad("input_size must be at least 8x8");
  if (match_tolerance_ms < 0 || offset_search_ms < 0) bad("tolerances must be non-negative");
}

PipelineConfig TrainConfig::pipeline() const {
  PipelineConfig p;
  p.match_tolerance_ms = match_tolerance_ms;
  p.offset_search_ms = offset_search_ms;
  return p;
}

namespace {

json config_to_json(const TrainConfig& c) {
  return json{{"epochs_independent", c.epochs_independent},
              {"epochs_calibration", c.epochs_calibration},
              {"calibration_fraction", c.calibration_fraction},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"loss_base", c.loss_base},
              {"augment", {{"enabled", c.augment.enabled}, {"gain_range", {c.augment.gain_range.lo, c.augment.gain_range.hi}}}},
              {"input_size", {c.input_size.height, c.input_size.width}},
              {"match_tolerance_ms", c.match_tolerance_ms},
              {"offset_search_ms", c.offset_search_ms}};
}

}  // namespace

TrainConfig parse_train_config(std::string_view json_text, const std::string& source) {
  TrainConfig c;
  try {
    const json doc = json::parse(json_text);
    if (!doc.is_object()) fail(ErrorCategory::Parse, source + ": config must be a JSON object");
    static const std::set<std::string> known{"epochs_independent", "epochs_calibration", "calibration_fraction",
                                             "batch_size", "learning_rate", "seed", "loss_base", "augment",
                                             "input_size", "match_tolerance_ms", "offset_search_ms", "schema"};
    for (const auto& [key, value] : doc.items()) {
      if (!known.contains(key)) fail(ErrorCategory::Parse, source + ": unknown config key '" + key + "'");
    }
    const auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) doc.at(key).get_to(field);
    };
    get("epochs_independent", c.epochs_independent);
    get("epochs_calibration", c.epochs_calibration);
    get("calibration_fraction", c.calibration_fraction);
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("seed", c.seed);
    get("loss_base", c.loss_base);
    get("match_tolerance_ms", c.match_tolerance_ms);
    get("offset_search_ms", c.offset_search_ms);
    if (doc.contains("augment")) {
      const auto& a = doc.at("augment");
      if (a.contains("enabled")) a.at("enabled").get_to(c.augment.enabled);
      if (a.contains("gain_range")) {
        const auto& r = a.at("gain_range");
        if (!r.is_array() || r.size() != 2) fail(ErrorCategory::Parse, source + ": augment.gain_range must be [lo, hi]");
        c.augment.gain_range = {r[0].get<double>(), r[1].get<double>()};
      }
    }
    if (doc.contains("input_size")) {
      const auto& s = doc.at("input_size");
      if (!s.is_array() || s.size() != 2) fail(ErrorCategory::Parse, source + ": input_size must be [height, width]");
      c.input_size = {s[0].get<std::size_t>(), s[1].get<std::size_t>()};
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::Parse, source + ": " + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str(), path.string());
}

std::string train_config_json(const TrainConfig& config) { return config_to_json(config).dump(); }

std::string config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : train_config_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_seed_override(TrainConfig& config) {
  const char* value = std::getenv(kSeedEnvVar);
  if (value == nullptr || *value == '\0') return;
  const std::string s(value);
  std::size_t used = 0;
  unsigned long long seed = 0;
  try {
    seed = std::stoull(s, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.front() == '-')
    fail(ErrorCategory::Parse, std::string(kSeedEnvVar) + " must be a non-negative integer, got '" + s + "'");
  config.seed = seed;
}

// --- dataset -----------------------------------------------------------------

Dataset::Dataset(std::vector<PreparedClip> clips) : clips_(std::move(clips)) {
  std::set<ClipKey> seen;
  for (const auto& c : clips_) {
    if (!seen.insert(c.key).second) fail(ErrorCategory::Data, "duplicate clip " + c.key.to_string());
  }
}

const PreparedClip& Dataset::clip(const ClipKey& key) const {
  for (const auto& c : clips_) {
    if (c.key == key) return c;
  }
  fail(ErrorCategory::Data, "clip " + key.to_string() + " not in dataset");
}

std::vector<std::string> Dataset::subjects() const {
  std::vector<std::string> out;
  for (const auto& c : clips_) {
    if (std::find(out.begin(), out.end(), c.key.subject_id) == out.end()) out.push_back(c.key.subject_id);
  }
  return out;
}

std::vector<ClipKey> Dataset::clips_of(std::string_view subject) const {
  std::vector<ClipKey> out;
  for (const auto& c : clips_) {
    if (c.key.subject_id == subject) out.push_back(c.key);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dataset_dir, const PipelineConfig& pipeline) {
  const RecordingManifest manifest = load_manifest(dataset_dir);
  PipelineConfig cfg = pipeline;
  if (!cfg.eye_region) cfg.eye_region = manifest.eye_region;
  std::vector<PreparedClip> clips(manifest.clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    clips[i] = prepare_recording(load_recording(manifest.clips[i], dataset_dir), cfg);
  });
  return Dataset(std::move(clips));
}

// --- splits ------------------------------------------------------------------

namespace {

enum Stream : std::uint64_t {
  kSplitStream = 0x5101,
  kInitStream = 0x5102,
  kIndependentStream = 0x5103,
  kCalibrationSelectStream = 0x5104,
  kCalibrationTrainStream = 0x5105,
  kCurveStream = 0xC000,
};

}  // namespace

std::vector<ClipKey> SplitPlan::evaluation_clips() const {
  std::vector<ClipKey> out = same_location;
  out.insert(out.end(), another_location.begin(), another_location.end());
  return out;
}

SplitPlan make_split(const Dataset& dataset, const std::string& test_subject, std::uint64_t seed) {
  const auto subjects = dataset.subjects();
  if (std::find(subjects.begin(), subjects.end(), test_subject) == subjects.end())
    fail(ErrorCategory::Data, "test subject '" + test_subject + "' not in dataset");
  SplitPlan plan;
  plan.test_subject = test_subject;
  for (const auto& s : subjects) {
    if (s != test_subject) plan.training_subjects.push_back(s);
  }
  if (plan.training_subjects.empty()) fail(ErrorCategory::Data, "no training subjects besides the test subject");
  const auto clips = dataset.clips_of(test_subject);
  Rng rng(derive_seed(seed, kSplitStream));
  plan.calibration_clip = clips[rng.index(clips.size())];
  for (const auto& key : clips) {
    if (key == plan.calibration_clip) continue;
    (key.location == plan.calibration_clip.location ? plan.same_location : plan.another_location).push_back(key);
  }
  return plan;
}

// --- training loops ----------------------------------------------------------

namespace {

void shuffle(std::vector<const SyncedSample*>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.index(i)]);
}

// First k items of a seeded partial Fisher-Yates shuffle.
template <class T>
std::vector<T> draw_without_replacement(std::vector<T> items, std::size_t k, Rng& rng) {
  k = std::min(k, items.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(items[i], items[i + rng.index(items.size() - i)]);
  items.resize(k);
  return items;
}

ImageTensor model_input(const RgbImage& image, const nn::InputSpec& spec) {
  return resize_normalize(image, spec.height, spec.width);
}

std::vector<double> run_epochs(nn::RegressorModel& model, std::vector<const SyncedSample*> pool, int epochs,
                               const TrainConfig& config, std::uint64_t seed) {
  if (pool.empty()) fail(ErrorCategory::Data, "training set is empty");
  nn::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  nn::OptimizerState state = nn::OptimizerState::for_model(model, adam);
  Rng order_rng(derive_seed(seed, 0));
  const nn::InputSpec spec = model.input_spec();
  std::vector<double> losses;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle(pool, order_rng);
    const std::uint64_t epoch_seed = derive_seed(seed, static_cast<std::uint64_t>(epoch) + 1);
    double total = 0.0;
    for (std::size_t start = 0; start < pool.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, pool.size() - start);
      std::vector<ImageTensor> images;
      images.reserve(n);
      nn::Tensor labels({n, kHalfFaceCount});
      for (std::size_t i = 0; i < n; ++i) {
        const SyncedSample& s = *pool[start + i];
        ImageTensor img = model_input(s.image, spec);
        if (config.augment.enabled)
          img = white_balance_jitter(img, derive_seed(epoch_seed, start + i), config.augment.gain_range);
        images.push_back(std::move(img));
        for (std::size_t k = 0; k < kHalfFaceCount; ++k) labels[i * kHalfFaceCount + k] = s.target[k];
      }
      total += nn::train_step(model, state, nn::make_batch(images), labels, config.loss_base) * static_cast<double>(n);
    }
    losses.push_back(total / static_cast<double>(pool.size()));
  }
  return losses;
}

void count(ProvenanceCounts& counts, const std::vector<const SyncedSample*>& samples) {
  for (const auto* s : samples) ++counts[s->provenance.clip];
}

std::vector<const SyncedSample*> training_pool(const Dataset& dataset, const SplitPlan& split) {
  std::vector<const SyncedSample*> pool;
  for (const auto& clip : dataset.clips()) {
    if (std::find(split.training_subjects.begin(), split.training_subjects.end(), clip.key.subject_id) ==
        split.training_subjects.end())
      continue;
    for (const auto& s : clip.samples) pool.push_back(&s);
  }
  return pool;
}

}  // namespace

IndependentResult train_user_independent(const Dataset& dataset, const TrainConfig& config, const SplitPlan& split) {
  config.validate();
  const auto pool = training_pool(dataset, split);
  if (pool.empty()) fail(ErrorCategory::Data, "user-independent training set is empty");
  IndependentResult result{nn::RegressorModel::create(config.input_size, derive_seed(config.seed, kInitStream)), {}, {}};
  count(result.provenance, pool);
  result.epoch_losses =
      run_epochs(result.model, pool, config.epochs_independent, config, derive_seed(config.seed, kIndependentStream));
  return result;
}

CalibrationResult calibrate(const nn::RegressorModel& base, const Dataset& dataset, const TrainConfig& config,
                            const SplitPlan& split) {
  config.validate();
  if (base.input_spec() != config.input_size)
    fail(ErrorCategory::InvalidArgument, "base model input size differs from config input_size");
  const PreparedClip& clip = dataset.clip(split.calibration_clip);
  std::vector<std::size_t> instants;
  for (const auto& s : clip.samples) instants.push_back(s.provenance.seq_index);
  std::sort(instants.begin(), instants.end());
  instants.erase(std::unique(instants.begin(), instants.end()), instants.end());
  if (instants.empty()) fail(ErrorCategory::Data, "calibration clip " + clip.key.to_string() + " has no samples");

  Rng select_rng(derive_seed(config.seed, kCalibrationSelectStream));
  const auto n_frames = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.calibration_fraction * static_cast<double>(instants.size()))));
  const auto chosen = draw_without_replacement(instants, n_frames, select_rng);
  const std::set<std::size_t> chosen_set(chosen.begin(), chosen.end());

  std::vector<const SyncedSample*> mixed;
  for (const auto& s : clip.samples) {
    if (chosen_set.contains(s.provenance.seq_index)) mixed.push_back(&s);
  }
  const std::size_t n_calibration = mixed.size();
  const auto pool = training_pool(dataset, split);
  if (pool.size() < n_calibration)
    fail(ErrorCategory::Data, "training pool smaller than the calibration set; cannot form a 50/50 mix");
  const auto drawn = draw_without_replacement(pool, n_calibration, select_rng);
  mixed.insert(mixed.end(), drawn.begin(), drawn.end());

  CalibrationResult result{base, {}, {}, chosen.size(), n_calibration, drawn.size(),
                           config.calibration_fraction * clip.duration_s};
  count(result.provenance, mixed);
  result.epoch_losses =
      run_epochs(result.model, mixed, config.epochs_calibration, config, derive_seed(config.seed, kCalibrationTrainStream));
  return result;
}

// --- inference and evaluation ------------------------------------------------

std::vector<BlendShapeVector> predict_oriented_pairs(const nn::RegressorModel& model,
                                                     std::span<const RgbImage* const> left_flipped,
                                                     std::span<const RgbImage* const> right) {
  if (left_flipped.size() != right.size())
    fail(ErrorCategory::InvalidArgument, "predict: left and right image counts differ");
  const nn::InputSpec spec = model.input_spec();
  std::vector<ImageTensor> images;
  images.reserve(2 * right.size());
  for (std::size_t i = 0; i < right.size(); ++i) {
    if (left_flipped[i]->height != right[i]->height || left_flipped[i]->width != right[i]->width)
      fail(ErrorCategory::InvalidArgument, "predict: left and right images differ in size");
    images.push_back(model_input(*left_flipped[i], spec));
    images.push_back(model_input(*right[i], spec));
  }
  std::vector<BlendShapeVector> out;
  if (images.empty()) return out;
  const nn::Tensor output = model.forward(nn::make_batch(images));
  for (std::size_t i = 0; i < right.size(); ++i) {
    const std::span<const double, kHalfFaceCount> l(output.data() + (2 * i) * kHalfFaceCount, kHalfFaceCount);
    const std::span<const double, kHalfFaceCount> r(output.data() + (2 * i + 1) * kHalfFaceCount, kHalfFaceCount);
    out.push_back(merge_half_predictions(half_prediction_from_output(l, Side::Left),
                                         half_prediction_from_output(r, Side::Right)));
  }
  return out;
}

BlendShapeVector predict_full_face(const nn::RegressorModel& model, const RgbImage& left, const RgbImage& right) {
  if (left.empty() || right.empty()) fail(ErrorCategory::InvalidArgument, "predict: empty image");
  const RgbImage flipped = flip_horizontal(left);
  const RgbImage* l = &flipped;
  const RgbImage* r = &right;
  return predict_oriented_pairs(model, std::span(&l, 1), std::span(&r, 1)).front();
}

Evaluation evaluate(const nn::RegressorModel& model, const Dataset& dataset, std::span<const ClipKey> clips,
                    const FaceMesh& mesh, MmScale scale) {
  constexpr std::size_t kChunk = 64;
  std::vector<VertexErrors> errors;
  std::vector<std::string> groups;
  std::vector<BlendShapeVector> preds;
  std::vector<BlendShapeVector> labels;
  for (const ClipKey& key : clips) {
    const PreparedClip& clip = dataset.clip(key);
    for (std::size_t start = 0; start < clip.pairs.size(); start += kChunk) {
      const std::size_t n = std::min(kChunk, clip.pairs.size() - start);
      std::vector<const RgbImage*> left;
      std::vector<const RgbImage*> right;
      for (std::size_t i = 0; i < n; ++i) {
        left.push_back(&clip.samples[clip.pairs[start + i].left_sample].image);
        right.push_back(&clip.samples[clip.pairs[start + i].right_sample].image);
      }
      const auto merged = predict_oriented_pairs(model, left, right);
      for (std::size_t i = 0; i < n; ++i) {
        const BlendShapeVector& gt = clip.pairs[start + i].gt;
        errors.push_back(vertex_error(mesh, scale, gt, merged[i]));
        groups.push_back(key.subject_id);
        preds.push_back(merged[i]);
        labels.push_back(gt);
      }
    }
  }
  if (errors.empty()) fail(ErrorCategory::Data, "evaluation set has no left/right pairs");
  Evaluation ev;
  ev.vertex = aggregate_errors(errors, eval_regions(mesh), groups);
  ev.correlation = pearson_per_blendshape(preds, labels);
  ev.pairs = errors.size();
  return ev;
}

std::uint64_t curve_seed(std::uint64_t master, std::size_t index) { return derive_seed(master, kCurveStream + index); }

std::vector<CurvePoint> calibration_curve(const nn::RegressorModel& base, const Dataset& dataset,
                                          const TrainConfig& config, const SplitPlan& split,
                                          std::span<const double> fractions, const FaceMesh& mesh, MmScale scale) {
  if (fractions.empty()) fail(ErrorCategory::InvalidArgument, "calibration curve needs at least one fraction");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
      fail(ErrorCategory::InvalidArgument, "calibration fractions must lie in (0, 1]");
    if (i > 0 && !(fractions[i] > fractions[i - 1]))
      fail(ErrorCategory::InvalidArgument, "calibration fractions must be strictly ascending");
  }
  const auto eval_clips = split.evaluation_clips();
  std::vector<CurvePoint> points;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    TrainConfig run = config;
    run.calibration_fraction = fractions[i];
    run.seed = curve_seed(config.seed, i);
    const CalibrationResult cal = calibrate(base, dataset, run, split);
    points.push_back({fractions[i], cal.seconds, run.seed, evaluate(cal.model, dataset, eval_clips, mesh, scale)});
  }
  return points;
}

// --- leakage audit -----------------------------------------------------------

LeakageAudit audit_leakage(std::string_view run_manifest_json) {
  LeakageAudit audit;
  const auto violation = [&](std::string what) {
    audit.passed = false;
    audit.violations.push_back(std::move(what));
  };
  try {
    const json doc = json::parse(run_manifest_json);
    const auto& split = doc.at("split");
    const auto test_subject = split.at("test_subject").get<std::string>();
    const auto key_of = [](const json& e) {
      return e.at("subject_id").get<std::string>() + "/" + e.at("location").get<std::string>() + "/" +
             std::to_string(e.at("clip_id").get<int>());
    };
    const auto& prov = doc.at("provenance");
    std::set<std::string> eval_keys;
    if (prov.contains("evaluation")) {
      for (const auto& e : prov.at("evaluation")) eval_keys.insert(key_of(e));
    }
    if (!prov.contains("independent_training") && !prov.contains("calibration"))
      violation("run manifest has no training provenance");
    if (prov.contains("independent_training")) {
      for (const auto& e : prov.at("independent_training")) {
        if (e.at("subject_id").get<std::string>() == test_subject && e.at("samples").get<std::size_t>() > 0)
          violation("independent training used " + std::to_string(e.at("samples").get<std::size_t>()) +
                    " samples of test subject clip " + key_of(e));
      }
    }
    if (prov.contains("calibration")) {
      const std::string cal_key = key_of(split.at("calibration_clip"));
      if (eval_keys.contains(cal_key)) violation("calibration clip " + cal_key + " is also evaluated");
      for (const auto& e : prov.at("calibration")) {
        const std::string key = key_of(e);
        if (e.at("samples").get<std::size_t>() == 0) continue;
        if (eval_keys.contains(key)) violation("calibration used samples of evaluation clip " + key);
        if (e.at("subject_id").get<std::string>() == test_subject && key != cal_key)
          violation("calibration used test-subject clip " + key + " other than the calibration clip");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::Parse, std::string("run manifest: ") + e.what());
  }
  return audit;
}

}  // namespace blendtrack
