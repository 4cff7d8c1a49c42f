#pragma once

#include "blendtrack/augment.hpp"
#include "blendtrack/data_pipeline.hpp"
#include "blendtrack/eval_metrics.hpp"
#include "blendtrack/face_mesh.hpp"
#include "blendtrack/regressor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blendtrack {

struct TrainConfig {
  int epochs_independent = 5;
  int epochs_calibration = 10;
  double calibration_fraction = 0.10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double loss_base = nn::kDefaultLossBase;
  AugmentConfig augment{};
  nn::InputSpec input_size{};
  std::int64_t match_tolerance_ms = kDefaultMatchToleranceMs;
  std::int64_t offset_search_ms = kDefaultOffsetSearchMs;

  // Throws InvalidArgument on out-of-range fields.
  void validate() const;
  PipelineConfig pipeline() const;
};

inline constexpr const char* kSeedEnvVar = "BLENDTRACK_SEED";

// JSON object with any subset of the fields; unknown keys are rejected.
TrainConfig parse_train_config(std::string_view json_text, const std::string& source = "<config>");
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_json(const TrainConfig& config);
// 64-bit FNV-1a of train_config_json, as 16 hex digits.
std::string config_hash(const TrainConfig& config);
// Replaces config.seed with BLENDTRACK_SEED when set; Parse error if malformed.
void apply_seed_override(TrainConfig& config);

// Prepared clips of a study, indexed by ClipKey.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<PreparedClip> clips);

  const std::vector<PreparedClip>& clips() const { return clips_; }
  const PreparedClip& clip(const ClipKey& key) const;
  std::vector<std::string> subjects() const;
  std::vector<ClipKey> clips_of(std::string_view subject) const;

 private:
  std::vector<PreparedClip> clips_;
};

// Loads every manifest clip and runs synchronization and cleaning on it.
Dataset load_dataset(const std::filesystem::path& dataset_dir, const PipelineConfig& pipeline = {});

struct SplitPlan {
  std::string test_subject;
  std::vector<std::string> training_subjects;
  ClipKey calibration_clip;
  std::vector<ClipKey> same_location;
  std::vector<ClipKey> another_location;

  std::vector<ClipKey> evaluation_clips() const;
};

// Leave-one-subject-out split; the calibration clip is drawn from the test
// subject's clips with the seed.
SplitPlan make_split(const Dataset& dataset, const std::string& test_subject, std::uint64_t seed);

// Samples per clip that entered a stage.
using ProvenanceCounts = std::map<ClipKey, std::size_t>;

struct IndependentResult {
  nn::RegressorModel model;
  std::vector<double> epoch_losses;
  ProvenanceCounts provenance;
};

IndependentResult train_user_independent(const Dataset& dataset, const TrainConfig& config, const SplitPlan& split);

struct CalibrationResult {
  nn::RegressorModel model;
  std::vector<double> epoch_losses;
  ProvenanceCounts provenance;
  std::size_t calibration_frames = 0;  // frame instants taken from the calibration clip
  std::size_t calibration_samples = 0;
  std::size_t pool_samples = 0;
  double seconds = 0.0;  // fraction x clip duration
};

// Fine-tunes a copy of base on the 50/50 mix of calibration-clip samples and
// training-pool samples.
CalibrationResult calibrate(const nn::RegressorModel& base, const Dataset& dataset, const TrainConfig& config,
                            const SplitPlan& split);

struct Evaluation {
  VertexErrorReport vertex;
  CorrelationReport correlation;
  std::size_t pairs = 0;
};

Evaluation evaluate(const nn::RegressorModel& model, const Dataset& dataset, std::span<const ClipKey> clips,
                    const FaceMesh& mesh, MmScale scale);

struct CurvePoint {
  double fraction = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  Evaluation evaluation;
};

// Seed used for the run at position `index` of a calibration curve.
std::uint64_t curve_seed(std::uint64_t master, std::size_t index);

std::vector<CurvePoint> calibration_curve(const nn::RegressorModel& base, const Dataset& dataset,
                                          const TrainConfig& config, const SplitPlan& split,
                                          std::span<const double> fractions, const FaceMesh& mesh, MmScale scale);

// Full-face weights from a raw left/right image pair; the left image is
// mirrored into right-camera orientation before inference.
BlendShapeVector predict_full_face(const nn::RegressorModel& model, const RgbImage& left, const RgbImage& right);

// Same for images already in right-camera orientation (as stored in samples).
std::vector<BlendShapeVector> predict_oriented_pairs(const nn::RegressorModel& model,
                                                     std::span<const RgbImage* const> left_flipped,
                                                     std::span<const RgbImage* const> right);

struct LeakageAudit {
  bool passed = true;
  std::vector<std::string> violations;
};

// Checks a run manifest: no test-subject samples in independent training and
// no evaluation-clip samples in calibration.
LeakageAudit audit_leakage(std::string_view run_manifest_json);

}  // namespace blendtrack
