#pragma once

#include "blendtrack/blendshape.hpp"
#include "blendtrack/image.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace blendtrack {

enum class Location { Indoor, Outdoor };

std::string_view location_name(Location location);
std::optional<Location> location_from_name(std::string_view name);

struct FrameRecord {
  std::int64_t timestamp_ms = 0;  // recorder clock
  RgbImage image;
  Side side = Side::Right;
  std::size_t seq_index = 0;
};

struct GroundTruthRecord {
  std::int64_t timestamp_ms = 0;  // label clock
  BlendShapeVector weights;
  bool valid = true;
};

struct ClipKey {
  std::string subject_id;
  Location location = Location::Indoor;
  int clip_id = 0;

  std::string to_string() const;
  auto operator<=>(const ClipKey&) const = default;
};

// One recording session: synchronized left/right frame streams plus the
// ground-truth label stream on its own clock.
struct Recording {
  ClipKey key;
  std::vector<FrameRecord> left;
  std::vector<FrameRecord> right;
  std::vector<GroundTruthRecord> gt;

  // Throws Data when timestamps are not strictly increasing or seq_index is
  // not contiguous from 0.
  void validate() const;
};

struct Rect {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

// Eye crop of the right-camera view used by the synthetic renderer's layout.
Rect default_eye_region(std::size_t image_height, std::size_t image_width);

struct TimeSeries {
  std::vector<std::int64_t> timestamps_ms;
  std::vector<double> values;
};

// Per-frame mean darkness (1 - luminance) over the eye region.
TimeSeries blink_proxy(std::span<const FrameRecord> frames, const Rect& eye_region);

// Mean of eyeBlinkLeft/eyeBlinkRight over valid ground-truth records.
TimeSeries gt_blink_series(std::span<const GroundTruthRecord> gt);

inline constexpr std::int64_t kDefaultOffsetSearchMs = 5000;
inline constexpr std::int64_t kDefaultMatchToleranceMs = 17;

// Clock offset (ms) such that frame.timestamp + offset lands on the label
// clock. Maximizes the normalized cross-correlation between the proxy,
// resampled to a 1 ms grid, and the label blink channel over
// [-search_range_ms, search_range_ms]; ties go to the smallest |offset|.
std::int64_t estimate_offset(const TimeSeries& proxy, const TimeSeries& gt_blink,
                             std::int64_t search_range_ms = kDefaultOffsetSearchMs);

struct AlignedPair {
  std::size_t frame_index = 0;
  std::size_t gt_index = 0;
  std::size_t seq_index = 0;
  bool gt_valid = true;
};

struct AlignResult {
  std::vector<AlignedPair> pairs;
  std::size_t dropped_unmatched = 0;
};

// Matches each frame to the label record nearest frame.timestamp + offset,
// keeping the match only within tolerance.
AlignResult align(std::span<const FrameRecord> frames, std::span<const GroundTruthRecord> gt,
                  std::int64_t offset_ms, std::int64_t tolerance_ms = kDefaultMatchToleranceMs);

inline constexpr std::size_t kWarmupFrames = 3;

struct CleanResult {
  std::vector<AlignedPair> pairs;
  std::size_t dropped_warmup = 0;
  std::size_t dropped_invalid = 0;
};

// Drops the first 3 frames of the recording and pairs whose label is invalid.
CleanResult clean(std::span<const AlignedPair> pairs);

struct Provenance {
  ClipKey clip;
  std::int64_t timestamp_ms = 0;
  std::size_t seq_index = 0;
};

struct SyncedSample {
  RgbImage image;  // right-camera orientation (left frames are mirrored)
  Side side = Side::Right;
  HalfFaceTarget target{};
  Provenance provenance;
};

std::vector<SyncedSample> build_samples(std::span<const AlignedPair> pairs, std::span<const FrameRecord> frames,
                                        std::span<const GroundTruthRecord> gt, Side side, const ClipKey& clip);

struct SyncReport {
  ClipKey clip;
  std::int64_t offset_ms = 0;
  std::size_t frames = 0;  // both sides
  std::size_t matched = 0;
  std::size_t dropped_unmatched = 0;
  std::size_t dropped_warmup = 0;
  std::size_t dropped_invalid = 0;
  std::size_t kept = 0;
};

struct PipelineConfig {
  std::int64_t offset_search_ms = kDefaultOffsetSearchMs;
  std::int64_t match_tolerance_ms = kDefaultMatchToleranceMs;
  std::optional<Rect> eye_region;  // default_eye_region when unset
};

// A left/right frame pair from the same instant with its label.
struct EvalPair {
  std::size_t left_sample = 0;
  std::size_t right_sample = 0;
  BlendShapeVector gt;
};

struct PreparedClip {
  ClipKey key;
  std::vector<SyncedSample> samples;
  std::vector<EvalPair> pairs;
  double duration_s = 0.0;
  SyncReport sync;
};

// Offset estimation, alignment, cleaning and sample building for one recording.
PreparedClip prepare_recording(const Recording& recording, const PipelineConfig& config = {});

// --- files -------------------------------------------------------------------

struct ManifestClip {
  ClipKey key;
  std::filesystem::path left_frames_dir;  // relative to the manifest directory
  std::filesystem::path right_frames_dir;
  std::filesystem::path gt_csv;
};

struct RecordingManifest {
  std::vector<ManifestClip> clips;
  std::optional<Rect> eye_region;
  std::vector<std::string> warnings;  // filled on load

  std::vector<std::string> subjects() const;
};

inline constexpr std::size_t kProtocolClipsPerLocation = 5;

RecordingManifest load_manifest(const std::filesystem::path& dataset_dir);
void save_manifest(const RecordingManifest& manifest, const std::filesystem::path& dataset_dir);

void write_gt_csv(std::span<const GroundTruthRecord> gt, const std::filesystem::path& path);
std::vector<GroundTruthRecord> read_gt_csv(const std::filesystem::path& path);

// Numbered frame_NNNNNN.ppm files plus timestamps.csv ("seq_index,timestamp_ms").
void write_frames(std::span<const FrameRecord> frames, const std::filesystem::path& dir);
std::vector<FrameRecord> read_frames(const std::filesystem::path& dir, Side side);

Recording load_recording(const ManifestClip& clip, const std::filesystem::path& dataset_dir);
void save_recording(const Recording& recording, const std::filesystem::path& dataset_dir, ManifestClip* entry);

}  // namespace blendtrack
