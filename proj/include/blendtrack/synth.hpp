#pragma once

#include "blendtrack/blendshape.hpp"
#include "blendtrack/data_pipeline.hpp"
#include "blendtrack/image.hpp"
#include "blendtrack/rng.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace blendtrack::synth {

using Rgb = std::array<double, 3>;  // linear [0, 1]

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Per-subject look. Positions are fractions of the image size in the
// right-camera view (nose toward x = 0).
struct SubjectAppearance {
  Rgb skin{};
  Rgb lips{};
  Rgb iris{};
  Rgb brow{};
  Point face_center{0.45, 0.52};
  Point face_radii{0.58, 0.56};
  Point eye_offset{};
  Point brow_offset{};
  Point mouth_offset{};
  double eye_scale = 1.0;
  double lip_scale = 1.0;
  // Activations of the subject's neutral face, added under every expression.
  BlendShapeVector resting;
  std::uint64_t seed = 0;

  static SubjectAppearance sample(std::uint64_t seed);
  // Throws InvalidArgument when geometry leaves the image.
  void validate() const;
};

struct SceneStyle {
  Location location = Location::Indoor;
  Rgb background_top{};
  Rgb background_bottom{};
  double illumination_gain = 1.0;
  Rgb color_cast{1.0, 1.0, 1.0};
  double flicker_amplitude = 0.0;  // per-frame relative brightness jitter

  static SceneStyle sample(Location location, std::uint64_t seed);
  // Throws InvalidArgument unless gains are positive.
  void validate() const;
};

inline constexpr int kPixelNoise = 3;

// Right views are drawn directly; a left view is the horizontal flip of the
// right view of the mirrored weights. The rng supplies frame flicker and pixel
// noise only.
RgbImage render_side_view(const SubjectAppearance& appearance, const SceneStyle& style,
                          const BlendShapeVector& weights, Side side, std::size_t image_size, Rng& rng);

struct Bump {
  BlendShape shape{};
  double start_s = 0.0;
  double duration_s = 0.0;
  double amplitude = 0.0;
};

struct Blink {
  double center_s = 0.0;
  double fwhm_s = 0.0;
  double amplitude = 0.0;
};

// Continuous-time expression trajectory: raised-cosine bumps per channel
// plus Gaussian blink pulses on both eyeBlink channels, clamped to [0, 1].
class ExpressionTrack {
 public:
  static ExpressionTrack sample(double duration_s, std::uint64_t seed);

  BlendShapeVector at(double t_s) const;
  const std::vector<Bump>& bumps() const { return bumps_; }
  const std::vector<Blink>& blinks() const { return blinks_; }

 private:
  std::vector<Bump> bumps_;
  std::vector<Blink> blinks_;
};

struct ClipConfig {
  double duration_s = 120.0;
  std::int64_t clock_offset_ms = 400;  // label clock minus frame clock
  double frame_fps = 8.0;
  double gt_fps = 30.0;
  double invalid_fraction = 0.02;
  std::size_t image_size = 64;
};

inline constexpr std::int64_t kLabelClockBaseMs = 1'000'000;
inline constexpr double kFirstFrameDelayS = 0.2;

// First frames of every recording are over-exposed by these factors.
inline constexpr std::array<double, 3> kWarmupExposure{1.5, 1.3, 1.15};

Recording generate_clip(const SubjectAppearance& appearance, const SceneStyle& style, const ClipConfig& config,
                        const ClipKey& key, std::uint64_t seed);

struct ClipSpec {
  ClipKey key;
  std::uint64_t appearance_seed = 0;
  std::uint64_t style_seed = 0;
  std::uint64_t clip_seed = 0;
};

struct StudyConfig {
  std::size_t n_subjects = 2;
  std::size_t clips_per_location = 1;
  std::uint64_t seed = 0;
  ClipConfig clip{};
};

struct StudyPlan {
  StudyConfig config;
  std::vector<ClipSpec> clips;
};

// Subjects s0.. with clips_per_location clips at each location. Clip ids are
// unique per subject. Throws InvalidArgument for fewer than 2 subjects.
StudyPlan plan_study(const StudyConfig& config);

Recording generate_clip(const StudyPlan& plan, const ClipSpec& spec);

// Writes every clip and the manifest into dir; returns the manifest.
RecordingManifest write_study(const StudyPlan& plan, const std::filesystem::path& dir);

}  // namespace blendtrack::synth
