#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace blendtrack {

inline constexpr std::size_t kBlendShapeCount = 52;
inline constexpr std::size_t kSideShapeCount = 18;
inline constexpr std::size_t kCenterShapeCount = 16;
inline constexpr std::size_t kHalfFaceCount = kSideShapeCount + kCenterShapeCount;

// Canonical ordering: left block [0, 18), right block [18, 36), center block
// [36, 52). The right block repeats the left block's order with "Right".
// Every file format and tensor layout in the project indexes by this order.
enum class BlendShape : std::uint8_t {
  EyeBlinkLeft, EyeLookDownLeft, EyeLookInLeft, EyeLookOutLeft, EyeLookUpLeft,
  EyeSquintLeft, EyeWideLeft, MouthSmileLeft, MouthFrownLeft, MouthDimpleLeft,
  MouthStretchLeft, MouthPressLeft, MouthLowerDownLeft, MouthUpperUpLeft,
  BrowDownLeft, BrowOuterUpLeft, CheekSquintLeft, NoseSneerLeft,

  EyeBlinkRight, EyeLookDownRight, EyeLookInRight, EyeLookOutRight, EyeLookUpRight,
  EyeSquintRight, EyeWideRight, MouthSmileRight, MouthFrownRight, MouthDimpleRight,
  MouthStretchRight, MouthPressRight, MouthLowerDownRight, MouthUpperUpRight,
  BrowDownRight, BrowOuterUpRight, CheekSquintRight, NoseSneerRight,

  JawForward, JawLeft, JawRight, JawOpen, MouthClose, MouthFunnel, MouthPucker,
  MouthLeft, MouthRight, MouthRollLower, MouthRollUpper, MouthShrugLower,
  MouthShrugUpper, BrowInnerUp, CheekPuff, TongueOut,
};

enum class Block { Left, Right, Center };
enum class Side { Left, Right };
enum class FacePart { Brow, Eyes, Nose, Mouth, Cheeks, Jaw, Tongue };

inline constexpr std::size_t kFacePartCount = 7;

constexpr std::size_t index_of(BlendShape shape) { return static_cast<std::size_t>(shape); }

std::string_view name_of(BlendShape shape);
std::string_view name_of_index(std::size_t index);
std::optional<BlendShape> blendshape_from_name(std::string_view name);
std::optional<BlendShape> blendshape_from_index(std::size_t index);

Block partition(BlendShape shape);
FacePart face_part(BlendShape shape);
std::string_view face_part_name(FacePart part);
std::string_view side_name(Side side);

// First index of a side's block in the canonical order.
constexpr std::size_t side_block_offset(Side side) {
  return side == Side::Left ? 0 : kSideShapeCount;
}
inline constexpr std::size_t kCenterBlockOffset = 2 * kSideShapeCount;

// Full 52-weight activation vector. Weights are unitless in [0, 1].
class BlendShapeVector {
 public:
  BlendShapeVector() { weights_.fill(0.0); }
  explicit BlendShapeVector(const std::array<double, kBlendShapeCount>& weights)
      : weights_(weights) {}

  double& operator[](std::size_t i) { return weights_[i]; }
  double operator[](std::size_t i) const { return weights_[i]; }
  double& operator[](BlendShape s) { return weights_[index_of(s)]; }
  double operator[](BlendShape s) const { return weights_[index_of(s)]; }

  std::span<const double, kBlendShapeCount> values() const { return weights_; }
  std::span<double, kBlendShapeCount> values() { return weights_; }

  bool is_valid() const;
  bool operator==(const BlendShapeVector&) const = default;

 private:
  std::array<double, kBlendShapeCount> weights_;
};

using CenterWeights = std::array<double, kCenterShapeCount>;
using SideWeights = std::array<double, kSideShapeCount>;
using HalfFaceTarget = std::array<double, kHalfFaceCount>;

// One side image's output: that side's 18 weights plus 16 center weights,
// both in canonical (unflipped) orientation.
struct HalfFacePrediction {
  Side side = Side::Right;
  SideWeights side_weights{};
  CenterWeights center_weights{};

  bool is_valid() const;
};

// Swaps jawLeft/jawRight and mouthLeft/mouthRight. Involution.
CenterWeights mirror_center(const CenterWeights& center);

// Left block <-> right block, with the center block mirrored. This is the
// label transform matching a horizontal image flip.
BlendShapeVector mirror_full(const BlendShapeVector& full);

// Concatenates the two side blocks and averages the centers. Throws
// InvalidArgument when sides are swapped.
BlendShapeVector merge_half_predictions(const HalfFacePrediction& left,
                                        const HalfFacePrediction& right);

// Training target for one side image. For the left side the center block is
// mirrored because left images are flipped into right-camera orientation.
HalfFaceTarget extract_half_target(const BlendShapeVector& full, Side side);

// Interprets a 34-value network output computed on a side image in canonical
// orientation, undoing the center mirroring for the left side.
HalfFacePrediction half_prediction_from_output(std::span<const double, kHalfFaceCount> output,
                                               Side side);

// Canonical names, one per line in index order (the blendshapes.v1.txt resource).
std::string canonical_names_text();

}  // namespace blendtrack
