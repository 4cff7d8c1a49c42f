#include "blendtrack/blendshape.hpp"

#include "blendtrack/error.hpp"

#include <algorithm>

namespace blendtrack {
namespace {

constexpr std::array<std::string_view, kBlendShapeCount> kNames = {
    "eyeBlinkLeft", "eyeLookDownLeft", "eyeLookInLeft", "eyeLookOutLeft", "eyeLookUpLeft",
    "eyeSquintLeft", "eyeWideLeft", "mouthSmileLeft", "mouthFrownLeft", "mouthDimpleLeft",
    "mouthStretchLeft", "mouthPressLeft", "mouthLowerDownLeft", "mouthUpperUpLeft",
    "browDownLeft", "browOuterUpLeft", "cheekSquintLeft", "noseSneerLeft",

    "eyeBlinkRight", "eyeLookDownRight", "eyeLookInRight", "eyeLookOutRight", "eyeLookUpRight",
    "eyeSquintRight", "eyeWideRight", "mouthSmileRight", "mouthFrownRight", "mouthDimpleRight",
    "mouthStretchRight", "mouthPressRight", "mouthLowerDownRight", "mouthUpperUpRight",
    "browDownRight", "browOuterUpRight", "cheekSquintRight", "noseSneerRight",

    "jawForward", "jawLeft", "jawRight", "jawOpen", "mouthClose", "mouthFunnel", "mouthPucker",
    "mouthLeft", "mouthRight", "mouthRollLower", "mouthRollUpper", "mouthShrugLower",
    "mouthShrugUpper", "browInnerUp", "cheekPuff", "tongueOut",
};

// Face part of each side-block entry, in side order.
constexpr std::array<FacePart, kSideShapeCount> kSideParts = {
    FacePart::Eyes,  FacePart::Eyes,  FacePart::Eyes,  FacePart::Eyes,  FacePart::Eyes,
    FacePart::Eyes,  FacePart::Eyes,  FacePart::Mouth, FacePart::Mouth, FacePart::Mouth,
    FacePart::Mouth, FacePart::Mouth, FacePart::Mouth, FacePart::Mouth, FacePart::Brow,
    FacePart::Brow,  FacePart::Cheeks, FacePart::Nose,
};

constexpr std::array<FacePart, kCenterShapeCount> kCenterParts = {
    FacePart::Jaw,   FacePart::Jaw,   FacePart::Jaw,   FacePart::Jaw,
    FacePart::Mouth, FacePart::Mouth, FacePart::Mouth, FacePart::Mouth,
    FacePart::Mouth, FacePart::Mouth, FacePart::Mouth, FacePart::Mouth,
    FacePart::Mouth, FacePart::Brow,  FacePart::Cheeks, FacePart::Tongue,
};

constexpr std::size_t center_pos(BlendShape s) { return index_of(s) - kCenterBlockOffset; }

constexpr std::array<std::pair<std::size_t, std::size_t>, 2> kMirroredCenterPairs = {{
    {center_pos(BlendShape::JawLeft), center_pos(BlendShape::JawRight)},
    {center_pos(BlendShape::MouthLeft), center_pos(BlendShape::MouthRight)},
}};

bool in_unit_interval(double w) { return w >= 0.0 && w <= 1.0; }

}  // namespace

std::string_view name_of(BlendShape shape) { return kNames[index_of(shape)]; }

std::string_view name_of_index(std::size_t index) {
  if (index >= kBlendShapeCount) fail(ErrorCategory::InvalidArgument, "blend shape index out of range");
  return kNames[index];
}

std::optional<BlendShape> blendshape_from_name(std::string_view name) {
  const auto it = std::find(kNames.begin(), kNames.end(), name);
  if (it == kNames.end()) return std::nullopt;
  return static_cast<BlendShape>(it - kNames.begin());
}

std::optional<BlendShape> blendshape_from_index(std::size_t index) {
  if (index >= kBlendShapeCount) return std::nullopt;
  return static_cast<BlendShape>(index);
}

Block partition(BlendShape shape) {
  const std::size_t i = index_of(shape);
  if (i < kSideShapeCount) return Block::Left;
  if (i < kCenterBlockOffset) return Block::Right;
  return Block::Center;
}

FacePart face_part(BlendShape shape) {
  const std::size_t i = index_of(shape);
  if (i < kCenterBlockOffset) return kSideParts[i % kSideShapeCount];
  return kCenterParts[i - kCenterBlockOffset];
}

std::string_view face_part_name(FacePart part) {
  switch (part) {
    case FacePart::Brow: return "Brow";
    case FacePart::Eyes: return "Eyes";
    case FacePart::Nose: return "Nose";
    case FacePart::Mouth: return "Mouth";
    case FacePart::Cheeks: return "Cheeks";
    case FacePart::Jaw: return "Jaw";
    case FacePart::Tongue: return "Tongue";
  }
  return "?";
}

std::string_view side_name(Side side) { return side == Side::Left ? "left" : "right"; }

bool BlendShapeVector::is_valid() const {
  return std::all_of(weights_.begin(), weights_.end(), in_unit_interval);
}

bool HalfFacePrediction::is_valid() const {
  return std::all_of(side_weights.begin(), side_weights.end(), in_unit_interval) &&
         std::all_of(center_weights.begin(), center_weights.end(), in_unit_interval);
}

CenterWeights mirror_center(const CenterWeights& center) {
  CenterWeights out = center;
  for (const auto& [a, b] : kMirroredCenterPairs) std::swap(out[a], out[b]);
  return out;
}

BlendShapeVector mirror_full(const BlendShapeVector& full) {
  BlendShapeVector out;
  for (std::size_t i = 0; i < kSideShapeCount; ++i) {
    out[i] = full[kSideShapeCount + i];
    out[kSideShapeCount + i] = full[i];
  }
  CenterWeights center;
  std::copy_n(full.values().begin() + kCenterBlockOffset, kCenterShapeCount, center.begin());
  center = mirror_center(center);
  std::copy(center.begin(), center.end(), out.values().begin() + kCenterBlockOffset);
  return out;
}

BlendShapeVector merge_half_predictions(const HalfFacePrediction& left,
                                        const HalfFacePrediction& right) {
  if (left.side != Side::Left || right.side != Side::Right) {
    fail(ErrorCategory::InvalidArgument,
         "merge_half_predictions: expected (left, right) predictions, got (" +
             std::string(side_name(left.side)) + ", " + std::string(side_name(right.side)) + ")");
  }
  BlendShapeVector out;
  for (std::size_t i = 0; i < kSideShapeCount; ++i) {
    out[side_block_offset(Side::Left) + i] = left.side_weights[i];
    out[side_block_offset(Side::Right) + i] = right.side_weights[i];
  }
  for (std::size_t i = 0; i < kCenterShapeCount; ++i) {
    out[kCenterBlockOffset + i] = 0.5 * (left.center_weights[i] + right.center_weights[i]);
  }
  return out;
}

HalfFaceTarget extract_half_target(const BlendShapeVector& full, Side side) {
  HalfFaceTarget out{};
  const auto values = full.values();
  std::copy_n(values.begin() + side_block_offset(side), kSideShapeCount, out.begin());
  CenterWeights center;
  std::copy_n(values.begin() + kCenterBlockOffset, kCenterShapeCount, center.begin());
  if (side == Side::Left) center = mirror_center(center);
  std::copy(center.begin(), center.end(), out.begin() + kSideShapeCount);
  return out;
}

HalfFacePrediction half_prediction_from_output(std::span<const double, kHalfFaceCount> output,
                                               Side side) {
  HalfFacePrediction p;
  p.side = side;
  std::copy_n(output.begin(), kSideShapeCount, p.side_weights.begin());
  std::copy_n(output.begin() + kSideShapeCount, kCenterShapeCount, p.center_weights.begin());
  if (side == Side::Left) p.center_weights = mirror_center(p.center_weights);
  return p;
}

std::string canonical_names_text() {
  std::string out;
  for (const auto name : kNames) {
    out.append(name);
    out.push_back('\n');
  }
  return out;
}

}  // namespace blendtrack
