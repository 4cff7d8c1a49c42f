#include "blendtrack/synth.hpp"

#include "blendtrack/error.hpp"
#include "blendtrack/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace blendtrack::synth {

namespace {

constexpr Rgb kLightSkin{0.92, 0.76, 0.65};
constexpr Rgb kDarkSkin{0.36, 0.24, 0.18};
constexpr Rgb kLipTint{0.72, 0.30, 0.32};
constexpr Rgb kSclera{0.94, 0.93, 0.90};
constexpr Rgb kMouthInside{0.16, 0.05, 0.06};
constexpr Rgb kTongue{0.85, 0.42, 0.45};
constexpr double kLidShade = 0.62;
constexpr double kMaxResting = 0.15;

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

Rgb scale(const Rgb& c, double s) {
  return {std::clamp(c[0] * s, 0.0, 1.0), std::clamp(c[1] * s, 0.0, 1.0), std::clamp(c[2] * s, 0.0, 1.0)};
}

Rgb jitter(const Rgb& c, double spread, Rng& rng) {
  Rgb out;
  for (int k = 0; k < 3; ++k) out[k] = std::clamp(c[k] + rng.uniform(-spread, spread), 0.0, 1.0);
  return out;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Float canvas in pixel units; shapes take fractional image coordinates.
class Canvas {
 public:
  explicit Canvas(std::size_t size) : size_(size), pixels_(size * size) {}

  std::size_t size() const { return size_; }
  double px(double frac) const { return frac * static_cast<double>(size_); }

  void vertical_gradient(const Rgb& top, const Rgb& bottom) {
    for (std::size_t y = 0; y < size_; ++y) {
      const Rgb c = mix(top, bottom, (static_cast<double>(y) + 0.5) / static_cast<double>(size_));
      for (std::size_t x = 0; x < size_; ++x) pixels_[y * size_ + x] = c;
    }
  }

  // coverage(x_px_center, y_px_center) -> [0, 1]
  void paint(const Rgb& color, double alpha, const std::function<double(double, double)>& coverage) {
    if (alpha <= 0.0) return;
    for (std::size_t y = 0; y < size_; ++y) {
      for (std::size_t x = 0; x < size_; ++x) {
        const double a = alpha * coverage(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
        if (a <= 0.0) continue;
        Rgb& p = pixels_[y * size_ + x];
        p = mix(p, color, std::min(a, 1.0));
      }
    }
  }

  const Rgb& at(std::size_t y, std::size_t x) const { return pixels_[y * size_ + x]; }

 private:
  std::size_t size_;
  std::vector<Rgb> pixels_;
};

// Antialiased ellipse coverage from a first-order signed distance.
double ellipse_coverage(double x, double y, double cx, double cy, double rx, double ry) {
  if (rx <= 0.0 || ry <= 0.0) return 0.0;
  const double dx = x - cx;
  const double dy = y - cy;
  const double k = std::sqrt(dx * dx / (rx * rx) + dy * dy / (ry * ry));
  const double gx = dx / (rx * rx);
  const double gy = dy / (ry * ry);
  const double g = std::sqrt(gx * gx + gy * gy);
  if (g < 1e-12) return 1.0;
  const double sdf = k * (k - 1.0) / g;
  return clamp01(0.5 - sdf);
}

// Fraction of the unit pixel row [y - 0.5, y + 0.5] inside [lo, hi].
double band_coverage(double y, double lo, double hi) {
  return clamp01(std::min(hi, y + 0.5) - std::max(lo, y - 0.5));
}

double segment_coverage(double x, double y, double x0, double y0, double x1, double y1, double half_width) {
  const double vx = x1 - x0;
  const double vy = y1 - y0;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0.0 ? std::clamp(((x - x0) * vx + (y - y0) * vy) / len2, 0.0, 1.0) : 0.0;
  const double dx = x - (x0 + t * vx);
  const double dy = y - (y0 + t * vy);
  return clamp01(half_width - std::sqrt(dx * dx + dy * dy) + 0.5);
}

struct Ellipse {
  double cx, cy, rx, ry;  // pixels
  double coverage(double x, double y) const { return ellipse_coverage(x, y, cx, cy, rx, ry); }
};

// Mouth outline shared by the opening, lips and tongue, in pixels.
struct MouthGeometry {
  double x_mid = 0.0;     // midline end
  double x_corner = 0.0;  // corner end
  double y_mid = 0.0;
  double y_corner = 0.0;
  double open = 0.0;  // half-height of the opening at the midline
  double upper_thickness = 0.0;
  double lower_thickness = 0.0;

  double t_of(double x) const { return (x - x_mid) / (x_corner - x_mid); }
  double line(double t) const { return y_mid + (y_corner - y_mid) * t * t; }
  double height(double t) const { return open * (1.0 - t * t); }
  double top(double t) const { return line(t) - 0.35 * height(t); }
  double bottom(double t) const { return line(t) + 0.65 * height(t); }
  double horizontal(double x, double extend_mid) const {
    return clamp01(x - (x_mid - extend_mid) + 0.5) * clamp01(x_corner - x + 0.5);
  }
};

RgbImage render_right(const SubjectAppearance& ap, const SceneStyle& st, const BlendShapeVector& w,
                      std::size_t size, Rng& rng) {
  using S = BlendShape;
  Canvas cv(size);
  const auto P = [&](double frac) { return cv.px(frac); };

  cv.vertical_gradient(st.background_top, st.background_bottom);

  // Face with cheek bulge.
  const double puff = w[S::CheekPuff];
  const Ellipse face{P(ap.face_center.x), P(ap.face_center.y), P(ap.face_radii.x * (1.0 + 0.08 * puff)),
                     P(ap.face_radii.y * (1.0 + 0.03 * puff))};
  cv.paint(ap.skin, 1.0, [&](double x, double y) { return face.coverage(x, y); });

  // Cheek highlight and squint crease.
  const Ellipse cheek{P(0.66 + ap.eye_offset.x), P(0.60 + ap.mouth_offset.y * 0.5), P(0.12 + 0.07 * puff),
                      P(0.09 + 0.05 * puff)};
  cv.paint(scale(ap.skin, 1.12), 0.55 + 0.3 * puff, [&](double x, double y) { return cheek.coverage(x, y); });
  const double ex = 0.5 + ap.eye_offset.x;
  const double ey = 0.36 + ap.eye_offset.y;
  cv.paint(scale(ap.skin, 0.72), 0.7 * w[S::CheekSquintRight], [&](double x, double y) {
    return segment_coverage(x, y, P(ex - 0.08), P(ey + 0.1), P(ex + 0.1), P(ey + 0.08), P(0.012));
  });

  // Nose at the near edge, nostril and sneer wrinkle.
  const double sneer = w[S::NoseSneerRight];
  const Ellipse nose{P(0.0), P(0.5), P(0.11), P(0.15)};
  cv.paint(scale(ap.skin, 0.86), 1.0, [&](double x, double y) { return nose.coverage(x, y); });
  const Ellipse nostril{P(0.055), P(0.6 - 0.015 * sneer), P(0.028 + 0.012 * sneer), P(0.014 + 0.006 * sneer)};
  cv.paint(scale(ap.skin, 0.35), 0.9, [&](double x, double y) { return nostril.coverage(x, y); });
  cv.paint(scale(ap.skin, 0.6), 0.8 * sneer, [&](double x, double y) {
    return segment_coverage(x, y, P(0.08), P(0.38), P(0.17), P(0.44), P(0.012));
  });

  // Eye: lid-colored socket, sclera inside the lid aperture, iris.
  const double rx = 0.1 * ap.eye_scale;
  const double ry = 0.055 * ap.eye_scale;
  const double blink = w[S::EyeBlinkRight];
  const double wide = w[S::EyeWideRight];
  const double squint = w[S::EyeSquintRight];
  const Ellipse socket{P(ex), P(ey), P(rx), P(ry * 1.35)};
  const double close_line = P(ey + 0.4 * ry);
  const double open_top = P(ey - ry * (1.0 + 0.35 * wide - 0.15 * squint));
  const double open_bottom = P(ey + ry * (1.0 - 0.45 * squint));
  const double lid_top = close_line - (close_line - open_top) * (1.0 - blink);
  const double lid_bottom = close_line + (open_bottom - close_line) * (1.0 - blink);
  cv.paint(scale(ap.skin, kLidShade), 1.0, [&](double x, double y) { return socket.coverage(x, y); });
  const auto aperture = [&](double x, double y) { return socket.coverage(x, y) * band_coverage(y, lid_top, lid_bottom); };
  cv.paint(kSclera, 1.0, aperture);
  const double gaze_x = 0.045 * (w[S::EyeLookOutRight] - w[S::EyeLookInRight]);
  const double gaze_y = 0.025 * (w[S::EyeLookDownRight] - w[S::EyeLookUpRight]);
  const Ellipse iris{P(ex + gaze_x), P(ey + gaze_y), P(0.036 * ap.eye_scale), P(0.036 * ap.eye_scale)};
  cv.paint(ap.iris, 1.0, [&](double x, double y) { return iris.coverage(x, y) * aperture(x, y); });

  // Brow: inner end near the nose, outer end toward the ear.
  const double bx = 0.38 + ap.brow_offset.x;
  const double by = 0.22 + ap.brow_offset.y;
  const double down = 0.04 * w[S::BrowDownRight];
  const double y_inner = by - 0.06 * w[S::BrowInnerUp] + down;
  const double y_outer = by - 0.06 * w[S::BrowOuterUpRight] + down;
  cv.paint(ap.brow, 1.0, [&](double x, double y) {
    return segment_coverage(x, y, P(bx), P(y_inner), P(bx + 0.26), P(y_outer), P(0.014));
  });

  // Mouth.
  const double shift = 0.04 * (w[S::MouthRight] - w[S::MouthLeft]) + 0.03 * (w[S::JawRight] - w[S::JawLeft]);
  const double pucker = w[S::MouthPucker];
  const double funnel = w[S::MouthFunnel];
  MouthGeometry m;
  m.x_mid = P(0.05 + ap.mouth_offset.x + shift - 0.03 * w[S::JawForward]);
  m.x_corner = P(0.5 + ap.mouth_offset.x + shift + 0.07 * w[S::MouthStretchRight] + 0.03 * w[S::MouthSmileRight] -
                 0.1 * pucker - 0.06 * funnel);
  m.y_mid = P(0.73 + ap.mouth_offset.y - 0.02 * w[S::MouthShrugUpper] + 0.02 * w[S::MouthShrugLower]);
  m.y_corner = P(0.73 + ap.mouth_offset.y - 0.06 * w[S::MouthSmileRight] + 0.05 * w[S::MouthFrownRight]);
  m.open = P(0.11 * w[S::JawOpen] * (1.0 - 0.8 * w[S::MouthClose]) + 0.025 * w[S::MouthLowerDownRight] +
             0.025 * w[S::MouthUpperUpRight] + 0.03 * funnel);
  const double press = w[S::MouthPressRight];
  m.upper_thickness = P(0.026 * ap.lip_scale *
                        std::max(0.15, 1.0 + 0.8 * pucker + 0.5 * funnel - 0.7 * w[S::MouthRollUpper] - 0.5 * press +
                                           0.3 * w[S::MouthShrugUpper]));
  m.lower_thickness = P(0.032 * ap.lip_scale *
                        std::max(0.15, 1.0 + 0.8 * pucker + 0.5 * funnel - 0.7 * w[S::MouthRollLower] - 0.5 * press +
                                           0.3 * w[S::MouthShrugLower]));
  const double protrude = P(0.05 * pucker + 0.03 * funnel);
  const auto t_clamped = [&](double x) { return std::clamp(m.t_of(x), 0.0, 1.0); };
  cv.paint(ap.lips, 1.0, [&](double x, double y) {
    const double t = t_clamped(x);
    const double taper = 1.0 - 0.6 * t * t;
    const double top = m.top(t);
    const double bottom = m.bottom(t);
    const double lips = band_coverage(y, top - m.upper_thickness * taper, top) +
                        band_coverage(y, bottom, bottom + m.lower_thickness * taper);
    return std::min(1.0, lips) * m.horizontal(x, protrude);
  });
  cv.paint(kMouthInside, 1.0, [&](double x, double y) {
    const double t = t_clamped(x);
    return band_coverage(y, m.top(t), m.bottom(t)) * m.horizontal(x, 0.0);
  });
  const double tongue_out = w[S::TongueOut];
  const Ellipse tongue{m.x_mid + P(0.06), m.line(0.0) + P(0.02 + 0.07 * tongue_out), P(0.015 + 0.1 * tongue_out),
                       P(0.01 + 0.035 * tongue_out)};
  cv.paint(kTongue, std::min(1.0, 4.0 * tongue_out), [&](double x, double y) { return tongue.coverage(x, y); });

  // Dimple beside the corner.
  const Ellipse dimple{m.x_corner + P(0.035), m.y_corner, P(0.014), P(0.02)};
  cv.paint(scale(ap.skin, 0.55), 0.85 * w[S::MouthDimpleRight], [&](double x, double y) { return dimple.coverage(x, y); });

  // Chin crease follows the jaw.
  const double jaw_x = -0.04 * w[S::JawForward] + 0.03 * (w[S::JawRight] - w[S::JawLeft]);
  const double jaw_y = 0.07 * w[S::JawOpen];
  cv.paint(scale(ap.skin, 0.7), 0.6, [&](double x, double y) {
    return segment_coverage(x, y, P(0.0 + jaw_x), P(0.9 + jaw_y), P(0.3 + jaw_x), P(0.87 + 0.7 * jaw_y), P(0.01));
  });

  // Camera: illumination, color cast, frame flicker, sensor noise.
  const double flicker = 1.0 + st.flicker_amplitude * (2.0 * rng.uniform() - 1.0);
  RgbImage out(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const Rgb& c = cv.at(y, x);
      for (std::size_t k = 0; k < 3; ++k) {
        const double v = c[k] * st.illumination_gain * st.color_cast[k] * flicker * 255.0;
        const double noise = static_cast<double>(rng.index(2 * kPixelNoise + 1)) - kPixelNoise;
        out.at(y, x, k) = static_cast<std::uint8_t>(std::clamp(std::lround(v + noise), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace

SubjectAppearance SubjectAppearance::sample(std::uint64_t seed) {
  Rng rng(seed);
  SubjectAppearance ap;
  ap.seed = seed;
  ap.skin = mix(kLightSkin, kDarkSkin, rng.uniform());
  ap.lips = mix(ap.skin, kLipTint, rng.uniform(0.4, 0.7));
  ap.iris = mix(Rgb{0.30, 0.18, 0.10}, Rgb{0.25, 0.42, 0.58}, rng.uniform());
  ap.brow = scale(Rgb{0.12, 0.09, 0.07}, rng.uniform(0.8, 2.5));
  ap.face_center = {0.45 + rng.uniform(-0.02, 0.02), 0.52 + rng.uniform(-0.02, 0.02)};
  ap.face_radii = {0.58 + rng.uniform(-0.03, 0.03), 0.56 + rng.uniform(-0.03, 0.03)};
  ap.eye_offset = {rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)};
  ap.brow_offset = {rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)};
  ap.mouth_offset = {rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)};
  ap.eye_scale = rng.uniform(0.9, 1.1);
  ap.lip_scale = rng.uniform(0.85, 1.15);
  for (std::size_t i = 0; i < kSideShapeCount; ++i) {
    const double level = rng.uniform(0.0, kMaxResting);
    ap.resting[i] = std::clamp(level + rng.uniform(-0.02, 0.02), 0.0, kMaxResting);
    ap.resting[i + kSideShapeCount] = std::clamp(level + rng.uniform(-0.02, 0.02), 0.0, kMaxResting);
  }
  for (std::size_t i = kCenterBlockOffset; i < kBlendShapeCount; ++i) ap.resting[i] = rng.uniform(0.0, kMaxResting);
  return ap;
}

void SubjectAppearance::validate() const {
  const auto in_unit = [](const Rgb& c) {
    return std::all_of(c.begin(), c.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  };
  if (!in_unit(skin) || !in_unit(lips) || !in_unit(iris) || !in_unit(brow))
    fail(ErrorCategory::InvalidArgument, "appearance colors must lie in [0, 1]");
  for (const Point& p : {eye_offset, brow_offset, mouth_offset}) {
    if (std::abs(p.x) > 0.05 || std::abs(p.y) > 0.05)
      fail(ErrorCategory::InvalidArgument, "appearance feature offsets must lie within 0.05 of the template");
  }
  if (face_center.x < 0.3 || face_center.x > 0.6 || face_center.y < 0.4 || face_center.y > 0.65 ||
      face_radii.x < 0.4 || face_radii.y < 0.45)
    fail(ErrorCategory::InvalidArgument, "face ellipse does not cover the feature layout");
  for (const double v : resting.values()) {
    if (!(v >= 0.0 && v <= kMaxResting))
      fail(ErrorCategory::InvalidArgument, "resting activations must lie in [0, 0.15]");
  }
  if (eye_scale < 0.7 || eye_scale > 1.3 || lip_scale < 0.6 || lip_scale > 1.4)
    fail(ErrorCategory::InvalidArgument, "appearance feature scales out of range");
}

SceneStyle SceneStyle::sample(Location location, std::uint64_t seed) {
  Rng rng(seed);
  SceneStyle st;
  st.location = location;
  constexpr double spread = 0.08;
  if (location == Location::Indoor) {
    st.background_top = jitter({0.78, 0.70, 0.58}, spread, rng);
    st.background_bottom = jitter({0.50, 0.40, 0.30}, spread, rng);
    st.illumination_gain = rng.uniform(0.8, 1.0);
    st.color_cast = {1.08, 1.0, 0.85};
    st.flicker_amplitude = 0.02;
  } else {
    st.background_top = jitter({0.55, 0.72, 0.92}, spread, rng);
    st.background_bottom = jitter({0.30, 0.50, 0.28}, spread, rng);
    st.illumination_gain = rng.uniform(1.0, 1.2);
    st.color_cast = {0.92, 1.0, 1.08};
    st.flicker_amplitude = 0.06;
  }
  return st;
}

void SceneStyle::validate() const {
  if (!(illumination_gain > 0.0) || !std::all_of(color_cast.begin(), color_cast.end(), [](double g) { return g > 0.0; }))
    fail(ErrorCategory::InvalidArgument, "scene gains must be positive");
  if (!(flicker_amplitude >= 0.0 && flicker_amplitude < 1.0))
    fail(ErrorCategory::InvalidArgument, "flicker amplitude must lie in [0, 1)");
}

RgbImage render_side_view(const SubjectAppearance& appearance, const SceneStyle& style,
                          const BlendShapeVector& weights, Side side, std::size_t image_size, Rng& rng) {
  if (image_size < 8) fail(ErrorCategory::InvalidArgument, "image size must be at least 8");
  if (side == Side::Right) return render_right(appearance, style, weights, image_size, rng);
  return flip_horizontal(render_right(appearance, style, mirror_full(weights), image_size, rng));
}

// --- trajectories ------------------------------------------------------------

namespace {

// Sub-round emphasized by each face part: eyes/brows, then mouth/jaw, then
// cheeks/nose/tongue.
int emphasis_round(BlendShape shape) {
  switch (face_part(shape)) {
    case FacePart::Eyes:
    case FacePart::Brow:
      return 0;
    case FacePart::Mouth:
    case FacePart::Jaw:
      return 1;
    default:
      return 2;
  }
}

constexpr double kFocusRate = 0.12;  // events per second
constexpr double kBackgroundRate = 0.02;
constexpr double kPairProbability = 0.6;

double raised_cosine(double t, const Bump& b) {
  const double u = (t - b.start_s) / b.duration_s;
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return b.amplitude * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * u));
}

}  // namespace

ExpressionTrack ExpressionTrack::sample(double duration_s, std::uint64_t seed) {
  if (!(duration_s > 0.0)) fail(ErrorCategory::InvalidArgument, "duration must be positive");
  Rng rng(seed);
  ExpressionTrack track;

  // Families: left/right pairs of side shapes, then single center shapes.
  std::vector<std::pair<BlendShape, std::optional<BlendShape>>> families;
  for (std::size_t i = 0; i < kSideShapeCount; ++i) {
    const auto left = *blendshape_from_index(i);
    if (left == BlendShape::EyeBlinkLeft) continue;
    families.emplace_back(left, *blendshape_from_index(i + kSideShapeCount));
  }
  for (std::size_t i = kCenterBlockOffset; i < kBlendShapeCount; ++i)
    families.emplace_back(*blendshape_from_index(i), std::nullopt);

  const double third = duration_s / 3.0;
  for (const auto& [first, second] : families) {
    const int focus = emphasis_round(first);
    for (int round = 0; round < 3; ++round) {
      const double rate = round == focus ? kFocusRate : kBackgroundRate;
      const double end = (round + 1) * third;
      double t = round * third;
      while (true) {
        t += -std::log(1.0 - rng.uniform()) / rate;
        if (t >= end) break;
        const double duration = rng.uniform(0.6, 2.0);
        const double amplitude = rng.uniform(0.3, 1.0);
        if (!second) {
          track.bumps_.push_back({first, t, duration, amplitude});
          continue;
        }
        if (rng.uniform() < kPairProbability) {
          track.bumps_.push_back({first, t, duration, amplitude});
          track.bumps_.push_back({*second, t, duration, amplitude * rng.uniform(0.8, 1.0)});
        } else {
          track.bumps_.push_back({rng.uniform() < 0.5 ? first : *second, t, duration, amplitude});
        }
      }
    }
  }

  double t = rng.uniform(0.5, 2.5);
  while (t < duration_s) {
    track.blinks_.push_back({t, rng.uniform(0.10, 0.15), rng.uniform(0.8, 1.0)});
    t += rng.uniform(2.0, 4.5);
  }
  return track;
}

BlendShapeVector ExpressionTrack::at(double t_s) const {
  BlendShapeVector w;
  for (const Bump& b : bumps_) w[b.shape] += raised_cosine(t_s, b);
  double blink = 0.0;
  for (const Blink& b : blinks_) {
    const double sigma = b.fwhm_s / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const double d = (t_s - b.center_s) / sigma;
    if (std::abs(d) < 6.0) blink += b.amplitude * std::exp(-0.5 * d * d);
  }
  w[BlendShape::EyeBlinkLeft] += blink;
  w[BlendShape::EyeBlinkRight] += blink;
  for (double& v : w.values()) v = clamp01(v);
  return w;
}

// --- clips and studies -------------------------------------------------------

namespace {

void apply_exposure(RgbImage& image, double factor) {
  for (auto& p : image.pixels)
    p = static_cast<std::uint8_t>(std::clamp(std::lround(p * factor), 0L, 255L));
}

enum Stream : std::uint64_t { kTrackStream = 1, kInvalidStream = 2, kFrameStream = 0x10000 };

}  // namespace

Recording generate_clip(const SubjectAppearance& appearance, const SceneStyle& style, const ClipConfig& config,
                        const ClipKey& key, std::uint64_t seed) {
  if (!(config.duration_s > 0.0)) fail(ErrorCategory::InvalidArgument, "clip duration must be positive");
  if (!(config.frame_fps > 0.0) || !(config.gt_fps > 0.0))
    fail(ErrorCategory::InvalidArgument, "frame rates must be positive");
  if (!(config.invalid_fraction >= 0.0 && config.invalid_fraction < 1.0))
    fail(ErrorCategory::InvalidArgument, "invalid fraction must lie in [0, 1)");
  appearance.validate();
  style.validate();

  const ExpressionTrack track = ExpressionTrack::sample(config.duration_s, derive_seed(seed, kTrackStream));
  const auto expression = [&](double t) {
    BlendShapeVector w = track.at(t);
    for (std::size_t i = 0; i < kBlendShapeCount; ++i) w[i] = clamp01(w[i] + appearance.resting[i]);
    return w;
  };
  Recording rec;
  rec.key = key;

  const auto n_gt = static_cast<std::size_t>(std::floor(config.duration_s * config.gt_fps));
  rec.gt.resize(n_gt);
  for (std::size_t k = 0; k < n_gt; ++k) {
    const double t = static_cast<double>(k) / config.gt_fps;
    rec.gt[k].timestamp_ms = kLabelClockBaseMs + std::llround(t * 1000.0);
    rec.gt[k].weights = expression(t);
  }

  // Invalid labels arrive in short bursts.
  Rng invalid_rng(derive_seed(seed, kInvalidStream));
  const auto target = static_cast<std::size_t>(std::llround(config.invalid_fraction * static_cast<double>(n_gt)));
  std::size_t invalid = 0;
  while (invalid < target) {
    const std::size_t len = 3 + invalid_rng.index(6);
    const std::size_t start = invalid_rng.index(n_gt);
    for (std::size_t k = start; k < std::min(n_gt, start + len) && invalid < target; ++k) {
      if (!rec.gt[k].valid) continue;
      rec.gt[k].valid = false;
      rec.gt[k].weights = BlendShapeVector{};
      ++invalid;
    }
  }

  for (std::size_t j = 0;; ++j) {
    const double t = kFirstFrameDelayS + static_cast<double>(j) / config.frame_fps;
    if (t > config.duration_s - kFirstFrameDelayS) break;
    const std::int64_t ts = kLabelClockBaseMs + std::llround(t * 1000.0) - config.clock_offset_ms;
    const BlendShapeVector w = expression(t);
    for (const Side side : {Side::Left, Side::Right}) {
      Rng rng(derive_seed(seed, kFrameStream + 2 * j + (side == Side::Right ? 1 : 0)));
      FrameRecord f;
      f.timestamp_ms = ts;
      f.side = side;
      f.seq_index = j;
      f.image = render_side_view(appearance, style, w, side, config.image_size, rng);
      if (j < kWarmupExposure.size()) apply_exposure(f.image, kWarmupExposure[j]);
      (side == Side::Left ? rec.left : rec.right).push_back(std::move(f));
    }
  }
  return rec;
}

StudyPlan plan_study(const StudyConfig& config) {
  if (config.n_subjects < 2) fail(ErrorCategory::InvalidArgument, "a study needs at least 2 subjects");
  if (config.clips_per_location < 1) fail(ErrorCategory::InvalidArgument, "clips per location must be at least 1");
  StudyPlan plan;
  plan.config = config;
  for (std::size_t s = 0; s < config.n_subjects; ++s) {
    const std::uint64_t subject_seed = derive_seed(config.seed, s + 1);
    int clip_id = 0;
    for (const Location loc : {Location::Indoor, Location::Outdoor}) {
      for (std::size_t c = 0; c < config.clips_per_location; ++c, ++clip_id) {
        ClipSpec spec;
        spec.key = {"s" + std::to_string(s), loc, clip_id};
        spec.appearance_seed = derive_seed(subject_seed, 0);
        spec.style_seed = derive_seed(subject_seed, 2 * static_cast<std::uint64_t>(clip_id) + 1);
        spec.clip_seed = derive_seed(subject_seed, 2 * static_cast<std::uint64_t>(clip_id) + 2);
        plan.clips.push_back(spec);
      }
    }
  }
  return plan;
}

Recording generate_clip(const StudyPlan& plan, const ClipSpec& spec) {
  return generate_clip(SubjectAppearance::sample(spec.appearance_seed),
                       SceneStyle::sample(spec.key.location, spec.style_seed), plan.config.clip, spec.key,
                       spec.clip_seed);
}

RecordingManifest write_study(const StudyPlan& plan, const std::filesystem::path& dir) {
  RecordingManifest manifest;
  manifest.eye_region = default_eye_region(plan.config.clip.image_size, plan.config.clip.image_size);
  manifest.clips.resize(plan.clips.size());
  parallel_for(plan.clips.size(),
               [&](std::size_t i) { save_recording(generate_clip(plan, plan.clips[i]), dir, &manifest.clips[i]); });
  save_manifest(manifest, dir);
  return manifest;
}

}  // namespace blendtrack::synth
