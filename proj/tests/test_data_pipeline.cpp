#include "blendtrack/data_pipeline.hpp"
#include "blendtrack/error.hpp"
#include "blendtrack/synth.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

using namespace blendtrack;

namespace {

struct BlinkTrain {
  std::vector<double> centers_ms;
  double sigma_ms = 50.0;

  double at(double t) const {
    double v = 0.0;
    for (double c : centers_ms) v += std::exp(-0.5 * ((t - c) / sigma_ms) * ((t - c) / sigma_ms));
    return v;
  }
};

BlinkTrain make_train(std::uint64_t seed, double duration_ms) {
  Rng rng(seed);
  BlinkTrain b;
  for (double t = rng.uniform(500, 2500); t < duration_ms - 500; t += rng.uniform(2000, 4500)) b.centers_ms.push_back(t);
  return b;
}

// Proxy at 8 fps on the recorder clock, label channel at 30 fps on a clock
// ahead by offset_ms.
std::pair<TimeSeries, TimeSeries> blink_series(const BlinkTrain& b, double duration_ms, std::int64_t offset_ms) {
  TimeSeries proxy;
  for (int j = 0; 200 + 125.0 * j < duration_ms; ++j) {
    const auto t = static_cast<std::int64_t>(200 + 125 * j);
    proxy.timestamps_ms.push_back(t);
    proxy.values.push_back(0.3 + 0.2 * b.at(static_cast<double>(t)));
  }
  TimeSeries gt;
  for (int k = 0; k * 1000.0 / 30.0 < duration_ms; ++k) {
    const auto label_t = static_cast<std::int64_t>(std::llround(k * 1000.0 / 30.0));
    gt.timestamps_ms.push_back(label_t);
    gt.values.push_back(b.at(static_cast<double>(label_t - offset_ms)));
  }
  return {proxy, gt};
}

FrameRecord solid_frame(std::uint8_t value, std::size_t seq, std::int64_t t) {
  FrameRecord f;
  f.image = RgbImage(8, 8);
  std::fill(f.image.pixels.begin(), f.image.pixels.end(), value);
  f.seq_index = seq;
  f.timestamp_ms = t;
  return f;
}

std::vector<GroundTruthRecord> gt_grid(std::size_t n, std::int64_t t0) {
  std::vector<GroundTruthRecord> gt;
  for (std::size_t k = 0; k < n; ++k) {
    GroundTruthRecord g;
    g.timestamp_ms = t0 + std::llround(static_cast<double>(k) * 1000.0 / 30.0);
    gt.push_back(g);
  }
  return gt;
}

}  // namespace

TEST_CASE("blink proxy of white and black frames") {
  const std::vector<FrameRecord> frames{solid_frame(255, 0, 0), solid_frame(0, 1, 125)};
  const auto p = blink_proxy(frames, Rect{1, 1, 4, 3});
  CHECK(p.values[0] == doctest::Approx(0.0));
  CHECK(p.values[1] == doctest::Approx(1.0));
  CHECK(p.timestamps_ms == std::vector<std::int64_t>{0, 125});
  CHECK_THROWS_AS(blink_proxy(frames, Rect{1, 1, 0, 3}), Error);
  CHECK_THROWS_AS(blink_proxy(frames, Rect{6, 6, 4, 4}), Error);
}

TEST_CASE("rendered blink at 5000 ms peaks in the proxy within one frame") {
  const auto ap = synth::SubjectAppearance::sample(3);
  const auto style = synth::SceneStyle::sample(Location::Indoor, 4);
  Rng rng(5);
  std::vector<FrameRecord> frames;
  for (std::size_t j = 0; j < 80; ++j) {
    const double t = 125.0 * static_cast<double>(j);
    BlendShapeVector w;
    const double blink = std::exp(-0.5 * std::pow((t - 5000.0) / 55.0, 2));
    w[BlendShape::EyeBlinkLeft] = blink;
    w[BlendShape::EyeBlinkRight] = blink;
    FrameRecord f;
    f.image = synth::render_side_view(ap, style, w, Side::Right, 64, rng);
    f.timestamp_ms = static_cast<std::int64_t>(t);
    f.seq_index = j;
    frames.push_back(std::move(f));
  }
  const auto p = blink_proxy(frames, default_eye_region(64, 64));
  const auto peak = std::max_element(p.values.begin(), p.values.end()) - p.values.begin();
  CHECK(std::abs(p.timestamps_ms[static_cast<std::size_t>(peak)] - 5000) <= 125);
}

TEST_CASE("offset of identical series is zero") {
  const auto train = make_train(1, 30000);
  auto [proxy, gt] = blink_series(train, 30000, 0);
  CHECK(estimate_offset(proxy, gt, 2000) == 0);
}

TEST_CASE("injected offsets are recovered and agree with the exhaustive oracle") {
  const auto train = make_train(2, 30000);
  for (const std::int64_t injected : {-1200, -400, 0, 400, 1200}) {
    auto [proxy, gt] = blink_series(train, 30000, injected);
    const std::int64_t est = estimate_offset(proxy, gt, 2000);
    CHECK(std::abs(est - injected) <= 33);
    const std::int64_t ref =
        oracle::best_offset(proxy.timestamps_ms, proxy.values, gt.timestamps_ms, gt.values, 2000);
    CHECK(std::abs(est - ref) <= 1);
  }
}

TEST_CASE("offset estimate shifts with the label stream") {
  const auto train = make_train(3, 30000);
  auto [proxy, gt] = blink_series(train, 30000, 250);
  const std::int64_t base = estimate_offset(proxy, gt, 2000);
  TimeSeries shifted = gt;
  for (auto& t : shifted.timestamps_ms) t += 700;
  CHECK(estimate_offset(proxy, shifted, 2000) - base == 700);
}

TEST_CASE("degenerate offset inputs are errors") {
  const auto train = make_train(4, 30000);
  auto [proxy, gt] = blink_series(train, 30000, 0);
  TimeSeries flat = gt;
  std::fill(flat.values.begin(), flat.values.end(), 0.0);
  try {
    estimate_offset(proxy, flat, 2000);
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Data);
  }
  TimeSeries one{{0}, {1.0}};
  CHECK_THROWS_AS(estimate_offset(one, gt, 100), Error);
}

TEST_CASE("gt blink series averages both eyes over valid records") {
  std::vector<GroundTruthRecord> gt = gt_grid(3, 0);
  gt[0].weights[BlendShape::EyeBlinkLeft] = 0.2;
  gt[0].weights[BlendShape::EyeBlinkRight] = 0.6;
  gt[1].valid = false;
  const auto s = gt_blink_series(gt);
  CHECK(s.values.size() == 2);
  CHECK(s.values[0] == doctest::Approx(0.4));
  CHECK(s.timestamps_ms[1] == gt[2].timestamp_ms);
}

TEST_CASE("align matches within tolerance") {
  std::vector<GroundTruthRecord> gt(2);
  gt[0].timestamp_ms = 1005;
  gt[1].timestamp_ms = 1100;
  const std::vector<FrameRecord> frames{solid_frame(0, 0, 1000)};
  const auto a = align(frames, gt, 0, 17);
  REQUIRE(a.pairs.size() == 1);
  CHECK(a.pairs[0].gt_index == 0);

  gt[0].timestamp_ms = 1030;
  const auto b = align(frames, gt, 0, 17);
  CHECK(b.pairs.empty());
  CHECK(b.dropped_unmatched == 1);

  const auto c = align(frames, gt, 25, 17);
  CHECK(c.pairs.size() == 1);
}

TEST_CASE("8 fps frames against 30 fps labels match at least 99 percent") {
  const auto gt = gt_grid(30 * 120, 0);
  std::vector<FrameRecord> frames;
  Rng rng(9);
  for (std::size_t j = 0; j < 8 * 118; ++j)
    frames.push_back(solid_frame(0, j, 200 + static_cast<std::int64_t>(j) * 125 + static_cast<std::int64_t>(rng.index(5))));
  const auto a = align(frames, gt, 0, 17);
  CHECK(static_cast<double>(a.pairs.size()) / frames.size() >= 0.99);
  std::set<std::size_t> used;
  for (const auto& p : a.pairs) {
    CHECK(used.insert(p.gt_index).second);
    CHECK(std::abs(gt[p.gt_index].timestamp_ms - frames[p.frame_index].timestamp_ms) <= 17);
  }
}

TEST_CASE("clean drops warm-up frames and invalid labels") {
  std::vector<AlignedPair> pairs;
  for (std::size_t i = 0; i < 10; ++i) pairs.push_back({i, i, i, true});
  const auto c = clean(pairs);
  CHECK(c.pairs.size() == 7);
  CHECK(c.dropped_warmup == 3);
  CHECK(c.pairs.front().seq_index == 3);

  pairs[5].gt_valid = false;
  const auto d = clean(pairs);
  CHECK(d.pairs.size() == 6);
  CHECK(d.dropped_invalid == 1);
  CHECK(clean(d.pairs).pairs.size() == d.pairs.size());
  CHECK(clean(std::vector<AlignedPair>{}).pairs.empty());
}

TEST_CASE("build_samples flips left images and mirrors their center labels") {
  FrameRecord f = solid_frame(0, 4, 100);
  f.image.at(2, 1, 0) = 200;
  f.side = Side::Left;
  std::vector<GroundTruthRecord> gt(1);
  gt[0].weights[BlendShape::JawLeft] = 0.7;
  const std::vector<AlignedPair> pairs{{0, 0, 4, true}};
  const ClipKey key{"s0", Location::Indoor, 0};
  const auto left = build_samples(pairs, std::vector{f}, gt, Side::Left, key);
  REQUIRE(left.size() == 1);
  CHECK(left[0].image == flip_horizontal(f.image));
  CHECK(left[0].target[kSideShapeCount + 2] == 0.7);
  CHECK(left[0].provenance.clip == key);
  CHECK(left[0].provenance.seq_index == 4);

  f.side = Side::Right;
  const std::vector<GroundTruthRecord> zeros(1);
  const auto right = build_samples(pairs, std::vector{f}, zeros, Side::Right, key);
  CHECK(right[0].image == f.image);
  CHECK(right[0].target == HalfFaceTarget{});
}

TEST_CASE("prepare_recording on a synthetic clip") {
  synth::ClipConfig cfg;
  cfg.duration_s = 30.0;
  cfg.clock_offset_ms = -400;
  cfg.image_size = 32;
  const auto ap = synth::SubjectAppearance::sample(11);
  const auto style = synth::SceneStyle::sample(Location::Outdoor, 12);
  const Recording rec = synth::generate_clip(ap, style, cfg, {"s1", Location::Outdoor, 3}, 13);
  PipelineConfig pc;
  pc.eye_region = default_eye_region(32, 32);
  const PreparedClip clip = prepare_recording(rec, pc);
  CHECK(std::abs(clip.sync.offset_ms + 400) <= 33);
  CHECK(clip.sync.frames == rec.left.size() + rec.right.size());
  CHECK(clip.sync.dropped_warmup == 6);
  CHECK(clip.sync.kept == clip.samples.size());
  CHECK(clip.sync.matched == clip.sync.kept + clip.sync.dropped_warmup + clip.sync.dropped_invalid);
  CHECK(clip.sync.frames == clip.sync.matched + clip.sync.dropped_unmatched);
  CHECK(clip.duration_s == doctest::Approx(29.6).epsilon(0.01));
  for (const auto& s : clip.samples) CHECK(s.provenance.seq_index >= kWarmupFrames);
  CHECK(!clip.pairs.empty());
  for (const auto& p : clip.pairs) {
    CHECK(clip.samples[p.left_sample].side == Side::Left);
    CHECK(clip.samples[p.right_sample].side == Side::Right);
    CHECK(clip.samples[p.left_sample].provenance.seq_index == clip.samples[p.right_sample].provenance.seq_index);
  }
}

TEST_CASE("recording validation") {
  Recording r;
  r.right = {solid_frame(0, 0, 10), solid_frame(0, 1, 10)};
  CHECK_THROWS_AS(r.validate(), Error);
  r.right[1].timestamp_ms = 20;
  r.right[1].seq_index = 2;
  CHECK_THROWS_AS(r.validate(), Error);
}

TEST_CASE("ground truth CSV round trip and validation") {
  const auto dir = test::scratch_dir("gtcsv");
  Rng rng(3);
  std::vector<GroundTruthRecord> gt = gt_grid(5, 100);
  for (auto& g : gt) g.weights = test::random_weights(rng);
  gt[2].valid = false;
  gt[2].weights = BlendShapeVector{};
  write_gt_csv(gt, dir / "gt.csv");
  const auto back = read_gt_csv(dir / "gt.csv");
  REQUIRE(back.size() == gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    CHECK(back[i].timestamp_ms == gt[i].timestamp_ms);
    CHECK(back[i].valid == gt[i].valid);
    CHECK(back[i].weights == gt[i].weights);
  }

  std::ifstream in(dir / "gt.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("timestamp_ms,valid,eyeBlinkLeft,", 0) == 0);
  std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto expect_parse = [&](const std::string& text) {
    std::ofstream(dir / "bad.csv") << text;
    try {
      read_gt_csv(dir / "bad.csv");
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::Parse);
    }
  };
  std::string swapped = header;
  swapped.replace(swapped.find("eyeBlinkLeft"), 12, "eyeBlinkLefty");
  expect_parse(swapped + "\n" + rest);
  std::string row = "100,2";
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) row += ",0";
  expect_parse(header + "\n" + row + "\n");
  std::string out_of_range = "100,1,1.5";
  for (std::size_t k = 1; k < kBlendShapeCount; ++k) out_of_range += ",0";
  expect_parse(header + "\n" + out_of_range + "\n");
  expect_parse(header + "\n100,1,0.5\n");
  CHECK_THROWS_AS(read_gt_csv(dir / "missing.csv"), Error);
}

TEST_CASE("frame directory round trip") {
  const auto dir = test::scratch_dir("frames");
  std::vector<FrameRecord> frames{solid_frame(10, 0, 5), solid_frame(20, 1, 130), solid_frame(30, 2, 255)};
  for (auto& f : frames) f.side = Side::Left;
  write_frames(frames, dir / "left");
  const auto back = read_frames(dir / "left", Side::Left);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].timestamp_ms == frames[i].timestamp_ms);
    CHECK(back[i].seq_index == i);
    CHECK(back[i].image == frames[i].image);
    CHECK(back[i].side == Side::Left);
  }
  CHECK_THROWS_AS(read_frames(dir / "nothing", Side::Left), Error);
}

TEST_CASE("manifest round trip, warnings and duplicates") {
  const auto dir = test::scratch_dir("manifest");
  RecordingManifest m;
  m.eye_region = Rect{1, 2, 3, 4};
  for (const char* s : {"s0", "s1"})
    for (const Location loc : {Location::Indoor, Location::Outdoor})
      m.clips.push_back({{s, loc, loc == Location::Indoor ? 0 : 1}, "l", "r", "gt.csv"});
  save_manifest(m, dir);
  const auto back = load_manifest(dir);
  CHECK(back.clips.size() == 4);
  REQUIRE(back.eye_region.has_value());
  CHECK(back.eye_region->height == 4);
  CHECK(back.subjects() == std::vector<std::string>{"s0", "s1"});
  CHECK(back.warnings.size() == 4);

  m.clips.push_back(m.clips.front());
  save_manifest(m, dir);
  try {
    load_manifest(dir);
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Data);
  }
  std::ofstream(dir / "manifest.json") << "{\"subjects\": [";
  CHECK_THROWS_AS(load_manifest(dir), Error);
  CHECK_THROWS_AS(load_manifest(dir / "absent"), Error);
}

TEST_CASE("recording save and load round trip") {
  synth::ClipConfig cfg;
  cfg.duration_s = 3.0;
  cfg.image_size = 16;
  const Recording rec = synth::generate_clip(synth::SubjectAppearance::sample(1), synth::SceneStyle::sample(Location::Indoor, 2),
                                             cfg, {"s0", Location::Indoor, 0}, 3);
  const auto dir = test::scratch_dir("recording");
  ManifestClip entry;
  save_recording(rec, dir, &entry);
  const Recording back = load_recording(entry, dir);
  CHECK(back.key == rec.key);
  CHECK(back.left.size() == rec.left.size());
  CHECK(back.gt.size() == rec.gt.size());
  CHECK(back.right.back().image == rec.right.back().image);
  CHECK(back.gt.back().weights == rec.gt.back().weights);
}
