#include "blendtrack/data_pipeline.hpp"

#include "blendtrack/error.hpp"
#include "text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace blendtrack {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view location_name(Location location) {
  return location == Location::Indoor ? "Indoor" : "Outdoor";
}

std::optional<Location> location_from_name(std::string_view name) {
  if (name == "Indoor") return Location::Indoor;
  if (name == "Outdoor") return Location::Outdoor;
  return std::nullopt;
}

std::string ClipKey::to_string() const {
  return subject_id + "/" + std::string(location_name(location)) + "/" + std::to_string(clip_id);
}

namespace {

template <class Records, class Stamp>
void check_increasing(const Records& records, Stamp stamp, const std::string& what) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (stamp(records[i]) <= stamp(records[i - 1]))
      fail(ErrorCategory::Data, what + ": timestamps not strictly increasing at record " + std::to_string(i));
  }
}

}  // namespace

void Recording::validate() const {
  const auto frame_ts = [](const FrameRecord& f) { return f.timestamp_ms; };
  for (const auto* stream : {&left, &right}) {
    const std::string what = key.to_string() + (stream == &left ? " left frames" : " right frames");
    check_increasing(*stream, frame_ts, what);
    for (std::size_t i = 0; i < stream->size(); ++i) {
      if ((*stream)[i].seq_index != i)
        fail(ErrorCategory::Data, what + ": seq_index not contiguous from 0 at position " + std::to_string(i));
    }
  }
  check_increasing(gt, [](const GroundTruthRecord& g) { return g.timestamp_ms; },
                   key.to_string() + " ground truth");
}

Rect default_eye_region(std::size_t image_height, std::size_t image_width) {
  const auto frac = [](double f, std::size_t n) { return static_cast<std::size_t>(std::lround(f * n)); };
  Rect r;
  r.x = frac(0.35, image_width);
  r.y = frac(0.27, image_height);
  r.width = std::max<std::size_t>(1, frac(0.65, image_width) - r.x);
  r.height = std::max<std::size_t>(1, frac(0.45, image_height) - r.y);
  return r;
}

TimeSeries blink_proxy(std::span<const FrameRecord> frames, const Rect& eye_region) {
  if (eye_region.width == 0 || eye_region.height == 0)
    fail(ErrorCategory::InvalidArgument, "blink_proxy: empty eye region");
  TimeSeries out;
  out.timestamps_ms.reserve(frames.size());
  out.values.reserve(frames.size());
  for (const auto& f : frames) {
    const RgbImage& img = f.image;
    if (eye_region.x + eye_region.width > img.width || eye_region.y + eye_region.height > img.height)
      fail(ErrorCategory::InvalidArgument, "blink_proxy: eye region outside image bounds");
    double sum = 0.0;
    for (std::size_t y = eye_region.y; y < eye_region.y + eye_region.height; ++y) {
      for (std::size_t x = eye_region.x; x < eye_region.x + eye_region.width; ++x) {
        const double lum = (0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2)) / 255.0;
        sum += 1.0 - lum;
      }
    }
    out.timestamps_ms.push_back(f.timestamp_ms);
    out.values.push_back(sum / static_cast<double>(eye_region.width * eye_region.height));
  }
  return out;
}

TimeSeries gt_blink_series(std::span<const GroundTruthRecord> gt) {
  TimeSeries out;
  for (const auto& g : gt) {
    if (!g.valid) continue;
    out.timestamps_ms.push_back(g.timestamp_ms);
    out.values.push_back(0.5 * (g.weights[BlendShape::EyeBlinkLeft] + g.weights[BlendShape::EyeBlinkRight]));
  }
  return out;
}

namespace {

void check_series(const TimeSeries& s, const char* what) {
  if (s.timestamps_ms.size() != s.values.size())
    fail(ErrorCategory::InvalidArgument, std::string(what) + ": timestamp/value length mismatch");
  if (s.values.size() < 2) fail(ErrorCategory::Data, std::string(what) + ": need at least 2 samples");
  for (std::size_t i = 1; i < s.timestamps_ms.size(); ++i) {
    if (s.timestamps_ms[i] <= s.timestamps_ms[i - 1])
      fail(ErrorCategory::Data, std::string(what) + ": timestamps not strictly increasing");
  }
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  if (!(*hi > *lo)) fail(ErrorCategory::Data, std::string(what) + ": zero variance (no blinks to align)");
}

}  // namespace

std::int64_t estimate_offset(const TimeSeries& proxy, const TimeSeries& gt_blink, std::int64_t search_range_ms) {
  if (search_range_ms < 0) fail(ErrorCategory::InvalidArgument, "estimate_offset: negative search range");
  check_series(proxy, "blink proxy");
  check_series(gt_blink, "ground-truth blink channel");

  // Proxy on a 1 ms grid by linear interpolation.
  const std::int64_t t0 = proxy.timestamps_ms.front();
  const std::int64_t t1 = proxy.timestamps_ms.back();
  std::vector<double> grid(static_cast<std::size_t>(t1 - t0 + 1));
  std::size_t seg = 0;
  for (std::int64_t t = t0; t <= t1; ++t) {
    while (proxy.timestamps_ms[seg + 1] < t) ++seg;
    const auto ta = static_cast<double>(proxy.timestamps_ms[seg]);
    const auto tb = static_cast<double>(proxy.timestamps_ms[seg + 1]);
    const double a = (static_cast<double>(t) - ta) / (tb - ta);
    grid[static_cast<std::size_t>(t - t0)] = (1.0 - a) * proxy.values[seg] + a * proxy.values[seg + 1];
  }

  const std::size_t min_overlap = std::max<std::size_t>(2, gt_blink.values.size() / 4);
  double best_score = -2.0;
  std::int64_t best_offset = 0;
  bool found = false;

  const auto score = [&](std::int64_t offset) -> std::optional<double> {
    double sp = 0, sg = 0, spp = 0, sgg = 0, spg = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < gt_blink.values.size(); ++k) {
      const std::int64_t t = gt_blink.timestamps_ms[k] - offset;
      if (t < t0 || t > t1) continue;
      const double p = grid[static_cast<std::size_t>(t - t0)];
      const double g = gt_blink.values[k];
      sp += p;
      sg += g;
      spp += p * p;
      sgg += g * g;
      spg += p * g;
      ++n;
    }
    if (n < min_overlap) return std::nullopt;
    const double dn = static_cast<double>(n);
    const double var_p = dn * spp - sp * sp;
    const double var_g = dn * sgg - sg * sg;
    if (!(var_p > 0.0) || !(var_g > 0.0)) return std::nullopt;
    return (dn * spg - sp * sg) / std::sqrt(var_p * var_g);
  };

  // Visit offsets by increasing |offset| so ties keep the smallest one.
  const auto consider = [&](std::int64_t offset) {
    const auto s = score(offset);
    if (s && (!found || *s > best_score + 1e-12)) {
      best_score = *s;
      best_offset = offset;
      found = true;
    }
  };
  consider(0);
  for (std::int64_t mag = 1; mag <= search_range_ms; ++mag) {
    consider(-mag);
    consider(mag);
  }
  if (!found) fail(ErrorCategory::Data, "estimate_offset: series do not overlap within the search range");
  return best_offset;
}

AlignResult align(std::span<const FrameRecord> frames, std::span<const GroundTruthRecord> gt, std::int64_t offset_ms,
                  std::int64_t tolerance_ms) {
  AlignResult result;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::int64_t target = frames[i].timestamp_ms + offset_ms;
    const auto it = std::lower_bound(gt.begin(), gt.end(), target,
                                     [](const GroundTruthRecord& g, std::int64_t t) { return g.timestamp_ms < t; });
    std::optional<std::size_t> best;
    std::int64_t best_dist = 0;
    if (it != gt.end()) {
      best = static_cast<std::size_t>(it - gt.begin());
      best_dist = it->timestamp_ms - target;
    }
    if (it != gt.begin()) {
      const auto prev = std::prev(it);
      const std::int64_t d = target - prev->timestamp_ms;
      if (!best || d <= best_dist) {
        best = static_cast<std::size_t>(prev - gt.begin());
        best_dist = d;
      }
    }
    if (best && best_dist <= tolerance_ms) {
      result.pairs.push_back({i, *best, frames[i].seq_index, gt[*best].valid});
    } else {
      ++result.dropped_unmatched;
    }
  }
  return result;
}

CleanResult clean(std::span<const AlignedPair> pairs) {
  CleanResult result;
  for (const auto& p : pairs) {
    if (p.seq_index < kWarmupFrames) {
      ++result.dropped_warmup;
    } else if (!p.gt_valid) {
      ++result.dropped_invalid;
    } else {
      result.pairs.push_back(p);
    }
  }
  return result;
}

std::vector<SyncedSample> build_samples(std::span<const AlignedPair> pairs, std::span<const FrameRecord> frames,
                                        std::span<const GroundTruthRecord> gt, Side side, const ClipKey& clip) {
  std::vector<SyncedSample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const FrameRecord& f = frames[p.frame_index];
    SyncedSample s;
    s.image = side == Side::Left ? flip_horizontal(f.image) : f.image;
    s.side = side;
    s.target = extract_half_target(gt[p.gt_index].weights, side);
    s.provenance = {clip, f.timestamp_ms, f.seq_index};
    out.push_back(std::move(s));
  }
  return out;
}

PreparedClip prepare_recording(const Recording& recording, const PipelineConfig& config) {
  recording.validate();
  if (recording.right.empty() || recording.left.empty() || recording.gt.empty())
    fail(ErrorCategory::Data, recording.key.to_string() + ": empty frame or label stream");

  const RgbImage& first = recording.right.front().image;
  const Rect eye = config.eye_region.value_or(default_eye_region(first.height, first.width));
  const std::span<const FrameRecord> right(recording.right);
  const auto settled = right.subspan(std::min(kWarmupFrames, right.size()));
  const TimeSeries proxy = blink_proxy(settled, eye);

  PreparedClip clip;
  clip.key = recording.key;
  clip.sync.clip = recording.key;
  try {
    clip.sync.offset_ms = estimate_offset(proxy, gt_blink_series(recording.gt), config.offset_search_ms);
  } catch (const Error& e) {
    fail(e.category(), recording.key.to_string() + ": " + e.what());
  }

  std::map<std::size_t, std::size_t> right_by_seq;
  std::map<std::size_t, std::size_t> left_by_seq;
  std::map<std::size_t, std::size_t> gt_by_seq;
  for (const Side side : {Side::Right, Side::Left}) {
    const auto& frames = side == Side::Left ? recording.left : recording.right;
    const AlignResult aligned = align(frames, recording.gt, clip.sync.offset_ms, config.match_tolerance_ms);
    const CleanResult cleaned = clean(aligned.pairs);
    clip.sync.frames += frames.size();
    clip.sync.matched += aligned.pairs.size();
    clip.sync.dropped_unmatched += aligned.dropped_unmatched;
    clip.sync.dropped_warmup += cleaned.dropped_warmup;
    clip.sync.dropped_invalid += cleaned.dropped_invalid;
    clip.sync.kept += cleaned.pairs.size();

    auto samples = build_samples(cleaned.pairs, frames, recording.gt, side, recording.key);
    auto& index = side == Side::Left ? left_by_seq : right_by_seq;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      index[samples[i].provenance.seq_index] = clip.samples.size();
      gt_by_seq[samples[i].provenance.seq_index] = cleaned.pairs[i].gt_index;
      clip.samples.push_back(std::move(samples[i]));
    }
  }
  for (const auto& [seq, r] : right_by_seq) {
    const auto l = left_by_seq.find(seq);
    if (l == left_by_seq.end()) continue;
    clip.pairs.push_back({l->second, r, recording.gt[gt_by_seq[seq]].weights});
  }
  clip.duration_s =
      static_cast<double>(recording.right.back().timestamp_ms - recording.right.front().timestamp_ms) / 1000.0;
  return clip;
}

// --- files -------------------------------------------------------------------

std::vector<std::string> RecordingManifest::subjects() const {
  std::vector<std::string> out;
  for (const auto& c : clips) {
    if (std::find(out.begin(), out.end(), c.key.subject_id) == out.end()) out.push_back(c.key.subject_id);
  }
  return out;
}

namespace {

const fs::path kManifestName = "manifest.json";

json rect_to_json(const Rect& r) {
  return {{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}};
}

}  // namespace

RecordingManifest load_manifest(const fs::path& dataset_dir) {
  const fs::path path = dataset_dir / kManifestName;
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open manifest " + path.string());
  RecordingManifest manifest;
  try {
    const json doc = json::parse(in);
    if (doc.contains("eye_region")) {
      const auto& r = doc.at("eye_region");
      manifest.eye_region = Rect{r.at("x").get<std::size_t>(), r.at("y").get<std::size_t>(),
                                 r.at("width").get<std::size_t>(), r.at("height").get<std::size_t>()};
    }
    for (const auto& subject : doc.at("subjects")) {
      const auto id = subject.at("subject_id").get<std::string>();
      for (const auto& c : subject.at("clips")) {
        ManifestClip clip;
        clip.key.subject_id = id;
        const auto loc_name = c.at("location").get<std::string>();
        const auto loc = location_from_name(loc_name);
        if (!loc) fail(ErrorCategory::Parse, path.string() + ": unknown location '" + loc_name + "'");
        clip.key.location = *loc;
        clip.key.clip_id = c.at("clip_id").get<int>();
        clip.left_frames_dir = c.at("left_frames_dir").get<std::string>();
        clip.right_frames_dir = c.at("right_frames_dir").get<std::string>();
        clip.gt_csv = c.at("gt_csv").get<std::string>();
        manifest.clips.push_back(std::move(clip));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::Parse, path.string() + ": " + e.what());
  }

  std::set<ClipKey> seen;
  std::map<std::pair<std::string, Location>, std::size_t> per_location;
  for (const auto& c : manifest.clips) {
    if (!seen.insert(c.key).second) fail(ErrorCategory::Data, path.string() + ": duplicate clip " + c.key.to_string());
    ++per_location[{c.key.subject_id, c.key.location}];
  }
  for (const auto& subject : manifest.subjects()) {
    for (const Location loc : {Location::Indoor, Location::Outdoor}) {
      const std::size_t n = per_location[{subject, loc}];
      if (n < kProtocolClipsPerLocation) {
        manifest.warnings.push_back("subject " + subject + " has " + std::to_string(n) + " " +
                                    std::string(location_name(loc)) + " clips (protocol default is 5)");
      }
    }
  }
  return manifest;
}

void save_manifest(const RecordingManifest& manifest, const fs::path& dataset_dir) {
  json doc;
  doc["schema"] = "btrk/1";
  if (manifest.eye_region) doc["eye_region"] = rect_to_json(*manifest.eye_region);
  json subjects = json::array();
  for (const auto& subject : manifest.subjects()) {
    json clips = json::array();
    for (const auto& c : manifest.clips) {
      if (c.key.subject_id != subject) continue;
      clips.push_back({{"clip_id", c.key.clip_id},
                       {"location", location_name(c.key.location)},
                       {"left_frames_dir", c.left_frames_dir.generic_string()},
                       {"right_frames_dir", c.right_frames_dir.generic_string()},
                       {"gt_csv", c.gt_csv.generic_string()}});
    }
    subjects.push_back({{"subject_id", subject}, {"clips", std::move(clips)}});
  }
  doc["subjects"] = std::move(subjects);
  fs::create_directories(dataset_dir);
  std::ofstream out(dataset_dir / kManifestName);
  if (!out) fail(ErrorCategory::Io, "cannot write manifest in " + dataset_dir.string());
  out << doc.dump(2) << '\n';
}

void write_gt_csv(std::span<const GroundTruthRecord> gt, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::Io, "cannot write " + path.string());
  out << "timestamp_ms,valid";
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) out << ',' << name_of_index(k);
  out << '\n';
  for (const auto& g : gt) {
    out << g.timestamp_ms << ',' << (g.valid ? 1 : 0);
    for (std::size_t k = 0; k < kBlendShapeCount; ++k) out << ',' << text::format_double(g.weights[k]);
    out << '\n';
  }
  if (!out) fail(ErrorCategory::Io, "write failed for " + path.string());
}

std::vector<GroundTruthRecord> read_gt_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open " + path.string());
  const auto bad = [&](std::size_t line, const std::string& what) {
    fail(ErrorCategory::Parse, path.string() + ":" + std::to_string(line) + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line)) bad(1, "missing header");
  const auto header = text::split(text::trim_cr(line), ',');
  if (header.size() != 2 + kBlendShapeCount || header[0] != "timestamp_ms" || header[1] != "valid")
    bad(1, "header must be 'timestamp_ms,valid,<52 canonical names>'");
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    if (header[2 + k] != name_of_index(k))
      bad(1, "column " + std::to_string(k + 3) + " is '" + std::string(header[2 + k]) + "', expected '" +
                 std::string(name_of_index(k)) + "'");
  }
  std::vector<GroundTruthRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::trim_cr(line);
    if (row.empty()) continue;
    const auto cells = text::split(row, ',');
    if (cells.size() != header.size()) bad(line_no, "expected " + std::to_string(header.size()) + " columns");
    GroundTruthRecord g;
    const auto ts = text::parse_int(cells[0]);
    if (!ts) bad(line_no, "bad timestamp");
    g.timestamp_ms = *ts;
    if (cells[1] == "1") {
      g.valid = true;
    } else if (cells[1] == "0") {
      g.valid = false;
    } else {
      bad(line_no, "valid must be 0 or 1");
    }
    for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
      const auto v = text::parse_double(cells[2 + k]);
      if (!v) bad(line_no, "bad weight in column " + std::to_string(k + 3));
      if (g.valid && !(*v >= 0.0 && *v <= 1.0)) bad(line_no, "weight outside [0, 1]");
      g.weights[k] = *v;
    }
    out.push_back(g);
  }
  return out;
}

namespace {

std::string frame_name(std::size_t seq) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.ppm", seq);
  return buf;
}

}  // namespace

void write_frames(std::span<const FrameRecord> frames, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream ts(dir / "timestamps.csv");
  if (!ts) fail(ErrorCategory::Io, "cannot write " + (dir / "timestamps.csv").string());
  ts << "seq_index,timestamp_ms\n";
  for (const auto& f : frames) {
    ts << f.seq_index << ',' << f.timestamp_ms << '\n';
    write_ppm(f.image, dir / frame_name(f.seq_index));
  }
}

std::vector<FrameRecord> read_frames(const fs::path& dir, Side side) {
  const fs::path ts_path = dir / "timestamps.csv";
  std::ifstream in(ts_path);
  if (!in) fail(ErrorCategory::Io, "cannot open " + ts_path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim_cr(line) != "seq_index,timestamp_ms")
    fail(ErrorCategory::Parse, ts_path.string() + ":1: header must be 'seq_index,timestamp_ms'");
  std::vector<FrameRecord> frames;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::trim_cr(line);
    if (row.empty()) continue;
    const auto cells = text::split(row, ',');
    const auto seq = cells.size() == 2 ? text::parse_int(cells[0]) : std::nullopt;
    const auto t = cells.size() == 2 ? text::parse_int(cells[1]) : std::nullopt;
    if (!seq || !t || *seq < 0)
      fail(ErrorCategory::Parse, ts_path.string() + ":" + std::to_string(line_no) + ": malformed row");
    FrameRecord f;
    f.seq_index = static_cast<std::size_t>(*seq);
    f.timestamp_ms = *t;
    f.side = side;
    f.image = read_ppm(dir / frame_name(f.seq_index));
    frames.push_back(std::move(f));
  }
  return frames;
}

Recording load_recording(const ManifestClip& clip, const fs::path& dataset_dir) {
  Recording rec;
  rec.key = clip.key;
  rec.left = read_frames(dataset_dir / clip.left_frames_dir, Side::Left);
  rec.right = read_frames(dataset_dir / clip.right_frames_dir, Side::Right);
  rec.gt = read_gt_csv(dataset_dir / clip.gt_csv);
  rec.validate();
  return rec;
}

void save_recording(const Recording& recording, const fs::path& dataset_dir, ManifestClip* entry) {
  const std::string loc = recording.key.location == Location::Indoor ? "indoor" : "outdoor";
  const fs::path base = fs::path(recording.key.subject_id) / (loc + "_" + std::to_string(recording.key.clip_id));
  ManifestClip clip;
  clip.key = recording.key;
  clip.left_frames_dir = base / "left";
  clip.right_frames_dir = base / "right";
  clip.gt_csv = base / "gt.csv";
  write_frames(recording.left, dataset_dir / clip.left_frames_dir);
  write_frames(recording.right, dataset_dir / clip.right_frames_dir);
  write_gt_csv(recording.gt, dataset_dir / clip.gt_csv);
  if (entry) *entry = std::move(clip);
}

}  // namespace blendtrack
