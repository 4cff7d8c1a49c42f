#include "blendtrack/reports.hpp"

namespace blendtrack {

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json clip_key_json(const ClipKey& key) {
  return Json{{"subject_id", key.subject_id}, {"location", location_name(key.location)}, {"clip_id", key.clip_id}};
}

Json split_json(const SplitPlan& split) {
  const auto keys = [](const std::vector<ClipKey>& list) {
    Json out = Json::array();
    for (const auto& k : list) out.push_back(clip_key_json(k));
    return out;
  };
  return Json{{"test_subject", split.test_subject},
              {"training_subjects", split.training_subjects},
              {"calibration_clip", clip_key_json(split.calibration_clip)},
              {"same_location", keys(split.same_location)},
              {"another_location", keys(split.another_location)}};
}

Json provenance_json(const ProvenanceCounts& counts) {
  Json out = Json::array();
  for (const auto& [key, n] : counts) {
    Json entry = clip_key_json(key);
    entry["samples"] = n;
    out.push_back(std::move(entry));
  }
  return out;
}

Json sync_report_json(const SyncReport& r) {
  Json out = clip_key_json(r.clip);
  out["offset_ms"] = r.offset_ms;
  out["frames"] = r.frames;
  out["matched"] = r.matched;
  out["dropped_unmatched"] = r.dropped_unmatched;
  out["dropped_warmup"] = r.dropped_warmup;
  out["dropped_invalid"] = r.dropped_invalid;
  out["kept"] = r.kept;
  return out;
}

Json evaluation_json(const Evaluation& ev, double icd_mm) {
  const VertexErrorReport& v = ev.vertex;
  Json per_r = Json::object();
  for (std::size_t i = 0; i < kBlendShapeCount; ++i)
    per_r[std::string(name_of_index(i))] = optional_number(ev.correlation.per_blendshape_r[i]);
  Json regions = Json::object();
  for (const auto& [name, mean] : ev.correlation.region_means) regions[name] = mean;
  return Json{{"per_vertex_mm", v.per_vertex_mm},
              {"eye_mean_mm", v.eye_mean_mm},
              {"mouth_mean_mm", v.mouth_mean_mm},
              {"overall_mean_mm", v.overall_mean_mm},
              {"eye_sem_mm", optional_number(v.eye_sem_mm)},
              {"mouth_sem_mm", optional_number(v.mouth_sem_mm)},
              {"overall_sem_mm", optional_number(v.overall_sem_mm)},
              {"sample_count", v.sample_count},
              {"group_count", v.group_count},
              {"per_blendshape_r", std::move(per_r)},
              {"region_means", std::move(regions)},
              {"overall_mean_r", optional_number(ev.correlation.overall_mean)},
              {"icd_mm", icd_mm}};
}

Json bench_json(const BenchReport& r) {
  return Json{{"schema", kSchema},
              {"platform", r.platform},
              {"mean_ms_per_pair", r.mean_ms_per_pair},
              {"expected_fps", r.expected_fps},
              {"pairs_measured", r.pairs_measured},
              {"warmup_pairs", kBenchWarmupPairs}};
}

Json error_json(ErrorCategory category, const std::string& message) {
  return Json{{"schema", kSchema}, {"error", {{"category", category_name(category)}, {"message", message}}}};
}

}  // namespace blendtrack
