#pragma once

#include "blendtrack/bench.hpp"
#include "blendtrack/error.hpp"
#include "blendtrack/training.hpp"

#include <json.hpp>

#include <string>

namespace blendtrack {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "btrk/1";

Json clip_key_json(const ClipKey& key);
Json split_json(const SplitPlan& split);
// One entry per clip: subject_id, location, clip_id, samples.
Json provenance_json(const ProvenanceCounts& counts);
Json sync_report_json(const SyncReport& report);
// per_vertex_mm, eye/mouth/overall means (with SEMs when available),
// per_blendshape_r keyed by canonical name, region_means, icd_mm.
Json evaluation_json(const Evaluation& evaluation, double icd_mm);
Json bench_json(const BenchReport& report);
Json error_json(ErrorCategory category, const std::string& message);

}  // namespace blendtrack
