#include "blendtrack/blendtrack.h"

#include "blendtrack/bench.hpp"
#include "blendtrack/blendshape.hpp"
#include "blendtrack/commands.hpp"
#include "blendtrack/error.hpp"
#include "blendtrack/eval_metrics.hpp"
#include "blendtrack/face_mesh.hpp"
#include "blendtrack/image.hpp"
#include "blendtrack/regressor.hpp"
#include "blendtrack/training.hpp"

#include <algorithm>
#include <filesystem>
#include <new>
#include <optional>
#include <string>

struct btrk_model {
  blendtrack::nn::RegressorModel model;
};

struct btrk_mesh {
  blendtrack::FaceMesh mesh;
};

struct btrk_report {
  std::string json;
  std::string summary;
};

namespace {

using namespace blendtrack;

thread_local std::string g_last_error;

btrk_status to_status(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::InvalidArgument: return BTRK_ERR_INVALID_ARGUMENT;
    case ErrorCategory::Io: return BTRK_ERR_IO;
    case ErrorCategory::Parse: return BTRK_ERR_PARSE;
    case ErrorCategory::Data: return BTRK_ERR_DATA;
    case ErrorCategory::Numeric: return BTRK_ERR_NUMERIC;
  }
  return BTRK_ERR_INTERNAL;
}

btrk_status record(btrk_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <class F>
btrk_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return BTRK_OK;
  } catch (const Error& e) {
    return record(to_status(e.category()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return record(BTRK_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return record(BTRK_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(BTRK_ERR_INTERNAL, e.what());
  } catch (...) {
    return record(BTRK_ERR_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorCategory::InvalidArgument, what);
}

std::optional<std::filesystem::path> opt_path(const char* p) {
  if (p == nullptr || *p == '\0') return std::nullopt;
  return std::filesystem::path(p);
}

std::filesystem::path req_path(const char* p, const char* what) {
  require(p != nullptr && *p != '\0', what);
  return p;
}

MeshOptions mesh_options(const btrk_run_options& o) {
  MeshOptions m;
  m.mesh = opt_path(o.mesh_path);
  m.icd_mm = o.icd_mm;
  return m;
}

void emit(const CommandOutput& result, btrk_report** out) {
  *out = new btrk_report{result.json, result.summary};
}

}  // namespace

extern "C" {

const char* btrk_last_error(void) { return g_last_error.c_str(); }

const char* btrk_status_name(btrk_status status) {
  switch (status) {
    case BTRK_OK: return "ok";
    case BTRK_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case BTRK_ERR_IO: return "io";
    case BTRK_ERR_PARSE: return "parse";
    case BTRK_ERR_DATA: return "data";
    case BTRK_ERR_NUMERIC: return "numeric";
    case BTRK_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* btrk_version(void) { return "0.1.0"; }

const char* btrk_blendshape_name(size_t index) {
  if (index >= kBlendShapeCount) return nullptr;
  return name_of_index(index).data();
}

btrk_status btrk_blendshape_index(const char* name, size_t* out_index) {
  return guarded([&] {
    require(name != nullptr && out_index != nullptr, "btrk_blendshape_index: null argument");
    const auto shape = blendshape_from_name(name);
    if (!shape) fail(ErrorCategory::InvalidArgument, std::string("unknown blend shape '") + name + "'");
    *out_index = index_of(*shape);
  });
}

int btrk_blendshape_partition(size_t index) {
  const auto shape = blendshape_from_index(index);
  if (!shape) return -1;
  switch (partition(*shape)) {
    case Block::Left: return 0;
    case Block::Right: return 1;
    case Block::Center: return 2;
  }
  return -1;
}

btrk_status btrk_merge_half(const double left_side[BTRK_SIDE_COUNT], const double left_center[BTRK_CENTER_COUNT],
                            const double right_side[BTRK_SIDE_COUNT], const double right_center[BTRK_CENTER_COUNT],
                            double out[BTRK_BLENDSHAPE_COUNT]) {
  return guarded([&] {
    require(left_side && left_center && right_side && right_center && out, "btrk_merge_half: null argument");
    HalfFacePrediction l{Side::Left, {}, {}};
    HalfFacePrediction r{Side::Right, {}, {}};
    std::copy_n(left_side, kSideShapeCount, l.side_weights.begin());
    std::copy_n(left_center, kCenterShapeCount, l.center_weights.begin());
    std::copy_n(right_side, kSideShapeCount, r.side_weights.begin());
    std::copy_n(right_center, kCenterShapeCount, r.center_weights.begin());
    require(l.is_valid() && r.is_valid(), "btrk_merge_half: weights must lie in [0, 1]");
    const BlendShapeVector merged = merge_half_predictions(l, r);
    std::copy_n(merged.values().begin(), kBlendShapeCount, out);
  });
}

btrk_status btrk_model_create(uint32_t height, uint32_t width, uint64_t seed, btrk_model** out) {
  return guarded([&] {
    require(out != nullptr, "btrk_model_create: null output");
    require(height >= 8 && width >= 8, "btrk_model_create: input must be at least 8x8");
    *out = new btrk_model{nn::RegressorModel::create({height, width}, seed)};
  });
}

btrk_status btrk_model_load(const char* path, btrk_model** out) {
  return guarded([&] {
    require(out != nullptr, "btrk_model_load: null output");
    *out = new btrk_model{nn::load_weights(req_path(path, "btrk_model_load: null path"))};
  });
}

btrk_status btrk_model_save(const btrk_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr, "btrk_model_save: null model");
    nn::save_weights(model->model, req_path(path, "btrk_model_save: null path"));
  });
}

void btrk_model_destroy(btrk_model* model) { delete model; }

btrk_status btrk_model_input_size(const btrk_model* model, uint32_t* height, uint32_t* width) {
  return guarded([&] {
    require(model && height && width, "btrk_model_input_size: null argument");
    *height = static_cast<uint32_t>(model->model.input_spec().height);
    *width = static_cast<uint32_t>(model->model.input_spec().width);
  });
}

btrk_status btrk_model_forward(const btrk_model* model, const float* batch, size_t n, double* out) {
  return guarded([&] {
    require(model && batch && out, "btrk_model_forward: null argument");
    require(n > 0, "btrk_model_forward: empty batch");
    const auto spec = model->model.input_spec();
    nn::Tensor input({n, spec.height, spec.width, nn::InputSpec::kChannels});
    std::copy_n(batch, input.size(), input.data());
    const nn::Tensor output = model->model.forward(input);
    std::copy_n(output.data(), output.size(), out);
  });
}

btrk_status btrk_predict_full_face(const btrk_model* model, const uint8_t* left_rgb, const uint8_t* right_rgb,
                                   uint32_t height, uint32_t width, double out[BTRK_BLENDSHAPE_COUNT]) {
  return guarded([&] {
    require(model && left_rgb && right_rgb && out, "btrk_predict_full_face: null argument");
    require(height > 0 && width > 0, "btrk_predict_full_face: empty image");
    RgbImage left(height, width);
    RgbImage right(height, width);
    std::copy_n(left_rgb, left.pixels.size(), left.pixels.begin());
    std::copy_n(right_rgb, right.pixels.size(), right.pixels.begin());
    const BlendShapeVector w = predict_full_face(model->model, left, right);
    std::copy_n(w.values().begin(), kBlendShapeCount, out);
  });
}

btrk_status btrk_mesh_default(btrk_mesh** out) {
  return guarded([&] {
    require(out != nullptr, "btrk_mesh_default: null output");
    *out = new btrk_mesh{make_reference_mesh()};
  });
}

btrk_status btrk_mesh_load(const char* path, btrk_mesh** out) {
  return guarded([&] {
    require(out != nullptr, "btrk_mesh_load: null output");
    *out = new btrk_mesh{load_mesh(req_path(path, "btrk_mesh_load: null path"))};
  });
}

btrk_status btrk_mesh_save(const btrk_mesh* mesh, const char* path) {
  return guarded([&] {
    require(mesh != nullptr, "btrk_mesh_save: null mesh");
    save_mesh(mesh->mesh, req_path(path, "btrk_mesh_save: null path"));
  });
}

void btrk_mesh_destroy(btrk_mesh* mesh) { delete mesh; }

btrk_status btrk_vertex_error(const btrk_mesh* mesh, double icd_mm, const double gt[BTRK_BLENDSHAPE_COUNT],
                              const double pred[BTRK_BLENDSHAPE_COUNT], double out_mm[BTRK_EVAL_VERTEX_COUNT]) {
  return guarded([&] {
    require(mesh && gt && pred && out_mm, "btrk_vertex_error: null argument");
    BlendShapeVector g;
    BlendShapeVector p;
    std::copy_n(gt, kBlendShapeCount, g.values().begin());
    std::copy_n(pred, kBlendShapeCount, p.values().begin());
    const VertexErrors e = vertex_error(mesh->mesh, canthal_scale(mesh->mesh, icd_mm), g, p);
    std::copy(e.begin(), e.end(), out_mm);
  });
}

const char* btrk_report_json(const btrk_report* report) { return report ? report->json.c_str() : ""; }
const char* btrk_report_summary(const btrk_report* report) { return report ? report->summary.c_str() : ""; }
void btrk_report_destroy(btrk_report* report) { delete report; }

void btrk_synth_options_init(btrk_synth_options* o) {
  if (o == nullptr) return;
  const SynthCommand d;
  *o = btrk_synth_options{static_cast<uint32_t>(d.subjects), static_cast<uint32_t>(d.clips_per_location), d.seed,
                          d.duration_s, d.clock_offset_ms, static_cast<uint32_t>(d.image_size), d.invalid_fraction,
                          nullptr};
}

void btrk_run_options_init(btrk_run_options* o) {
  if (o == nullptr) return;
  *o = btrk_run_options{nullptr, nullptr, nullptr, nullptr, nullptr, kDefaultIcdMm, nullptr, 0, nullptr};
}

void btrk_bench_options_init(btrk_bench_options* o) {
  if (o == nullptr) return;
  *o = btrk_bench_options{nullptr, 64, static_cast<uint32_t>(kDefaultBenchPairs), 0, nullptr};
}

btrk_status btrk_cmd_synth(const btrk_synth_options* o, btrk_report** out) {
  return guarded([&] {
    require(o && out, "btrk_cmd_synth: null argument");
    SynthCommand cmd;
    cmd.subjects = o->subjects;
    cmd.clips_per_location = o->clips_per_location;
    cmd.seed = o->seed;
    cmd.duration_s = o->duration_s;
    cmd.clock_offset_ms = o->clock_offset_ms;
    cmd.image_size = o->image_size;
    cmd.invalid_fraction = o->invalid_fraction;
    cmd.out_dir = req_path(o->out_dir, "synth: output directory required");
    emit(run_synth(cmd), out);
  });
}

btrk_status btrk_cmd_sync(const btrk_run_options* o, btrk_report** out) {
  return guarded([&] {
    require(o && out, "btrk_cmd_sync: null argument");
    SyncCommand cmd;
    cmd.data_dir = req_path(o->data_dir, "sync: data directory required");
    cmd.config = opt_path(o->config_path);
    cmd.out = req_path(o->out, "sync: output path required");
    emit(run_sync(cmd), out);
  });
}

btrk_status btrk_cmd_train(const btrk_run_options* o, btrk_report** out) {
  return guarded([&] {
    require(o && out, "btrk_cmd_train: null argument");
    require(o->test_subject != nullptr, "train: test subject required");
    TrainCommand cmd;
    cmd.data_dir = req_path(o->data_dir, "train: data directory required");
    cmd.config = opt_path(o->config_path);
    cmd.test_subject = o->test_subject;
    cmd.out_dir = req_path(o->out, "train: output directory required");
    cmd.mesh = mesh_options(*o);
    emit(run_train(cmd), out);
  });
}

btrk_status btrk_cmd_calibrate(const btrk_run_options* o, btrk_report** out) {
  return guarded([&] {
    require(o && out, "btrk_cmd_calibrate: null argument");
    require(o->test_subject != nullptr, "calibrate: test subject required");
    CalibrateCommand cmd;
    cmd.model = req_path(o->model_path, "calibrate: model path required");
    cmd.data_dir = req_path(o->data_dir, "calibrate: data directory required");
    cmd.config = opt_path(o->config_path);
    cmd.test_subject = o->test_subject;
    cmd.out_dir = req_path(o->out, "calibrate: output directory required");
    cmd.mesh = mesh_options(*o);
    emit(run_calibrate(cmd), out);
  });
}

btrk_status btrk_cmd_curve(const btrk_run_options* o, btrk_report** out) {
  return guarded([&] {
    require(o && out, "btrk_cmd_curve: null argument");
    require(o->test_subject != nullptr, "curve: test subject required");
    CurveCommand cmd;
    cmd.model = req_path(o->model_path, "curve: model path required");
    cmd.data_dir = req_path(o->data_dir, "curve: data directory required");
    cmd.config = opt_path(o->config_path);
    cmd.test_subject = o->test_subject;
    if (o->fraction_count > 0) {
      require(o->fractions != nullptr, "curve: null fraction list");
      cmd.fractions.assign(o->fractions, o->fractions + o->fraction_count);
    }
    cmd.out = req_path(o->out, "curve: output path required");
    cmd.mesh = mesh_options(*o);
    emit(run_curve(cmd), out);
  });
}

btrk_status btrk_cmd_eval(const btrk_run_options* o, btrk_report** out) {
  return guarded([&] {
    require(o && out, "btrk_cmd_eval: null argument");
    EvalCommand cmd;
    cmd.model = req_path(o->model_path, "eval: model path required");
    cmd.data_dir = req_path(o->data_dir, "eval: data directory required");
    cmd.config = opt_path(o->config_path);
    if (o->test_subject != nullptr && *o->test_subject != '\0') cmd.test_subject = o->test_subject;
    cmd.out = req_path(o->out, "eval: output path required");
    cmd.mesh = mesh_options(*o);
    emit(run_eval(cmd), out);
  });
}

btrk_status btrk_cmd_bench(const btrk_bench_options* o, btrk_report** out) {
  return guarded([&] {
    require(o && out, "btrk_cmd_bench: null argument");
    BenchCommand cmd;
    cmd.model = opt_path(o->model_path);
    cmd.image_size = o->image_size;
    cmd.pairs = o->pairs;
    cmd.seed = o->seed;
    cmd.out = req_path(o->out, "bench: output path required");
    require(cmd.image_size >= 8, "bench: image size must be at least 8");
    emit(run_bench(cmd), out);
  });
}

}  // extern "C"
