#include "blendtrack/blendtrack.h"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / (std::string("blendtrack_capi_") + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json report_json(const btrk_report* r) { return nlohmann::json::parse(btrk_report_json(r)); }

}  // namespace

TEST_CASE("status names and last error") {
  CHECK(std::string(btrk_status_name(BTRK_OK)) == "ok");
  CHECK(std::string(btrk_status_name(BTRK_ERR_IO)) == "io");
  CHECK(std::string(btrk_status_name(BTRK_ERR_NUMERIC)) == "numeric");
  CHECK(std::string(btrk_version()) == "0.1.0");

  size_t index = 0;
  CHECK(btrk_blendshape_index("noSuchShape", &index) == BTRK_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(btrk_last_error()) > 0);
  CHECK(btrk_blendshape_index("jawOpen", &index) == BTRK_OK);
  CHECK(std::string(btrk_last_error()).empty());
  CHECK(btrk_blendshape_index(nullptr, &index) == BTRK_ERR_INVALID_ARGUMENT);
}

TEST_CASE("blend-shape catalogue") {
  size_t counts[3] = {0, 0, 0};
  for (size_t i = 0; i < BTRK_BLENDSHAPE_COUNT; ++i) {
    const char* name = btrk_blendshape_name(i);
    REQUIRE(name != nullptr);
    size_t back = 99;
    REQUIRE(btrk_blendshape_index(name, &back) == BTRK_OK);
    CHECK(back == i);
    const int part = btrk_blendshape_partition(i);
    REQUIRE(part >= 0);
    ++counts[part];
  }
  CHECK(counts[0] == BTRK_SIDE_COUNT);
  CHECK(counts[1] == BTRK_SIDE_COUNT);
  CHECK(counts[2] == BTRK_CENTER_COUNT);
  CHECK(btrk_blendshape_name(BTRK_BLENDSHAPE_COUNT) == nullptr);
  CHECK(btrk_blendshape_partition(BTRK_BLENDSHAPE_COUNT) == -1);
  CHECK(std::string(btrk_blendshape_name(0)) == "eyeBlinkLeft");
}

TEST_CASE("merging half predictions") {
  double ls[BTRK_SIDE_COUNT];
  double lc[BTRK_CENTER_COUNT];
  double rs[BTRK_SIDE_COUNT];
  double rc[BTRK_CENTER_COUNT];
  for (int i = 0; i < BTRK_SIDE_COUNT; ++i) {
    ls[i] = 0.01 * i;
    rs[i] = 0.02 * i;
  }
  for (int i = 0; i < BTRK_CENTER_COUNT; ++i) {
    lc[i] = 0.2;
    rc[i] = 0.6;
  }
  double out[BTRK_BLENDSHAPE_COUNT];
  REQUIRE(btrk_merge_half(ls, lc, rs, rc, out) == BTRK_OK);
  for (int i = 0; i < BTRK_SIDE_COUNT; ++i) {
    CHECK(out[i] == doctest::Approx(ls[i]));
    CHECK(out[BTRK_SIDE_COUNT + i] == doctest::Approx(rs[i]));
  }
  size_t jaw = 0;
  REQUIRE(btrk_blendshape_index("jawOpen", &jaw) == BTRK_OK);
  CHECK(out[jaw] == doctest::Approx(0.4));
  ls[0] = 1.5;
  CHECK(btrk_merge_half(ls, lc, rs, rc, out) == BTRK_ERR_INVALID_ARGUMENT);
  CHECK(btrk_merge_half(nullptr, lc, rs, rc, out) == BTRK_ERR_INVALID_ARGUMENT);
}

TEST_CASE("model lifecycle through the C interface") {
  btrk_model* model = nullptr;
  REQUIRE(btrk_model_create(16, 16, 3, &model) == BTRK_OK);
  uint32_t h = 0;
  uint32_t w = 0;
  REQUIRE(btrk_model_input_size(model, &h, &w) == BTRK_OK);
  CHECK(h == 16);
  CHECK(w == 16);

  std::vector<float> batch(2 * 16 * 16 * 3);
  for (size_t i = 0; i < batch.size(); ++i) batch[i] = static_cast<float>((i * 13 % 97) / 96.0);
  std::vector<double> out(2 * BTRK_HALF_FACE_COUNT);
  REQUIRE(btrk_model_forward(model, batch.data(), 2, out.data()) == BTRK_OK);
  for (double v : out) CHECK((v > 0.0 && v < 1.0));

  const fs::path dir = scratch("model");
  const std::string path = (dir / "m.btrk").string();
  REQUIRE(btrk_model_save(model, path.c_str()) == BTRK_OK);
  btrk_model* loaded = nullptr;
  REQUIRE(btrk_model_load(path.c_str(), &loaded) == BTRK_OK);
  std::vector<double> again(out.size());
  REQUIRE(btrk_model_forward(loaded, batch.data(), 2, again.data()) == BTRK_OK);
  CHECK(again == out);

  std::vector<uint8_t> left(16 * 16 * 3, 40);
  std::vector<uint8_t> right(16 * 16 * 3, 200);
  double face[BTRK_BLENDSHAPE_COUNT];
  CHECK(btrk_predict_full_face(model, left.data(), right.data(), 16, 16, face) == BTRK_OK);
  CHECK(btrk_model_forward(model, batch.data(), 0, out.data()) == BTRK_ERR_INVALID_ARGUMENT);
  CHECK(btrk_model_create(4, 4, 0, &loaded) == BTRK_ERR_INVALID_ARGUMENT);

  btrk_model* missing = nullptr;
  CHECK(btrk_model_load((dir / "absent.btrk").string().c_str(), &missing) == BTRK_ERR_IO);
  CHECK(missing == nullptr);
  std::ofstream(dir / "junk.btrk") << "not a model";
  CHECK(btrk_model_load((dir / "junk.btrk").string().c_str(), &missing) == BTRK_ERR_PARSE);

  btrk_model_destroy(model);
  btrk_model_destroy(loaded);
  btrk_model_destroy(nullptr);
}

TEST_CASE("mesh and vertex error through the C interface") {
  btrk_mesh* mesh = nullptr;
  REQUIRE(btrk_mesh_default(&mesh) == BTRK_OK);
  double gt[BTRK_BLENDSHAPE_COUNT] = {};
  double pred[BTRK_BLENDSHAPE_COUNT] = {};
  double mm[BTRK_EVAL_VERTEX_COUNT];
  REQUIRE(btrk_vertex_error(mesh, 32.0, gt, pred, mm) == BTRK_OK);
  for (double v : mm) CHECK(v == 0.0);
  size_t jaw = 0;
  btrk_blendshape_index("jawOpen", &jaw);
  pred[jaw] = 1.0;
  REQUIRE(btrk_vertex_error(mesh, 32.0, gt, pred, mm) == BTRK_OK);
  double at32 = 0.0;
  for (double v : mm) at32 += v;
  CHECK(at32 > 0.0);
  REQUIRE(btrk_vertex_error(mesh, 16.0, gt, pred, mm) == BTRK_OK);
  double at16 = 0.0;
  for (double v : mm) at16 += v;
  CHECK(at16 == doctest::Approx(at32 / 2.0));
  CHECK(btrk_vertex_error(mesh, 0.0, gt, pred, mm) == BTRK_ERR_INVALID_ARGUMENT);

  const fs::path dir = scratch("mesh");
  const std::string path = (dir / "face.btmesh").string();
  REQUIRE(btrk_mesh_save(mesh, path.c_str()) == BTRK_OK);
  btrk_mesh* loaded = nullptr;
  REQUIRE(btrk_mesh_load(path.c_str(), &loaded) == BTRK_OK);
  double mm2[BTRK_EVAL_VERTEX_COUNT];
  REQUIRE(btrk_vertex_error(loaded, 16.0, gt, pred, mm2) == BTRK_OK);
  for (int i = 0; i < BTRK_EVAL_VERTEX_COUNT; ++i) CHECK(mm2[i] == doctest::Approx(mm[i]));
  btrk_mesh_destroy(mesh);
  btrk_mesh_destroy(loaded);
}

TEST_CASE("commands through the C interface") {
  const fs::path dir = scratch("commands");
  const std::string data = (dir / "data").string();
  btrk_synth_options so;
  btrk_synth_options_init(&so);
  CHECK(so.duration_s == 120.0);
  so.subjects = 2;
  so.duration_s = 8.0;
  so.image_size = 16;
  so.out_dir = data.c_str();
  btrk_report* report = nullptr;
  REQUIRE(btrk_cmd_synth(&so, &report) == BTRK_OK);
  CHECK(report_json(report)["clips"].size() == 4);
  CHECK(std::string(btrk_report_summary(report)).find("4 clips") != std::string::npos);
  btrk_report_destroy(report);

  const std::string config = (dir / "config.json").string();
  std::ofstream(config) << R"({"epochs_independent": 1, "epochs_calibration": 1, "input_size": [16, 16]})";

  const std::string run = (dir / "run").string();
  btrk_run_options ro;
  btrk_run_options_init(&ro);
  CHECK(ro.icd_mm == 32.0);
  ro.data_dir = data.c_str();
  ro.config_path = config.c_str();
  ro.test_subject = "s0";
  ro.out = run.c_str();
  REQUIRE(btrk_cmd_train(&ro, &report) == BTRK_OK);
  const auto train = report_json(report);
  CHECK(train["kind"] == "train");
  CHECK(train["metrics"]["held_out"]["per_blendshape_r"].size() == BTRK_BLENDSHAPE_COUNT);
  btrk_report_destroy(report);
  CHECK(fs::exists(fs::path(run) / "model.btrk"));

  const std::string model = (fs::path(run) / "model.btrk").string();
  const std::string eval_out = (dir / "eval.json").string();
  btrk_run_options eo;
  btrk_run_options_init(&eo);
  eo.data_dir = data.c_str();
  eo.model_path = model.c_str();
  eo.config_path = config.c_str();
  eo.out = eval_out.c_str();
  REQUIRE(btrk_cmd_eval(&eo, &report) == BTRK_OK);
  CHECK(report_json(report)["overall_mean_mm"].is_number());
  btrk_report_destroy(report);
  CHECK(fs::exists(eval_out));

  btrk_bench_options bo;
  btrk_bench_options_init(&bo);
  CHECK(bo.pairs == 400);
  const std::string bench_out = (dir / "bench.json").string();
  bo.model_path = model.c_str();
  bo.pairs = 5;
  bo.out = bench_out.c_str();
  REQUIRE(btrk_cmd_bench(&bo, &report) == BTRK_OK);
  CHECK(report_json(report)["pairs_measured"] == 5);
  btrk_report_destroy(report);

  ro.test_subject = "nobody";
  report = nullptr;
  CHECK(btrk_cmd_train(&ro, &report) == BTRK_ERR_DATA);
  CHECK(report == nullptr);
  const std::string missing = (dir / "missing").string();
  ro.data_dir = missing.c_str();
  CHECK(btrk_cmd_train(&ro, &report) == BTRK_ERR_IO);
  ro.data_dir = nullptr;
  CHECK(btrk_cmd_train(&ro, &report) == BTRK_ERR_INVALID_ARGUMENT);
  CHECK(btrk_cmd_train(nullptr, &report) == BTRK_ERR_INVALID_ARGUMENT);
}
