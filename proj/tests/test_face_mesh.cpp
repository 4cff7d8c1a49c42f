#include "blendtrack/error.hpp"
#include "blendtrack/face_mesh.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>

using namespace blendtrack;

namespace {

// 14 vertices on a line; vertex i displaced by delta k as (k+1) * 0.01 along z.
FaceMesh tiny_mesh(double canthal_distance) {
  FaceMesh m;
  for (std::size_t i = 0; i < 14; ++i) m.base_vertices.push_back({static_cast<double>(i), 0.0, 0.0});
  m.base_vertices[1] = {canthal_distance, 0.0, 0.0};
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    m.deltas[k].assign(14, Vec3{});
    for (std::size_t i = 0; i < 14; ++i) m.deltas[k][i] = {0.0, 0.0, 0.01 * static_cast<double>(k + 1) * (i % 3)};
  }
  m.inner_canthus_left = 0;
  m.inner_canthus_right = 1;
  for (std::size_t e = 0; e < kEvalVertexCount; ++e)
    m.eval_vertices[e] = {e + 1, e < kEyeEvalVertexCount ? EvalRegion::Eye : EvalRegion::Mouth};
  return m;
}

std::string serialized(const FaceMesh& m) {
  std::ostringstream out;
  write_mesh(m, out);
  return out.str();
}

void expect_parse_error(const std::string& text, const std::string& fragment) {
  std::istringstream in(text);
  try {
    parse_mesh(in, "t.btmesh");
    FAIL("parse succeeded");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Parse);
    CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    CHECK(std::string(e.what()).find("t.btmesh:") != std::string::npos);
  }
}

}  // namespace

TEST_CASE("zero weights give the base pose") {
  const FaceMesh m = make_reference_mesh();
  CHECK(deform(m, BlendShapeVector{}) == m.base_vertices);
}

TEST_CASE("single weight moves a vertex by w times its delta") {
  const FaceMesh m = tiny_mesh(1.0);
  BlendShapeVector w;
  w[4] = 0.25;
  const Vec3 v = deform_vertex(m, w, 2);
  CHECK(v.x == 2.0);
  CHECK(v.z == doctest::Approx(0.25 * 0.05 * 2).epsilon(1e-15));
}

TEST_CASE("deformation is additive and linear") {
  const FaceMesh m = make_reference_mesh();
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    BlendShapeVector w1;
    BlendShapeVector w2;
    BlendShapeVector sum;
    for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
      w1[k] = 0.5 * rng.uniform();
      w2[k] = 0.5 * rng.uniform();
      sum[k] = w1[k] + w2[k];
    }
    const auto d1 = deform(m, w1);
    const auto d2 = deform(m, w2);
    const auto ds = deform(m, sum);
    const double alpha = rng.uniform();
    BlendShapeVector scaled;
    for (std::size_t k = 0; k < kBlendShapeCount; ++k) scaled[k] = alpha * w1[k];
    const auto da = deform(m, scaled);
    for (std::size_t i = 0; i < m.base_vertices.size(); ++i) {
      const Vec3 lhs = d1[i] + d2[i] - m.base_vertices[i];
      REQUIRE((lhs - ds[i]).norm() < 1e-12);
      const Vec3 lin = alpha * (d1[i] - m.base_vertices[i]);
      REQUIRE((lin - (da[i] - m.base_vertices[i])).norm() < 1e-12);
    }
  }
}

TEST_CASE("canthal scale is icd over the canthal model distance") {
  CHECK(canthal_scale(tiny_mesh(1.0), 32.0).millimeters_per_model_unit == 32.0);
  CHECK(canthal_scale(tiny_mesh(2.0), 32.0).millimeters_per_model_unit == 16.0);
  CHECK_THROWS_AS(canthal_scale(tiny_mesh(1.0), 0.0), Error);
  FaceMesh degenerate = tiny_mesh(1.0);
  degenerate.base_vertices[1] = degenerate.base_vertices[0];
  CHECK_THROWS_AS(canthal_scale(degenerate, 32.0), Error);
}

TEST_CASE("reference mesh satisfies its invariants") {
  const FaceMesh m = make_reference_mesh();
  CHECK_NOTHROW(m.validate());
  CHECK(m.base_vertices.size() >= 250);
  CHECK(m.base_vertices.size() <= 350);
  std::size_t eye = 0;
  for (const auto& ev : m.eval_vertices) eye += ev.region == EvalRegion::Eye;
  CHECK(eye == kEyeEvalVertexCount);
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    double total = 0.0;
    for (const auto& d : m.deltas[k]) total += d.norm();
    CHECK_MESSAGE(total > 0.0, name_of_index(k));
  }
  CHECK(make_reference_mesh() == m);
}

TEST_CASE("mesh text round trip is lossless") {
  const FaceMesh m = make_reference_mesh();
  std::istringstream in(serialized(m));
  CHECK(parse_mesh(in) == m);
  const auto dir = test::scratch_dir("mesh");
  save_mesh(m, dir / "face.btmesh");
  CHECK(load_mesh(dir / "face.btmesh") == m);
}

TEST_CASE("shipped mesh resource equals the built-in mesh") {
  CHECK(load_mesh(std::string(BLENDTRACK_RESOURCE_DIR) + "/face.btmesh") == make_reference_mesh());
}

TEST_CASE("mesh parser rejects malformed files with line context") {
  const std::string good = serialized(tiny_mesh(1.0));
  expect_parse_error("BTMESH 2\n", "BTMESH");

  std::string extra = good;
  extra.replace(extra.find("delta jawOpen"), 13, "delta jawOpenWide");
  expect_parse_error(extra, "unknown blend shape");

  const auto pos = good.find("delta eyeBlinkLeft\n") + 19;
  std::string short_delta = good;
  short_delta.erase(pos, good.find('\n', pos) - pos + 1);
  expect_parse_error(short_delta, "vertex-count mismatch");

  expect_parse_error(good + "colors 1 2 3\n", "colors");
}

TEST_CASE("validate rejects broken invariants") {
  FaceMesh m = tiny_mesh(1.0);
  m.eval_vertices[0].region = EvalRegion::Mouth;
  CHECK_THROWS_AS(m.validate(), Error);
  m = tiny_mesh(1.0);
  m.deltas[3].pop_back();
  CHECK_THROWS_AS(m.validate(), Error);
  m = tiny_mesh(1.0);
  m.inner_canthus_right = 0;
  CHECK_THROWS_AS(m.validate(), Error);
  CHECK_THROWS_AS(load_mesh("/nonexistent/face.btmesh"), Error);
}
