#include "blendtrack/face_mesh.hpp"

#include "blendtrack/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace blendtrack {

std::string_view eval_region_name(EvalRegion region) {
  return region == EvalRegion::Eye ? "Eye" : "Mouth";
}

void FaceMesh::validate() const {
  const std::size_t n = base_vertices.size();
  if (n == 0) fail(ErrorCategory::Data, "mesh has no vertices");
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    if (deltas[k].size() != n) {
      fail(ErrorCategory::Data, "vertex-count mismatch: delta " + std::string(name_of_index(k)) +
                                    " has " + std::to_string(deltas[k].size()) + " entries, mesh has " +
                                    std::to_string(n));
    }
  }
  if (inner_canthus_left >= n || inner_canthus_right >= n)
    fail(ErrorCategory::Data, "inner canthus index out of range");
  if (inner_canthus_left == inner_canthus_right)
    fail(ErrorCategory::Data, "inner canthus indices must be distinct");
  if (!(canthal_model_distance() > 0.0))
    fail(ErrorCategory::Data, "zero inner canthal distance (degenerate mesh)");
  std::size_t eye = 0;
  for (const auto& ev : eval_vertices) {
    if (ev.vertex >= n) fail(ErrorCategory::Data, "eval vertex index out of range");
    eye += ev.region == EvalRegion::Eye ? 1 : 0;
  }
  if (eye != kEyeEvalVertexCount)
    fail(ErrorCategory::Data, "expected 6 Eye and 7 Mouth eval vertices, got " + std::to_string(eye) +
                                  " Eye");
}

double FaceMesh::canthal_model_distance() const {
  return (base_vertices.at(inner_canthus_left) - base_vertices.at(inner_canthus_right)).norm();
}

std::vector<Vec3> deform(const FaceMesh& mesh, const BlendShapeVector& weights) {
  std::vector<Vec3> out = mesh.base_vertices;
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    const double w = weights[k];
    if (w == 0.0) continue;
    const auto& d = mesh.deltas[k];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * d[i];
  }
  return out;
}

Vec3 deform_vertex(const FaceMesh& mesh, const BlendShapeVector& weights, std::size_t vertex) {
  Vec3 v = mesh.base_vertices.at(vertex);
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    const double w = weights[k];
    if (w != 0.0) v += w * mesh.deltas[k][vertex];
  }
  return v;
}

MmScale canthal_scale(const FaceMesh& mesh, double icd_mm) {
  if (!(icd_mm > 0.0) || !std::isfinite(icd_mm))
    fail(ErrorCategory::InvalidArgument, "icd_mm must be positive and finite");
  const double d = mesh.canthal_model_distance();
  if (!(d > 0.0)) fail(ErrorCategory::Data, "zero inner canthal distance (degenerate mesh)");
  return MmScale{icd_mm / d};
}

// --- text format -----------------------------------------------------------

namespace {

class LineReader {
 public:
  LineReader(std::istream& in, const std::string& source) : in_(in), source_(source) {}

  // Next non-empty line split on whitespace; empty result at EOF.
  std::vector<std::string_view> next() {
    while (std::getline(in_, line_)) {
      ++line_no_;
      auto tokens = text::split_ws(line_);
      if (!tokens.empty()) return tokens;
    }
    return {};
  }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCategory::Parse, source_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  double number(std::string_view token) const {
    const auto v = text::parse_double(token);
    if (!v) error("expected a number, got '" + std::string(token) + "'");
    return *v;
  }

  std::size_t index(std::string_view token) const {
    const auto v = text::parse_int(token);
    if (!v || *v < 0) error("expected a vertex index, got '" + std::string(token) + "'");
    return static_cast<std::size_t>(*v);
  }

  Vec3 vec3(const std::vector<std::string_view>& tokens) const {
    if (tokens.size() != 3) error("expected 3 coordinates");
    return {number(tokens[0]), number(tokens[1]), number(tokens[2])};
  }

 private:
  std::istream& in_;
  std::string source_;
  std::string line_;
  std::size_t line_no_ = 0;
};

}  // namespace

FaceMesh parse_mesh(std::istream& in, const std::string& source) {
  LineReader reader(in, source);
  auto tokens = reader.next();
  if (tokens.size() != 2 || tokens[0] != "BTMESH" || tokens[1] != "1")
    reader.error("missing 'BTMESH 1' header");

  FaceMesh mesh;
  std::size_t n = 0;
  bool have_vertices = false;
  bool have_canthi = false;
  std::size_t eval_count = 0;
  std::array<bool, kBlendShapeCount> seen{};

  while (!(tokens = reader.next()).empty()) {
    const std::string_view directive = tokens[0];
    if (directive == "vertices") {
      if (have_vertices) reader.error("duplicate 'vertices' directive");
      if (tokens.size() != 2) reader.error("expected 'vertices N'");
      n = reader.index(tokens[1]);
      if (n == 0) reader.error("vertex count must be positive");
      mesh.base_vertices.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = reader.next();
        if (row.empty()) reader.error("unexpected end of file in vertex list");
        mesh.base_vertices.push_back(reader.vec3(row));
      }
      have_vertices = true;
    } else if (directive == "canthi") {
      if (tokens.size() != 3) reader.error("expected 'canthi iL iR'");
      mesh.inner_canthus_left = reader.index(tokens[1]);
      mesh.inner_canthus_right = reader.index(tokens[2]);
      have_canthi = true;
    } else if (directive == "eval") {
      if (tokens.size() != 3) reader.error("expected 'eval i region'");
      if (eval_count == kEvalVertexCount) reader.error("more than 13 eval vertices");
      EvalVertex ev;
      ev.vertex = reader.index(tokens[1]);
      if (tokens[2] == "Eye") {
        ev.region = EvalRegion::Eye;
      } else if (tokens[2] == "Mouth") {
        ev.region = EvalRegion::Mouth;
      } else {
        reader.error("unknown eval region '" + std::string(tokens[2]) + "'");
      }
      mesh.eval_vertices[eval_count++] = ev;
    } else if (directive == "delta") {
      if (!have_vertices) reader.error("'delta' before 'vertices'");
      if (tokens.size() != 2) reader.error("expected 'delta <name>'");
      const std::string name(tokens[1]);
      const auto shape = blendshape_from_name(name);
      if (!shape) reader.error("unknown blend shape '" + name + "'");
      const std::size_t k = index_of(*shape);
      if (seen[k]) reader.error("duplicate delta for '" + name + "'");
      seen[k] = true;
      auto& d = mesh.deltas[k];
      d.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = reader.next();
        if (row.empty() || row.size() != 3 || !text::parse_double(row[0])) {
          reader.error("vertex-count mismatch: delta '" + name + "' has " +
                       std::to_string(i) + " rows, expected " + std::to_string(n));
        }
        d.push_back(reader.vec3(row));
      }
    } else if (text::parse_double(directive)) {
      reader.error("vertex-count mismatch: more coordinate rows than declared vertices");
    } else {
      reader.error("unknown directive '" + std::string(directive) + "'");
    }
  }

  if (!have_vertices) reader.error("missing 'vertices' section");
  if (!have_canthi) reader.error("missing 'canthi' directive");
  if (eval_count != kEvalVertexCount)
    reader.error("expected 13 eval vertices, got " + std::to_string(eval_count));
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    if (!seen[k]) mesh.deltas[k].assign(n, Vec3{});
  }
  mesh.validate();
  return mesh;
}

void write_mesh(const FaceMesh& mesh, std::ostream& out) {
  using text::format_double;
  const auto row = [&](const Vec3& v) {
    out << format_double(v.x) << ' ' << format_double(v.y) << ' ' << format_double(v.z) << '\n';
  };
  out << "BTMESH 1\n";
  out << "vertices " << mesh.base_vertices.size() << '\n';
  for (const auto& v : mesh.base_vertices) row(v);
  out << "canthi " << mesh.inner_canthus_left << ' ' << mesh.inner_canthus_right << '\n';
  for (const auto& ev : mesh.eval_vertices) {
    out << "eval " << ev.vertex << ' ' << eval_region_name(ev.region) << '\n';
  }
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    out << "delta " << name_of_index(k) << '\n';
    for (const auto& v : mesh.deltas[k]) row(v);
  }
}

FaceMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open mesh file " + path.string());
  return parse_mesh(in, path.string());
}

void save_mesh(const FaceMesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::Io, "cannot write mesh file " + path.string());
  write_mesh(mesh, out);
  if (!out) fail(ErrorCategory::Io, "write failed for " + path.string());
}

// --- reference mesh --------------------------------------------------------

namespace {

// +x is the subject's left, +y up, +z toward the viewer.
double surface_depth(double x, double y) {
  const double u = x / 0.7;
  const double v = y / 0.95;
  return 0.55 * std::sqrt(std::max(0.02, 1.0 - u * u - 0.6 * v * v));
}

Vec3 on_surface(double x, double y, double inset = 0.0) {
  return {x, y, surface_depth(x, y) - inset};
}

struct Influence {
  Vec3 center;
  double radius;
  Vec3 displacement;
};

Vec3 mirror_x(const Vec3& v) { return {-v.x, v.y, v.z}; }

// Feature anchors on the subject's left; right-side anchors are x-mirrored.
struct Anchors {
  Vec3 inner_canthus = on_surface(0.16, 0.25);
  Vec3 outer_canthus = on_surface(0.46, 0.26);
  Vec3 brow = on_surface(0.31, 0.45);
  Vec3 brow_outer = on_surface(0.44, 0.43);
  Vec3 brow_inner = on_surface(0.13, 0.43);
  Vec3 upper_lid = on_surface(0.31, 0.29);
  Vec3 lower_lid = on_surface(0.31, 0.21);
  Vec3 cheek = on_surface(0.36, 0.02);
  Vec3 nostril = on_surface(0.08, -0.16);
  Vec3 mouth_corner = on_surface(0.24, -0.42);
  Vec3 lower_lip_side = on_surface(0.12, -0.47);
  Vec3 upper_lip_side = on_surface(0.12, -0.37);
  Vec3 jaw_angle = on_surface(0.58, -0.45);
};

std::vector<Influence> side_influences(BlendShape left_shape, const Anchors& a) {
  using B = BlendShape;
  switch (left_shape) {
    case B::EyeBlinkLeft:
      return {{a.upper_lid, 0.06, {0, -0.075, 0.004}}, {a.lower_lid, 0.04, {0, 0.008, 0}}};
    case B::EyeLookDownLeft: return {{a.upper_lid, 0.06, {0, -0.02, 0}}, {a.lower_lid, 0.05, {0, -0.006, 0}}};
    case B::EyeLookInLeft: return {{a.upper_lid, 0.07, {-0.012, 0, 0}}, {a.lower_lid, 0.07, {-0.008, 0, 0}}};
    case B::EyeLookOutLeft: return {{a.upper_lid, 0.07, {0.012, 0, 0}}, {a.lower_lid, 0.07, {0.008, 0, 0}}};
    case B::EyeLookUpLeft: return {{a.upper_lid, 0.06, {0, 0.016, 0}}, {a.brow, 0.08, {0, 0.01, 0}}};
    case B::EyeSquintLeft: return {{a.lower_lid, 0.05, {0, 0.025, 0.004}}, {a.upper_lid, 0.05, {0, -0.015, 0}}};
    case B::EyeWideLeft: return {{a.upper_lid, 0.06, {0, 0.03, 0.002}}, {a.brow, 0.08, {0, 0.012, 0}}};
    case B::MouthSmileLeft: return {{a.mouth_corner, 0.08, {0.035, 0.04, -0.012}}, {a.cheek, 0.1, {0, 0.015, 0.01}}};
    case B::MouthFrownLeft: return {{a.mouth_corner, 0.07, {0.005, -0.035, 0}}};
    case B::MouthDimpleLeft: return {{a.mouth_corner, 0.06, {0.02, 0, -0.015}}};
    case B::MouthStretchLeft: return {{a.mouth_corner, 0.08, {0.045, -0.015, -0.005}}};
    case B::MouthPressLeft:
      return {{a.lower_lip_side, 0.06, {0, 0.012, -0.004}}, {a.upper_lip_side, 0.06, {0, -0.008, -0.004}}};
    case B::MouthLowerDownLeft: return {{a.lower_lip_side, 0.08, {0, -0.04, 0.004}}};
    case B::MouthUpperUpLeft: return {{a.upper_lip_side, 0.08, {0, 0.035, 0.004}}};
    case B::BrowDownLeft: return {{a.brow, 0.1, {-0.008, -0.04, 0.004}}};
    case B::BrowOuterUpLeft: return {{a.brow_outer, 0.09, {0, 0.05, 0}}};
    case B::CheekSquintLeft: return {{a.cheek, 0.12, {0, 0.03, 0.01}}, {a.lower_lid, 0.05, {0, 0.012, 0}}};
    case B::NoseSneerLeft: return {{a.nostril, 0.06, {0.005, 0.03, 0.004}}, {a.brow_inner, 0.07, {0, -0.012, 0}}};
    default: return {};
  }
}

std::vector<Influence> center_influences(BlendShape shape, const Anchors& a, const Vec3& chin,
                                         const Vec3& upper_lip, const Vec3& lower_lip,
                                         const Vec3& tongue_tip) {
  using B = BlendShape;
  const Vec3 mouth = on_surface(0.0, -0.42);
  switch (shape) {
    case B::JawForward: return {{chin, 0.32, {0, 0, 0.06}}};
    case B::JawLeft: return {{chin, 0.32, {0.06, 0, 0}}};
    case B::JawRight: return {{chin, 0.32, {-0.06, 0, 0}}};
    case B::JawOpen:
      return {{chin, 0.3, {0, -0.22, -0.03}}, {lower_lip, 0.1, {0, -0.12, 0}}, {tongue_tip, 0.05, {0, -0.1, 0}}};
    case B::MouthClose: return {{lower_lip, 0.09, {0, 0.06, 0}}};
    case B::MouthFunnel:
      return {{upper_lip, 0.07, {0, 0.012, 0.03}}, {lower_lip, 0.07, {0, -0.012, 0.03}},
              {a.mouth_corner, 0.05, {-0.02, 0, 0.01}}, {mirror_x(a.mouth_corner), 0.05, {0.02, 0, 0.01}}};
    case B::MouthPucker:
      return {{a.mouth_corner, 0.07, {-0.05, 0, 0.02}}, {mirror_x(a.mouth_corner), 0.07, {0.05, 0, 0.02}},
              {mouth, 0.1, {0, 0, 0.035}}};
    case B::MouthLeft: return {{mouth, 0.14, {0.06, 0, 0}}};
    case B::MouthRight: return {{mouth, 0.14, {-0.06, 0, 0}}};
    case B::MouthRollLower: return {{lower_lip, 0.08, {0, 0.012, -0.02}}};
    case B::MouthRollUpper: return {{upper_lip, 0.08, {0, -0.012, -0.02}}};
    case B::MouthShrugLower: return {{lower_lip, 0.09, {0, 0.03, 0.012}}, {chin, 0.15, {0, 0.015, 0.008}}};
    case B::MouthShrugUpper: return {{upper_lip, 0.09, {0, 0.02, 0.012}}};
    case B::BrowInnerUp: return {{a.brow_inner, 0.09, {0, 0.05, 0}}, {mirror_x(a.brow_inner), 0.09, {0, 0.05, 0}}};
    case B::CheekPuff:
      return {{on_surface(0.38, -0.2), 0.16, {0.03, 0, 0.04}}, {on_surface(-0.38, -0.2), 0.16, {-0.03, 0, 0.04}}};
    case B::TongueOut: return {{tongue_tip, 0.04, {0, -0.05, 0.13}}};
    default: return {};
  }
}

std::vector<Vec3> displacement_field(const std::vector<Vec3>& vertices,
                                     const std::vector<Influence>& influences) {
  std::vector<Vec3> d(vertices.size());
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (const auto& inf : influences) {
      const double dist = (vertices[i] - inf.center).norm();
      const double w = std::exp(-(dist * dist) / (2.0 * inf.radius * inf.radius));
      if (w > 1e-6) d[i] += w * inf.displacement;
    }
  }
  return d;
}

}  // namespace

FaceMesh make_reference_mesh() {
  FaceMesh mesh;
  constexpr int kCols = 16;
  constexpr int kRows = 18;
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < kCols; ++c) {
      const double x = -0.66 + 1.32 * c / (kCols - 1);
      const double y = -0.9 + 1.7 * r / (kRows - 1);
      mesh.base_vertices.push_back(on_surface(x, y));
    }
  }

  const Anchors a;
  const auto add = [&](const Vec3& v) {
    mesh.base_vertices.push_back(v);
    return mesh.base_vertices.size() - 1;
  };

  mesh.inner_canthus_left = add(a.inner_canthus);
  mesh.inner_canthus_right = add(mirror_x(a.inner_canthus));
  add(a.outer_canthus);
  add(mirror_x(a.outer_canthus));

  const std::size_t brow_l = add(a.brow);
  const std::size_t brow_r = add(mirror_x(a.brow));
  const std::size_t lid_l = add(a.upper_lid);
  const std::size_t lid_r = add(mirror_x(a.upper_lid));
  const std::size_t lower_lid_l = add(a.lower_lid);
  const std::size_t lower_lid_r = add(mirror_x(a.lower_lid));

  const Vec3 upper_lip = on_surface(0.0, -0.36);
  const Vec3 lower_lip = on_surface(0.0, -0.48);
  const Vec3 chin = on_surface(0.0, -0.76);
  const Vec3 tongue_tip = on_surface(0.0, -0.43, 0.1);

  const std::size_t corner_l = add(a.mouth_corner);
  const std::size_t corner_r = add(mirror_x(a.mouth_corner));
  const std::size_t upper_lip_c = add(upper_lip);
  const std::size_t lower_lip_c = add(lower_lip);
  const std::size_t lower_lip_l = add(a.lower_lip_side);
  const std::size_t chin_c = add(chin);
  const std::size_t tongue = add(tongue_tip);

  add(a.upper_lip_side);
  add(mirror_x(a.upper_lip_side));
  add(mirror_x(a.lower_lip_side));
  add(on_surface(0.0, -0.05));  // nose tip
  add(a.nostril);
  add(mirror_x(a.nostril));
  add(a.cheek);
  add(mirror_x(a.cheek));
  add(a.brow_inner);
  add(mirror_x(a.brow_inner));
  add(a.jaw_angle);
  add(mirror_x(a.jaw_angle));
  add(on_surface(0.0, -0.43, 0.06));  // tongue root

  mesh.eval_vertices = {{
      {brow_l, EvalRegion::Eye}, {brow_r, EvalRegion::Eye},
      {lid_l, EvalRegion::Eye}, {lid_r, EvalRegion::Eye},
      {lower_lid_l, EvalRegion::Eye}, {lower_lid_r, EvalRegion::Eye},
      {corner_l, EvalRegion::Mouth}, {corner_r, EvalRegion::Mouth},
      {upper_lip_c, EvalRegion::Mouth}, {lower_lip_c, EvalRegion::Mouth},
      {lower_lip_l, EvalRegion::Mouth}, {chin_c, EvalRegion::Mouth},
      {tongue, EvalRegion::Mouth},
  }};

  for (std::size_t i = 0; i < kSideShapeCount; ++i) {
    const auto left_shape = static_cast<BlendShape>(i);
    const auto influences = side_influences(left_shape, a);
    std::vector<Influence> mirrored;
    for (const auto& inf : influences) {
      mirrored.push_back({mirror_x(inf.center), inf.radius, mirror_x(inf.displacement)});
    }
    mesh.deltas[i] = displacement_field(mesh.base_vertices, influences);
    mesh.deltas[kSideShapeCount + i] = displacement_field(mesh.base_vertices, mirrored);
  }
  for (std::size_t i = kCenterBlockOffset; i < kBlendShapeCount; ++i) {
    mesh.deltas[i] = displacement_field(
        mesh.base_vertices,
        center_influences(static_cast<BlendShape>(i), a, chin, upper_lip, lower_lip, tongue_tip));
  }
  mesh.validate();
  return mesh;
}

}  // namespace blendtrack
