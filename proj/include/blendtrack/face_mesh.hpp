#pragma once

#include "blendtrack/blendshape.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace blendtrack {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
  bool operator==(const Vec3&) const = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

enum class EvalRegion { Eye, Mouth };

std::string_view eval_region_name(EvalRegion region);

inline constexpr std::size_t kEvalVertexCount = 13;
inline constexpr std::size_t kEyeEvalVertexCount = 6;
inline constexpr std::size_t kMouthEvalVertexCount = 7;

// Reference inner canthal distance used to convert model units to mm.
inline constexpr double kDefaultIcdMm = 32.0;

struct EvalVertex {
  std::size_t vertex = 0;
  EvalRegion region = EvalRegion::Eye;
  bool operator==(const EvalVertex&) const = default;
};

// Base pose plus one displacement field per blend shape (all 52 present, same
// length as base_vertices), the two inner canthi and the 13 tracked vertices.
struct FaceMesh {
  std::vector<Vec3> base_vertices;
  std::array<std::vector<Vec3>, kBlendShapeCount> deltas;
  std::size_t inner_canthus_left = 0;
  std::size_t inner_canthus_right = 0;
  std::array<EvalVertex, kEvalVertexCount> eval_vertices{};

  // Throws Data on any broken invariant.
  void validate() const;
  double canthal_model_distance() const;

  bool operator==(const FaceMesh&) const = default;
};

struct MmScale {
  double millimeters_per_model_unit = 1.0;
};

// v_i = base_i + sum_k w_k * delta_k,i
std::vector<Vec3> deform(const FaceMesh& mesh, const BlendShapeVector& weights);
Vec3 deform_vertex(const FaceMesh& mesh, const BlendShapeVector& weights, std::size_t vertex);

MmScale canthal_scale(const FaceMesh& mesh, double icd_mm = kDefaultIcdMm);

FaceMesh parse_mesh(std::istream& in, const std::string& source = "<stream>");
void write_mesh(const FaceMesh& mesh, std::ostream& out);
FaceMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const FaceMesh& mesh, const std::filesystem::path& path);

// Procedural low-poly face (about 300 vertices) with hand-placed deltas for all
// 52 shapes. Deterministic; resources/face.btmesh is this mesh serialized.
FaceMesh make_reference_mesh();

}  // namespace blendtrack
