#pragma once

#include "blendtrack/blendshape.hpp"
#include "blendtrack/face_mesh.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace blendtrack {

using VertexErrors = std::array<double, kEvalVertexCount>;
using EvalRegions = std::array<EvalRegion, kEvalVertexCount>;

EvalRegions eval_regions(const FaceMesh& mesh);

// Millimeter distance at each tracked vertex between the face deformed by the
// label and the face deformed by the prediction.
VertexErrors vertex_error(const FaceMesh& mesh, MmScale scale, const BlendShapeVector& gt,
                          const BlendShapeVector& pred);

struct VertexErrorReport {
  VertexErrors per_vertex_mm{};
  double eye_mean_mm = 0.0;
  double mouth_mean_mm = 0.0;
  double overall_mean_mm = 0.0;
  std::size_t sample_count = 0;
  // Standard error of the mean across groups (subjects); set when >= 2 groups.
  std::size_t group_count = 0;
  std::optional<double> eye_sem_mm;
  std::optional<double> mouth_sem_mm;
  std::optional<double> overall_sem_mm;
};

// Means over samples, then over each region's vertices. `groups`, when given,
// labels each sample (one label per sample) for the SEM computation.
VertexErrorReport aggregate_errors(std::span<const VertexErrors> samples, const EvalRegions& regions,
                                   std::span<const std::string> groups = {});

// Relative improvement of a calibrated error over an independent one,
// (e_independent - e_calibrated) / e_calibrated.
double improvement_ratio(double independent_error, double calibrated_error);

struct CorrelationReport {
  // Empty where either series has zero variance.
  std::array<std::optional<double>, kBlendShapeCount> per_blendshape_r{};
  std::map<std::string, double> region_means;
  std::optional<double> overall_mean;
};

// Pearson R per channel between predictions and labels (equal length, >= 1).
CorrelationReport pearson_per_blendshape(std::span<const BlendShapeVector> preds,
                                         std::span<const BlendShapeVector> labels);

// Streaming Pearson accumulator; partial accumulators merge associatively.
class PearsonAccumulator {
 public:
  void add(double x, double y);
  void merge(const PearsonAccumulator& other);
  std::size_t count() const { return n_; }
  std::optional<double> r() const;

 private:
  std::size_t n_ = 0;
  double mean_x_ = 0.0;
  double mean_y_ = 0.0;
  double m2_x_ = 0.0;
  double m2_y_ = 0.0;
  double c_xy_ = 0.0;
};

}  // namespace blendtrack
