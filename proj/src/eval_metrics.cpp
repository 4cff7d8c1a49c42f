#include "blendtrack/eval_metrics.hpp"

#include "blendtrack/error.hpp"

#include <algorithm>
#include <cmath>

namespace blendtrack {

EvalRegions eval_regions(const FaceMesh& mesh) {
  EvalRegions regions{};
  for (std::size_t i = 0; i < kEvalVertexCount; ++i) regions[i] = mesh.eval_vertices[i].region;
  return regions;
}

VertexErrors vertex_error(const FaceMesh& mesh, MmScale scale, const BlendShapeVector& gt,
                          const BlendShapeVector& pred) {
  // Only the weight difference matters: deform(gt) - deform(pred) = sum (g_k - p_k) d_k.
  BlendShapeVector diff;
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) diff[k] = gt[k] - pred[k];
  VertexErrors out{};
  for (std::size_t i = 0; i < kEvalVertexCount; ++i) {
    const std::size_t v = mesh.eval_vertices[i].vertex;
    Vec3 d{};
    for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
      if (diff[k] != 0.0) d += diff[k] * mesh.deltas[k][v];
    }
    out[i] = d.norm() * scale.millimeters_per_model_unit;
  }
  return out;
}

namespace {

struct RegionMeans {
  double eye = 0.0;
  double mouth = 0.0;
  double overall = 0.0;
};

RegionMeans region_means(const VertexErrors& per_vertex, const EvalRegions& regions) {
  RegionMeans m;
  std::size_t eye = 0;
  std::size_t mouth = 0;
  for (std::size_t i = 0; i < kEvalVertexCount; ++i) {
    m.overall += per_vertex[i];
    if (regions[i] == EvalRegion::Eye) {
      m.eye += per_vertex[i];
      ++eye;
    } else {
      m.mouth += per_vertex[i];
      ++mouth;
    }
  }
  m.overall /= static_cast<double>(kEvalVertexCount);
  if (eye > 0) m.eye /= static_cast<double>(eye);
  if (mouth > 0) m.mouth /= static_cast<double>(mouth);
  return m;
}

VertexErrors mean_of(std::span<const VertexErrors> samples) {
  VertexErrors mean{};
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < kEvalVertexCount; ++i) mean[i] += s[i];
  }
  for (auto& v : mean) v /= static_cast<double>(samples.size());
  return mean;
}

double sem(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

}  // namespace

VertexErrorReport aggregate_errors(std::span<const VertexErrors> samples, const EvalRegions& regions,
                                   std::span<const std::string> groups) {
  if (samples.empty()) fail(ErrorCategory::InvalidArgument, "aggregate_errors: no samples");
  if (!groups.empty() && groups.size() != samples.size())
    fail(ErrorCategory::InvalidArgument, "aggregate_errors: one group label per sample required");

  VertexErrorReport report;
  report.sample_count = samples.size();
  report.per_vertex_mm = mean_of(samples);
  const RegionMeans m = region_means(report.per_vertex_mm, regions);
  report.eye_mean_mm = m.eye;
  report.mouth_mean_mm = m.mouth;
  report.overall_mean_mm = m.overall;

  if (groups.empty()) return report;

  std::map<std::string, std::vector<VertexErrors>> by_group;
  for (std::size_t i = 0; i < samples.size(); ++i) by_group[groups[i]].push_back(samples[i]);
  report.group_count = by_group.size();
  if (by_group.size() < 2) return report;

  std::vector<double> eye;
  std::vector<double> mouth;
  std::vector<double> overall;
  for (const auto& [name, rows] : by_group) {
    const RegionMeans gm = region_means(mean_of(rows), regions);
    eye.push_back(gm.eye);
    mouth.push_back(gm.mouth);
    overall.push_back(gm.overall);
  }
  report.eye_sem_mm = sem(eye);
  report.mouth_sem_mm = sem(mouth);
  report.overall_sem_mm = sem(overall);
  return report;
}

double improvement_ratio(double independent_error, double calibrated_error) {
  if (!(calibrated_error > 0.0))
    fail(ErrorCategory::InvalidArgument, "improvement_ratio: calibrated error must be positive");
  return (independent_error - calibrated_error) / calibrated_error;
}

void PearsonAccumulator::add(double x, double y) {
  ++n_;
  const double n = static_cast<double>(n_);
  const double dx = x - mean_x_;
  mean_x_ += dx / n;
  const double dy = y - mean_y_;
  mean_y_ += dy / n;
  m2_x_ += dx * (x - mean_x_);
  m2_y_ += dy * (y - mean_y_);
  c_xy_ += dx * (y - mean_y_);
}

void PearsonAccumulator::merge(const PearsonAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const double dx = other.mean_x_ - mean_x_;
  const double dy = other.mean_y_ - mean_y_;
  m2_x_ += other.m2_x_ + dx * dx * na * nb / n;
  m2_y_ += other.m2_y_ + dy * dy * na * nb / n;
  c_xy_ += other.c_xy_ + dx * dy * na * nb / n;
  mean_x_ += dx * nb / n;
  mean_y_ += dy * nb / n;
  n_ += other.n_;
}

std::optional<double> PearsonAccumulator::r() const {
  if (n_ < 2 || !(m2_x_ > 0.0) || !(m2_y_ > 0.0)) return std::nullopt;
  const double r = c_xy_ / std::sqrt(m2_x_ * m2_y_);
  return std::clamp(r, -1.0, 1.0);
}

CorrelationReport pearson_per_blendshape(std::span<const BlendShapeVector> preds,
                                         std::span<const BlendShapeVector> labels) {
  if (preds.size() != labels.size())
    fail(ErrorCategory::InvalidArgument, "pearson_per_blendshape: length mismatch (" +
                                             std::to_string(preds.size()) + " predictions, " +
                                             std::to_string(labels.size()) + " labels)");
  if (preds.empty()) fail(ErrorCategory::InvalidArgument, "pearson_per_blendshape: empty input");

  CorrelationReport report;
  std::array<double, kFacePartCount> part_sum{};
  std::array<std::size_t, kFacePartCount> part_n{};
  double total = 0.0;
  std::size_t total_n = 0;
  for (std::size_t k = 0; k < kBlendShapeCount; ++k) {
    PearsonAccumulator acc;
    for (std::size_t i = 0; i < preds.size(); ++i) acc.add(preds[i][k], labels[i][k]);
    const auto r = acc.r();
    report.per_blendshape_r[k] = r;
    if (!r) continue;
    const auto part = static_cast<std::size_t>(face_part(static_cast<BlendShape>(k)));
    part_sum[part] += *r;
    ++part_n[part];
    total += *r;
    ++total_n;
  }
  for (std::size_t p = 0; p < kFacePartCount; ++p) {
    if (part_n[p] > 0) {
      report.region_means[std::string(face_part_name(static_cast<FacePart>(p)))] =
          part_sum[p] / static_cast<double>(part_n[p]);
    }
  }
  if (total_n > 0) report.overall_mean = total / static_cast<double>(total_n);
  return report;
}

}  // namespace blendtrack
