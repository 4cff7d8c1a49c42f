#include "blendtrack/regressor.hpp"

#include "blendtrack/error.hpp"
#include "blendtrack/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

namespace blendtrack::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Parameter make_parameter(std::string name, std::vector<std::size_t> shape) {
  Parameter p;
  p.name = std::move(name);
  p.values.assign(product(shape), 0.0f);
  p.shape = std::move(shape);
  return p;
}

RowMatrix as_matrix(const Parameter& p, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const RowMatrixF>(p.values.data(), static_cast<Eigen::Index>(rows),
                                      static_cast<Eigen::Index>(cols))
      .cast<double>();
}

}  // namespace

// --- Tensor ------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (product(shape) != values_.size())
    fail(ErrorCategory::InvalidArgument, "reshape to " + shape_string(shape) + " changes element count");
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = values_;
  return t;
}

// --- Conv2d ------------------------------------------------------------------

Conv2d::Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch)
    : in_channels(in_ch),
      out_channels(out_ch),
      weight(make_parameter(name + ".weight", {out_ch, kKernel, kKernel, in_ch})),
      bias(make_parameter(name + ".bias", {out_ch})) {}

Tensor Conv2d::forward(const Tensor& input, LayerCache* cache) const {
  if (input.rank() != 4 || input.dim(3) != in_channels)
    fail(ErrorCategory::InvalidArgument, weight.name + ": expected NHWC input with " +
                                             std::to_string(in_channels) + " channels, got " +
                                             shape_string(input.shape()));
  const std::size_t n = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  const std::size_t ho = output_extent(h);
  const std::size_t wo = output_extent(w);
  const std::size_t k = kKernel * kKernel * in_channels;
  const std::size_t rows = n * ho * wo;

  Tensor columns({rows, k});
  double* col = columns.data();
  const double* in = input.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* row = col + ((b * ho + oy) * wo + ox) * k;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
          const long iy = static_cast<long>(oy * kStride + ky) - static_cast<long>(kPad);
          for (std::size_t kx = 0; kx < kKernel; ++kx) {
            const long ix = static_cast<long>(ox * kStride + kx) - static_cast<long>(kPad);
            double* dst = row + (ky * kKernel + kx) * in_channels;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
            const double* src = in + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) *
                                         in_channels;
            std::copy_n(src, in_channels, dst);
          }
        }
      }
    }
  }

  Tensor output({n, ho, wo, out_channels});
  const RowMatrix wmat = as_matrix(weight, out_channels, k);
  const Eigen::Map<const Eigen::RowVectorXf> bvec(bias.values.data(), static_cast<Eigen::Index>(out_channels));
  MatrixMap out(output.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_channels));
  const ConstMatrixMap cols(columns.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k));
  out.noalias() = cols * wmat.transpose();
  out.rowwise() += bvec.cast<double>();

  if (cache) {
    cache->input_shape = input.shape();
    cache->columns = std::move(columns);
  }
  return output;
}

Tensor Conv2d::backward(const Tensor& grad_output, const LayerCache& cache, std::span<double> weight_grad,
                        std::span<double> bias_grad, bool need_input_grad) const {
  const auto& in_shape = cache.input_shape;
  const std::size_t n = in_shape[0];
  const std::size_t h = in_shape[1];
  const std::size_t w = in_shape[2];
  const std::size_t ho = output_extent(h);
  const std::size_t wo = output_extent(w);
  const std::size_t k = kKernel * kKernel * in_channels;
  const auto rows = static_cast<Eigen::Index>(n * ho * wo);

  const ConstMatrixMap dout(grad_output.data(), rows, static_cast<Eigen::Index>(out_channels));
  const ConstMatrixMap cols(cache.columns.data(), rows, static_cast<Eigen::Index>(k));
  MatrixMap dw(weight_grad.data(), static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(k));
  dw.noalias() += dout.transpose() * cols;
  Eigen::Map<Eigen::RowVectorXd> db(bias_grad.data(), static_cast<Eigen::Index>(out_channels));
  db += dout.colwise().sum();

  if (!need_input_grad) return {};

  const RowMatrix wmat = as_matrix(weight, out_channels, k);
  const RowMatrix dcols = dout * wmat;
  Tensor grad_input(in_shape);
  double* din = grad_input.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double* row = dcols.data() + ((b * ho + oy) * wo + ox) * k;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
          const long iy = static_cast<long>(oy * kStride + ky) - static_cast<long>(kPad);
          for (std::size_t kx = 0; kx < kKernel; ++kx) {
            const long ix = static_cast<long>(ox * kStride + kx) - static_cast<long>(kPad);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
            const double* src = row + (ky * kKernel + kx) * in_channels;
            double* dst = din + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) *
                                    in_channels;
            for (std::size_t c = 0; c < in_channels; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
  return grad_input;
}

// --- Dense -------------------------------------------------------------------

Dense::Dense(std::string name, std::size_t in_f, std::size_t out_f)
    : in_features(in_f),
      out_features(out_f),
      weight(make_parameter(name + ".weight", {out_f, in_f})),
      bias(make_parameter(name + ".bias", {out_f})) {}

Tensor Dense::forward(const Tensor& input, LayerCache* cache) const {
  if (input.rank() != 2 || input.dim(1) != in_features)
    fail(ErrorCategory::InvalidArgument, weight.name + ": expected [N," + std::to_string(in_features) +
                                             "] input, got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0);
  Tensor output({n, out_features});
  const RowMatrix wmat = as_matrix(weight, out_features, in_features);
  const Eigen::Map<const Eigen::RowVectorXf> bvec(bias.values.data(), static_cast<Eigen::Index>(out_features));
  const ConstMatrixMap in(input.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_features));
  MatrixMap out(output.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_features));
  out.noalias() = in * wmat.transpose();
  out.rowwise() += bvec.cast<double>();
  if (cache) cache->input = input;
  return output;
}

Tensor Dense::backward(const Tensor& grad_output, const LayerCache& cache, std::span<double> weight_grad,
                       std::span<double> bias_grad, bool need_input_grad) const {
  const auto n = static_cast<Eigen::Index>(cache.input.dim(0));
  const ConstMatrixMap dout(grad_output.data(), n, static_cast<Eigen::Index>(out_features));
  const ConstMatrixMap in(cache.input.data(), n, static_cast<Eigen::Index>(in_features));
  MatrixMap dw(weight_grad.data(), static_cast<Eigen::Index>(out_features),
               static_cast<Eigen::Index>(in_features));
  dw.noalias() += dout.transpose() * in;
  Eigen::Map<Eigen::RowVectorXd> db(bias_grad.data(), static_cast<Eigen::Index>(out_features));
  db += dout.colwise().sum();
  if (!need_input_grad) return {};
  Tensor grad_input(cache.input.shape());
  MatrixMap din(grad_input.data(), n, static_cast<Eigen::Index>(in_features));
  din.noalias() = dout * as_matrix(weight, out_features, in_features);
  return grad_input;
}

// --- elementwise -------------------------------------------------------------

Tensor Relu::forward(const Tensor& input, LayerCache* cache) const {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  if (cache) cache->output = out;
  return out;
}

Tensor Relu::backward(const Tensor& grad_output, const LayerCache& cache) const {
  Tensor g = grad_output;
  const auto out = cache.output.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(out[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor Sigmoid::forward(const Tensor& input, LayerCache* cache) const {
  Tensor out = input;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  if (cache) cache->output = out;
  return out;
}

Tensor Sigmoid::backward(const Tensor& grad_output, const LayerCache& cache) const {
  Tensor g = grad_output;
  const auto s = cache.output.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s[i] * (1.0 - s[i]);
  return g;
}

Tensor Flatten::forward(const Tensor& input, LayerCache* cache) const {
  if (cache) cache->input_shape = input.shape();
  const std::size_t n = input.dim(0);
  return input.reshaped({n, input.size() / std::max<std::size_t>(n, 1)});
}

Tensor Flatten::backward(const Tensor& grad_output, const LayerCache& cache) const {
  return grad_output.reshaped(cache.input_shape);
}

// --- model -------------------------------------------------------------------

RegressorModel::RegressorModel(InputSpec spec) : spec_(spec) {
  if (spec.height == 0 || spec.width == 0)
    fail(ErrorCategory::InvalidArgument, "input spec must have positive height and width");
  constexpr std::array<std::size_t, 3> kChannels = {8, 16, 32};
  std::size_t h = spec.height;
  std::size_t w = spec.width;
  std::size_t c = InputSpec::kChannels;
  for (std::size_t i = 0; i < kChannels.size(); ++i) {
    layers_.emplace_back(Conv2d("conv" + std::to_string(i + 1), c, kChannels[i]));
    layers_.emplace_back(Relu{});
    h = Conv2d::output_extent(h);
    w = Conv2d::output_extent(w);
    c = kChannels[i];
  }
  layers_.emplace_back(Flatten{});
  layers_.emplace_back(Dense("dense1", h * w * c, kHidden));
  layers_.emplace_back(Relu{});
  layers_.emplace_back(Dense("dense2", kHidden, kOutputs));
  layers_.emplace_back(Sigmoid{});
}

RegressorModel RegressorModel::zeros(InputSpec spec) { return RegressorModel(spec); }

RegressorModel RegressorModel::create(InputSpec spec, std::uint64_t seed) {
  RegressorModel model(spec);
  Rng rng(seed);
  const auto init = [&](Parameter& weight, std::size_t fan_in, double gain) {
    const double limit = std::sqrt(gain / static_cast<double>(fan_in));
    for (float& v : weight.values) v = static_cast<float>(rng.uniform(-limit, limit));
  };
  const std::size_t dense_count = 2;
  std::size_t dense_seen = 0;
  for (auto& layer : model.layers_) {
    if (auto* conv = std::get_if<Conv2d>(&layer)) {
      init(conv->weight, Conv2d::kKernel * Conv2d::kKernel * conv->in_channels, 6.0);
    } else if (auto* dense = std::get_if<Dense>(&layer)) {
      ++dense_seen;
      // He-uniform ahead of ReLU, LeCun-uniform ahead of the sigmoid.
      init(dense->weight, dense->in_features, dense_seen == dense_count ? 3.0 : 6.0);
    }
  }
  return model;
}

std::vector<Parameter*> RegressorModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    if (auto* conv = std::get_if<Conv2d>(&layer)) {
      out.push_back(&conv->weight);
      out.push_back(&conv->bias);
    } else if (auto* dense = std::get_if<Dense>(&layer)) {
      out.push_back(&dense->weight);
      out.push_back(&dense->bias);
    }
  }
  return out;
}

std::vector<const Parameter*> RegressorModel::parameters() const {
  auto mutable_params = const_cast<RegressorModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t RegressorModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

Gradients RegressorModel::zero_gradients() const {
  Gradients g;
  for (const auto* p : parameters()) g.emplace_back(p->size(), 0.0);
  return g;
}

void RegressorModel::check_batch(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(0) == 0 || batch.dim(1) != spec_.height || batch.dim(2) != spec_.width ||
      batch.dim(3) != InputSpec::kChannels) {
    fail(ErrorCategory::InvalidArgument,
         "batch shape " + shape_string(batch.shape()) + " does not match input spec [N," +
             std::to_string(spec_.height) + "," + std::to_string(spec_.width) + ",3]");
  }
}

Tensor RegressorModel::forward(const Tensor& batch) const {
  check_batch(batch);
  Tensor x = batch;
  for (const auto& layer : layers_) {
    x = std::visit([&](const auto& l) { return l.forward(x, nullptr); }, layer);
  }
  return x;
}

ForwardTrace RegressorModel::forward_trace(const Tensor& batch) const {
  check_batch(batch);
  ForwardTrace trace;
  trace.caches.resize(layers_.size());
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = std::visit([&](const auto& l) { return l.forward(x, &trace.caches[i]); }, layers_[i]);
  }
  trace.output = std::move(x);
  return trace;
}

Gradients RegressorModel::backward(const ForwardTrace& trace, const Tensor& grad_output) const {
  if (grad_output.shape() != trace.output.shape())
    fail(ErrorCategory::InvalidArgument, "gradient shape does not match forward output");
  Gradients grads = zero_gradients();
  // Parameter index of each layer's weight, walking backwards.
  std::size_t param_index = grads.size();
  Tensor g = grad_output;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const auto& cache = trace.caches[li];
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      param_index -= 2;
      g = conv->backward(g, cache, grads[param_index], grads[param_index + 1], param_index > 0);
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      param_index -= 2;
      g = dense->backward(g, cache, grads[param_index], grads[param_index + 1], true);
    } else {
      g = std::visit(
          [&](const auto& l) -> Tensor {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Relu> || std::is_same_v<L, Sigmoid> || std::is_same_v<L, Flatten>) {
              return l.backward(g, cache);
            } else {
              return g;
            }
          },
          layer);
    }
  }
  return grads;
}

bool RegressorModel::operator==(const RegressorModel& other) const {
  if (!(spec_ == other.spec_)) return false;
  const auto a = parameters();
  const auto b = other.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->name != b[i]->name || a[i]->shape != b[i]->shape ||
        std::memcmp(a[i]->values.data(), b[i]->values.data(), a[i]->values.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

// --- loss --------------------------------------------------------------------

namespace {

void check_pair(const Tensor& pred, const Tensor& label) {
  if (pred.shape() != label.shape())
    fail(ErrorCategory::InvalidArgument, "prediction shape " + shape_string(pred.shape()) +
                                             " does not match label shape " + shape_string(label.shape()));
  if (pred.size() == 0) fail(ErrorCategory::InvalidArgument, "empty prediction tensor");
}

}  // namespace

double weighted_l1_loss(const Tensor& pred, const Tensor& label, double base) {
  check_pair(pred, label);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::abs(pred[i] - label[i]) * std::pow(base, label[i]);
  }
  return sum / static_cast<double>(pred.size());
}

Tensor weighted_l1_grad(const Tensor& pred, const Tensor& label, double base) {
  check_pair(pred, label);
  Tensor g(pred.shape());
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred[i] - label[i];
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    g[i] = sign * std::pow(base, label[i]) * inv_n;
  }
  return g;
}

LossAndGradients backward(const RegressorModel& model, const Tensor& batch, const Tensor& labels,
                          double loss_base) {
  const ForwardTrace trace = model.forward_trace(batch);
  LossAndGradients out;
  out.loss = weighted_l1_loss(trace.output, labels, loss_base);
  out.gradients = model.backward(trace, weighted_l1_grad(trace.output, labels, loss_base));
  return out;
}

// --- optimizer ---------------------------------------------------------------

OptimizerState OptimizerState::for_model(const RegressorModel& model, AdamConfig config) {
  OptimizerState s;
  s.config = config;
  s.first_moment = model.zero_gradients();
  s.second_moment = model.zero_gradients();
  return s;
}

double train_step(RegressorModel& model, OptimizerState& state, const Tensor& batch, const Tensor& labels,
                  double loss_base) {
  LossAndGradients lg = backward(model, batch, labels, loss_base);
  if (!std::isfinite(lg.loss)) fail(ErrorCategory::Numeric, "training diverged: non-finite loss");
  for (const auto& g : lg.gradients) {
    for (double v : g) {
      if (!std::isfinite(v)) fail(ErrorCategory::Numeric, "training diverged: non-finite gradient");
    }
  }

  auto params = model.parameters();
  if (state.first_moment.size() != params.size())
    fail(ErrorCategory::InvalidArgument, "optimizer state does not match model parameters");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& values = params[p]->values;
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    const auto& g = lg.gradients[p];
    if (m.size() != values.size()) fail(ErrorCategory::InvalidArgument, "optimizer moment shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double step = c.learning_rate * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + c.epsilon);
      values[i] = static_cast<float>(static_cast<double>(values[i]) - step);
    }
  }
  return lg.loss;
}

// --- serialization -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'B', 'T', 'R', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    u32(bits);
  }
  void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return need(1)[0]; }
  std::uint16_t u16() {
    const auto* p = need(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const auto* p = need(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::string str(std::size_t n) {
    const auto* p = need(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::uint8_t* need(std::size_t n) {
    if (bytes_.size() - pos_ < n) fail(ErrorCategory::Parse, "weight file: unexpected end of file");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_record(ByteWriter& w, const std::string& name, const std::vector<std::size_t>& shape,
                  std::span<const float> values) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.raw(name.data(), name.size());
  w.u8(kDtypeF32);
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (float v : values) w.f32(v);
}

struct Record {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

Record read_record(ByteReader& r) {
  Record rec;
  rec.name = r.str(r.u16());
  const std::uint8_t dtype = r.u8();
  if (dtype != kDtypeF32)
    fail(ErrorCategory::Parse, "weight file: record '" + rec.name + "' has unsupported dtype " +
                                   std::to_string(dtype));
  const std::uint8_t rank = r.u8();
  for (std::uint8_t i = 0; i < rank; ++i) rec.shape.push_back(r.u32());
  const std::size_t count = product(rec.shape);
  rec.values.resize(count);
  for (auto& v : rec.values) v = r.f32();
  return rec;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const RegressorModel& model) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size() + 1));
  const InputSpec& spec = model.input_spec();
  const std::array<float, 3> spec_values = {static_cast<float>(spec.height), static_cast<float>(spec.width),
                                            static_cast<float>(InputSpec::kChannels)};
  write_record(w, "input_spec", {3}, spec_values);
  for (const auto* p : params) write_record(w, p->name, p->shape, p->values);
  return w.take();
}

RegressorModel deserialize_weights(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) fail(ErrorCategory::Parse, "weight file: bad magic (expected BTRK)");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    fail(ErrorCategory::Parse, "weight file: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  if (count == 0) fail(ErrorCategory::Parse, "weight file: no records");

  const Record spec_rec = read_record(r);
  if (spec_rec.name != "input_spec" || spec_rec.values.size() != 3 || spec_rec.values[2] != 3.0f ||
      !(spec_rec.values[0] >= 1.0f) || !(spec_rec.values[1] >= 1.0f)) {
    fail(ErrorCategory::Data, "weight file: missing or invalid input_spec record");
  }
  RegressorModel model = RegressorModel::zeros(
      {static_cast<std::size_t>(spec_rec.values[0]), static_cast<std::size_t>(spec_rec.values[1])});
  auto params = model.parameters();
  if (count != params.size() + 1)
    fail(ErrorCategory::Data, "weight file: expected " + std::to_string(params.size() + 1) + " records, found " +
                                  std::to_string(count));
  for (auto* p : params) {
    Record rec = read_record(r);
    if (rec.name != p->name)
      fail(ErrorCategory::Data, "weight file: expected record '" + p->name + "', found '" + rec.name + "'");
    if (rec.shape != p->shape)
      fail(ErrorCategory::Data, "weight file: shape mismatch for '" + p->name + "': declared architecture needs " +
                                    shape_string(p->shape) + ", file has " + shape_string(rec.shape));
    p->values = std::move(rec.values);
  }
  if (!r.at_end()) fail(ErrorCategory::Parse, "weight file: trailing bytes after last record");
  return model;
}

void save_weights(const RegressorModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::Io, "cannot write weight file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCategory::Io, "write failed for " + path.string());
}

RegressorModel load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::Io, "cannot open weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

// --- batching ----------------------------------------------------------------

Tensor make_batch(std::span<const ImageTensor* const> images) {
  if (images.empty()) fail(ErrorCategory::InvalidArgument, "make_batch: no images");
  const std::size_t h = images[0]->height;
  const std::size_t w = images[0]->width;
  Tensor batch({images.size(), h, w, InputSpec::kChannels});
  double* dst = batch.data();
  for (const ImageTensor* img : images) {
    if (img->height != h || img->width != w)
      fail(ErrorCategory::InvalidArgument, "make_batch: images differ in size");
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < InputSpec::kChannels; ++c) *dst++ = img->at(c, y, x);
      }
    }
  }
  return batch;
}

Tensor make_batch(std::span<const ImageTensor> images) {
  std::vector<const ImageTensor*> ptrs;
  for (const auto& img : images) ptrs.push_back(&img);
  return make_batch(std::span<const ImageTensor* const>(ptrs));
}

}  // namespace blendtrack::nn
