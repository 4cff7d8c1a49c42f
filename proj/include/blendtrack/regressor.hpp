#pragma once

#include "blendtrack/blendshape.hpp"
#include "blendtrack/image.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace blendtrack::nn {

// Row-major double tensor for activations and gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Same values, new shape of equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Trainable tensor. Values are stored in f32, the serialized precision, so a
// save/load round trip is bit-exact; arithmetic is carried out in double.
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;

  std::size_t size() const { return values.size(); }
};

// One gradient buffer per parameter, in RegressorModel::parameters() order.
using Gradients = std::vector<std::vector<double>>;

// Per-layer intermediate results kept by a forward pass for backward.
struct LayerCache {
  std::vector<std::size_t> input_shape;
  Tensor input;
  Tensor output;
  Tensor columns;  // conv im2col matrix
};

// 3x3 convolution, stride 2, zero padding 1, NHWC activations.
// Weight layout [out_ch, 3, 3, in_ch].
class Conv2d {
 public:
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 2;
  static constexpr std::size_t kPad = 1;

  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels);

  static std::size_t output_extent(std::size_t in) { return (in + 2 * kPad - kKernel) / kStride + 1; }

  Tensor forward(const Tensor& input, LayerCache* cache) const;
  // Accumulates into weight_grad / bias_grad; returns dL/dinput when requested.
  Tensor backward(const Tensor& grad_output, const LayerCache& cache, std::span<double> weight_grad,
                  std::span<double> bias_grad, bool need_input_grad) const;

  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Parameter weight;
  Parameter bias;
};

// Fully connected layer over [N, in]. Weight layout [out, in].
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, std::size_t in_features, std::size_t out_features);

  Tensor forward(const Tensor& input, LayerCache* cache) const;
  Tensor backward(const Tensor& grad_output, const LayerCache& cache, std::span<double> weight_grad,
                  std::span<double> bias_grad, bool need_input_grad) const;

  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Parameter weight;
  Parameter bias;
};

struct Relu {
  Tensor forward(const Tensor& input, LayerCache* cache) const;
  Tensor backward(const Tensor& grad_output, const LayerCache& cache) const;
};

struct Sigmoid {
  Tensor forward(const Tensor& input, LayerCache* cache) const;
  Tensor backward(const Tensor& grad_output, const LayerCache& cache) const;
};

// [N, H, W, C] -> [N, H*W*C]
struct Flatten {
  Tensor forward(const Tensor& input, LayerCache* cache) const;
  Tensor backward(const Tensor& grad_output, const LayerCache& cache) const;
};

using Layer = std::variant<Conv2d, Relu, Flatten, Dense, Sigmoid>;

struct InputSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  static constexpr std::size_t kChannels = 3;
  bool operator==(const InputSpec&) const = default;
};

struct ForwardTrace {
  std::vector<LayerCache> caches;
  Tensor output;
};

// conv(8) -> relu -> conv(16) -> relu -> conv(32) -> relu -> flatten ->
// dense(128) -> relu -> dense(34) -> sigmoid.
class RegressorModel {
 public:
  static constexpr std::size_t kHidden = 128;
  static constexpr std::size_t kOutputs = kHalfFaceCount;

  // Fan-in scaled uniform weights, zero biases.
  static RegressorModel create(InputSpec spec, std::uint64_t seed);
  // All parameters zero.
  static RegressorModel zeros(InputSpec spec);

  const InputSpec& input_spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  Gradients zero_gradients() const;

  // batch: [N, h, w, 3] -> [N, 34], values in (0, 1).
  Tensor forward(const Tensor& batch) const;
  ForwardTrace forward_trace(const Tensor& batch) const;
  Gradients backward(const ForwardTrace& trace, const Tensor& grad_output) const;

  bool operator==(const RegressorModel& other) const;

 private:
  explicit RegressorModel(InputSpec spec);
  void check_batch(const Tensor& batch) const;

  InputSpec spec_;
  std::vector<Layer> layers_;
};

inline constexpr double kDefaultLossBase = 50.0;

// mean over entries of |p - y| * base^y
double weighted_l1_loss(const Tensor& pred, const Tensor& label, double base = kDefaultLossBase);
// d loss / d pred, with subgradient 0 where p == y.
Tensor weighted_l1_grad(const Tensor& pred, const Tensor& label, double base = kDefaultLossBase);

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
};

LossAndGradients backward(const RegressorModel& model, const Tensor& batch, const Tensor& labels,
                          double loss_base = kDefaultLossBase);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  Gradients first_moment;
  Gradients second_moment;

  static OptimizerState for_model(const RegressorModel& model, AdamConfig config);
};

// One Adam update. Returns the pre-update loss; throws Numeric on a
// non-finite loss or gradient (model and state untouched in that case).
double train_step(RegressorModel& model, OptimizerState& state, const Tensor& batch,
                  const Tensor& labels, double loss_base = kDefaultLossBase);

// Binary weight file: "BTRK", u32 version, u32 record count, then per record
// u16 name length, name, u8 dtype (0 = f32), u8 rank, u32 dims, f32 payload.
// All little-endian. The first record, "input_spec", holds {h, w, 3}.
void save_weights(const RegressorModel& model, const std::filesystem::path& path);
RegressorModel load_weights(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_weights(const RegressorModel& model);
RegressorModel deserialize_weights(std::span<const std::uint8_t> bytes);

// Packs CHW images of the model's input size into an NHWC batch.
Tensor make_batch(std::span<const ImageTensor* const> images);
Tensor make_batch(std::span<const ImageTensor> images);

}  // namespace blendtrack::nn
