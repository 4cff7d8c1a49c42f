#pragma once

// Central finite-difference checks of analytic gradients. The objective is
// L = sum_i r_i * out_i for a fixed random r, so dL/dout = r.

#include "blendtrack/regressor.hpp"
#include "blendtrack/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace blendtrack::gradcheck {

inline constexpr double kEpsilon = 1e-4;
inline constexpr double kDenominatorFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kDenominatorFloor});
}

inline double dot(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  nn::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Inputs for piecewise layers keep |x| >= 0.05 so no kink lies within epsilon.
inline nn::Tensor kink_free_tensor(std::vector<std::size_t> shape, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = rng.uniform(0.05, 1.0);
    t[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

inline void randomize(nn::Parameter& p, Rng& rng, double scale) {
  for (auto& v : p.values) v = static_cast<float>(rng.uniform(-scale, scale));
}

// Perturbs a stored f32 parameter by +/- epsilon; the realized float step is used.
inline double parameter_derivative(float& value, const std::function<double()>& objective) {
  const float original = value;
  const float up = static_cast<float>(original + kEpsilon);
  const float down = static_cast<float>(original - kEpsilon);
  value = up;
  const double f_up = objective();
  value = down;
  const double f_down = objective();
  value = original;
  return (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
}

inline double input_derivative(double& value, const std::function<double()>& objective) {
  const double original = value;
  value = original + kEpsilon;
  const double f_up = objective();
  value = original - kEpsilon;
  const double f_down = objective();
  value = original;
  return (f_up - f_down) / (2.0 * kEpsilon);
}

struct Result {
  double max_parameter_error = 0.0;
  double max_input_error = 0.0;
  double worst() const { return std::max(max_parameter_error, max_input_error); }
};

template <class Layer>
Result check_parametric(Layer layer, nn::Tensor input, Rng& rng) {
  nn::LayerCache cache;
  const nn::Tensor out = layer.forward(input, &cache);
  const nn::Tensor r = random_tensor(out.shape(), rng, -1.0, 1.0);
  std::vector<double> wg(layer.weight.size(), 0.0);
  std::vector<double> bg(layer.bias.size(), 0.0);
  const nn::Tensor ig = layer.backward(r, cache, wg, bg, true);
  auto objective = [&] { return dot(layer.forward(input, nullptr), r); };
  Result res;
  for (std::size_t i = 0; i < wg.size(); ++i)
    res.max_parameter_error =
        std::max(res.max_parameter_error, relative_error(wg[i], parameter_derivative(layer.weight.values[i], objective)));
  for (std::size_t i = 0; i < bg.size(); ++i)
    res.max_parameter_error =
        std::max(res.max_parameter_error, relative_error(bg[i], parameter_derivative(layer.bias.values[i], objective)));
  for (std::size_t i = 0; i < input.size(); ++i)
    res.max_input_error = std::max(res.max_input_error, relative_error(ig[i], input_derivative(input[i], objective)));
  return res;
}

template <class Layer>
Result check_activation(Layer layer, nn::Tensor input, Rng& rng) {
  nn::LayerCache cache;
  const nn::Tensor out = layer.forward(input, &cache);
  const nn::Tensor r = random_tensor(out.shape(), rng, -1.0, 1.0);
  const nn::Tensor ig = layer.backward(r, cache);
  auto objective = [&] { return dot(layer.forward(input, nullptr), r); };
  Result res;
  for (std::size_t i = 0; i < input.size(); ++i)
    res.max_input_error = std::max(res.max_input_error, relative_error(ig[i], input_derivative(input[i], objective)));
  return res;
}

// Every parameter of a model against its analytic gradient.
inline Result check_model(nn::RegressorModel model, const nn::Tensor& batch, Rng& rng) {
  const nn::ForwardTrace trace = model.forward_trace(batch);
  const nn::Tensor r = random_tensor(trace.output.shape(), rng, -1.0, 1.0);
  const nn::Gradients grads = model.backward(trace, r);
  auto params = model.parameters();
  auto objective = [&] { return dot(model.forward(batch), r); };
  Result res;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->size(); ++i)
      res.max_parameter_error = std::max(res.max_parameter_error,
                                         relative_error(grads[p][i], parameter_derivative(params[p]->values[i], objective)));
  return res;
}

inline Result check_all_layers(std::uint64_t seed) {
  Rng rng(seed);
  Result worst;
  auto fold = [&](const Result& r) {
    worst.max_parameter_error = std::max(worst.max_parameter_error, r.max_parameter_error);
    worst.max_input_error = std::max(worst.max_input_error, r.max_input_error);
  };
  nn::Conv2d conv("conv", 2, 3);
  randomize(conv.weight, rng, 0.5);
  randomize(conv.bias, rng, 0.5);
  fold(check_parametric(conv, random_tensor({2, 5, 6, 2}, rng, -1.0, 1.0), rng));
  nn::Dense dense("dense", 6, 4);
  randomize(dense.weight, rng, 0.5);
  randomize(dense.bias, rng, 0.5);
  fold(check_parametric(dense, random_tensor({3, 6}, rng, -1.0, 1.0), rng));
  fold(check_activation(nn::Relu{}, kink_free_tensor({3, 7}, rng), rng));
  fold(check_activation(nn::Sigmoid{}, random_tensor({3, 7}, rng, -4.0, 4.0), rng));
  fold(check_activation(nn::Flatten{}, random_tensor({2, 3, 2, 4}, rng, -1.0, 1.0), rng));
  return worst;
}

inline Result check_network_8x8(std::uint64_t seed) {
  Rng rng(seed);
  const auto model = nn::RegressorModel::create({8, 8}, seed);
  return check_model(model, random_tensor({2, 8, 8, 3}, rng, 0.0, 1.0), rng);
}

}  // namespace blendtrack::gradcheck
