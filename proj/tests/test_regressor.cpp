#include "blendtrack/error.hpp"
#include "blendtrack/regressor.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

using namespace blendtrack;
using nn::Tensor;

namespace {

Tensor scalar_pair(double v) { return Tensor({1, 1}, v); }

Tensor fixture_batch() {
  Tensor x({2, 8, 8, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(((i * 37) % 101) / 100.0);
  return x;
}

// Direct loops over the stored parameters, independent of the im2col path.
Tensor naive_forward(const nn::RegressorModel& model, const Tensor& batch) {
  const std::size_t n = batch.dim(0);
  std::size_t h = batch.dim(1);
  std::size_t w = batch.dim(2);
  std::size_t c = batch.dim(3);
  std::vector<double> act(batch.values().begin(), batch.values().end());
  std::vector<double> flat;
  std::size_t features = 0;
  for (const auto& layer : model.layers()) {
    if (const auto* conv = std::get_if<nn::Conv2d>(&layer)) {
      const std::size_t oh = (h + 1) / 2;
      const std::size_t ow = (w + 1) / 2;
      const std::size_t oc = conv->out_channels;
      std::vector<double> out(n * oh * ow * oc, 0.0);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t o = 0; o < oc; ++o) {
              double s = conv->bias.values[o];
              for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) {
                  const long iy = static_cast<long>(2 * y + ky) - 1;
                  const long ix = static_cast<long>(2 * x + kx) - 1;
                  if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                  for (std::size_t i = 0; i < c; ++i)
                    s += conv->weight.values[((o * 3 + ky) * 3 + kx) * c + i] *
                         act[((b * h + iy) * w + ix) * c + i];
                }
              out[((b * oh + y) * ow + x) * oc + o] = s;
            }
      act = std::move(out);
      h = oh;
      w = ow;
      c = oc;
      features = h * w * c;
    } else if (const auto* dense = std::get_if<nn::Dense>(&layer)) {
      std::vector<double> out(n * dense->out_features);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < dense->out_features; ++o) {
          double s = dense->bias.values[o];
          for (std::size_t i = 0; i < dense->in_features; ++i)
            s += dense->weight.values[o * dense->in_features + i] * act[b * dense->in_features + i];
          out[b * dense->out_features + o] = s;
        }
      act = std::move(out);
      features = dense->out_features;
    } else if (std::holds_alternative<nn::Relu>(layer)) {
      for (auto& v : act) v = std::max(v, 0.0);
    } else if (std::holds_alternative<nn::Sigmoid>(layer)) {
      for (auto& v : act) v = 1.0 / (1.0 + std::exp(-v));
    }
  }
  Tensor out({n, features});
  std::copy(act.begin(), act.end(), out.data());
  return out;
}

}  // namespace

TEST_CASE("weighted L1 reference values") {
  CHECK(nn::weighted_l1_loss(scalar_pair(0.0), scalar_pair(1.0)) == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(nn::weighted_l1_loss(scalar_pair(1.0), scalar_pair(0.0)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nn::weighted_l1_loss(scalar_pair(0.3), scalar_pair(0.3)) == 0.0);
  CHECK(nn::weighted_l1_loss(scalar_pair(0.3), scalar_pair(0.31)) > 0.0);
  double prev = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double y = k / 10.0;
    const double weight = nn::weighted_l1_loss(scalar_pair(y + 0.01 > 1 ? y - 0.01 : y + 0.01), scalar_pair(y));
    CHECK(weight > prev);
    prev = weight;
  }
  Tensor p({2, 2}, 0.5);
  Tensor y({2, 2}, 0.0);
  y[3] = 1.0;
  CHECK(nn::weighted_l1_loss(p, y) == doctest::Approx((0.5 * 3 + 0.5 * 50) / 4).epsilon(1e-15));
  CHECK_THROWS_AS(nn::weighted_l1_loss(Tensor({1, 2}), Tensor({2, 1})), Error);
}

TEST_CASE("weighted L1 gradient matches finite differences away from kinks") {
  Rng rng(31);
  Tensor p = gradcheck::random_tensor({3, 5}, rng, 0.0, 1.0);
  Tensor y = gradcheck::random_tensor({3, 5}, rng, 0.0, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (std::abs(p[i] - y[i]) < 0.01) p[i] = y[i] + 0.05;
  const Tensor g = nn::weighted_l1_grad(p, y);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double num = gradcheck::input_derivative(p[i], [&] { return nn::weighted_l1_loss(p, y); });
    CHECK(gradcheck::relative_error(g[i], num) < 1e-6);
  }
  const Tensor at_label = nn::weighted_l1_grad(y, y);
  for (double v : at_label.values()) CHECK(v == 0.0);
}

TEST_CASE("every layer type passes the gradient check") {
  const auto r = gradcheck::check_all_layers(101);
  CHECK(r.max_parameter_error < 1e-3);
  CHECK(r.max_input_error < 1e-3);
}

TEST_CASE("composed network at 8x8 passes the gradient check") {
  CHECK(gradcheck::check_network_8x8(202).worst() < 1e-3);
}

TEST_CASE("loss-level backward agrees with finite differences") {
  Rng rng(5);
  auto model = nn::RegressorModel::create({8, 8}, 9);
  const Tensor batch = gradcheck::random_tensor({2, 8, 8, 3}, rng, 0.0, 1.0);
  const Tensor pred = model.forward(batch);
  Tensor labels(pred.shape());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = pred[i] > 0.5 ? pred[i] - 0.3 : pred[i] + 0.3;
  const auto lg = nn::backward(model, batch, labels);
  CHECK(lg.loss == doctest::Approx(nn::weighted_l1_loss(pred, labels)).epsilon(1e-12));
  auto params = model.parameters();
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->size(); i += 7) {
      const double num = gradcheck::parameter_derivative(
          params[p]->values[i], [&] { return nn::weighted_l1_loss(model.forward(batch), labels); });
      worst = std::max(worst, gradcheck::relative_error(lg.gradients[p][i], num));
    }
  CHECK(worst < 1e-3);
}

TEST_CASE("architecture and output contract") {
  const auto model = nn::RegressorModel::create({64, 64}, 1);
  const Tensor out = model.forward(Tensor({3, 64, 64, 3}, 0.5));
  CHECK(out.shape() == std::vector<std::size_t>{3, kHalfFaceCount});
  for (double v : out.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // 8*27+8 + 16*72+16 + 32*144+32 + 128*2048+128 + 34*128+34
  CHECK(model.parameter_count() == 224 + 1168 + 4640 + 262272 + 4386);
  CHECK_THROWS_AS(model.forward(Tensor({1, 32, 32, 3})), Error);
  CHECK(nn::RegressorModel::create({64, 64}, 1) == model);
  CHECK_FALSE(nn::RegressorModel::create({64, 64}, 2) == model);
}

TEST_CASE("forward matches the naive oracle and the frozen fixture") {
  const auto model = nn::RegressorModel::create({8, 8}, 42);
  const Tensor x = fixture_batch();
  const Tensor out = model.forward(x);
  const Tensor ref = naive_forward(model, x);
  REQUIRE(ref.shape() == out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - ref[i]) < 1e-12);
  // Computed once with an independent numpy implementation from the saved weights.
  CHECK(std::abs(out[0 * 34 + 0] - 0.32506099264485044) < 1e-6);
  CHECK(std::abs(out[0 * 34 + 7] - 0.6324047901381465) < 1e-6);
  CHECK(std::abs(out[0 * 34 + 33] - 0.5248664598049966) < 1e-6);
  CHECK(std::abs(out[1 * 34 + 0] - 0.3199186066154018) < 1e-6);
  CHECK(std::abs(out[1 * 34 + 18] - 0.5899407756054836) < 1e-6);
  CHECK(std::abs(out[1 * 34 + 33] - 0.5280513812396298) < 1e-6);
}

TEST_CASE("first Adam step moves each parameter by about the learning rate") {
  Rng rng(12);
  auto model = nn::RegressorModel::create({8, 8}, 4);
  const auto before = model;
  auto state = nn::OptimizerState::for_model(model, {});
  const Tensor batch = gradcheck::random_tensor({4, 8, 8, 3}, rng, 0.0, 1.0);
  const Tensor labels = gradcheck::random_tensor({4, kHalfFaceCount}, rng, 0.0, 1.0);
  const auto lg = nn::backward(model, batch, labels);
  nn::train_step(model, state, batch, labels);
  CHECK(state.step == 1);
  const auto after = model.parameters();
  const auto orig = before.parameters();
  for (std::size_t p = 0; p < after.size(); ++p)
    for (std::size_t i = 0; i < after[p]->size(); ++i) {
      const double g = lg.gradients[p][i];
      const double delta = static_cast<double>(after[p]->values[i]) - orig[p]->values[i];
      if (std::abs(g) > 1e-6) {
        CHECK(delta * g < 0.0);
        CHECK(std::abs(delta) == doctest::Approx(1e-3).epsilon(0.01));
      }
    }
}

TEST_CASE("non-finite inputs raise a numeric error and leave the model untouched") {
  auto model = nn::RegressorModel::create({8, 8}, 4);
  const auto before = model;
  auto state = nn::OptimizerState::for_model(model, {});
  Tensor batch({1, 8, 8, 3}, 0.5);
  batch[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    nn::train_step(model, state, batch, Tensor({1, kHalfFaceCount}, 0.5));
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Numeric);
  }
  CHECK(model == before);
  CHECK(state.step == 0);
}

TEST_CASE("small network overfits 50 samples") {
  Rng rng(77);
  auto model = nn::RegressorModel::create({16, 16}, 5);
  nn::AdamConfig adam;
  adam.learning_rate = 3e-3;
  auto state = nn::OptimizerState::for_model(model, adam);
  const Tensor batch = gradcheck::random_tensor({50, 16, 16, 3}, rng, 0.0, 1.0);
  const Tensor labels = gradcheck::random_tensor({50, kHalfFaceCount}, rng, 0.0, 1.0);
  const double initial = nn::weighted_l1_loss(model.forward(batch), labels);
  for (int step = 0; step < 200; ++step) nn::train_step(model, state, batch, labels);
  const double final_loss = nn::weighted_l1_loss(model.forward(batch), labels);
  MESSAGE("loss " << initial << " -> " << final_loss);
  CHECK(final_loss <= 0.1 * initial);
}

TEST_CASE("weights serialize bit-exactly") {
  const auto model = nn::RegressorModel::create({16, 12}, 8);
  const auto bytes = nn::serialize_weights(model);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "BTRK");
  const auto back = nn::deserialize_weights(bytes);
  CHECK(back == model);
  CHECK(back.input_spec() == nn::InputSpec{16, 12});
  CHECK(nn::serialize_weights(back) == bytes);

  const auto dir = test::scratch_dir("weights");
  nn::save_weights(model, dir / "m.btrk");
  CHECK(nn::load_weights(dir / "m.btrk") == model);
}

TEST_CASE("corrupt weight files are rejected") {
  const auto bytes = nn::serialize_weights(nn::RegressorModel::create({8, 8}, 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(nn::deserialize_weights(bad_magic), Error);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(nn::deserialize_weights(truncated), Error);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(nn::deserialize_weights(trailing), Error);
  try {
    nn::load_weights("/nonexistent/model.btrk");
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::Io);
  }
}

TEST_CASE("make_batch converts CHW images to NHWC") {
  ImageTensor a(2, 3);
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = static_cast<float>(i) / 100.0f;
  const std::vector<ImageTensor> images{a, a};
  const Tensor t = nn::make_batch(images);
  CHECK(t.shape() == std::vector<std::size_t>{2, 2, 3, 3});
  CHECK(t[((1 * 2 + 1) * 3 + 2) * 3 + 1] == doctest::Approx(a.at(1, 1, 2)));
  CHECK_THROWS_AS(nn::make_batch(std::vector<ImageTensor>{}), Error);
}
