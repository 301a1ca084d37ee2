// SPDX-License-Identifier: Apache-2.0
#include "pgru/dense.hpp"

#include <cmath>

#include "pgru/error.hpp"

namespace pgru {

DenseStack DenseStack::create(std::size_t inputs, std::size_t width, std::size_t hidden, std::size_t outputs,
                              Activation hidden_activation, SeededRng& rng) {
  if (inputs == 0 || outputs == 0 || (hidden > 0 && width == 0)) {
    fail(ErrorKind::Domain, "dense stack needs positive sizes (inputs {}, width {}, outputs {})", inputs, width,
         outputs);
  }
  DenseStack stack;
  std::size_t fan_in = inputs;
  auto add = [&](std::size_t out, Activation act) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{Matrix(out, fan_in, rng_uniform(rng, out * fan_in, -bound, bound)), Matrix(out, 1), act};
    stack.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (std::size_t l = 0; l < hidden; ++l) add(width, hidden_activation);
  add(outputs, Activation::Identity);
  return stack;
}

std::size_t DenseStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

DenseStack DenseStack::zeros_like() const {
  DenseStack z;
  for (const auto& l : layers) {
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Matrix(l.bias.rows(), 1), l.activation});
  }
  return z;
}

std::span<const double> DenseStack::forward(std::span<const double> x, DenseCache& cache) const {
  if (x.size() != inputs()) fail(ErrorKind::Shape, "dense stack expects {} inputs, got {}", inputs(), x.size());
  cache.values.resize(layers.size() + 1);
  cache.values[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    auto& out = cache.values[l + 1];
    out.assign(layer.bias.values().begin(), layer.bias.values().end());
    gemv_acc(layer.weight, cache.values[l], out);
    for (auto& v : out) v = activate(layer.activation, v);
  }
  return cache.values.back();
}

void DenseStack::backward(const DenseCache& cache, std::span<const double> dout, DenseStack& grads,
                          std::span<double> dx) const {
  std::vector<double> delta(dout.begin(), dout.end());
  std::vector<double> below;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto& out = cache.values[l + 1];
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= activation_slope(layer.activation, out[i]);
    outer_acc(grads.layers[l].weight, delta, cache.values[l]);
    add_to(grads.layers[l].bias, delta);
    if (l == 0 && dx.empty()) break;
    below.assign(layer.inputs(), 0.0);
    gemv_t_acc(layer.weight, delta, below);
    delta.swap(below);
  }
  if (!dx.empty()) {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += delta[i];
  }
}

}  // namespace pgru
