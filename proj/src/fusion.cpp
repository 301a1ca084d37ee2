// SPDX-License-Identifier: Apache-2.0
#include "pgru/fusion.hpp"

#include <algorithm>

#include "pgru/error.hpp"

namespace pgru {

FusionNetwork FusionNetwork::create(const FusionSpec& spec, SeededRng& rng) {
  const std::size_t hidden_layers = spec.hidden > 0 ? 1 : 0;
  return FusionNetwork{DenseStack::create(2, spec.hidden, hidden_layers, 1, spec.activation, rng)};
}

FusionSpec FusionNetwork::spec() const {
  FusionSpec s;
  if (net.layers.size() > 1) {
    s.hidden = net.layers.front().outputs();
    s.activation = net.layers.front().activation;
  } else {
    s.hidden = 0;
    s.activation = Activation::Identity;
  }
  return s;
}

double FusionNetwork::predict(double price_pred, double struct_pred) const {
  DenseCache cache;
  const double x[2] = {price_pred, struct_pred};
  return net.forward(x, cache)[0];
}

double FusionNetwork::predict_with_gradient(double price_pred, double struct_pred,
                                            std::span<double> gradient) const {
  if (gradient.size() != parameter_count()) {
    fail(ErrorKind::Shape, "gradient buffer of {} for {} fusion parameters", gradient.size(), parameter_count());
  }
  DenseCache cache;
  const double x[2] = {price_pred, struct_pred};
  const double y = net.forward(x, cache)[0];
  DenseStack grads = net.zeros_like();
  const double one[1] = {1.0};
  net.backward(cache, one, grads);
  std::size_t k = 0;
  grads.for_each_tensor("", [&](const std::string&, const Matrix& m) {
    for (const double v : m.values()) gradient[k++] = v;
  });
  return y;
}

std::vector<double> FusionNetwork::flatten() const {
  std::vector<double> theta;
  theta.reserve(parameter_count());
  net.for_each_tensor("", [&](const std::string&, const Matrix& m) {
    theta.insert(theta.end(), m.values().begin(), m.values().end());
  });
  return theta;
}

void FusionNetwork::assign(std::span<const double> theta) {
  if (theta.size() != parameter_count()) {
    fail(ErrorKind::Shape, "{} values for {} fusion parameters", theta.size(), parameter_count());
  }
  std::size_t k = 0;
  net.for_each_tensor("", [&](const std::string&, Matrix& m) {
    for (auto& v : m.values()) v = theta[k++];
  });
}

}  // namespace pgru
