// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "pgru/ndcore.hpp"

namespace pgru {

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // out x 1
  Activation activation = Activation::Identity;

  std::size_t inputs() const noexcept { return weight.cols(); }
  std::size_t outputs() const noexcept { return weight.rows(); }
};

/// Layer outputs of one forward pass; values[0] is the input.
struct DenseCache {
  std::vector<std::vector<double>> values;
};

/// Feed-forward stack of dense layers. Used as the regression head of each
/// recurrent stream and as the fusion network.
struct DenseStack {
  std::vector<DenseLayer> layers;

  /// `hidden` tanh layers of width `width`, then one linear layer of width `outputs`.
  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static DenseStack create(std::size_t inputs, std::size_t width, std::size_t hidden, std::size_t outputs,
                           Activation hidden_activation, SeededRng& rng);

  std::size_t inputs() const { return layers.front().inputs(); }
  std::size_t outputs() const { return layers.back().outputs(); }
  std::size_t parameter_count() const;

  DenseStack zeros_like() const;

  std::span<const double> forward(std::span<const double> x, DenseCache& cache) const;
  /// Accumulates parameter gradients into `grads` and, if `dx` is non-empty, adds d/dx into it.
  void backward(const DenseCache& cache, std::span<const double> dout, DenseStack& grads,
                std::span<double> dx = {}) const;

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      f(prefix + std::to_string(l) + ".weight", layers[l].weight);
      f(prefix + std::to_string(l) + ".bias", layers[l].bias);
    }
  }
  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      f(prefix + std::to_string(l) + ".weight", layers[l].weight);
      f(prefix + std::to_string(l) + ".bias", layers[l].bias);
    }
  }
};

}  // namespace pgru
