// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "pgru/dense.hpp"
#include "pgru/ndcore.hpp"

namespace pgru {

struct FusionSpec {
  /// Hidden units; 0 gives a purely linear map a*p1 + b*p2 + c.
  std::size_t hidden = 4;
  Activation activation = Activation::Tanh;
};

/// Feedforward aggregator from the two stream predictions to one value.
struct FusionNetwork {
  DenseStack net;

  static FusionNetwork create(const FusionSpec& spec, SeededRng& rng);

  FusionSpec spec() const;
  std::size_t parameter_count() const { return net.parameter_count(); }
  double predict(double price_pred, double struct_pred) const;
  /// Prediction plus d(prediction)/d(theta) in flatten() order.
  double predict_with_gradient(double price_pred, double struct_pred, std::span<double> gradient) const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> theta);
};

}  // namespace pgru
