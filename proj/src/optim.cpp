// SPDX-License-Identifier: Apache-2.0
#include "pgru/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "pgru/error.hpp"

namespace pgru {

// ---------------------------------------------------------------------------
// Adam

void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               std::span<const std::string> names) {
  if (params.size() != grads.size()) {
    fail(ErrorKind::Shape, "adam_step got {} parameter tensors and {} gradients", params.size(), grads.size());
  }
  auto label = [&](std::size_t t) { return t < names.size() ? names[t] : fmt::format("tensor {}", t); };
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (!params[t]->same_shape(*grads[t])) {
      fail(ErrorKind::Shape, "{}: parameter {} vs gradient {}", label(t), params[t]->shape_string(),
           grads[t]->shape_string());
    }
    for (const double g : grads[t]->values()) {
      if (!std::isfinite(g)) fail(ErrorKind::Numeric, "non-finite gradient entry in {}", label(t));
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  } else if (state.m.size() != params.size()) {
    fail(ErrorKind::Shape, "adam state holds {} tensors, got {}", state.m.size(), params.size());
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!state.m[k].same_shape(*params[k])) {
      fail(ErrorKind::Shape, "{}: adam moments {} vs parameter {}", label(k), state.m[k].shape_string(),
           params[k]->shape_string());
    }
    auto theta = params[k]->values();
    const auto g = grads[k]->values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

void adam_step(AdamState& state, StreamNetwork& net, const StreamNetwork& grads) {
  std::vector<Matrix*> params;
  std::vector<std::string> names;
  std::vector<const Matrix*> g;
  net.for_each_tensor([&](const std::string& name, Matrix& m) {
    params.push_back(&m);
    names.push_back(name);
  });
  grads.for_each_tensor([&](const std::string&, const Matrix& m) { g.push_back(&m); });
  adam_step(state, params, g, names);
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

namespace {

void check_batch(const Matrix& inputs, std::span<const double> targets) {
  if (inputs.cols() != 2) fail(ErrorKind::Shape, "fusion inputs must be n x 2, got {}", inputs.shape_string());
  if (inputs.rows() != targets.size()) {
    fail(ErrorKind::Shape, "{} fusion inputs for {} targets", inputs.rows(), targets.size());
  }
  if (targets.empty()) fail(ErrorKind::Domain, "fusion batch is empty");
}

}  // namespace

double fusion_sse(const FusionNetwork& fusion, const Matrix& inputs, std::span<const double> targets) {
  check_batch(inputs, targets);
  double sse = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = fusion.predict(inputs(i, 0), inputs(i, 1)) - targets[i];
    sse += r * r;
  }
  return sse;
}

LmStepResult lm_step(FusionNetwork& fusion, const Matrix& inputs, std::span<const double> targets,
                     LmState& state) {
  check_batch(inputs, targets);
  const std::size_t n = targets.size();
  const std::size_t p = fusion.parameter_count();

  Matrix jac(n, p);
  std::vector<double> residual(n);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    residual[i] = fusion.predict_with_gradient(inputs(i, 0), inputs(i, 1), jac.row(i)) - targets[i];
    sse += residual[i] * residual[i];
  }
  LmStepResult result{false, sse, sse};
  if (sse == 0.0) return result;

  Matrix normal(p, p);
  std::vector<double> neg_gradient(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = jac.row(i);
    outer_acc(normal, row, row);
    for (std::size_t a = 0; a < p; ++a) neg_gradient[a] -= row[a] * residual[i];
  }

  std::vector<double> delta;
  for (;;) {
    Matrix damped = normal;
    for (std::size_t a = 0; a < p; ++a) damped(a, a) += state.lambda;
    if (cholesky_solve(damped, neg_gradient, delta)) break;
    if (state.lambda >= state.lambda_max) {
      fail(ErrorKind::Numeric, "damped normal matrix stays singular at lambda {}", state.lambda);
    }
    state.lambda = std::min(state.lambda * state.lambda_up, state.lambda_max);
  }

  const auto theta = fusion.flatten();
  std::vector<double> trial_theta(p);
  for (std::size_t a = 0; a < p; ++a) trial_theta[a] = theta[a] + delta[a];
  FusionNetwork trial = fusion;
  trial.assign(trial_theta);
  const double trial_sse = fusion_sse(trial, inputs, targets);

  if (std::isfinite(trial_sse) && trial_sse < sse) {
    fusion = std::move(trial);
    state.lambda = std::max(state.lambda / state.lambda_down, state.lambda_min);
    result.accepted = true;
    result.sse_after = trial_sse;
  } else {
    state.lambda = std::min(state.lambda * state.lambda_up, state.lambda_max);
  }
  return result;
}

FusionFit train_fusion(FusionNetwork fusion, const Matrix& inputs, std::span<const double> targets,
                       LmState state, const LmHoldout* holdout) {
  check_batch(inputs, targets);
  if (targets.size() < fusion.parameter_count()) {
    fail(ErrorKind::Domain, "fusion has {} parameters but only {} samples", fusion.parameter_count(),
         targets.size());
  }
  FusionFit fit;
  fit.sse = fusion_sse(fusion, inputs, targets);
  std::optional<FusionNetwork> best;
  std::size_t fails = 0;
  if (holdout != nullptr) {
    fit.holdout_sse = fusion_sse(fusion, holdout->inputs, holdout->targets);
    best = fusion;
  }
  double best_sse = fit.sse;
  for (std::size_t it = 0; it < state.max_iters; ++it) {
    const auto step = lm_step(fusion, inputs, targets, state);
    fit.iterations = it + 1;
    if (step.accepted) {
      fit.accepted_sse.push_back(step.sse_after);
      fit.sse = step.sse_after;
      if (holdout != nullptr) {
        const double h = fusion_sse(fusion, holdout->inputs, holdout->targets);
        if (h < *fit.holdout_sse) {
          fit.holdout_sse = h;
          best = fusion;
          best_sse = step.sse_after;
          fails = 0;
        } else if (++fails >= holdout->max_fail) {
          break;
        }
      }
      if (step.sse_before - step.sse_after < state.tol) break;
    } else if (step.sse_before == 0.0 || state.lambda >= state.lambda_max) {
      break;
    }
  }
  if (best) {
    fit.fusion = std::move(*best);
    fit.sse = best_sse;
  } else {
    // Accepted steps only ever lower the SSE, so the final parameters are the best seen.
    fit.fusion = std::move(fusion);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Stream training

std::vector<double> stream_predictions(const StreamNetwork& net, const StreamData& data) {
  std::vector<double> out;
  out.reserve(data.size());
  ForwardCache cache;
  for (const auto* w : data.windows) out.push_back(stream_forward(net, *w, cache));
  return out;
}

double stream_mse(const StreamNetwork& net, const StreamData& data) {
  if (data.empty()) fail(ErrorKind::Domain, "mse of an empty sample set");
  const auto pred = stream_predictions(net, data);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - data.targets[i]) * (pred[i] - data.targets[i]);
  return sum / static_cast<double>(pred.size());
}

namespace {

void zero(StreamNetwork& grads) {
  grads.for_each_tensor([](const std::string&, Matrix& m) { m.fill(0.0); });
}

/// Accumulates gradients of the batch MSE; returns the batch sum of squared errors.
double accumulate_batch(const StreamNetwork& net, const StreamData& data, std::span<const std::size_t> batch,
                        StreamNetwork& grads, ForwardCache& cache) {
  double sse = 0.0;
  const double scale = 2.0 / static_cast<double>(batch.size());
  for (const auto idx : batch) {
    const double pred = stream_forward(net, *data.windows[idx], cache);
    const double err = pred - data.targets[idx];
    sse += err * err;
    stream_backward(net, cache, scale * err, grads);
  }
  return sse;
}

}  // namespace

StreamFit train_stream(StreamNetwork net, const StreamData& train, const StreamData& valid,
                       const StreamTrainConfig& config) {
  if (train.empty()) fail(ErrorKind::Domain, "train_stream needs at least one training sample");
  if (train.windows.size() != train.targets.size() || valid.windows.size() != valid.targets.size()) {
    fail(ErrorKind::Shape, "stream data windows and targets differ in length");
  }
  AdamState adam{config.adam, 0, {}, {}};
  StreamNetwork grads = net.zeros_like();
  ForwardCache cache;
  SeededRng rng(config.seed);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool full_batch = train.size() < config.full_batch_limit;
  const std::size_t batch = full_batch ? train.size() : std::max<std::size_t>(config.batch_size, 1);

  StreamFit fit;
  fit.network = net;
  double best_valid = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (!full_batch) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    double sse = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t len = std::min(batch, order.size() - start);
        zero(grads);
        sse += accumulate_batch(net, train, std::span(order).subspan(start, len), grads, cache);
        adam_step(adam, net, grads);
      }
    } catch (const Error& e) {
      fail(ErrorKind::Numeric, "training diverged at epoch {}: {}", epoch, e.what());
    }
    EpochRecord record{epoch, sse / static_cast<double>(train.size()), std::nullopt};
    if (!std::isfinite(record.train_mse)) fail(ErrorKind::Numeric, "training diverged at epoch {}", epoch);
    if (!valid.empty()) {
      double v;
      try {
        v = stream_mse(net, valid);
      } catch (const Error& e) {
        fail(ErrorKind::Numeric, "validation diverged at epoch {}: {}", epoch, e.what());
      }
      record.valid_mse = v;
      if (v < best_valid) {
        best_valid = v;
        fit.network = net;
        fit.best_epoch = epoch;
      }
    }
    fit.history.push_back(record);
  }
  if (valid.empty()) {
    fit.network = std::move(net);
    fit.best_epoch = config.epochs;
  }
  return fit;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_mse,valid_mse\n";
  for (const auto& r : history) {
    out << fmt::format("{},{},{}\n", r.epoch, r.train_mse, r.valid_mse ? fmt::format("{}", *r.valid_mse) : "");
  }
}

}  // namespace pgru
