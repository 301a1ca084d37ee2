// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgru/fusion.hpp"
#include "pgru/ndcore.hpp"
#include "pgru/rnn.hpp"

namespace pgru {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// `names` labels tensors in error messages and may be empty.
/// Moments are allocated on the first call and must keep matching shapes after.
void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               std::span<const std::string> names = {});
void adam_step(AdamState& state, StreamNetwork& net, const StreamNetwork& grads);

struct LmState {
  double lambda = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  std::size_t max_iters = 200;
  double tol = 1e-10;
  double lambda_min = 1e-12;
  double lambda_max = 1e12;
};

struct LmStepResult {
  bool accepted = false;
  double sse_before = 0.0;
  double sse_after = 0.0;  // equals sse_before when rejected
};

/// Residuals and their Jacobian for a fusion network on a batch.
/// `inputs` is n x 2; residual_i = prediction_i - target_i.
double fusion_sse(const FusionNetwork& fusion, const Matrix& inputs, std::span<const double> targets);

/// One damped Gauss-Newton step: (J^T J + lambda I) delta = -J^T r.
LmStepResult lm_step(FusionNetwork& fusion, const Matrix& inputs, std::span<const double> targets,
                     LmState& state);

struct FusionFit {
  FusionNetwork fusion;
  double sse = 0.0;
  std::vector<double> accepted_sse;  // SSE after every accepted step
  std::size_t iterations = 0;
  std::optional<double> holdout_sse;  // of the returned parameters
};

/// Pairs kept out of the LM fit to stop it early.
struct LmHoldout {
  const Matrix& inputs;
  std::span<const double> targets;
  /// Consecutive accepted steps without a new best holdout SSE before stopping.
  std::size_t max_fail = 6;
};

/// Iterates lm_step until the SSE change drops below tol or max_iters. With a
/// holdout, also stops after max_fail steps without holdout improvement and
/// returns the parameters with the lowest holdout SSE.
FusionFit train_fusion(FusionNetwork fusion, const Matrix& inputs, std::span<const double> targets,
                       LmState state, const LmHoldout* holdout = nullptr);

/// Windows are borrowed from a SampleSet that must outlive this view.
struct StreamData {
  std::vector<const Matrix*> windows;
  std::vector<double> targets;

  std::size_t size() const noexcept { return targets.size(); }
  bool empty() const noexcept { return targets.empty(); }
};

struct StreamTrainConfig {
  std::size_t epochs = 200;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t full_batch_limit = 4096;
  std::size_t batch_size = 64;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;  // mean loss seen while computing this epoch's gradients
  std::optional<double> valid_mse;  // after this epoch's update
};

struct StreamFit {
  StreamNetwork network;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

std::vector<double> stream_predictions(const StreamNetwork& net, const StreamData& data);
double stream_mse(const StreamNetwork& net, const StreamData& data);

/// Minimizes MSE with Adam: one full-batch step per epoch below
/// `full_batch_limit` samples, seeded mini-batches otherwise.
StreamFit train_stream(StreamNetwork net, const StreamData& train, const StreamData& valid,
                       const StreamTrainConfig& config);

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace pgru
