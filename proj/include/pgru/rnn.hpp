// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "pgru/dense.hpp"
#include "pgru/ndcore.hpp"

namespace pgru {

enum class CellType { Gru, Lstm };

std::string_view to_string(CellType cell);
CellType parse_cell_type(std::string_view text);

/// Gate convention:
///   update  z  = sigmoid(W_z x + U_z h + b_z)
///   reset   r  = sigmoid(W_r x + U_r h + b_r)
///   cand    h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h'         = (1 - z) * h + z * h~
struct GruParams {
  Matrix update_in, reset_in, cand_in;        // hidden x input
  Matrix update_rec, reset_rec, cand_rec;     // hidden x hidden
  Matrix update_bias, reset_bias, cand_bias;  // hidden x 1

  static GruParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  /// Every entry ~ U(-1/sqrt(h), 1/sqrt(h)).
  static GruParams random(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng);

  std::size_t input_dim() const { return update_in.cols(); }
  std::size_t hidden_dim() const { return update_in.rows(); }
  std::size_t parameter_count() const;

  template <typename Self, typename F>
  static void visit(Self& p, const std::string& prefix, F&& f) {
    f(prefix + "update_in", p.update_in);
    f(prefix + "update_rec", p.update_rec);
    f(prefix + "update_bias", p.update_bias);
    f(prefix + "reset_in", p.reset_in);
    f(prefix + "reset_rec", p.reset_rec);
    f(prefix + "reset_bias", p.reset_bias);
    f(prefix + "cand_in", p.cand_in);
    f(prefix + "cand_rec", p.cand_rec);
    f(prefix + "cand_bias", p.cand_bias);
  }
};

struct GruStepCache {
  std::vector<double> x, h_prev, update, reset, reset_h, cand, h;
};

/// One GRU step. The cache is filled when given.
std::vector<double> gru_step(const GruParams& p, std::span<const double> x, std::span<const double> h_prev,
                             GruStepCache* cache = nullptr);

/// Backward through one step. `dh` is the gradient w.r.t. the step's output.
/// Writes `dh_prev`, accumulates into `grads` and (when non-empty) `dx`.
void gru_step_backward(const GruParams& p, const GruStepCache& cache, std::span<const double> dh,
                       GruParams& grads, std::span<double> dh_prev, std::span<double> dx);

/// Standard LSTM: f, i, o = sigmoid(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c').
struct LstmParams {
  Matrix forget_in, input_in, output_in, cell_in;
  Matrix forget_rec, input_rec, output_rec, cell_rec;
  Matrix forget_bias, input_bias, output_bias, cell_bias;

  static LstmParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  /// Entries ~ U(-1/sqrt(h), 1/sqrt(h)); forget bias starts at 1.
  static LstmParams random(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng);

  std::size_t input_dim() const { return forget_in.cols(); }
  std::size_t hidden_dim() const { return forget_in.rows(); }
  std::size_t parameter_count() const;

  template <typename Self, typename F>
  static void visit(Self& p, const std::string& prefix, F&& f) {
    f(prefix + "forget_in", p.forget_in);
    f(prefix + "forget_rec", p.forget_rec);
    f(prefix + "forget_bias", p.forget_bias);
    f(prefix + "input_in", p.input_in);
    f(prefix + "input_rec", p.input_rec);
    f(prefix + "input_bias", p.input_bias);
    f(prefix + "output_in", p.output_in);
    f(prefix + "output_rec", p.output_rec);
    f(prefix + "output_bias", p.output_bias);
    f(prefix + "cell_in", p.cell_in);
    f(prefix + "cell_rec", p.cell_rec);
    f(prefix + "cell_bias", p.cell_bias);
  }
};

struct LstmState {
  std::vector<double> h, c;
};

struct LstmStepCache {
  std::vector<double> x, h_prev, c_prev, forget, input, output, cell_cand, c, tanh_c, h;
};

LstmState lstm_step(const LstmParams& p, std::span<const double> x, const LstmState& prev,
                    LstmStepCache* cache = nullptr);

void lstm_step_backward(const LstmParams& p, const LstmStepCache& cache, std::span<const double> dh,
                        std::span<const double> dc, LstmParams& grads, std::span<double> dh_prev,
                        std::span<double> dc_prev, std::span<double> dx);

using RecurrentLayer = std::variant<GruParams, LstmParams>;

struct StreamSpec {
  CellType cell = CellType::Gru;
  std::size_t input_dim = 4;
  std::size_t hidden_dim = 32;
  std::size_t layers = 1;
  std::size_t head_width = 16;
  std::size_t head_layers = 1;
};

/// One recurrent stream: stacked cells unrolled from a zero state, then a
/// dense head mapping the last hidden state to a scalar.
struct StreamNetwork {
  CellType cell = CellType::Gru;
  std::vector<RecurrentLayer> layers;
  DenseStack head;

  static StreamNetwork create(const StreamSpec& spec, SeededRng& rng);

  std::size_t input_dim() const;
  std::size_t hidden_dim() const;
  std::size_t parameter_count() const;
  StreamSpec spec() const;

  /// Same structure with every tensor zeroed; used as a gradient accumulator.
  StreamNetwork zeros_like() const;

  template <typename F>
  void for_each_tensor(F&& f) {
    visit_tensors(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit_tensors(*this, f);
  }

private:
  template <typename Self, typename F>
  static void visit_tensors(Self& self, F& f) {
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      const std::string prefix = "rnn" + std::to_string(l) + ".";
      std::visit([&](auto& cell) { std::remove_cvref_t<decltype(cell)>::visit(cell, prefix, f); },
                 self.layers[l]);
    }
    self.head.for_each_tensor("head", f);
  }
};

/// Cheap digest of all parameter bit patterns; lets backward detect a stale cache.
std::uint64_t parameter_fingerprint(const StreamNetwork& net);

struct ForwardCache {
  const StreamNetwork* network = nullptr;
  std::uint64_t fingerprint = 0;
  std::size_t window = 0;
  std::vector<std::vector<GruStepCache>> gru;    // [layer][step]
  std::vector<std::vector<LstmStepCache>> lstm;  // [layer][step]
  DenseCache head;
  double prediction = 0.0;
};

/// Unrolls over the rows of `window` (w x input_dim). Reuses `cache` storage.
double stream_forward(const StreamNetwork& net, const Matrix& window, ForwardCache& cache);
std::pair<double, ForwardCache> stream_forward(const StreamNetwork& net, const Matrix& window);

/// BPTT for d(prediction)/d(params) scaled by `dpred`, accumulated into `grads`.
void stream_backward(const StreamNetwork& net, const ForwardCache& cache, double dpred, StreamNetwork& grads);
StreamNetwork stream_backward(const StreamNetwork& net, const ForwardCache& cache, double dpred);

/// Max over all parameters of |analytic - central difference| / max(|a|, |n|, 1e-8).
double grad_check(const StreamNetwork& net, const Matrix& window, double eps);

}  // namespace pgru
