// SPDX-License-Identifier: Apache-2.0
#include "pgru/rnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "pgru/error.hpp"

namespace pgru {

std::string_view to_string(CellType cell) { return cell == CellType::Gru ? "GRU" : "LSTM"; }

CellType parse_cell_type(std::string_view text) {
  if (text == "GRU" || text == "gru") return CellType::Gru;
  if (text == "LSTM" || text == "lstm") return CellType::Lstm;
  fail(ErrorKind::Domain, "unknown cell type '{}' (expected GRU or LSTM)", text);
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double bound, SeededRng& rng) {
  return Matrix(rows, cols, rng_uniform(rng, rows * cols, -bound, bound));
}

void check_step_shapes(std::size_t input_dim, std::size_t hidden_dim, std::size_t x, std::size_t h,
                       std::string_view cell) {
  if (x != input_dim || h != hidden_dim) {
    fail(ErrorKind::Shape, "{} step expects x of {} and h of {}, got {} and {}", cell, input_dim, hidden_dim, x,
         h);
  }
}

/// out = bias + in*x + rec*h, passed through `f`.
void gate(const Matrix& in, const Matrix& rec, const Matrix& bias, std::span<const double> x,
          std::span<const double> h, Activation f, std::vector<double>& out) {
  out.assign(bias.values().begin(), bias.values().end());
  gemv_acc(in, x, out);
  gemv_acc(rec, h, out);
  for (auto& v : out) v = activate(f, v);
}

}  // namespace

// ---------------------------------------------------------------------------
// GRU

GruParams GruParams::zeros(std::size_t d, std::size_t h) {
  return GruParams{Matrix(h, d), Matrix(h, d), Matrix(h, d), Matrix(h, h), Matrix(h, h),
                   Matrix(h, h), Matrix(h, 1), Matrix(h, 1), Matrix(h, 1)};
}

GruParams GruParams::random(std::size_t d, std::size_t h, SeededRng& rng) {
  GruParams p = zeros(d, h);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  visit(p, "", [&](const std::string&, Matrix& m) { m = random_matrix(m.rows(), m.cols(), bound, rng); });
  return p;
}

std::size_t GruParams::parameter_count() const {
  const std::size_t h = hidden_dim(), d = input_dim();
  return 3 * (h * d + h * h + h);
}

std::vector<double> gru_step(const GruParams& p, std::span<const double> x, std::span<const double> h_prev,
                             GruStepCache* cache) {
  const std::size_t h = p.hidden_dim();
  check_step_shapes(p.input_dim(), h, x.size(), h_prev.size(), "GRU");
  GruStepCache local;
  GruStepCache& c = cache ? *cache : local;
  c.x.assign(x.begin(), x.end());
  c.h_prev.assign(h_prev.begin(), h_prev.end());
  gate(p.update_in, p.update_rec, p.update_bias, x, h_prev, Activation::Sigmoid, c.update);
  gate(p.reset_in, p.reset_rec, p.reset_bias, x, h_prev, Activation::Sigmoid, c.reset);
  c.reset_h.resize(h);
  for (std::size_t i = 0; i < h; ++i) c.reset_h[i] = c.reset[i] * h_prev[i];
  gate(p.cand_in, p.cand_rec, p.cand_bias, x, c.reset_h, Activation::Tanh, c.cand);
  c.h.resize(h);
  for (std::size_t i = 0; i < h; ++i) c.h[i] = (1.0 - c.update[i]) * h_prev[i] + c.update[i] * c.cand[i];
  return c.h;
}

void gru_step_backward(const GruParams& p, const GruStepCache& c, std::span<const double> dh, GruParams& g,
                       std::span<double> dh_prev, std::span<double> dx) {
  const std::size_t h = p.hidden_dim();
  thread_local std::vector<double> da_update, da_reset, da_cand, d_reset_h;
  da_update.resize(h);
  da_reset.resize(h);
  da_cand.resize(h);
  d_reset_h.assign(h, 0.0);

  for (std::size_t i = 0; i < h; ++i) {
    const double z = c.update[i];
    const double cand = c.cand[i];
    da_cand[i] = dh[i] * z * (1.0 - cand * cand);
    da_update[i] = dh[i] * (cand - c.h_prev[i]) * z * (1.0 - z);
    dh_prev[i] = dh[i] * (1.0 - z);
  }
  outer_acc(g.cand_in, da_cand, c.x);
  outer_acc(g.cand_rec, da_cand, c.reset_h);
  add_to(g.cand_bias, da_cand);

  // Candidate sees h_prev through r * h_prev: both factors get a share.
  gemv_t_acc(p.cand_rec, da_cand, d_reset_h);
  for (std::size_t i = 0; i < h; ++i) {
    const double r = c.reset[i];
    da_reset[i] = d_reset_h[i] * c.h_prev[i] * r * (1.0 - r);
    dh_prev[i] += d_reset_h[i] * r;
  }

  outer_acc(g.update_in, da_update, c.x);
  outer_acc(g.update_rec, da_update, c.h_prev);
  add_to(g.update_bias, da_update);
  outer_acc(g.reset_in, da_reset, c.x);
  outer_acc(g.reset_rec, da_reset, c.h_prev);
  add_to(g.reset_bias, da_reset);

  gemv_t_acc(p.update_rec, da_update, dh_prev);
  gemv_t_acc(p.reset_rec, da_reset, dh_prev);

  if (!dx.empty()) {
    gemv_t_acc(p.update_in, da_update, dx);
    gemv_t_acc(p.reset_in, da_reset, dx);
    gemv_t_acc(p.cand_in, da_cand, dx);
  }
}

// ---------------------------------------------------------------------------
// LSTM

LstmParams LstmParams::zeros(std::size_t d, std::size_t h) {
  return LstmParams{Matrix(h, d), Matrix(h, d), Matrix(h, d), Matrix(h, d), Matrix(h, h), Matrix(h, h),
                    Matrix(h, h), Matrix(h, h), Matrix(h, 1), Matrix(h, 1), Matrix(h, 1), Matrix(h, 1)};
}

LstmParams LstmParams::random(std::size_t d, std::size_t h, SeededRng& rng) {
  LstmParams p = zeros(d, h);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  visit(p, "", [&](const std::string&, Matrix& m) { m = random_matrix(m.rows(), m.cols(), bound, rng); });
  p.forget_bias.fill(1.0);
  return p;
}

std::size_t LstmParams::parameter_count() const {
  const std::size_t h = hidden_dim(), d = input_dim();
  return 4 * (h * d + h * h + h);
}

LstmState lstm_step(const LstmParams& p, std::span<const double> x, const LstmState& prev,
                    LstmStepCache* cache) {
  const std::size_t h = p.hidden_dim();
  check_step_shapes(p.input_dim(), h, x.size(), prev.h.size(), "LSTM");
  if (prev.c.size() != h) fail(ErrorKind::Shape, "LSTM cell state has {} entries, expected {}", prev.c.size(), h);
  LstmStepCache local;
  LstmStepCache& c = cache ? *cache : local;
  c.x.assign(x.begin(), x.end());
  c.h_prev = prev.h;
  c.c_prev = prev.c;
  gate(p.forget_in, p.forget_rec, p.forget_bias, x, prev.h, Activation::Sigmoid, c.forget);
  gate(p.input_in, p.input_rec, p.input_bias, x, prev.h, Activation::Sigmoid, c.input);
  gate(p.output_in, p.output_rec, p.output_bias, x, prev.h, Activation::Sigmoid, c.output);
  gate(p.cell_in, p.cell_rec, p.cell_bias, x, prev.h, Activation::Tanh, c.cell_cand);
  c.c.resize(h);
  c.tanh_c.resize(h);
  c.h.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    c.c[i] = c.forget[i] * prev.c[i] + c.input[i] * c.cell_cand[i];
    c.tanh_c[i] = std::tanh(c.c[i]);
    c.h[i] = c.output[i] * c.tanh_c[i];
  }
  return LstmState{c.h, c.c};
}

void lstm_step_backward(const LstmParams& p, const LstmStepCache& c, std::span<const double> dh,
                        std::span<const double> dc, LstmParams& g, std::span<double> dh_prev,
                        std::span<double> dc_prev, std::span<double> dx) {
  const std::size_t h = p.hidden_dim();
  thread_local std::vector<double> da_f, da_i, da_o, da_g;
  da_f.resize(h);
  da_i.resize(h);
  da_o.resize(h);
  da_g.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    const double f = c.forget[k], i = c.input[k], o = c.output[k], gc = c.cell_cand[k], tc = c.tanh_c[k];
    const double dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
    da_o[k] = dh[k] * tc * o * (1.0 - o);
    da_f[k] = dc_total * c.c_prev[k] * f * (1.0 - f);
    da_i[k] = dc_total * gc * i * (1.0 - i);
    da_g[k] = dc_total * i * (1.0 - gc * gc);
    dc_prev[k] = dc_total * f;
  }
  std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
  auto apply = [&](const std::vector<double>& da, const Matrix& in, const Matrix& rec, Matrix& g_in,
                   Matrix& g_rec, Matrix& g_bias) {
    outer_acc(g_in, da, c.x);
    outer_acc(g_rec, da, c.h_prev);
    add_to(g_bias, da);
    gemv_t_acc(rec, da, dh_prev);
    if (!dx.empty()) gemv_t_acc(in, da, dx);
  };
  apply(da_f, p.forget_in, p.forget_rec, g.forget_in, g.forget_rec, g.forget_bias);
  apply(da_i, p.input_in, p.input_rec, g.input_in, g.input_rec, g.input_bias);
  apply(da_o, p.output_in, p.output_rec, g.output_in, g.output_rec, g.output_bias);
  apply(da_g, p.cell_in, p.cell_rec, g.cell_in, g.cell_rec, g.cell_bias);
}

// ---------------------------------------------------------------------------
// StreamNetwork

StreamNetwork StreamNetwork::create(const StreamSpec& spec, SeededRng& rng) {
  if (spec.input_dim == 0 || spec.hidden_dim == 0 || spec.layers == 0) {
    fail(ErrorKind::Domain, "stream needs positive input_dim, hidden_dim and layers");
  }
  StreamNetwork net;
  net.cell = spec.cell;
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    if (spec.cell == CellType::Gru) {
      net.layers.emplace_back(GruParams::random(in, spec.hidden_dim, rng));
    } else {
      net.layers.emplace_back(LstmParams::random(in, spec.hidden_dim, rng));
    }
    in = spec.hidden_dim;
  }
  net.head = DenseStack::create(spec.hidden_dim, spec.head_width, spec.head_layers, 1, Activation::Tanh, rng);
  return net;
}

std::size_t StreamNetwork::input_dim() const {
  return std::visit([](const auto& c) { return c.input_dim(); }, layers.front());
}

std::size_t StreamNetwork::hidden_dim() const {
  return std::visit([](const auto& c) { return c.hidden_dim(); }, layers.front());
}

std::size_t StreamNetwork::parameter_count() const {
  std::size_t n = head.parameter_count();
  for (const auto& l : layers) n += std::visit([](const auto& c) { return c.parameter_count(); }, l);
  return n;
}

StreamSpec StreamNetwork::spec() const {
  StreamSpec s;
  s.cell = cell;
  s.input_dim = input_dim();
  s.hidden_dim = hidden_dim();
  s.layers = layers.size();
  s.head_layers = head.layers.size() - 1;
  s.head_width = s.head_layers > 0 ? head.layers.front().outputs() : 0;
  return s;
}

StreamNetwork StreamNetwork::zeros_like() const {
  StreamNetwork z;
  z.cell = cell;
  for (const auto& l : layers) {
    z.layers.push_back(std::visit(
        [](const auto& c) -> RecurrentLayer {
          return std::remove_cvref_t<decltype(c)>::zeros(c.input_dim(), c.hidden_dim());
        },
        l));
  }
  z.head = head.zeros_like();
  return z;
}

std::uint64_t parameter_fingerprint(const StreamNetwork& net) {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  net.for_each_tensor([&](const std::string&, const Matrix& m) {
    for (const double v : m.values()) {
      hash ^= std::bit_cast<std::uint64_t>(v);
      hash *= 0x100000001B3ull;
    }
  });
  return hash;
}

double stream_forward(const StreamNetwork& net, const Matrix& window, ForwardCache& cache) {
  if (window.cols() != net.input_dim()) {
    fail(ErrorKind::Shape, "stream expects windows of width {}, got {}", net.input_dim(), window.shape_string());
  }
  if (window.rows() == 0) fail(ErrorKind::Shape, "window has no rows");
  const std::size_t w = window.rows();
  const std::size_t h = net.hidden_dim();
  const std::size_t depth = net.layers.size();
  cache.network = &net;
  cache.fingerprint = parameter_fingerprint(net);
  cache.window = w;

  std::vector<double> h_state;
  if (net.cell == CellType::Gru) {
    cache.gru.resize(depth);
    cache.lstm.clear();
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& p = std::get<GruParams>(net.layers[l]);
      auto& steps = cache.gru[l];
      steps.resize(w);
      h_state.assign(h, 0.0);
      for (std::size_t t = 0; t < w; ++t) {
        const std::span<const double> x = l == 0 ? window.row(t) : std::span<const double>(cache.gru[l - 1][t].h);
        gru_step(p, x, h_state, &steps[t]);
        h_state = steps[t].h;
      }
    }
  } else {
    cache.lstm.resize(depth);
    cache.gru.clear();
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& p = std::get<LstmParams>(net.layers[l]);
      auto& steps = cache.lstm[l];
      steps.resize(w);
      LstmState state{std::vector<double>(h, 0.0), std::vector<double>(h, 0.0)};
      for (std::size_t t = 0; t < w; ++t) {
        const std::span<const double> x = l == 0 ? window.row(t) : std::span<const double>(cache.lstm[l - 1][t].h);
        state = lstm_step(p, x, state, &steps[t]);
      }
      h_state = state.h;
    }
  }
  const double pred = net.head.forward(h_state, cache.head)[0];
  if (!std::isfinite(pred)) fail(ErrorKind::Numeric, "stream prediction is not finite");
  cache.prediction = pred;
  return pred;
}

std::pair<double, ForwardCache> stream_forward(const StreamNetwork& net, const Matrix& window) {
  ForwardCache cache;
  const double pred = stream_forward(net, window, cache);
  return {pred, std::move(cache)};
}

void stream_backward(const StreamNetwork& net, const ForwardCache& cache, double dpred, StreamNetwork& grads) {
  const std::size_t depth = net.layers.size();
  const bool gru = net.cell == CellType::Gru;
  if (cache.network != &net || cache.window == 0 || (gru ? cache.gru.size() : cache.lstm.size()) != depth ||
      cache.fingerprint != parameter_fingerprint(net)) {
    fail(ErrorKind::Contract, "forward cache does not belong to this network state");
  }
  const std::size_t w = cache.window;
  const std::size_t h = net.hidden_dim();

  // Upstream gradient w.r.t. each step's output of the layer being processed.
  std::vector<std::vector<double>> d_out(w, std::vector<double>(h, 0.0));
  std::vector<double> d_head_in(h, 0.0);
  const double dout[1] = {dpred};
  net.head.backward(cache.head, dout, grads.head, d_head_in);
  d_out[w - 1] = d_head_in;

  std::vector<double> dh_next(h), dh_prev(h), dc_next(h), dc_prev(h), dh(h);
  for (std::size_t l = depth; l-- > 0;) {
    const std::size_t in_dim = std::visit([](const auto& c) { return c.input_dim(); }, net.layers[l]);
    std::vector<std::vector<double>> d_in(l > 0 ? w : 0, std::vector<double>(in_dim, 0.0));
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    std::fill(dc_next.begin(), dc_next.end(), 0.0);
    for (std::size_t t = w; t-- > 0;) {
      for (std::size_t i = 0; i < h; ++i) dh[i] = d_out[t][i] + dh_next[i];
      std::span<double> dx = l > 0 ? std::span<double>(d_in[t]) : std::span<double>{};
      if (gru) {
        gru_step_backward(std::get<GruParams>(net.layers[l]), cache.gru[l][t], dh,
                          std::get<GruParams>(grads.layers[l]), dh_prev, dx);
      } else {
        lstm_step_backward(std::get<LstmParams>(net.layers[l]), cache.lstm[l][t], dh, dc_next,
                           std::get<LstmParams>(grads.layers[l]), dh_prev, dc_prev, dx);
        dc_next.swap(dc_prev);
      }
      dh_next.swap(dh_prev);
    }
    if (l > 0) d_out = std::move(d_in);
  }
}

StreamNetwork stream_backward(const StreamNetwork& net, const ForwardCache& cache, double dpred) {
  StreamNetwork grads = net.zeros_like();
  stream_backward(net, cache, dpred, grads);
  return grads;
}

double grad_check(const StreamNetwork& net, const Matrix& window, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) fail(ErrorKind::Domain, "grad_check eps {} outside [1e-7, 1e-3]", eps);
  StreamNetwork probe = net;
  ForwardCache cache;
  stream_forward(probe, window, cache);
  StreamNetwork analytic = stream_backward(probe, cache, 1.0);

  std::vector<Matrix*> params;
  std::vector<const Matrix*> grads;
  probe.for_each_tensor([&](const std::string&, Matrix& m) { params.push_back(&m); });
  analytic.for_each_tensor([&](const std::string&, const Matrix& m) { grads.push_back(&m); });

  double worst = 0.0;
  ForwardCache scratch;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t]->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = stream_forward(probe, window, scratch);
      values[i] = saved - eps;
      const double down = stream_forward(probe, window, scratch);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = grads[t]->values()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace pgru
