// SPDX-License-Identifier: Apache-2.0
#include "pgru/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pgru/error.hpp"
#include "pgru/ndcore.hpp"

namespace pgru {

SynthProfile parse_synth_profile(std::string_view name) {
  if (name == "default") return SynthProfile::Default;
  if (name == "noise-structural") return SynthProfile::NoiseStructural;
  if (name == "smooth") return SynthProfile::Smooth;
  fail(ErrorKind::Domain, "unknown synth profile '{}' (default, noise-structural, smooth)", name);
}

std::string_view to_string(SynthProfile profile) {
  switch (profile) {
    case SynthProfile::Default: return "default";
    case SynthProfile::NoiseStructural: return "noise-structural";
    case SynthProfile::Smooth: return "smooth";
  }
  return "default";
}

SynthData synthesize(std::uint64_t seed, std::size_t n_days, SynthProfile profile) {
  if (n_days < 30) fail(ErrorKind::Domain, "synthetic data needs at least 30 days, got {}", n_days);
  const SeededRng root(seed);
  SeededRng price_rng = root.substream(1);
  SeededRng struct_rng = root.substream(2);
  const double phase = 2.0 * std::numbers::pi * root.substream(0).next_unit();
  const double price_noise = profile == SynthProfile::Smooth ? 0.0 : 0.03;
  const double struct_noise = profile == SynthProfile::Smooth ? 0.002 : 0.01;

  SynthData out;
  const Date start = parse_date("2016-01-01");
  double difficulty = 0.0;
  for (std::size_t i = 0; i < n_days; ++i) {
    const double t = static_cast<double>(i);
    const Date date = start + std::chrono::days{static_cast<int>(i)};
    const double base = 8000.0 * std::exp(0.0006 * t) * (1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * t / 90.0 + phase));

    PriceRow p{};
    p.date = date;
    p.avg = base * std::exp(price_noise * price_rng.normal());
    p.open = p.avg * std::exp(0.5 * price_noise * price_rng.normal());
    const double spread = std::abs(0.75 * price_noise * price_rng.normal()) + 0.002;
    p.low = std::min(p.avg, p.open) * (1.0 - spread);
    p.high = std::max(p.avg, p.open) * (1.0 + spread);
    out.price.push_back(p);

    StructRow s{};
    s.date = date;
    auto jitter = [&](double scale) { return std::exp(scale * struct_rng.normal()); };
    if (profile == SynthProfile::NoiseStructural) {
      s.block_size = 0.9 * jitter(0.2);
      s.hash_rate = 1e6 * jitter(0.3);
      s.difficulty = 1e11 * jitter(0.3);
      s.tx_count = std::round(250000.0 * jitter(0.2));
      s.miner_revenue = 7e6 * jitter(0.3);
    } else {
      s.block_size = (0.6 + 0.0005 * t) * jitter(struct_noise);
      s.hash_rate = 1e6 * std::exp(0.002 * t) * jitter(struct_noise);
      difficulty = i == 0 ? 1e5 * s.hash_rate : 0.9 * difficulty + 0.1 * 1e5 * s.hash_rate;
      s.difficulty = difficulty;
      s.tx_count = std::round(200000.0 * (1.0 + 0.0008 * t) * jitter(struct_noise));
      s.miner_revenue = 900.0 * base * jitter(struct_noise);
    }
    out.structural.push_back(s);
  }
  return out;
}

}  // namespace pgru
