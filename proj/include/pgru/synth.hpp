// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "pgru/dataio.hpp"

namespace pgru {

/// default: noisy trend + seasonal price with correlated structural series.
/// noise-structural: same price, structural columns are i.i.d. noise.
/// smooth: noiseless price (structural noise kept small).
enum class SynthProfile { Default, NoiseStructural, Smooth };

SynthProfile parse_synth_profile(std::string_view name);
std::string_view to_string(SynthProfile profile);

struct SynthData {
  std::vector<PriceRow> price;
  std::vector<StructRow> structural;
};

/// Daily rows from 2016-01-01. Needs n_days >= 30. Every row passes validate().
SynthData synthesize(std::uint64_t seed, std::size_t n_days, SynthProfile profile = SynthProfile::Default);

}  // namespace pgru
