#pragma once

#include "entangle/common.hpp"

#include <random>
#include <string_view>

namespace entangle {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based substream split: seed for (master, tag, index).
/// Stages of the pipeline use distinct tags so each one can be replayed alone.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index = 0);

/// Uniform sample from the unit sphere in R^dim.
Vec random_unit_vector(int dim, Rng& rng);

/// dim x count matrix of i.i.d. standard normal entries.
Mat random_gaussian(int rows, int cols, Rng& rng);

}  // namespace entangle
