#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace stackmf {

/// FNV-1a 64-bit hash; stable across platforms and builds.
uint64_t fnv1a64(std::string_view bytes);

/// Expands one global seed into an independent per-subsystem seed:
/// splitmix64 applied to global_seed XOR fnv1a64(label).
uint64_t subsystem_seed(uint64_t global_seed, std::string_view label);

/// Uniform double in [0,1) from the raw engine output; avoids the
/// implementation-defined std distributions so byte-level reproducibility
/// holds across standard libraries.
double uniform01(std::mt19937_64& rng);

/// Uniform double in [lo, hi).
double uniform_in(std::mt19937_64& rng, double lo, double hi);

/// Integer in [0, n).
int uniform_index(std::mt19937_64& rng, int n);

/// Triangular distribution with lower limit a, upper limit b, mode c,
/// sampled by inverse CDF.
double triangular(std::mt19937_64& rng, double a, double b, double c);

/// Sample from a finite distribution given as probabilities (assumed to sum
/// to one).
int sample_index(std::mt19937_64& rng, std::span<const double> dist);

/// Point on the probability simplex, uniform (Dirichlet(1,...,1)).
std::vector<double> random_simplex_point(std::mt19937_64& rng, int n);

}  // namespace stackmf
