#include "stackmf/rng.hpp"

#include <cmath>

namespace stackmf {

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {
uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace

uint64_t subsystem_seed(uint64_t global_seed, std::string_view label) {
  return splitmix64(global_seed ^ fnv1a64(label));
}

double uniform01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

int uniform_index(std::mt19937_64& rng, int n) {
  return static_cast<int>(uniform01(rng) * n) % n;
}

double triangular(std::mt19937_64& rng, double a, double b, double c) {
  double u = uniform01(rng);
  double fc = (c - a) / (b - a);
  if (u < fc) return a + std::sqrt(u * (b - a) * (c - a));
  return b - std::sqrt((1.0 - u) * (b - a) * (b - c));
}

int sample_index(std::mt19937_64& rng, std::span<const double> dist) {
  double u = uniform01(rng);
  double acc = 0.0;
  for (size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(dist.size()) - 1;
}

std::vector<double> random_simplex_point(std::mt19937_64& rng, int n) {
  std::vector<double> x(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    x[i] = -std::log(1.0 - uniform01(rng));
    sum += x[i];
  }
  for (double& v : x) v /= sum;
  return x;
}

}  // namespace stackmf
