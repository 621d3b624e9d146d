#include "stackmf/policy_ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "stackmf/csv.hpp"

namespace stackmf {

Vec softmax(std::span<const double> values, double alpha) {
  if (values.empty()) throw std::invalid_argument("softmax: empty input");
  if (!(alpha > 0.0)) throw std::invalid_argument("softmax: alpha must be positive");
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isnan(v)) throw std::invalid_argument("softmax: NaN input");
    top = std::max(top, v);
  }
  Vec out(values.size());
  double z = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(alpha * (values[i] - top));
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

Vec argmax_uniform(std::span<const double> values, double tie_precision) {
  if (values.empty()) throw std::invalid_argument("argmax_uniform: empty input");
  double top = *std::max_element(values.begin(), values.end());
  int count = 0;
  for (double v : values)
    if (v >= top - tie_precision) ++count;
  Vec out(values.size(), 0.0);
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i] >= top - tie_precision) out[i] = 1.0 / count;
  return out;
}

double action_gap(std::span<const double> q_row, double tie_precision) {
  if (q_row.empty()) throw std::invalid_argument("action_gap: empty input");
  double top = *std::max_element(q_row.begin(), q_row.end());
  double best_non_max = -std::numeric_limits<double>::infinity();
  bool has_non_max = false;
  for (double v : q_row)
    if (v < top - tie_precision) {
      has_non_max = true;
      best_non_max = std::max(best_non_max, v);
    }
  if (!has_non_max) return std::numeric_limits<double>::infinity();
  return top - best_non_max;
}

double temperature_for(double epsilon, double phi) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("temperature_for: epsilon must lie in (0,1)");
  if (!(phi > 0.0))
    throw std::invalid_argument("temperature_for: phi must be positive; configure a gap floor");
  return std::log(1.0 / epsilon) / phi;
}

double entropy(std::span<const double> probability_row) {
  double h = 0.0;
  for (double p : probability_row) {
    if (p < 0.0) throw std::invalid_argument("entropy: negative probability");
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

size_t simplex_lattice_size(int action_count, int resolution) {
  // C(m + n - 1, n - 1) with saturation.
  size_t result = 1;
  const int n = action_count, m = resolution;
  for (int i = 1; i <= n - 1; ++i) {
    double projected = static_cast<double>(result) * (m + i) / i;
    if (projected > static_cast<double>(std::numeric_limits<size_t>::max()) / 2)
      return std::numeric_limits<size_t>::max();
    result = result * (m + i) / i;
  }
  return result;
}

namespace {

void enumerate_lattice(int n, int m, int coord, int remaining, Vec& point,
                       std::vector<Vec>& out) {
  if (coord == n - 1) {
    point[coord] = static_cast<double>(remaining) / m;
    out.push_back(point);
    return;
  }
  for (int k = 0; k <= remaining; ++k) {
    point[coord] = static_cast<double>(k) / m;
    enumerate_lattice(n, m, coord + 1, remaining - k, point, out);
  }
}

}  // namespace

EpsilonNet build_epsilon_net(int action_count, double epsilon, size_t size_cap) {
  if (action_count < 1) throw std::invalid_argument("build_epsilon_net: need at least one action");
  if (!(epsilon > 0.0 && epsilon <= 2.0))
    throw std::invalid_argument("build_epsilon_net: epsilon must lie in (0,2]");
  EpsilonNet net;
  net.action_count = action_count;
  net.epsilon = epsilon;
  if (action_count == 1) {
    net.resolution = 1;
    net.points = {Vec{1.0}};
    return net;
  }
  const int m = static_cast<int>(std::ceil(2.0 * (action_count - 1) / epsilon));
  net.resolution = m;
  size_t n_points = simplex_lattice_size(action_count, m);
  if (n_points > size_cap)
    throw std::runtime_error("build_epsilon_net: net with resolution m=" + std::to_string(m) +
                             " has " + std::to_string(n_points) + " points, above the cap of " +
                             std::to_string(size_cap));
  net.points.reserve(n_points);
  Vec point(action_count, 0.0);
  enumerate_lattice(action_count, m, 0, m, point, net.points);
  return net;
}

Vec project(std::span<const double> policy_row, const EpsilonNet& net) {
  const int n = net.action_count;
  if (static_cast<int>(policy_row.size()) != n)
    throw std::invalid_argument("project: row length does not match net");
  if (n == 1) return net.points.front();
  const int m = net.resolution;

  // Exact nearest lattice point: floor each scaled coordinate, then hand the
  // remaining mass to the largest fractional parts. Frac ties go to the
  // larger index, which yields the lexicographically smallest minimizer.
  std::vector<int> k(n);
  Vec frac(n);
  int deficit = m;
  for (int i = 0; i < n; ++i) {
    double scaled = policy_row[i] * m;
    k[i] = std::max(0, static_cast<int>(std::floor(scaled)));
    k[i] = std::min(k[i], m);
    frac[i] = scaled - k[i];
    deficit -= k[i];
  }
  if (deficit < 0) {
    // Input slightly above the simplex; trim from the smallest fractions.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] < frac[b]; });
    for (int idx : order) {
      while (deficit < 0 && k[idx] > 0) {
        --k[idx];
        ++deficit;
      }
    }
  } else if (deficit > 0) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Largest fraction first; among equal fractions prefer the larger index.
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (frac[a] != frac[b]) return frac[a] > frac[b];
      return a > b;
    });
    for (int idx : order) {
      if (deficit == 0) break;
      ++k[idx];
      --deficit;
    }
  }
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = static_cast<double>(k[i]) / m;
  return out;
}

void export_net_csv(const EpsilonNet& net, const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header{"point"};
  for (int i = 0; i < net.action_count; ++i) header.push_back("p" + std::to_string(i));
  w.write_header(header);
  for (size_t i = 0; i < net.points.size(); ++i) {
    w.begin_row();
    w.field(static_cast<long long>(i));
    for (double v : net.points[i]) w.field(v);
    w.end_row();
  }
}

}  // namespace stackmf
