#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "stackmf/csv.hpp"
#include "stackmf/policy_ops.hpp"
#include "stackmf/rng.hpp"
#include "test_util.hpp"

using namespace stackmf;
namespace tu = stackmf::testutil;

TEST_CASE("softmax of an all-equal vector is uniform") {
  for (int n : {2, 3, 5, 8}) {
    Vec v(n, 3.7);
    Vec p = softmax(v, 2.5);
    for (double x : p) CHECK(x == doctest::Approx(1.0 / n).epsilon(1e-14));
    double sum = 0.0;
    for (double x : p) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax at alpha 700 saturates to the maximizer") {
  Vec p = softmax(Vec{1.0, 0.0}, 700.0);
  CHECK(std::abs(p[0] - 1.0) <= 1e-12);
  CHECK(p[1] <= 1e-12);
}

TEST_CASE("softmax matches the extended-precision evaluation") {
  Vec p = softmax(Vec{2.0, 1.0, 0.5}, 1.0);
  CHECK(p[0] == doctest::Approx(0.62853171921176244825).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.23122389762214906723).epsilon(1e-15));
  CHECK(p[2] == doctest::Approx(0.14024438316608848452).epsilon(1e-15));
}

TEST_CASE("softmax rejects NaN input and nonpositive temperature") {
  CHECK_THROWS_AS(softmax(Vec{1.0, std::nan("")}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax(Vec{1.0, 2.0}, 0.0), std::invalid_argument);
}

TEST_CASE("softmax is invariant under constant shifts") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Vec v(4);
    for (double& x : v) x = uniform_in(rng, -5.0, 5.0);
    Vec shifted = v;
    const double c = uniform_in(rng, -100.0, 100.0);
    for (double& x : shifted) x += c;
    Vec a = softmax(v, 1.7), b = softmax(shifted, 1.7);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("argmax_uniform handles unique, tied, and fully tied inputs") {
  CHECK(argmax_uniform(Vec{3.0, 1.0, 2.0}) == Vec{1.0, 0.0, 0.0});
  CHECK(argmax_uniform(Vec{5.0, 5.0, 0.0}) == Vec{0.5, 0.5, 0.0});
  CHECK(argmax_uniform(Vec{1.0, 1.0, 1.0, 1.0}) == Vec{0.25, 0.25, 0.25, 0.25});
}

TEST_CASE("action_gap basic cases") {
  CHECK(action_gap(Vec{5.0, 3.0, 1.0}) == doctest::Approx(2.0));
  CHECK(std::isinf(action_gap(Vec{4.0, 4.0, 4.0})));
  CHECK(action_gap(Vec{4.0, 4.0, 1.0}) == doctest::Approx(3.0));
  CHECK(std::isinf(action_gap(Vec{2.0})));
}

TEST_CASE("temperature_for matches direct evaluation") {
  CHECK(temperature_for(1.0 / std::exp(1.0), 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(temperature_for(0.01, 0.5) == doctest::Approx(9.2103403719761827361).epsilon(1e-15));
  CHECK(temperature_for(0.1, 2.0) == doctest::Approx(1.151292546497022842).epsilon(1e-15));
  CHECK_THROWS_AS(temperature_for(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("entropy basic cases") {
  CHECK(entropy(Vec{1.0, 0.0, 0.0}) == 0.0);
  CHECK(entropy(Vec{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(entropy(Vec{0.7, 0.3}) == doctest::Approx(0.61086430205489346303).epsilon(1e-15));
}

TEST_CASE("epsilon net degenerate and small lattices") {
  EpsilonNet single = build_epsilon_net(1, 0.5);
  REQUIRE(single.size() == 1);
  CHECK(single.points[0] == Vec{1.0});

  // n = 2, eps = 0.5 -> m = 4, five lattice points in ascending lex order.
  EpsilonNet net = build_epsilon_net(2, 0.5);
  REQUIRE(net.resolution == 4);
  REQUIRE(net.size() == 5);
  CHECK(net.points[0] == Vec{0.0, 1.0});
  CHECK(net.points[1] == Vec{0.25, 0.75});
  CHECK(net.points[2] == Vec{0.5, 0.5});
  CHECK(net.points[3] == Vec{0.75, 0.25});
  CHECK(net.points[4] == Vec{1.0, 0.0});
}

TEST_CASE("epsilon net rejects bad parameters and oversized requests") {
  CHECK_THROWS_AS(build_epsilon_net(2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_epsilon_net(2, 2.5), std::invalid_argument);
  CHECK_THROWS(build_epsilon_net(6, 1e-3));  // lattice far above the size cap
}

TEST_CASE("epsilon net covering and projection contraction on 10k samples") {
  EpsilonNet net = build_epsilon_net(3, 0.5);
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10000; ++i) {
    Vec p = random_simplex_point(rng, 3);
    double best = 2.0;
    for (const Vec& q : net.points) best = std::min(best, tu::l1(p, q));
    CHECK(best <= 0.5);
    CHECK(tu::l1(project(p, net), p) <= net.epsilon + 1e-12);
  }
}

TEST_CASE("net csv export writes one row per point") {
  EpsilonNet net = build_epsilon_net(2, 0.5);
  const std::string path = "net_export_test.csv";
  export_net_csv(net, path);
  auto table = stackmf::read_csv(path);
  CHECK(table.header == std::vector<std::string>{"point", "p0", "p1"});
  REQUIRE(table.rows.size() == net.size());
  CHECK(table.number(2, 1) == 0.5);
  CHECK(table.number(2, 2) == 0.5);
  std::remove(path.c_str());
}

TEST_CASE("project returns net points unchanged") {
  EpsilonNet net = build_epsilon_net(2, 0.5);
  for (const Vec& q : net.points) CHECK(project(q, net) == q);
}

TEST_CASE("project picks the l1-nearest point with the lexicographic tie rule") {
  EpsilonNet net = build_epsilon_net(2, 0.5);  // m = 4
  CHECK(project(Vec{0.6, 0.4}, net) == Vec{0.5, 0.5});
  // Exact midpoint between (0.5,0.5) and (0.75,0.25).
  CHECK(project(Vec{0.625, 0.375}, net) == Vec{0.5, 0.5});
}

TEST_CASE("project matches the exhaustive nearest-point scan") {
  std::mt19937_64 rng(23);
  for (int n : {2, 3, 4}) {
    EpsilonNet net = build_epsilon_net(n, 0.3);
    for (int trial = 0; trial < 500; ++trial) {
      Vec p = random_simplex_point(rng, n);
      Vec got = project(p, net);
      // Oracle: linear scan, keeping the lexicographically smallest minimizer.
      Vec best;
      double best_d = std::numeric_limits<double>::infinity();
      for (const Vec& q : net.points) {
        const double d = tu::l1(p, q);
        if (d < best_d - 1e-15) {
          best_d = d;
          best = q;
        } else if (std::abs(d - best_d) <= 1e-15 && q < best) {
          best = q;
        }
      }
      CHECK(tu::l1(got, p) == doctest::Approx(best_d).epsilon(1e-12));
      CHECK(got == best);
      CHECK(tu::l1(got, p) <= net.epsilon + 1e-12);
    }
  }
}

TEST_CASE("softmax l1 Lipschitz bound sqrt(n)*alpha on random pairs") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + uniform_index(rng, 7);
    const double alpha = uniform_in(rng, 1e-3, 10.0);
    Vec x(n), y(n);
    for (double& v : x) v = uniform_in(rng, -3.0, 3.0);
    for (double& v : y) v = uniform_in(rng, -3.0, 3.0);
    const double lhs = tu::l1(softmax(x, alpha), softmax(y, alpha));
    CHECK(lhs <= std::sqrt(static_cast<double>(n)) * alpha * tu::l1(x, y) + 1e-12);
  }
}

TEST_CASE("softmax-argmax closeness bound 2n exp(-alpha delta)") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + uniform_index(rng, 7);
    const double alpha = uniform_in(rng, 0.1, 50.0);
    Vec x(n);
    for (double& v : x) v = uniform_in(rng, -2.0, 2.0);
    const double delta = action_gap(x);
    const double lhs = tu::l1(softmax(x, alpha), argmax_uniform(x));
    const double bound = std::isinf(delta) ? 0.0 : 2.0 * n * std::exp(-alpha * delta);
    CHECK(lhs <= bound + 1e-12);
  }
}
