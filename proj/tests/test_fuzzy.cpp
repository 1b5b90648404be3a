#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "promptattrib/error.hpp"
#include "promptattrib/fuzzy.hpp"

using namespace promptattrib;

namespace {

// Direct evaluation of the three rules, written independently of the library.
struct Oracle {
  double same, diff, amb;
};

Oracle oracle_scores(const std::vector<AttributeBelief>& b) {
  double prod = 1.0;
  double mdiff = 0.0, mamb = 0.0;
  for (const auto& x : b) {
    prod *= std::max(x.p_same, 1e-12);
    mdiff = std::max(mdiff, x.p_different);
    mamb = std::max(mamb, x.p_ambiguous);
  }
  return {std::pow(prod, 1.0 / static_cast<double>(b.size())), mdiff, mamb * (1.0 - mdiff)};
}

AttributeBelief random_belief(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng), b = u(rng), c = u(rng);
  const double z = a + b + c;
  return {a / z, b / z, c / z};
}

double loss_at(const std::vector<AttributeBelief>& b, TernaryLabel t) {
  return fuzzy_loss(induce_posterior(b), t);
}

bool separated(const std::vector<AttributeBelief>& b, double gap) {
  auto check = [&](auto get) {
    std::vector<double> v;
    for (const auto& x : b) v.push_back(get(x));
    std::sort(v.rbegin(), v.rend());
    return v.size() < 2 || v[0] - v[1] > gap;
  };
  return check([](const AttributeBelief& x) { return x.p_different; }) &&
         check([](const AttributeBelief& x) { return x.p_ambiguous; });
}

}  // namespace

TEST_CASE("worked belief set") {
  const std::vector<AttributeBelief> b = {{0.9, 0.05, 0.05}, {0.4, 0.1, 0.5}};
  const EntityScores s = induce_scores(b);
  CHECK(s.s_same == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(s.s_different == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.s_ambiguous == doctest::Approx(0.45).epsilon(1e-12));
  const EntityPosterior p = normalize_scores(s);
  CHECK(std::abs(p.p_same - 0.52174) < 1e-5);
  CHECK(std::abs(p.p_different - 0.08696) < 1e-5);
  CHECK(std::abs(p.p_ambiguous - 0.39130) < 1e-5);
  CHECK(std::abs(fuzzy_loss(p, TernaryLabel::kSame) - 0.65059) < 1e-5);
}

TEST_CASE("score_same") {
  const std::vector<AttributeBelief> one = {{0.81, 0.19, 0.0}};
  CHECK(score_same(one) == doctest::Approx(0.81));
  const std::vector<AttributeBelief> zero = {{0.0, 1.0, 0.0}, {0.5, 0.5, 0.0}};
  CHECK(score_same(zero) < 1e-6);
  CHECK(score_same(zero) > 0.0);
  CHECK_THROWS_AS(score_same({}), Error);
}

TEST_CASE("score_different and score_ambiguous") {
  const std::vector<AttributeBelief> b = {{0.9, 0.05, 0.05}, {0.4, 0.1, 0.5}};
  CHECK(score_different(b) == 0.1);
  const std::vector<AttributeBelief> z = {{1, 0, 0}, {1, 0, 0}, {1, 0, 0}};
  CHECK(score_different(z) == 0.0);
  CHECK(score_ambiguous(z) == 0.0);
  const std::vector<AttributeBelief> single = {{0.2, 0.7, 0.1}};
  CHECK(score_different(single) == 0.7);
  const std::vector<AttributeBelief> full = {{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  CHECK(score_ambiguous(full) == 0.0);
  CHECK_THROWS_AS(score_different({}), Error);
  CHECK_THROWS_AS(score_ambiguous({}), Error);
}

TEST_CASE("normalize_scores") {
  const auto a = normalize_scores({1, 0, 0});
  CHECK(a.p_same == 1.0);
  CHECK(a.p_different == 0.0);
  const auto c = normalize_scores({0.3, 0.3, 0.3});
  CHECK(c.p_same == doctest::Approx(1.0 / 3));
  CHECK(c.p_ambiguous == doctest::Approx(1.0 / 3));
  CHECK_THROWS_AS(normalize_scores({0, 0, 0}), Error);
  CHECK_THROWS_AS(normalize_scores({-0.1, 0.5, 0}), Error);
}

TEST_CASE("fuzzy_loss edge values") {
  CHECK(fuzzy_loss({1, 0, 0}, TernaryLabel::kSame) == 0.0);
  CHECK(fuzzy_loss({1, 0, 0}, TernaryLabel::kDifferent) == doctest::Approx(-std::log(1e-12)));
  CHECK(fuzzy_loss({1, 0, 0}, TernaryLabel::kDifferent) == doctest::Approx(27.631).epsilon(1e-4));
}

TEST_CASE("map_ambiguous_to_binary") {
  const EntityPosterior p{0.52, 0.09, 0.39};
  CHECK(map_ambiguous_to_binary(p, AmbiguousPolicy::kAsSame) == doctest::Approx(0.91));
  CHECK(map_ambiguous_to_binary(p, AmbiguousPolicy::kAsDifferent) == doctest::Approx(0.52));
  const EntityPosterior q{0.7, 0.3, 0.0};
  CHECK(map_ambiguous_to_binary(q, AmbiguousPolicy::kAsSame) ==
        map_ambiguous_to_binary(q, AmbiguousPolicy::kAsDifferent));
  CHECK(parse_ambiguous_policy("same") == AmbiguousPolicy::kAsSame);
  CHECK_THROWS_AS(parse_ambiguous_policy("maybe"), UsageError);
}

TEST_CASE("belief validation") {
  const std::vector<AttributeBelief> bad = {{0.5, 0.5, 0.5}};
  CHECK_THROWS_AS(induce_scores(bad), Error);
  const std::vector<AttributeBelief> neg = {{1.2, -0.2, 0.0}};
  CHECK_THROWS_AS(induce_scores(neg), Error);
}

TEST_CASE("grid oracle for K <= 3") {
  std::vector<AttributeBelief> grid;
  for (int a = 0; a <= 10; ++a) {
    for (int b = 0; a + b <= 10; ++b) grid.push_back({a / 10.0, b / 10.0, (10 - a - b) / 10.0});
  }
  double worst = 0.0;
  std::size_t cases = 0;
  auto check = [&](const std::vector<AttributeBelief>& b) {
    const Oracle o = oracle_scores(b);
    const EntityScores s = induce_scores(b);
    worst = std::max({worst, std::abs(s.s_same - o.same), std::abs(s.s_different - o.diff),
                      std::abs(s.s_ambiguous - o.amb)});
    const double z = o.same + o.diff + o.amb;
    const EntityPosterior p = normalize_scores(s);
    worst = std::max({worst, std::abs(p.p_same - o.same / z), std::abs(p.p_different - o.diff / z),
                      std::abs(p.p_ambiguous - o.amb / z)});
    ++cases;
  };
  for (const auto& x : grid) check({x});
  for (const auto& x : grid)
    for (const auto& y : grid) check({x, y});
  // K = 3 over a coarser stride keeps the run short while still hitting every
  // grid value in each slot.
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); j += 3)
      for (std::size_t k = 0; k < grid.size(); k += 5) check({grid[i], grid[j], grid[k]});
  CHECK(cases > 10000);
  CHECK(worst <= 1e-9);
}

TEST_CASE("posterior normalization on random lists") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t k = 1 + rng() % 8;
    std::vector<AttributeBelief> b;
    for (std::size_t i = 0; i < k; ++i) b.push_back(random_belief(rng));
    const EntityPosterior p = induce_posterior(b);
    REQUIRE(std::abs(p.p_same + p.p_different + p.p_ambiguous - 1.0) <= 1e-9);
    REQUIRE(p.p_same >= 0.0);
    REQUIRE(p.p_different >= 0.0);
    REQUIRE(p.p_ambiguous >= 0.0);
  }
}

TEST_CASE("AM-GM, monotonicity and permutation invariance") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t k = 1 + rng() % 8;
    std::vector<AttributeBelief> b;
    for (std::size_t i = 0; i < k; ++i) b.push_back(random_belief(rng));
    double mean = 0.0;
    for (const auto& x : b) mean += x.p_same;
    mean /= static_cast<double>(k);
    REQUIRE(score_same(b) <= mean + 1e-12);

    // Move mass from Same to Different on one pair.
    auto bumped = b;
    const std::size_t j = rng() % k;
    const double delta = u(rng) * bumped[j].p_same;
    bumped[j].p_same -= delta;
    bumped[j].p_different += delta;
    REQUIRE(score_different(bumped) >= score_different(b));
    REQUIRE(score_ambiguous(bumped) <= score_ambiguous(b));

    auto shuffled = b;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const EntityScores s1 = induce_scores(b), s2 = induce_scores(shuffled);
    REQUIRE(s2.s_same == doctest::Approx(s1.s_same).epsilon(1e-12));
    REQUIRE(s2.s_different == s1.s_different);
    REQUIRE(s2.s_ambiguous == s1.s_ambiguous);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(13);
  const double h = 1e-5;
  int tested = 0;
  while (tested < 100) {
    const std::size_t k = 1 + rng() % 5;
    std::vector<AttributeBelief> b;
    for (std::size_t i = 0; i < k; ++i) b.push_back(random_belief(rng));
    if (!separated(b, 1e-3)) continue;
    const TernaryLabel t = static_cast<TernaryLabel>(rng() % 3);
    const auto g = fuzzy_loss_gradient(b, t);
    for (std::size_t i = 0; i < k; ++i) {
      for (int c = 0; c < 3; ++c) {
        auto get = [c](AttributeBelief& x) -> double& {
          return c == 0 ? x.p_same : c == 1 ? x.p_different : x.p_ambiguous;
        };
        // Perturb one component alone; the rules are defined on each component
        // independently, so the simplex constraint is not needed here.
        auto plus = b, minus = b;
        get(plus[i]) += h;
        get(minus[i]) -= h;
        auto eval = [&](const std::vector<AttributeBelief>& x) {
          const Oracle o = oracle_scores(x);
          const double z = o.same + o.diff + o.amb;
          const double p = t == TernaryLabel::kSame ? o.same : t == TernaryLabel::kDifferent ? o.diff : o.amb;
          return -std::log(std::max(p / z, 1e-12));
        };
        const double fd = (eval(plus) - eval(minus)) / (2 * h);
        auto gcopy = g[i];
        const double an = get(gcopy);
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
        REQUIRE_MESSAGE(rel <= 1e-4, "component ", c, " of pair ", i, ": analytic ", an, " fd ", fd);
      }
    }
    ++tested;
  }
}

TEST_CASE("tape op agrees with the analytic vjp") {
  const std::vector<AttributeBelief> b = {{0.6, 0.3, 0.1}, {0.2, 0.1, 0.7}, {0.5, 0.45, 0.05}};
  Tape tape;
  Matrix m(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    m(i, 0) = b[i].p_same;
    m(i, 1) = b[i].p_different;
    m(i, 2) = b[i].p_ambiguous;
  }
  const Var x = tape.variable(m);
  const Var post = induce_posterior(x);
  const Var loss = ag::scale(ag::log_clamped(ag::element(post, 0, 1), 1e-12), -1.0);
  CHECK(loss.value()(0, 0) == doctest::Approx(loss_at(b, TernaryLabel::kDifferent)).epsilon(1e-12));
  tape.backward(loss);
  const Matrix g = tape.grad(x);
  const auto ref = fuzzy_loss_gradient(b, TernaryLabel::kDifferent);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g(i, 0) == doctest::Approx(ref[i].p_same).epsilon(1e-10));
    CHECK(g(i, 1) == doctest::Approx(ref[i].p_different).epsilon(1e-10));
    CHECK(g(i, 2) == doctest::Approx(ref[i].p_ambiguous).epsilon(1e-10));
  }
}

TEST_CASE("smooth max approaches the hard max") {
  const std::vector<AttributeBelief> b = {{0.6, 0.3, 0.1}, {0.2, 0.1, 0.7}};
  const EntityScores hard = induce_scores(b);
  const EntityScores soft = induce_scores(b, FuzzyOptions{1e-3});
  CHECK(soft.s_different == doctest::Approx(hard.s_different).epsilon(1e-6));
  CHECK(soft.s_ambiguous == doctest::Approx(hard.s_ambiguous).epsilon(1e-6));
  const EntityScores warm = induce_scores(b, FuzzyOptions{0.5});
  CHECK(warm.s_different < hard.s_different);
}
