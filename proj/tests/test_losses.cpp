#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "ocpad/error.hpp"
#include "ocpad/losses.hpp"

using namespace ocpad;
using Eigen::VectorXd;

namespace {

BonafideCenter at(std::initializer_list<double> v, double alpha = 0.5) {
  BonafideCenter c;
  c.center = VectorXd::Map(std::data(v), static_cast<Eigen::Index>(v.size()));
  c.alpha = alpha;
  c.initialized = true;
  return c;
}

VectorXd vec(std::initializer_list<double> v) { return VectorXd::Map(std::data(v), static_cast<Eigen::Index>(v.size())); }

}  // namespace

TEST_CASE("bce at known points") {
  CHECK(bce_loss(0.5, Label::bonafide).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(1.0 - 1e-12, Label::bonafide).loss < 1e-11);
  CHECK(bce_loss(0.9, Label::attack).loss == doctest::Approx(2.302585).epsilon(1e-6));
}

TEST_CASE("bce derivative and monotonicity") {
  double prev = INFINITY;
  for (double p = 0.05; p < 1.0; p += 0.05) {
    const auto b = bce_loss(p, Label::bonafide);
    CHECK(b.loss < prev);
    CHECK(b.loss >= 0.0);
    prev = b.loss;
    CHECK(b.d_probability == doctest::Approx(-1.0 / p));
    CHECK(bce_loss(p, Label::attack).d_probability == doctest::Approx(1.0 / (1.0 - p)));
  }
}

TEST_CASE("bce rejects probabilities outside the open interval") {
  CHECK_THROWS_AS(bce_loss(0.0, Label::bonafide), InputError);
  CHECK_THROWS_AS(bce_loss(1.0, Label::attack), InputError);
  CHECK_THROWS_AS(bce_loss(NAN, Label::attack), InputError);
}

TEST_CASE("distance to center") {
  CHECK(distance_to_center(vec({1, 2}), at({1, 2})) == 0.0);
  CHECK(distance_to_center(vec({4, 6}), at({1, 2})) == 5.0);
  CHECK_THROWS_AS(distance_to_center(vec({1, 2, 3}), at({1, 2})), InputError);
}

TEST_CASE("distance is translation invariant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    VectorXd x(4), c(4), t(4);
    for (int j = 0; j < 4; ++j) x(j) = n(rng), c(j) = n(rng), t(j) = 10 * n(rng);
    BonafideCenter a{c, 0.5, true}, b{c + t, 0.5, true};
    CHECK(distance_to_center(x, a) == doctest::Approx(distance_to_center(x + t, b)).epsilon(1e-12));
  }
}

TEST_CASE("occl values") {
  CHECK(occl_loss(vec({0, 0}), at({0, 0}), Label::bonafide, 1.0).loss == 0.0);
  CHECK(occl_loss(vec({0.5, 0}), at({0, 0}), Label::attack, 1.0).loss == doctest::Approx(0.125));
  CHECK(occl_loss(vec({0, 2}), at({0, 0}), Label::bonafide, 1.0).loss == doctest::Approx(2.0));
  const auto far = occl_loss(vec({2, 0}), at({0, 0}), Label::attack, 1.0);
  CHECK(far.loss == 0.0);
  CHECK(far.d_embedding.isZero(0.0));
  CHECK_THROWS_AS(occl_loss(vec({0, 0}), at({0, 0}), Label::attack, 0.0), ConfigError);
  CHECK_THROWS_AS(occl_loss(vec({0, 0}), at({0, 0}), Label::attack, -1.0), ConfigError);
}

TEST_CASE("occl gradient matches finite differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    VectorXd x(5);
    for (int j = 0; j < 5; ++j) x(j) = n(rng);
    const auto c = at({0.1, -0.2, 0.3, 0, 0.5});
    const Label y = trial % 2 ? Label::attack : Label::bonafide;
    const double m = 2.0;
    const double d = distance_to_center(x, c);
    if (y == Label::attack && std::abs(d - m) < 1e-3) continue;  // hinge kink
    const auto g = occl_loss(x, c, y, m);
    for (int j = 0; j < 5; ++j) {
      VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const double fd = (occl_loss(xp, c, y, m).loss - occl_loss(xm, c, y, m).loss) / (2 * h);
      CHECK(std::abs(fd - g.d_embedding(j)) < 1e-5);
    }
  }
}

TEST_CASE("occl attack at the center has a zero gradient") {
  const auto r = occl_loss(vec({1, 1}), at({1, 1}), Label::attack, 3.0);
  CHECK(r.loss == doctest::Approx(4.5));
  CHECK(r.d_embedding.isZero(0.0));
}

TEST_CASE("combined loss endpoints") {
  CHECK(combined_loss(0.6, 0.2, 0.0) == 0.6);
  CHECK(combined_loss(0.6, 0.2, 1.0) == 0.2);
  CHECK(combined_loss(0.6, 0.2, 0.5) == doctest::Approx(0.4));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 1000; ++i) {
    const double b = u(rng), o = u(rng);
    CHECK(combined_loss(b, o, 0.0) == b);
    CHECK(combined_loss(b, o, 1.0) == o);
  }
}

TEST_CASE("update_center") {
  const std::vector<VectorXd> batch{vec({1, 3}), vec({3, 1})};
  const auto c1 = update_center(at({0, 0}, 0.5), batch);
  CHECK(c1.center(0) == doctest::Approx(1.0));
  CHECK(c1.center(1) == doctest::Approx(1.0));

  const std::vector<VectorXd> same{vec({2, 2})};
  for (double a : {0.0, 0.3, 1.0}) CHECK(update_center(at({2, 2}, a), same).center == vec({2, 2}));
  CHECK(update_center(at({7, -1}, 0.0), same).center == vec({7, -1}));

  const auto empty = update_center(at({7, -1}), {});
  CHECK(empty.center == vec({7, -1}));

  BonafideCenter fresh;
  fresh.alpha = 0.5;
  const auto init = update_center(fresh, batch);
  CHECK(init.initialized);
  CHECK(init.center == vec({2, 2}));
}

TEST_CASE("update_center contracts toward the batch mean") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    VectorXd c(3), x(3);
    for (int j = 0; j < 3; ++j) c(j) = 5 * n(rng), x(j) = n(rng);
    const double a = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const std::vector<VectorXd> b{x};
    const auto next = update_center(BonafideCenter{c, a, true}, b);
    CHECK((next.center - x).norm() <= (1 - a) * (c - x).norm() + 1e-12);
  }
}

TEST_CASE("center loss") {
  std::map<int, VectorXd> centers{{0, vec({0, 0})}, {1, vec({5, 5})}};
  const std::vector<VectorXd> at_centers{vec({0, 0}), vec({5, 5})};
  const std::vector<int> labels{0, 1};
  CHECK(center_loss(at_centers, labels, centers) == 0.0);

  const std::vector<VectorXd> one{vec({1, 0})};
  const std::vector<int> zero{0};
  CHECK(center_loss(one, zero, centers) == doctest::Approx(0.5));

  // homogeneous of degree 2 in the offset
  const std::vector<VectorXd> scaled{vec({3, 0})};
  CHECK(center_loss(scaled, zero, centers) == doctest::Approx(9 * 0.5));

  const std::vector<int> missing{2};
  CHECK_THROWS_AS(center_loss(one, missing, centers), InputError);
}
