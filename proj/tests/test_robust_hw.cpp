#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "sofia/box_minimize.hpp"
#include "sofia/errors.hpp"
#include "sofia/robust_hw.hpp"

using namespace sofia;

namespace {

HwState random_state(std::mt19937_64& rng, Eigen::Index rank, Eigen::Index m) {
  HwState s;
  s.level = oracle::random_vector(rng, rank);
  s.trend = oracle::random_vector(rng, rank, -0.1, 0.1);
  s.seasonal = oracle::random_matrix(rng, m, rank);
  s.head = static_cast<std::size_t>(m / 2);
  s.params.alpha = oracle::random_vector(rng, rank, 0.0, 1.0);
  s.params.beta = oracle::random_vector(rng, rank, 0.0, 1.0);
  s.params.gamma = oracle::random_vector(rng, rank, 0.0, 1.0);
  return s;
}

struct Generated {
  std::vector<double> y;
  double l0, b0;
  std::vector<double> s0;
};

// Additive HW recursion driven by Gaussian innovations.
Generated generate_hw(std::mt19937_64& rng, std::size_t m, std::size_t n, double a, double b, double g, double noise) {
  std::normal_distribution<double> eps(0.0, noise);
  Generated out;
  out.l0 = 2.0;
  out.b0 = 0.05;
  for (std::size_t j = 0; j < m; ++j) out.s0.push_back(std::sin(2.0 * std::numbers::pi * static_cast<double>(j) / m));
  std::vector<double> s = out.s0;
  double l = out.l0, tr = out.b0;
  for (std::size_t t = 0; t < n; ++t) {
    const double e = eps(rng);
    const double y = l + tr + s[t] + e;
    const double l_new = a * (y - s[t]) + (1 - a) * (l + tr);
    const double b_new = b * (l_new - l) + (1 - b) * tr;
    s.push_back(g * (y - l - tr) + (1 - g) * s[t]);
    l = l_new;
    tr = b_new;
    out.y.push_back(y);
  }
  return out;
}

}  // namespace

TEST_CASE("huber_psi") {
  CHECK(huber_psi(1.5, 2) == 1.5);
  CHECK(huber_psi(3, 2) == 2);
  CHECK(huber_psi(-5, 2) == -2);
  for (double k : {0.1, 1.0, 7.0}) CHECK(huber_psi(0.0, k) == 0.0);

  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> x(-20, 20);
  for (int i = 0; i < 1000; ++i) {
    const double v = x(rng);
    CHECK(std::abs(huber_psi(v, 2.0)) <= 2.0);
    if (std::abs(v) < 2.0) CHECK(huber_psi(v, 2.0) == v);
  }
}

TEST_CASE("biweight_rho") {
  CHECK(biweight_rho(0, 2, 2.52) == 0.0);
  CHECK(biweight_rho(2, 2, 2.52) == 2.52);
  CHECK(biweight_rho(10, 2, 2.52) == 2.52);
  CHECK(biweight_rho(-10, 2, 2.52) == 2.52);
  CHECK(biweight_rho(1, 2, 2.52) == doctest::Approx(1.456875).epsilon(1e-15));

  double prev = 0.0;
  for (double v = 0.0; v <= 4.0; v += 0.01) {
    const double r = biweight_rho(v, 2.0, 2.52);
    CHECK(r == biweight_rho(-v, 2.0, 2.52));
    CHECK(r >= prev);
    CHECK(r <= 2.52);
    prev = r;
  }
}

TEST_CASE("robust config validation") {
  RobustConfig c;
  CHECK_NOTHROW(c.validate());
  c.phi = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.huber_k = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("hw_update with zero smoothing ignores the observation") {
  std::mt19937_64 rng(11);
  HwState s = random_state(rng, 3, 4);
  s.params.alpha.setZero();
  s.params.beta.setZero();
  s.params.gamma.setZero();
  const HwState next = hw_update(s, oracle::random_vector(rng, 3, -50, 50));
  CHECK((next.level - (s.level + s.trend)).norm() < 1e-15);
  CHECK(next.trend == s.trend);
  CHECK(next.season(3) == s.season(0));
}

TEST_CASE("hw_update with alpha 1 sets the level to y minus the old season") {
  std::mt19937_64 rng(12);
  HwState s = random_state(rng, 3, 4);
  s.params.alpha.setOnes();
  s.params.beta.setZero();
  s.params.gamma.setZero();
  const Vector y = oracle::random_vector(rng, 3);
  CHECK((hw_update(s, y).level - (y - s.season(0))).norm() < 1e-15);
}

TEST_CASE("hw_update matches the scalar recursion per column and leaves its input alone") {
  std::mt19937_64 rng(13);
  const HwState s = random_state(rng, 3, 4);
  const HwState copy = s;
  const Vector y = oracle::random_vector(rng, 3);
  const HwState next = hw_update(s, y);
  CHECK(s.level == copy.level);
  CHECK(s.seasonal == copy.seasonal);
  for (Eigen::Index r = 0; r < 3; ++r) {
    const double a = s.params.alpha[r], b = s.params.beta[r], g = s.params.gamma[r];
    const double l = s.level[r], tr = s.trend[r], so = s.season(0)[r];
    const double l_new = a * (y[r] - so) + (1 - a) * (l + tr);
    CHECK(next.level[r] == doctest::Approx(l_new).epsilon(1e-14));
    CHECK(next.trend[r] == doctest::Approx(b * (l_new - l) + (1 - b) * tr).epsilon(1e-14));
    CHECK(next.season(3)[r] == doctest::Approx(g * (y[r] - l - tr) + (1 - g) * so).epsilon(1e-14));
    for (std::size_t j = 0; j + 1 < 4; ++j) CHECK(next.season(j)[r] == s.season(j + 1)[r]);
  }
  CHECK_THROWS_AS(hw_update(s, Vector::Zero(2)), DimensionError);
}

TEST_CASE("hw_forecast") {
  std::mt19937_64 rng(14);
  HwState s = random_state(rng, 3, 5);
  CHECK((hw_forecast(s, 1) - (s.level + s.trend + s.season(0))).norm() < 1e-15);
  for (std::size_t h = 1; h <= 12; ++h)
    CHECK((hw_forecast(s, h + 5) - hw_forecast(s, h) - 5.0 * s.trend).norm() < 1e-13);
  CHECK_THROWS_AS(hw_forecast(s, 0), ConfigError);

  SUBCASE("h = 1..2m equals the recursion fed its own forecasts") {
    HwState rolled = s;
    for (std::size_t h = 1; h <= 10; ++h) {
      const Vector f = hw_forecast(rolled, 1);
      CHECK((hw_forecast(s, h) - f).cwiseAbs().maxCoeff() <= 1e-12);
      rolled = hw_update(rolled, f);
    }
  }

  SUBCASE("update then forecast is consistent with the new state") {
    const HwState next = hw_update(s, oracle::random_vector(rng, 3));
    CHECK((hw_forecast(next, 1) - (next.level + next.trend + next.season(0))).norm() < 1e-15);
  }
}

TEST_CASE("one-step SSE agrees with an independent loop") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gen = generate_hw(rng, 6, 30, 0.4, 0.2, 0.3, 0.3);
    std::uniform_real_distribution<double> u(0, 1);
    const double a = u(rng), b = u(rng), g = u(rng);
    HwInitial init{gen.l0 + 0.3, gen.b0 - 0.01, gen.s0};
    const double want = oracle::hw_sse_loop(gen.y, a, b, g, init.level, init.trend, init.seasonal);
    CHECK(hw_one_step_sse(gen.y, a, b, g, init) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("hw_fit reaches the generating SSE") {
  std::mt19937_64 rng(16);
  const std::size_t m = 6, n = 30;
  const double params[3][3] = {{0.3, 0.1, 0.2}, {0.6, 0.05, 0.4}, {0.2, 0.3, 0.1}};
  Matrix series(n, 3);
  std::vector<double> generating(3);
  for (int r = 0; r < 3; ++r) {
    const auto gen = generate_hw(rng, m, n, params[r][0], params[r][1], params[r][2], 0.2);
    for (std::size_t t = 0; t < n; ++t) series(static_cast<Eigen::Index>(t), r) = gen.y[t];
    generating[r] = oracle::hw_sse_loop(gen.y, params[r][0], params[r][1], params[r][2], gen.l0, gen.b0, gen.s0);
  }
  const HwFitResult fit = hw_fit(series, m);
  for (int r = 0; r < 3; ++r) {
    const auto& c = fit.columns[static_cast<std::size_t>(r)];
    CHECK(c.sse <= 1.01 * generating[r]);
    CHECK(c.alpha >= 0.0);
    CHECK(c.alpha <= 1.0);
    CHECK(c.beta >= 0.0);
    CHECK(c.beta <= 1.0);
    CHECK(c.gamma >= 0.0);
    CHECK(c.gamma <= 1.0);
  }
  CHECK_NOTHROW(fit.state.validate());
}

TEST_CASE("hw_fit on a constant series forecasts the constant") {
  Matrix series = Matrix::Constant(24, 2, 3.25);
  const HwFitResult fit = hw_fit(series, 4);
  for (const auto& c : fit.columns) CHECK(c.sse < 1e-8);
  for (std::size_t h = 1; h <= 8; ++h) CHECK((hw_forecast(fit.state, h).array() - 3.25).abs().maxCoeff() < 1e-4);
}

TEST_CASE("hw_fit on a sinusoid reproduces the next season") {
  const std::size_t m = 12;
  Matrix series(3 * m, 1);
  auto wave = [&](std::size_t i) { return std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / m); };
  for (std::size_t i = 0; i < 3 * m; ++i) series(static_cast<Eigen::Index>(i), 0) = wave(i + 1);
  const HwFitResult fit = hw_fit(series, m);
  double err = 0.0, norm = 0.0;
  for (std::size_t h = 1; h <= m; ++h) {
    const double truth = wave(3 * m + h);
    err += std::pow(hw_forecast(fit.state, h)[0] - truth, 2);
    norm += truth * truth;
  }
  CHECK(std::sqrt(err / norm) < 0.05);
}

TEST_CASE("hw_fit input errors") {
  CHECK_THROWS_AS(hw_fit(Matrix::Ones(11, 2), 4), InsufficientHistoryError);
  Matrix bad = Matrix::Ones(12, 2);
  bad(5, 1) = std::nan("");
  CHECK_THROWS_AS(hw_fit(bad, 4), InputError);
}

TEST_CASE("hw_heuristic_initial") {
  const std::vector<double> y{1, 2, 3, 5, 6, 7};
  const HwInitial init = hw_heuristic_initial(y, 3);
  CHECK(init.level == doctest::Approx(2.0));
  CHECK(init.trend == doctest::Approx(4.0 / 3.0));
  CHECK(init.seasonal == std::vector<double>{-1.0, 0.0, 1.0});
}

TEST_CASE("minimize_box") {
  SUBCASE("interior minimum of a shifted quadratic") {
    auto f = [](const Eigen::VectorXd& x) { return std::pow(x[0] - 0.3, 2) + 4 * std::pow(x[1] - 0.6, 2); };
    const auto res = minimize_box(f, Eigen::Vector2d(0.9, 0.1), Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones());
    CHECK(res.x[0] == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(res.x[1] == doctest::Approx(0.6).epsilon(1e-5));
  }
  SUBCASE("minimum outside the box lands on the bound") {
    auto f = [](const Eigen::VectorXd& x) { return std::pow(x[0] + 1.0, 2) + std::pow(x[1] - 2.0, 2); };
    const auto res = minimize_box(f, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones());
    CHECK(res.x[0] == doctest::Approx(0.0));
    CHECK(res.x[1] == doctest::Approx(1.0));
  }
  SUBCASE("Rosenbrock inside a box") {
    auto f = [](const Eigen::VectorXd& x) { return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2); };
    BoxMinimizeOptions opt;
    opt.max_iter = 2000;
    const auto res = minimize_box(f, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(-2, -2), Eigen::Vector2d(2, 2), opt);
    CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-3));
  }
}
