#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "dmaloc/errors.hpp"
#include "dmaloc/features.hpp"
#include "oracles.hpp"

using namespace dmaloc;

namespace {

constexpr double kFs = 16000.0;

Eigen::VectorXd white(Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

// y[t] = x[t - d], zero-filled.
Eigen::VectorXd delayed(const Eigen::VectorXd& x, int d) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
  for (Index t = 0; t < x.size(); ++t) {
    const Index s = t - d;
    if (s >= 0 && s < x.size()) y[t] = x[s];
  }
  return y;
}

// Linear interpolation on the full vector, clamped at both ends.
double reference_lag_value(const Eigen::VectorXd& full, double lag) {
  const double pos = std::clamp(lag + double(full.size() / 2), 0.0, double(full.size() - 1));
  const auto k = static_cast<Index>(std::floor(pos));
  if (k + 1 >= full.size()) return full[k];
  const double f = pos - double(k);
  return (1.0 - f) * full[k] + f * full[k + 1];
}

}  // namespace

TEST_CASE("extract_frame: length, energy argmax, tie-break") {
  MultichannelSignal s;
  s.samples = Eigen::MatrixXd::Zero(32000, 2);
  const MultichannelFrame f = extract_frame(s, 500);
  CHECK(f.length() == 8000);
  CHECK(f.num_channels() == 2);

  s.samples.bottomRows(16000) = Eigen::MatrixXd::Random(16000, 2);
  CHECK(best_frame_offset(s, 8000) >= 16000);

  s.samples.setConstant(0.3);
  CHECK(best_frame_offset(s, 8000) == 0);

  s.samples = Eigen::MatrixXd::Ones(4000, 2);
  try {
    extract_frame(s, 500);
    FAIL("expected SignalTooShort");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SignalTooShort);
  }
}

TEST_CASE("gcc_phat: matches a naive-DFT Welch oracle") {
  const Eigen::VectorXd a = white(256, 1);
  const Eigen::VectorXd b = delayed(a, 3) + 0.3 * white(256, 2);
  GccOptions opt;
  opt.fft_size = 64;
  opt.n_central = 20;
  const CorrelationVector c = gcc_phat(a, b, kFs, opt);
  const Eigen::VectorXd ref = oracle::gcc_phat(a, b, 64);
  REQUIRE(c.full.size() == 64);
  CHECK((c.full - ref).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(c.central.size() == 20);
  CHECK(c.central == c.full.segment(32 - 10, 20));
  CHECK(c.lag_at(c.zero_index()) == 0.0);
}

TEST_CASE("gcc_phat: identity, delay sign, reversal symmetry") {
  const Eigen::VectorXd x = white(8000, 7);
  CHECK(gcc_phat(x, x, kFs).peak_lag() == 0.0);

  const Eigen::VectorXd y = delayed(x, 5);
  const CorrelationVector c = gcc_phat(x, y, kFs);
  CHECK(c.peak_lag() == -5.0);
  CHECK(oracle::xcorr_peak_lag(x, y, 20) == -5);
  CHECK(c.central.size() == 200);

  const CorrelationVector r = gcc_phat(y, x, kFs);
  const Index n = c.full.size();
  double worst = 0.0;
  for (Index k = 0; k < n; ++k) worst = std::max(worst, std::abs(r.full[k] - c.full[(n - k) % n]));
  CHECK(worst < 1e-12);

  CHECK_THROWS_AS(gcc_phat(x.head(500), y.head(500), kFs), Error);
  CHECK_THROWS_AS(gcc_phat(x, y.head(4000), kFs), Error);
}

TEST_CASE("phat_normalize: unit magnitude above the floor") {
  std::vector<std::complex<double>> c = {{3, 4}, {-1e-3, 2e-3}, {0, -7}, {1e-14, 0}};
  phat_normalize(c, 1e-12);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(c[static_cast<std::size_t>(k)]) == doctest::Approx(1.0));
  CHECK(std::abs(c[3]) == doctest::Approx(1e-2));
}

TEST_CASE("CorrelationVector: lag lookup") {
  CorrelationVector c;
  c.full = white(64, 3);
  CHECK(c.value_at_lag(5.0) == c.full[37]);
  CHECK(c.value_at_lag(-32.0) == c.full[0]);
  CHECK(c.value_at_lag(5.25) == doctest::Approx(0.75 * c.full[37] + 0.25 * c.full[38]));
  CHECK(c.value_at_lag(5.25, LagInterpolation::Nearest) == c.full[37]);
  CHECK(c.value_at_lag(1e6) == c.full[63]);
  CHECK(c.value_at_lag(-1e6) == c.full[0]);

  // Dense sampling bound for the interval maximum.
  for (const auto& [lo, hi] : {std::pair{-3.4, 2.7}, std::pair{10.0, 10.0}, std::pair{-40.0, -20.5}}) {
    double best = -1e300;
    for (int k = 0; k <= 4000; ++k) best = std::max(best, c.value_at_lag(lo + (hi - lo) * k / 4000.0));
    const auto [v, lag] = c.argmax_over_lags(lo, hi);
    CHECK(v >= best - 1e-12);
    CHECK(v == doctest::Approx(c.value_at_lag(lag)));
    CHECK(lag >= lo);
    CHECK(lag <= hi);
    CHECK(c.max_over_lags(lo, hi) == v);
  }
}

TEST_CASE("theoretical_tdoa_grid: hand example, bounds, antisymmetry") {
  const Grid g(5, 10.0, 10.0);
  const Vec3 a(1, 1, 1), b(4, 1, 1);
  const Heatmap t = theoretical_tdoa_grid(a, b, g, 1.0);
  REQUIRE(t.size() == 25);
  // Cell (0,0) centres at (1,1).
  CHECK(t[g.flat(0, 0)] == doctest::Approx(-3.0 / 343.0).epsilon(1e-12));
  CHECK(t.cwiseAbs().maxCoeff() <= 3.0 / 343.0 + 1e-15);
  CHECK((theoretical_tdoa_grid(b, a, g, 1.0) + t).cwiseAbs().maxCoeff() == 0.0);

  // Cells on the perpendicular bisector x = 2.5 of a symmetric pair read 0.
  const Grid g2(5, 5.0, 5.0);
  const Heatmap s = theoretical_tdoa_grid(Vec3(1, 2, 1), Vec3(4, 2, 1), g2, 1.0);
  for (int v = 0; v < 5; ++v) CHECK(std::abs(s[g2.flat(2, v)]) < 1e-15);
}

TEST_CASE("slf_project: linear mode matches per-cell lookup") {
  const Eigen::VectorXd x = white(8000, 11);
  const CorrelationVector c = gcc_phat(x, delayed(x, 7) + 0.5 * white(8000, 12), kFs);
  const Grid g = Grid::for_room(Vec3(4.5, 5.5, 3.0), 25);
  const Vec3 pi(1.0, 1.5, 1.2), pj(3.7, 4.1, 1.6);
  SlfOptions opt;
  opt.interpolation = LagInterpolation::Linear;
  const Heatmap h = slf_project(c, pi, pj, g, 1.4, opt);
  REQUIRE(h.size() == g.size());
  for (int u = 0; u < g.n; ++u) {
    for (int v = 0; v < g.n; ++v) {
      const Vec3 q(g.cell_center(u, v).x(), g.cell_center(u, v).y(), 1.4);
      const double lag = kFs * ((q - pi).norm() - (q - pj).norm()) / kSpeedOfSound;
      CHECK(h[g.flat(u, v)] == doctest::Approx(reference_lag_value(c.full, lag)).epsilon(1e-12));
    }
  }

  const Heatmap cm = slf_project(c, pi, pj, g, 1.4);
  CHECK((cm.array() >= h.array() - 1e-12).all());
  CHECK(slf_project(c, pi, pj, g, 1.4, 1.4) == cm);
  CHECK_THROWS_AS(slf_project(c, pi, pj, g, 2.0, 1.0), Error);

  CorrelationVector ones = c;
  ones.full.setOnes();
  for (auto mode : {LagInterpolation::Linear, LagInterpolation::Nearest, LagInterpolation::CellMax}) {
    opt.interpolation = mode;
    const Heatmap u = slf_project(ones, pi, pj, g, 1.4, opt);
    CHECK((u.array() == 1.0).all());
  }
}

TEST_CASE("slf_project: anechoic two-mic peak lies on the true hyperbola") {
  Scene s;
  s.room = {5.0, 4.0, 3.0, 0.3};
  s.source.position = Vec3(3.6, 2.9, 1.3);
  s.mics.positions = {Vec3(1.0, 1.0, 1.3), Vec3(2.5, 0.8, 1.3)};
  RirOptions direct;
  direct.reflections = false;
  const MultichannelSignal y = auralize(s, white(9000, 4), kFs, direct);
  const MultichannelFrame f = extract_frame(y, 500);
  const CorrelationVector c = gcc_phat(f.samples.col(0), f.samples.col(1), kFs);
  const Grid g = Grid::for_room(s.room.dims(), 25);
  SlfOptions opt;
  opt.interpolation = LagInterpolation::Linear;
  const Heatmap h = slf_project(c, s.mics[0], s.mics[1], g, 1.3, opt);
  const Heatmap tdoa = theoretical_tdoa_grid(s.mics[0], s.mics[1], g, 1.3);
  const double truth =
      ((s.source.position - s.mics[0]).norm() - (s.source.position - s.mics[1]).norm()) / kSpeedOfSound;
  Index best;
  h.maxCoeff(&best);
  const double nearest = (tdoa.array() - truth).abs().minCoeff();
  CHECK(kFs * std::abs(tdoa[best] - truth) <= kFs * nearest + 1.0);
}

TEST_CASE("heatmap export: CSV round trip and PGM layout") {
  const auto dir = std::filesystem::temp_directory_path() / "dmaloc_test_heatmap";
  std::filesystem::create_directories(dir);
  const Heatmap h = white(9, 2);
  write_heatmap_csv(dir / "h.csv", h, 3);
  CHECK(read_heatmap_csv(dir / "h.csv") == h);
  CHECK_THROWS_AS(write_heatmap_csv(dir / "bad.csv", h, 4), Error);

  write_heatmap_pgm(dir / "h.pgm", h, 3);
  std::ifstream in(dir / "h.pgm", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n3 3\n255\n";
  REQUIRE(bytes.size() == header.size() + 9);
  CHECK(bytes.substr(0, header.size()) == header);
  Index lo, hi;
  h.minCoeff(&lo);
  h.maxCoeff(&hi);
  CHECK(static_cast<unsigned char>(bytes[header.size() + lo]) == 0);
  CHECK(static_cast<unsigned char>(bytes[header.size() + hi]) == 255);
}
