#include <doctest.h>

#include <cmath>
#include <limits>

#include "dmaloc/classical.hpp"
#include "dmaloc/errors.hpp"
#include "dmaloc/harness.hpp"

using namespace dmaloc;

namespace {

SimulatedExample anechoic_example(std::uint64_t seed, int mics) {
  DatasetConfig cfg;
  cfg.reverberation = false;
  cfg.snr_db = kNoNoise;
  cfg.test.mic_counts = {mics};
  return simulate_example(cfg, Split::Test, seed);
}

MultichannelFrame frame_of(const SimulatedExample& ex) { return extract_frame(ex.signals, 500); }

}  // namespace

TEST_CASE("enumerate_pairs and canonical_mic_order") {
  const auto pairs = enumerate_pairs(4);
  REQUIRE(pairs.size() == 6);
  CHECK(pairs.front() == std::pair{0, 1});
  CHECK(pairs[2] == std::pair{0, 3});
  CHECK(pairs.back() == std::pair{2, 3});
  CHECK(enumerate_pairs(7).size() == 21);

  const MetadataVector meta =
      make_metadata({Vec3(3, 1, 1), Vec3(1, 2, 1), Vec3(1, 1, 2), Vec3(1, 1, 1)}, Vec3(5, 5, 3));
  CHECK(canonical_mic_order(meta) == std::vector<int>{3, 2, 1, 0});
}

TEST_CASE("peak_index: extremes, ties, NaN") {
  Heatmap h(6);
  h << 0.5, 2.0, -1.0, 2.0, -1.0, 0.0;
  CHECK(peak_index(h, PeakMode::Max) == 1);
  CHECK(peak_index(h, PeakMode::Min) == 2);
  const Grid g(2, 4.0, 4.0);
  Heatmap four(4);
  four << 0, 0, 3, 1;
  CHECK(pick_peak(four, PeakMode::Max, g) == Vec2(3.0, 1.0));
  h[4] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(peak_index(h, PeakMode::Max), Error);
}

TEST_CASE("two microphones on a single plane: maps equal the per-cell definitions") {
  const SimulatedExample ex = anechoic_example(3, 4);
  const MultichannelFrame full = frame_of(ex);
  MultichannelFrame frame = full;
  frame.samples = full.samples.leftCols(2);
  const MetadataVector meta = make_metadata({ex.scene.mics[0], ex.scene.mics[1]}, ex.scene.room.dims());
  const Grid grid = Grid::for_room(meta.room(), 25);
  ClassicalOptions opt;
  opt.height_slabs = 0;
  opt.refine = false;

  const double z = 0.5 * (ex.scene.mics[0].z() + ex.scene.mics[1].z());
  const CorrelationVector c = gcc_phat(frame.samples.col(0), frame.samples.col(1), frame.fs);
  const Heatmap tdoa = theoretical_tdoa_grid(meta.mic(0), meta.mic(1), grid, z);
  const double measured = c.peak_lag() / frame.fs;

  const LocalizationResult t = tdoa_localize(frame, meta, grid, opt);
  const LocalizationResult s = slf_localize(frame, meta, grid, opt);
  REQUIRE(t.heatmap.size() == grid.size());
  const Heatmap slf_ref = slf_project(c, meta.mic(0), meta.mic(1), grid, z, opt.slf);
  for (Index k = 0; k < grid.size(); ++k) {
    const double d = tdoa[k] - measured;
    CHECK(t.heatmap[k] == doctest::Approx(d * d).epsilon(1e-9).scale(1e-12));
    CHECK(s.heatmap[k] == doctest::Approx(slf_ref[k]).epsilon(1e-9));
  }
  CHECK(t.estimate == grid.cell_center(peak_index(t.heatmap, PeakMode::Min)));
  CHECK(s.estimate == grid.cell_center(peak_index(s.heatmap, PeakMode::Max)));

  opt.distance = TdoaDistance::Absolute;
  const LocalizationResult a = tdoa_localize(frame, meta, grid, opt);
  for (Index k = 0; k < grid.size(); ++k)
    CHECK(a.heatmap[k] == doctest::Approx(std::abs(tdoa[k] - measured)).epsilon(1e-9).scale(1e-12));
}

TEST_CASE("classical localizers: anechoic five-microphone scenes") {
  int slf_hits = 0, tdoa_hits = 0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const SimulatedExample ex = anechoic_example(seed, 5);
    const MetadataVector meta = build_metadata(ex.scene);
    const Grid grid = Grid::for_room(meta.room(), 25);
    const MultichannelFrame frame = frame_of(ex);
    const Vec2 truth = ex.scene.source_xy();
    const LocalizationResult s = slf_localize(frame, meta, grid);
    const LocalizationResult t = tdoa_localize(frame, meta, grid);
    slf_hits += (s.estimate - truth).norm() <= grid.cell_diagonal();
    tdoa_hits += (t.estimate - truth).norm() <= grid.cell_diagonal();
    CHECK((t.heatmap.array() >= 0.0).all());
    CHECK(s.heatmap.allFinite());
  }
  CHECK(slf_hits >= 19);
  CHECK(tdoa_hits >= 19);
}

TEST_CASE("classical localizers: bit-identical under microphone permutation") {
  DatasetConfig cfg;
  cfg.test.mic_counts = {6};
  const SimulatedExample ex = simulate_example(cfg, Split::Test, 77);
  const MetadataVector meta = build_metadata(ex.scene);
  const MultichannelFrame frame = frame_of(ex);
  const Grid grid = Grid::for_room(meta.room(), 25);
  const std::vector<int> order = {4, 1, 5, 0, 3, 2};
  MultichannelFrame shuffled = frame;
  for (int k = 0; k < 6; ++k) shuffled.samples.col(k) = frame.samples.col(order[static_cast<std::size_t>(k)]);
  const MetadataVector pmeta = meta.permuted(order);

  const LocalizationResult s0 = slf_localize(frame, meta, grid);
  const LocalizationResult s1 = slf_localize(shuffled, pmeta, grid);
  CHECK(s0.heatmap == s1.heatmap);
  CHECK(s0.estimate == s1.estimate);
  const LocalizationResult t0 = tdoa_localize(frame, meta, grid);
  const LocalizationResult t1 = tdoa_localize(shuffled, pmeta, grid);
  CHECK(t0.heatmap == t1.heatmap);
  CHECK(t0.estimate == t1.estimate);
}

TEST_CASE("classical localizers: refinement never scores a cell worse") {
  DatasetConfig cfg;
  cfg.test.mic_counts = {5};
  const SimulatedExample ex = simulate_example(cfg, Split::Test, 5);
  const MetadataVector meta = build_metadata(ex.scene);
  const MultichannelFrame frame = frame_of(ex);
  const Grid grid = Grid::for_room(meta.room(), 25);
  ClassicalOptions coarse;
  coarse.refine = false;
  const LocalizationResult t0 = tdoa_localize(frame, meta, grid, coarse);
  const LocalizationResult t1 = tdoa_localize(frame, meta, grid);
  CHECK(t1.heatmap[t1.peak_index] <= t0.heatmap[t0.peak_index]);
  CHECK((t1.heatmap.array() <= t0.heatmap.array() + 1e-15).all());
}

TEST_CASE("classical localizers: per-pair maps and argument checks") {
  const SimulatedExample ex = anechoic_example(8, 5);
  const MetadataVector meta = build_metadata(ex.scene);
  const MultichannelFrame frame = frame_of(ex);
  const Grid grid = Grid::for_room(meta.room(), 25);
  ClassicalOptions opt;
  opt.keep_pair_maps = true;
  const LocalizationResult s = slf_localize(frame, meta, grid, opt);
  REQUIRE(s.per_pair_maps.has_value());
  CHECK(s.per_pair_maps->size() == 10);
  for (const auto& m : *s.per_pair_maps) CHECK(m.size() == grid.size());
  CHECK_FALSE(slf_localize(frame, meta, grid).per_pair_maps.has_value());

  MultichannelFrame short_frame = frame;
  short_frame.samples = frame.samples.leftCols(4);
  try {
    slf_localize(short_frame, meta, grid);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
  MultichannelFrame one = frame;
  one.samples = frame.samples.leftCols(1);
  CHECK_THROWS_AS(tdoa_localize(one, make_metadata({meta.mic(0)}, meta.room()), grid), Error);
  opt.height_slabs = -1;
  CHECK_THROWS_AS(tdoa_localize(frame, meta, grid, opt), Error);
}
