// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.
//
//   acceptance [--work DIR] [--only 1,3,6] [--threads N]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dmaloc/harness.hpp"

namespace fs = std::filesystem;
using namespace dmaloc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int g_threads = 0;

// 1. GCC-PHAT delay recovery at 30 dB SNR.
Outcome gcc_delay_recovery() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  std::uniform_int_distribution<int> delay(-50, 50);
  std::normal_distribution<double> gauss;
  const Index n = 8000;
  int exact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = delay(rng);
    Eigen::VectorXd s(n + 100);
    for (auto& v : s) v = gauss(rng);
    MultichannelSignal x;
    x.samples.resize(n, 2);
    // x_i(t) = s(t - d), x_j(t) = s(t): tau_i - tau_j = d samples.
    x.samples.col(0) = s.segment(50 - d, n);
    x.samples.col(1) = s.segment(50, n);
    const MultichannelSignal noisy = add_noise(x, 30.0, 5000 + static_cast<std::uint64_t>(trial));
    const CorrelationVector c = gcc_phat(noisy.samples.col(0), noisy.samples.col(1), x.fs);
    exact += c.peak_lag() == double(d);
  }
  const double secs = seconds_since(t0);
  return {exact >= 990 && secs < 60.0,
          fmt("%d/1000 exact (need >= 990), %.1f s (limit 60 s)", exact, secs)};
}

// 2. Direct-path tap and Schroeder decay over 200 random scenes.
Outcome rir_physics() {
  int rirs = 0, direct_ok = 0, t60_ok = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Scene s = sample_scene({}, 20000 + seed);
    for (int m = 0; m < s.mics.size(); ++m) {
      const Rir rir = simulate_rir(s.room, s.source.position, s.mics[m], kDefaultSampleRate);
      const double dist = (s.source.position - s.mics[m]).norm();
      const Index expected = std::lround(kDefaultSampleRate * dist / kSpeedOfSound);
      Index first = 0;
      while (first < rir.taps.size() && rir.taps[first] == 0.0) ++first;
      direct_ok += first == expected;

      double energy = rir.taps.squaredNorm(), tail = energy;
      Index k = 0;
      while (k < rir.taps.size() && 10.0 * std::log10(tail / energy) > -60.0) {
        tail -= rir.taps[k] * rir.taps[k];
        ++k;
      }
      const double t60 = double(k) / kDefaultSampleRate;
      const double dev = std::abs(t60 - s.room.t60) / s.room.t60;
      worst = std::max(worst, dev);
      t60_ok += dev <= 0.20;
      ++rirs;
    }
  }
  return {direct_ok == rirs && t60_ok == rirs,
          fmt("direct tap exact %d/%d; -60 dB within 20%% of T60 %d/%d (worst deviation %.3f)", direct_ok,
              rirs, t60_ok, rirs, worst)};
}

// 3. Anechoic five-microphone scenes.
Outcome anechoic_oracle() {
  DatasetConfig cfg;
  cfg.master_seed = 303;
  cfg.reverberation = false;
  cfg.snr_db = kNoNoise;
  cfg.test.mic_counts = {5};
  std::vector<int> hit(200, 0);
  std::vector<double> err(200, 0.0);
  parallel_for(200, g_threads, [&](std::size_t k) {
    const SimulatedExample ex = simulate_example(cfg, Split::Test, example_seed(cfg.master_seed, Split::Test, k));
    const MetadataVector meta = build_metadata(ex.scene);
    const Grid grid = Grid::for_room(meta.room(), 25);
    const LocalizationResult r = slf_localize(extract_frame(ex.signals, 500), meta, grid);
    err[k] = (r.estimate - ex.scene.source_xy()).norm();
    hit[k] = err[k] <= 0.2 * std::sqrt(2.0) * ex.scene.room.width / 5.0;
  });
  const int hits = std::accumulate(hit.begin(), hit.end(), 0);
  const double mean = std::accumulate(err.begin(), err.end(), 0.0) / 200.0;
  return {hits >= 190, fmt("SLF within one cell diagonal in %d/200 scenes (need >= 190), mean error %.3f m",
                           hits, mean)};
}

// 4. Backprop against central differences.
Outcome gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(404);
  std::uniform_int_distribution<int> width(2, 7), depth(1, 3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-5;
  long checked = 0, skipped = 0, bad = 0;
  double worst = 0.0;
  for (int net = 0; net < 20; ++net) {
    MlpSpec spec;
    spec.input_size = width(rng);
    spec.layer_output_sizes.clear();
    const int n_layers = depth(rng) + 1;
    for (int l = 0; l < n_layers; ++l) spec.layer_output_sizes.push_back(width(rng));
    Mlp<double> mlp = Mlp<double>::random(spec, rng);
    for (auto& l : mlp.mutable_layers())
      for (auto& b : l.bias) b = 0.1 * u(rng);
    Eigen::MatrixXd x(spec.input_size, 3), target(spec.output_size(), 3);
    for (Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
    for (Index k = 0; k < target.size(); ++k) target.data()[k] = u(rng);

    auto loss = [&](std::vector<bool>* mask) {
      MlpCache<double> cache;
      const Eigen::MatrixXd out = mlp_forward(mlp, x, &cache);
      if (mask) {
        mask->clear();
        for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
          for (Index k = 0; k < cache.pre[l].size(); ++k) mask->push_back(cache.pre[l].data()[k] > 0);
      }
      return 0.5 * (out - target).squaredNorm();
    };
    MlpCache<double> cache;
    const Eigen::MatrixXd out = mlp_forward(mlp, x, &cache);
    const MlpGradients<double> grads = mlp_backward(mlp, cache, out - target);
    std::vector<bool> base, mp, mm;
    loss(&base);

    auto& layers = mlp.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto visit = [&](double& w, double analytic) {
        const double w0 = w;
        w = w0 + h;
        const double fp = loss(&mp);
        w = w0 - h;
        const double fm = loss(&mm);
        w = w0;
        if (mp != base || mm != base) {
          ++skipped;
          return;
        }
        const double numeric = (fp - fm) / (2.0 * h);
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, rel);
        bad += rel >= 1e-4;
        ++checked;
      };
      for (Index k = 0; k < layers[l].weight.size(); ++k) visit(layers[l].weight.data()[k], grads.weight[l].data()[k]);
      for (Index k = 0; k < layers[l].bias.size(); ++k) visit(layers[l].bias.data()[k], grads.bias[l][k]);
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && checked > 0 && secs < 60.0,
          fmt("%ld parameters checked, %ld at kinks skipped, worst relative error %.2e (limit 1e-4), %.1f s",
              checked, skipped, worst, secs)};
}

// 5. A checkpoint trained on {5,7} runs on M = 4..7; argmax ignores mic order.
Outcome variable_m(const fs::path& work) {
  DatasetConfig cfg;
  cfg.master_seed = 505;
  cfg.train = {120, {5, 7}};
  cfg.val = {30, {5, 7}};
  cfg.test = {0, {4, 5, 6, 7}};
  cfg.threads = g_threads;
  const fs::path dir = work / "c5";
  fs::remove_all(dir);
  const DatasetManifest m = generate_dataset(cfg, dir);
  FeatureConfig fc;
  auto load = [&](Split split) {
    const auto& entries = m.split(split);
    std::vector<TrainingExample> out(entries.size());
    parallel_for(entries.size(), g_threads, [&](std::size_t k) {
      const LoadedExample ex = load_example(dir / entries[k].path);
      out[k] = make_training_example(fc, extract_frame(ex.signals, fc.frame_ms), ex.scene);
    });
    return out;
  };
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.seed = 5;
  const TrainResult r = train(make_relnet(fc, 55), load(Split::Train), load(Split::Val), tc);
  save_checkpoint(r.best, dir / "model.ckpt");
  const RelNetModel model = load_checkpoint(dir / "model.ckpt");

  int runs = 0, finite = 0, invariant = 0, perms = 0;
  Rng rng(5050);
  for (int mics = 4; mics <= 7; ++mics) {
    DatasetConfig test = cfg;
    test.test.mic_counts = {mics};
    for (std::uint64_t k = 0; k < 10; ++k) {
      const SimulatedExample ex = simulate_example(test, Split::Test, 90000 + 100 * mics + k);
      const MultichannelFrame frame = extract_frame(ex.signals, fc.frame_ms);
      const MetadataVector meta = build_metadata(ex.scene);
      const Grid grid = Grid::for_room(meta.room(), model.grid_n());
      const LocalizationResult base = gnn_localize(model, frame, meta, grid);
      ++runs;
      finite += base.heatmap.size() == 625 && base.heatmap.allFinite();
      for (int p = 0; p < 3; ++p) {
        std::vector<int> order(static_cast<std::size_t>(mics));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        MultichannelFrame shuffled = frame;
        for (int c = 0; c < mics; ++c) shuffled.samples.col(c) = frame.samples.col(order[static_cast<std::size_t>(c)]);
        invariant += gnn_localize(model, shuffled, meta.permuted(order), grid).peak_index == base.peak_index;
        ++perms;
      }
    }
  }
  return {finite == runs && invariant == perms,
          fmt("trained on {5,7}; finite 625-cell output on %d/%d scenes with M in {4,5,6,7}; argmax unchanged "
              "under %d/%d random mic permutations",
              finite, runs, invariant, perms)};
}

// 6. Desk-scale ordering GNN-SLF < SLF < TDOA.
struct Reproduction {
  Outcome outcome;
  std::string info;
};

Reproduction reproduction(const fs::path& work) {
  DatasetConfig cfg;
  cfg.master_seed = 606;
  cfg.train = {2000, {5, 7}};
  cfg.val = {400, {5, 7}};
  // Every test scene has 7 microphones and is evaluated on its first M, so
  // all four microphone counts see the same 500 rooms and sources.
  cfg.test = {500, {7}};
  cfg.threads = g_threads;
  const fs::path dir = work / "c6";

  const auto t_gen = Clock::now();
  DatasetManifest m;
  if (fs::exists(dir / "manifest.json") && fs::exists(dir / "config.json") &&
      slurp(dir / "config.json") == to_json(cfg).dump(2)) {
    m = load_manifest(dir);
  } else {
    fs::remove_all(dir);
    m = generate_dataset(cfg, dir);
    std::ofstream(dir / "config.json") << to_json(cfg).dump(2);
  }
  const double gen_secs = seconds_since(t_gen);

  FeatureConfig fc;
  const auto t_train = Clock::now();
  auto load = [&](Split split) {
    const auto& entries = m.split(split);
    std::vector<TrainingExample> out(entries.size());
    parallel_for(entries.size(), g_threads, [&](std::size_t k) {
      const LoadedExample ex = load_example(dir / entries[k].path);
      out[k] = make_training_example(fc, extract_frame(ex.signals, fc.frame_ms), ex.scene);
    });
    return out;
  };
  const auto train_set = load(Split::Train);
  const auto val_set = load(Split::Val);
  TrainConfig tc;
  tc.seed = 6;
  const TrainResult r = train(make_relnet(fc, 66), train_set, val_set, tc);
  const double train_secs = seconds_since(t_train);
  save_checkpoint(r.best, dir / "gnn_slf.ckpt");

  const auto& test = m.split(Split::Test);
  std::vector<LoadedExample> loaded(test.size());
  parallel_for(test.size(), g_threads, [&](std::size_t k) { loaded[k] = load_example(dir / test[k].path); });

  ClassicalOptions plane;
  plane.height_slabs = 0;
  plane.refine = false;
  plane.slf.interpolation = LagInterpolation::Linear;

  double err[4][5] = {};  // [M-4][tdoa, slf, gnn, slf single plane, tdoa single plane]
  for (int mics = 4; mics <= 7; ++mics) {
    std::vector<std::array<double, 5>> rows(loaded.size());
    parallel_for(loaded.size(), g_threads, [&](std::size_t k) {
      MultichannelSignal sig = loaded[k].signals;
      sig.samples = sig.samples.leftCols(mics).eval();
      Scene scene = loaded[k].scene;
      scene.mics.positions.resize(static_cast<std::size_t>(mics));
      const MultichannelFrame frame = extract_frame(sig, fc.frame_ms);
      const MetadataVector meta = build_metadata(scene);
      const Grid grid = Grid::for_room(meta.room(), 25);
      const Vec2 truth = scene.source_xy();
      rows[k] = {(tdoa_localize(frame, meta, grid).estimate - truth).norm(),
                 (slf_localize(frame, meta, grid).estimate - truth).norm(),
                 (gnn_localize(r.best, frame, meta, grid).estimate - truth).norm(),
                 (slf_localize(frame, meta, grid, plane).estimate - truth).norm(),
                 (tdoa_localize(frame, meta, grid, plane).estimate - truth).norm()};
    });
    for (const auto& row : rows)
      for (int c = 0; c < 5; ++c) err[mics - 4][c] += row[static_cast<std::size_t>(c)] / double(rows.size());
  }

  bool gnn_beats_slf = true, slf_beats_tdoa = true;
  std::ostringstream table, info;
  for (int k = 0; k < 4; ++k) {
    gnn_beats_slf = gnn_beats_slf && err[k][2] < err[k][1];
    slf_beats_tdoa = slf_beats_tdoa && err[k][1] < err[k][0];
    table << fmt(" M=%d tdoa %.3f slf %.3f gnn-slf %.3f;", k + 4, err[k][0], err[k][1], err[k][2]);
    info << fmt(" M=%d slf %.3f tdoa %.3f;", k + 4, err[k][3], err[k][4]);
  }
  const double gain = 1.0 - err[0][2] / err[0][1];
  const bool in_budget = train_secs <= 3600.0;
  Reproduction out;
  out.outcome.pass = gnn_beats_slf && gain >= 0.10 && slf_beats_tdoa && in_budget;
  out.outcome.detail =
      fmt("mean error (m):%s GNN-SLF < SLF for all M: %s; M=4 improvement %.1f%% (need >= 10%%); "
          "SLF < TDOA for all M: %s; features+training %.0f s on %d thread(s) (limit 3600 s, %d epochs); "
          "simulation %.0f s",
          table.str().c_str(), gnn_beats_slf ? "yes" : "no", 100.0 * gain, slf_beats_tdoa ? "yes" : "no",
          train_secs, g_threads, int(r.history.size()), gen_secs);
  out.info = "single-plane linear-lookup baselines, mean error (m):" + info.str();
  return out;
}

// 7. Target-map law.
Outcome target_law() {
  const Grid square(25, 5.0, 5.0);
  const Heatmap a = target_map(square.cell_center(12, 7), square);
  const bool at_centre = a[square.flat(12, 7)] == 1.0;
  const double one_metre = a[square.flat(17, 7)];  // five 0.2 m cells away
  const bool e_inv = std::abs(one_metre - std::exp(-1.0)) <= 1e-9;

  Rng rng(707);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int nearest_ok = 0, range_ok = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Grid g(25, 3.0 + 3.0 * u(rng), 3.0 + 3.0 * u(rng));
    const Vec2 p(g.width * u(rng), g.length * u(rng));
    const Heatmap y = target_map(p, g);
    Index best, nearest = 0;
    y.maxCoeff(&best);
    double dmin = 1e300;
    for (Index k = 0; k < g.size(); ++k) {
      const double d = (g.cell_center(k) - p).norm();
      if (d < dmin) {
        dmin = d;
        nearest = k;
      }
    }
    nearest_ok += best == nearest;
    range_ok += (y.array() > 0.0).all() && (y.array() <= 1.0).all();
  }
  return {at_centre && e_inv && nearest_ok == trials && range_ok == trials,
          fmt("y=1 at coincident centre: %s; y(1 m)-1/e = %.1e (limit 1e-9); argmax nearest %d/%d; "
              "values in (0,1] %d/%d",
              at_centre ? "yes" : "no", one_metre - std::exp(-1.0), nearest_ok, trials, range_ok, trials)};
}

// 8. Same master seed gives identical scenes and training history.
Outcome determinism(const fs::path& work) {
  DatasetConfig cfg;
  cfg.master_seed = 808;
  cfg.train = {24, {5, 7}};
  cfg.val = {8, {5, 7}};
  cfg.test = {16, {4, 5, 6, 7}};
  cfg.threads = g_threads;
  const fs::path a = work / "c8a", b = work / "c8b";
  fs::remove_all(a);
  fs::remove_all(b);
  const DatasetManifest ma = generate_dataset(cfg, a);
  const DatasetManifest mb = generate_dataset(cfg, b);

  int scenes = 0, same = 0;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    for (std::size_t k = 0; k < ma.split(s).size(); ++k) {
      ++scenes;
      same += ma.split(s)[k].path == mb.split(s)[k].path &&
              slurp(a / ma.split(s)[k].path / "scene.json") == slurp(b / mb.split(s)[k].path / "scene.json");
    }
  }
  const bool manifest_same = slurp(a / "manifest.json") == slurp(b / "manifest.json");

  FeatureConfig fc;
  auto history = [&](const DatasetManifest& m, const fs::path& dir) {
    auto load = [&](Split split) {
      std::vector<TrainingExample> out;
      for (const auto& e : m.split(split)) {
        const LoadedExample ex = load_example(dir / e.path);
        out.push_back(make_training_example(fc, extract_frame(ex.signals, fc.frame_ms), ex.scene));
      }
      return out;
    };
    TrainConfig tc;
    tc.max_epochs = 4;
    tc.seed = 8;
    return train(make_relnet(fc, 88), load(Split::Train), load(Split::Val), tc).history;
  };
  const auto ha = history(ma, a), hb = history(mb, b);
  bool same_history = ha.size() == hb.size();
  for (std::size_t k = 0; same_history && k < ha.size(); ++k)
    same_history = ha[k].train_loss == hb[k].train_loss && ha[k].val_loss == hb[k].val_loss;

  return {same == scenes && manifest_same && same_history,
          fmt("scene JSON byte-identical %d/%d, manifest identical: %s, %zu-epoch loss history bit-identical: %s",
              same, scenes, manifest_same ? "yes" : "no", ha.size(), same_history ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for generated datasets");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--threads", g_threads, "Worker threads (0 = all cores)");
  CLI11_PARSE(app, argc, argv);
  if (g_threads <= 0) g_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  fs::create_directories(work);

  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int k) { return selected.empty() || selected.count(k); };

  int failures = 0;
  auto report = [&](int k, const char* name, const std::function<Outcome()>& run) {
    if (!wanted(k)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << k << " " << name << ": " << o.detail
              << fmt("  [%.1f s]", seconds_since(t0)) << std::endl;
  };

  report(1, "gcc-phat delay recovery", gcc_delay_recovery);
  report(2, "rir physics", rir_physics);
  report(3, "anechoic slf oracle", anechoic_oracle);
  report(4, "gradient correctness", gradient_check);
  report(5, "variable-M contract", [&] { return variable_m(work); });
  std::string info;
  report(6, "desk-scale ordering", [&] {
    Reproduction r = reproduction(work);
    info = r.info;
    return r.outcome;
  });
  if (!info.empty()) std::cout << "info  criterion 6 " << info << std::endl;
  report(7, "target-map law", target_law);
  report(8, "determinism", [&] { return determinism(work); });
  return failures == 0 ? 0 : 1;
}
