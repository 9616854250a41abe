// dmaloc: dataset simulation, training, evaluation and single-example
// localization for distributed microphone arrays.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include "dmaloc/harness.hpp"
#include "dmaloc/wav.hpp"

namespace fs = std::filesystem;
using namespace dmaloc;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

int run_simulate(const GlobalOptions& g) {
  if (g.config.empty()) throw Error(ErrorKind::InvalidConfig, "simulate needs --config");
  if (g.out.empty()) throw Error(ErrorKind::InvalidArgument, "simulate needs --out");
  DatasetConfig config = dataset_config_from_json(read_json_file(g.config));
  if (g.seed) config.master_seed = *g.seed;
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest manifest = generate_dataset(config, g.out, log_line);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json summary = {{"manifest", (fs::path(g.out) / "manifest.json").string()},
                                    {"train", manifest.train.size()},
                                    {"val", manifest.val.size()},
                                    {"test", manifest.test.size()},
                                    {"skipped", manifest.skipped},
                                    {"seconds", secs}};
  std::cout << summary.dump() << std::endl;
  return 0;
}

struct TrainJob {
  fs::path dataset;
  FeatureConfig features;
  std::vector<int> f_layers, g_layers;
  std::uint64_t init_seed = 0;
  TrainConfig training;
  int threads = 0;
};

TrainJob train_job_from_json(const nlohmann::json& doc) {
  const ConfigObject root(doc, "");
  root.reject_unknown({"version", "dataset", "features", "model", "training", "threads"});
  if (root.has("version") && root.positive_int("version", 1) != 1) root.fail("version", "unsupported version");
  TrainJob job;
  job.dataset = root.string("dataset", "");
  if (job.dataset.empty()) root.fail("dataset", "missing required key");
  if (root.has("features")) job.features = feature_config_from_json(root.child("features"));
  const int cells = job.features.grid_n * job.features.grid_n;
  job.f_layers = job.g_layers = {cells, cells, cells};
  if (root.has("model")) {
    const ConfigObject model = root.child("model");
    model.reject_unknown({"f_layers", "g_layers", "init_seed"});
    job.f_layers = model.int_list("f_layers", job.f_layers, 1);
    job.g_layers = model.int_list("g_layers", job.g_layers, 1);
    if (job.f_layers.back() != cells) model.fail("f_layers", "last layer must equal grid_n^2");
    if (job.g_layers.back() != cells) model.fail("g_layers", "last layer must equal grid_n^2");
    job.init_seed = model.seed("init_seed", job.init_seed);
  }
  if (root.has("training")) job.training = train_config_from_json(root.child("training"));
  if (root.has("threads")) job.threads = root.positive_int("threads", 1);
  return job;
}

std::vector<TrainingExample> load_features(const DatasetManifest& dataset, Split split,
                                           const FeatureConfig& features, int threads) {
  const auto& entries = dataset.split(split);
  std::vector<TrainingExample> out(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t k) {
    const LoadedExample ex = load_example(dataset.root / entries[k].path);
    out[k] = make_training_example(features, extract_frame(ex.signals, features.frame_ms), ex.scene);
  });
  return out;
}

int run_train(const GlobalOptions& g) {
  if (g.config.empty()) throw Error(ErrorKind::InvalidConfig, "train needs --config");
  TrainJob job = train_job_from_json(read_json_file(g.config));
  if (g.seed) job.training.seed = *g.seed;
  const fs::path out = g.out.empty() ? fs::path("model.ckpt") : fs::path(g.out);

  const DatasetManifest dataset = load_manifest(job.dataset);
  const auto t0 = std::chrono::steady_clock::now();
  const auto train_set = load_features(dataset, Split::Train, job.features, job.threads);
  const auto val_set = load_features(dataset, Split::Val, job.features, job.threads);
  log_line("features: " + std::to_string(train_set.size()) + " train, " + std::to_string(val_set.size()) +
           " val");

  const RelNetModel init = make_relnet(job.features, job.f_layers, job.g_layers, job.init_seed);
  const TrainResult result = train(init, train_set, val_set, job.training, [](const EpochRecord& r) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %3d  train %.6f  val %.6f", r.epoch, r.train_loss, r.val_loss);
    log_line(line);
  });
  save_checkpoint(result.best, out);
  fs::path history = out;
  history += ".history.csv";
  write_history_csv(history, result.history);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json summary = {{"checkpoint", out.string()},
                                    {"history", history.string()},
                                    {"epochs", result.history.size()},
                                    {"best_epoch", result.best_epoch},
                                    {"early_stopped", result.early_stopped},
                                    {"seconds", secs}};
  std::cout << summary.dump() << std::endl;
  return 0;
}

struct EvalArgs {
  std::string method = "slf";
  std::string data;
  std::string split = "test";
  std::vector<std::string> checkpoints;
  int grid_n = 25;
  int heatmaps = 0;
  std::string heatmap_dir = "heatmaps";
  std::string interpolation = "cell-max";
};

LagInterpolation parse_interpolation(const std::string& name) { return interpolation_from_string(name); }

int run_eval(const GlobalOptions& g, const EvalArgs& a) {
  const Method method = method_from_string(a.method);
  if (a.data.empty()) throw Error(ErrorKind::InvalidArgument, "eval needs --data");
  Split split = Split::Test;
  if (a.split == "train") split = Split::Train;
  else if (a.split == "val") split = Split::Val;
  else if (a.split != "test") throw Error(ErrorKind::InvalidArgument, "unknown split " + a.split);

  EvalOptions options;
  options.grid_n = a.grid_n;
  options.classical.slf.interpolation = parse_interpolation(a.interpolation);
  options.heatmaps_first_k = a.heatmaps;
  options.heatmap_dir = a.heatmap_dir;
  if (is_neural(method)) {
    if (a.checkpoints.empty()) {
      throw Error(ErrorKind::MissingCheckpoint, std::string(to_string(method)) + " needs --checkpoint");
    }
    for (const auto& c : a.checkpoints) options.models.push_back(load_checkpoint(c));
    options.grid_n = options.models.front().grid_n();
    options.frame_ms = options.models.front().features.frame_ms;
  }
  const EvalReport report = evaluate(method, load_manifest(a.data), split, options);
  const fs::path out = g.out.empty() ? fs::path("report.csv") : fs::path(g.out);
  write_report_csv(out, report.rows);
  for (const auto& r : report.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-8s M=%d  n=%d  mean=%.4f m  std=%.4f m", r.method.c_str(), r.num_mics,
                  r.n_examples, r.mean_error_m, r.std_error_m);
    log_line(line);
  }
  std::cout << nlohmann::ordered_json{{"report", out.string()}, {"rows", report.rows.size()}}.dump() << std::endl;
  return 0;
}

struct LocalizeArgs {
  std::string method = "slf";
  std::string in;
  std::string wav;
  std::string scene;
  std::string checkpoint;
  int grid_n = 25;
  double frame_ms = 500.0;
  std::string emit_heatmap;
  std::string interpolation = "cell-max";
};

int run_localize(const LocalizeArgs& a) {
  const Method method = method_from_string(a.method);
  Scene scene;
  MultichannelSignal signals;
  if (!a.in.empty()) {
    LoadedExample ex = load_example(a.in);
    scene = std::move(ex.scene);
    signals = std::move(ex.signals);
  } else if (!a.wav.empty() && !a.scene.empty()) {
    scene = scene_from_json(read_json_file(a.scene));
    const WavData wav = read_wav(a.wav);
    signals = {wav.samples, wav.fs};
  } else {
    throw Error(ErrorKind::InvalidArgument, "localize needs --in <example dir> or --wav with --scene");
  }
  const MetadataVector meta = build_metadata(scene);

  std::optional<RelNetModel> model;
  int grid_n = a.grid_n;
  double frame_ms = a.frame_ms;
  if (is_neural(method)) {
    if (a.checkpoint.empty()) throw Error(ErrorKind::MissingCheckpoint, "GNN methods need --checkpoint");
    model = load_checkpoint(a.checkpoint);
    grid_n = model->grid_n();
    frame_ms = model->features.frame_ms;
  }
  ClassicalOptions classical;
  classical.slf.interpolation = parse_interpolation(a.interpolation);
  const Grid grid = Grid::for_room(meta.room(), grid_n);
  const MultichannelFrame frame = extract_frame(signals, frame_ms);
  const LocalizationResult result = localize(method, frame, meta, grid, classical, model ? &*model : nullptr);

  if (!a.emit_heatmap.empty()) {
    const fs::path path(a.emit_heatmap);
    if (path.extension() == ".pgm") {
      write_heatmap_pgm(path, result.heatmap, grid_n);
    } else {
      write_heatmap_csv(path, result.heatmap, grid_n);
    }
  }
  nlohmann::ordered_json out = {{"estimate_xy", {result.estimate.x(), result.estimate.y()}},
                                {"method", to_string(method)},
                                {"grid_n", grid_n}};
  std::cout << out.dump() << std::endl;
  return 0;
}

int run_render(const std::string& in, const GlobalOptions& g) {
  if (g.out.empty()) throw Error(ErrorKind::InvalidArgument, "render-heatmap needs --out");
  const Heatmap map = read_heatmap_csv(in);
  const int n = static_cast<int>(std::lround(std::sqrt(double(map.size()))));
  write_heatmap_pgm(g.out, map, n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sound source localization on distributed microphone arrays"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions global;
  std::uint64_t seed = 0;
  app.add_option("--config", global.config, "JSON configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", global.out, "Output path");

  auto* simulate = app.add_subcommand("simulate", "Generate a simulated dataset");
  auto* train_cmd = app.add_subcommand("train", "Train a relation-network localizer");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a method on a dataset split");
  eval->add_option("--method", eval_args.method, "tdoa | slf | gnn-gcc | gnn-slf")->required();
  eval->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval->add_option("--split", eval_args.split, "train | val | test");
  eval->add_option("--checkpoint", eval_args.checkpoints, "Checkpoint(s); several give mean/std across runs");
  eval->add_option("--grid-n", eval_args.grid_n, "Grid cells per side (classical methods)");
  eval->add_option("--heatmaps", eval_args.heatmaps, "Write PGM heatmaps for the first K examples");
  eval->add_option("--heatmap-dir", eval_args.heatmap_dir, "Directory for PGM heatmaps");
  eval->add_option("--interpolation", eval_args.interpolation, "SLF lag lookup: cell-max | linear | nearest");

  LocalizeArgs loc;
  auto* localize_cmd = app.add_subcommand("localize", "Localize the source of one recording");
  localize_cmd->add_option("--method", loc.method, "tdoa | slf | gnn-gcc | gnn-slf");
  localize_cmd->add_option("--in", loc.in, "Example directory (ch_XX.wav + scene.json)");
  localize_cmd->add_option("--wav", loc.wav, "Multichannel WAV (with --scene)");
  localize_cmd->add_option("--scene", loc.scene, "Scene JSON for --wav");
  localize_cmd->add_option("--checkpoint", loc.checkpoint, "Checkpoint for GNN methods");
  localize_cmd->add_option("--grid-n", loc.grid_n, "Grid cells per side");
  localize_cmd->add_option("--frame-ms", loc.frame_ms, "Frame length in ms");
  localize_cmd->add_option("--emit-heatmap", loc.emit_heatmap, "Write the heatmap (.csv or .pgm)");
  localize_cmd->add_option("--interpolation", loc.interpolation, "SLF lag lookup: cell-max | linear | nearest");

  std::string render_in;
  auto* render = app.add_subcommand("render-heatmap", "Convert a CSV heatmap to PGM");
  render->add_option("--in", render_in, "CSV heatmap")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (*seed_opt) global.seed = seed;

  try {
    if (*simulate) return run_simulate(global);
    if (*train_cmd) return run_train(global);
    if (*eval) return run_eval(global, eval_args);
    if (*localize_cmd) return run_localize(loc);
    if (*render) return run_render(render_in, global);
  } catch (const Error& e) {
    std::cerr << nlohmann::ordered_json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::ordered_json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    return 3;
  }
  return 1;
}
