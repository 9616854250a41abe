#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmaloc/classical.hpp"
#include "dmaloc/config.hpp"
#include "dmaloc/relnet.hpp"
#include "dmaloc/room_acoustics.hpp"

namespace dmaloc {

enum class Split { Train, Val, Test };
std::string_view to_string(Split split);

struct SplitConfig {
  int count = 0;
  std::vector<int> mic_counts;
};

/// Dataset generation settings. Defaults reproduce the full-size recipe
/// (15000 / 5000 / 10000 examples, 30 dB SNR, {5,7} train, {4,5,6,7} test).
struct DatasetConfig {
  std::uint64_t master_seed = 0;
  double fs = kDefaultSampleRate;
  double source_duration_s = 1.0;
  double snr_db = 30.0;  // kNoNoise disables noise
  bool reverberation = true;
  SourceSignalConfig source_signal;
  SceneDistribution scene;  // mic_counts comes from the split
  SplitConfig train{15000, {5, 7}};
  SplitConfig val{5000, {5, 7}};
  SplitConfig test{10000, {4, 5, 6, 7}};
  int threads = 0;  // 0 = hardware concurrency

  const SplitConfig& split(Split s) const;
};

inline constexpr int kDatasetConfigVersion = 1;
DatasetConfig dataset_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const DatasetConfig& config);

/// Seeds of different splits never collide for counts below 10^8.
std::uint64_t example_seed(std::uint64_t master_seed, Split split, std::uint64_t index);

struct SimulatedExample {
  Scene scene;
  MultichannelSignal signals;
};

/// sample_scene -> provide_source_signal -> auralize -> add_noise.
SimulatedExample simulate_example(const DatasetConfig& config, Split split, std::uint64_t seed);

struct ManifestEntry {
  std::string path;  // relative to the dataset root
  int num_mics = 0;
  Vec3 room = Vec3::Zero();
  Vec2 source_xy = Vec2::Zero();
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::uint64_t master_seed = 0;
  double fs = kDefaultSampleRate;
  std::vector<ManifestEntry> train, val, test;
  int skipped = 0;  // infeasible scenes

  const std::vector<ManifestEntry>& split(Split s) const;
  std::vector<ManifestEntry>& split(Split s);
};

/// Writes <out>/<split>/<index>/{ch_00.wav, ..., scene.json} and <out>/manifest.json.
DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir,
                                 const std::function<void(const std::string&)>& log = {});
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);

struct LoadedExample {
  Scene scene;
  MultichannelSignal signals;
};

/// Reads ch_XX.wav (one per microphone) and scene.json from an example directory.
LoadedExample load_example(const std::filesystem::path& example_dir);

/// Calls body(k) for k in [0, count); results must be written by index.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

enum class Method { Tdoa, Slf, GnnGcc, GnnSlf };
std::string_view to_string(Method method);
Method method_from_string(std::string_view name);
bool is_neural(Method method);

double mean_euclid_error(std::span<const Vec2> estimates, std::span<const Vec2> truths);

LocalizationResult localize(Method method, const MultichannelFrame& frame, const MetadataVector& meta,
                            const Grid& grid, const ClassicalOptions& classical,
                            const RelNetModel* model);

struct EvalInput {
  MultichannelFrame frame;
  MetadataVector meta;
  Vec2 truth = Vec2::Zero();
};

struct EvalRow {
  std::string method;
  int num_mics = 0;
  int n_examples = 0;
  double mean_error_m = 0.0;
  double std_error_m = 0.0;
};

/// Per-microphone-count mean error. With one model (or a classical method)
/// std_error_m is the per-example standard deviation; with several models it
/// is the standard deviation of the per-model means.
struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::vector<double>> errors;  // [model][example]
};

struct EvalOptions {
  int grid_n = 25;
  double frame_ms = 500.0;
  ClassicalOptions classical;
  std::vector<RelNetModel> models;  // required for GNN methods
  int threads = 0;
  int heatmaps_first_k = 0;
  std::filesystem::path heatmap_dir;
};

/// `fetch(k)` supplies example k; it may be called concurrently.
EvalReport evaluate_stream(Method method, std::size_t count,
                           const std::function<EvalInput(std::size_t)>& fetch, const EvalOptions& options);
EvalReport evaluate_inputs(Method method, std::span<const EvalInput> inputs, const EvalOptions& options);
EvalReport evaluate(Method method, const DatasetManifest& dataset, Split split, const EvalOptions& options);

void write_report_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows);

}  // namespace dmaloc
