#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "dmaloc/harness.hpp"
#include "dmaloc/wav.hpp"

namespace dmaloc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

const SplitConfig& DatasetConfig::split(Split s) const {
  return s == Split::Train ? train : (s == Split::Val ? val : test);
}

const std::vector<ManifestEntry>& DatasetManifest::split(Split s) const {
  return s == Split::Train ? train : (s == Split::Val ? val : test);
}
std::vector<ManifestEntry>& DatasetManifest::split(Split s) {
  return s == Split::Train ? train : (s == Split::Val ? val : test);
}

namespace {

constexpr Split kSplits[] = {Split::Train, Split::Val, Split::Test};

SplitConfig split_from_json(const ConfigObject& obj, const SplitConfig& fallback) {
  obj.reject_unknown({"count", "mic_counts"});
  SplitConfig s = fallback;
  if (obj.has("count")) {
    const json& v = obj.raw("count");
    if (!v.is_number_integer() || v.get<long long>() < 0) obj.fail("count", "expected a non-negative integer");
    s.count = v.get<int>();
  }
  s.mic_counts = obj.int_list("mic_counts", s.mic_counts, 2);
  return s;
}

std::string example_dir_name(Split split, std::size_t index) {
  std::ostringstream name;
  name << to_string(split) << '/' << std::setw(6) << std::setfill('0') << index;
  return name.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

std::string channel_file(int m) {
  std::ostringstream name;
  name << "ch_" << std::setw(2) << std::setfill('0') << m << ".wav";
  return name.str();
}

}  // namespace

DatasetConfig dataset_config_from_json(const json& doc) {
  const ConfigObject root(doc, "");
  root.reject_unknown({"version", "master_seed", "fs", "source_duration_s", "snr_db", "reverberation",
                       "source_signal", "scene", "splits", "threads"});
  DatasetConfig c;
  if (root.has("version") && root.positive_int("version", 1) != kDatasetConfigVersion) {
    root.fail("version", "unsupported config version");
  }
  c.master_seed = root.seed("master_seed", c.master_seed);
  c.fs = root.positive("fs", c.fs);
  c.source_duration_s = root.positive("source_duration_s", c.source_duration_s);
  if (root.has("snr_db")) {
    const json& v = root.raw("snr_db");
    if (v.is_null()) {
      c.snr_db = kNoNoise;
    } else if (v.is_number()) {
      c.snr_db = v.get<double>();
    } else {
      root.fail("snr_db", "expected a number or null (no noise)");
    }
  }
  c.reverberation = root.boolean("reverberation", c.reverberation);
  if (root.has("source_signal")) {
    const ConfigObject src = root.child("source_signal");
    src.reject_unknown({"kind", "corpus_dir"});
    const std::string kind = src.string("kind", "synthetic");
    if (kind == "synthetic") {
      c.source_signal.kind = SourceSignalConfig::Kind::Synthetic;
    } else if (kind == "corpus") {
      c.source_signal.kind = SourceSignalConfig::Kind::Corpus;
      c.source_signal.corpus_dir = src.string("corpus_dir", "");
      if (c.source_signal.corpus_dir.empty()) src.fail("corpus_dir", "required when kind is corpus");
    } else {
      src.fail("kind", "expected \"synthetic\" or \"corpus\"");
    }
  }
  if (root.has("scene")) c.scene = scene_distribution_from_json(root.child("scene"));
  if (root.has("splits")) {
    const ConfigObject splits = root.child("splits");
    splits.reject_unknown({"train", "val", "test"});
    if (splits.has("train")) c.train = split_from_json(splits.child("train"), c.train);
    if (splits.has("val")) c.val = split_from_json(splits.child("val"), c.val);
    if (splits.has("test")) c.test = split_from_json(splits.child("test"), c.test);
  }
  if (root.has("threads")) {
    const json& v = root.raw("threads");
    if (!v.is_number_integer() || v.get<long long>() < 0) root.fail("threads", "expected a non-negative integer");
    c.threads = v.get<int>();
  }
  try {
    SceneDistribution probe = c.scene;
    probe.mic_counts = c.train.mic_counts;
    probe.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("/scene: ") + e.what());
  }
  return c;
}

nlohmann::ordered_json to_json(const DatasetConfig& c) {
  nlohmann::ordered_json doc;
  doc["version"] = kDatasetConfigVersion;
  doc["master_seed"] = c.master_seed;
  doc["fs"] = c.fs;
  doc["source_duration_s"] = c.source_duration_s;
  doc["snr_db"] = std::isinf(c.snr_db) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(c.snr_db);
  doc["reverberation"] = c.reverberation;
  doc["source_signal"] = {
      {"kind", c.source_signal.kind == SourceSignalConfig::Kind::Synthetic ? "synthetic" : "corpus"},
      {"corpus_dir", c.source_signal.corpus_dir.string()}};
  const auto& d = c.scene;
  doc["scene"] = {{"width", {d.width_min, d.width_max}},
                  {"length", {d.length_min, d.length_max}},
                  {"height", {d.height_min, d.height_max}},
                  {"t60", {d.t60_min, d.t60_max}},
                  {"min_separation", d.min_separation},
                  {"max_attempts", d.max_attempts}};
  for (Split s : kSplits) {
    doc["splits"][std::string(to_string(s))] = {{"count", c.split(s).count},
                                                {"mic_counts", c.split(s).mic_counts}};
  }
  doc["threads"] = c.threads;
  return doc;
}

std::uint64_t example_seed(std::uint64_t master_seed, Split split, std::uint64_t index) {
  constexpr std::uint64_t kSplitStride = 100'000'000ULL;
  return master_seed * 1'000'000'000ULL + static_cast<std::uint64_t>(split) * kSplitStride + index;
}

SimulatedExample simulate_example(const DatasetConfig& config, Split split, std::uint64_t seed) {
  SceneDistribution dist = config.scene;
  dist.mic_counts = config.split(split).mic_counts;
  SimulatedExample ex;
  ex.scene = sample_scene(dist, seed);
  const SourceSignal source =
      provide_source_signal(config.source_signal, config.source_duration_s, config.fs, derive_seed(seed, 1));
  ex.scene.source.signal_id = source.id;
  RirOptions rir;
  rir.reflections = config.reverberation;
  ex.signals = add_noise(auralize(ex.scene, source.samples, config.fs, rir), config.snr_db,
                         derive_seed(seed, 2));
  return ex;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k; (k = next.fetch_add(1)) < count;) {
        try {
          body(k);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

DatasetManifest generate_dataset(const DatasetConfig& config, const fs::path& out_dir,
                                 const std::function<void(const std::string&)>& log) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.master_seed = config.master_seed;
  manifest.fs = config.fs;

  for (Split split : kSplits) {
    const auto wanted = static_cast<std::size_t>(config.split(split).count);
    auto& entries = manifest.split(split);
    std::size_t next_index = 0;
    const std::size_t max_index = wanted * 10 + 100;
    while (entries.size() < wanted && next_index < max_index) {
      const std::size_t batch = wanted - entries.size();
      std::vector<std::optional<ManifestEntry>> results(batch);
      parallel_for(batch, config.threads, [&](std::size_t k) {
        const std::size_t index = next_index + k;
        const std::uint64_t seed = example_seed(config.master_seed, split, index);
        SimulatedExample ex;
        try {
          ex = simulate_example(config, split, seed);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::PlacementInfeasible || e.kind() == ErrorKind::InfeasibleAbsorption) return;
          throw;
        }
        const std::string rel = example_dir_name(split, index);
        const fs::path dir = out_dir / rel;
        fs::create_directories(dir);
        for (int m = 0; m < ex.signals.num_channels(); ++m) {
          write_wav(dir / channel_file(m), ex.signals.samples.col(m), ex.signals.fs);
        }
        write_text(dir / "scene.json", dump_scene(ex.scene));
        results[k] = ManifestEntry{rel, ex.scene.mics.size(), ex.scene.room.dims(), ex.scene.source_xy(), seed};
      });
      for (auto& r : results) {
        if (r) {
          entries.push_back(std::move(*r));
        } else {
          ++manifest.skipped;
        }
      }
      next_index += batch;
    }
    if (log) {
      log(std::string(to_string(split)) + ": " + std::to_string(entries.size()) + " examples");
    }
    if (entries.size() < wanted) {
      throw Error(ErrorKind::PlacementInfeasible,
                  std::string(to_string(split)) + ": too many infeasible scenes");
    }
  }
  if (log && manifest.skipped > 0) log("skipped " + std::to_string(manifest.skipped) + " infeasible scenes");
  nlohmann::ordered_json cfg = to_json(config);
  write_manifest(manifest, out_dir / "manifest.json");
  write_text(out_dir / "config.json", cfg.dump(2) + "\n");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  nlohmann::ordered_json doc;
  doc["version"] = kDatasetConfigVersion;
  doc["master_seed"] = manifest.master_seed;
  doc["fs"] = manifest.fs;
  doc["skipped"] = manifest.skipped;
  for (Split s : kSplits) doc["counts"][std::string(to_string(s))] = manifest.split(s).size();
  for (Split s : kSplits) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& e : manifest.split(s)) {
      list.push_back({{"path", e.path},
                      {"num_mics", e.num_mics},
                      {"room", {e.room.x(), e.room.y(), e.room.z()}},
                      {"source_xy", {e.source_xy.x(), e.source_xy.y()}},
                      {"seed", e.seed}});
    }
    doc["splits"][std::string(to_string(s))] = std::move(list);
  }
  write_text(path, doc.dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& dataset_dir) {
  const json doc = read_json_file(dataset_dir / "manifest.json");
  DatasetManifest manifest;
  manifest.root = dataset_dir;
  try {
    manifest.master_seed = doc.at("master_seed").get<std::uint64_t>();
    manifest.fs = doc.at("fs").get<double>();
    manifest.skipped = doc.value("skipped", 0);
    for (Split s : kSplits) {
      const std::string key(to_string(s));
      if (!doc.at("splits").contains(key)) continue;
      for (const auto& e : doc["splits"][key]) {
        ManifestEntry entry;
        entry.path = e.at("path").get<std::string>();
        entry.num_mics = e.at("num_mics").get<int>();
        const auto& r = e.at("room");
        entry.room = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        const auto& p = e.at("source_xy");
        entry.source_xy = {p.at(0).get<double>(), p.at(1).get<double>()};
        entry.seed = e.at("seed").get<std::uint64_t>();
        manifest.split(s).push_back(std::move(entry));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::UnsupportedFormat, (dataset_dir / "manifest.json").string() + ": " + e.what());
  }
  return manifest;
}

LoadedExample load_example(const fs::path& example_dir) {
  LoadedExample ex;
  ex.scene = scene_from_json(read_json_file(example_dir / "scene.json"));
  const int m = ex.scene.mics.size();
  if (m < 2) throw Error(ErrorKind::UnsupportedFormat, example_dir.string() + ": scene has fewer than 2 mics");
  for (int k = 0; k < m; ++k) {
    const WavData wav = read_wav(example_dir / channel_file(k));
    if (wav.samples.cols() != 1) {
      throw Error(ErrorKind::UnsupportedFormat, example_dir.string() + ": channel files must be mono");
    }
    if (k == 0) {
      ex.signals.fs = wav.fs;
      ex.signals.samples.resize(wav.samples.rows(), m);
    } else if (wav.fs != ex.signals.fs || wav.samples.rows() != ex.signals.length()) {
      throw Error(ErrorKind::DimensionMismatch, example_dir.string() + ": channel lengths or rates differ");
    }
    ex.signals.samples.col(k) = wav.samples.col(0);
  }
  return ex;
}

}  // namespace dmaloc
