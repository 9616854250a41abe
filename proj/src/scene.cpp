#include "dmaloc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmaloc/errors.hpp"

namespace dmaloc {
namespace {

void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

bool inside_with_margin(const Vec3& p, const Vec3& dims, double margin) {
  return (p.array() >= margin).all() && (p.array() <= dims.array() - margin).all();
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void RoomSpec::validate() const {
  require(width > 0 && length > 0 && height > 0, ErrorKind::InvalidArgument,
          "room dimensions must be positive");
  require(t60 > 0, ErrorKind::InvalidArgument, "t60 must be positive");
}

void SceneDistribution::validate() const {
  auto range = [](double lo, double hi, const char* name) {
    require(lo > 0 && lo <= hi, ErrorKind::InvalidConfig,
            std::string("invalid range for ") + name);
  };
  range(width_min, width_max, "width");
  range(length_min, length_max, "length");
  range(height_min, height_max, "height");
  range(t60_min, t60_max, "t60");
  require(!mic_counts.empty(), ErrorKind::InvalidConfig, "mic_counts is empty");
  for (int m : mic_counts)
    require(m >= 2, ErrorKind::InvalidConfig, "mic counts must be >= 2");
  require(min_separation >= 0, ErrorKind::InvalidConfig, "min_separation must be >= 0");
  require(max_attempts > 0, ErrorKind::InvalidConfig, "max_attempts must be positive");
  require(2 * min_separation < std::min({width_max, length_max, height_max}),
          ErrorKind::InvalidConfig, "min_separation leaves no interior volume");
}

Scene sample_scene(const SceneDistribution& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);

  Scene scene;
  scene.seed = seed;
  scene.room.width = uniform(rng, config.width_min, config.width_max);
  scene.room.length = uniform(rng, config.length_min, config.length_max);
  scene.room.height = uniform(rng, config.height_min, config.height_max);
  scene.room.t60 = uniform(rng, config.t60_min, config.t60_max);

  const auto pick = std::uniform_int_distribution<std::size_t>(0, config.mic_counts.size() - 1)(rng);
  const int num_mics = config.mic_counts[pick];

  const Vec3 dims = scene.room.dims();
  const double sep = config.min_separation;
  require((dims.array() > 2 * sep).all(), ErrorKind::PlacementInfeasible,
          "room too small for the wall clearance");

  // Devices are placed one at a time: microphones first, then the source.
  std::vector<Vec3> placed;
  placed.reserve(static_cast<std::size_t>(num_mics) + 1);
  int attempts = 0;
  while (static_cast<int>(placed.size()) < num_mics + 1) {
    if (++attempts > config.max_attempts) {
      throw Error(ErrorKind::PlacementInfeasible,
                  "placement retry budget exhausted after " +
                      std::to_string(config.max_attempts) + " attempts");
    }
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = uniform(rng, sep, dims[k] - sep);
    const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Vec3& q) {
      return (p - q).norm() >= sep;
    });
    if (clear) placed.push_back(p);
  }

  scene.mics.positions.assign(placed.begin(), placed.begin() + num_mics);
  scene.source.position = placed.back();
  scene.source.signal_id = "synthetic:" + std::to_string(seed);
  return scene;
}

void validate_scene(const Scene& scene, double min_separation) {
  scene.room.validate();
  const Vec3 dims = scene.room.dims();
  require(scene.mics.size() >= 2, ErrorKind::InvalidArgument, "scene needs at least 2 mics");
  std::vector<Vec3> all = scene.mics.positions;
  all.push_back(scene.source.position);
  for (std::size_t a = 0; a < all.size(); ++a) {
    require(all[a].allFinite(), ErrorKind::InvalidArgument, "non-finite position");
    require(inside_with_margin(all[a], dims, min_separation) &&
                (all[a].array() > 0).all() && (all[a].array() < dims.array()).all(),
            ErrorKind::InvalidArgument,
            "device " + std::to_string(a) + " violates wall clearance");
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      require((all[a] - all[b]).norm() >= min_separation, ErrorKind::InvalidArgument,
              "devices " + std::to_string(a) + " and " + std::to_string(b) + " too close");
    }
  }
}

MetadataVector::MetadataVector(Eigen::VectorXd values) : values_(std::move(values)) {
  require(values_.size() >= 6 && values_.size() % 3 == 0, ErrorKind::DimensionMismatch,
          "metadata vector length must be 3M+3 with M >= 1");
  require(values_.allFinite(), ErrorKind::InvalidArgument, "metadata must be finite");
}

std::vector<Vec3> MetadataVector::mics() const {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(num_mics()));
  for (int m = 0; m < num_mics(); ++m) out.push_back(mic(m));
  return out;
}

double MetadataVector::mean_mic_height() const {
  // Sorted summation makes the result independent of microphone order.
  std::vector<double> z;
  for (int m = 0; m < num_mics(); ++m) z.push_back(values_[3 * m + 2]);
  std::sort(z.begin(), z.end());
  double sum = 0.0;
  for (double h : z) sum += h;
  return sum / num_mics();
}

MetadataVector MetadataVector::permuted(const std::vector<int>& order) const {
  require(static_cast<int>(order.size()) == num_mics(), ErrorKind::DimensionMismatch,
          "permutation length mismatch");
  Eigen::VectorXd out(values_.size());
  for (int k = 0; k < num_mics(); ++k) out.segment<3>(3 * k) = mic(order[static_cast<std::size_t>(k)]);
  out.tail<3>() = room();
  return MetadataVector(std::move(out));
}

MetadataVector make_metadata(const std::vector<Vec3>& mics, const Vec3& room) {
  const auto m = static_cast<Index>(mics.size());
  Eigen::VectorXd v(3 * m + 3);
  for (Index k = 0; k < m; ++k) v.segment<3>(3 * k) = mics[static_cast<std::size_t>(k)];
  v.tail<3>() = room;
  return MetadataVector(std::move(v));
}

MetadataVector build_metadata(const Scene& scene) {
  return make_metadata(scene.mics.positions, scene.room.dims());
}

MetadataVector parse_metadata(const Eigen::VectorXd& values) { return MetadataVector(values); }

PairMetadata pair_metadata(const MetadataVector& meta, int i, int j) {
  require(i >= 0 && i < j && j < meta.num_mics(), ErrorKind::InvalidArgument,
          "pair indices must satisfy 0 <= i < j < M");
  const Vec3 room = meta.room();
  PairMetadata out;
  out.segment<3>(0) = meta.mic(i).cwiseQuotient(room);
  out.segment<3>(3) = meta.mic(j).cwiseQuotient(room);
  out.segment<3>(6) = room / kRoomScale;
  return out;
}

PairMetadata pair_metadata(const Scene& scene, int i, int j) {
  return pair_metadata(build_metadata(scene), i, j);
}

nlohmann::ordered_json scene_to_json(const Scene& scene) {
  nlohmann::ordered_json doc;
  doc["version"] = kSceneFormatVersion;
  doc["seed"] = scene.seed;
  doc["room"] = {{"width", scene.room.width},
                 {"length", scene.room.length},
                 {"height", scene.room.height},
                 {"t60", scene.room.t60}};
  auto mics = nlohmann::ordered_json::array();
  for (const auto& p : scene.mics.positions) mics.push_back({p.x(), p.y(), p.z()});
  doc["mics"] = std::move(mics);
  const Vec3& s = scene.source.position;
  doc["source"] = {{"position", {s.x(), s.y(), s.z()}}, {"signal_id", scene.source.signal_id}};
  return doc;
}

Scene scene_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("version").get<int>();
    require(version == kSceneFormatVersion, ErrorKind::UnsupportedFormat,
            "unsupported scene version " + std::to_string(version));
    Scene scene;
    scene.seed = doc.value("seed", std::uint64_t{0});
    const auto& room = doc.at("room");
    scene.room.width = room.at("width").get<double>();
    scene.room.length = room.at("length").get<double>();
    scene.room.height = room.at("height").get<double>();
    scene.room.t60 = room.at("t60").get<double>();
    for (const auto& p : doc.at("mics")) {
      scene.mics.positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                        p.at(2).get<double>());
    }
    if (doc.contains("source")) {
      const auto& pos = doc["source"].at("position");
      scene.source.position = {pos.at(0).get<double>(), pos.at(1).get<double>(),
                               pos.at(2).get<double>()};
      scene.source.signal_id = doc["source"].value("signal_id", std::string{});
    }
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::UnsupportedFormat, std::string("malformed scene JSON: ") + e.what());
  }
}

std::string dump_scene(const Scene& scene) { return scene_to_json(scene).dump(2) + "\n"; }

}  // namespace dmaloc
