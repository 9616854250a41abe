#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "dmaloc/types.hpp"

namespace dmaloc {

struct RoomSpec {
  double width = 0.0;   // x extent, meters
  double length = 0.0;  // y extent, meters
  double height = 0.0;  // z extent, meters
  double t60 = 0.0;     // seconds

  Vec3 dims() const { return {width, length, height}; }
  double volume() const { return width * length * height; }
  double surface() const {
    return 2.0 * (width * length + width * height + length * height);
  }
  void validate() const;
};

struct MicArray {
  std::vector<Vec3> positions;

  int size() const { return static_cast<int>(positions.size()); }
  const Vec3& operator[](int m) const { return positions[static_cast<std::size_t>(m)]; }
};

struct SourceSpec {
  Vec3 position = Vec3::Zero();
  std::string signal_id;
};

struct Scene {
  RoomSpec room;
  MicArray mics;
  SourceSpec source;
  std::uint64_t seed = 0;

  Vec2 source_xy() const { return source.position.head<2>(); }
};

/// Distribution that `sample_scene` draws from. Defaults are the training
/// distribution: rooms U[3,6] x U[3,6] x U[2,4] m, T60 U[0.3,0.6] s, every
/// device at least 0.5 m from every other device and from all six walls.
struct SceneDistribution {
  std::vector<int> mic_counts{5, 7};
  double width_min = 3.0, width_max = 6.0;
  double length_min = 3.0, length_max = 6.0;
  double height_min = 2.0, height_max = 4.0;
  double t60_min = 0.3, t60_max = 0.6;
  double min_separation = 0.5;
  int max_attempts = 10000;

  void validate() const;
};

/// Pure function of (config, seed). Throws PlacementInfeasible when the
/// rejection sampler exhausts `max_attempts`.
Scene sample_scene(const SceneDistribution& config, std::uint64_t seed);

/// Checks the joint scene invariants; throws InvalidArgument with the first
/// violation found.
void validate_scene(const Scene& scene, double min_separation);

/// Flat [mic 1 xyz, ..., mic M xyz, room xyz], unnormalized.
class MetadataVector {
 public:
  MetadataVector() = default;
  explicit MetadataVector(Eigen::VectorXd values);

  int num_mics() const { return static_cast<int>((values_.size() - 3) / 3); }
  Vec3 mic(int m) const { return values_.segment<3>(3 * m); }
  Vec3 room() const { return values_.tail<3>(); }
  std::vector<Vec3> mics() const;
  double mean_mic_height() const;
  const Eigen::VectorXd& values() const { return values_; }

  /// Same geometry with microphones reordered; `order[k]` is the old index
  /// of the new k-th microphone.
  MetadataVector permuted(const std::vector<int>& order) const;

 private:
  Eigen::VectorXd values_;
};

MetadataVector build_metadata(const Scene& scene);
MetadataVector parse_metadata(const Eigen::VectorXd& values);
MetadataVector make_metadata(const std::vector<Vec3>& mics, const Vec3& room);

using PairMetadata = Eigen::Matrix<double, 9, 1>;

// Mic coordinates are divided by the room dimensions, room dimensions by 10 m.
inline constexpr double kRoomScale = 10.0;

PairMetadata pair_metadata(const MetadataVector& meta, int i, int j);
PairMetadata pair_metadata(const Scene& scene, int i, int j);

// JSON keys are written in a fixed order: version, seed, room, mics, source.
inline constexpr int kSceneFormatVersion = 1;
nlohmann::ordered_json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& doc);
std::string dump_scene(const Scene& scene);

}  // namespace dmaloc
