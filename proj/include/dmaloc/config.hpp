#pragma once

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <string>
#include <vector>

#include "dmaloc/relnet.hpp"
#include "dmaloc/scene.hpp"

namespace dmaloc {

/// Read-only view of one JSON object that reports schema violations as
/// InvalidConfig errors prefixed with the JSON pointer of the offending value.
class ConfigObject {
 public:
  ConfigObject(const nlohmann::json& value, std::string pointer);

  const std::string& pointer() const { return pointer_; }
  bool has(const char* key) const { return obj_->contains(key); }
  std::string path(const char* key) const { return pointer_ + "/" + key; }

  double number(const char* key, double fallback) const;
  double positive(const char* key, double fallback) const;
  int positive_int(const char* key, int fallback) const;
  std::uint64_t seed(const char* key, std::uint64_t fallback) const;
  bool boolean(const char* key, bool fallback) const;
  std::string string(const char* key, const std::string& fallback) const;
  std::vector<int> int_list(const char* key, const std::vector<int>& fallback, int min_value) const;
  /// [lo, hi] with 0 < lo <= hi.
  std::pair<double, double> range(const char* key, std::pair<double, double> fallback) const;
  ConfigObject child(const char* key) const;
  const nlohmann::json& raw(const char* key) const;

  void reject_unknown(std::initializer_list<const char*> known) const;
  [[noreturn]] void fail(const char* key, const std::string& what) const;

 private:
  const nlohmann::json* obj_;
  std::string pointer_;
};

nlohmann::ordered_json to_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(const ConfigObject& obj);

nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const ConfigObject& obj);

SceneDistribution scene_distribution_from_json(const ConfigObject& obj);

LagInterpolation interpolation_from_string(std::string_view name);
std::string_view to_string(LagInterpolation mode);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dmaloc
