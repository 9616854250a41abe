#include "dmaloc/config.hpp"

#include <fstream>

namespace dmaloc {

using nlohmann::json;

ConfigObject::ConfigObject(const json& value, std::string pointer)
    : obj_(&value), pointer_(std::move(pointer)) {
  if (!value.is_object()) {
    throw Error(ErrorKind::InvalidConfig, (pointer_.empty() ? "/" : pointer_) + ": expected an object");
  }
}

void ConfigObject::fail(const char* key, const std::string& what) const {
  throw Error(ErrorKind::InvalidConfig, path(key) + ": " + what);
}

const json& ConfigObject::raw(const char* key) const {
  if (!has(key)) fail(key, "missing required key");
  return obj_->at(key);
}

double ConfigObject::number(const char* key, double fallback) const {
  if (!has(key)) return fallback;
  const json& v = obj_->at(key);
  if (!v.is_number()) fail(key, "expected a number");
  return v.get<double>();
}

double ConfigObject::positive(const char* key, double fallback) const {
  const double v = number(key, fallback);
  if (!(v > 0)) fail(key, "expected a positive number");
  return v;
}

int ConfigObject::positive_int(const char* key, int fallback) const {
  if (!has(key)) return fallback;
  const json& v = obj_->at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) fail(key, "expected a positive integer");
  return v.get<int>();
}

std::uint64_t ConfigObject::seed(const char* key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const json& v = obj_->at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    fail(key, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool ConfigObject::boolean(const char* key, bool fallback) const {
  if (!has(key)) return fallback;
  const json& v = obj_->at(key);
  if (!v.is_boolean()) fail(key, "expected a boolean");
  return v.get<bool>();
}

std::string ConfigObject::string(const char* key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  const json& v = obj_->at(key);
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

std::vector<int> ConfigObject::int_list(const char* key, const std::vector<int>& fallback,
                                        int min_value) const {
  if (!has(key)) return fallback;
  const json& v = obj_->at(key);
  if (!v.is_array() || v.empty()) fail(key, "expected a non-empty array of integers");
  std::vector<int> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!v[k].is_number_integer() || v[k].get<long long>() < min_value) {
      throw Error(ErrorKind::InvalidConfig, path(key) + "/" + std::to_string(k) +
                                                ": expected an integer >= " + std::to_string(min_value));
    }
    out.push_back(v[k].get<int>());
  }
  return out;
}

std::pair<double, double> ConfigObject::range(const char* key,
                                              std::pair<double, double> fallback) const {
  if (!has(key)) return fallback;
  const json& v = obj_->at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    fail(key, "expected [min, max]");
  }
  const double lo = v[0].get<double>(), hi = v[1].get<double>();
  if (!(lo > 0 && lo <= hi)) fail(key, "expected 0 < min <= max");
  return {lo, hi};
}

ConfigObject ConfigObject::child(const char* key) const { return ConfigObject(raw(key), path(key)); }

void ConfigObject::reject_unknown(std::initializer_list<const char*> known) const {
  for (const auto& item : obj_->items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw Error(ErrorKind::InvalidConfig, pointer_ + "/" + item.key() + ": unknown key");
  }
}

LagInterpolation interpolation_from_string(std::string_view name) {
  if (name == "linear") return LagInterpolation::Linear;
  if (name == "nearest") return LagInterpolation::Nearest;
  if (name == "cell-max") return LagInterpolation::CellMax;
  throw Error(ErrorKind::InvalidConfig, "unknown interpolation '" + std::string(name) + "'");
}

std::string_view to_string(LagInterpolation mode) {
  switch (mode) {
    case LagInterpolation::Linear: return "linear";
    case LagInterpolation::Nearest: return "nearest";
    case LagInterpolation::CellMax: return "cell-max";
  }
  return "linear";
}

nlohmann::ordered_json to_json(const FeatureConfig& config) {
  return {{"kind", to_string(config.kind)},
          {"grid_n", config.grid_n},
          {"frame_ms", config.frame_ms},
          {"fft_size", config.gcc.fft_size},
          {"n_central", config.gcc.n_central},
          {"phat_epsilon", config.gcc.epsilon},
          {"interpolation", to_string(config.slf.interpolation)},
          {"speed_of_sound", config.slf.speed_of_sound}};
}

FeatureConfig feature_config_from_json(const ConfigObject& obj) {
  obj.reject_unknown({"kind", "grid_n", "frame_ms", "fft_size", "n_central", "phat_epsilon",
                      "interpolation", "speed_of_sound"});
  FeatureConfig c;
  try {
    c.kind = feature_kind_from_string(obj.string("kind", "slf"));
  } catch (const Error& e) {
    obj.fail("kind", e.what());
  }
  c.grid_n = obj.positive_int("grid_n", c.grid_n);
  if (c.grid_n < 2) obj.fail("grid_n", "expected >= 2");
  c.frame_ms = obj.positive("frame_ms", c.frame_ms);
  c.gcc.fft_size = obj.positive_int("fft_size", c.gcc.fft_size);
  if (c.gcc.fft_size % 2) obj.fail("fft_size", "expected an even size");
  c.gcc.n_central = obj.positive_int("n_central", c.gcc.n_central);
  if (c.gcc.n_central % 2 || c.gcc.n_central > c.gcc.fft_size) {
    obj.fail("n_central", "expected an even count no larger than fft_size");
  }
  c.gcc.epsilon = obj.positive("phat_epsilon", c.gcc.epsilon);
  try {
    c.slf.interpolation = interpolation_from_string(obj.string("interpolation", "cell-max"));
  } catch (const Error& e) {
    obj.fail("interpolation", e.what());
  }
  c.slf.speed_of_sound = obj.positive("speed_of_sound", c.slf.speed_of_sound);
  return c;
}

nlohmann::ordered_json to_json(const TrainConfig& config) {
  return {{"lr", config.lr},           {"batch_size", config.batch_size},
          {"max_epochs", config.max_epochs}, {"patience", config.patience},
          {"beta1", config.beta1},     {"beta2", config.beta2},
          {"epsilon", config.epsilon}, {"seed", config.seed}};
}

TrainConfig train_config_from_json(const ConfigObject& obj) {
  obj.reject_unknown({"lr", "batch_size", "max_epochs", "patience", "beta1", "beta2", "epsilon", "seed"});
  TrainConfig c;
  c.lr = obj.positive("lr", c.lr);
  c.batch_size = obj.positive_int("batch_size", c.batch_size);
  c.max_epochs = obj.positive_int("max_epochs", c.max_epochs);
  c.patience = obj.positive_int("patience", c.patience);
  c.beta1 = obj.positive("beta1", c.beta1);
  c.beta2 = obj.positive("beta2", c.beta2);
  if (c.beta1 >= 1) obj.fail("beta1", "expected < 1");
  if (c.beta2 >= 1) obj.fail("beta2", "expected < 1");
  c.epsilon = obj.positive("epsilon", c.epsilon);
  c.seed = obj.seed("seed", c.seed);
  return c;
}

SceneDistribution scene_distribution_from_json(const ConfigObject& obj) {
  obj.reject_unknown({"width", "length", "height", "t60", "min_separation", "max_attempts"});
  SceneDistribution d;
  std::tie(d.width_min, d.width_max) = obj.range("width", {d.width_min, d.width_max});
  std::tie(d.length_min, d.length_max) = obj.range("length", {d.length_min, d.length_max});
  std::tie(d.height_min, d.height_max) = obj.range("height", {d.height_min, d.height_max});
  std::tie(d.t60_min, d.t60_max) = obj.range("t60", {d.t60_min, d.t60_max});
  d.min_separation = obj.number("min_separation", d.min_separation);
  if (d.min_separation < 0) obj.fail("min_separation", "expected >= 0");
  d.max_attempts = obj.positive_int("max_attempts", d.max_attempts);
  return d;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

}  // namespace dmaloc
