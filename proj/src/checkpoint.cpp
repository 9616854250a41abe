// Checkpoint layout:
//   8 bytes   magic "DMALOCK\x01"
//   8 bytes   header length H, little-endian
//   H bytes   JSON header (architecture, features, tensor table, blob size, crc32)
//   rest      float32 little-endian weights, tensors back to back

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dmaloc/config.hpp"
#include "dmaloc/relnet.hpp"

namespace dmaloc {
namespace {

constexpr char kMagic[8] = {'D', 'M', 'A', 'L', 'O', 'C', 'K', '\x01'};

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

struct TensorRef {
  std::string name;
  float* data;
  Index rows, cols;
};

std::vector<TensorRef> tensors(const std::string& prefix, std::vector<DenseLayer<float>>& layers) {
  std::vector<TensorRef> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.push_back({base + ".weight", layers[l].weight.data(), layers[l].weight.rows(),
                   layers[l].weight.cols()});
    out.push_back({base + ".bias", layers[l].bias.data(), layers[l].bias.size(), 1});
  }
  return out;
}

[[noreturn]] void fail(ErrorKind kind, const std::filesystem::path& path, const std::string& why) {
  throw Error(kind, path.string() + ": " + why);
}

}  // namespace

void save_checkpoint(const RelNetModel& model, const std::filesystem::path& path) {
  model.validate();
  RelNetModel copy = model;
  auto refs = tensors("f", copy.f.mutable_layers());
  for (auto& r : tensors("g", copy.g.mutable_layers())) refs.push_back(r);

  std::vector<unsigned char> blob;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& r : refs) {
    const std::size_t count = static_cast<std::size_t>(r.rows * r.cols);
    table.push_back({{"name", r.name}, {"rows", r.rows}, {"cols", r.cols}, {"offset", offset}});
    for (std::size_t k = 0; k < count; ++k) {
      std::uint32_t raw;
      std::memcpy(&raw, r.data + k, sizeof raw);
      raw = to_le(raw);
      const auto* bytes = reinterpret_cast<const unsigned char*>(&raw);
      blob.insert(blob.end(), bytes, bytes + 4);
    }
    offset += count;
  }

  nlohmann::ordered_json header;
  header["format"] = "dmaloc-relnet";
  header["version"] = kCheckpointVersion;
  header["feature_kind"] = to_string(model.features.kind);
  header["grid_n"] = model.grid_n();
  header["features"] = to_json(model.features);
  header["f"] = {{"input_size", model.f.input_size()}, {"layers", model.f.spec().layer_output_sizes}};
  header["g"] = {{"input_size", model.g.input_size()}, {"layers", model.g.spec().layer_output_sizes}};
  header["tensors"] = std::move(table);
  header["blob_floats"] = offset;
  header["crc32"] = crc32(0L, blob.data(), static_cast<uInt>(blob.size()));
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, path, "cannot write");
  out.write(kMagic, sizeof kMagic);
  std::uint64_t len = text.size();
  unsigned char len_bytes[8];
  for (int k = 0; k < 8; ++k) len_bytes[k] = static_cast<unsigned char>(len >> (8 * k));
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) fail(ErrorKind::Io, path, "write failed");
}

RelNetModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, path, "cannot open");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 16) fail(ErrorKind::CheckpointTruncated, path, "file shorter than preamble");
  if (std::memcmp(bytes.data(), kMagic, 7) != 0) {
    fail(ErrorKind::UnsupportedFormat, path, "not a dmaloc checkpoint");
  }
  std::uint64_t len = 0;
  for (int k = 0; k < 8; ++k) len |= std::uint64_t(bytes[8 + static_cast<std::size_t>(k)]) << (8 * k);
  if (len > bytes.size() - 16) fail(ErrorKind::CheckpointTruncated, path, "header extends past end of file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CheckpointInconsistent, path, std::string("bad header: ") + e.what());
  }

  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion || bytes[7] != static_cast<unsigned char>(kMagic[7])) {
      fail(ErrorKind::CheckpointVersion, path,
           "checkpoint version " + std::to_string(version) + ", expected " +
               std::to_string(kCheckpointVersion));
    }

    RelNetModel model;
    model.features = feature_config_from_json(ConfigObject(header.at("features"), "/features"));
    if (header.at("grid_n").get<int>() != model.features.grid_n ||
        header.at("feature_kind").get<std::string>() != to_string(model.features.kind)) {
      fail(ErrorKind::CheckpointInconsistent, path, "header fields disagree");
    }
    model.f = Mlp<float>({header.at("f").at("input_size").get<int>(),
                          header.at("f").at("layers").get<std::vector<int>>()});
    model.g = Mlp<float>({header.at("g").at("input_size").get<int>(),
                          header.at("g").at("layers").get<std::vector<int>>()});
    model.validate();

    const std::size_t blob_floats = header.at("blob_floats").get<std::size_t>();
    const std::size_t blob_start = 16 + static_cast<std::size_t>(len);
    const std::size_t blob_bytes = bytes.size() - blob_start;
    if (blob_bytes < blob_floats * 4) {
      fail(ErrorKind::CheckpointTruncated, path, "weight blob is shorter than the header declares");
    }
    if (blob_bytes != blob_floats * 4) {
      fail(ErrorKind::CheckpointInconsistent, path, "weight blob is longer than the header declares");
    }
    const unsigned char* blob = bytes.data() + blob_start;
    if (crc32(0L, blob, static_cast<uInt>(blob_bytes)) != header.at("crc32").get<std::uint32_t>()) {
      fail(ErrorKind::CheckpointChecksum, path, "weight checksum mismatch");
    }

    auto refs = tensors("f", model.f.mutable_layers());
    for (auto& r : tensors("g", model.g.mutable_layers())) refs.push_back(r);
    const auto& table = header.at("tensors");
    if (table.size() != refs.size()) fail(ErrorKind::CheckpointInconsistent, path, "tensor count mismatch");
    std::size_t expected_offset = 0;
    for (std::size_t t = 0; t < refs.size(); ++t) {
      const auto& entry = table[t];
      const auto& r = refs[t];
      const std::size_t count = static_cast<std::size_t>(r.rows * r.cols);
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      if (entry.at("name").get<std::string>() != r.name || entry.at("rows").get<Index>() != r.rows ||
          entry.at("cols").get<Index>() != r.cols || offset != expected_offset ||
          offset + count > blob_floats) {
        fail(ErrorKind::CheckpointInconsistent, path, "tensor table disagrees with architecture at " + r.name);
      }
      for (std::size_t k = 0; k < count; ++k) {
        std::uint32_t raw;
        std::memcpy(&raw, blob + 4 * (offset + k), sizeof raw);
        raw = to_le(raw);
        std::memcpy(r.data + k, &raw, sizeof raw);
      }
      expected_offset += count;
    }
    if (expected_offset != blob_floats) {
      fail(ErrorKind::CheckpointInconsistent, path, "blob size disagrees with tensor table");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CheckpointInconsistent, path, std::string("bad header: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidConfig || e.kind() == ErrorKind::DimensionMismatch ||
        e.kind() == ErrorKind::InvalidArgument) {
      fail(ErrorKind::CheckpointInconsistent, path, e.what());
    }
    throw;
  }
}

}  // namespace dmaloc
