#include "dmaloc/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "dmaloc/errors.hpp"

namespace dmaloc {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}
void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& why,
                      ErrorKind kind = ErrorKind::UnsupportedFormat) {
  throw Error(kind, path.string() + ": " + why);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad(path, "cannot open", ErrorKind::Io);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    bad(path, "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      if (std::memcmp(chunk, "data", 4) != 0) bad(path, "truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) bad(path, "short fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible && size >= 40) format = le16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min(size, bytes.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (format == 0 || data == nullptr) bad(path, "missing fmt or data chunk");
  if (channels == 0) bad(path, "zero channels");

  WavData wav;
  wav.fs = rate;
  if (format == kFormatPcm && bits == 16) {
    wav.encoding = WavEncoding::Pcm16;
  } else if (format == kFormatFloat && bits == 32) {
    wav.encoding = WavEncoding::Float32;
  } else {
    bad(path, "only 16-bit PCM and 32-bit float are supported (format " +
                  std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const auto frames = static_cast<Index>(data_size / frame_bytes);
  wav.samples.resize(frames, channels);
  for (Index t = 0; t < frames; ++t) {
    for (Index c = 0; c < channels; ++c) {
      const unsigned char* p = data + static_cast<std::size_t>(t) * frame_bytes +
                               static_cast<std::size_t>(c) * (bits / 8);
      if (wav.encoding == WavEncoding::Pcm16) {
        wav.samples(t, c) = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        const std::uint32_t raw = le32(p);
        float f;
        std::memcpy(&f, &raw, sizeof f);
        wav.samples(t, c) = f;
      }
    }
  }
  return wav;
}

void write_wav(const std::filesystem::path& path, const Eigen::MatrixXd& samples, double fs,
               WavEncoding encoding) {
  const auto channels = static_cast<std::uint16_t>(samples.cols());
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(samples.rows()) * channels * (bits / 8);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
  put16(out, channels);
  put32(out, static_cast<std::uint32_t>(std::lround(fs)));
  put32(out, static_cast<std::uint32_t>(std::lround(fs)) * channels * (bits / 8));
  put16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data_size);
  for (Index t = 0; t < samples.rows(); ++t) {
    for (Index c = 0; c < samples.cols(); ++c) {
      if (encoding == WavEncoding::Pcm16) {
        const double v = std::clamp(samples(t, c) * 32768.0, -32768.0, 32767.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v))));
      } else {
        const auto f = static_cast<float>(samples(t, c));
        std::uint32_t raw;
        std::memcpy(&raw, &f, sizeof raw);
        put32(out, raw);
      }
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::Io, "cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace dmaloc
