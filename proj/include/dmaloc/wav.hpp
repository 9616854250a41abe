#pragma once

#include <filesystem>

#include "dmaloc/types.hpp"

namespace dmaloc {

enum class WavEncoding { Pcm16, Float32 };

struct WavData {
  Eigen::MatrixXd samples;  // rows = frames, cols = channels
  double fs = 0.0;
  WavEncoding encoding = WavEncoding::Float32;
};

/// Reads 16-bit PCM or 32-bit IEEE float RIFF/WAVE files (any channel count).
/// PCM samples are scaled to [-1, 1).
WavData read_wav(const std::filesystem::path& path);

/// Writes interleaved samples; float32 is lossless for float-valued data.
void write_wav(const std::filesystem::path& path, const Eigen::MatrixXd& samples, double fs,
               WavEncoding encoding = WavEncoding::Float32);

}  // namespace dmaloc
