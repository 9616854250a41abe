#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "dmaloc/scene.hpp"
#include "dmaloc/types.hpp"

namespace dmaloc {

struct Rir {
  Eigen::VectorXd taps;
  double fs = kDefaultSampleRate;
};

/// Received signals, one column per microphone, all on a common time origin.
struct MultichannelSignal {
  Eigen::MatrixXd samples;  // rows = time, cols = channels
  double fs = kDefaultSampleRate;

  int num_channels() const { return static_cast<int>(samples.cols()); }
  Index length() const { return samples.rows(); }
};

/// A window of L aligned samples cut from a MultichannelSignal.
using MultichannelFrame = MultichannelSignal;

enum class AbsorptionModel {
  Calibrated,  // image_source_absorption
  Eyring,      // eyring_absorption
};

struct RirOptions {
  double speed_of_sound = kSpeedOfSound;
  bool reflections = true;   // false: direct path only
  int max_order = -1;        // cap on total reflection count; -1 = limited by length only
  double length_factor = 1.25;  // RIR length in units of T60
  AbsorptionModel absorption = AbsorptionModel::Calibrated;
  double highpass_hz = 20.0;  // DC-blocker corner on reverberant RIRs; 0 disables
};

/// Eyring: alpha = 1 - exp(-0.161 V / (S T60)). Throws InfeasibleAbsorption
/// when the result is not strictly inside (0, 1).
double eyring_absorption(const RoomSpec& room);

/// Absorption at which the image-source energy envelope, averaged over
/// directions, has a Schroeder curve that reaches -60 dB at T60. Eyring assumes
/// every direction sees the mean wall-hit rate; axial and grazing paths hit
/// fewer walls and dominate the late tail, so Eyring's alpha decays too slowly
/// for this simulator. Checks feasibility through eyring_absorption first.
double image_source_absorption(const RoomSpec& room, double speed_of_sound = kSpeedOfSound);

/// Shoebox image-source RIR with uniform wall reflection beta = sqrt(1 - alpha)
/// and integer-sample tap placement.
Rir simulate_rir(const RoomSpec& room, const Vec3& source, const Vec3& mic, double fs,
                 const RirOptions& options = {});

/// Full linear convolution.
Eigen::VectorXd convolve(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

MultichannelSignal auralize(const Scene& scene, const Eigen::VectorXd& source_signal, double fs,
                            const RirOptions& options = {});

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Adds independent white Gaussian noise per channel at the given SNR.
/// `snr_db == kNoNoise` returns the input unchanged.
MultichannelSignal add_noise(const MultichannelSignal& signals, double snr_db, std::uint64_t seed);

struct SourceSignalConfig {
  enum class Kind { Synthetic, Corpus };
  Kind kind = Kind::Synthetic;
  std::filesystem::path corpus_dir;
};

struct SourceSignal {
  Eigen::VectorXd samples;
  std::string id;
};

/// Either a corpus WAV (picked by seed, resampled, truncated or zero-padded to
/// `duration_s`) or pink Gaussian noise amplitude-modulated at 4 Hz.
SourceSignal provide_source_signal(const SourceSignalConfig& config, double duration_s, double fs,
                                   std::uint64_t seed);

}  // namespace dmaloc
