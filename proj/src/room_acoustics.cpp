#include "dmaloc/room_acoustics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dmaloc/errors.hpp"
#include "dmaloc/wav.hpp"

namespace dmaloc {
namespace {

struct AxisImage {
  double delta_sq;  // squared image-to-mic offset along this axis
  int reflections;
};

// Image coordinates along one axis: (1 - 2q) s + 2 n L, for q in {0,1}.
std::vector<AxisImage> axis_images(double s, double r, double extent, double max_dist) {
  const int n_max = static_cast<int>(std::ceil(max_dist / (2.0 * extent))) + 1;
  std::vector<AxisImage> out;
  out.reserve(static_cast<std::size_t>(4 * n_max + 2));
  for (int n = -n_max; n <= n_max; ++n) {
    for (int q = 0; q <= 1; ++q) {
      const double image = (1 - 2 * q) * s + 2.0 * n * extent;
      const double d = image - r;
      if (std::abs(d) > max_dist) continue;
      out.push_back({d * d, std::abs(n - q) + std::abs(n)});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const AxisImage& a, const AxisImage& b) { return a.delta_sq < b.delta_sq; });
  return out;
}

Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

void require_inside(const RoomSpec& room, const Vec3& p, const char* what) {
  const Vec3 dims = room.dims();
  if (!p.allFinite() || (p.array() <= 0).any() || (p.array() >= dims.array()).any()) {
    throw Error(ErrorKind::InvalidArgument, std::string(what) + " lies outside the room");
  }
}

bool has_wav_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".wav";
}

Eigen::VectorXd resample_linear(const Eigen::VectorXd& x, double fs_in, double fs_out) {
  const auto n_out = static_cast<Index>(std::floor(x.size() * fs_out / fs_in));
  Eigen::VectorXd y(n_out);
  for (Index k = 0; k < n_out; ++k) {
    const double t = k * fs_in / fs_out;
    const auto i = static_cast<Index>(t);
    const double frac = t - i;
    y[k] = i + 1 < x.size() ? (1 - frac) * x[i] + frac * x[i + 1] : x[x.size() - 1];
  }
  return y;
}

Eigen::VectorXd synthetic_speech_like(Index n, double fs, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<double> white(static_cast<std::size_t>(n));
  for (auto& w : white) w = gauss(rng);

  // 1/f power: scale each bin's amplitude by 1/sqrt(k), drop DC.
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, white);
  spec[0] = 0.0;
  for (Index k = 1; k < n; ++k) spec[static_cast<std::size_t>(k)] /= std::sqrt(double(std::min(k, n - k)));
  std::vector<double> pink;
  fft.inv(pink, spec);

  const double phase = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
  Eigen::VectorXd x(n);
  for (Index t = 0; t < n; ++t) {
    const double env = 0.1 + 0.9 * 0.5 * (1.0 - std::cos(2 * std::numbers::pi * 4.0 * t / fs + phase));
    x[t] = pink[static_cast<std::size_t>(t)] * env;
  }
  x.array() -= x.mean();
  const double rms = std::sqrt(x.squaredNorm() / double(n));
  if (rms > 0) x *= 0.1 / rms;
  return x;
}

}  // namespace

double eyring_absorption(const RoomSpec& room) {
  room.validate();
  const double alpha = 1.0 - std::exp(-0.161 * room.volume() / (room.surface() * room.t60));
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorKind::InfeasibleAbsorption,
                "Eyring absorption outside (0,1): room too small for T60=" + std::to_string(room.t60));
  }
  return alpha;
}

double image_source_absorption(const RoomSpec& room, double speed_of_sound) {
  const double eyring = eyring_absorption(room);
  thread_local std::array<double, 5> last_key{};
  thread_local double last_alpha = -1.0;
  const std::array<double, 5> key{room.width, room.length, room.height, room.t60, speed_of_sound};
  if (last_alpha >= 0.0 && key == last_key) return last_alpha;

  // Octant quadrature over directions; g = wall hits per meter along a ray.
  constexpr int kSteps = 48;
  std::vector<double> g, w;
  g.reserve(kSteps * kSteps);
  w.reserve(kSteps * kSteps);
  for (int a = 0; a < kSteps; ++a) {
    const double theta = (a + 0.5) * (std::numbers::pi / 2) / kSteps;
    for (int b = 0; b < kSteps; ++b) {
      const double phi = (b + 0.5) * (std::numbers::pi / 2) / kSteps;
      g.push_back(std::sin(theta) * std::cos(phi) / room.width +
                  std::sin(theta) * std::sin(phi) / room.length + std::cos(theta) / room.height);
      w.push_back(std::sin(theta));
    }
  }
  // Untruncated Schroeder curve: EDC(t) ~ <exp(-lambda c t g) / g>, lambda = -ln(1 - alpha).
  const double ct = speed_of_sound * room.t60;
  auto log_edc_ratio = [&](double lambda) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      num += w[k] * std::exp(-lambda * ct * g[k]) / g[k];
      den += w[k] / g[k];
    }
    return std::log(num / den);
  };
  const double target = -6.0 * std::log(10.0);
  double lo = -std::log1p(-eyring), hi = lo;
  while (log_edc_ratio(hi) > target) {
    hi *= 2.0;
    if (hi > 50.0) throw Error(ErrorKind::InfeasibleAbsorption, "no absorption reaches the requested T60");
  }
  for (int it = 0; it < 48; ++it) {
    const double mid = 0.5 * (lo + hi);
    (log_edc_ratio(mid) > target ? lo : hi) = mid;
  }
  last_key = key;
  last_alpha = -std::expm1(-0.5 * (lo + hi));
  return last_alpha;
}

Rir simulate_rir(const RoomSpec& room, const Vec3& source, const Vec3& mic, double fs,
                 const RirOptions& options) {
  if (!(fs > 0)) throw Error(ErrorKind::InvalidArgument, "sample rate must be positive");
  require_inside(room, source, "source");
  require_inside(room, mic, "microphone");
  const double c = options.speed_of_sound;
  const double direct = (source - mic).norm();
  if (direct < 1e-6) throw Error(ErrorKind::DegenerateGeometry, "source coincides with microphone");

  const double alpha = options.absorption == AbsorptionModel::Eyring
                           ? eyring_absorption(room)
                           : image_source_absorption(room, c);
  const double beta = std::sqrt(1.0 - alpha);
  const auto direct_tap = static_cast<Index>(std::lround(fs * direct / c));
  Index n_taps = static_cast<Index>(std::ceil(options.length_factor * room.t60 * fs));
  const bool reflections = options.reflections && options.max_order != 0;
  if (!reflections) n_taps = std::max(n_taps, direct_tap + 1);

  Rir rir;
  rir.fs = fs;
  rir.taps = Eigen::VectorXd::Zero(n_taps);
  const double four_pi = 4.0 * std::numbers::pi;
  if (!reflections) {
    rir.taps[direct_tap] = 1.0 / (four_pi * direct);
    return rir;
  }

  // Anything at or beyond tap n_taps - 0.5 rounds out of range.
  const double max_dist = (n_taps - 0.5) * c / fs;
  const double max_sq = max_dist * max_dist;
  const Vec3 dims = room.dims();
  const auto ax = axis_images(source.x(), mic.x(), dims.x(), max_dist);
  const auto ay = axis_images(source.y(), mic.y(), dims.y(), max_dist);
  const auto az = axis_images(source.z(), mic.z(), dims.z(), max_dist);

  int max_refl = 0;
  for (const auto* axis : {&ax, &ay, &az}) {
    int m = 0;
    for (const auto& img : *axis) m = std::max(m, img.reflections);
    max_refl += m;
  }
  std::vector<double> beta_pow(static_cast<std::size_t>(max_refl) + 1);
  beta_pow[0] = 1.0;
  for (std::size_t k = 1; k < beta_pow.size(); ++k) beta_pow[k] = beta_pow[k - 1] * beta;

  const int order_cap = options.max_order < 0 ? max_refl : options.max_order;
  const double fs_over_c = fs / c;
  for (const auto& x : ax) {
    if (x.delta_sq > max_sq) break;
    for (const auto& y : ay) {
      const double xy = x.delta_sq + y.delta_sq;
      if (xy > max_sq) break;
      for (const auto& z : az) {
        const double d2 = xy + z.delta_sq;
        if (d2 > max_sq) break;
        const int refl = x.reflections + y.reflections + z.reflections;
        if (refl > order_cap) continue;
        const double d = std::sqrt(d2);
        const auto tap = static_cast<Index>(std::lround(d * fs_over_c));
        if (tap < n_taps) rir.taps[tap] += beta_pow[static_cast<std::size_t>(refl)] / (four_pi * d);
      }
    }
  }
  if (options.highpass_hz > 0.0) {
    // One-pole DC blocker. All image amplitudes are positive, so late taps where
    // many images share a sample pile up a slowly varying offset that inflates
    // the tail energy. Leading zeros keep the direct tap unchanged.
    const double r = 1.0 - 2.0 * std::numbers::pi * options.highpass_hz / fs;
    double prev_in = 0.0, prev_out = 0.0;
    for (Index k = 0; k < rir.taps.size(); ++k) {
      const double in = rir.taps[k];
      prev_out = in - prev_in + r * prev_out;
      prev_in = in;
      rir.taps[k] = prev_out;
    }
  }
  return rir;
}

Eigen::VectorXd convolve(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0 || b.size() == 0) return {};
  const Index n_out = a.size() + b.size() - 1;
  const Index nfft = next_pow2(n_out);
  Eigen::FFT<double> fft;
  std::vector<double> pa(static_cast<std::size_t>(nfft), 0.0), pb(static_cast<std::size_t>(nfft), 0.0);
  std::copy(a.data(), a.data() + a.size(), pa.begin());
  std::copy(b.data(), b.data() + b.size(), pb.begin());
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  std::vector<double> out;
  fft.inv(out, fa);
  return Eigen::Map<const Eigen::VectorXd>(out.data(), n_out);
}

MultichannelSignal auralize(const Scene& scene, const Eigen::VectorXd& source_signal, double fs,
                            const RirOptions& options) {
  if (source_signal.size() == 0) throw Error(ErrorKind::InvalidArgument, "source signal is empty");
  const int m = scene.mics.size();
  std::vector<Rir> rirs;
  rirs.reserve(static_cast<std::size_t>(m));
  Index n_taps = 0;
  for (int k = 0; k < m; ++k) {
    rirs.push_back(simulate_rir(scene.room, scene.source.position, scene.mics[k], fs, options));
    n_taps = std::max(n_taps, rirs.back().taps.size());
  }

  MultichannelSignal out;
  out.fs = fs;
  out.samples = Eigen::MatrixXd::Zero(source_signal.size() + n_taps - 1, m);
  for (int k = 0; k < m; ++k) {
    const Eigen::VectorXd y = convolve(source_signal, rirs[static_cast<std::size_t>(k)].taps);
    out.samples.col(k).head(y.size()) = y;
  }
  return out;
}

MultichannelSignal add_noise(const MultichannelSignal& signals, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return signals;
  Rng rng(seed);
  std::normal_distribution<double> gauss;
  MultichannelSignal out = signals;
  for (Index c = 0; c < out.samples.cols(); ++c) {
    const double power = signals.samples.col(c).squaredNorm() / double(signals.length());
    if (!(power > 0)) {
      throw Error(ErrorKind::SilentChannel, "channel " + std::to_string(c) + " has zero power");
    }
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    for (Index t = 0; t < out.samples.rows(); ++t) out.samples(t, c) += sigma * gauss(rng);
  }
  return out;
}

SourceSignal provide_source_signal(const SourceSignalConfig& config, double duration_s, double fs,
                                   std::uint64_t seed) {
  if (!(duration_s > 0)) throw Error(ErrorKind::InvalidArgument, "duration must be positive");
  const auto n = static_cast<Index>(std::lround(duration_s * fs));

  if (config.kind == SourceSignalConfig::Kind::Synthetic) {
    return {synthetic_speech_like(n, fs, seed), "synthetic:" + std::to_string(seed)};
  }

  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (std::filesystem::directory_iterator it(config.corpus_dir, ec), end; !ec && it != end;
       it.increment(ec)) {
    if (it->is_regular_file() && has_wav_extension(it->path())) files.push_back(it->path());
  }
  if (ec || files.empty()) {
    throw Error(ErrorKind::CorpusUnavailable,
                "no WAV files readable in corpus directory " + config.corpus_dir.string());
  }
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  const auto& chosen = files[std::uniform_int_distribution<std::size_t>(0, files.size() - 1)(rng)];

  const WavData wav = read_wav(chosen);
  if (wav.samples.cols() != 1) {
    throw Error(ErrorKind::UnsupportedFormat, chosen.string() + ": corpus files must be mono");
  }
  Eigen::VectorXd x = wav.samples.col(0);
  if (wav.fs != fs) x = resample_linear(x, wav.fs, fs);

  SourceSignal out;
  out.id = chosen.filename().string();
  out.samples = Eigen::VectorXd::Zero(n);
  const Index keep = std::min(n, x.size());
  out.samples.head(keep) = x.head(keep);
  return out;
}

}  // namespace dmaloc
