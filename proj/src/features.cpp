#include "dmaloc/features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "dmaloc/errors.hpp"

namespace dmaloc {

Grid::Grid(int n_, double width_, double length_) : n(n_), width(width_), length(length_) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "grid needs n >= 2");
  if (!(width > 0 && length > 0)) {
    throw Error(ErrorKind::InvalidArgument, "grid footprint must be positive");
  }
}

Grid Grid::for_room(const Vec3& room, int n) { return Grid(n, room.x(), room.y()); }

Index CorrelationVector::peak_index() const {
  Index best = 0;
  for (Index k = 1; k < full.size(); ++k) {
    if (full[k] > full[best]) best = k;
  }
  return best;
}

double CorrelationVector::value_at_lag(double lag, LagInterpolation mode) const {
  const double pos = std::clamp(lag + double(zero_index()), 0.0, double(full.size() - 1));
  if (mode == LagInterpolation::Nearest) return full[static_cast<Index>(std::lround(pos))];
  const auto lo = static_cast<Index>(std::floor(pos));
  if (lo + 1 >= full.size()) return full[full.size() - 1];
  const double frac = pos - double(lo);
  return (1.0 - frac) * full[lo] + frac * full[lo + 1];
}

double CorrelationVector::max_over_lags(double lo, double hi) const {
  return argmax_over_lags(lo, hi).first;
}

std::pair<double, double> CorrelationVector::argmax_over_lags(double lo, double hi) const {
  std::pair<double, double> best{value_at_lag(lo), lo};
  const double at_hi = value_at_lag(hi);
  if (at_hi > best.first) best = {at_hi, hi};
  const auto first = static_cast<Index>(std::max(0.0, std::ceil(lo + double(zero_index()))));
  const auto last = static_cast<Index>(
      std::min(double(full.size() - 1), std::floor(hi + double(zero_index()))));
  for (Index k = first; k <= last; ++k) {
    if (full[k] > best.first) best = {full[k], double(k - zero_index())};
  }
  return best;
}

Index best_frame_offset(const MultichannelSignal& signals, Index frame_len) {
  if (frame_len <= 0) throw Error(ErrorKind::InvalidArgument, "frame length must be positive");
  if (signals.length() < frame_len) {
    throw Error(ErrorKind::SignalTooShort,
                "signal has " + std::to_string(signals.length()) + " samples, frame needs " +
                    std::to_string(frame_len));
  }
  const Index windows = signals.length() / frame_len;
  Index best = 0;
  double best_energy = -1.0;
  for (Index w = 0; w < windows; ++w) {
    const double energy =
        signals.samples.middleRows(w * frame_len, frame_len).squaredNorm() / signals.num_channels();
    if (energy > best_energy) {
      best_energy = energy;
      best = w * frame_len;
    }
  }
  return best;
}

MultichannelFrame extract_frame(const MultichannelSignal& signals, double frame_ms) {
  const auto frame_len = static_cast<Index>(std::lround(signals.fs * frame_ms / 1000.0));
  const Index offset = best_frame_offset(signals, frame_len);
  return {signals.samples.middleRows(offset, frame_len), signals.fs};
}

void phat_normalize(std::vector<std::complex<double>>& cross_spectrum, double epsilon) {
  for (auto& c : cross_spectrum) c /= std::max(std::abs(c), epsilon);
}

CorrelationVector gcc_phat(const Eigen::Ref<const Eigen::VectorXd>& x_i,
                           const Eigen::Ref<const Eigen::VectorXd>& x_j, double fs,
                           const GccOptions& options) {
  const Index n = options.fft_size;
  if (n < 2 || n % 2 != 0) throw Error(ErrorKind::InvalidArgument, "fft_size must be even");
  if (options.n_central <= 0 || options.n_central > n || options.n_central % 2 != 0) {
    throw Error(ErrorKind::InvalidArgument, "n_central must be even and within fft_size");
  }
  if (x_i.size() != x_j.size()) {
    throw Error(ErrorKind::DimensionMismatch, "GCC-PHAT inputs differ in length");
  }
  if (x_i.size() < n) {
    throw Error(ErrorKind::SignalTooShort, "frame shorter than the DFT size");
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  const std::size_t bins = static_cast<std::size_t>(n / 2 + 1);
  std::vector<std::complex<double>> acc(bins, 0.0), spec_i, spec_j;
  std::vector<double> buf_i(static_cast<std::size_t>(n)), buf_j(static_cast<std::size_t>(n));

  const Index hop = n / 2;
  int windows = 0;
  for (Index start = 0; start + n <= x_i.size(); start += hop, ++windows) {
    Eigen::VectorXd::Map(buf_i.data(), n) = x_i.segment(start, n);
    Eigen::VectorXd::Map(buf_j.data(), n) = x_j.segment(start, n);
    fft.fwd(spec_i, buf_i);
    fft.fwd(spec_j, buf_j);
    for (std::size_t k = 0; k < bins; ++k) spec_i[k] *= std::conj(spec_j[k]);
    phat_normalize(spec_i, options.epsilon);
    for (std::size_t k = 0; k < bins; ++k) acc[k] += spec_i[k];
  }
  for (auto& c : acc) c /= double(windows);

  std::vector<double> circular;
  fft.inv(circular, acc, n);

  CorrelationVector out;
  out.fs = fs;
  out.full.resize(n);
  for (Index k = 0; k < n; ++k) out.full[k] = circular[static_cast<std::size_t>((k + n / 2) % n)];
  out.central = out.full.segment(n / 2 - options.n_central / 2, options.n_central);
  return out;
}

Heatmap theoretical_tdoa_grid(const Vec3& p_i, const Vec3& p_j, const Grid& grid, double z_plane,
                              double speed_of_sound) {
  Heatmap out(grid.size());
  for (int u = 0; u < grid.n; ++u) {
    for (int v = 0; v < grid.n; ++v) {
      const Vec2 c = grid.cell_center(u, v);
      const Vec3 q(c.x(), c.y(), z_plane);
      out[grid.flat(u, v)] = ((q - p_i).norm() - (q - p_j).norm()) / speed_of_sound;
    }
  }
  return out;
}

Heatmap slf_project(const CorrelationVector& corr, const Vec3& p_i, const Vec3& p_j,
                    const Grid& grid, double z_plane, const SlfOptions& options) {
  return slf_project(corr, p_i, p_j, grid, z_plane, z_plane, options);
}

Heatmap slf_project(const CorrelationVector& corr, const Vec3& p_i, const Vec3& p_j,
                    const Grid& grid, double z_lo, double z_hi, const SlfOptions& options) {
  if (!(z_lo <= z_hi)) throw Error(ErrorKind::InvalidArgument, "slf_project: z_lo > z_hi");
  const double c = options.speed_of_sound;
  auto lag_at = [&](double x, double y, double z) {
    const Vec3 q(x, y, z);
    return corr.fs * ((q - p_i).norm() - (q - p_j).norm()) / c;
  };

  Heatmap out(grid.size());
  const int n = grid.n;
  if (options.interpolation != LagInterpolation::CellMax) {
    const double z = 0.5 * (z_lo + z_hi);
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) {
        const Vec2 centre = grid.cell_center(u, v);
        out[grid.flat(u, v)] =
            corr.value_at_lag(lag_at(centre.x(), centre.y(), z), options.interpolation);
      }
    }
    return out;
  }

  // Half-cell lattice: point (a, b) sits at (a*w/2n, b*l/2n); cell (u, v) owns
  // points 2u..2u+2 by 2v..2v+2. Lag span per cell is the min/max over those
  // points and over {z_lo, mid, z_hi}.
  const int pts = 2 * n + 1;
  const int nz = z_lo == z_hi ? 1 : 3;
  const double zs[3] = {z_lo, 0.5 * (z_lo + z_hi), z_hi};
  Eigen::MatrixXd lo(pts, pts), hi(pts, pts);
  for (int a = 0; a < pts; ++a) {
    const double x = a * grid.width / (2.0 * n);
    for (int b = 0; b < pts; ++b) {
      const double y = b * grid.length / (2.0 * n);
      double l = std::numeric_limits<double>::infinity(), h = -l;
      for (int k = 0; k < nz; ++k) {
        const double lag = lag_at(x, y, zs[k]);
        l = std::min(l, lag);
        h = std::max(h, lag);
      }
      lo(a, b) = l;
      hi(a, b) = h;
    }
  }
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      out[grid.flat(u, v)] = corr.max_over_lags(lo.block<3, 3>(2 * u, 2 * v).minCoeff(),
                                                hi.block<3, 3>(2 * u, 2 * v).maxCoeff());
    }
  }
  return out;
}

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& map, int n) {
  if (map.size() != Index(n) * n) {
    throw Error(ErrorKind::DimensionMismatch, "heatmap length is not n^2");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << std::setprecision(17);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) out << (v ? "," : "") << map[Index(u) * n + v];
    out << '\n';
  }
}

Heatmap read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::UnsupportedFormat, path.string() + ": bad value '" + cell + "'");
      }
    }
  }
  const auto n = static_cast<Index>(std::lround(std::sqrt(double(values.size()))));
  if (n < 1 || n * n != static_cast<Index>(values.size())) {
    throw Error(ErrorKind::UnsupportedFormat, path.string() + ": value count is not a square");
  }
  return Eigen::Map<const Heatmap>(values.data(), n * n);
}

void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& map, int n) {
  if (map.size() != Index(n) * n) {
    throw Error(ErrorKind::DimensionMismatch, "heatmap length is not n^2");
  }
  const double lo = map.minCoeff();
  const double range = map.maxCoeff() - lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P5\n" << n << ' ' << n << "\n255\n";
  for (Index k = 0; k < map.size(); ++k) {
    const double scaled = range > 0 ? (map[k] - lo) / range : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * scaled))));
  }
}

}  // namespace dmaloc
