#pragma once

#include <complex>
#include <filesystem>
#include <utility>
#include <vector>

#include "dmaloc/room_acoustics.hpp"
#include "dmaloc/types.hpp"

namespace dmaloc {

/// n x n cells over the room footprint [0,width] x [0,length].
struct Grid {
  int n = 25;
  double width = 0.0;
  double length = 0.0;

  Grid() = default;
  Grid(int n, double width, double length);
  static Grid for_room(const Vec3& room, int n);

  Index size() const { return Index(n) * n; }
  Index flat(int u, int v) const { return Index(u) * n + v; }
  Vec2 cell_center(int u, int v) const {
    return {(u + 0.5) * width / n, (v + 0.5) * length / n};
  }
  Vec2 cell_center(Index flat_index) const {
    return cell_center(static_cast<int>(flat_index / n), static_cast<int>(flat_index % n));
  }
  double cell_diagonal() const { return std::hypot(width / n, length / n); }
};

enum class LagInterpolation {
  Linear,   // correlation interpolated at the cell-centre lag
  Nearest,  // correlation at the nearest integer lag
  CellMax,  // maximum of the interpolated correlation over the lags the cell spans
};

struct GccOptions {
  int fft_size = 1024;
  int n_central = 200;
  double epsilon = 1e-12;
};

/// GCC-PHAT output. `full[k]` holds lag k - fft_size/2; `central` is the
/// contiguous slice of lags [-n_central/2, n_central/2).
struct CorrelationVector {
  Eigen::VectorXd full;
  Eigen::VectorXd central;
  double fs = kDefaultSampleRate;

  Index zero_index() const { return full.size() / 2; }
  double lag_at(Index k) const { return double(k - zero_index()); }
  /// Argmax over the full vector; ties go to the lowest index.
  Index peak_index() const;
  double peak_lag() const { return lag_at(peak_index()); }
  /// Value at a fractional lag. Lags past either end clamp to the boundary value.
  double value_at_lag(double lag, LagInterpolation mode = LagInterpolation::Linear) const;
  /// Max of the linearly interpolated correlation over [lo, hi].
  double max_over_lags(double lo, double hi) const;
  /// (value, lag) of the maximum over [lo, hi]; interior ties keep the lowest lag.
  std::pair<double, double> argmax_over_lags(double lo, double hi) const;
};

/// Frame of `frame_ms` with the highest mean channel energy among
/// non-overlapping windows; ties keep the earliest window.
MultichannelFrame extract_frame(const MultichannelSignal& signals, double frame_ms);
Index best_frame_offset(const MultichannelSignal& signals, Index frame_len);

/// C / max(|C|, eps), elementwise.
void phat_normalize(std::vector<std::complex<double>>& cross_spectrum, double epsilon);

/// Peak lag approximates fs * (tau_i - tau_j).
CorrelationVector gcc_phat(const Eigen::Ref<const Eigen::VectorXd>& x_i,
                           const Eigen::Ref<const Eigen::VectorXd>& x_j, double fs,
                           const GccOptions& options = {});

/// (|q - p_i| - |q - p_j|) / c for every cell centre q lifted to z_plane.
Heatmap theoretical_tdoa_grid(const Vec3& p_i, const Vec3& p_j, const Grid& grid, double z_plane,
                              double speed_of_sound = kSpeedOfSound);

struct SlfOptions {
  LagInterpolation interpolation = LagInterpolation::CellMax;
  double speed_of_sound = kSpeedOfSound;
};

Heatmap slf_project(const CorrelationVector& corr, const Vec3& p_i, const Vec3& p_j,
                    const Grid& grid, double z_plane, const SlfOptions& options = {});

/// Projection onto the slab z in [z_lo, z_hi]. CellMax spans the whole voxel;
/// the point-sampled modes use the slab midpoint.
Heatmap slf_project(const CorrelationVector& corr, const Vec3& p_i, const Vec3& p_j,
                    const Grid& grid, double z_lo, double z_hi, const SlfOptions& options = {});

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& map, int n);
Heatmap read_heatmap_csv(const std::filesystem::path& path);
/// 8-bit binary PGM, min-max normalized; a constant map renders black.
void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& map, int n);

}  // namespace dmaloc
