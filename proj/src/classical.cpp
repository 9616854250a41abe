#include "dmaloc/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dmaloc/errors.hpp"

namespace dmaloc {
namespace {

void check_inputs(const MultichannelFrame& frame, const MetadataVector& meta) {
  if (meta.num_mics() < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 microphones");
  if (frame.num_channels() != meta.num_mics()) {
    throw Error(ErrorKind::DimensionMismatch, "frame has " + std::to_string(frame.num_channels()) +
                                                  " channels, metadata has " +
                                                  std::to_string(meta.num_mics()) + " mics");
  }
}

struct Slab {
  double lo, hi, mid;
};

std::vector<Slab> height_slabs(const MetadataVector& meta, int count) {
  if (count < 0) throw Error(ErrorKind::InvalidArgument, "height_slabs must be >= 0");
  if (count == 0) {
    const double z = meta.mean_mic_height();
    return {{z, z, z}};
  }
  const double h = meta.room().z();
  std::vector<Slab> slabs;
  for (int k = 0; k < count; ++k) {
    const double lo = h * k / count, hi = h * (k + 1) / count;
    slabs.push_back({lo, hi, 0.5 * (lo + hi)});
  }
  return slabs;
}

struct Pair {
  int i, j;
  Vec3 a, b;
  CorrelationVector corr;
};

// Lags are in samples throughout; lag(x) follows the gcc_phat sign convention.
struct PairSet {
  std::vector<Pair> pairs;
  double scale = 0.0;  // fs / c

  double lag(const Pair& p, const Vec3& x) const {
    return scale * ((x - p.a).norm() - (x - p.b).norm());
  }
  Vec3 lag_gradient(const Pair& p, const Vec3& x) const {
    auto unit = [](const Vec3& d) {
      const double n = d.norm();
      return n > 0.0 ? Vec3(d / n) : Vec3::Zero();
    };
    return scale * (unit(x - p.a) - unit(x - p.b));
  }
};

PairSet make_pairs(const MultichannelFrame& frame, const MetadataVector& meta,
                   const ClassicalOptions& options) {
  check_inputs(frame, meta);
  const auto order = canonical_mic_order(meta);
  PairSet set;
  set.scale = frame.fs / options.slf.speed_of_sound;
  for (const auto& [a, b] : enumerate_pairs(meta.num_mics())) {
    const int i = order[static_cast<std::size_t>(a)];
    const int j = order[static_cast<std::size_t>(b)];
    set.pairs.push_back({i, j, meta.mic(i), meta.mic(j),
                         gcc_phat(frame.samples.col(i), frame.samples.col(j), frame.fs, options.gcc)});
  }
  return set;
}

struct Box {
  Vec3 lo, hi;
  Vec3 centre() const { return 0.5 * (lo + hi); }
};

Box voxel(const Grid& grid, Index cell, const Slab& slab) {
  const auto u = static_cast<double>(cell / grid.n), v = static_cast<double>(cell % grid.n);
  const double dx = grid.width / grid.n, dy = grid.length / grid.n;
  return {Vec3(u * dx, v * dy, slab.lo), Vec3((u + 1) * dx, (v + 1) * dy, slab.hi)};
}

// Lag range over the 3x3x3 lattice on the box; matches the CellMax projection.
std::pair<double, double> lag_span(const PairSet& set, const Pair& p, const Box& box) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) {
        const Vec3 t(a * 0.5, b * 0.5, c * 0.5);
        const double lag = set.lag(p, box.lo + t.cwiseProduct(box.hi - box.lo));
        lo = std::min(lo, lag);
        hi = std::max(hi, lag);
      }
  return {lo, hi};
}

// Box-clamped Gauss-Newton on sum_p (lag_p(x) - target_p)^2.
Vec3 fit_lags(const PairSet& set, const std::vector<double>& targets, const Box& box) {
  Vec3 x = box.centre();
  for (int it = 0; it < 8; ++it) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Vec3 jtr = Vec3::Zero();
    for (std::size_t k = 0; k < set.pairs.size(); ++k) {
      const Vec3 g = set.lag_gradient(set.pairs[k], x);
      jtj += g * g.transpose();
      jtr += g * (set.lag(set.pairs[k], x) - targets[k]);
    }
    jtj.diagonal().array() += 1e-9 * (jtj.trace() + 1.0);
    const Vec3 step = jtj.ldlt().solve(-jtr);
    if (!step.allFinite()) break;
    const Vec3 next = (x + step).cwiseMax(box.lo).cwiseMin(box.hi);
    const double moved = (next - x).norm();
    x = next;
    if (moved < 1e-6) break;
  }
  return x;
}

struct Candidate {
  double bound;
  Index cell;
  std::size_t slab;
};

bool better(double a, double b, PeakMode mode) { return mode == PeakMode::Max ? a > b : a < b; }

// Best bound first; index order breaks ties.
void sort_candidates(std::vector<Candidate>& c, PeakMode mode) {
  std::sort(c.begin(), c.end(), [mode](const Candidate& x, const Candidate& y) {
    if (x.bound != y.bound) return better(x.bound, y.bound, mode);
    if (x.cell != y.cell) return x.cell < y.cell;
    return x.slab < y.slab;
  });
}

// Shared driver. `centre_map(slab)` scores every cell at its voxel centre,
// `bound_map(slab)` gives an optimistic per-voxel score, and `refined(box)`
// returns the score at a point found inside the voxel. Each cell reports its
// best score over slabs; voxels whose bound cannot beat the best score seen so
// far are skipped.
template <typename CentreMap, typename BoundMap, typename Refined, typename PairMap>
LocalizationResult search(const PairSet& set, const Grid& grid, const MetadataVector& meta,
                          const ClassicalOptions& options, PeakMode mode, CentreMap&& centre_map,
                          BoundMap&& bound_map, Refined&& refined, PairMap&& pair_map) {
  const auto slabs = height_slabs(meta, options.height_slabs);
  LocalizationResult result;
  std::vector<std::size_t> winner(static_cast<std::size_t>(grid.size()), 0);
  std::vector<Candidate> candidates;
  for (std::size_t s = 0; s < slabs.size(); ++s) {
    const Heatmap map = centre_map(slabs[s]);
    if (s == 0) {
      result.heatmap = map;
    } else {
      for (Index k = 0; k < grid.size(); ++k) {
        if (better(map[k], result.heatmap[k], mode)) {
          result.heatmap[k] = map[k];
          winner[static_cast<std::size_t>(k)] = s;
        }
      }
    }
    if (options.refine) {
      const Heatmap bound = bound_map(slabs[s]);
      for (Index k = 0; k < grid.size(); ++k) candidates.push_back({bound[k], k, s});
    }
  }

  if (options.refine) {
    sort_candidates(candidates, mode);
    double incumbent = mode == PeakMode::Max ? result.heatmap.maxCoeff() : result.heatmap.minCoeff();
    for (const auto& c : candidates) {
      if (!better(c.bound, incumbent, mode)) break;
      const double score = refined(voxel(grid, c.cell, slabs[c.slab]));
      if (better(score, result.heatmap[c.cell], mode)) {
        result.heatmap[c.cell] = score;
        winner[static_cast<std::size_t>(c.cell)] = c.slab;
      }
      if (better(score, incumbent, mode)) incumbent = score;
    }
  }

  result.peak_index = peak_index(result.heatmap, mode);
  result.estimate = grid.cell_center(result.peak_index);
  if (options.keep_pair_maps) {
    const Slab& best = slabs[winner[static_cast<std::size_t>(result.peak_index)]];
    result.per_pair_maps.emplace();
    for (const auto& p : set.pairs) result.per_pair_maps->push_back(pair_map(p, best));
  }
  return result;
}

}  // namespace

std::vector<std::pair<int, int>> enumerate_pairs(int m) {
  if (m < 2) throw Error(ErrorKind::InvalidArgument, "pair enumeration needs m >= 2");
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
  return pairs;
}

std::vector<int> canonical_mic_order(const MetadataVector& meta) {
  std::vector<int> order(static_cast<std::size_t>(meta.num_mics()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Vec3 pa = meta.mic(a), pb = meta.mic(b);
    return std::lexicographical_compare(pa.data(), pa.data() + 3, pb.data(), pb.data() + 3);
  });
  return order;
}

Index peak_index(const Heatmap& map, PeakMode mode) {
  if (map.size() == 0) throw Error(ErrorKind::InvalidArgument, "empty heatmap");
  if (map.hasNaN()) throw Error(ErrorKind::NumericalFailure, "heatmap contains NaN");
  Index best = 0;
  for (Index k = 1; k < map.size(); ++k) {
    if (better(map[k], map[best], mode)) best = k;
  }
  return best;
}

Vec2 pick_peak(const Heatmap& map, PeakMode mode, const Grid& grid) {
  if (map.size() != grid.size()) {
    throw Error(ErrorKind::DimensionMismatch, "heatmap does not match grid");
  }
  return grid.cell_center(peak_index(map, mode));
}

LocalizationResult tdoa_localize(const MultichannelFrame& frame, const MetadataVector& meta,
                                 const Grid& grid, const ClassicalOptions& options) {
  const PairSet set = make_pairs(frame, meta, options);
  const double c = options.slf.speed_of_sound;
  const double fs = frame.fs;
  std::vector<double> measured;
  for (const auto& p : set.pairs) measured.push_back(double(p.corr.peak_lag()));

  // Per-pair distance in seconds between a theoretical lag and the measured one.
  auto distance = [&](double lag_samples, std::size_t k) {
    const double d = (lag_samples - measured[k]) / fs;
    return options.distance == TdoaDistance::Squared ? d * d : std::abs(d);
  };
  auto pair_map = [&](const Pair& p, const Slab& slab) {
    Heatmap diff = theoretical_tdoa_grid(p.a, p.b, grid, slab.mid, c).array() -
                   double(p.corr.peak_lag()) / fs;
    if (options.distance == TdoaDistance::Squared) return Heatmap(diff.array().square());
    return Heatmap(diff.array().abs());
  };
  auto centre_map = [&](const Slab& slab) {
    Heatmap sum = Heatmap::Zero(grid.size());
    for (const auto& p : set.pairs) sum += pair_map(p, slab);
    return sum;
  };
  // Lower bound: distance from each measured lag to the lag range of the voxel.
  auto bound_map = [&](const Slab& slab) {
    Heatmap out(grid.size());
    for (Index k = 0; k < grid.size(); ++k) {
      const Box box = voxel(grid, k, slab);
      double sum = 0.0;
      for (std::size_t q = 0; q < set.pairs.size(); ++q) {
        const auto [lo, hi] = lag_span(set, set.pairs[q], box);
        sum += distance(std::clamp(measured[q], lo, hi), q);
      }
      out[k] = sum;
    }
    return out;
  };
  auto refined = [&](const Box& box) {
    const Vec3 x = fit_lags(set, measured, box);
    double sum = 0.0;
    for (std::size_t q = 0; q < set.pairs.size(); ++q) sum += distance(set.lag(set.pairs[q], x), q);
    return sum;
  };
  return search(set, grid, meta, options, PeakMode::Min, centre_map, bound_map, refined, pair_map);
}

LocalizationResult slf_localize(const MultichannelFrame& frame, const MetadataVector& meta,
                                const Grid& grid, const ClassicalOptions& options) {
  const PairSet set = make_pairs(frame, meta, options);
  const LagInterpolation point_mode = options.slf.interpolation == LagInterpolation::Nearest
                                          ? LagInterpolation::Nearest
                                          : LagInterpolation::Linear;
  SlfOptions centre_opts = options.slf;
  SlfOptions bound_opts = options.slf;
  if (options.refine) {
    // The voxel-wide maximum only bounds the search; cells report attained values.
    centre_opts.interpolation = point_mode;
    bound_opts.interpolation = LagInterpolation::CellMax;
  }

  auto pair_map = [&](const Pair& p, const Slab& slab) {
    return slf_project(p.corr, p.a, p.b, grid, slab.lo, slab.hi, options.slf);
  };
  auto summed = [&](const Slab& slab, const SlfOptions& opts) {
    Heatmap sum = Heatmap::Zero(grid.size());
    for (const auto& p : set.pairs) sum += slf_project(p.corr, p.a, p.b, grid, slab.lo, slab.hi, opts);
    return sum;
  };
  auto centre_map = [&](const Slab& slab) { return summed(slab, centre_opts); };
  auto bound_map = [&](const Slab& slab) { return summed(slab, bound_opts); };
  // Fit the voxel point to each pair's strongest lag inside the voxel's span.
  auto refined = [&](const Box& box) {
    std::vector<double> targets;
    for (const auto& p : set.pairs) {
      const auto [lo, hi] = lag_span(set, p, box);
      targets.push_back(p.corr.argmax_over_lags(lo, hi).second);
    }
    const Vec3 x = fit_lags(set, targets, box);
    double sum = 0.0;
    for (const auto& p : set.pairs) sum += p.corr.value_at_lag(set.lag(p, x), point_mode);
    return sum;
  };
  return search(set, grid, meta, options, PeakMode::Max, centre_map, bound_map, refined, pair_map);
}

}  // namespace dmaloc
