#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dmaloc/features.hpp"
#include "dmaloc/scene.hpp"

namespace dmaloc {

struct LocalizationResult {
  Vec2 estimate = Vec2::Zero();  // a cell centre, meters
  Index peak_index = 0;
  Heatmap heatmap;
  // Canonical pair order, evaluated on the height slab that won the peak cell.
  std::optional<std::vector<Heatmap>> per_pair_maps;
};

enum class PeakMode { Min, Max };

/// All (i, j) with i < j, lexicographic.
std::vector<std::pair<int, int>> enumerate_pairs(int m);

/// Microphone order sorted by (x, y, z). Pair loops run over this order so that
/// the aggregate is independent of how the caller numbered the microphones.
std::vector<int> canonical_mic_order(const MetadataVector& meta);

/// Extremal flat index; ties go to the lowest index. Throws on NaN.
Index peak_index(const Heatmap& map, PeakMode mode);
Vec2 pick_peak(const Heatmap& map, PeakMode mode, const Grid& grid);

enum class TdoaDistance { Squared, Absolute };

struct ClassicalOptions {
  GccOptions gcc;
  SlfOptions slf;
  TdoaDistance distance = TdoaDistance::Squared;
  bool keep_pair_maps = false;
  // Source height is unknown: [0, room height] is cut into this many slabs and
  // each cell keeps its best slab. 0 uses only the mean-microphone-height plane.
  int height_slabs = 12;
  // Score each cell by the best point found inside its column instead of at
  // the voxel centres. Voxels are visited best-bound first and skipped once
  // their bound cannot beat the best score so far.
  bool refine = true;
};

/// Sum over pairs of the distance between each cell's theoretical TDOA and the
/// GCC-PHAT peak TDOA; estimate at the minimum.
LocalizationResult tdoa_localize(const MultichannelFrame& frame, const MetadataVector& meta,
                                 const Grid& grid, const ClassicalOptions& options = {});

/// Sum over pairs of SLF projections; estimate at the maximum.
LocalizationResult slf_localize(const MultichannelFrame& frame, const MetadataVector& meta,
                                const Grid& grid, const ClassicalOptions& options = {});

}  // namespace dmaloc
