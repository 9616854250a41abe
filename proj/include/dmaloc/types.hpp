#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace dmaloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Flattened n x n map, flat index = u * n + v (u along width, v along length).
using Heatmap = Eigen::VectorXd;

inline constexpr double kSpeedOfSound = 343.0;     // m/s
inline constexpr double kDefaultSampleRate = 16000.0;

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent sub-seeds from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dmaloc
