#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmaloc/classical.hpp"
#include "dmaloc/features.hpp"
#include "dmaloc/mlp.hpp"
#include "dmaloc/scene.hpp"

namespace dmaloc {

enum class FeatureKind { Gcc, Slf };

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view name);

/// Per-pair feature extractor H plus the frame length it expects.
struct FeatureConfig {
  FeatureKind kind = FeatureKind::Slf;
  int grid_n = 25;
  double frame_ms = 500.0;
  GccOptions gcc;
  SlfOptions slf;

  int feature_length() const { return kind == FeatureKind::Gcc ? gcc.n_central : grid_n * grid_n; }
  int input_size() const { return feature_length() + 9; }
};

/// Relation network: F maps one pair's feature (+ pair metadata) to a grid,
/// the per-pair grids are summed, G maps the sum to the output grid.
struct RelNetModel {
  FeatureConfig features;
  Mlp<float> f;
  Mlp<float> g;

  int grid_n() const { return features.grid_n; }
  int output_size() const { return features.grid_n * features.grid_n; }
  void validate() const;
};

RelNetModel make_relnet(const FeatureConfig& features, const std::vector<int>& f_layers,
                        const std::vector<int>& g_layers, std::uint64_t seed);
inline RelNetModel make_relnet(const FeatureConfig& features, std::uint64_t seed) {
  const int cells = features.grid_n * features.grid_n;
  return make_relnet(features, {cells, cells, cells}, {cells, cells, cells}, seed);
}

/// One column per unordered pair, canonical microphone order: the
/// standardized feature followed by the 9 pair-metadata entries. GCC features
/// are scaled by 1/max|value|, SLF maps min-max scaled, both per pair.
Eigen::MatrixXf pair_features(const FeatureConfig& config, const MultichannelFrame& frame,
                              const MetadataVector& meta);

/// Forward on precomputed pair features.
Eigen::VectorXf relnet_forward(const RelNetModel& model, const Eigen::MatrixXf& features);
Heatmap relnet_forward(const RelNetModel& model, const MultichannelFrame& frame,
                       const MetadataVector& meta);

/// y(u,v) = exp(-|p_uv - p_s|), distances in meters.
Heatmap target_map(const Vec2& source_xy, const Grid& grid);

template <typename Scalar>
struct LossValue {
  double loss = 0.0;
  Vector<Scalar> gradient;
};

/// Mean absolute error with subgradient sign(pred - target) / n, sign(0) = 0.
template <typename Scalar>
LossValue<Scalar> mae_loss(const Vector<Scalar>& pred, const Vector<Scalar>& target) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "MAE inputs must have equal nonzero length");
  }
  const auto n = static_cast<double>(pred.size());
  const Vector<Scalar> diff = pred - target;
  LossValue<Scalar> out;
  out.loss = diff.template cast<double>().cwiseAbs().sum() / n;
  out.gradient = diff.unaryExpr([n](Scalar d) {
    return d > Scalar(0) ? Scalar(1.0 / n) : (d < Scalar(0) ? Scalar(-1.0 / n) : Scalar(0));
  });
  return out;
}

template <typename Scalar>
struct RelNetGradients {
  MlpGradients<Scalar> f;
  MlpGradients<Scalar> g;
};

/// Batch MAE (mean over examples and cells) and its gradients for F and G.
/// `features` holds the pair columns of all examples back to back;
/// `pair_counts[b]` is the number of columns belonging to example b.
template <typename Scalar>
double relnet_batch_gradients(const Mlp<Scalar>& f, const Mlp<Scalar>& g,
                              const Matrix<Scalar>& features, std::span<const Index> pair_counts,
                              const Matrix<Scalar>& targets, RelNetGradients<Scalar>* grads) {
  const auto batch = static_cast<Index>(pair_counts.size());
  if (targets.cols() != batch || targets.rows() != g.output_size()) {
    throw Error(ErrorKind::DimensionMismatch, "target batch shape mismatch");
  }
  MlpCache<Scalar> f_cache, g_cache;
  const Matrix<Scalar> relations = mlp_forward(f, features, grads ? &f_cache : nullptr);
  Matrix<Scalar> summed(relations.rows(), batch);
  Index offset = 0;
  for (Index b = 0; b < batch; ++b) {
    summed.col(b) = relations.middleCols(offset, pair_counts[static_cast<std::size_t>(b)]).rowwise().sum();
    offset += pair_counts[static_cast<std::size_t>(b)];
  }
  if (offset != features.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "pair counts do not cover the feature columns");
  }
  const Matrix<Scalar> out = mlp_forward(g, summed, grads ? &g_cache : nullptr);
  const Matrix<Scalar> diff = out - targets;
  const double scale = 1.0 / double(diff.size());
  const double loss = diff.template cast<double>().cwiseAbs().sum() * scale;
  if (!grads) return loss;

  const Matrix<Scalar> d_out = diff.unaryExpr([scale](Scalar d) {
    return d > Scalar(0) ? Scalar(scale) : (d < Scalar(0) ? Scalar(-scale) : Scalar(0));
  });
  grads->g = mlp_backward(g, g_cache, d_out);
  Matrix<Scalar> d_relations(relations.rows(), relations.cols());
  offset = 0;
  for (Index b = 0; b < batch; ++b) {
    const Index count = pair_counts[static_cast<std::size_t>(b)];
    d_relations.middleCols(offset, count) = grads->g.input.col(b).replicate(1, count);
    offset += count;
  }
  grads->f = mlp_backward(f, f_cache, d_relations);
  return loss;
}

struct TrainConfig {
  double lr = 5e-4;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  AdamConfig adam() const { return {lr, beta1, beta2, epsilon}; }
  void validate() const;
};

struct TrainingExample {
  Eigen::MatrixXf features;  // input_size x pairs
  Eigen::VectorXf target;    // grid_n^2
  int num_mics = 0;
};

TrainingExample make_training_example(const FeatureConfig& config, const MultichannelFrame& frame,
                                      const Scene& scene);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  RelNetModel best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool early_stopped = false;
};

double dataset_loss(const RelNetModel& model, std::span<const TrainingExample> examples);

/// Minibatch Adam on MAE with early stopping on the validation loss; returns
/// the best-validation weights. Deterministic for a given seed.
TrainResult train(const RelNetModel& init, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> val_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const RelNetModel& model, const std::filesystem::path& path);
RelNetModel load_checkpoint(const std::filesystem::path& path);

/// relnet_forward followed by max peak picking on the room-relative grid.
LocalizationResult gnn_localize(const RelNetModel& model, const MultichannelFrame& frame,
                                const MetadataVector& meta, const Grid& grid);

}  // namespace dmaloc
