#include "dmaloc/relnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

namespace dmaloc {

std::string_view to_string(FeatureKind kind) { return kind == FeatureKind::Gcc ? "gcc" : "slf"; }

FeatureKind feature_kind_from_string(std::string_view name) {
  if (name == "gcc") return FeatureKind::Gcc;
  if (name == "slf") return FeatureKind::Slf;
  throw Error(ErrorKind::InvalidArgument, "unknown feature kind '" + std::string(name) + "'");
}

void RelNetModel::validate() const {
  const int cells = output_size();
  if (f.input_size() != features.input_size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "F input size " + std::to_string(f.input_size()) + " does not match " +
                    std::string(to_string(features.kind)) + " feature size " +
                    std::to_string(features.input_size()));
  }
  if (f.output_size() != cells || g.input_size() != cells || g.output_size() != cells) {
    throw Error(ErrorKind::DimensionMismatch, "F output, G input and G output must all be grid_n^2");
  }
}

RelNetModel make_relnet(const FeatureConfig& features, const std::vector<int>& f_layers,
                        const std::vector<int>& g_layers, std::uint64_t seed) {
  Rng rng(seed);
  RelNetModel model;
  model.features = features;
  model.f = Mlp<float>::random({features.input_size(), f_layers}, rng);
  model.g = Mlp<float>::random({model.f.output_size(), g_layers}, rng);
  model.validate();
  return model;
}

Eigen::MatrixXf pair_features(const FeatureConfig& config, const MultichannelFrame& frame,
                              const MetadataVector& meta) {
  const int m = meta.num_mics();
  if (m < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 microphones");
  if (frame.num_channels() != m) {
    throw Error(ErrorKind::DimensionMismatch, "frame channels do not match metadata");
  }
  const auto order = canonical_mic_order(meta);
  const MetadataVector canonical = meta.permuted(order);
  const auto pairs = enumerate_pairs(m);
  const Grid grid = Grid::for_room(meta.room(), config.grid_n);
  const double z = meta.mean_mic_height();
  const int len = config.feature_length();

  Eigen::MatrixXf out(config.input_size(), static_cast<Index>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int i = order[static_cast<std::size_t>(pairs[p].first)];
    const int j = order[static_cast<std::size_t>(pairs[p].second)];
    const auto corr = gcc_phat(frame.samples.col(i), frame.samples.col(j), frame.fs, config.gcc);
    Eigen::VectorXd feature;
    if (config.kind == FeatureKind::Gcc) {
      feature = corr.central;
      const double peak = feature.cwiseAbs().maxCoeff();
      if (peak > 0) feature /= peak;
    } else {
      feature = slf_project(corr, meta.mic(i), meta.mic(j), grid, z, config.slf);
      const double lo = feature.minCoeff();
      const double range = feature.maxCoeff() - lo;
      feature = range > 0 ? Eigen::VectorXd((feature.array() - lo) / range)
                          : Eigen::VectorXd::Zero(feature.size());
    }
    const auto col = static_cast<Index>(p);
    out.col(col).head(len) = feature.cast<float>();
    out.col(col).tail<9>() = pair_metadata(canonical, pairs[p].first, pairs[p].second).cast<float>();
  }
  return out;
}

Eigen::VectorXf relnet_forward(const RelNetModel& model, const Eigen::MatrixXf& features) {
  if (features.rows() != model.f.input_size()) {
    throw Error(ErrorKind::DimensionMismatch, "pair features do not match the model input size");
  }
  if (features.cols() == 0) throw Error(ErrorKind::InvalidArgument, "no microphone pairs");
  const Eigen::MatrixXf relations = mlp_forward(model.f, Eigen::Ref<const Eigen::MatrixXf>(features));
  const Eigen::VectorXf summed = relations.rowwise().sum();
  return mlp_forward(model.g, summed);
}

Heatmap relnet_forward(const RelNetModel& model, const MultichannelFrame& frame,
                       const MetadataVector& meta) {
  return relnet_forward(model, pair_features(model.features, frame, meta)).cast<double>();
}

Heatmap target_map(const Vec2& source_xy, const Grid& grid) {
  Heatmap out(grid.size());
  for (Index k = 0; k < grid.size(); ++k) out[k] = std::exp(-(grid.cell_center(k) - source_xy).norm());
  return out;
}

void TrainConfig::validate() const {
  if (!(lr > 0) || batch_size <= 0 || max_epochs <= 0 || patience <= 0 || !(beta1 > 0) ||
      !(beta2 > 0) || !(epsilon > 0)) {
    throw Error(ErrorKind::InvalidConfig, "training hyperparameters must be positive");
  }
}

TrainingExample make_training_example(const FeatureConfig& config, const MultichannelFrame& frame,
                                      const Scene& scene) {
  const MetadataVector meta = build_metadata(scene);
  TrainingExample ex;
  ex.features = pair_features(config, frame, meta);
  ex.target = target_map(scene.source_xy(), Grid::for_room(meta.room(), config.grid_n)).cast<float>();
  ex.num_mics = meta.num_mics();
  return ex;
}

namespace {

struct Batch {
  Eigen::MatrixXf features;
  Eigen::MatrixXf targets;
  std::vector<Index> counts;
};

Batch gather(std::span<const TrainingExample> examples, std::span<const std::size_t> indices) {
  Batch batch;
  Index total = 0;
  for (std::size_t k : indices) total += examples[k].features.cols();
  const Index rows = examples[indices.front()].features.rows();
  batch.features.resize(rows, total);
  batch.targets.resize(examples[indices.front()].target.size(), static_cast<Index>(indices.size()));
  Index offset = 0;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& ex = examples[indices[b]];
    batch.features.middleCols(offset, ex.features.cols()) = ex.features;
    batch.targets.col(static_cast<Index>(b)) = ex.target;
    batch.counts.push_back(ex.features.cols());
    offset += ex.features.cols();
  }
  return batch;
}

void check_examples(const RelNetModel& model, std::span<const TrainingExample> examples,
                    const char* name) {
  if (examples.empty()) {
    throw Error(ErrorKind::EmptyDataset, std::string(name) + " set is empty");
  }
  for (const auto& ex : examples) {
    if (ex.features.rows() != model.f.input_size() || ex.target.size() != model.output_size() ||
        ex.features.cols() == 0) {
      throw Error(ErrorKind::DimensionMismatch,
                  std::string(name) + " example does not match the model's feature kind/grid");
    }
  }
}

}  // namespace

double dataset_loss(const RelNetModel& model, std::span<const TrainingExample> examples) {
  check_examples(model, examples, "evaluation");
  constexpr std::size_t kChunk = 64;
  std::vector<std::size_t> indices(examples.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  double total = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const auto chunk = std::span<const std::size_t>(indices).subspan(
        start, std::min(kChunk, indices.size() - start));
    const Batch batch = gather(examples, chunk);
    total += relnet_batch_gradients<float>(model.f, model.g, batch.features, batch.counts,
                                           batch.targets, nullptr) *
             double(chunk.size());
  }
  return total / double(examples.size());
}

TrainResult train(const RelNetModel& init, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> val_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  init.validate();
  check_examples(init, train_set, "training");
  check_examples(init, val_set, "validation");

  RelNetModel model = init;
  AdamState<float> f_state(model.f), g_state(model.g);
  const AdamConfig adam = config.adam();
  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const auto indices = std::span<const std::size_t>(order).subspan(
          start, std::min(batch_size, order.size() - start));
      const Batch batch = gather(train_set, indices);
      RelNetGradients<float> grads;
      const double loss = relnet_batch_gradients<float>(model.f, model.g, batch.features,
                                                        batch.counts, batch.targets, &grads);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::NumericalFailure, "non-finite training loss at epoch " +
                                                     std::to_string(epoch) + ", batch starting " +
                                                     std::to_string(start));
      }
      adam_step(f_state, model.f, grads.f, adam);
      adam_step(g_state, model.g, grads.g, adam);
      loss_sum += loss * double(indices.size());
    }

    EpochRecord record{epoch, loss_sum / double(order.size()), dataset_loss(model, val_set)};
    if (!std::isfinite(record.val_loss)) {
      throw Error(ErrorKind::NumericalFailure,
                  "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      result.best = model;
      result.best_epoch = epoch;
      stall = 0;
    } else if (++stall >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

LocalizationResult gnn_localize(const RelNetModel& model, const MultichannelFrame& frame,
                                const MetadataVector& meta, const Grid& grid) {
  if (grid.n != model.grid_n()) {
    throw Error(ErrorKind::DimensionMismatch, "grid size differs from the model's output grid");
  }
  LocalizationResult result;
  result.heatmap = relnet_forward(model, frame, meta);
  result.peak_index = peak_index(result.heatmap, PeakMode::Max);
  result.estimate = grid.cell_center(result.peak_index);
  return result;
}

}  // namespace dmaloc
