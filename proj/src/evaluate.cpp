#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>

#include "dmaloc/harness.hpp"

namespace dmaloc {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Tdoa: return "tdoa";
    case Method::Slf: return "slf";
    case Method::GnnGcc: return "gnn-gcc";
    case Method::GnnSlf: return "gnn-slf";
  }
  return "slf";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::Tdoa, Method::Slf, Method::GnnGcc, Method::GnnSlf}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + std::string(name) +
                                              "' (expected tdoa, slf, gnn-gcc or gnn-slf)");
}

bool is_neural(Method method) { return method == Method::GnnGcc || method == Method::GnnSlf; }

double mean_euclid_error(std::span<const Vec2> estimates, std::span<const Vec2> truths) {
  if (estimates.size() != truths.size()) {
    throw Error(ErrorKind::DimensionMismatch, "estimate and truth counts differ");
  }
  if (estimates.empty()) throw Error(ErrorKind::InvalidArgument, "no estimates");
  double sum = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) sum += (estimates[k] - truths[k]).norm();
  return sum / double(estimates.size());
}

LocalizationResult localize(Method method, const MultichannelFrame& frame, const MetadataVector& meta,
                            const Grid& grid, const ClassicalOptions& classical,
                            const RelNetModel* model) {
  switch (method) {
    case Method::Tdoa: return tdoa_localize(frame, meta, grid, classical);
    case Method::Slf: return slf_localize(frame, meta, grid, classical);
    case Method::GnnGcc:
    case Method::GnnSlf: {
      if (!model) throw Error(ErrorKind::MissingCheckpoint, "GNN methods need a trained checkpoint");
      const FeatureKind expected = method == Method::GnnGcc ? FeatureKind::Gcc : FeatureKind::Slf;
      if (model->features.kind != expected) {
        throw Error(ErrorKind::InvalidArgument, "checkpoint feature kind '" +
                                                    std::string(to_string(model->features.kind)) +
                                                    "' does not match method " + std::string(to_string(method)));
      }
      return gnn_localize(*model, frame, meta, grid);
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown method");
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / double(v.size() - 1));
}

}  // namespace

EvalReport evaluate_stream(Method method, std::size_t count,
                           const std::function<EvalInput(std::size_t)>& fetch, const EvalOptions& options) {
  if (is_neural(method) && options.models.empty()) {
    throw Error(ErrorKind::MissingCheckpoint, std::string(to_string(method)) + " needs at least one checkpoint");
  }
  const std::size_t runs = is_neural(method) ? options.models.size() : 1;
  EvalReport report;
  report.errors.assign(runs, std::vector<double>(count, 0.0));
  std::vector<int> mic_counts(count, 0);

  if (options.heatmaps_first_k > 0) std::filesystem::create_directories(options.heatmap_dir);
  parallel_for(count, options.threads, [&](std::size_t k) {
    const EvalInput input = fetch(k);
    mic_counts[k] = input.meta.num_mics();
    const Grid grid = Grid::for_room(input.meta.room(), options.grid_n);
    for (std::size_t r = 0; r < runs; ++r) {
      const RelNetModel* model = is_neural(method) ? &options.models[r] : nullptr;
      const LocalizationResult res = localize(method, input.frame, input.meta, grid, options.classical, model);
      report.errors[r][k] = (res.estimate - input.truth).norm();
      if (r == 0 && static_cast<int>(k) < options.heatmaps_first_k) {
        write_heatmap_pgm(options.heatmap_dir /
                              (std::string(to_string(method)) + "_" + std::to_string(k) + ".pgm"),
                          res.heatmap, options.grid_n);
      }
    }
  });

  std::map<int, std::vector<std::size_t>> by_m;
  for (std::size_t k = 0; k < count; ++k) by_m[mic_counts[k]].push_back(k);
  for (const auto& [m, indices] : by_m) {
    std::vector<double> run_means;
    std::vector<double> all;
    for (std::size_t r = 0; r < runs; ++r) {
      std::vector<double> errs;
      for (std::size_t k : indices) errs.push_back(report.errors[r][k]);
      run_means.push_back(mean(errs));
      if (r == 0) all = errs;
    }
    EvalRow row;
    row.method = std::string(to_string(method));
    row.num_mics = m;
    row.n_examples = static_cast<int>(indices.size());
    row.mean_error_m = mean(run_means);
    row.std_error_m = runs > 1 ? sample_std(run_means) : sample_std(all);
    report.rows.push_back(row);
  }
  return report;
}

EvalReport evaluate_inputs(Method method, std::span<const EvalInput> inputs, const EvalOptions& options) {
  return evaluate_stream(method, inputs.size(), [&](std::size_t k) { return inputs[k]; }, options);
}

EvalReport evaluate(Method method, const DatasetManifest& dataset, Split split, const EvalOptions& options) {
  const auto& entries = dataset.split(split);
  if (entries.empty()) throw Error(ErrorKind::EmptyDataset, std::string(to_string(split)) + " split is empty");
  return evaluate_stream(
      method, entries.size(),
      [&](std::size_t k) {
        const LoadedExample ex = load_example(dataset.root / entries[k].path);
        return EvalInput{extract_frame(ex.signals, options.frame_ms), build_metadata(ex.scene),
                         ex.scene.source_xy()};
      },
      options);
}

void write_report_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "method,M,n_examples,mean_error_m,std_error_m\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.method << ',' << r.num_mics << ',' << r.n_examples << ',' << r.mean_error_m << ','
        << r.std_error_m << '\n';
  }
}

}  // namespace dmaloc
