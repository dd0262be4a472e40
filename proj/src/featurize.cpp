#include "cachecast/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cachecast/errors.hpp"

namespace cachecast {

namespace {

const char* split_name(int which) {
  switch (which) {
    case 0: return "train";
    case 1: return "val";
    default: return "test";
  }
}

}  // namespace

int SplitIndices::begin(int which) const {
  switch (which) {
    case 0: return 0;
    case 1: return train_end;
    default: return val_end;
  }
}

int SplitIndices::end(int which) const {
  switch (which) {
    case 0: return train_end;
    case 1: return val_end;
    default: return num_windows;
  }
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "access_count", "mean_size",   "mean_latency",
      "read_fraction", "recency_gap", "global_load"};
  return names;
}

WindowAggregates build_windows(const std::vector<AccessRecord>& records,
                               std::int64_t window_len_us, int num_windows,
                               std::uint64_t num_blocks_hint, int recency_cap) {
  if (records.empty()) throw EmptyTrace();
  if (window_len_us <= 0) throw ConfigError("window_len_us must be positive");
  if (recency_cap < 1) throw ConfigError("recency_cap must be positive");

  const std::int64_t origin = records.front().timestamp_us;
  int t_count = num_windows;
  if (t_count == 0) {
    std::int64_t last = origin;
    for (const auto& r : records) last = std::max(last, r.timestamp_us);
    t_count = static_cast<int>((last - origin) / window_len_us) + 1;
  }

  struct Cell {
    double count = 0, size_sum = 0, latency_sum = 0, reads = 0;
  };
  std::map<std::uint64_t, std::vector<Cell>> cells;
  for (std::uint64_t b = 0; b < num_blocks_hint; ++b) cells[b];

  Vector global_load = Vector::Zero(t_count);
  for (const auto& r : records) {
    const std::int64_t w = (r.timestamp_us - origin) / window_len_us;
    if (w < 0 || w >= t_count) continue;
    auto& row = cells[r.block_id];
    if (row.empty()) row.resize(t_count);
    Cell& c = row[w];
    c.count += 1;
    c.size_sum += static_cast<double>(r.size_bytes);
    c.latency_sum += static_cast<double>(r.latency_us);
    if (r.op == Op::Read) c.reads += 1;
    global_load[w] += 1;
  }

  WindowAggregates agg;
  agg.window_len_us = window_len_us;
  agg.num_windows = t_count;
  agg.recency_cap = recency_cap;
  agg.global_load = std::move(global_load);
  agg.block_ids.reserve(cells.size());
  agg.per_block.reserve(cells.size());
  for (auto& [block_id, row] : cells) {
    if (row.empty()) row.resize(t_count);
    Matrix m(t_count, 5);
    int last_access = -1;
    for (int w = 0; w < t_count; ++w) {
      const Cell& c = row[w];
      m(w, 0) = c.count;
      m(w, 1) = c.count > 0 ? c.size_sum / c.count : 0.0;
      m(w, 2) = c.count > 0 ? c.latency_sum / c.count : 0.0;
      m(w, 3) = c.count > 0 ? c.reads / c.count : 0.0;
      if (c.count > 0) {
        m(w, 4) = 0.0;
        last_access = w;
      } else if (last_access < 0) {
        m(w, 4) = recency_cap;
      } else {
        m(w, 4) = std::min(w - last_access, recency_cap);
      }
    }
    agg.block_ids.push_back(block_id);
    agg.per_block.push_back(std::move(m));
  }
  return agg;
}

std::vector<FeatureMatrix> assemble_features(const WindowAggregates& agg) {
  std::vector<FeatureMatrix> out;
  out.reserve(agg.block_ids.size());
  for (std::size_t i = 0; i < agg.block_ids.size(); ++i) {
    FeatureMatrix fm;
    fm.block_id = agg.block_ids[i];
    fm.window_len_us = agg.window_len_us;
    fm.feature_names = feature_names();
    fm.values.resize(agg.num_windows, kFeatureCount);
    fm.values.leftCols(5) = agg.per_block[i];
    fm.values.col(kFeatGlobalLoad) = agg.global_load;
    out.push_back(std::move(fm));
  }
  return out;
}

LabelSet make_demand_labels(const WindowAggregates& agg, int horizon) {
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (horizon >= agg.num_windows) throw HorizonTooLarge(horizon, agg.num_windows);

  LabelSet set;
  const int labelled = agg.num_windows - horizon;
  set.split.num_windows = labelled;
  set.split.train_end = static_cast<int>(std::floor(0.70 * labelled));
  set.split.val_end = static_cast<int>(std::floor(0.85 * labelled));

  double max_count = 0.0;
  for (const auto& block : agg.per_block)
    for (int t = 0; t < set.split.train_end; ++t)
      max_count = std::max(max_count, block(t + horizon, 0));
  set.scale = max_count > 0 ? max_count : 1.0;

  set.labels.reserve(agg.block_ids.size());
  for (std::size_t i = 0; i < agg.block_ids.size(); ++i) {
    DemandSeries series;
    series.block_id = agg.block_ids[i];
    series.values = agg.per_block[i].col(0).segment(horizon, labelled) / set.scale;
    set.labels.push_back(std::move(series));
  }
  return set;
}

Dataset build_dataset(const WindowAggregates& agg, int horizon) {
  Dataset data;
  LabelSet labels = make_demand_labels(agg, horizon);
  data.labels = std::move(labels.labels);
  data.split = labels.split;
  data.label_scale = labels.scale;
  data.features = assemble_features(agg);
  for (auto& fm : data.features)
    fm.values = Matrix(fm.values.topRows(data.split.num_windows));
  return data;
}

NormStats fit_norm_stats(const Dataset& data) {
  const int train_end = data.split.train_end;
  if (train_end <= 0 || data.features.empty()) throw EmptySplit(split_name(0));

  const auto n_features = data.features.front().values.cols();
  Vector sum = Vector::Zero(n_features);
  const double n = static_cast<double>(train_end) * static_cast<double>(data.features.size());
  for (const auto& fm : data.features)
    sum += fm.values.topRows(train_end).colwise().sum().transpose();
  NormStats stats;
  stats.mean = sum / n;
  Vector sq = Vector::Zero(n_features);
  for (const auto& fm : data.features)
    sq += (fm.values.topRows(train_end).rowwise() - stats.mean.transpose())
              .array()
              .square()
              .colwise()
              .sum()
              .matrix()
              .transpose();
  stats.stddev = (sq / n).cwiseSqrt();
  return stats;
}

Matrix apply_norm(const Matrix& values, const NormStats& stats) {
  if (values.cols() != stats.mean.size())
    throw ShapeMismatch("feature count does not match normalization stats");
  Matrix out(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    const double divisor = stats.stddev[c] == 0.0 ? 1.0 : stats.stddev[c];
    out.col(c) = (values.col(c).array() - stats.mean[c]) / divisor;
  }
  return out;
}

FeatureMatrix apply_norm(const FeatureMatrix& fm, const NormStats& stats) {
  FeatureMatrix out = fm;
  out.values = apply_norm(fm.values, stats);
  return out;
}

}  // namespace cachecast
