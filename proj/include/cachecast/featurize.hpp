#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "cachecast/trace.hpp"

namespace cachecast {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr int kFeatureCount = 6;
inline constexpr int kFeatAccessCount = 0;
inline constexpr int kFeatMeanSize = 1;
inline constexpr int kFeatMeanLatency = 2;
inline constexpr int kFeatReadFraction = 3;
inline constexpr int kFeatRecencyGap = 4;
inline constexpr int kFeatGlobalLoad = 5;

inline constexpr int kDefaultRecencyCap = 64;

/// Per-block windowed aggregates. per_block[i] is a T x 5 matrix over
/// [access_count, mean_size, mean_latency, read_fraction, recency_gap];
/// global_load is the total access count of each window.
struct WindowAggregates {
  std::int64_t window_len_us = 0;
  int num_windows = 0;
  int recency_cap = kDefaultRecencyCap;
  std::vector<std::uint64_t> block_ids;  // ascending
  std::vector<Matrix> per_block;
  Vector global_load;
};

/// One block's T x N feature sequence.
struct FeatureMatrix {
  std::uint64_t block_id = 0;
  Matrix values;
  std::int64_t window_len_us = 0;
  std::vector<std::string> feature_names;
};

/// One block's length-T demand sequence (ground truth or predicted).
struct DemandSeries {
  std::uint64_t block_id = 0;
  Vector values;
};

/// Per-feature z-score statistics fitted on the train split only. Zero
/// standard deviations are kept as stored and replaced by 1 at apply time.
struct NormStats {
  Vector mean;
  Vector stddev;
};

/// Chronological window ranges: [0,train_end) train, [train_end,val_end) val,
/// [val_end,num_windows) test.
struct SplitIndices {
  int train_end = 0;
  int val_end = 0;
  int num_windows = 0;

  int begin(int which) const;  // 0=train,1=val,2=test
  int end(int which) const;
};

enum class Split { Train = 0, Val = 1, Test = 2 };

struct Dataset {
  std::vector<FeatureMatrix> features;  // ascending block_id
  std::vector<DemandSeries> labels;     // parallel to features
  SplitIndices split;
  double label_scale = 1.0;  // train-split max raw demand count
};

/// Buckets records into fixed-duration windows. num_windows == 0 derives the
/// count from the trace span; otherwise records past the range are dropped.
/// num_blocks_hint extends the block universe to [0, hint) so never-accessed
/// blocks still get (all-zero, gap-at-cap) rows.
WindowAggregates build_windows(const std::vector<AccessRecord>& records,
                               std::int64_t window_len_us, int num_windows = 0,
                               std::uint64_t num_blocks_hint = 0,
                               int recency_cap = kDefaultRecencyCap);

/// One T x 6 matrix per block, feature order
/// [access_count, mean_size, mean_latency, read_fraction, recency_gap, global_load].
std::vector<FeatureMatrix> assemble_features(const WindowAggregates& agg);

struct LabelSet {
  std::vector<DemandSeries> labels;
  double scale = 1.0;
  SplitIndices split;
};

/// Demand label for (block, t) is the access count at window t + horizon,
/// scaled by the train-split maximum so train labels lie in [0,1]. Drops the
/// last `horizon` windows; splits 70/15/15 chronologically.
LabelSet make_demand_labels(const WindowAggregates& agg, int horizon);

/// Features trimmed to the labelled range plus labels and split indices.
Dataset build_dataset(const WindowAggregates& agg, int horizon);

NormStats fit_norm_stats(const Dataset& data);
FeatureMatrix apply_norm(const FeatureMatrix& fm, const NormStats& stats);
Matrix apply_norm(const Matrix& values, const NormStats& stats);

const std::vector<std::string>& feature_names();

}  // namespace cachecast
