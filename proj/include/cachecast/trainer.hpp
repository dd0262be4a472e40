#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cachecast/featurize.hpp"
#include "cachecast/models.hpp"

namespace cachecast {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;  // sequences per step
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip_norm = 5.0;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
};

struct EpochLoss {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

using LossCurve = std::vector<EpochLoss>;

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

struct TrainResult {
  Model model;  // parameters of the best-validation epoch
  LossCurve curve;
};

/// Mini-batch gradient descent on mean-over-time MSE. Per epoch: shuffle the
/// train sequences by a seeded permutation, accumulate batch gradients in
/// ascending block order, clip the global gradient norm, step the optimizer,
/// then score the val split. Stops early after `early_stop_patience` epochs
/// without val improvement. Fits normalization stats on the train split and
/// stores them in the returned model.
TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg);

/// MSE/MAE pooled over every (block, t) pair of the split. The network runs
/// over all windows up to the split's end so recurrent state is warm.
Metrics evaluate(const Model& model, const Dataset& data, Split split);

void write_loss_curve_csv(std::ostream& out, const LossCurve& curve);
void write_loss_curve_svg(std::ostream& out, const LossCurve& curve);

/// One `model,mse,mae` row per entry, same column structure as the
/// comparison table.
void write_metrics_csv(std::ostream& out,
                       const std::vector<std::pair<std::string, Metrics>>& rows);

}  // namespace cachecast
