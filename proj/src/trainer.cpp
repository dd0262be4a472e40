#include "cachecast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "cachecast/errors.hpp"
#include "cachecast/rng.hpp"

namespace cachecast {

namespace {

/// Fisher-Yates with the project's own stream so shuffles replay everywhere.
void seeded_shuffle(std::vector<int>& order, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(order[i - 1], order[j]);
  }
}

struct AdamState {
  Vector m, v;
  long step = 0;
};

void optimizer_step(LearnedParams& params, Vector& grad, const TrainConfig& cfg,
                    AdamState& adam) {
  Vector theta = flatten(params);
  if (cfg.optimizer == OptimizerKind::Sgd) {
    theta -= cfg.learning_rate * grad;
  } else {
    ++adam.step;
    adam.m = cfg.adam_beta1 * adam.m + (1.0 - cfg.adam_beta1) * grad;
    adam.v = (cfg.adam_beta2 * adam.v.array() + (1.0 - cfg.adam_beta2) * grad.array().square())
                 .matrix();
    const double m_corr = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.step));
    const double v_corr = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.step));
    theta.array() -= cfg.learning_rate * (adam.m.array() / m_corr) /
                     ((adam.v.array() / v_corr).sqrt() + cfg.adam_epsilon);
  }
  assign_flat(params, theta);
}

}  // namespace

TrainResult train(const Model& initial, const Dataset& data, const TrainConfig& cfg) {
  if (!is_learned(initial.spec.kind)) throw HeuristicModelNotTrainable();
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (cfg.learning_rate < 0) throw ConfigError("learning_rate must be non-negative");
  if (cfg.grad_clip_norm <= 0) throw ConfigError("grad_clip_norm must be positive");
  if (data.features.empty()) throw EmptySplit("train");

  const int train_end = data.split.train_end;
  const int val_end = data.split.val_end;
  if (train_end <= 0) throw EmptySplit("train");
  if (val_end <= train_end) throw EmptySplit("val");

  Model model = initial;
  model.norm = fit_norm_stats(data);
  if (!model.params) throw InvalidSpec("model has no parameters");

  const int num_seqs = static_cast<int>(data.features.size());
  std::vector<Matrix> x_train(num_seqs), x_val(num_seqs);
  std::vector<Vector> y_train(num_seqs);
  for (int b = 0; b < num_seqs; ++b) {
    const Matrix normalized = apply_norm(data.features[b].values, *model.norm);
    x_train[b] = normalized.topRows(train_end);
    x_val[b] = normalized.topRows(val_end);
    y_train[b] = data.labels[b].values.head(train_end);
  }

  const Eigen::Index dim = param_count(*model.params);
  AdamState adam{Vector::Zero(dim), Vector::Zero(dim), 0};

  auto val_loss_now = [&]() {
    double sq = 0.0;
    std::int64_t n = 0;
    for (int b = 0; b < num_seqs; ++b) {
      const Vector pred = model_forward(model, x_val[b]).prediction;
      const auto diff =
          pred.segment(train_end, val_end - train_end) -
          data.labels[b].values.segment(train_end, val_end - train_end);
      sq += diff.squaredNorm();
      n += diff.size();
    }
    return sq / static_cast<double>(n);
  };

  TrainResult result;
  LearnedParams best = *model.params;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_improve = 0;

  std::vector<int> order(num_seqs);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    seeded_shuffle(order, cfg.seed * 0x100000001B3ull + static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    for (int start = 0; start < num_seqs; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, num_seqs - start);
      std::vector<int> members(order.begin() + start, order.begin() + start + count);
      std::sort(members.begin(), members.end());  // ascending block order

      Vector grad = Vector::Zero(dim);
      for (int idx : members) {
        auto [loss, g] = sequence_loss_and_grad(model, x_train[idx], y_train[idx]);
        grad += flatten(g);
        loss_sum += loss;
      }
      grad /= static_cast<double>(count);
      const double norm = grad.norm();
      if (norm > cfg.grad_clip_norm) grad *= cfg.grad_clip_norm / norm;
      optimizer_step(*model.params, grad, cfg, adam);
    }

    EpochLoss row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(num_seqs);
    row.val_loss = val_loss_now();
    if (!std::isfinite(row.train_loss) || !std::isfinite(row.val_loss))
      throw NonFiniteLoss(epoch);
    result.curve.push_back(row);

    if (row.val_loss < best_val) {
      best_val = row.val_loss;
      best = *model.params;
      epochs_since_improve = 0;
    } else if (++epochs_since_improve >= cfg.early_stop_patience) {
      break;
    }
  }

  model.params = std::move(best);
  result.model = std::move(model);
  return result;
}

Metrics evaluate(const Model& model, const Dataset& data, Split split) {
  const int which = static_cast<int>(split);
  const int begin = data.split.begin(which);
  const int end = data.split.end(which);
  if (end <= begin || data.features.empty())
    throw EmptySplit(which == 0 ? "train" : which == 1 ? "val" : "test");

  double sq = 0.0, abs = 0.0;
  std::int64_t n = 0;
  for (std::size_t b = 0; b < data.features.size(); ++b) {
    const DemandSeries pred = predict_sequence(model, data.features[b]);
    const auto diff =
        pred.values.segment(begin, end - begin) - data.labels[b].values.segment(begin, end - begin);
    sq += diff.squaredNorm();
    abs += diff.cwiseAbs().sum();
    n += diff.size();
  }
  return {sq / static_cast<double>(n), abs / static_cast<double>(n)};
}

void write_loss_curve_csv(std::ostream& out, const LossCurve& curve) {
  out << "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& row : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.9e,%.9e\n", row.epoch, row.train_loss, row.val_loss);
    out << buf;
  }
}

void write_metrics_csv(std::ostream& out,
                       const std::vector<std::pair<std::string, Metrics>>& rows) {
  out << "model,mse,mae\n";
  char buf[128];
  for (const auto& [model, m] : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", model.c_str(), m.mse, m.mae);
    out << buf;
  }
}

void write_loss_curve_svg(std::ostream& out, const LossCurve& curve) {
  const double width = 640, height = 360, pad = 40;
  double max_loss = 0;
  for (const auto& row : curve) max_loss = std::max({max_loss, row.train_loss, row.val_loss});
  if (max_loss <= 0) max_loss = 1;
  const double x_step =
      curve.size() > 1 ? (width - 2 * pad) / static_cast<double>(curve.size() - 1) : 0;

  auto polyline = [&](auto pick, const char* color) {
    std::string points;
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
      const double x = pad + x_step * static_cast<double>(i);
      const double y = height - pad - (height - 2 * pad) * pick(curve[i]) / max_loss;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
      points += buf;
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << points << "\"/>\n";
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - pad
      << "\" y2=\"" << height - pad << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
      << height - pad << "\" stroke=\"black\"/>\n";
  polyline([](const EpochLoss& r) { return r.train_loss; }, "#1f77b4");
  polyline([](const EpochLoss& r) { return r.val_loss; }, "#ff7f0e");
  out << "<text x=\"" << pad + 8 << "\" y=\"" << pad << "\" font-size=\"12\">train (blue) / val "
      << "(orange), max " << max_loss << "</text>\n";
  out << "</svg>\n";
}

}  // namespace cachecast
