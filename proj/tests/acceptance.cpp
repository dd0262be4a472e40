// Acceptance suite: one pass/fail line per criterion, exit code is the number
// of failed criteria. Heavier than the unit tests; see README for runtimes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cachecast/eval.hpp"
#include "reference_cache.hpp"

using namespace cachecast;

namespace {

int g_failures = 0;

void announce(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

Matrix random_input(Eigen::Index rows, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix m(rows, kFeatureCount);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < kFeatureCount; ++c) m(r, c) = rng.next_symmetric(1.0);
  return m;
}

Vector random_target(Eigen::Index rows, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Vector v(rows);
  for (Eigen::Index i = 0; i < rows; ++i) v[i] = rng.next_unit();
  return v;
}

/// Central-difference check of the standalone affine head over raw features.
double dense_only_grad_error(double epsilon) {
  SplitMix64 rng(71);
  DenseParams params;
  params.weight = RowVector::Zero(kFeatureCount);
  for (int i = 0; i < kFeatureCount; ++i) params.weight[i] = rng.next_symmetric(0.5);
  params.bias = rng.next_symmetric(0.5);

  const Matrix x = random_input(24, 72);
  const Vector target = random_target(24, 73);

  const Vector pred = dense_sequence(x, params);
  const DenseGrads analytic = dense_backward(x, params, mse_gradient(pred, target));

  auto loss = [&]() { return mse(dense_sequence(x, params), target); };
  double max_rel = 0.0;
  auto check_param = [&](double& theta, double analytic_grad) {
    const double saved = theta;
    theta = saved + epsilon;
    const double up = loss();
    theta = saved - epsilon;
    const double down = loss();
    theta = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(analytic_grad - numeric) /
                       std::max({std::abs(analytic_grad), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, rel);
  };
  for (int j = 0; j < kFeatureCount; ++j) check_param(params.weight[j], analytic.param.weight[j]);
  check_param(params.bias, analytic.param.bias);
  return max_rel;
}

void criterion_gradients() {
  const auto start = std::chrono::steady_clock::now();
  const double epsilon = 1e-5;
  double worst = dense_only_grad_error(epsilon);
  std::string worst_arch = "dense-only";

  struct Case {
    ModelKind kind;
    int hidden;
    Eigen::Index t_len;
  };
  for (const Case c : {Case{ModelKind::Rnn, 16, 32}, Case{ModelKind::Gru, 16, 32},
                       Case{ModelKind::Lstm, 16, 32}, Case{ModelKind::CnnLstm, 8, 16}}) {
    ArchSpec spec = default_arch(c.kind, 7);
    spec.hidden_size = c.hidden;
    Model model = init_model(spec);
    std::vector<std::pair<Matrix, Vector>> batch;
    batch.emplace_back(random_input(c.t_len, 201), random_target(c.t_len, 202));
    batch.emplace_back(random_input(c.t_len, 203), random_target(c.t_len, 204));
    const auto rep = grad_check(model, batch, epsilon);
    if (rep.max_rel_error > worst) {
      worst = rep.max_rel_error;
      worst_arch = to_string(c.kind);
    }
  }

  const double elapsed = seconds_since(start);
  const bool pass = worst < 1e-4 && elapsed < 30.0;
  announce(1, "gradient correctness", pass,
         "worst rel err " + fmt("%.3e", worst) + " on " + worst_arch + " (< 1e-4), " +
             fmt("%.1f s (< 30 s)", elapsed));
}

ExperimentConfig default_experiment() {
  ExperimentConfig cfg;  // 64 blocks, 200 windows, zipf 1.0, period 20, seed 7
  cfg.train.epochs = 35;
  cfg.train.early_stop_patience = 35;
  return cfg;
}

const ModelCell* find_cell(const ExperimentReport& report, ModelKind kind, std::uint64_t seed) {
  for (const auto& cell : report.cells)
    if (cell.kind == kind && cell.seed == seed) return &cell;
  return nullptr;
}

const ArchAggregate* find_agg(const ExperimentReport& report, ModelKind kind) {
  for (const auto& agg : report.aggregates)
    if (agg.kind == kind) return &agg;
  return nullptr;
}

void criterion_convergence() {
  const auto start = std::chrono::steady_clock::now();

  const SynthConfig synth;  // 64 blocks, 200 windows, zipf 1.0, period 20, seed 7
  const auto records = generate_synthetic(synth);
  const auto agg = build_windows(records, synth.window_len_us, synth.num_windows,
                                 synth.num_blocks);
  const Dataset data = build_dataset(agg, 1);

  TrainConfig tc;
  tc.epochs = 35;
  tc.early_stop_patience = 35;
  tc.seed = 1;
  const Model model = init_model(default_arch(ModelKind::CnnLstm, 1));
  const TrainResult trained = train(model, data, tc);
  const double elapsed = seconds_since(start);

  if (trained.curve.size() < 30) {
    announce(2, "training convergence", false, "loss curve shorter than 30 epochs");
    return;
  }
  const auto& curve = trained.curve;
  const double ratio = curve[19].train_loss / curve[0].train_loss;

  // 5-epoch moving averages over epochs 1..30 (indices 0..29)
  auto moving_avg = [&](int i) {
    double sum = 0;
    for (int k = i; k < i + 5; ++k) sum += curve[static_cast<std::size_t>(k)].train_loss;
    return sum / 5.0;
  };
  bool monotone = true;
  for (int i = 0; i + 1 <= 25; ++i)
    if (moving_avg(i + 1) > moving_avg(i)) monotone = false;

  const bool pass = ratio < 0.5 && monotone && elapsed < 120.0;
  announce(2, "training convergence", pass,
         "epoch20/epoch1 train loss " + fmt("%.3f (< 0.5)", ratio) + ", 5-epoch moving average " +
             (monotone ? "non-increasing" : "INCREASES") + " over the first 30 epochs, " +
             fmt("%.1f s (< 120 s)", elapsed));
}

void criterion_ordering(const ExperimentReport& report, double elapsed) {
  const auto* cnn = find_agg(report, ModelKind::CnnLstm);
  bool best_overall = true;
  std::string spoiler;
  for (const auto& agg : report.aggregates) {
    if (agg.kind == ModelKind::CnnLstm) continue;
    if (cnn->mean_mse >= agg.mean_mse) {
      best_overall = false;
      spoiler = to_string(agg.kind);
    }
  }

  bool learned_beat_heuristics = true;
  const auto* lru = find_agg(report, ModelKind::LruHeuristic);
  const auto* lfu = find_agg(report, ModelKind::LfuHeuristic);
  for (const ModelKind kind : {ModelKind::Rnn, ModelKind::Gru, ModelKind::Lstm, ModelKind::CnnLstm}) {
    const auto* agg = find_agg(report, kind);
    if (agg->mean_mse >= lru->mean_mse || agg->mean_mse >= lfu->mean_mse)
      learned_beat_heuristics = false;
  }

  int cnn_wins = 0;
  for (const std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto* a = find_cell(report, ModelKind::CnnLstm, seed);
    const auto* b = find_cell(report, ModelKind::Lstm, seed);
    if (a->test.mse < b->test.mse) ++cnn_wins;
  }

  const bool pass = best_overall && learned_beat_heuristics && cnn_wins >= 4 && elapsed < 900.0;
  announce(3, "comparison-table ordering", pass,
         "cnn-lstm mean mse " + fmt("%.4f", cnn->mean_mse) +
             (best_overall ? " beats all" : " LOSES to " + spoiler) +
             (learned_beat_heuristics ? ", learned < heuristics" : ", a heuristic wins") +
             ", cnn-lstm < lstm in " + std::to_string(cnn_wins) + "/5 seeds (>= 4), " +
             fmt("%.0f s (< 900 s)", elapsed));
}

void criterion_metric_identity(const ExperimentReport& report) {
  bool rows_ok = true;
  for (const auto& cell : report.cells)
    if (cell.test.mae > std::sqrt(cell.test.mse) + 1e-12) rows_ok = false;

  Vector pred(2), truth(2);
  pred << 0, 2;
  truth << 1, 0;
  const bool exact = std::abs(mse(pred, truth) - 2.5) < 1e-12 &&
                     std::abs(mae(pred, truth) - 1.5) < 1e-12 &&
                     mse(truth, truth) == 0.0 && mae(truth, truth) == 0.0;

  // the six reference rows satisfy the same identity
  const double reference[][2] = {{0.951, 0.867}, {0.873, 0.725}, {0.623, 0.546},
                                 {0.521, 0.465}, {0.375, 0.321}, {0.244, 0.127}};
  bool reference_ok = true;
  for (const auto& row : reference)
    if (row[1] > std::sqrt(row[0])) reference_ok = false;

  announce(4, "metric identity", rows_ok && exact && reference_ok,
         std::string("mae <= sqrt(mse) on all ") + std::to_string(report.cells.size()) +
             " evaluated rows and all 6 reference rows; closed-form mse/mae exact to 1e-12");
}

void criterion_simulator_oracle() {
  const auto start = std::chrono::steady_clock::now();
  SplitMix64 rng(4242);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + rng.next_below(50);
    const std::uint64_t space = 1 + rng.next_below(10);
    const std::size_t capacity = 1 + rng.next_below(8);
    const auto blocks = testref::random_blocks(rng, len, space);
    for (const auto policy : {Policy::Lru, Policy::Lfu}) {
      std::vector<bool> hits;
      simulate(testref::trace_of(blocks), policy, capacity, &hits);
      if (hits != testref::reference_hits(blocks, policy, capacity)) ++mismatches;
    }
  }

  int inclusion_breaks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto blocks = testref::random_blocks(rng, 1 + rng.next_below(60), 1 + rng.next_below(12));
    const std::size_t capacity = 1 + rng.next_below(6);
    std::vector<bool> small, large;
    simulate(testref::trace_of(blocks), Policy::Lru, capacity, &small);
    simulate(testref::trace_of(blocks), Policy::Lru, capacity + 1, &large);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (small[i] && !large[i]) ++inclusion_breaks;
  }

  const double elapsed = seconds_since(start);
  const bool pass = mismatches == 0 && inclusion_breaks == 0 && elapsed < 10.0;
  announce(5, "simulator oracle equivalence", pass,
         std::to_string(mismatches) + " mismatches over 1000 random traces x {lru,lfu}, " +
             std::to_string(inclusion_breaks) + " stack-inclusion breaks over 100 traces, " +
             fmt("%.1f s (< 10 s)", elapsed));
}

void criterion_predictive_benefit(const ExperimentReport& report, double elapsed) {
  double lru_rate = -1, oracle_rate = -1;
  for (const auto& row : report.hit_rates) {
    if (row.capacity != 16) continue;
    if (row.policy == "lru") lru_rate = row.metrics.hit_rate;
    if (row.policy == "oracle") oracle_rate = row.metrics.hit_rate;
  }

  std::vector<double> cnn_rates;
  for (const std::uint64_t seed : {1, 2, 3, 4, 5})
    cnn_rates.push_back(find_cell(report, ModelKind::CnnLstm, seed)->hit_rates[0]);

  const bool oracle_ok = oracle_rate >= lru_rate;
  bool all_within = true;
  int wins = 0;
  double worst = 1.0;
  for (const double rate : cnn_rates) {
    worst = std::min(worst, rate);
    if (rate < lru_rate - 0.01) all_within = false;
    if (rate >= lru_rate) ++wins;
  }

  const bool pass = oracle_ok && all_within && wins >= 4 && elapsed < 300.0;
  announce(6, "predictive policy benefit", pass,
         "capacity 16: lru " + fmt("%.4f", lru_rate) + ", oracle " + fmt("%.4f", oracle_rate) +
             " (>= lru), cnn-lstm worst seed " + fmt("%.4f", worst) + " (>= lru - 0.01), >= lru in " +
             std::to_string(wins) + "/5 seeds (>= 4), " + fmt("%.0f s shared run (< 300 s)", elapsed));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_determinism(const ExperimentReport& first, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir_a = "acceptance_report_a";
  const fs::path dir_b = "acceptance_report_b";
  write_report_artifacts(first, cfg, dir_a.string());

  const ExperimentReport second = run_experiment(cfg);  // full rerun, same config
  write_report_artifacts(second, cfg, dir_b.string());

  const bool table_same = read_file(dir_a / "table1.csv") == read_file(dir_b / "table1.csv") &&
                          !read_file(dir_a / "table1.csv").empty();
  const bool rates_same = read_file(dir_a / "hitrates.csv") == read_file(dir_b / "hitrates.csv") &&
                          !read_file(dir_a / "hitrates.csv").empty();
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  announce(7, "report determinism", table_same && rates_same,
         std::string("two full report runs: table1.csv ") +
             (table_same ? "byte-identical" : "DIFFER") + ", hitrates.csv " +
             (rates_same ? "byte-identical" : "DIFFER"));
}

}  // namespace

int main() {
  criterion_gradients();
  criterion_simulator_oracle();
  criterion_convergence();

  const ExperimentConfig cfg = default_experiment();
  const auto start = std::chrono::steady_clock::now();
  const ExperimentReport report = run_experiment(cfg);
  const double experiment_seconds = seconds_since(start);

  criterion_ordering(report, experiment_seconds);
  criterion_metric_identity(report);
  criterion_predictive_benefit(report, experiment_seconds);
  criterion_determinism(report, cfg);

  std::printf("%d criteria failed\n", g_failures);
  return g_failures;
}
