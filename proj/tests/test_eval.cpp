#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "cachecast/errors.hpp"
#include "cachecast/eval.hpp"

using namespace cachecast;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.synth.num_blocks = 12;
  cfg.synth.num_events = 6000;
  cfg.synth.num_windows = 60;
  cfg.synth.period_windows = 10;
  cfg.synth.phase_blocks = 3;
  cfg.synth.seed = 7;
  cfg.num_windows = 60;
  cfg.archs = {ModelKind::LruHeuristic, ModelKind::LfuHeuristic, ModelKind::Rnn};
  cfg.hidden_size = 6;
  cfg.train.epochs = 4;
  cfg.train.early_stop_patience = 4;
  cfg.seeds = {1, 2};
  cfg.capacities = {4};
  cfg.prefetch_budget = 3;
  return cfg;
}

ExperimentReport fake_report() {
  // fixed six-model fixture with known values
  const double mse[] = {0.951, 0.873, 0.623, 0.521, 0.375, 0.244};
  const double mae[] = {0.867, 0.725, 0.546, 0.465, 0.321, 0.127};
  const ModelKind kinds[] = {ModelKind::LruHeuristic, ModelKind::LfuHeuristic, ModelKind::Rnn,
                             ModelKind::Gru,          ModelKind::Lstm,         ModelKind::CnnLstm};
  ExperimentReport report;
  for (int i = 0; i < 6; ++i) {
    ModelCell cell;
    cell.kind = kinds[i];
    cell.seed = 1;
    cell.test = {mse[i], mae[i]};
    report.cells.push_back(cell);
    report.aggregates.push_back({kinds[i], mse[i], 0.0, mae[i], 0.0});
  }
  return report;
}

}  // namespace

TEST_CASE("heuristic-only experiments skip training but still report metrics") {
  ExperimentConfig cfg = tiny_config();
  cfg.archs = {ModelKind::LruHeuristic, ModelKind::LfuHeuristic};
  const auto report = run_experiment(cfg);
  REQUIRE(report.cells.size() == 4);
  for (const auto& cell : report.cells) {
    CHECK(cell.curve.empty());
    CHECK(std::isfinite(cell.test.mse));
    CHECK(std::isfinite(cell.test.mae));
  }
  CHECK(report.aggregates.size() == 2);
}

TEST_CASE("identical seeds produce identical rows") {
  ExperimentConfig cfg = tiny_config();
  cfg.archs = {ModelKind::Rnn};
  cfg.seeds = {3, 3};
  const auto report = run_experiment(cfg);
  REQUIRE(report.cells.size() == 2);
  CHECK(report.cells[0].test.mse == report.cells[1].test.mse);
  CHECK(report.cells[0].test.mae == report.cells[1].test.mae);
  CHECK(report.cells[0].hit_rates == report.cells[1].hit_rates);
}

TEST_CASE("aggregates are exact arithmetic means of the per-seed rows") {
  const auto report = run_experiment(tiny_config());
  for (const auto& agg : report.aggregates) {
    double mse_sum = 0, mae_sum = 0;
    int n = 0;
    for (const auto& cell : report.cells) {
      if (cell.kind != agg.kind) continue;
      mse_sum += cell.test.mse;
      mae_sum += cell.test.mae;
      ++n;
    }
    REQUIRE(n > 0);
    CHECK(std::abs(agg.mean_mse - mse_sum / n) < 1e-12);
    CHECK(std::abs(agg.mean_mae - mae_sum / n) < 1e-12);
    CHECK(agg.mean_mae <= std::sqrt(agg.mean_mse) + 1e-12);
  }
}

TEST_CASE("rerunning an experiment reproduces the csv artifacts byte for byte") {
  const ExperimentConfig cfg = tiny_config();
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  CHECK(format_table1_csv(a) == format_table1_csv(b));
  CHECK(hitrates_csv(a) == hitrates_csv(b));
  CHECK(a.config_hash == b.config_hash);
}

TEST_CASE("experiment runs are deterministic across worker counts") {
  const ExperimentConfig cfg = tiny_config();
  setenv("CACHECAST_THREADS", "1", 1);
  const auto serial = run_experiment(cfg);
  setenv("CACHECAST_THREADS", "4", 1);
  const auto parallel = run_experiment(cfg);
  unsetenv("CACHECAST_THREADS");
  CHECK(format_table1_csv(serial) == format_table1_csv(parallel));
  CHECK(hitrates_csv(serial) == hitrates_csv(parallel));
}

TEST_CASE("table renders the fixed row order and three decimals") {
  const auto report = fake_report();
  const std::string csv = format_table1_csv(report);
  CHECK(csv.find("CNN-LSTM,1,0.244,0.127") != std::string::npos);
  CHECK(csv.find("CNN-LSTM,mean,0.244,0.127") != std::string::npos);
  CHECK(csv.find("LRU,1,0.951,0.867") != std::string::npos);

  const std::string text = format_table1_text(report);
  CHECK(text.find("CNN-LSTM") != std::string::npos);
  CHECK(text.find("0.244") != std::string::npos);
  CHECK(text.find("0.127") != std::string::npos);

  // fixed row order: LRU first, CNN-LSTM last
  CHECK(text.find("LRU") < text.find("LFU"));
  CHECK(text.find("LFU") < text.find("RNN"));
  CHECK(text.find("RNN") < text.find("GRU"));
  CHECK(text.find("GRU") < text.find("LSTM"));
  CHECK(text.rfind("CNN-LSTM") > text.find("LSTM"));
}

TEST_CASE("csv and text table carry identical numeric values") {
  const auto report = fake_report();
  const std::string csv = format_table1_csv(report);
  const std::string text = format_table1_text(report);
  for (const char* value : {"0.951", "0.867", "0.873", "0.725", "0.623", "0.546", "0.521",
                            "0.465", "0.375", "0.321", "0.244", "0.127"}) {
    CAPTURE(value);
    CHECK(csv.find(value) != std::string::npos);
    CHECK(text.find(value) != std::string::npos);
  }
}

TEST_CASE("config hash moves with the config") {
  const ExperimentConfig a = tiny_config();
  ExperimentConfig b = a;
  b.synth.seed = 8;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a) == config_hash(tiny_config()));
}

TEST_CASE("prediction tables shift model outputs by the horizon") {
  SynthConfig synth;
  synth.num_blocks = 6;
  synth.num_events = 3000;
  synth.num_windows = 40;
  synth.phase_blocks = 2;
  const auto records = generate_synthetic(synth);
  const auto agg = build_windows(records, synth.window_len_us, synth.num_windows, synth.num_blocks);
  const auto data = build_dataset(agg, 2);

  const Model model = init_model(default_arch(ModelKind::LruHeuristic, 0));
  const auto table = prediction_table_from_model(model, data, synth.window_len_us, 2);
  const auto pred = predict_sequence(model, data.features[0]);

  CHECK(table.num_windows == data.split.num_windows);
  const Vector& scores = table.scores.at(data.features[0].block_id);
  CHECK(scores[0] == pred.values[0]);  // clamped early windows
  CHECK(scores[1] == pred.values[0]);
  CHECK(scores[2] == pred.values[0]);
  CHECK(scores[5] == pred.values[3]);
  CHECK(scores[table.num_windows - 1] == pred.values[table.num_windows - 3]);
}

TEST_CASE("oracle tables carry raw next-window counts") {
  SynthConfig synth;
  synth.num_blocks = 4;
  synth.num_events = 1000;
  synth.num_windows = 20;
  synth.phase_blocks = 1;
  const auto records = generate_synthetic(synth);
  const auto agg = build_windows(records, synth.window_len_us, synth.num_windows, synth.num_blocks);
  const auto table = oracle_prediction_table(agg, 19);
  CHECK(table.num_windows == 19);
  for (std::size_t i = 0; i < agg.block_ids.size(); ++i)
    for (int w = 0; w < 19; ++w)
      CHECK(table.at(agg.block_ids[i], w) == agg.per_block[i](w, 0));
}

TEST_CASE("hit-rate rows cover policies, oracle and every model") {
  const auto report = run_experiment(tiny_config());
  REQUIRE(report.hit_rates.size() == 6);  // lru, lfu, oracle + 3 archs at one capacity
  CHECK(report.hit_rates[0].policy == "lru");
  CHECK(report.hit_rates[1].policy == "lfu");
  CHECK(report.hit_rates[2].policy == "oracle");
  CHECK(report.hit_rates[3].policy == "predictive:lru");  // heuristic as predictor
  for (const auto& row : report.hit_rates) {
    CHECK(row.metrics.hit_rate >= 0.0);
    CHECK(row.metrics.hit_rate <= 1.0);
  }
}

TEST_CASE("pipeline errors carry their stage") {
  ExperimentConfig cfg = tiny_config();
  cfg.trace_path = "does_not_exist.csv";
  try {
    run_experiment(cfg);
    FAIL("expected an ingest error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ingest:") != std::string::npos);
  }
}

TEST_CASE("invalid configs are rejected up front") {
  ExperimentConfig cfg = tiny_config();
  cfg.seeds.clear();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  cfg = tiny_config();
  cfg.capacities = {0};
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}
