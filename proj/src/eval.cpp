#include "cachecast/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cachecast/errors.hpp"

namespace cachecast {

namespace {

constexpr const char* kArtifactVersion = "cachecast 0.1.0";

const char* display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::CnnLstm: return "CNN-LSTM";
    case ModelKind::Lstm: return "LSTM";
    case ModelKind::Gru: return "GRU";
    case ModelKind::Rnn: return "RNN";
    case ModelKind::LruHeuristic: return "LRU";
    case ModelKind::LfuHeuristic: return "LFU";
  }
  return "?";
}

constexpr ModelKind kTableOrder[] = {ModelKind::LruHeuristic, ModelKind::LfuHeuristic,
                                     ModelKind::Rnn,          ModelKind::Gru,
                                     ModelKind::Lstm,         ModelKind::CnnLstm};

std::string format3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

struct CellResult {
  ModelCell cell;
  Model model;  // trained (or plain heuristic) model of this cell
};

ArchSpec arch_for(const ExperimentConfig& cfg, ModelKind kind, std::uint64_t seed) {
  ArchSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.hidden_size = is_learned(kind) ? cfg.hidden_size : 0;
  if (kind == ModelKind::CnnLstm) spec.conv_layers = cfg.conv_layers;
  return spec;
}

}  // namespace

unsigned experiment_threads() {
  if (const char* env = std::getenv("CACHECAST_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed > 0) return static_cast<unsigned>(parsed);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

PredictionTable prediction_table_from_model(const Model& model, const Dataset& data,
                                            std::int64_t window_len_us, int horizon) {
  PredictionTable table;
  table.window_len_us = window_len_us;
  table.num_windows = data.split.num_windows;
  for (const auto& fm : data.features) {
    const Vector pred = predict_sequence(model, fm).values;
    Vector scores(table.num_windows);
    for (int w = 0; w < table.num_windows; ++w) {
      const int t = std::clamp(w - horizon, 0, table.num_windows - 1);
      scores[w] = pred[t];
    }
    table.scores.emplace(fm.block_id, std::move(scores));
  }
  return table;
}

PredictionTable oracle_prediction_table(const WindowAggregates& agg, int labelled_windows) {
  PredictionTable table;
  table.window_len_us = agg.window_len_us;
  table.num_windows = labelled_windows;
  for (std::size_t i = 0; i < agg.block_ids.size(); ++i)
    table.scores.emplace(agg.block_ids[i], agg.per_block[i].col(0).head(labelled_windows));
  return table;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.archs.empty()) throw ConfigError("at least one architecture is required");
  for (const auto cap : cfg.capacities)
    if (cap == 0) throw ConfigError("capacities must be at least 1");

  std::vector<AccessRecord> records;
  try {
    records = cfg.trace_path.empty() ? generate_synthetic(cfg.synth)
                                     : load_trace(cfg.trace_path, cfg.block_size);
  } catch (const Error& e) {
    throw Error(std::string("ingest: ") + e.what());
  }

  WindowAggregates agg;
  Dataset data;
  try {
    const std::uint64_t hint = cfg.trace_path.empty() ? cfg.synth.num_blocks : 0;
    agg = build_windows(records, cfg.window_len_us, cfg.num_windows, hint, cfg.recency_cap);
    data = build_dataset(agg, cfg.horizon);
  } catch (const Error& e) {
    throw Error(std::string("featurize: ") + e.what());
  }

  const std::vector<AccessRecord> trimmed =
      clip_to_windows(records, cfg.window_len_us, data.split.num_windows);
  const std::size_t n_cells = cfg.archs.size() * cfg.seeds.size();
  std::vector<CellResult> results(n_cells);
  std::vector<std::exception_ptr> failures(n_cells);

  auto run_cell = [&](std::size_t index) {
    const ModelKind kind = cfg.archs[index / cfg.seeds.size()];
    const std::uint64_t seed = cfg.seeds[index % cfg.seeds.size()];
    CellResult out;
    out.cell.kind = kind;
    out.cell.seed = seed;
    Model model = init_model(arch_for(cfg, kind, seed));
    if (is_learned(kind)) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      TrainResult trained = train(model, data, tc);
      out.cell.curve = std::move(trained.curve);
      model = std::move(trained.model);
    }
    out.cell.test = evaluate(model, data, Split::Test);
    const PredictionTable table =
        prediction_table_from_model(model, data, cfg.window_len_us, cfg.horizon);
    for (const auto cap : cfg.capacities)
      out.cell.hit_rates.push_back(
          simulate_predictive(trimmed, table, cap, cfg.prefetch_budget, cfg.demote_threshold)
              .hit_rate);
    out.model = std::move(model);
    results[index] = std::move(out);
  };

  const unsigned workers =
      std::min<unsigned>(experiment_threads(), static_cast<unsigned>(n_cells));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_cells; ++i) {
      try {
        run_cell(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_cells) return;
        try {
          run_cell(i);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n_cells; ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const std::exception& e) {
      throw Error("cell " + std::string(to_string(cfg.archs[i / cfg.seeds.size()])) + "/seed " +
                  std::to_string(cfg.seeds[i % cfg.seeds.size()]) + ": " + e.what());
    }
  }

  ExperimentReport report;
  for (auto& r : results) report.cells.push_back(std::move(r.cell));

  for (std::size_t a = 0; a < cfg.archs.size(); ++a) {
    ArchAggregate agg_row;
    agg_row.kind = cfg.archs[a];
    const std::size_t base = a * cfg.seeds.size();
    const double n = static_cast<double>(cfg.seeds.size());
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      agg_row.mean_mse += report.cells[base + s].test.mse;
      agg_row.mean_mae += report.cells[base + s].test.mae;
    }
    agg_row.mean_mse /= n;
    agg_row.mean_mae /= n;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      agg_row.std_mse += std::pow(report.cells[base + s].test.mse - agg_row.mean_mse, 2);
      agg_row.std_mae += std::pow(report.cells[base + s].test.mae - agg_row.mean_mae, 2);
    }
    agg_row.std_mse = std::sqrt(agg_row.std_mse / n);
    agg_row.std_mae = std::sqrt(agg_row.std_mae / n);
    report.aggregates.push_back(agg_row);
  }

  // capacity sweep: classic policies, the oracle bound, then each model's
  // predictive run (first configured seed)
  const PredictionTable oracle = oracle_prediction_table(agg, data.split.num_windows);
  for (const auto cap : cfg.capacities) {
    report.hit_rates.push_back({"lru", cap, simulate(trimmed, Policy::Lru, cap)});
    report.hit_rates.push_back({"lfu", cap, simulate(trimmed, Policy::Lfu, cap)});
    report.hit_rates.push_back(
        {"oracle", cap,
         simulate_predictive(trimmed, oracle, cap, cfg.prefetch_budget, cfg.demote_threshold)});
    for (std::size_t a = 0; a < cfg.archs.size(); ++a) {
      const Model& model = results[a * cfg.seeds.size()].model;
      const PredictionTable table =
          prediction_table_from_model(model, data, cfg.window_len_us, cfg.horizon);
      report.hit_rates.push_back(
          {std::string("predictive:") + to_string(cfg.archs[a]), cap,
           simulate_predictive(trimmed, table, cap, cfg.prefetch_budget, cfg.demote_threshold)});
    }
  }

  report.config_hash = config_hash(cfg);
  return report;
}

std::string format_table1_csv(const ExperimentReport& report) {
  std::string out = "model,seed,mse,mae\n";
  for (const ModelKind kind : kTableOrder) {
    const auto agg = std::find_if(report.aggregates.begin(), report.aggregates.end(),
                                  [&](const auto& a) { return a.kind == kind; });
    if (agg == report.aggregates.end()) continue;
    for (const auto& cell : report.cells) {
      if (cell.kind != kind) continue;
      out += std::string(display_name(kind)) + "," + std::to_string(cell.seed) + "," +
             format3(cell.test.mse) + "," + format3(cell.test.mae) + "\n";
    }
    out += std::string(display_name(kind)) + ",mean," + format3(agg->mean_mse) + "," +
           format3(agg->mean_mae) + "\n";
    out += std::string(display_name(kind)) + ",std," + format3(agg->std_mse) + "," +
           format3(agg->std_mae) + "\n";
  }
  return out;
}

std::string format_table1_text(const ExperimentReport& report) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s\n", "Model", "MSE", "MAE");
  out += buf;
  for (const ModelKind kind : kTableOrder) {
    const auto agg = std::find_if(report.aggregates.begin(), report.aggregates.end(),
                                  [&](const auto& a) { return a.kind == kind; });
    if (agg == report.aggregates.end()) continue;
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s\n", display_name(kind),
                  format3(agg->mean_mse).c_str(), format3(agg->mean_mae).c_str());
    out += buf;
  }
  return out;
}

std::string hitrates_csv(const ExperimentReport& report) {
  std::string out = "policy,capacity,accesses,hits,hit_rate,prefetch_used,demotions\n";
  char buf[192];
  for (const auto& row : report.hit_rates) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%llu,%llu,%.6f,%llu,%llu\n", row.policy.c_str(),
                  row.capacity, static_cast<unsigned long long>(row.metrics.accesses),
                  static_cast<unsigned long long>(row.metrics.hits), row.metrics.hit_rate,
                  static_cast<unsigned long long>(row.metrics.prefetch_used),
                  static_cast<unsigned long long>(row.metrics.demotions));
    out += buf;
  }
  return out;
}

std::string config_to_string(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "trace_path=" << cfg.trace_path << "\n";
  out << "synth=" << cfg.synth.num_blocks << "," << cfg.synth.num_events << ","
      << cfg.synth.zipf_alpha << "," << cfg.synth.period_windows << "," << cfg.synth.phase_blocks
      << "," << cfg.synth.seed << "," << cfg.synth.block_size << "," << cfg.synth.num_windows
      << "," << cfg.synth.window_len_us << "\n";
  out << "block_size=" << cfg.block_size << "\n";
  out << "window_len_us=" << cfg.window_len_us << "\n";
  out << "num_windows=" << cfg.num_windows << "\n";
  out << "horizon=" << cfg.horizon << "\n";
  out << "recency_cap=" << cfg.recency_cap << "\n";
  out << "archs=";
  for (const auto kind : cfg.archs) out << to_string(kind) << ",";
  out << "\nconv=";
  for (const auto& layer : cfg.conv_layers) out << layer.out_channels << "x" << layer.kernel_width << ",";
  out << "\nhidden=" << cfg.hidden_size << "\n";
  out << "train=" << cfg.train.epochs << "," << cfg.train.batch_size << ","
      << cfg.train.learning_rate << ","
      << (cfg.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd") << ","
      << cfg.train.grad_clip_norm << "," << cfg.train.early_stop_patience << "\n";
  out << "seeds=";
  for (const auto seed : cfg.seeds) out << seed << ",";
  out << "\ncapacities=";
  for (const auto cap : cfg.capacities) out << cap << ",";
  out << "\nprefetch_budget=" << cfg.prefetch_budget << "\n";
  out << "demote_threshold=" << cfg.demote_threshold << "\n";
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a(config_to_string(cfg)); }

void write_report_artifacts(const ExperimentReport& report, const ExperimentConfig& cfg,
                            const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  auto write_file = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(outdir) / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + name + " under " + outdir);
    out << content;
  };

  write_file("table1.csv", format_table1_csv(report));
  write_file("hitrates.csv", hitrates_csv(report));
  for (const auto& cell : report.cells) {
    if (cell.curve.empty()) continue;
    std::ostringstream curve;
    write_loss_curve_csv(curve, cell.curve);
    write_file("losscurve_" + std::string(to_string(cell.kind)) + "_" +
                   std::to_string(cell.seed) + ".csv",
               curve.str());
  }

  nlohmann::ordered_json provenance;
  provenance["artifact"] = kArtifactVersion;
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(report.config_hash));
  provenance["config_hash"] = hash_hex;
  provenance["config"] = config_to_string(cfg);
  write_file("provenance.json", provenance.dump(2) + "\n");
}

}  // namespace cachecast
