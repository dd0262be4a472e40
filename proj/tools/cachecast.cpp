#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cachecast/errors.hpp"
#include "cachecast/eval.hpp"

namespace cc = cachecast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

cc::Dataset dataset_from_trace(const std::vector<cc::AccessRecord>& records,
                               std::int64_t window_us, int num_windows, int horizon,
                               int recency_cap) {
  const auto agg = cc::build_windows(records, window_us, num_windows, 0, recency_cap);
  return cc::build_dataset(agg, horizon);
}

// --- gen ---

struct GenArgs {
  cc::SynthConfig synth;
  std::string output;
};

int run_gen(const GenArgs& args) {
  const auto records = cc::generate_synthetic(args.synth);
  std::ofstream out(args.output, std::ios::binary);
  if (!out) throw cc::IoError("cannot write " + args.output);
  cc::write_canonical_csv(out, records);
  if (!out) throw cc::IoError("failed writing " + args.output);

  const auto stats = cc::trace_stats(records);
  std::cout << "wrote " << stats.num_records << " records, " << stats.num_blocks
            << " distinct blocks, span " << stats.time_span_us << " us, read fraction "
            << stats.read_fraction << "\n";
  return kExitOk;
}

// --- train ---

struct TrainArgs {
  std::string trace_path;
  std::string arch = "cnn-lstm";
  std::string output;
  std::string curve_path;
  std::string svg_path;
  std::string dump_features_dir;
  std::uint64_t block_size = 4096;
  std::int64_t window_us = 1000;
  int num_windows = 0;  // derive from trace
  int horizon = 1;
  int recency_cap = cc::kDefaultRecencyCap;
  int hidden = 16;
  cc::TrainConfig train;
  std::string optimizer = "adam";
};

void dump_features(const cc::Dataset& data, const cc::NormStats* norm, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    const auto& fm = data.features[i];
    std::ofstream out(fs::path(dir) / ("block_" + std::to_string(fm.block_id) + ".csv"));
    out << "window";
    for (const auto& name : fm.feature_names) out << ',' << name;
    out << ",label\n";
    for (Eigen::Index t = 0; t < fm.values.rows(); ++t) {
      out << t;
      for (Eigen::Index c = 0; c < fm.values.cols(); ++c) out << ',' << fm.values(t, c);
      out << ',' << data.labels[i].values[t] << '\n';
    }
  }
  nlohmann::ordered_json side;
  side["label_scale"] = data.label_scale;
  side["split"] = {{"train_end", data.split.train_end},
                   {"val_end", data.split.val_end},
                   {"num_windows", data.split.num_windows}};
  if (norm) {
    side["norm"]["mean"] = std::vector<double>(norm->mean.begin(), norm->mean.end());
    side["norm"]["std"] = std::vector<double>(norm->stddev.begin(), norm->stddev.end());
  }
  std::ofstream out(fs::path(dir) / "dataset.json");
  out << side.dump(2) << "\n";
}

int run_train(const TrainArgs& args) {
  const auto kind = cc::model_kind_from_string(args.arch);
  if (!kind) {
    std::cerr << "unknown --arch '" << args.arch << "'\n";
    return kExitUsage;
  }
  if (!cc::is_learned(*kind)) {
    std::cerr << "heuristic models are not trainable (--arch " << args.arch << ")\n";
    return kExitUsage;
  }
  if (args.train.learning_rate <= 0) {
    std::cerr << "--lr must be positive\n";
    return kExitUsage;
  }

  const auto records = cc::load_trace(args.trace_path, args.block_size);
  const auto data = dataset_from_trace(records, args.window_us, args.num_windows, args.horizon,
                                       args.recency_cap);

  cc::ArchSpec spec = cc::default_arch(*kind, args.train.seed);
  spec.hidden_size = args.hidden;
  const cc::Model model = cc::init_model(spec);
  const cc::TrainResult result = cc::train(model, data, args.train);

  cc::save_checkpoint(result.model, args.output);
  const std::string curve_path =
      args.curve_path.empty() ? args.output + ".losscurve.csv" : args.curve_path;
  {
    std::ofstream out(curve_path, std::ios::binary);
    if (!out) throw cc::IoError("cannot write " + curve_path);
    cc::write_loss_curve_csv(out, result.curve);
  }
  if (!args.svg_path.empty()) {
    std::ofstream out(args.svg_path, std::ios::binary);
    if (!out) throw cc::IoError("cannot write " + args.svg_path);
    cc::write_loss_curve_svg(out, result.curve);
  }
  if (!args.dump_features_dir.empty())
    dump_features(data, result.model.norm ? &*result.model.norm : nullptr,
                  args.dump_features_dir);

  const cc::Metrics val = cc::evaluate(result.model, data, cc::Split::Val);
  {
    std::ofstream out(args.output + ".metrics.csv", std::ios::binary);
    if (out) cc::write_metrics_csv(out, {{args.arch, val}});
  }
  std::cout << "checkpoint: " << args.output << "\nloss curve: " << curve_path << "\nval mse "
            << val.mse << ", val mae " << val.mae << " (" << result.curve.size() << " epochs)\n";
  return kExitOk;
}

// --- simulate ---

struct SimArgs {
  std::string trace_path;
  std::string policy = "lru";
  std::string model_path;
  std::string output;
  std::string timeline_path;
  std::size_t capacity = 16;
  std::uint64_t block_size = 4096;
  std::int64_t window_us = 1000;
  int num_windows = 0;
  int horizon = 1;
  int recency_cap = cc::kDefaultRecencyCap;
  int prefetch_budget = 8;
  double demote_threshold = 0.0;
};

int run_simulate(const SimArgs& args) {
  const auto records = cc::load_trace(args.trace_path, args.block_size);

  cc::CacheMetrics metrics;
  std::vector<cc::AccessRecord> simulated = records;
  std::vector<bool> hits;
  if (args.policy == "lru" || args.policy == "lfu") {
    metrics = cc::simulate(records, args.policy == "lru" ? cc::Policy::Lru : cc::Policy::Lfu,
                           args.capacity, &hits);
  } else {
    const cc::Model model = cc::load_checkpoint(args.model_path);
    const auto data = dataset_from_trace(records, args.window_us, args.num_windows, args.horizon,
                                         args.recency_cap);
    const auto table =
        cc::prediction_table_from_model(model, data, args.window_us, args.horizon);
    simulated = cc::clip_to_windows(records, args.window_us, data.split.num_windows);
    metrics = cc::simulate_predictive(simulated, table, args.capacity, args.prefetch_budget,
                                      args.demote_threshold, &hits);
  }
  if (!args.timeline_path.empty()) {
    std::ofstream out(args.timeline_path, std::ios::binary);
    if (!out) throw cc::IoError("cannot write " + args.timeline_path);
    out << cc::hit_rate_timeline_csv(simulated, args.window_us, {{args.policy, hits}});
  }

  const std::string report = cc::hit_rate_report({{args.policy, metrics}});
  if (!args.output.empty()) {
    std::ofstream out(args.output, std::ios::binary);
    if (!out) throw cc::IoError("cannot write " + args.output);
    out << report;
  } else {
    std::cout << report;
  }
  std::cout << "hit_rate " << metrics.hit_rate << "\n";
  return kExitOk;
}

// --- report (config file + overrides) ---

struct ReportArgs {
  std::string config_path;
  std::string outdir;  // empty: take from file or default "out"
  std::string seeds_override;
  int epochs_override = -1;
};

struct ParsedExperiment {
  cc::ExperimentConfig config;
  std::string outdir = "out";
};

[[noreturn]] void config_fail(std::size_t line_no, const std::string& message) {
  throw cc::ConfigError("config line " + std::to_string(line_no) + ": " + message);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(text)) out.push_back(std::stoull(item));
  return out;
}

ParsedExperiment parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cc::IoError("cannot open config: " + path);

  ParsedExperiment parsed;
  cc::ExperimentConfig& cfg = parsed.config;
  std::string section;
  std::string line;
  std::size_t line_no = 0;

  auto as_int = [&](const std::string& v) { return std::stoll(v); };
  auto as_double = [&](const std::string& v) { return std::stod(v); };

  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line.erase(0, start);

    if (line.front() == '[') {
      if (line.back() != ']') config_fail(line_no, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "trace" && section != "featurize" && section != "train" && section != "eval")
        config_fail(line_no, "unknown section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) config_fail(line_no, "expected key = value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(0, 1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    };
    strip(key);
    strip(value);
    if (key.empty() || value.empty()) config_fail(line_no, "empty key or value");

    try {
      if (section == "trace") {
        if (key == "source") {
          if (value != "synthetic") config_fail(line_no, "source must be 'synthetic' (or use path)");
        } else if (key == "path") {
          cfg.trace_path = value;
        } else if (key == "blocks") {
          cfg.synth.num_blocks = static_cast<std::uint64_t>(as_int(value));
        } else if (key == "events") {
          cfg.synth.num_events = static_cast<std::uint64_t>(as_int(value));
        } else if (key == "zipf") {
          cfg.synth.zipf_alpha = as_double(value);
        } else if (key == "period") {
          cfg.synth.period_windows = static_cast<int>(as_int(value));
        } else if (key == "phase") {
          cfg.synth.phase_blocks = static_cast<std::uint64_t>(as_int(value));
        } else if (key == "seed") {
          cfg.synth.seed = static_cast<std::uint64_t>(as_int(value));
        } else if (key == "block_size") {
          cfg.synth.block_size = static_cast<std::uint64_t>(as_int(value));
          cfg.block_size = cfg.synth.block_size;
        } else if (key == "windows") {
          cfg.synth.num_windows = static_cast<int>(as_int(value));
          cfg.num_windows = cfg.synth.num_windows;
        } else if (key == "window_us") {
          cfg.synth.window_len_us = as_int(value);
          cfg.window_len_us = cfg.synth.window_len_us;
        } else {
          config_fail(line_no, "unknown key '" + key + "' in section [trace]");
        }
      } else if (section == "featurize") {
        if (key == "horizon") cfg.horizon = static_cast<int>(as_int(value));
        else if (key == "recency_cap") cfg.recency_cap = static_cast<int>(as_int(value));
        else config_fail(line_no, "unknown key '" + key + "' in section [featurize]");
      } else if (section == "train") {
        if (key == "epochs") cfg.train.epochs = static_cast<int>(as_int(value));
        else if (key == "batch") cfg.train.batch_size = static_cast<int>(as_int(value));
        else if (key == "lr") cfg.train.learning_rate = as_double(value);
        else if (key == "optimizer") {
          if (value == "adam") cfg.train.optimizer = cc::OptimizerKind::Adam;
          else if (value == "sgd") cfg.train.optimizer = cc::OptimizerKind::Sgd;
          else config_fail(line_no, "optimizer must be adam or sgd");
        } else if (key == "clip") cfg.train.grad_clip_norm = as_double(value);
        else if (key == "patience") cfg.train.early_stop_patience = static_cast<int>(as_int(value));
        else config_fail(line_no, "unknown key '" + key + "' in section [train]");
      } else if (section == "eval") {
        if (key == "archs") {
          cfg.archs.clear();
          for (const auto& name : split_list(value)) {
            const auto kind = cc::model_kind_from_string(name);
            if (!kind) config_fail(line_no, "unknown architecture '" + name + "'");
            cfg.archs.push_back(*kind);
          }
        } else if (key == "conv") {
          cfg.conv_layers.clear();
          for (const auto& item : split_list(value)) {
            const auto x = item.find('x');
            if (x == std::string::npos) config_fail(line_no, "conv entries look like 16x3");
            cfg.conv_layers.push_back({static_cast<int>(as_int(item.substr(0, x))),
                                       static_cast<int>(as_int(item.substr(x + 1)))});
          }
        } else if (key == "hidden") {
          cfg.hidden_size = static_cast<int>(as_int(value));
        } else if (key == "seeds") {
          cfg.seeds = parse_seed_list(value);
        } else if (key == "capacities") {
          cfg.capacities.clear();
          for (const auto& item : split_list(value))
            cfg.capacities.push_back(static_cast<std::size_t>(as_int(item)));
        } else if (key == "prefetch_budget") {
          cfg.prefetch_budget = static_cast<int>(as_int(value));
        } else if (key == "demote_threshold") {
          cfg.demote_threshold = as_double(value);
        } else if (key == "outdir") {
          parsed.outdir = value;
        } else {
          config_fail(line_no, "unknown key '" + key + "' in section [eval]");
        }
      } else {
        config_fail(line_no, "key outside any section");
      }
    } catch (const std::invalid_argument&) {
      config_fail(line_no, "bad numeric value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range&) {
      config_fail(line_no, "numeric value out of range for key '" + key + "'");
    }
  }
  return parsed;
}

int run_report(const ReportArgs& args) {
  ParsedExperiment parsed = parse_experiment_config(args.config_path);
  if (!args.outdir.empty()) parsed.outdir = args.outdir;
  if (!args.seeds_override.empty()) {
    try {
      parsed.config.seeds = parse_seed_list(args.seeds_override);
    } catch (const std::exception&) {
      throw cc::ConfigError("--seeds expects a comma-separated integer list, got '" +
                            args.seeds_override + "'");
    }
  }
  if (args.epochs_override > 0) parsed.config.train.epochs = args.epochs_override;

  const cc::ExperimentReport report = cc::run_experiment(parsed.config);
  cc::write_report_artifacts(report, parsed.config, parsed.outdir);
  std::cout << cc::format_table1_text(report);
  std::cout << "artifacts under " << parsed.outdir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-driven cache-demand prediction and simulation toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic trace");
  cmd_gen->add_option("--blocks", gen.synth.num_blocks, "distinct blocks")
      ->default_val(64)
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--events", gen.synth.num_events, "events to emit")
      ->default_val(50000)
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--zipf", gen.synth.zipf_alpha, "popularity skew alpha")
      ->default_val(1.0)
      ->check(CLI::NonNegativeNumber);
  cmd_gen->add_option("--period", gen.synth.period_windows, "windows per popularity phase")
      ->default_val(20)
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--phase", gen.synth.phase_blocks, "blocks rotated per phase")
      ->default_val(16);
  cmd_gen->add_option("--seed", gen.synth.seed, "generator seed")->default_val(7);
  cmd_gen->add_option("--block-size", gen.synth.block_size, "block size in bytes")
      ->default_val(4096)
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--windows", gen.synth.num_windows, "total windows")
      ->default_val(200)
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--window-us", gen.synth.window_len_us, "window length in microseconds")
      ->default_val(1000)
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("-o,--output", gen.output, "output trace CSV")->required();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "train a demand predictor");
  cmd_train->add_option("--trace", tr.trace_path, "input trace (canonical or MSR, optionally gzip)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_train->add_option("--arch", tr.arch, "cnn-lstm, lstm, gru or rnn")->default_val("cnn-lstm");
  cmd_train->add_option("-o,--output", tr.output, "checkpoint path")->required();
  cmd_train->add_option("--curve", tr.curve_path, "loss-curve CSV path");
  cmd_train->add_option("--svg", tr.svg_path, "optional loss-curve SVG path");
  cmd_train->add_option("--dump-features", tr.dump_features_dir, "dump per-block dataset CSVs");
  cmd_train->add_option("--block-size", tr.block_size, "block size for MSR offsets")
      ->default_val(4096)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--window-us", tr.window_us, "feature window in microseconds")
      ->default_val(1000)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--windows", tr.num_windows, "window count (0: derive from trace)")
      ->default_val(0);
  cmd_train->add_option("--horizon", tr.horizon, "label look-ahead in windows")
      ->default_val(1)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--recency-cap", tr.recency_cap, "recency gap cap")
      ->default_val(cc::kDefaultRecencyCap)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--hidden", tr.hidden, "hidden units")
      ->default_val(16)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--epochs", tr.train.epochs, "max epochs")
      ->default_val(100)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--batch", tr.train.batch_size, "sequences per step")
      ->default_val(16)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--lr", tr.train.learning_rate, "learning rate")->default_val(1e-3);
  cmd_train->add_option("--optimizer", tr.optimizer, "adam or sgd")->default_val("adam");
  cmd_train->add_option("--clip", tr.train.grad_clip_norm, "gradient clip norm")
      ->default_val(5.0)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--patience", tr.train.early_stop_patience, "early-stop patience")
      ->default_val(10)
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--seed", tr.train.seed, "training + init seed")->default_val(0);

  SimArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "replay a trace through a cache");
  cmd_sim->add_option("--trace", sim.trace_path, "input trace")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_sim->add_option("--policy", sim.policy, "lru, lfu or predictive")
      ->default_val("lru")
      ->check(CLI::IsMember({"lru", "lfu", "predictive"}));
  cmd_sim->add_option("--capacity", sim.capacity, "cache capacity in blocks")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_sim->add_option("--model", sim.model_path, "checkpoint for predictive policy")
      ->check(CLI::ExistingFile);
  cmd_sim->add_option("-o,--output", sim.output, "report CSV path (default: stdout)");
  cmd_sim->add_option("--timeline", sim.timeline_path, "per-window hit-rate CSV path");
  cmd_sim->add_option("--block-size", sim.block_size, "block size for MSR offsets")
      ->default_val(4096)
      ->check(CLI::PositiveNumber);
  cmd_sim->add_option("--window-us", sim.window_us, "prediction window in microseconds")
      ->default_val(1000)
      ->check(CLI::PositiveNumber);
  cmd_sim->add_option("--windows", sim.num_windows, "window count (0: derive)")->default_val(0);
  cmd_sim->add_option("--horizon", sim.horizon, "label look-ahead in windows")
      ->default_val(1)
      ->check(CLI::PositiveNumber);
  cmd_sim->add_option("--recency-cap", sim.recency_cap, "recency gap cap")
      ->default_val(cc::kDefaultRecencyCap);
  cmd_sim->add_option("--prefetch-budget", sim.prefetch_budget, "prefetches per window")
      ->default_val(8)
      ->check(CLI::NonNegativeNumber);
  cmd_sim->add_option("--demote-threshold", sim.demote_threshold, "demotion score threshold")
      ->default_val(0.0)
      ->check(CLI::NonNegativeNumber);
  std::uint64_t sim_seed = 0;
  cmd_sim->add_option("--seed", sim_seed, "accepted for interface symmetry; simulation is "
                                          "deterministic")
      ->default_val(0);

  ReportArgs rep;
  auto* cmd_report = app.add_subcommand("report", "run the full comparison experiment");
  cmd_report->add_option("--config", rep.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_report->add_option("--outdir", rep.outdir, "artifact directory (overrides config)");
  cmd_report->add_option("--seeds", rep.seeds_override, "comma-separated seed override");
  cmd_report->add_option("--epochs", rep.epochs_override, "epoch override");
  std::uint64_t report_seed = 0;
  cmd_report->add_option("--seed", report_seed,
                         "replaces the seed list with a single seed when given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_gen->parsed()) return run_gen(gen);
    if (cmd_train->parsed()) {
      if (tr.optimizer == "adam") tr.train.optimizer = cc::OptimizerKind::Adam;
      else if (tr.optimizer == "sgd") tr.train.optimizer = cc::OptimizerKind::Sgd;
      else {
        std::cerr << "--optimizer must be adam or sgd\n";
        return kExitUsage;
      }
      return run_train(tr);
    }
    if (cmd_sim->parsed()) {
      if (sim.policy == "predictive" && sim.model_path.empty()) {
        std::cerr << "--policy predictive requires --model\n";
        return kExitUsage;
      }
      return run_simulate(sim);
    }
    if (cmd_report->parsed()) {
      if (cmd_report->count("--seed") > 0)
        rep.seeds_override = std::to_string(report_seed);
      return run_report(rep);
    }
  } catch (const cc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
