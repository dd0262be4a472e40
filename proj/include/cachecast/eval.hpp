#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cachecast/cachesim.hpp"
#include "cachecast/models.hpp"
#include "cachecast/trainer.hpp"

namespace cachecast {

struct ExperimentConfig {
  std::string trace_path;  // empty: generate from synth
  SynthConfig synth;
  std::uint64_t block_size = 4096;
  std::int64_t window_len_us = 1000;
  int num_windows = 200;
  int horizon = 1;
  int recency_cap = kDefaultRecencyCap;
  std::vector<ModelKind> archs = {ModelKind::LruHeuristic, ModelKind::LfuHeuristic,
                                  ModelKind::Rnn,          ModelKind::Gru,
                                  ModelKind::Lstm,         ModelKind::CnnLstm};
  std::vector<ConvLayerSpec> conv_layers = {{16, 3}, {8, 3}};
  int hidden_size = 16;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<std::size_t> capacities = {16};
  int prefetch_budget = 8;
  double demote_threshold = 0.0;
};

struct ModelCell {
  ModelKind kind = ModelKind::CnnLstm;
  std::uint64_t seed = 0;
  Metrics test;
  LossCurve curve;                // empty for heuristics
  std::vector<double> hit_rates;  // predictive hit rate per configured capacity
};

struct ArchAggregate {
  ModelKind kind = ModelKind::CnnLstm;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  double mean_mae = 0.0;
  double std_mae = 0.0;
};

struct HitRateRow {
  std::string policy;
  std::size_t capacity = 0;
  CacheMetrics metrics;
};

struct ExperimentReport {
  std::vector<ModelCell> cells;          // config order: arch-major, seed-minor
  std::vector<ArchAggregate> aggregates;  // config order
  std::vector<HitRateRow> hit_rates;
  std::uint64_t config_hash = 0;
};

/// Full pipeline: ingest -> featurize -> split -> train/evaluate each
/// (arch, seed) -> cache simulations per capacity -> aggregate. Deterministic
/// given the config; independent cells may run on CACHECAST_THREADS workers.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Aggregate table in fixed row order LRU, LFU, RNN, GRU, LSTM, CNN-LSTM
/// (restricted to configured archs), three decimals.
std::string format_table1_text(const ExperimentReport& report);
std::string format_table1_csv(const ExperimentReport& report);

std::string hitrates_csv(const ExperimentReport& report);

/// Writes table1.csv, hitrates.csv, losscurve_<model>_<seed>.csv and
/// provenance.json under outdir.
void write_report_artifacts(const ExperimentReport& report, const ExperimentConfig& cfg,
                            const std::string& outdir);

std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string config_to_string(const ExperimentConfig& cfg);

/// Worker cap from CACHECAST_THREADS (0 or unset: hardware concurrency).
unsigned experiment_threads();

/// Assembles the per-(block, window) table that drives the predictive
/// simulator: demand for window w comes from the model output at
/// t = clamp(w - horizon, 0, T-1).
PredictionTable prediction_table_from_model(const Model& model, const Dataset& data,
                                            std::int64_t window_len_us, int horizon);

/// Ground-truth next-window access counts (the prefetch upper bound).
PredictionTable oracle_prediction_table(const WindowAggregates& agg, int labelled_windows);

}  // namespace cachecast
