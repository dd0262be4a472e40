#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cachecast/featurize.hpp"
#include "cachecast/trace.hpp"

namespace cachecast {

enum class Policy { Lru, Lfu };

struct CacheMetrics {
  std::uint64_t accesses = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t prefetch_issued = 0;
  std::uint64_t prefetch_used = 0;
  std::uint64_t evictions = 0;
  std::uint64_t demotions = 0;
  double hit_rate = 0.0;
};

/// Fixed-capacity whole-block simulation; reads and writes both count as
/// accesses and insert on miss. LRU evicts the least recently used resident;
/// LFU evicts the least frequently used with least-recent tiebreak, and
/// frequency counts survive eviction. All remaining ties break by ascending
/// block id. hit_seq, when given, receives one hit/miss flag per access.
CacheMetrics simulate(const std::vector<AccessRecord>& trace, Policy policy,
                      std::size_t capacity, std::vector<bool>* hit_seq = nullptr);

/// Predicted demand per (block, window). Lookups outside the table raise
/// MissingPrediction.
struct PredictionTable {
  std::int64_t window_len_us = 0;
  int num_windows = 0;
  std::map<std::uint64_t, Vector> scores;

  double at(std::uint64_t block_id, int window) const;
};

/// Demand-driven simulation steered by predictions. Entering window w:
/// residents scoring below demote_threshold are dropped (demotions), then up
/// to prefetch_budget non-resident blocks are inserted in descending score
/// order; when full a prefetch only displaces the lowest-scored resident if
/// the candidate scores strictly higher. Demand misses always insert,
/// evicting the lowest-scored resident. Ties break by ascending block id.
CacheMetrics simulate_predictive(const std::vector<AccessRecord>& trace,
                                 const PredictionTable& predictions,
                                 std::size_t capacity, int prefetch_budget,
                                 double demote_threshold,
                                 std::vector<bool>* hit_seq = nullptr);

/// CSV comparison table: label,accesses,hits,hit_rate,prefetch_used,demotions.
std::string hit_rate_report(const std::vector<std::pair<std::string, CacheMetrics>>& rows);

/// Per-window timeline `window,policy,hit_rate`; each run pairs a policy
/// label with the per-access hit flags captured by a simulation of `trace`.
std::string hit_rate_timeline_csv(
    const std::vector<AccessRecord>& trace, std::int64_t window_len_us,
    const std::vector<std::pair<std::string, std::vector<bool>>>& runs);

/// Keeps only records whose window index falls inside [0, num_windows).
std::vector<AccessRecord> clip_to_windows(const std::vector<AccessRecord>& trace,
                                          std::int64_t window_len_us, int num_windows);

}  // namespace cachecast
