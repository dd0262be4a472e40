#include "cachecast/cachesim.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "cachecast/errors.hpp"

namespace cachecast {

double PredictionTable::at(std::uint64_t block_id, int window) const {
  if (window < 0 || window >= num_windows) throw MissingPrediction(block_id, window);
  const auto it = scores.find(block_id);
  if (it == scores.end() || window >= it->second.size())
    throw MissingPrediction(block_id, window);
  return it->second[window];
}

CacheMetrics simulate(const std::vector<AccessRecord>& trace, Policy policy,
                      std::size_t capacity, std::vector<bool>* hit_seq) {
  if (capacity == 0) throw ZeroCapacity();
  if (trace.empty()) throw EmptyTrace();

  std::unordered_map<std::uint64_t, std::uint64_t> last_use;  // residents only
  std::unordered_map<std::uint64_t, std::uint64_t> freq;      // survives eviction
  CacheMetrics m;
  std::uint64_t tick = 0;
  if (hit_seq) hit_seq->clear();

  for (const auto& rec : trace) {
    ++tick;
    ++m.accesses;
    const std::uint64_t b = rec.block_id;
    ++freq[b];

    const auto it = last_use.find(b);
    const bool hit = it != last_use.end();
    if (hit_seq) hit_seq->push_back(hit);
    if (hit) {
      ++m.hits;
      it->second = tick;
      continue;
    }

    ++m.misses;
    if (last_use.size() == capacity) {
      auto victim = last_use.end();
      for (auto cur = last_use.begin(); cur != last_use.end(); ++cur) {
        if (victim == last_use.end()) {
          victim = cur;
          continue;
        }
        bool worse;
        if (policy == Policy::Lru) {
          worse = cur->second < victim->second ||
                  (cur->second == victim->second && cur->first < victim->first);
        } else {
          const auto cf = freq[cur->first], vf = freq[victim->first];
          worse = cf < vf || (cf == vf && cur->second < victim->second) ||
                  (cf == vf && cur->second == victim->second && cur->first < victim->first);
        }
        if (worse) victim = cur;
      }
      last_use.erase(victim);
      ++m.evictions;
    }
    last_use.emplace(b, tick);
  }
  m.hit_rate = static_cast<double>(m.hits) / static_cast<double>(m.accesses);
  return m;
}

CacheMetrics simulate_predictive(const std::vector<AccessRecord>& trace,
                                 const PredictionTable& predictions, std::size_t capacity,
                                 int prefetch_budget, double demote_threshold,
                                 std::vector<bool>* hit_seq) {
  if (capacity == 0) throw ZeroCapacity();
  if (trace.empty()) throw EmptyTrace();
  if (predictions.window_len_us <= 0) throw ConfigError("window_len_us must be positive");
  if (prefetch_budget < 0) throw ConfigError("prefetch_budget must be non-negative");
  if (demote_threshold < 0) throw ConfigError("demote_threshold must be non-negative");

  CacheMetrics m;
  std::set<std::uint64_t> resident;  // ordered: ascending-id scans are the tiebreak
  std::unordered_set<std::uint64_t> pending_prefetch;
  if (hit_seq) hit_seq->clear();

  const std::int64_t origin = trace.front().timestamp_us;
  int window = -1;

  auto lowest_scored_resident = [&](int w) {
    auto victim = resident.begin();
    double victim_score = predictions.at(*victim, w);
    for (auto it = std::next(resident.begin()); it != resident.end(); ++it) {
      const double s = predictions.at(*it, w);
      if (s < victim_score) {
        victim = it;
        victim_score = s;
      }
    }
    return std::pair{victim, victim_score};
  };

  auto enter_window = [&](int w) {
    // demote predicted-cold residents
    std::vector<std::uint64_t> cold;
    for (const auto b : resident)
      if (predictions.at(b, w) < demote_threshold) cold.push_back(b);
    for (const auto b : cold) {
      resident.erase(b);
      pending_prefetch.erase(b);
      ++m.demotions;
    }

    if (prefetch_budget == 0) return;

    // hottest non-resident candidates, descending score then ascending id
    std::vector<std::pair<double, std::uint64_t>> candidates;
    for (const auto& [b, scores] : predictions.scores) {
      if (resident.contains(b)) continue;
      if (w >= scores.size()) throw MissingPrediction(b, w);
      const double s = scores[w];
      if (s > 0.0 && s >= demote_threshold) candidates.emplace_back(s, b);
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    if (candidates.size() > static_cast<std::size_t>(prefetch_budget))
      candidates.resize(prefetch_budget);

    for (const auto& [score, b] : candidates) {
      if (resident.size() == capacity) {
        auto [victim, victim_score] = lowest_scored_resident(w);
        if (score <= victim_score) break;  // candidates only get colder
        pending_prefetch.erase(*victim);
        resident.erase(victim);
        ++m.evictions;
      }
      resident.insert(b);
      pending_prefetch.insert(b);
      ++m.prefetch_issued;
    }
  };

  for (const auto& rec : trace) {
    const int w = static_cast<int>((rec.timestamp_us - origin) / predictions.window_len_us);
    while (window < w) enter_window(++window);

    ++m.accesses;
    const std::uint64_t b = rec.block_id;
    predictions.at(b, w);  // coverage check even on hits

    const bool hit = resident.contains(b);
    if (hit_seq) hit_seq->push_back(hit);
    if (hit) {
      ++m.hits;
      if (pending_prefetch.erase(b) > 0) ++m.prefetch_used;
      continue;
    }

    ++m.misses;
    if (resident.size() == capacity) {
      auto [victim, victim_score] = lowest_scored_resident(w);
      pending_prefetch.erase(*victim);
      resident.erase(victim);
      ++m.evictions;
    }
    resident.insert(b);
  }
  m.hit_rate = static_cast<double>(m.hits) / static_cast<double>(m.accesses);
  return m;
}

std::string hit_rate_report(const std::vector<std::pair<std::string, CacheMetrics>>& rows) {
  std::string out = "label,accesses,hits,hit_rate,prefetch_used,demotions\n";
  char buf[192];
  for (const auto& [label, m] : rows) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%.6f,%llu,%llu\n", label.c_str(),
                  static_cast<unsigned long long>(m.accesses),
                  static_cast<unsigned long long>(m.hits), m.hit_rate,
                  static_cast<unsigned long long>(m.prefetch_used),
                  static_cast<unsigned long long>(m.demotions));
    out += buf;
  }
  return out;
}

std::string hit_rate_timeline_csv(
    const std::vector<AccessRecord>& trace, std::int64_t window_len_us,
    const std::vector<std::pair<std::string, std::vector<bool>>>& runs) {
  if (trace.empty()) throw EmptyTrace();
  if (window_len_us <= 0) throw ConfigError("window_len_us must be positive");
  const std::int64_t origin = trace.front().timestamp_us;

  std::string out = "window,policy,hit_rate\n";
  char buf[96];
  for (const auto& [policy, hits] : runs) {
    if (hits.size() != trace.size())
      throw LengthMismatch(hits.size(), trace.size());
    std::map<std::int64_t, std::pair<std::uint64_t, std::uint64_t>> per_window;  // hits, total
    for (std::size_t i = 0; i < trace.size(); ++i) {
      auto& cell = per_window[(trace[i].timestamp_us - origin) / window_len_us];
      cell.first += hits[i] ? 1 : 0;
      cell.second += 1;
    }
    for (const auto& [window, cell] : per_window) {
      std::snprintf(buf, sizeof buf, "%lld,%s,%.6f\n", static_cast<long long>(window),
                    policy.c_str(), static_cast<double>(cell.first) / cell.second);
      out += buf;
    }
  }
  return out;
}

std::vector<AccessRecord> clip_to_windows(const std::vector<AccessRecord>& trace,
                                          std::int64_t window_len_us, int num_windows) {
  if (trace.empty()) return {};
  const std::int64_t origin = trace.front().timestamp_us;
  std::vector<AccessRecord> out;
  out.reserve(trace.size());
  for (const auto& rec : trace)
    if ((rec.timestamp_us - origin) / window_len_us < num_windows) out.push_back(rec);
  return out;
}

}  // namespace cachecast
