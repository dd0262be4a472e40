#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cachecast {

enum class Op : std::uint8_t { Read, Write };

/// One storage I/O event. Timestamps are microseconds since the first record
/// of the trace; block_id is floor(raw_offset / block_size).
struct AccessRecord {
  std::int64_t timestamp_us = 0;
  std::string host;
  Op op = Op::Read;
  std::uint64_t block_id = 0;
  std::uint64_t size_bytes = 0;
  std::int64_t latency_us = 0;

  bool operator==(const AccessRecord&) const = default;
};

/// Synthetic workload: Zipf-skewed block popularity whose rank->block map
/// rotates by phase_blocks positions every period_windows windows, so the
/// stream carries both a frequency signature and a planted periodicity.
struct SynthConfig {
  std::uint64_t num_blocks = 64;
  std::uint64_t num_events = 50000;
  double zipf_alpha = 1.0;
  int period_windows = 20;
  std::uint64_t phase_blocks = 16;
  std::uint64_t seed = 7;
  std::uint64_t block_size = 4096;
  int num_windows = 200;
  std::int64_t window_len_us = 1000;
};

struct TraceStats {
  std::size_t num_records = 0;
  std::size_t num_blocks = 0;
  std::int64_t time_span_us = 0;
  double read_fraction = 0.0;
};

/// Parses the 7-column MSR block-trace format
/// (Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime).
/// Raw timestamps are FILETIME ticks; records are stably sorted by time and
/// rebased so the first record is at 0 us. Throws MalformedLine / EmptyTrace.
std::vector<AccessRecord> parse_msr_csv(std::istream& in, std::uint64_t block_size);

/// Parses the canonical format written by write_canonical_csv (header line
/// `timestamp_us,host,op,block_id,size_bytes,latency_us`).
std::vector<AccessRecord> parse_canonical_csv(std::istream& in);

void write_canonical_csv(std::ostream& out, const std::vector<AccessRecord>& records);

/// Reads a trace file, inflating gzip input (detected by magic bytes) and
/// auto-detecting canonical vs MSR layout by the header line.
std::vector<AccessRecord> load_trace(const std::string& path, std::uint64_t block_size);

/// Deterministic function of cfg: same config, same record list.
std::vector<AccessRecord> generate_synthetic(const SynthConfig& cfg);

TraceStats trace_stats(const std::vector<AccessRecord>& records);

}  // namespace cachecast
