#include "cachecast/trace.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>
#include <vector>

#include "cachecast/errors.hpp"
#include "cachecast/rng.hpp"

namespace cachecast {

namespace {

constexpr std::string_view kCanonicalHeader =
    "timestamp_us,host,op,block_id,size_bytes,latency_us";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, const char* what) {
  field = trim(field);
  T value{};
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || field.empty())
    throw MalformedLine(line_no, std::string("bad ") + what + " '" + std::string(field) + "'");
  return value;
}

Op parse_op(std::string_view field, std::size_t line_no) {
  std::string lowered;
  for (char c : trim(field)) lowered.push_back(static_cast<char>(std::tolower(c)));
  if (lowered == "read") return Op::Read;
  if (lowered == "write") return Op::Write;
  throw MalformedLine(line_no, "unknown op '" + lowered + "'");
}

struct RawRecord {
  std::uint64_t raw_timestamp;
  AccessRecord record;
};

std::vector<AccessRecord> finish(std::vector<RawRecord>& raw, bool rebase_filetime) {
  if (raw.empty()) throw EmptyTrace();
  std::stable_sort(raw.begin(), raw.end(), [](const RawRecord& a, const RawRecord& b) {
    return a.raw_timestamp < b.raw_timestamp;
  });
  const std::uint64_t origin = raw.front().raw_timestamp;
  std::vector<AccessRecord> out;
  out.reserve(raw.size());
  for (auto& r : raw) {
    if (rebase_filetime)  // FILETIME ticks are 100 ns
      r.record.timestamp_us = static_cast<std::int64_t>((r.raw_timestamp - origin) / 10);
    out.push_back(std::move(r.record));
  }
  return out;
}

}  // namespace

std::vector<AccessRecord> parse_msr_csv(std::istream& in, std::uint64_t block_size) {
  if (block_size == 0) throw ConfigError("block_size must be positive");
  std::vector<RawRecord> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = trim(line);
    if (body.empty()) continue;
    auto fields = split_fields(body);
    if (fields.size() != 7)
      throw MalformedLine(line_no, "expected 7 fields, got " + std::to_string(fields.size()));
    RawRecord r;
    r.raw_timestamp = parse_number<std::uint64_t>(fields[0], line_no, "timestamp");
    r.record.host = std::string(trim(fields[1]));
    parse_number<std::uint64_t>(fields[2], line_no, "disk number");
    r.record.op = parse_op(fields[3], line_no);
    const auto offset = parse_number<std::uint64_t>(fields[4], line_no, "offset");
    r.record.block_id = offset / block_size;
    r.record.size_bytes = parse_number<std::uint64_t>(fields[5], line_no, "size");
    if (r.record.size_bytes == 0) throw MalformedLine(line_no, "size must be positive");
    r.record.latency_us =
        static_cast<std::int64_t>(parse_number<std::uint64_t>(fields[6], line_no, "response time"));
    raw.push_back(std::move(r));
  }
  return finish(raw, /*rebase_filetime=*/true);
}

std::vector<AccessRecord> parse_canonical_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || trim(line) != kCanonicalHeader)
    throw MalformedLine(1, "missing canonical header");
  ++line_no;
  std::vector<RawRecord> raw;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = trim(line);
    if (body.empty()) continue;
    auto fields = split_fields(body);
    if (fields.size() != 6)
      throw MalformedLine(line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    RawRecord r;
    const auto ts = parse_number<std::int64_t>(fields[0], line_no, "timestamp");
    if (ts < 0) throw MalformedLine(line_no, "negative timestamp");
    r.raw_timestamp = static_cast<std::uint64_t>(ts);
    r.record.timestamp_us = ts;
    r.record.host = std::string(trim(fields[1]));
    r.record.op = parse_op(fields[2], line_no);
    r.record.block_id = parse_number<std::uint64_t>(fields[3], line_no, "block id");
    r.record.size_bytes = parse_number<std::uint64_t>(fields[4], line_no, "size");
    if (r.record.size_bytes == 0) throw MalformedLine(line_no, "size must be positive");
    r.record.latency_us = parse_number<std::int64_t>(fields[5], line_no, "latency");
    if (r.record.latency_us < 0) throw MalformedLine(line_no, "negative latency");
    raw.push_back(std::move(r));
  }
  return finish(raw, /*rebase_filetime=*/false);
}

void write_canonical_csv(std::ostream& out, const std::vector<AccessRecord>& records) {
  out << kCanonicalHeader << '\n';
  for (const auto& r : records) {
    out << r.timestamp_us << ',' << r.host << ',' << (r.op == Op::Read ? "Read" : "Write")
        << ',' << r.block_id << ',' << r.size_bytes << ',' << r.latency_us << '\n';
  }
}

std::vector<AccessRecord> load_trace(const std::string& path, std::uint64_t block_size) {
  // gzopen reads both gzip (magic 1f 8b) and plain files transparently.
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw IoError("cannot open trace file: " + path);
  std::string content;
  char buf[1 << 16];
  int n;
  while ((n = gzread(file, buf, sizeof buf)) > 0) content.append(buf, static_cast<std::size_t>(n));
  const bool read_error = n < 0;
  gzclose(file);
  if (read_error) throw IoError("failed to read trace file: " + path);

  std::istringstream in(content);
  const std::size_t eol = content.find('\n');
  const std::string_view first_line =
      trim(std::string_view(content).substr(0, eol == std::string::npos ? content.size() : eol));
  if (first_line == kCanonicalHeader) return parse_canonical_csv(in);
  return parse_msr_csv(in, block_size);
}

std::vector<AccessRecord> generate_synthetic(const SynthConfig& cfg) {
  if (cfg.num_blocks == 0) throw ConfigError("num_blocks must be positive");
  if (cfg.num_events == 0) throw ConfigError("num_events must be positive");
  if (cfg.zipf_alpha < 0) throw ConfigError("zipf_alpha must be non-negative");
  if (cfg.period_windows <= 0) throw ConfigError("period_windows must be positive");
  if (cfg.phase_blocks > cfg.num_blocks) throw ConfigError("phase_blocks must not exceed num_blocks");
  if (cfg.block_size == 0) throw ConfigError("block_size must be positive");
  if (cfg.num_windows <= 0) throw ConfigError("num_windows must be positive");
  if (cfg.window_len_us <= 0) throw ConfigError("window_len_us must be positive");

  // Inverse-CDF table over ranks; rank 0 is the hottest.
  std::vector<double> cumulative(cfg.num_blocks);
  double acc = 0.0;
  for (std::uint64_t r = 0; r < cfg.num_blocks; ++r) {
    acc += std::pow(static_cast<double>(r + 1), -cfg.zipf_alpha);
    cumulative[r] = acc;
  }
  const double total = cumulative.back();

  SplitMix64 rng(cfg.seed);
  const std::int64_t span = cfg.window_len_us * cfg.num_windows;
  std::vector<AccessRecord> out;
  out.reserve(cfg.num_events);
  for (std::uint64_t i = 0; i < cfg.num_events; ++i) {
    AccessRecord rec;
    rec.timestamp_us =
        (span * static_cast<std::int64_t>(i) + span / 2) / static_cast<std::int64_t>(cfg.num_events);
    const std::int64_t window = rec.timestamp_us / cfg.window_len_us;
    const std::uint64_t period = static_cast<std::uint64_t>(window / cfg.period_windows);

    const double u = rng.next_unit() * total;
    const std::uint64_t rank = static_cast<std::uint64_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    rec.block_id = (std::min(rank, cfg.num_blocks - 1) + period * cfg.phase_blocks) % cfg.num_blocks;
    rec.host = "synth";
    rec.op = rng.next_unit() < 0.7 ? Op::Read : Op::Write;
    rec.size_bytes = cfg.block_size * (1 + rec.block_id % 4);
    rec.latency_us = static_cast<std::int64_t>(rec.size_bytes / 256 + rng.next_below(16));
    out.push_back(std::move(rec));
  }
  return out;
}

TraceStats trace_stats(const std::vector<AccessRecord>& records) {
  if (records.empty()) throw EmptyTrace();
  TraceStats stats;
  stats.num_records = records.size();
  std::set<std::uint64_t> blocks;
  std::int64_t lo = records.front().timestamp_us, hi = records.front().timestamp_us;
  std::size_t reads = 0;
  for (const auto& r : records) {
    blocks.insert(r.block_id);
    lo = std::min(lo, r.timestamp_us);
    hi = std::max(hi, r.timestamp_us);
    if (r.op == Op::Read) ++reads;
  }
  stats.num_blocks = blocks.size();
  stats.time_span_us = hi - lo;
  stats.read_fraction = static_cast<double>(reads) / static_cast<double>(records.size());
  return stats;
}

}  // namespace cachecast
