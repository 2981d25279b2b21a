#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hsrl/tokenizer/codebook.hpp"

namespace hsrl::env {

using tokenizer::ItemId;

// (user, prior positive items, shown slate, click labels).
struct LogRecord {
  std::uint64_t user_id = 0;
  std::vector<ItemId> history;
  std::vector<ItemId> slate;
  std::vector<std::uint8_t> labels;

  bool operator==(const LogRecord&) const = default;
};

inline constexpr std::size_t kRecordHistoryLimit = 10;

// One record per line: user<TAB>h1,h2,...<TAB>i1,...,ik<TAB>y1,...,yk, with
// "-" standing for an empty history.
std::vector<LogRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path,
                   const std::vector<LogRecord>& records);

struct IngestResult {
  std::vector<LogRecord> records;
  std::vector<ItemId> catalog;  // ascending
};

// Ratings file with lines user<TAB>item<TAB>rating<TAB>timestamp. Ratings
// above 3 are positive. Each user's interactions are ordered by time (ties by
// file order) and cut into consecutive slates of `slate_size`; a trailing
// partial slate is dropped. A record's history holds the positive items seen
// strictly before its slate, most recent last, capped at 10.
IngestResult ingest_ml1m_style(const std::filesystem::path& path,
                               std::size_t slate_size = 10);

// Per-user chronological split: the first `fraction` of each user's records
// go to the first part.
std::pair<std::vector<LogRecord>, std::vector<LogRecord>> split_records(
    const std::vector<LogRecord>& records, double fraction);

std::vector<ItemId> catalog_of(const std::vector<LogRecord>& records);

}  // namespace hsrl::env
