#include "hsrl/env/records.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string_view>

#include "hsrl/numerics/binary_io.hpp"
#include "hsrl/numerics/errors.hpp"

namespace hsrl::env {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || p != field.data() + field.size() || field.empty()) {
    throw ParseError(std::string("invalid ") + what + " '" + std::string(field) + "'",
                     line);
  }
  return value;
}

std::vector<ItemId> parse_ids(std::string_view field, std::size_t line) {
  std::vector<ItemId> out;
  if (field == "-") return out;
  for (auto part : split(field, ',')) out.push_back(parse_number<ItemId>(part, line, "item id"));
  return out;
}

template <typename T>
void append_list(std::string& out, const std::vector<T>& values) {
  if (values.empty()) {
    out += '-';
    return;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
}

}  // namespace

std::vector<LogRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open records file " + path.string());
  std::vector<LogRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4) throw ParseError("expected 4 tab-separated fields", line_no);
    LogRecord r;
    r.user_id = parse_number<std::uint64_t>(fields[0], line_no, "user id");
    r.history = parse_ids(fields[1], line_no);
    r.slate = parse_ids(fields[2], line_no);
    if (r.slate.empty()) throw ParseError("empty slate", line_no);
    for (auto part : split(fields[3], ',')) {
      const auto y = parse_number<unsigned>(part, line_no, "label");
      if (y > 1) throw ParseError("label must be 0 or 1", line_no);
      r.labels.push_back(static_cast<std::uint8_t>(y));
    }
    if (r.labels.size() != r.slate.size()) {
      throw ParseError("slate and label list differ in length", line_no);
    }
    if (r.history.size() > kRecordHistoryLimit) {
      throw ParseError("history longer than 10 items", line_no);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_records(const std::filesystem::path& path,
                   const std::vector<LogRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += std::to_string(r.user_id);
    out += '\t';
    append_list(out, r.history);
    out += '\t';
    append_list(out, r.slate);
    out += '\t';
    std::vector<unsigned> labels(r.labels.begin(), r.labels.end());
    append_list(out, labels);
    out += '\n';
  }
  write_file(path, out);
}

IngestResult ingest_ml1m_style(const std::filesystem::path& path,
                               std::size_t slate_size) {
  if (slate_size == 0) throw ContractError("slate size must be positive");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file " + path.string());
  struct Rating {
    ItemId item;
    bool positive;
    std::int64_t timestamp;
    std::size_t order;
  };
  std::map<std::uint64_t, std::vector<Rating>> by_user;
  std::set<ItemId> catalog;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4) throw ParseError("expected 4 tab-separated fields", line_no);
    const auto user = parse_number<std::uint64_t>(fields[0], line_no, "user id");
    const auto item = parse_number<ItemId>(fields[1], line_no, "item id");
    const auto rating = parse_number<double>(fields[2], line_no, "rating");
    if (!std::isfinite(rating)) throw ParseError("invalid rating", line_no);
    const auto ts = parse_number<std::int64_t>(fields[3], line_no, "timestamp");
    by_user[user].push_back({item, rating > 3.0, ts, line_no});
    catalog.insert(item);
  }

  IngestResult result;
  result.catalog.assign(catalog.begin(), catalog.end());
  for (auto& [user, ratings] : by_user) {
    std::stable_sort(ratings.begin(), ratings.end(),
                     [](const Rating& a, const Rating& b) {
                       return a.timestamp < b.timestamp;
                     });
    std::vector<ItemId> positives;
    for (std::size_t start = 0; start + slate_size <= ratings.size();
         start += slate_size) {
      LogRecord r;
      r.user_id = user;
      const std::size_t keep = std::min(positives.size(), kRecordHistoryLimit);
      r.history.assign(positives.end() - static_cast<std::ptrdiff_t>(keep),
                       positives.end());
      for (std::size_t j = start; j < start + slate_size; ++j) {
        r.slate.push_back(ratings[j].item);
        r.labels.push_back(ratings[j].positive ? 1 : 0);
      }
      for (std::size_t j = start; j < start + slate_size; ++j) {
        if (ratings[j].positive) positives.push_back(ratings[j].item);
      }
      result.records.push_back(std::move(r));
    }
  }
  return result;
}

std::pair<std::vector<LogRecord>, std::vector<LogRecord>> split_records(
    const std::vector<LogRecord>& records, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ContractError("split fraction must lie in [0, 1]");
  }
  std::map<std::uint64_t, std::size_t> totals;
  for (const auto& r : records) ++totals[r.user_id];
  std::map<std::uint64_t, std::size_t> seen;
  std::pair<std::vector<LogRecord>, std::vector<LogRecord>> out;
  for (const auto& r : records) {
    const std::size_t cut = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(totals[r.user_id]) + 1e-9));
    if (seen[r.user_id]++ < cut) {
      out.first.push_back(r);
    } else {
      out.second.push_back(r);
    }
  }
  return out;
}

std::vector<ItemId> catalog_of(const std::vector<LogRecord>& records) {
  std::set<ItemId> items;
  for (const auto& r : records) {
    items.insert(r.history.begin(), r.history.end());
    items.insert(r.slate.begin(), r.slate.end());
  }
  return {items.begin(), items.end()};
}

}  // namespace hsrl::env
