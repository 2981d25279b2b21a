#include "hsrl/tokenizer/codebook.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "hsrl/numerics/binary_io.hpp"
#include "hsrl/numerics/errors.hpp"

namespace hsrl::tokenizer {

namespace {

constexpr std::string_view kMagic("HSRLCB1\0", 8);

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    total += diff * diff;
  }
  return total;
}

bool row_less(std::span<const double> a, std::span<const double> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

bool row_equal(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

RowMatrix sort_rows(const RowMatrix& m) {
  std::vector<std::size_t> order(m.rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return row_less(m.row(a), m.row(b));
  });
  RowMatrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::copy(m.row(order[i]).begin(), m.row(order[i]).end(),
              out.row(i).begin());
  }
  return out;
}

// Returns true when rows are strictly increasing (canonical and distinct).
bool strictly_sorted(const RowMatrix& m) {
  for (std::size_t i = 1; i < m.rows; ++i) {
    if (!row_less(m.row(i - 1), m.row(i))) return false;
  }
  return true;
}

RowMatrix init_plus_plus(const RowMatrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows;
  RowMatrix centers(k, points.cols);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.uniform_int(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(),
              centers.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], squared_distance(points.row(i), centers.row(c)));
      total += best[i];
    }
    if (total <= 0.0) {
      throw ContractError("k-means++: fewer distinct points than clusters");
    }
    const double target = rng.uniform() * total;
    double running = 0.0;
    pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] <= 0.0) continue;
      running += best[i];
      if (running > target) {
        pick = i;
        break;
      }
    }
    if (pick == n) {
      // round-off left target above the running total; take the last
      // candidate with positive weight
      for (std::size_t i = n; i-- > 0;) {
        if (best[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
  }
  return centers;
}

double assign_all(const RowMatrix& points, const RowMatrix& centers,
                  std::vector<Token>& assignment, std::vector<double>& dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) {
    Token best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.rows; ++c) {
      const double d = squared_distance(points.row(i), centers.row(c));
      if (d < best_d) {
        best_d = d;
        best = static_cast<Token>(c);
      }
    }
    assignment[i] = best;
    dist[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

std::string to_string(const SemanticId& sid) {
  std::string out = "[";
  for (std::size_t i = 0; i < sid.tokens.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(sid.tokens[i]);
  }
  return out + "]";
}

// ---- Codebook -------------------------------------------------------------

Codebook::Codebook(std::size_t dim, std::vector<RowMatrix> centroids)
    : dim_(dim), centroids_(std::move(centroids)) {
  if (dim_ == 0) throw ContractError("codebook dimension must be positive");
  if (centroids_.empty()) throw ContractError("codebook needs at least one level");
  for (std::size_t l = 0; l < centroids_.size(); ++l) {
    const RowMatrix& m = centroids_[l];
    if (m.cols != dim_ || m.rows == 0 || m.data.size() != m.rows * m.cols) {
      throw DimensionError("codebook level " + std::to_string(l + 1) +
                           " has malformed centroid table");
    }
    if (!strictly_sorted(m)) {
      throw ContractError("codebook level " + std::to_string(l + 1) +
                          " centroids are not distinct and canonically sorted");
    }
  }
}

std::size_t Codebook::vocab_size(std::size_t level) const {
  return centroids(level).rows;
}

std::vector<std::size_t> Codebook::vocab_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& m : centroids_) out.push_back(m.rows);
  return out;
}

const RowMatrix& Codebook::centroids(std::size_t level) const {
  if (level >= centroids_.size()) {
    throw ContractError("codebook level " + std::to_string(level) +
                        " out of range");
  }
  return centroids_[level];
}

// ---- SidIndex -------------------------------------------------------------

SidIndex::SidIndex(std::vector<std::pair<ItemId, SemanticId>> assignments) {
  std::sort(assignments.begin(), assignments.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  items_.reserve(assignments.size());
  sids_.reserve(assignments.size());
  for (auto& [item, sid] : assignments) {
    if (!items_.empty() && items_.back() == item) {
      throw DataError("duplicate item id " + std::to_string(item) +
                      " in SID index");
    }
    items_.push_back(item);
    buckets_[sid].push_back(item);
    sids_.push_back(std::move(sid));
  }
}

bool SidIndex::contains(ItemId item) const {
  return std::binary_search(items_.begin(), items_.end(), item);
}

std::size_t SidIndex::position(ItemId item) const {
  auto it = std::lower_bound(items_.begin(), items_.end(), item);
  if (it == items_.end() || *it != item) {
    throw LookupError("item " + std::to_string(item) + " has no SID");
  }
  return static_cast<std::size_t>(it - items_.begin());
}

const SemanticId& SidIndex::encode(ItemId item) const {
  return sids_[position(item)];
}

std::vector<ItemId> SidIndex::decode(const SemanticId& sid) const {
  auto it = buckets_.find(sid);
  if (it == buckets_.end()) return {};
  return it->second;
}

// ---- k-means --------------------------------------------------------------

std::size_t count_distinct_rows(const RowMatrix& points) {
  if (points.rows == 0) return 0;
  RowMatrix sorted = sort_rows(points);
  std::size_t distinct = 1;
  for (std::size_t i = 1; i < sorted.rows; ++i) {
    if (!row_equal(sorted.row(i - 1), sorted.row(i))) ++distinct;
  }
  return distinct;
}

Token nearest_row(const RowMatrix& centroids, std::span<const double> x) {
  Token best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d = squared_distance(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<Token>(c);
    }
  }
  return best;
}

KMeansResult kmeans(const RowMatrix& points, std::size_t k, Rng& rng,
                    const KMeansOptions& options) {
  if (k == 0) throw ContractError("k-means needs k >= 1");
  if (count_distinct_rows(points) < k) {
    throw ContractError("k-means: fewer distinct points than clusters");
  }
  const std::size_t n = points.rows, d = points.cols;
  RowMatrix centers = init_plus_plus(points, k, rng);
  std::vector<Token> assignment(n);
  std::vector<double> dist(n);
  double inertia = assign_all(points, centers, assignment, dist);
  std::size_t iter = 0;
  while (iter < options.max_iterations) {
    ++iter;
    RowMatrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(assignment[i]);
      auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
      ++counts[assignment[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      auto center = centers.row(c);
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) {
          center[j] = sums.row(c)[j] / static_cast<double>(counts[c]);
        }
        continue;
      }
      // Empty cluster: move it onto the point worst served by the current
      // solution.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      taken[far] = true;
      dist[far] = 0.0;
      std::copy(points.row(far).begin(), points.row(far).end(), center.begin());
    }
    const double next = assign_all(points, centers, assignment, dist);
    const double change = std::abs(inertia - next);
    inertia = next;
    if (inertia == 0.0 || change <= options.tolerance * std::max(inertia, 1e-300)) {
      break;
    }
  }

  KMeansResult result;
  result.centroids = sort_rows(centers);
  if (!strictly_sorted(result.centroids)) {
    // Two clusters collapsed onto one point; reseed the duplicate from the
    // farthest point so the vocabulary stays fully populated.
    RowMatrix& cs = result.centroids;
    for (std::size_t c = 1; c < k; ++c) {
      if (!row_equal(cs.row(c - 1), cs.row(c))) continue;
      std::vector<Token> a(n);
      std::vector<double> dd(n);
      assign_all(points, cs, a, dd);
      std::size_t far = static_cast<std::size_t>(
          std::max_element(dd.begin(), dd.end()) - dd.begin());
      std::copy(points.row(far).begin(), points.row(far).end(), cs.row(c).begin());
    }
    result.centroids = sort_rows(cs);
  }
  result.assignment.resize(n);
  std::vector<double> final_dist(n);
  result.inertia = assign_all(points, result.centroids, result.assignment,
                              final_dist);
  result.iterations = iter;
  return result;
}

// ---- RQ-k-means -----------------------------------------------------------

FitResult fit_codebook(std::span<const ItemEmbedding> embeddings,
                       const FitOptions& options) {
  if (options.vocab_sizes.empty()) {
    throw ContractError("fit_codebook: at least one level is required");
  }
  if (embeddings.empty()) throw DataError("fit_codebook: no item embeddings");
  const std::size_t d = embeddings.front().vector.size();
  if (d == 0) throw DimensionError("fit_codebook: embedding dimension is 0");

  // Canonical item order makes the fit independent of input order.
  std::vector<const ItemEmbedding*> items;
  for (const auto& e : embeddings) {
    if (e.vector.size() != d) {
      throw DimensionError("item " + std::to_string(e.item_id) +
                           " has dimension " + std::to_string(e.vector.size()) +
                           ", expected " + std::to_string(d));
    }
    for (double v : e.vector) {
      if (!std::isfinite(v)) {
        throw DataError("item " + std::to_string(e.item_id) +
                        " has a non-finite embedding");
      }
    }
    items.push_back(&e);
  }
  std::sort(items.begin(), items.end(), [](auto* a, auto* b) {
    return a->item_id < b->item_id;
  });
  for (std::size_t i = 1; i < items.size(); ++i) {
    if (items[i]->item_id == items[i - 1]->item_id) {
      throw DataError("duplicate item id " + std::to_string(items[i]->item_id));
    }
  }

  const std::size_t n = items.size();
  RowMatrix residual(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(items[i]->vector.begin(), items[i]->vector.end(),
              residual.row(i).begin());
  }

  std::vector<RowMatrix> tables;
  std::vector<std::vector<Token>> tokens(n);
  FitResult result;
  const Rng root(options.seed);
  for (std::size_t level = 0; level < options.vocab_sizes.size(); ++level) {
    const std::size_t t = options.vocab_sizes[level];
    if (t == 0) {
      throw VocabularyError("level " + std::to_string(level + 1) +
                                ": vocabulary size must be positive",
                            level + 1);
    }
    const std::size_t distinct = count_distinct_rows(residual);
    if (distinct < t) {
      throw VocabularyError(
          "vocabulary too large at level " + std::to_string(level + 1) +
              ": T=" + std::to_string(t) + " but only " +
              std::to_string(distinct) + " distinct residual points",
          level + 1);
    }
    Rng rng = root.derive(level);
    KMeansResult km = kmeans(residual, t, rng, options.kmeans);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Token z = km.assignment[i];
      tokens[i].push_back(z);
      auto r = residual.row(i);
      auto c = km.centroids.row(z);
      for (std::size_t j = 0; j < d; ++j) {
        r[j] -= c[j];
        err += r[j] * r[j];
      }
    }
    result.level_errors.push_back(err / static_cast<double>(n));
    tables.push_back(std::move(km.centroids));
  }

  result.codebook = Codebook(d, std::move(tables));
  std::vector<std::pair<ItemId, SemanticId>> assignments;
  assignments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    assignments.emplace_back(items[i]->item_id, SemanticId{std::move(tokens[i])});
  }
  result.index = SidIndex(std::move(assignments));
  return result;
}

SemanticId assign_sid(const Codebook& codebook, std::span<const double> x) {
  if (x.size() != codebook.dim()) {
    throw DimensionError("assign_sid: vector of dimension " +
                         std::to_string(x.size()) + ", codebook expects " +
                         std::to_string(codebook.dim()));
  }
  std::vector<double> residual(x.begin(), x.end());
  SemanticId sid;
  for (std::size_t level = 0; level < codebook.levels(); ++level) {
    const RowMatrix& c = codebook.centroids(level);
    const Token z = nearest_row(c, residual);
    sid.tokens.push_back(z);
    auto row = c.row(z);
    for (std::size_t j = 0; j < residual.size(); ++j) residual[j] -= row[j];
  }
  return sid;
}

std::vector<ItemId> decode(const SidIndex& index, const SemanticId& sid) {
  return index.decode(sid);
}

CollisionReport collision_report(const SidIndex& index) {
  CollisionReport report;
  report.catalog_size = index.size();
  report.distinct_sids = index.buckets().size();
  for (const auto& [sid, bucket] : index.buckets()) {
    if (bucket.size() > 1) ++report.colliding_sids;
    report.max_bucket = std::max(report.max_bucket, bucket.size());
  }
  if (index.size() == 0) return report;
  const std::size_t levels = index.sids().front().size();
  for (std::size_t level = 0; level < levels; ++level) {
    std::map<Token, std::size_t> freq;
    for (const auto& sid : index.sids()) ++freq[sid[level]];
    double h = 0.0;
    const double n = static_cast<double>(index.size());
    for (const auto& [token, count] : freq) {
      const double p = static_cast<double>(count) / n;
      h -= p * std::log(p);
    }
    report.level_entropy.push_back(h);
  }
  return report;
}

// ---- persistence ----------------------------------------------------------

std::string encode_codebook(const Codebook& codebook, const SidIndex& index) {
  BinaryWriter w;
  w.bytes(kMagic);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(codebook.levels()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(codebook.dim()));
  for (std::size_t t : codebook.vocab_sizes()) {
    if (t > 0xFFFF) throw FormatError("vocabulary size exceeds u16 token range");
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t));
  }
  for (std::size_t level = 0; level < codebook.levels(); ++level) {
    for (double v : codebook.centroids(level).data) w.f64(v);
  }
  w.uint<std::uint64_t>(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const SemanticId& sid = index.sids()[i];
    if (sid.size() != codebook.levels()) {
      throw ContractError("SID length does not match codebook levels");
    }
    w.uint<std::uint64_t>(index.items()[i]);
    for (Token t : sid.tokens) w.uint<std::uint16_t>(static_cast<std::uint16_t>(t));
  }
  return w.buffer();
}

LoadedCodebook decode_codebook(std::string bytes) {
  BinaryReader r(std::move(bytes));
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size(), "magic") != kMagic) {
    throw FormatError("not a codebook file (bad magic or version)");
  }
  const auto levels = r.uint<std::uint32_t>("level count");
  const auto dim = r.uint<std::uint32_t>("embedding dimension");
  if (levels == 0 || dim == 0) throw FormatError("codebook header has zero levels or dimension");
  std::vector<std::size_t> vocab;
  for (std::uint32_t l = 0; l < levels; ++l) {
    const auto t = r.uint<std::uint32_t>("vocabulary size of level " + std::to_string(l + 1));
    if (t == 0 || t > 0xFFFF) throw FormatError("invalid vocabulary size at level " + std::to_string(l + 1));
    vocab.push_back(t);
  }
  std::vector<RowMatrix> tables;
  for (std::uint32_t l = 0; l < levels; ++l) {
    const std::string what = "centroid block " + std::to_string(l + 1) + " of " +
                             std::to_string(levels);
    r.require(vocab[l] * dim * sizeof(double), what);
    RowMatrix m(vocab[l], dim);
    for (double& v : m.data) {
      v = r.f64(what);
      if (!std::isfinite(v)) throw FormatError(what + " holds a non-finite value");
    }
    if (!strictly_sorted(m)) {
      throw FormatError(what + " is not in canonical order");
    }
    tables.push_back(std::move(m));
  }
  const auto count = r.uint<std::uint64_t>("item count");
  const std::size_t record = sizeof(std::uint64_t) + levels * sizeof(std::uint16_t);
  if (count > r.remaining() / record) {
    throw FormatError("truncated file: missing item records");
  }
  std::vector<std::pair<ItemId, SemanticId>> assignments;
  assignments.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto item = r.uint<std::uint64_t>("item record");
    SemanticId sid;
    for (std::uint32_t l = 0; l < levels; ++l) {
      const auto token = r.uint<std::uint16_t>("item record");
      if (token >= vocab[l]) {
        throw FormatError("item " + std::to_string(item) + " has token " +
                          std::to_string(token) + " outside level " +
                          std::to_string(l + 1));
      }
      sid.tokens.push_back(token);
    }
    assignments.emplace_back(item, std::move(sid));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after item records");
  LoadedCodebook out;
  out.codebook = Codebook(dim, std::move(tables));
  try {
    out.index = SidIndex(std::move(assignments));
  } catch (const DataError& e) {
    throw FormatError(e.what());
  }
  return out;
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook,
                   const SidIndex& index) {
  write_file(path, encode_codebook(codebook, index));
}

LoadedCodebook load_codebook(const std::filesystem::path& path) {
  return decode_codebook(read_file(path));
}

std::vector<ItemEmbedding> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  std::vector<ItemEmbedding> out;
  std::set<ItemId> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.rfind("d=", 0) != 0) throw ParseError("expected header d=<int>", line_no);
      const char* b = line.data() + 2;
      const char* e = line.data() + line.size();
      auto [p, ec] = std::from_chars(b, e, dim);
      if (ec != std::errc() || p != e || dim == 0) {
        throw ParseError("invalid dimension header", line_no);
      }
      continue;
    }
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("missing tab separator", line_no);
    ItemEmbedding item;
    {
      auto [p, ec] = std::from_chars(line.data(), line.data() + tab, item.item_id);
      if (ec != std::errc() || p != line.data() + tab) {
        throw ParseError("invalid item id", line_no);
      }
    }
    std::size_t pos = tab + 1;
    while (pos <= line.size()) {
      const auto comma = std::min(line.find(',', pos), line.size());
      double v = 0.0;
      auto [p, ec] = std::from_chars(line.data() + pos, line.data() + comma, v);
      if (ec != std::errc() || p != line.data() + comma || !std::isfinite(v)) {
        throw ParseError("invalid embedding value", line_no);
      }
      item.vector.push_back(v);
      pos = comma + 1;
    }
    if (item.vector.size() != dim) {
      throw ParseError("expected " + std::to_string(dim) + " values, found " +
                           std::to_string(item.vector.size()),
                       line_no);
    }
    if (!seen.insert(item.item_id).second) {
      throw ParseError("duplicate item id " + std::to_string(item.item_id), line_no);
    }
    out.push_back(std::move(item));
  }
  if (line_no == 0) throw ParseError("empty embeddings file", 1);
  return out;
}

void write_embeddings(const std::filesystem::path& path,
                      std::span<const ItemEmbedding> embeddings) {
  if (embeddings.empty()) throw DataError("no embeddings to write");
  const std::size_t dim = embeddings.front().vector.size();
  std::string out = "d=" + std::to_string(dim) + "\n";
  char buf[64];
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) throw DimensionError("ragged embeddings");
    out += std::to_string(e.item_id);
    out += '\t';
    for (std::size_t j = 0; j < dim; ++j) {
      if (j) out += ',';
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, e.vector[j]);
      out.append(buf, p);
    }
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace hsrl::tokenizer
