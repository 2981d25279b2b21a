#pragma once

// Offline semantic-ID tokenization: residual-quantization k-means over item
// embeddings, the resulting fixed per-level codebooks, and the deterministic
// SID <-> item index used to realize semantic actions.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hsrl/numerics/rng.hpp"

namespace hsrl::tokenizer {

using ItemId = std::uint64_t;
using Token = std::uint32_t;

struct ItemEmbedding {
  ItemId item_id = 0;
  std::vector<double> vector;
};

struct SemanticId {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  Token operator[](std::size_t level) const { return tokens[level]; }
  auto operator<=>(const SemanticId&) const = default;
  bool operator==(const SemanticId&) const = default;
};

std::string to_string(const SemanticId& sid);

// Row-major dense matrix of doubles.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  bool operator==(const RowMatrix&) const = default;
};

class Codebook {
 public:
  Codebook() = default;
  // Validates dimensions, distinctness and canonical row order.
  Codebook(std::size_t dim, std::vector<RowMatrix> centroids);

  std::size_t levels() const { return centroids_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t vocab_size(std::size_t level) const;
  std::vector<std::size_t> vocab_sizes() const;
  const RowMatrix& centroids(std::size_t level) const;

  bool operator==(const Codebook&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<RowMatrix> centroids_;
};

// Deterministic bidirectional map between catalog items and SIDs. Several
// items may share one SID; decoding returns them in ascending id order.
class SidIndex {
 public:
  SidIndex() = default;
  explicit SidIndex(std::vector<std::pair<ItemId, SemanticId>> assignments);

  std::size_t size() const { return items_.size(); }
  bool contains(ItemId item) const;
  // Position of an item in items(); throws LookupError if absent.
  std::size_t position(ItemId item) const;
  const SemanticId& encode(ItemId item) const;
  std::vector<ItemId> decode(const SemanticId& sid) const;

  // Catalog in ascending id order, with SIDs aligned to it.
  const std::vector<ItemId>& items() const { return items_; }
  const std::vector<SemanticId>& sids() const { return sids_; }
  const std::map<SemanticId, std::vector<ItemId>>& buckets() const {
    return buckets_;
  }

  bool operator==(const SidIndex& other) const {
    return items_ == other.items_ && sids_ == other.sids_;
  }

 private:
  std::vector<ItemId> items_;
  std::vector<SemanticId> sids_;
  std::map<SemanticId, std::vector<ItemId>> buckets_;
};

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // relative inertia change
};

struct KMeansResult {
  RowMatrix centroids;  // canonical order
  std::vector<Token> assignment;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations; centroids are returned in
// lexicographic order and points are assigned to the nearest one (lowest
// index on ties).
KMeansResult kmeans(const RowMatrix& points, std::size_t k, Rng& rng,
                    const KMeansOptions& options = {});

std::size_t count_distinct_rows(const RowMatrix& points);

// Index of the nearest row, ties to the lowest index.
Token nearest_row(const RowMatrix& centroids, std::span<const double> x);

struct FitOptions {
  std::vector<std::size_t> vocab_sizes;  // T_1..T_L
  std::uint64_t seed = 0;
  KMeansOptions kmeans;
};

struct FitResult {
  Codebook codebook;
  SidIndex index;
  // Mean squared residual norm after each level.
  std::vector<double> level_errors;
};

FitResult fit_codebook(std::span<const ItemEmbedding> embeddings,
                       const FitOptions& options);

SemanticId assign_sid(const Codebook& codebook, std::span<const double> x);

std::vector<ItemId> decode(const SidIndex& index, const SemanticId& sid);

struct CollisionReport {
  std::size_t catalog_size = 0;
  std::size_t distinct_sids = 0;
  std::size_t colliding_sids = 0;  // SIDs carried by more than one item
  std::size_t max_bucket = 0;
  std::vector<double> level_entropy;  // natural log
};

CollisionReport collision_report(const SidIndex& index);

void save_codebook(const std::filesystem::path& path, const Codebook& codebook,
                   const SidIndex& index);

struct LoadedCodebook {
  Codebook codebook;
  SidIndex index;
};

LoadedCodebook load_codebook(const std::filesystem::path& path);

std::string encode_codebook(const Codebook& codebook, const SidIndex& index);
LoadedCodebook decode_codebook(std::string bytes);

std::vector<ItemEmbedding> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path,
                      std::span<const ItemEmbedding> embeddings);

}  // namespace hsrl::tokenizer
