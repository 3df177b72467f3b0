#pragma once

// Associative-array selection over the exploded tables: the column-range
// select T(:, "latlon|start:latlon|end") and the steps that turn a selection
// back into records.

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lumino/geokey.hpp"
#include "lumino/ingest.hpp"
#include "lumino/store.hpp"

namespace lumino::assoc {

struct Triple {
  std::string row;
  std::string col;
  std::string val;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Sparse (row, col) -> val mapping kept sorted by (row, col).
class AssocArray {
 public:
  AssocArray() = default;
  /// Sorts `triples`; on duplicate (row, col) the later triple wins.
  explicit AssocArray(std::vector<Triple> triples);

  /// Inserts or replaces the value at (row, col).
  void insert(std::string row, std::string col, std::string val);

  std::size_t size() const noexcept { return triples_.size(); }
  bool empty() const noexcept { return triples_.empty(); }
  auto begin() const noexcept { return triples_.begin(); }
  auto end() const noexcept { return triples_.end(); }
  const std::vector<Triple>& triples() const noexcept { return triples_; }

  friend bool operator==(const AssocArray&, const AssocArray&) = default;

 private:
  std::vector<Triple> triples_;
};

/// All (tweet id, latlon column, val) triples whose latlon column lies in
/// the inclusive key range. Evaluated as a row scan of the transpose table.
AssocArray select_cols(const store::Snapshot& snap, const geokey::GeoKeyRange& range);

/// Decodes coordinates from each latlon column and joins text, user and
/// timestamp from TedgeTxt. Sorted by id. Throws Errc::Integrity when a
/// selected id has no text entry.
std::vector<ingest::TweetRecord> extract_tweets(const store::Snapshot& snap, const AssocArray& a,
                                                const geokey::GeoKeyFormat& fmt);

/// Splits a box into at most four boxes that each lie in one key sign
/// quadrant. Parts that cannot contain a rounded coordinate are omitted.
std::vector<geokey::BBox> split_quadrants(const geokey::BBox& bbox,
                                          const geokey::GeoKeyFormat& fmt);

struct Query {
  geokey::BBox bbox;
  std::optional<std::int64_t> t0;  // inclusive
  std::optional<std::int64_t> t1;  // inclusive
  std::optional<std::string> keyword;
};

/// Records whose stored coordinates fall in the box, optionally restricted
/// to a time window and a keyword. Sorted by (timestamp, id).
std::vector<ingest::TweetRecord> query_bbox(const store::Snapshot& snap, const Query& query,
                                            const geokey::GeoKeyFormat& fmt);

std::vector<ingest::TweetRecord> query_bbox(const store::TableSet& tables, const Query& query);

}  // namespace lumino::assoc
