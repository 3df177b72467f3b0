#pragma once

// Embedded ordered store holding the exploded four-table schema.
//
//   Tedge     row = tweet id,      col = "field|value", val = "1"
//   TedgeT    row = "field|value", col = tweet id,      val = "1"
//   TedgeDeg  row = "field|value", col = "degree",      val = decimal count
//   TedgeTxt  row = tweet id,      col = "text" | "meta|ts" | "meta|user"
//
// Storage is a write-ahead log plus immutable sorted segment files. Reads
// merge the in-memory table with every live segment, newest first. Writers
// are serialized; readers work on snapshots that later writes never touch.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lumino/geokey.hpp"
#include "lumino/ingest.hpp"

namespace lumino::store {

enum class Table : std::uint8_t { Edge = 0, EdgeT = 1, EdgeDeg = 2, EdgeTxt = 3 };
inline constexpr Table kAllTables[] = {Table::Edge, Table::EdgeT, Table::EdgeDeg, Table::EdgeTxt};

std::string_view table_name(Table table) noexcept;

struct Cell {
  std::string row;
  std::string col;
  std::string val;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline constexpr std::string_view kDegreeCol = "degree";
inline constexpr std::string_view kTextCol = "text";
inline constexpr std::string_view kMetaTsCol = "meta|ts";
inline constexpr std::string_view kMetaUserCol = "meta|user";

/// "YYYY-MM-DDTHH:MMZ" for the minute containing `epoch_seconds`.
std::string iso_minute(std::int64_t epoch_seconds);

/// The Tedge column set of a record: time, user, latlon and one word column
/// per distinct token.
std::set<std::string> record_columns(const ingest::TweetRecord& rec,
                                     const geokey::GeoKeyFormat& fmt);

namespace detail {

struct Key {
  Table table{};
  std::string row;
  std::string col;

  friend auto operator<=>(const Key&, const Key&) = default;
};

// nullopt marks a deletion until compaction drops it.
using Value = std::optional<std::string>;
using MemTable = std::map<Key, Value>;

struct Entry {
  Key key;
  Value value;
};

struct Segment {
  std::uint64_t id = 0;
  std::vector<Entry> entries;
};

struct Sources {
  std::shared_ptr<const MemTable> mem;
  std::vector<std::shared_ptr<const Segment>> segments;  // newest first
};

class Cursor {
 public:
  Cursor(MemTable::const_iterator first, MemTable::const_iterator last);
  Cursor(const Entry* first, const Entry* last);

  bool done() const;
  const Key& key() const;
  const Value& value() const;
  void advance();

 private:
  using MemRange = std::pair<MemTable::const_iterator, MemTable::const_iterator>;
  using SegRange = std::pair<const Entry*, const Entry*>;
  std::variant<MemRange, SegRange> range_;
};

}  // namespace detail

/// Lazy merged iterator over the rows [start, end] of one table.
class Scanner {
 public:
  Scanner(detail::Sources sources, Table table, std::string_view start, std::string_view end);

  /// Keys in [lo, hi).
  Scanner(detail::Sources sources, const detail::Key& lo, const detail::Key& hi);

  /// Writes the next live cell into `out`; false when exhausted.
  bool next(Cell& out);

 private:
  detail::Sources sources_;
  std::vector<detail::Cursor> cursors_;
};

/// Immutable view of the store at one point in time.
class Snapshot {
 public:
  Snapshot() = default;

  Scanner scanner(Table table, std::string_view start, std::string_view end) const;
  /// Cells with start <= row <= end, ascending by (row, col).
  std::vector<Cell> scan(Table table, std::string_view start, std::string_view end) const;
  std::vector<Cell> row(Table table, std::string_view row) const;
  std::vector<Cell> scan_all(Table table) const;
  std::optional<std::string> get(Table table, std::string_view row, std::string_view col) const;

  std::uint64_t version() const noexcept { return version_; }

 private:
  friend class TableSet;
  Snapshot(detail::Sources sources, std::uint64_t version)
      : sources_(std::move(sources)), version_(version) {}

  detail::Sources sources_;
  std::uint64_t version_ = 0;
};

struct StoreOptions {
  std::size_t memtable_limit = 1 << 16;  // cells held in memory before a flush
  std::size_t max_segments = 8;          // a flush beyond this compacts
  bool sync_writes = false;              // fsync the log after every batch
};

struct StoreStats {
  std::uint64_t records = 0;
  std::uint64_t cells[4] = {0, 0, 0, 0};  // indexed by Table
  std::uint64_t segments = 0;
};

/// Magic header of segment files.
inline constexpr std::string_view kSegmentMagic = "LMG1";

class TableSet {
 public:
  /// Opens or creates the store in `dir`. The key format is table metadata:
  /// reopening with a different format throws Errc::FormatMismatch.
  explicit TableSet(std::filesystem::path dir, const geokey::GeoKeyFormat& fmt = {},
                    StoreOptions options = {});
  ~TableSet();

  TableSet(const TableSet&) = delete;
  TableSet& operator=(const TableSet&) = delete;

  const geokey::GeoKeyFormat& format() const noexcept { return fmt_; }
  const std::filesystem::path& directory() const noexcept { return dir_; }

  /// Indexes one record. Re-putting an id replaces its previous cells.
  void put_record(const ingest::TweetRecord& rec);
  /// Loads a TSV archive; returns the number of records stored.
  std::size_t bulk_load_tsv(std::istream& in);

  std::vector<Cell> scan_range(Table table, std::string_view start, std::string_view end) const;
  std::optional<std::string> get_text(std::string_view id) const;

  /// Recomputes TedgeDeg from Tedge.
  void rebuild_degrees();

  /// Raw single-cell write that bypasses the schema bookkeeping. Intended for
  /// repair tools; it can break the table invariants.
  void write_cell(Table table, std::string_view row, std::string_view col, std::string_view val);

  Snapshot snapshot() const;
  StoreStats stats() const;

  /// Moves the in-memory table into a new segment file.
  void flush();
  /// Merges all segments into one and drops deletion markers.
  void compact();

 private:
  using Batch = std::map<detail::Key, detail::Value>;

  Snapshot snapshot_locked() const;
  void apply_locked(const Batch& batch);
  void flush_locked();
  void compact_locked();
  void write_manifest_locked() const;
  void load_locked();
  void replay_log_locked();
  void reset_log_locked();

  std::filesystem::path dir_;
  geokey::GeoKeyFormat fmt_;
  StoreOptions options_;

  mutable std::mutex mutex_;
  std::shared_ptr<detail::MemTable> mem_;
  std::vector<std::shared_ptr<const detail::Segment>> segments_;  // newest first
  std::uint64_t next_segment_id_ = 1;
  std::uint64_t version_ = 0;

  struct FileCloser {
    void operator()(std::FILE* f) const noexcept;
  };
  std::unique_ptr<std::FILE, FileCloser> log_;
};

}  // namespace lumino::store
