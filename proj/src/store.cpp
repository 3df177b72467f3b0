#include "lumino/store.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <boost/crc.hpp>

#include "lumino/error.hpp"
#include "lumino/tokenize.hpp"

namespace lumino::store {

using detail::Entry;
using detail::Key;
using detail::MemTable;
using detail::Segment;
using detail::Value;

namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::string_view kLogMagic = "LMGW";
constexpr std::string_view kManifestHeader = "LMG1-manifest";
constexpr const char* kLogName = "wal.log";
constexpr const char* kManifestName = "MANIFEST";

namespace fs = std::filesystem;

// Little-endian binary encoding shared by the log and the segments.

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_bytes(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

void put_entry(std::string& out, const Key& key, const Value& value) {
  out.push_back(static_cast<char>(key.table));
  out.push_back(value ? 0 : 1);
  put_bytes(out, key.row);
  put_bytes(out, key.col);
  put_bytes(out, value ? std::string_view(*value) : std::string_view());
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  bool u32(std::uint32_t& v) {
    if (data_.size() - pos_ < 4) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return true;
  }

  bool u64(std::uint64_t& v) {
    if (data_.size() - pos_ < 8) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return true;
  }

  bool bytes(std::string& s) {
    std::uint32_t n = 0;
    if (!u32(n) || data_.size() - pos_ < n) return false;
    s.assign(data_.substr(pos_, n));
    pos_ += n;
    return true;
  }

  bool entry(Key& key, Value& value) {
    if (data_.size() - pos_ < 2) return false;
    const auto table = static_cast<unsigned char>(data_[pos_]);
    const auto tomb = static_cast<unsigned char>(data_[pos_ + 1]);
    if (table > 3 || tomb > 1) return false;
    pos_ += 2;
    key.table = static_cast<Table>(table);
    std::string val;
    if (!bytes(key.row) || !bytes(key.col) || !bytes(val)) return false;
    if (tomb) {
      value.reset();
    } else {
      value = std::move(val);
    }
    return true;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::string_view data) {
  boost::crc_32_type crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view data, bool sync) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw Error(Errc::Io, "cannot create " + tmp.string());
    const bool ok = std::fwrite(data.data(), 1, data.size(), f) == data.size() &&
                    std::fflush(f) == 0 && (!sync || ::fsync(::fileno(f)) == 0);
    std::fclose(f);
    if (!ok) throw Error(Errc::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::Io, "rename " + tmp.string() + ": " + ec.message());
}

std::string segment_name(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seg-%08llu.lmg", static_cast<unsigned long long>(id));
  return buf;
}

std::string encode_segment(const Segment& seg) {
  std::string body;
  put_u64(body, seg.entries.size());
  for (const auto& e : seg.entries) put_entry(body, e.key, e.value);
  std::string out(kSegmentMagic);
  put_u32(out, kFormatVersion);
  out += body;
  put_u32(out, crc32(body));
  return out;
}

std::shared_ptr<const Segment> load_segment(const fs::path& path, std::uint64_t id) {
  const std::string data = read_file(path);
  const auto corrupt = [&](const char* why) {
    return Error(Errc::CorruptStore, path.string() + ": " + why);
  };
  if (data.size() < kSegmentMagic.size() + 8 ||
      std::string_view(data).substr(0, kSegmentMagic.size()) != kSegmentMagic) {
    throw corrupt("bad magic");
  }
  Reader header(std::string_view(data).substr(kSegmentMagic.size(), 4));
  std::uint32_t version = 0;
  header.u32(version);
  if (version != kFormatVersion) throw corrupt("unsupported version");

  const std::size_t body_start = kSegmentMagic.size() + 4;
  const std::string_view body(data.data() + body_start, data.size() - body_start - 4);
  Reader trailer(std::string_view(data).substr(data.size() - 4));
  std::uint32_t stored_crc = 0;
  trailer.u32(stored_crc);
  if (crc32(body) != stored_crc) throw corrupt("checksum mismatch");

  auto seg = std::make_shared<Segment>();
  seg->id = id;
  Reader r(body);
  std::uint64_t count = 0;
  if (!r.u64(count)) throw corrupt("truncated header");
  seg->entries.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    if (!r.entry(e.key, e.value)) throw corrupt("truncated entry");
    if (!seg->entries.empty() && !(seg->entries.back().key < e.key)) throw corrupt("unsorted");
    seg->entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw corrupt("trailing bytes");
  return seg;
}

std::int64_t parse_degree(const std::optional<std::string>& v) {
  if (!v) return 0;
  std::int64_t n = 0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), n);
  if (res.ec != std::errc{} || res.ptr != v->data() + v->size() || n < 0) return 0;
  return n;
}

// Merges sorted sources (newest first). Deletion markers are kept unless
// `drop_tombstones`.
std::vector<Entry> merge_all(const detail::Sources& sources, bool drop_tombstones) {
  std::vector<detail::Cursor> cursors;
  if (sources.mem) cursors.emplace_back(sources.mem->begin(), sources.mem->end());
  for (const auto& seg : sources.segments) {
    cursors.emplace_back(seg->entries.data(), seg->entries.data() + seg->entries.size());
  }
  std::vector<Entry> out;
  while (true) {
    const detail::Cursor* winner = nullptr;
    for (const auto& c : cursors) {
      if (!c.done() && (!winner || c.key() < winner->key())) winner = &c;
    }
    if (!winner) break;
    Entry e{winner->key(), winner->value()};
    for (auto& c : cursors) {
      if (!c.done() && c.key() == e.key) c.advance();
    }
    if (drop_tombstones && !e.value) continue;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::string_view table_name(Table table) noexcept {
  switch (table) {
    case Table::Edge: return "Tedge";
    case Table::EdgeT: return "TedgeT";
    case Table::EdgeDeg: return "TedgeDeg";
    case Table::EdgeTxt: return "TedgeTxt";
  }
  return "?";
}

std::string iso_minute(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{epoch_seconds}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const auto since_midnight = duration_cast<minutes>(tp - day).count();
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(since_midnight / 60),
                static_cast<long long>(since_midnight % 60));
  return buf;
}

std::set<std::string> record_columns(const ingest::TweetRecord& rec,
                                     const geokey::GeoKeyFormat& fmt) {
  std::set<std::string> cols;
  cols.insert("time|" + iso_minute(rec.timestamp));
  cols.insert("user|" + ingest::escape_field(rec.user));
  cols.insert(std::string(geokey::kLatLonPrefix) + geokey::encode_latlon(rec.lat, rec.lon, fmt).text);
  for (const auto& word : token_set(rec.text)) cols.insert("word|" + word);
  return cols;
}

// ---------------------------------------------------------------------------

namespace detail {

Cursor::Cursor(MemTable::const_iterator first, MemTable::const_iterator last)
    : range_(MemRange{first, last}) {}

Cursor::Cursor(const Entry* first, const Entry* last) : range_(SegRange{first, last}) {}

bool Cursor::done() const {
  return std::visit([](const auto& r) { return r.first == r.second; }, range_);
}

const Key& Cursor::key() const {
  if (const auto* m = std::get_if<MemRange>(&range_)) return m->first->first;
  return std::get<SegRange>(range_).first->key;
}

const Value& Cursor::value() const {
  if (const auto* m = std::get_if<MemRange>(&range_)) return m->first->second;
  return std::get<SegRange>(range_).first->value;
}

void Cursor::advance() {
  std::visit([](auto& r) { ++r.first; }, range_);
}

}  // namespace detail

namespace {

// end + '\0' is the smallest row sorting after `end`.
Key first_key_after_row(Table table, std::string_view end) {
  Key hi{table, std::string(end), std::string()};
  hi.row.push_back('\0');
  return hi;
}

}  // namespace

Scanner::Scanner(detail::Sources sources, Table table, std::string_view start,
                 std::string_view end)
    : Scanner(std::move(sources), Key{table, std::string(start), std::string()},
              start <= end ? first_key_after_row(table, end)
                           : Key{table, std::string(start), std::string()}) {}

Scanner::Scanner(detail::Sources sources, const detail::Key& lo, const detail::Key& hi)
    : sources_(std::move(sources)) {
  if (sources_.mem) {
    cursors_.emplace_back(sources_.mem->lower_bound(lo), sources_.mem->lower_bound(hi));
  }
  const auto by_key = [](const Entry& e, const Key& k) { return e.key < k; };
  for (const auto& seg : sources_.segments) {
    const Entry* first = seg->entries.data();
    const Entry* last = first + seg->entries.size();
    cursors_.emplace_back(std::lower_bound(first, last, lo, by_key),
                          std::lower_bound(first, last, hi, by_key));
  }
}

bool Scanner::next(Cell& out) {
  while (true) {
    // Cursors are ordered newest first, so the first holder of the smallest
    // key owns the visible value.
    const detail::Cursor* winner = nullptr;
    for (const auto& c : cursors_) {
      if (!c.done() && (!winner || c.key() < winner->key())) winner = &c;
    }
    if (!winner) return false;
    const Key key = winner->key();
    const Value value = winner->value();
    for (auto& c : cursors_) {
      if (!c.done() && c.key() == key) c.advance();
    }
    if (!value) continue;
    out.row = key.row;
    out.col = key.col;
    out.val = *value;
    return true;
  }
}

Scanner Snapshot::scanner(Table table, std::string_view start, std::string_view end) const {
  return Scanner(sources_, table, start, end);
}

std::vector<Cell> Snapshot::scan(Table table, std::string_view start,
                                 std::string_view end) const {
  std::vector<Cell> cells;
  Scanner s = scanner(table, start, end);
  Cell c;
  while (s.next(c)) cells.push_back(c);
  return cells;
}

std::vector<Cell> Snapshot::row(Table table, std::string_view row) const {
  return scan(table, row, row);
}

std::vector<Cell> Snapshot::scan_all(Table table) const {
  const auto next_table = static_cast<Table>(static_cast<std::uint8_t>(table) + 1);
  Scanner s(sources_, Key{table, {}, {}}, Key{next_table, {}, {}});
  std::vector<Cell> cells;
  Cell c;
  while (s.next(c)) cells.push_back(c);
  return cells;
}

std::optional<std::string> Snapshot::get(Table table, std::string_view row,
                                         std::string_view col) const {
  const Key key{table, std::string(row), std::string(col)};
  if (sources_.mem) {
    const auto it = sources_.mem->find(key);
    if (it != sources_.mem->end()) return it->second;
  }
  for (const auto& seg : sources_.segments) {
    const auto it = std::lower_bound(seg->entries.begin(), seg->entries.end(), key,
                                     [](const Entry& e, const Key& k) { return e.key < k; });
    if (it != seg->entries.end() && it->key == key) return it->value;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

void TableSet::FileCloser::operator()(std::FILE* f) const noexcept {
  if (f) std::fclose(f);
}

TableSet::TableSet(std::filesystem::path dir, const geokey::GeoKeyFormat& fmt,
                   StoreOptions options)
    : dir_(std::move(dir)), fmt_(fmt), options_(options), mem_(std::make_shared<MemTable>()) {
  fmt_.validate();
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir_.string() + ": " + ec.message());
  std::lock_guard lock(mutex_);
  load_locked();
}

TableSet::~TableSet() = default;

void TableSet::load_locked() {
  const fs::path manifest = dir_ / kManifestName;
  std::set<std::string> live_files;
  if (fs::exists(manifest)) {
    std::istringstream in(read_file(manifest));
    std::string header;
    std::getline(in, header);
    if (header != kManifestHeader) throw Error(Errc::CorruptStore, "bad manifest header");
    std::string word;
    std::vector<std::uint64_t> ids;
    while (in >> word) {
      if (word == "format") {
        geokey::GeoKeyFormat stored;
        in >> stored.int_digits >> stored.frac_digits;
        if (!in) throw Error(Errc::CorruptStore, "bad manifest format line");
        if (stored != fmt_) {
          throw Error(Errc::FormatMismatch,
                      "store uses key format " + std::to_string(stored.int_digits) + "." +
                          std::to_string(stored.frac_digits) + ", requested " +
                          std::to_string(fmt_.int_digits) + "." +
                          std::to_string(fmt_.frac_digits));
        }
      } else if (word == "next") {
        in >> next_segment_id_;
      } else if (word == "segment") {
        std::uint64_t id = 0;
        in >> id;
        ids.push_back(id);
      } else {
        throw Error(Errc::CorruptStore, "unknown manifest entry '" + word + "'");
      }
      if (!in) throw Error(Errc::CorruptStore, "truncated manifest");
    }
    for (const auto id : ids) {
      live_files.insert(segment_name(id));
      segments_.push_back(load_segment(dir_ / segment_name(id), id));
    }
    std::sort(segments_.begin(), segments_.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });
  } else {
    write_manifest_locked();
  }

  // Segment files not named by the manifest are leftovers of an interrupted
  // flush or compaction.
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if ((name.starts_with("seg-") && !live_files.contains(name)) || name.ends_with(".tmp")) {
      fs::remove(entry.path());
    }
  }
  replay_log_locked();
}

void TableSet::write_manifest_locked() const {
  std::string text(kManifestHeader);
  text += "\nformat " + std::to_string(fmt_.int_digits) + " " + std::to_string(fmt_.frac_digits);
  text += "\nnext " + std::to_string(next_segment_id_);
  for (const auto& seg : segments_) text += "\nsegment " + std::to_string(seg->id);
  text += "\n";
  write_file_atomic(dir_ / kManifestName, text, options_.sync_writes);
}

void TableSet::replay_log_locked() {
  const fs::path path = dir_ / kLogName;
  if (!fs::exists(path)) {
    reset_log_locked();
    return;
  }
  const std::string data = read_file(path);
  const std::string_view view(data);
  if (data.size() < 8 || view.substr(0, 4) != kLogMagic) {
    throw Error(Errc::CorruptStore, path.string() + ": bad log header");
  }
  std::size_t offset = 8;
  // A torn final record is dropped; everything before it is replayed.
  while (data.size() - offset >= 8) {
    Reader header(view.substr(offset, 8));
    std::uint32_t len = 0;
    std::uint32_t crc = 0;
    header.u32(len);
    header.u32(crc);
    if (data.size() - offset - 8 < len) break;
    const std::string_view payload = view.substr(offset + 8, len);
    if (crc32(payload) != crc) break;
    Reader r(payload);
    std::uint32_t count = 0;
    bool ok = r.u32(count);
    Batch batch;
    for (std::uint32_t i = 0; i < count && ok; ++i) {
      Key k;
      Value v;
      ok = r.entry(k, v);
      if (ok) batch[std::move(k)] = std::move(v);
    }
    if (!ok || r.remaining() != 0) break;
    for (auto& [k, v] : batch) (*mem_)[k] = std::move(v);
    ++version_;
    offset += 8 + len;
  }
  if (offset != data.size()) fs::resize_file(path, offset);
  log_.reset(std::fopen(path.c_str(), "ab"));
  if (!log_) throw Error(Errc::Io, "cannot open " + path.string());
}

void TableSet::reset_log_locked() {
  const fs::path path = dir_ / kLogName;
  log_.reset();
  std::string header(kLogMagic);
  put_u32(header, kFormatVersion);
  write_file_atomic(path, header, options_.sync_writes);
  log_.reset(std::fopen(path.c_str(), "ab"));
  if (!log_) throw Error(Errc::Io, "cannot open " + path.string());
}

Snapshot TableSet::snapshot_locked() const {
  return Snapshot(detail::Sources{mem_, segments_}, version_);
}

Snapshot TableSet::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_locked();
}

void TableSet::apply_locked(const Batch& batch) {
  if (batch.empty()) return;
  std::string payload;
  put_u32(payload, static_cast<std::uint32_t>(batch.size()));
  for (const auto& [k, v] : batch) put_entry(payload, k, v);
  std::string record;
  put_u32(record, static_cast<std::uint32_t>(payload.size()));
  put_u32(record, crc32(payload));
  record += payload;
  if (std::fwrite(record.data(), 1, record.size(), log_.get()) != record.size() ||
      std::fflush(log_.get()) != 0 ||
      (options_.sync_writes && ::fsync(::fileno(log_.get())) != 0)) {
    throw Error(Errc::Io, "write-ahead log append failed");
  }

  // Snapshots share the memtable; copy it before mutating if anyone holds it.
  if (mem_.use_count() > 1) mem_ = std::make_shared<MemTable>(*mem_);
  for (const auto& [k, v] : batch) (*mem_)[k] = v;
  ++version_;
  if (mem_->size() >= options_.memtable_limit) flush_locked();
}

void TableSet::put_record(const ingest::TweetRecord& rec) {
  ingest::validate(rec);
  const std::set<std::string> new_cols = record_columns(rec, fmt_);

  std::lock_guard lock(mutex_);
  Batch batch;
  {
    const Snapshot current = snapshot_locked();
    std::set<std::string> old_cols;
    for (auto& cell : current.row(Table::Edge, rec.id)) old_cols.insert(std::move(cell.col));

    const auto adjust_degree = [&](const std::string& col, int delta) {
      const std::int64_t n = parse_degree(current.get(Table::EdgeDeg, col, kDegreeCol)) + delta;
      Key k{Table::EdgeDeg, col, std::string(kDegreeCol)};
      if (n > 0) {
        batch[std::move(k)] = std::to_string(n);
      } else {
        batch[std::move(k)] = std::nullopt;
      }
    };
    for (const auto& col : old_cols) {
      if (new_cols.contains(col)) continue;
      batch[Key{Table::Edge, rec.id, col}] = std::nullopt;
      batch[Key{Table::EdgeT, col, rec.id}] = std::nullopt;
      adjust_degree(col, -1);
    }
    for (const auto& col : new_cols) {
      if (old_cols.contains(col)) continue;
      batch[Key{Table::Edge, rec.id, col}] = "1";
      batch[Key{Table::EdgeT, col, rec.id}] = "1";
      adjust_degree(col, +1);
    }

    const std::map<std::string, std::string> txt = {
        {std::string(kTextCol), rec.text},
        {std::string(kMetaTsCol), std::to_string(rec.timestamp)},
        {std::string(kMetaUserCol), rec.user},
    };
    for (const auto& cell : current.row(Table::EdgeTxt, rec.id)) {
      if (!txt.contains(cell.col)) batch[Key{Table::EdgeTxt, rec.id, cell.col}] = std::nullopt;
    }
    for (const auto& [col, val] : txt) {
      const auto existing = current.get(Table::EdgeTxt, rec.id, col);
      if (existing != val) batch[Key{Table::EdgeTxt, rec.id, col}] = val;
    }
  }  // release the snapshot so the memtable is not copied needlessly
  apply_locked(batch);
}

std::size_t TableSet::bulk_load_tsv(std::istream& in) {
  const auto records = ingest::read_tsv(in);
  for (const auto& rec : records) put_record(rec);
  return records.size();
}

std::vector<Cell> TableSet::scan_range(Table table, std::string_view start,
                                       std::string_view end) const {
  return snapshot().scan(table, start, end);
}

std::optional<std::string> TableSet::get_text(std::string_view id) const {
  return snapshot().get(Table::EdgeTxt, id, kTextCol);
}

void TableSet::rebuild_degrees() {
  std::lock_guard lock(mutex_);
  Batch batch;
  {
    const Snapshot current = snapshot_locked();
    std::map<std::string, std::int64_t> counts;
    for (const auto& cell : current.scan_all(Table::Edge)) ++counts[cell.col];
    for (const auto& cell : current.scan_all(Table::EdgeDeg)) {
      const auto it = counts.find(cell.row);
      const bool keep = cell.col == kDegreeCol && it != counts.end() &&
                        cell.val == std::to_string(it->second);
      if (!keep) batch[Key{Table::EdgeDeg, cell.row, cell.col}] = std::nullopt;
    }
    for (const auto& [col, n] : counts) {
      const std::string val = std::to_string(n);
      if (current.get(Table::EdgeDeg, col, kDegreeCol) != val) {
        batch[Key{Table::EdgeDeg, col, std::string(kDegreeCol)}] = val;
      }
    }
  }
  apply_locked(batch);
}

void TableSet::write_cell(Table table, std::string_view row, std::string_view col,
                          std::string_view val) {
  if (row.empty() || col.empty()) throw Error(Errc::InvalidArgument, "empty row or column");
  std::lock_guard lock(mutex_);
  Batch batch;
  batch[Key{table, std::string(row), std::string(col)}] = std::string(val);
  apply_locked(batch);
}

StoreStats TableSet::stats() const {
  const Snapshot snap = snapshot();
  StoreStats st;
  for (const Table t : kAllTables) {
    const auto cells = snap.scan_all(t);
    st.cells[static_cast<int>(t)] = cells.size();
    if (t == Table::EdgeTxt) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i == 0 || cells[i].row != cells[i - 1].row) ++st.records;
      }
    }
  }
  std::lock_guard lock(mutex_);
  st.segments = segments_.size();
  return st;
}

void TableSet::flush() {
  std::lock_guard lock(mutex_);
  flush_locked();
}

void TableSet::flush_locked() {
  if (mem_->empty()) return;
  auto seg = std::make_shared<Segment>();
  seg->id = next_segment_id_++;
  seg->entries.reserve(mem_->size());
  for (const auto& [k, v] : *mem_) seg->entries.push_back(Entry{k, v});
  write_file_atomic(dir_ / segment_name(seg->id), encode_segment(*seg), options_.sync_writes);
  segments_.insert(segments_.begin(), std::move(seg));
  write_manifest_locked();
  reset_log_locked();
  mem_ = std::make_shared<MemTable>();
  if (segments_.size() > options_.max_segments) compact_locked();
}

void TableSet::compact() {
  std::lock_guard lock(mutex_);
  flush_locked();
  compact_locked();
}

void TableSet::compact_locked() {
  if (segments_.size() <= 1 && (segments_.empty() ||
                                std::none_of(segments_.front()->entries.begin(),
                                             segments_.front()->entries.end(),
                                             [](const Entry& e) { return !e.value; }))) {
    return;
  }
  auto merged = std::make_shared<Segment>();
  merged->id = next_segment_id_++;
  merged->entries = merge_all(detail::Sources{nullptr, segments_}, /*drop_tombstones=*/true);
  write_file_atomic(dir_ / segment_name(merged->id), encode_segment(*merged),
                    options_.sync_writes);
  const auto old = std::move(segments_);
  segments_ = {std::move(merged)};
  write_manifest_locked();
  for (const auto& seg : old) {
    std::error_code ec;
    fs::remove(dir_ / segment_name(seg->id), ec);
  }
}

}  // namespace lumino::store
