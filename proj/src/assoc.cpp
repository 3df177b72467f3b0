#include "lumino/assoc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "lumino/error.hpp"
#include "lumino/tokenize.hpp"

namespace lumino::assoc {
namespace {

bool same_key(const Triple& a, const Triple& b) { return a.row == b.row && a.col == b.col; }

bool key_less(const Triple& a, const Triple& b) {
  return std::tie(a.row, a.col) < std::tie(b.row, b.col);
}

std::int64_t parse_timestamp(const std::string& id, const std::string& text) {
  std::int64_t ts = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), ts);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw Error(Errc::Integrity, "record " + id + " has an unreadable timestamp");
  }
  return ts;
}

}  // namespace

AssocArray::AssocArray(std::vector<Triple> triples) : triples_(std::move(triples)) {
  std::stable_sort(triples_.begin(), triples_.end(), key_less);
  // Keep the last of each run of equal keys.
  std::vector<Triple> unique;
  unique.reserve(triples_.size());
  for (auto& t : triples_) {
    if (!unique.empty() && same_key(unique.back(), t)) {
      unique.back() = std::move(t);
    } else {
      unique.push_back(std::move(t));
    }
  }
  triples_ = std::move(unique);
}

void AssocArray::insert(std::string row, std::string col, std::string val) {
  Triple t{std::move(row), std::move(col), std::move(val)};
  const auto it = std::lower_bound(triples_.begin(), triples_.end(), t, key_less);
  if (it != triples_.end() && same_key(*it, t)) {
    it->val = std::move(t.val);
  } else {
    triples_.insert(it, std::move(t));
  }
}

AssocArray select_cols(const store::Snapshot& snap, const geokey::GeoKeyRange& range) {
  const std::string start = std::string(geokey::kLatLonPrefix) + range.start.text;
  const std::string end = std::string(geokey::kLatLonPrefix) + range.end.text;
  std::vector<Triple> triples;
  auto scanner = snap.scanner(store::Table::EdgeT, start, end);
  store::Cell cell;
  while (scanner.next(cell)) {
    // Transpose cells are (column key, tweet id); flip them back.
    triples.push_back(Triple{std::move(cell.col), std::move(cell.row), std::move(cell.val)});
  }
  return AssocArray(std::move(triples));
}

std::vector<ingest::TweetRecord> extract_tweets(const store::Snapshot& snap, const AssocArray& a,
                                                const geokey::GeoKeyFormat& fmt) {
  std::vector<ingest::TweetRecord> out;
  out.reserve(a.size());
  for (const auto& t : a) {
    if (!t.col.starts_with(geokey::kLatLonPrefix)) {
      throw Error(Errc::Integrity, "column '" + t.col + "' is not a latlon column");
    }
    const auto p = geokey::decode_latlon(
        std::string_view(t.col).substr(geokey::kLatLonPrefix.size()), fmt);

    std::optional<std::string> text, ts, user;
    for (auto& cell : snap.row(store::Table::EdgeTxt, t.row)) {
      if (cell.col == store::kTextCol) text = std::move(cell.val);
      else if (cell.col == store::kMetaTsCol) ts = std::move(cell.val);
      else if (cell.col == store::kMetaUserCol) user = std::move(cell.val);
    }
    if (!text || !ts || !user) {
      throw Error(Errc::Integrity, "record " + t.row + " has no complete TedgeTxt entry");
    }
    ingest::TweetRecord rec;
    rec.id = t.row;
    rec.timestamp = parse_timestamp(t.row, *ts);
    rec.lat = p.lat;
    rec.lon = p.lon;
    rec.user = std::move(*user);
    rec.text = std::move(*text);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<geokey::BBox> split_quadrants(const geokey::BBox& bbox,
                                          const geokey::GeoKeyFormat& fmt) {
  bbox.validate();
  // The largest negative value a rounded coordinate can take.
  const double step = 1.0 / std::pow(10.0, fmt.frac_digits);
  const auto split_axis = [step](double lo, double hi) {
    std::vector<std::pair<double, double>> parts;
    if (lo >= 0 || hi < 0) {
      parts.emplace_back(lo, hi);
      return parts;
    }
    if (lo <= -step) parts.emplace_back(lo, -step);
    parts.emplace_back(0.0, hi);
    return parts;
  };
  std::vector<geokey::BBox> boxes;
  for (const auto& [lat_lo, lat_hi] : split_axis(bbox.lat_min, bbox.lat_max)) {
    for (const auto& [lon_lo, lon_hi] : split_axis(bbox.lon_min, bbox.lon_max)) {
      boxes.push_back(geokey::BBox{lat_lo, lat_hi, lon_lo, lon_hi});
    }
  }
  return boxes;
}

std::vector<ingest::TweetRecord> query_bbox(const store::Snapshot& snap, const Query& query,
                                            const geokey::GeoKeyFormat& fmt) {
  query.bbox.validate();
  if (query.t0 && query.t1 && *query.t0 > *query.t1) {
    throw Error(Errc::InvalidArgument, "time window has t0 > t1");
  }

  std::vector<ingest::TweetRecord> out;
  for (const auto& part : split_quadrants(query.bbox, fmt)) {
    const AssocArray selected = select_cols(snap, geokey::box_range(part, fmt));

    std::vector<geokey::Candidate<std::size_t>> candidates;
    candidates.reserve(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
      const auto& col = selected.triples()[i].col;
      candidates.emplace_back(geokey::GeoKey{col.substr(geokey::kLatLonPrefix.size())}, i);
    }
    AssocArray kept;
    for (const auto& [key, index] : geokey::refine(candidates, query.bbox, fmt)) {
      const auto& t = selected.triples()[index];
      kept.insert(t.row, t.col, t.val);
    }

    for (auto& rec : extract_tweets(snap, kept, fmt)) {
      if (query.t0 && rec.timestamp < *query.t0) continue;
      if (query.t1 && rec.timestamp > *query.t1) continue;
      if (query.keyword && !matches_keyword(token_set(rec.text), *query.keyword)) continue;
      out.push_back(std::move(rec));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.timestamp, a.id) < std::tie(b.timestamp, b.id);
  });
  return out;
}

std::vector<ingest::TweetRecord> query_bbox(const store::TableSet& tables, const Query& query) {
  return query_bbox(tables.snapshot(), query, tables.format());
}

}  // namespace lumino::assoc
