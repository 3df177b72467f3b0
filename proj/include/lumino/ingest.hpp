#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lumino::ingest {

/// One geo-tagged post.
struct TweetRecord {
  std::string id;
  std::int64_t timestamp = 0;  // UTC seconds since epoch
  double lat = 0;
  double lon = 0;
  std::string user;
  std::string text;

  friend bool operator==(const TweetRecord&, const TweetRecord&) = default;
};

/// Throws Errc::Malformed when the record breaks the id or coordinate rules.
void validate(const TweetRecord& rec);

struct NoGeo {};
struct Malformed {
  std::string reason;
};
using FeedResult = std::variant<TweetRecord, NoGeo, Malformed>;

struct IngestStats {
  std::uint64_t lines_read = 0;
  std::uint64_t records_kept = 0;
  std::uint64_t records_dropped_no_geo = 0;
  std::uint64_t records_dropped_malformed = 0;

  IngestStats& operator+=(const IngestStats& other);
  friend bool operator==(const IngestStats&, const IngestStats&) = default;
};

/// Parses one feed object:
///   {"id": string, "ts": integer, "user": string, "text": string,
///    "geo": [lon, lat] | null}
/// Coordinates arrive in GeoJSON [lon, lat] order.
FeedResult parse_feed_line(std::string_view line);

/// Six tab-separated fields (id, ts, lat, lon, user, text) and a newline.
/// Tab, newline, carriage return and backslash in user/text are escaped.
std::string to_tsv(const TweetRecord& rec, int frac_digits = 3);

/// Inverse of to_tsv. Throws Errc::Malformed.
TweetRecord from_tsv(std::string_view line);

std::string escape_field(std::string_view raw);
/// Throws Errc::Malformed on a dangling or unknown escape.
std::string unescape_field(std::string_view escaped);

using RecordSink = std::function<void(const TweetRecord&)>;

/// Feeds every kept record to `sink` in input order. Parse failures are
/// counted; exceptions thrown by the sink propagate.
IngestStats ingest_stream(std::istream& source, const RecordSink& sink);

template <typename Lines>
IngestStats ingest_lines(const Lines& lines, const RecordSink& sink) {
  IngestStats stats;
  for (const auto& line : lines) {
    ++stats.lines_read;
    auto result = parse_feed_line(line);
    if (auto* rec = std::get_if<TweetRecord>(&result)) {
      sink(*rec);
      ++stats.records_kept;
    } else if (std::holds_alternative<NoGeo>(result)) {
      ++stats.records_dropped_no_geo;
    } else {
      ++stats.records_dropped_malformed;
    }
  }
  return stats;
}

/// Reads a TSV archive. Throws Errc::Malformed naming the offending line.
std::vector<TweetRecord> read_tsv(std::istream& in);

}  // namespace lumino::ingest
