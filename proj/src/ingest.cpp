#include "lumino/ingest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "lumino/error.hpp"
#include "lumino/geokey.hpp"

namespace lumino::ingest {
namespace {

using nlohmann::json;

bool valid_id(std::string_view id) {
  return !id.empty() && id.find_first_of("\t\n") == std::string_view::npos;
}

bool valid_coordinate(double lat, double lon) {
  return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

std::string render_degrees(double value, int frac_digits) {
  double rounded = geokey::round_to(value, frac_digits);
  if (rounded == 0.0) rounded = 0.0;  // no "-0.000"
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%.*f", frac_digits, rounded);
  return std::string(buf, static_cast<std::size_t>(n));
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    const auto res = std::from_chars(first, last, out, std::chars_format::fixed);
    return res.ec == std::errc{} && res.ptr == last && std::isfinite(out);
  } else {
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc{} && res.ptr == last;
  }
}

}  // namespace

void validate(const TweetRecord& rec) {
  if (!valid_id(rec.id)) throw Error(Errc::Malformed, "record id empty or contains tab/newline");
  if (!valid_coordinate(rec.lat, rec.lon)) {
    throw Error(Errc::Malformed, "record " + rec.id + " has out-of-range coordinates");
  }
}

IngestStats& IngestStats::operator+=(const IngestStats& other) {
  lines_read += other.lines_read;
  records_kept += other.records_kept;
  records_dropped_no_geo += other.records_dropped_no_geo;
  records_dropped_malformed += other.records_dropped_malformed;
  return *this;
}

FeedResult parse_feed_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  json obj = json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded()) return Malformed{"not JSON"};
  if (!obj.is_object()) return Malformed{"not a JSON object"};

  const auto id = obj.find("id");
  const auto ts = obj.find("ts");
  const auto user = obj.find("user");
  const auto text = obj.find("text");
  if (id == obj.end() || !id->is_string()) return Malformed{"id missing or not a string"};
  if (ts == obj.end() || !ts->is_number_integer()) return Malformed{"ts missing or not an integer"};
  if (user == obj.end() || !user->is_string()) return Malformed{"user missing or not a string"};
  if (text == obj.end() || !text->is_string()) return Malformed{"text missing or not a string"};

  TweetRecord rec;
  rec.id = id->get<std::string>();
  if (!valid_id(rec.id)) return Malformed{"id empty or contains tab/newline"};
  if (ts->is_number_unsigned() && ts->get<std::uint64_t>() > INT64_MAX) {
    return Malformed{"ts out of range"};
  }
  rec.timestamp = ts->get<std::int64_t>();
  rec.user = user->get<std::string>();
  rec.text = text->get<std::string>();

  const auto geo = obj.find("geo");
  if (geo == obj.end() || geo->is_null()) return NoGeo{};
  if (!geo->is_array() || geo->size() != 2 || !(*geo)[0].is_number() || !(*geo)[1].is_number()) {
    return Malformed{"geo is not a [lon, lat] pair"};
  }
  rec.lon = (*geo)[0].get<double>();
  rec.lat = (*geo)[1].get<double>();
  if (!valid_coordinate(rec.lat, rec.lon)) return Malformed{"coordinates out of range"};
  return rec;
}

std::string escape_field(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (const char c : raw) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    const char c = escaped[i];
    if (c == '\t' || c == '\n' || c == '\r') {
      throw Error(Errc::Malformed, "raw control character inside field");
    }
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (++i == escaped.size()) throw Error(Errc::Malformed, "dangling backslash");
    switch (escaped[i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case '\\': out.push_back('\\'); break;
      default: throw Error(Errc::Malformed, std::string("unknown escape \\") + escaped[i]);
    }
  }
  return out;
}

std::string to_tsv(const TweetRecord& rec, int frac_digits) {
  std::string line;
  line.reserve(rec.id.size() + rec.user.size() + rec.text.size() + 48);
  line += rec.id;
  line += '\t';
  line += std::to_string(rec.timestamp);
  line += '\t';
  line += render_degrees(rec.lat, frac_digits);
  line += '\t';
  line += render_degrees(rec.lon, frac_digits);
  line += '\t';
  line += escape_field(rec.user);
  line += '\t';
  line += escape_field(rec.text);
  line += '\n';
  return line;
}

TweetRecord from_tsv(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (line.empty()) throw Error(Errc::Malformed, "empty TSV line");

  std::string_view fields[6];
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (count == 6) throw Error(Errc::Malformed, "more than 6 TSV fields");
    fields[count++] = line.substr(start, tab == std::string_view::npos ? tab : tab - start);
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (count != 6) {
    throw Error(Errc::Malformed, "expected 6 TSV fields, got " + std::to_string(count));
  }

  TweetRecord rec;
  rec.id = std::string(fields[0]);
  if (!valid_id(rec.id)) throw Error(Errc::Malformed, "bad id field");
  if (!parse_number(fields[1], rec.timestamp)) throw Error(Errc::Malformed, "bad timestamp field");
  if (!parse_number(fields[2], rec.lat) || !parse_number(fields[3], rec.lon)) {
    throw Error(Errc::Malformed, "bad coordinate field");
  }
  if (!valid_coordinate(rec.lat, rec.lon)) throw Error(Errc::Malformed, "coordinates out of range");
  rec.user = unescape_field(fields[4]);
  rec.text = unescape_field(fields[5]);
  return rec;
}

IngestStats ingest_stream(std::istream& source, const RecordSink& sink) {
  struct LineRange {
    std::istream& in;
    struct iterator {
      std::istream* in;
      std::string line;
      bool done = false;
      iterator& operator++() {
        done = !std::getline(*in, line);
        return *this;
      }
      const std::string& operator*() const { return line; }
      bool operator!=(const iterator& other) const { return done != other.done; }
    };
    iterator begin() const {
      iterator it{&in, {}};
      ++it;
      return it;
    }
    iterator end() const { return iterator{&in, {}, true}; }
  };
  return ingest_lines(LineRange{source}, sink);
}

std::vector<TweetRecord> read_tsv(std::istream& in) {
  std::vector<TweetRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      records.push_back(from_tsv(line));
    } catch (const Error& e) {
      throw Error(Errc::Malformed, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace lumino::ingest
