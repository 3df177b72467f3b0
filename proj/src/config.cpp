#include <boost/beast/core/detail/base64.hpp>

#include <fstream>
#include <sstream>

#include "lumino/error.hpp"
#include "lumino/service.hpp"

namespace lumino::service {

namespace {

namespace base64 = boost::beast::detail::base64;

[[noreturn]] void invalid(const std::string& what) { throw Error(Errc::InvalidArgument, what); }

json bbox_json(const geokey::BBox& b) {
  return {{"lat_min", b.lat_min}, {"lat_max", b.lat_max}, {"lon_min", b.lon_min}, {"lon_max", b.lon_max}};
}

geokey::BBox bbox_from(const json& j) {
  return geokey::BBox{j.at("lat_min").get<double>(), j.at("lat_max").get<double>(),
                      j.at("lon_min").get<double>(), j.at("lon_max").get<double>()};
}

json rgb_json(render::Rgb c) { return json::array({c.r, c.g, c.b}); }

render::Rgb rgb_from(const json& j) {
  if (!j.is_array() || j.size() != 3) invalid("colour must be [r, g, b]");
  render::Rgb out;
  std::uint8_t* channels[3] = {&out.r, &out.g, &out.b};
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number_integer()) invalid("colour channel must be an integer");
    const auto v = j[i].get<std::int64_t>();
    if (v < 0 || v > 255) invalid("colour channel out of range");
    *channels[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

std::optional<std::int64_t> optional_time(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_number_integer()) invalid("time bound must be an integer or null");
  return j.get<std::int64_t>();
}

}  // namespace

void ServerConfig::validate() const {
  if (frame_period_ms < 10) invalid("frame period must be at least 10 ms");
  if (address.empty()) invalid("listen address is empty");
  grid.validate();
  format.validate();
}

json to_json(const ServerConfig& c) {
  json j = {{"address", c.address},
            {"port", c.port},
            {"data_dir", c.data_dir.string()},
            {"grid", {{"bbox", bbox_json(c.grid.bbox)}, {"nrows", c.grid.nrows}, {"ncols", c.grid.ncols}}},
            {"format", {{"int_digits", c.format.int_digits}, {"frac_digits", c.format.frac_digits}}},
            {"frame_period_ms", c.frame_period_ms},
            {"feed", nullptr}};
  if (c.feed) j["feed"] = c.feed->string();
  return j;
}

ServerConfig config_from_json(const json& j) {
  if (!j.is_object()) invalid("config must be a JSON object");
  ServerConfig c;
  try {
    if (j.contains("address")) c.address = j["address"].get<std::string>();
    if (j.contains("port")) {
      const auto port = j["port"].get<std::int64_t>();
      if (port < 0 || port > 65535) invalid("port out of range");
      c.port = static_cast<std::uint16_t>(port);
    }
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      if (g.contains("bbox")) c.grid.bbox = bbox_from(g["bbox"]);
      if (g.contains("nrows")) c.grid.nrows = g["nrows"].get<int>();
      if (g.contains("ncols")) c.grid.ncols = g["ncols"].get<int>();
    }
    if (j.contains("format")) {
      const auto& f = j["format"];
      if (f.contains("int_digits")) c.format.int_digits = f["int_digits"].get<int>();
      if (f.contains("frac_digits")) c.format.frac_digits = f["frac_digits"].get<int>();
    }
    if (j.contains("frame_period_ms")) c.frame_period_ms = j["frame_period_ms"].get<int>();
    if (j.contains("feed") && !j["feed"].is_null()) c.feed = j["feed"].get<std::string>();
  } catch (const json::exception& e) {
    invalid(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ServerConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) invalid(path.string() + " is not valid JSON");
  return config_from_json(j);
}

json to_json(const render::SchemeConfig& s) {
  json j = {{"mode", std::string(render::mode_name(s.mode))},
            {"keyword", s.keyword},
            {"t0", nullptr},
            {"t1", nullptr},
            {"bins", s.bins},
            {"alpha", s.alpha},
            {"colormap", {{"low", rgb_json(s.colormap.low)}, {"high", rgb_json(s.colormap.high)}}},
            {"log_scale", s.log_scale}};
  if (s.t0) j["t0"] = *s.t0;
  if (s.t1) j["t1"] = *s.t1;
  return j;
}

render::SchemeConfig merge_scheme(const render::SchemeConfig& base, const json& j) {
  if (!j.is_object()) invalid("scheme must be a JSON object");
  render::SchemeConfig s = base;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mode") {
        const auto mode = render::parse_mode(value.get<std::string>());
        if (!mode) invalid("unknown mode " + value.get<std::string>());
        s.mode = *mode;
      } else if (key == "keyword") {
        s.keyword = value.get<std::string>();
      } else if (key == "t0") {
        s.t0 = optional_time(value);
      } else if (key == "t1") {
        s.t1 = optional_time(value);
      } else if (key == "bins") {
        if (!value.is_number_integer()) invalid("bins must be an integer");
        s.bins = value.get<int>();
      } else if (key == "alpha") {
        if (!value.is_number()) invalid("alpha must be a number");
        s.alpha = value.get<double>();
      } else if (key == "colormap") {
        if (value.contains("low")) s.colormap.low = rgb_from(value["low"]);
        if (value.contains("high")) s.colormap.high = rgb_from(value["high"]);
      } else if (key == "log_scale") {
        s.log_scale = value.get<bool>();
      } else {
        invalid("unknown scheme field " + key);
      }
    }
  } catch (const json::exception& e) {
    invalid(std::string("scheme: ") + e.what());
  }
  s.validate();
  return s;
}

json to_json(const ingest::TweetRecord& r) {
  return {{"id", r.id}, {"timestamp", r.timestamp}, {"lat", r.lat},
          {"lon", r.lon}, {"user", r.user},         {"text", r.text}};
}

ingest::TweetRecord record_from_json(const json& j) {
  try {
    return ingest::TweetRecord{j.at("id").get<std::string>(),   j.at("timestamp").get<std::int64_t>(),
                               j.at("lat").get<double>(),       j.at("lon").get<double>(),
                               j.at("user").get<std::string>(), j.at("text").get<std::string>()};
  } catch (const json::exception& e) {
    invalid(std::string("record: ") + e.what());
  }
}

json to_json(const ingest::IngestStats& s) {
  return {{"lines_read", s.lines_read},
          {"records_kept", s.records_kept},
          {"records_dropped_no_geo", s.records_dropped_no_geo},
          {"records_dropped_malformed", s.records_dropped_malformed}};
}

json to_json(const gridmap::HeightGrid& g) {
  return {{"nrows", g.spec.nrows}, {"ncols", g.spec.ncols}, {"bbox", bbox_json(g.spec.bbox)}, {"heights", g.heights}};
}

json to_json(const std::vector<std::vector<render::TermCount>>& terms) {
  json cells = json::array();
  for (const auto& cell : terms) {
    json list = json::array();
    for (const auto& t : cell) list.push_back({{"term", t.term}, {"count", t.count}});
    cells.push_back(std::move(list));
  }
  return cells;
}

std::string frame_message(const render::FrameBuffer& frame) {
  std::string pix(base64::encoded_size(frame.pixels.size()), '\0');
  pix.resize(base64::encode(pix.data(), frame.pixels.data(), frame.pixels.size()));
  return json{{"seq", frame.seq}, {"w", frame.width}, {"h", frame.height}, {"pix", std::move(pix)}}.dump();
}

render::FrameBuffer parse_frame_message(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::Malformed, "frame message is not a JSON object");
  try {
    render::FrameBuffer f(j.at("w").get<int>(), j.at("h").get<int>());
    f.seq = j.at("seq").get<std::uint64_t>();
    const auto pix = j.at("pix").get<std::string>();
    std::vector<std::uint8_t> raw(base64::decoded_size(pix.size()));
    const auto [written, read] = base64::decode(raw.data(), pix.data(), pix.size());
    if (read != pix.size() || written != f.pixels.size()) {
      throw Error(Errc::Malformed, "frame payload does not match w * h");
    }
    std::copy_n(raw.begin(), written, f.pixels.begin());
    return f;
  } catch (const json::exception& e) {
    throw Error(Errc::Malformed, std::string("frame message: ") + e.what());
  }
}

std::filesystem::path store_dir(const std::filesystem::path& d) { return d / "store"; }
std::filesystem::path heightmap_path(const std::filesystem::path& d) { return d / "heightmap.tsv"; }
std::filesystem::path archive_path(const std::filesystem::path& d) { return d / "archive.tsv"; }
std::filesystem::path stopwords_path(const std::filesystem::path& d) { return d / "stopwords.txt"; }

}  // namespace lumino::service
