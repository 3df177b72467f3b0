// lumino: batch driver and server launcher.
//
//   lumino ingest feed.jsonl          parse a feed, archive it as TSV, index it
//   lumino ingest --tsv archive.tsv   index an existing TSV archive
//   lumino heightmap cloud.xyz        grid a point cloud into heightmap.tsv
//   lumino query --bbox 42.350,42.357,-71.099,-71.090 [--from T] [--to T] [--keyword W]
//   lumino serve [--port N]
//   lumino render --mode density --out frames/
//
// Exit status: 0 success, 1 usage error, 2 data error.

#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include <CLI11.hpp>

#include "lumino/error.hpp"
#include "lumino/service.hpp"

using namespace lumino;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

geokey::BBox parse_bbox(const std::string& text) {
  double v[4];
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    const auto comma = text.find(',', pos);
    if ((i < 3) != (comma != std::string::npos)) throw UsageError("--bbox wants lat0,lat1,lon0,lon1");
    const auto field = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      v[i] = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::logic_error&) {
      throw UsageError("--bbox field is not a number: " + field);
    }
    pos = comma + 1;
  }
  return geokey::BBox::from_corners(v[0], v[2], v[1], v[3]);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return in;
}

int run_ingest(const service::ServerConfig& cfg, const std::string& input, bool tsv) {
  std::filesystem::create_directories(cfg.data_dir);
  store::TableSet tables(service::store_dir(cfg.data_dir), cfg.format);
  auto in = open_input(input);
  if (tsv) {
    std::cout << "records_kept=" << tables.bulk_load_tsv(in) << '\n';
  } else {
    std::ofstream archive(service::archive_path(cfg.data_dir), std::ios::app | std::ios::binary);
    const auto stats = ingest::ingest_stream(in, [&](const ingest::TweetRecord& rec) {
      tables.put_record(rec);
      archive << ingest::to_tsv(rec, cfg.format.frac_digits);
    });
    std::cout << "lines_read=" << stats.lines_read << " records_kept=" << stats.records_kept
              << " dropped_no_geo=" << stats.records_dropped_no_geo
              << " dropped_malformed=" << stats.records_dropped_malformed << '\n';
  }
  tables.flush();
  return 0;
}

int run_heightmap(const service::ServerConfig& cfg, const std::string& cloud_path, std::string out) {
  const auto grid = gridmap::build_height_grid(gridmap::load_point_cloud(cloud_path), cfg.grid);
  if (out.empty()) {
    std::filesystem::create_directories(cfg.data_dir);
    out = service::heightmap_path(cfg.data_dir).string();
  }
  std::ofstream file(out);
  if (!file) throw Error(Errc::Io, "cannot write " + out);
  gridmap::write_heightmap_tsv(file, grid);
  std::cout << "cells=" << grid.heights.size() << " max_height=" << grid.max_height() << '\n';
  return 0;
}

int run_query(const service::ServerConfig& cfg, const std::string& bbox, std::optional<std::int64_t> from,
              std::optional<std::int64_t> to, std::optional<std::string> keyword) {
  assoc::Query q{parse_bbox(bbox), from, to, std::move(keyword)};
  store::TableSet tables(service::store_dir(cfg.data_dir), cfg.format);
  for (const auto& rec : assoc::query_bbox(tables, q)) std::cout << ingest::to_tsv(rec, cfg.format.frac_digits);
  return 0;
}

int run_serve(const service::ServerConfig& cfg) {
  // Every thread inherits the blocked mask; the main thread collects the
  // signal synchronously.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::Server server(cfg);
  server.start();
  std::cerr << "listening on " << cfg.address << ':' << server.port() << '\n';
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return 0;
}

int run_render(const service::ServerConfig& cfg, const render::SchemeConfig& scheme, const std::string& out_dir) {
  scheme.validate();
  service::Server server(cfg);
  std::filesystem::create_directories(out_dir);
  const std::size_t frames = scheme.mode == render::Mode::Animate ? static_cast<std::size_t>(scheme.bins) : 1;
  for (std::size_t i = 0; i < frames; ++i) {
    auto frame = server.render_frame(scheme, i);
    frame.seq = i;
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
    std::ofstream out(std::filesystem::path(out_dir) / name, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write into " + out_dir);
    render::write_ppm(out, frame);
  }
  std::cout << "frames=" << frames << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geo-tagged tweet store, heightmap builder and frame server"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_dir;
  app.add_option("--config", config_path, "JSON server config")->check(CLI::ExistingFile);
  app.add_option("--data", data_dir, "data directory (overrides the config)");

  auto* ingest_cmd = app.add_subcommand("ingest", "parse a feed file and index it");
  std::string feed;
  bool tsv = false;
  ingest_cmd->add_option("feed", feed, "feed file, one JSON object per line")->required();
  ingest_cmd->add_flag("--tsv", tsv, "input is a TSV archive");

  auto* heightmap_cmd = app.add_subcommand("heightmap", "build the height grid from a point cloud");
  std::string cloud, heightmap_out;
  heightmap_cmd->add_option("pointcloud", cloud, "\"lat lon z\" per line")->required();
  heightmap_cmd->add_option("--out", heightmap_out, "output TSV (default: <data>/heightmap.tsv)");

  auto* query_cmd = app.add_subcommand("query", "print records inside a box as TSV");
  std::string bbox;
  std::optional<std::int64_t> from, to;
  std::optional<std::string> keyword;
  query_cmd->add_option("--bbox", bbox, "lat0,lat1,lon0,lon1")->required();
  query_cmd->add_option("--from", from, "first timestamp (epoch seconds, inclusive)");
  query_cmd->add_option("--to", to, "last timestamp (inclusive)");
  query_cmd->add_option("--keyword", keyword, "keep records containing these tokens");

  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP/WebSocket service");
  std::optional<int> port, period;
  std::optional<std::string> serve_feed;
  serve_cmd->add_option("--port", port, "listen port")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--period", period, "frame period in ms");
  serve_cmd->add_option("--feed", serve_feed, "feed file to tail");

  auto* render_cmd = app.add_subcommand("render", "write PPM frames for a scheme");
  std::string mode_name = "height", out_dir;
  render::SchemeConfig scheme;
  std::optional<std::int64_t> r_from, r_to;
  render_cmd->add_option("--mode", mode_name, "height|density|keyword|topics|animate")
      ->check(CLI::IsMember({"height", "density", "keyword", "topics", "animate"}));
  render_cmd->add_option("--out", out_dir, "output directory")->required();
  render_cmd->add_option("--keyword", scheme.keyword, "keyword for keyword mode");
  render_cmd->add_option("--from", r_from, "window start (epoch seconds)");
  render_cmd->add_option("--to", r_to, "window end");
  render_cmd->add_option("--bins", scheme.bins, "animation frames");
  render_cmd->add_option("--alpha", scheme.alpha, "keyword overlay opacity");
  render_cmd->add_flag("--log", scheme.log_scale, "log-scale counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    service::ServerConfig cfg = config_path.empty() ? service::ServerConfig{} : service::load_config(config_path);
    if (!data_dir.empty()) cfg.data_dir = data_dir;

    if (*ingest_cmd) return run_ingest(cfg, feed, tsv);
    if (*heightmap_cmd) return run_heightmap(cfg, cloud, heightmap_out);
    if (*query_cmd) return run_query(cfg, bbox, from, to, keyword);
    if (*serve_cmd) {
      if (port) cfg.port = static_cast<std::uint16_t>(*port);
      if (period) cfg.frame_period_ms = *period;
      if (serve_feed) cfg.feed = *serve_feed;
      cfg.validate();
      return run_serve(cfg);
    }
    if (*render_cmd) {
      scheme.mode = *render::parse_mode(mode_name);
      scheme.t0 = r_from;
      scheme.t1 = r_to;
      return run_render(cfg, scheme, out_dir);
    }
  } catch (const UsageError& e) {
    std::cerr << "lumino: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "lumino: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
