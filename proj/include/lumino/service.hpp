#pragma once

// HTTP/WebSocket front end: ingestion, queries, scheme control and the frame
// stream. One listening port serves both protocols.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lumino/assoc.hpp"
#include "lumino/geokey.hpp"
#include "lumino/gridmap.hpp"
#include "lumino/ingest.hpp"
#include "lumino/render.hpp"
#include "lumino/store.hpp"

namespace lumino::service {

using nlohmann::json;

struct ServerConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "data";
  gridmap::GridSpec grid = gridmap::mit_campus_grid();
  geokey::GeoKeyFormat format;
  int frame_period_ms = 100;
  std::optional<std::filesystem::path> feed;  // tailed for new lines

  /// Throws Errc::InvalidArgument.
  void validate() const;
};

// JSON mappings. The *_from_json readers throw Errc::InvalidArgument on a
// wrong type or value.
json to_json(const ServerConfig& config);
ServerConfig config_from_json(const json& j);
ServerConfig load_config(const std::filesystem::path& path);

json to_json(const render::SchemeConfig& scheme);
/// Applies the fields present in `j` on top of `base` and validates.
render::SchemeConfig merge_scheme(const render::SchemeConfig& base, const json& j);

json to_json(const ingest::TweetRecord& rec);
ingest::TweetRecord record_from_json(const json& j);
json to_json(const ingest::IngestStats& stats);
json to_json(const gridmap::HeightGrid& grid);
json to_json(const std::vector<std::vector<render::TermCount>>& terms);

/// WebSocket frame envelope {"seq", "w", "h", "pix"}.
std::string frame_message(const render::FrameBuffer& frame);
render::FrameBuffer parse_frame_message(std::string_view text);

// Store layout under the data directory.
std::filesystem::path store_dir(const std::filesystem::path& data_dir);
std::filesystem::path heightmap_path(const std::filesystem::path& data_dir);
std::filesystem::path archive_path(const std::filesystem::path& data_dir);
std::filesystem::path stopwords_path(const std::filesystem::path& data_dir);

struct Response {
  unsigned status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Bounded frame queue of one WebSocket client. A full queue drops its
/// oldest frame.
class Subscriber {
 public:
  static constexpr std::size_t kCapacity = 4;

  void push(std::shared_ptr<const std::string> msg);
  /// Blocks until a frame is queued or the subscriber is closed.
  std::shared_ptr<const std::string> pop();
  void close();
  std::uint64_t dropped() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool closed_ = false;
  std::uint64_t dropped_ = 0;
};

class Server {
 public:
  /// Opens the store and loads the heightmap when present. Throws
  /// Errc::CorruptStore, Errc::FormatMismatch or Errc::DimensionMismatch.
  explicit Server(ServerConfig config);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts the accept, render and feed threads. Throws
  /// Errc::BindFailure.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  std::uint16_t port() const noexcept { return bound_port_.load(); }

  /// Routes one HTTP request; shared by the socket layer and tests.
  Response handle(std::string_view method, std::string_view target, std::string_view body);

  ingest::IngestStats ingest_text(std::string_view text);
  render::SchemeConfig scheme() const;
  void set_scheme(const render::SchemeConfig& scheme);
  /// The frame the render loop would broadcast next for `scheme`.
  render::FrameBuffer render_frame(const render::SchemeConfig& scheme, std::size_t tick = 0);

  store::TableSet& tables() noexcept { return *tables_; }
  const gridmap::HeightGrid& heightmap() const noexcept { return heightmap_; }
  const ServerConfig& config() const noexcept { return config_; }

  std::shared_ptr<Subscriber> subscribe();
  void unsubscribe(const std::shared_ptr<Subscriber>& sub);

 private:
  struct Connection;
  using RecordList = std::shared_ptr<const std::vector<ingest::TweetRecord>>;

  RecordList window_records(const render::SchemeConfig& scheme);
  Response handle_tweets(std::string_view query);
  Response handle_topics(std::string_view query);
  Response handle_scheme_put(std::string_view body);
  json stats_json() const;

  void accept_loop();
  void render_loop();
  void feed_loop();
  void serve_connection(Connection& conn);
  void broadcast(render::FrameBuffer frame, std::uint64_t generation);

  ServerConfig config_;
  std::unique_ptr<store::TableSet> tables_;
  gridmap::HeightGrid heightmap_;
  std::set<std::string> stopwords_;

  mutable std::mutex scheme_mutex_;
  render::SchemeConfig scheme_;
  std::uint64_t scheme_generation_ = 0;
  std::uint64_t next_seq_ = 1;

  mutable std::mutex ingest_mutex_;
  ingest::IngestStats ingest_stats_;

  std::mutex cache_mutex_;
  struct CacheKey {
    std::uint64_t version;
    std::optional<std::int64_t> t0, t1;
    bool operator==(const CacheKey&) const = default;
  };
  std::optional<CacheKey> cache_key_;
  RecordList cache_records_;

  mutable std::mutex subs_mutex_;
  std::vector<std::shared_ptr<Subscriber>> subscribers_;

  std::mutex conn_mutex_;
  std::list<std::unique_ptr<Connection>> connections_;

  std::mutex run_mutex_;
  std::condition_variable run_cv_;
  bool running_ = false;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint16_t> bound_port_{0};
  struct Net;
  std::unique_ptr<Net> net_;
  std::thread accept_thread_;
  std::thread render_thread_;
  std::thread feed_thread_;
};

}  // namespace lumino::service
