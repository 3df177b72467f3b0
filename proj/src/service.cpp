#include "lumino/service.hpp"

#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "lumino/error.hpp"

namespace lumino::service {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct Server::Net {
  net::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
};

struct Server::Connection {
  std::optional<tcp::socket> socket;
  int fd = -1;
  std::thread thread;
  std::atomic<bool> done{false};
};

namespace {

constexpr std::size_t kMaxBody = std::size_t{256} << 20;

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string url_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
      out += static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2]));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::map<std::string, std::string> parse_query(std::string_view query) {
  std::map<std::string, std::string> params;
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto part = query.substr(0, amp);
    if (!part.empty()) {
      const auto eq = part.find('=');
      params[url_decode(part.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(part.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return params;
}

template <typename T>
T parse_number(const std::map<std::string, std::string>& params, const std::string& name) {
  const auto& s = params.at(name);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(Errc::InvalidArgument, "parameter " + name + " is not a number: " + s);
  }
  return v;
}

template <typename T>
std::optional<T> optional_number(const std::map<std::string, std::string>& params, const std::string& name) {
  if (!params.contains(name)) return std::nullopt;
  return parse_number<T>(params, name);
}

Response json_response(unsigned status, const json& body) { return Response{status, "application/json", body.dump()}; }

Response error_response(unsigned status, std::string_view message) {
  return json_response(status, json{{"error", message}});
}

unsigned status_for(Errc code) {
  switch (code) {
    case Errc::InvalidArgument:
    case Errc::OutOfRange:
    case Errc::Malformed:
    case Errc::MalformedKey:
    case Errc::WidthOverflow:
    case Errc::DimensionMismatch:
      return 400;
    default:
      return 500;
  }
}

// Window for animate mode: the scheme's bounds, or the span of the data.
std::pair<std::int64_t, std::int64_t> animation_window(const render::SchemeConfig& s,
                                                       const std::vector<ingest::TweetRecord>& recs) {
  std::int64_t lo = 0, hi = 0;
  if (!recs.empty()) {
    lo = recs.front().timestamp;  // sorted by timestamp
    hi = recs.back().timestamp;
  }
  const std::int64_t t0 = s.t0.value_or(lo);
  std::int64_t t1 = s.t1.value_or(hi);
  if (t1 <= t0) t1 = t0 + 1;
  return {t0, t1};
}

}  // namespace

void Subscriber::push(std::shared_ptr<const std::string> msg) {
  {
    std::lock_guard lk(mutex_);
    if (closed_) return;
    if (queue_.size() == kCapacity) {
      queue_.pop_front();
      ++dropped_;
    }
    queue_.push_back(std::move(msg));
  }
  cv_.notify_one();
}

std::shared_ptr<const std::string> Subscriber::pop() {
  std::unique_lock lk(mutex_);
  cv_.wait(lk, [&] { return closed_ || !queue_.empty(); });
  if (closed_) return nullptr;
  auto msg = std::move(queue_.front());
  queue_.pop_front();
  return msg;
}

void Subscriber::close() {
  {
    std::lock_guard lk(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::uint64_t Subscriber::dropped() const {
  std::lock_guard lk(mutex_);
  return dropped_;
}

Server::Server(ServerConfig config) : config_(std::move(config)), net_(std::make_unique<Net>()) {
  config_.validate();
  std::filesystem::create_directories(config_.data_dir);
  tables_ = std::make_unique<store::TableSet>(store_dir(config_.data_dir), config_.format);
  heightmap_ = gridmap::HeightGrid{config_.grid, std::vector<double>(config_.grid.cell_count(), 0.0)};
  if (const auto path = heightmap_path(config_.data_dir); std::filesystem::exists(path)) {
    std::ifstream in(path);
    heightmap_ = gridmap::read_heightmap_tsv(in, config_.grid);
  }
  const auto words = stopwords_path(config_.data_dir);
  stopwords_ = std::filesystem::exists(words) ? render::load_stopwords(words) : render::default_stopwords();
}

Server::~Server() { stop(); }

void Server::start() {
  std::lock_guard lk(run_mutex_);
  if (running_) return;
  boost::system::error_code ec;
  const auto addr = net::ip::make_address(config_.address, ec);
  if (ec) throw Error(Errc::BindFailure, "bad listen address " + config_.address);
  const tcp::endpoint endpoint(addr, config_.port);
  auto& acceptor = net_->acceptor.emplace(net_->ioc);
  acceptor.open(endpoint.protocol(), ec);
  if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acceptor.bind(endpoint, ec);
  if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    net_->acceptor.reset();
    throw Error(Errc::BindFailure, config_.address + ":" + std::to_string(config_.port) + ": " + ec.message());
  }
  bound_port_ = acceptor.local_endpoint().port();
  stopping_ = false;
  running_ = true;
  accept_thread_ = std::thread(&Server::accept_loop, this);
  render_thread_ = std::thread(&Server::render_loop, this);
  if (config_.feed) feed_thread_ = std::thread(&Server::feed_loop, this);
}

void Server::stop() {
  {
    std::lock_guard lk(run_mutex_);
    if (!running_ || stopping_) return;
    stopping_ = true;
  }
  run_cv_.notify_all();

  // shutdown(2) wakes a thread blocked in accept or recv on Linux.
  ::shutdown(net_->acceptor->native_handle(), SHUT_RDWR);
  accept_thread_.join();
  net_->acceptor.reset();

  {
    std::lock_guard lk(subs_mutex_);
    for (auto& sub : subscribers_) sub->close();
    subscribers_.clear();
  }
  std::list<std::unique_ptr<Connection>> conns;
  {
    std::lock_guard lk(conn_mutex_);
    for (auto& c : connections_) {
      if (!c->done) ::shutdown(c->fd, SHUT_RDWR);
    }
    conns.swap(connections_);
  }
  for (auto& c : conns) c->thread.join();
  render_thread_.join();
  if (feed_thread_.joinable()) feed_thread_.join();

  {
    std::lock_guard lk(run_mutex_);
    running_ = false;
  }
  run_cv_.notify_all();
}

void Server::wait() {
  std::unique_lock lk(run_mutex_);
  run_cv_.wait(lk, [&] { return !running_ || stopping_; });
}

void Server::accept_loop() {
  for (;;) {
    tcp::socket socket(net_->ioc);
    boost::system::error_code ec;
    net_->acceptor->accept(socket, ec);
    if (stopping_) return;
    if (ec) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      continue;
    }
    std::lock_guard lk(conn_mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if ((*it)->done) {
        (*it)->thread.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
    auto conn = std::make_unique<Connection>();
    conn->fd = socket.native_handle();
    conn->socket.emplace(std::move(socket));
    Connection& ref = *conn;
    connections_.push_back(std::move(conn));
    ref.thread = std::thread([this, &ref] {
      serve_connection(ref);
      ref.done = true;
    });
  }
}

void Server::serve_connection(Connection& conn) {
  auto& socket = *conn.socket;
  beast::flat_buffer buffer;
  beast::error_code ec;
  for (;;) {
    http::request_parser<http::string_body> parser;
    parser.body_limit(kMaxBody);
    http::read(socket, buffer, parser, ec);
    if (ec) return;
    auto req = parser.release();

    if (websocket::is_upgrade(req)) {
      if (req.target() != "/api/frames") return;
      websocket::stream<tcp::socket> ws(std::move(socket));
      ws.accept(req, ec);
      if (ec) return;
      ws.text(true);
      const auto sub = subscribe();
      while (const auto msg = sub->pop()) {
        ws.write(net::buffer(*msg), ec);
        if (ec) break;
      }
      unsubscribe(sub);
      ws.close(websocket::close_code::going_away, ec);
      return;
    }

    Response r;
    try {
      const auto method = req.method_string();
      const auto target = req.target();
      r = handle(std::string_view(method.data(), method.size()), std::string_view(target.data(), target.size()),
                 req.body());
    } catch (const std::exception& e) {
      r = error_response(500, e.what());
    }
    http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
    res.set(http::field::server, "lumino");
    res.set(http::field::content_type, r.content_type);
    res.keep_alive(req.keep_alive());
    res.body() = std::move(r.body);
    res.prepare_payload();
    http::write(socket, res, ec);
    if (ec || !res.keep_alive()) {
      socket.shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
  }
}

Response Server::handle(std::string_view method, std::string_view target, std::string_view body) {
  const auto qpos = target.find('?');
  const auto path = target.substr(0, qpos);
  const auto query = qpos == std::string_view::npos ? std::string_view{} : target.substr(qpos + 1);
  const bool get = method == "GET";
  try {
    if (path == "/api/stats") {
      if (get) return json_response(200, stats_json());
    } else if (path == "/api/ingest") {
      if (method == "POST") return json_response(200, to_json(ingest_text(body)));
    } else if (path == "/api/tweets") {
      if (get) return handle_tweets(query);
    } else if (path == "/api/heightmap") {
      if (get) return json_response(200, to_json(heightmap_));
    } else if (path == "/api/scheme") {
      if (get) return json_response(200, to_json(scheme()));
      if (method == "PUT") return handle_scheme_put(body);
    } else if (path == "/api/topics") {
      if (get) return handle_topics(query);
    } else {
      return error_response(404, "no such endpoint");
    }
    return error_response(405, "method not allowed");
  } catch (const Error& e) {
    return error_response(status_for(e.code()), e.what());
  }
}

Response Server::handle_tweets(std::string_view query) {
  const auto params = parse_query(query);
  assoc::Query q{config_.grid.bbox, std::nullopt, std::nullopt, std::nullopt};
  const int corners = params.contains("lat0") + params.contains("lat1") + params.contains("lon0") +
                      params.contains("lon1");
  if (corners == 4) {
    q.bbox = geokey::BBox::from_corners(parse_number<double>(params, "lat0"), parse_number<double>(params, "lon0"),
                                        parse_number<double>(params, "lat1"), parse_number<double>(params, "lon1"));
  } else if (corners != 0) {
    throw Error(Errc::InvalidArgument, "lat0, lat1, lon0 and lon1 go together");
  }
  q.t0 = optional_number<std::int64_t>(params, "from");
  q.t1 = optional_number<std::int64_t>(params, "to");
  if (const auto it = params.find("q"); it != params.end() && !it->second.empty()) q.keyword = it->second;
  json out = json::array();
  for (const auto& rec : assoc::query_bbox(*tables_, q)) out.push_back(to_json(rec));
  return json_response(200, out);
}

Response Server::handle_topics(std::string_view query) {
  const auto params = parse_query(query);
  const auto k = optional_number<std::int64_t>(params, "k").value_or(3);
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1");
  const auto recs = window_records(scheme());
  const auto terms = render::top_terms(*recs, config_.grid, static_cast<std::size_t>(k), stopwords_);
  return json_response(200, json{{"nrows", config_.grid.nrows},
                                 {"ncols", config_.grid.ncols},
                                 {"k", k},
                                 {"cells", to_json(terms)}});
}

Response Server::handle_scheme_put(std::string_view body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return error_response(400, "body is not valid JSON");
  std::lock_guard lk(scheme_mutex_);
  scheme_ = merge_scheme(scheme_, j);
  ++scheme_generation_;
  return json_response(200, to_json(scheme_));
}

json Server::stats_json() const {
  json ingest;
  {
    std::lock_guard lk(ingest_mutex_);
    ingest = to_json(ingest_stats_);
  }
  const auto s = tables_->stats();
  json cells;
  for (const auto t : store::kAllTables) cells[std::string(store::table_name(t))] = s.cells[static_cast<int>(t)];
  std::size_t subscribers = 0;
  {
    std::lock_guard lk(subs_mutex_);
    subscribers = subscribers_.size();
  }
  return {{"ingest", ingest},
          {"store", {{"records", s.records}, {"cells", cells}, {"segments", s.segments}}},
          {"subscribers", subscribers}};
}

ingest::IngestStats Server::ingest_text(std::string_view text) {
  std::lock_guard lk(ingest_mutex_);
  std::ofstream archive(archive_path(config_.data_dir), std::ios::app);
  std::istringstream in{std::string(text)};
  const auto stats = ingest::ingest_stream(in, [&](const ingest::TweetRecord& rec) {
    tables_->put_record(rec);
    archive << ingest::to_tsv(rec, config_.format.frac_digits);
  });
  ingest_stats_ += stats;
  return stats;
}

render::SchemeConfig Server::scheme() const {
  std::lock_guard lk(scheme_mutex_);
  return scheme_;
}

void Server::set_scheme(const render::SchemeConfig& scheme) {
  scheme.validate();
  std::lock_guard lk(scheme_mutex_);
  scheme_ = scheme;
  ++scheme_generation_;
}

Server::RecordList Server::window_records(const render::SchemeConfig& scheme) {
  const auto snap = tables_->snapshot();
  const CacheKey key{snap.version(), scheme.t0, scheme.t1};
  {
    std::lock_guard lk(cache_mutex_);
    if (cache_key_ == key) return cache_records_;
  }
  const assoc::Query q{config_.grid.bbox, scheme.t0, scheme.t1, std::nullopt};
  auto recs = std::make_shared<const std::vector<ingest::TweetRecord>>(
      assoc::query_bbox(snap, q, tables_->format()));
  std::lock_guard lk(cache_mutex_);
  cache_key_ = key;
  cache_records_ = recs;
  return recs;
}

render::FrameBuffer Server::render_frame(const render::SchemeConfig& s, std::size_t tick) {
  const auto& grid = config_.grid;
  switch (s.mode) {
    case render::Mode::Height:
      return render::render_height(heightmap_, s.colormap);
    case render::Mode::Density:
    case render::Mode::Topics:
      return render::render_density(*window_records(s), grid, s.colormap, s.log_scale);
    case render::Mode::Keyword: {
      const auto base = render::render_height(heightmap_, s.colormap);
      return render::render_keyword(*window_records(s), s.keyword, grid, base, s.alpha, s.colormap, s.log_scale);
    }
    case render::Mode::Animate: {
      const auto recs = window_records(s);
      const auto [t0, t1] = animation_window(s, *recs);
      auto frames = render::animate(*recs, grid, t0, t1, static_cast<std::size_t>(s.bins), s.colormap, s.log_scale);
      return std::move(frames[tick % frames.size()]);
    }
  }
  return render::FrameBuffer(grid.ncols, grid.nrows, s.colormap.low);
}

void Server::broadcast(render::FrameBuffer frame, std::uint64_t generation) {
  // Holding the scheme lock keeps a frame of a replaced scheme from going
  // out after the replacement has been acknowledged.
  std::lock_guard lk(scheme_mutex_);
  if (generation != scheme_generation_) return;
  frame.seq = next_seq_++;
  const auto msg = std::make_shared<const std::string>(frame_message(frame));
  std::lock_guard subs(subs_mutex_);
  for (auto& sub : subscribers_) sub->push(msg);
}

void Server::render_loop() {
  std::size_t tick = 0;
  std::uint64_t last_generation = 0;
  const auto period = std::chrono::milliseconds(config_.frame_period_ms);
  for (;;) {
    render::SchemeConfig s;
    std::uint64_t generation = 0;
    {
      std::lock_guard lk(scheme_mutex_);
      s = scheme_;
      generation = scheme_generation_;
    }
    if (generation != last_generation) tick = 0;
    last_generation = generation;
    try {
      broadcast(render_frame(s, tick), generation);
    } catch (const std::exception& e) {
      std::cerr << "render: " << e.what() << '\n';
    }
    ++tick;
    std::unique_lock lk(run_mutex_);
    if (run_cv_.wait_for(lk, period, [&] { return stopping_.load(); })) return;
  }
}

void Server::feed_loop() {
  const auto period = std::chrono::milliseconds(config_.frame_period_ms);
  std::ifstream in;
  std::string pending;
  for (;;) {
    if (!in.is_open()) in.open(*config_.feed, std::ios::binary);
    if (in.is_open()) {
      char buf[1 << 14];
      while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        pending.append(buf, static_cast<std::size_t>(in.gcount()));
        if (in.eof()) break;
      }
      in.clear();
      if (const auto nl = pending.rfind('\n'); nl != std::string::npos) {
        try {
          ingest_text(std::string_view(pending).substr(0, nl + 1));
        } catch (const std::exception& e) {
          std::cerr << "feed: " << e.what() << '\n';
        }
        pending.erase(0, nl + 1);
      }
    }
    std::unique_lock lk(run_mutex_);
    if (run_cv_.wait_for(lk, period, [&] { return stopping_.load(); })) return;
  }
}

std::shared_ptr<Subscriber> Server::subscribe() {
  auto sub = std::make_shared<Subscriber>();
  std::lock_guard lk(subs_mutex_);
  if (stopping_) {
    sub->close();
  } else {
    subscribers_.push_back(sub);
  }
  return sub;
}

void Server::unsubscribe(const std::shared_ptr<Subscriber>& sub) {
  std::lock_guard lk(subs_mutex_);
  std::erase(subscribers_, sub);
}

}  // namespace lumino::service
