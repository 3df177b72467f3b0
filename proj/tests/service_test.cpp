#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "lumino/error.hpp"
#include "lumino/service.hpp"
#include "net_client.hpp"
#include "test_util.hpp"

using namespace lumino;
using namespace lumino::service;
using ingest::TweetRecord;

namespace {

ServerConfig test_config(const std::filesystem::path& dir) {
  ServerConfig c;
  c.port = 0;
  c.data_dir = dir;
  c.grid = gridmap::GridSpec{geokey::BBox{42.350, 42.357, -71.099, -71.090}, 7, 9};
  c.frame_period_ms = 10;
  return c;
}

std::vector<TweetRecord> seeded_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const geokey::BBox near_mit{42.345, 42.362, -71.104, -71.085};
  std::vector<TweetRecord> recs;
  for (std::size_t i = 0; i < n; ++i) recs.push_back(testutil::random_record(rng, near_mit, "t" + std::to_string(i)));
  return recs;
}

std::string feed_text(const std::vector<TweetRecord>& recs) {
  std::string out;
  for (const auto& r : recs) out += testutil::feed_line(r) + "\n";
  return out;
}

std::vector<TweetRecord> records_of(const std::string& body) {
  std::vector<TweetRecord> out;
  for (const auto& j : json::parse(body)) out.push_back(record_from_json(j));
  return out;
}

template <typename Pred>
bool eventually(Pred pred) {
  for (int i = 0; i < 500; ++i) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return false;
}

}  // namespace

TEST(Config, JsonRoundTripAndValidation) {
  ServerConfig c;
  c.port = 9001;
  c.feed = "/tmp/feed.jsonl";
  c.frame_period_ms = 250;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(back.port, 9001);
  EXPECT_EQ(back.feed, c.feed);
  EXPECT_EQ(back.frame_period_ms, 250);
  EXPECT_EQ(back.grid, c.grid);
  EXPECT_EQ(back.data_dir, c.data_dir);

  EXPECT_THROW(config_from_json(json{{"frame_period_ms", 9}}), Error);
  EXPECT_THROW(config_from_json(json{{"port", "x"}}), Error);
  EXPECT_THROW(config_from_json(json{{"grid", {{"nrows", 0}}}}), Error);
  EXPECT_EQ(config_from_json(json::object()).frame_period_ms, 100);
}

TEST(Config, LoadFromFile) {
  testutil::TempDir dir;
  std::ofstream(dir / "server.json") << R"({"port": 0, "data_dir": "/var/lumino", "format": {"frac_digits": 4}})";
  const auto c = load_config(dir / "server.json");
  EXPECT_EQ(c.data_dir, "/var/lumino");
  EXPECT_EQ(c.format.frac_digits, 4);
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(load_config(dir / "bad.json"), Error);
  EXPECT_THROW(load_config(dir / "missing.json"), Error);
}

TEST(SchemeJson, PartialMergeAndRejects) {
  render::SchemeConfig base;
  base.keyword = "mit";
  const auto merged = merge_scheme(base, json{{"mode", "density"}, {"alpha", 0.25}, {"t0", 10}});
  EXPECT_EQ(merged.mode, render::Mode::Density);
  EXPECT_EQ(merged.alpha, 0.25);
  EXPECT_EQ(merged.t0, 10);
  EXPECT_EQ(merged.keyword, "mit");
  EXPECT_EQ(merge_scheme(merged, json{{"t0", nullptr}}).t0, std::nullopt);
  EXPECT_EQ(merge_scheme(base, to_json(merged)), merged);

  for (const json bad : {json{{"mode", "sparkle"}}, json{{"bins", 0}}, json{{"alpha", 2}},
                         json{{"t0", 5}, {"t1", 4}}, json{{"colormap", {{"low", {0, 0, 256}}}}},
                         json{{"bins", "3"}}, json{{"colour", 1}}, json::array()}) {
    EXPECT_THROW(merge_scheme(base, bad), Error) << bad.dump();
  }
}

TEST(FrameMessage, RoundTrip) {
  render::FrameBuffer f(9, 7);
  std::mt19937_64 rng(3);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng());
  f.seq = 42;
  const auto back = parse_frame_message(frame_message(f));
  EXPECT_EQ(back.seq, 42u);
  EXPECT_TRUE(back.same_pixels(f));
  EXPECT_THROW(parse_frame_message(R"({"seq":1,"w":2,"h":2,"pix":"AAAA"})"), Error);
}

TEST(Subscriber, DropsOldestWhenFull) {
  Subscriber sub;
  for (int i = 1; i <= 6; ++i) sub.push(std::make_shared<const std::string>(std::to_string(i)));
  EXPECT_EQ(sub.dropped(), 2u);
  for (int i = 3; i <= 6; ++i) EXPECT_EQ(*sub.pop(), std::to_string(i));
  sub.close();
  EXPECT_EQ(sub.pop(), nullptr);
}

TEST(Handle, FreshServerReportsZeroCounts) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  const auto r = server.handle("GET", "/api/stats", "");
  ASSERT_EQ(r.status, 200u);
  const auto j = json::parse(r.body);
  EXPECT_EQ(j["ingest"], to_json(ingest::IngestStats{}));
  EXPECT_EQ(j["store"]["records"], 0);
  for (const auto& [name, n] : j["store"]["cells"].items()) EXPECT_EQ(n, 0) << name;
}

TEST(Handle, IngestCountsKeptRecords) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  const std::string body =
      R"({"id":"1","ts":1388534400,"user":"alice","text":"hello mit","geo":[-71.092,42.355]})"
      "\n"
      R"({"id":"2","ts":1388534401,"user":"bob","text":"nowhere","geo":null})"
      "\n"
      "{not json\n";
  const auto r = server.handle("POST", "/api/ingest", body);
  ASSERT_EQ(r.status, 200u);
  EXPECT_EQ(json::parse(r.body)["records_kept"], 1);
  const auto stats = json::parse(server.handle("GET", "/api/stats", "").body);
  EXPECT_EQ(stats["ingest"]["records_kept"], 1);
  EXPECT_EQ(stats["ingest"]["lines_read"], 3);
  EXPECT_EQ(stats["ingest"]["records_dropped_no_geo"], 1);
  EXPECT_EQ(stats["ingest"]["records_dropped_malformed"], 1);
  EXPECT_EQ(stats["store"]["records"], 1);
  std::ifstream archive(archive_path(dir.path()));
  EXPECT_EQ(ingest::read_tsv(archive).size(), 1u);
}

TEST(Handle, TweetsMatchLibraryQuery) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  const auto recs = seeded_records(800, 11);
  server.ingest_text(feed_text(recs));

  std::mt19937_64 rng(12);
  for (int i = 0; i < 25; ++i) {
    const double la = testutil::uniform(rng, 42.345, 42.362), lb = testutil::uniform(rng, 42.345, 42.362);
    const double oa = testutil::uniform(rng, -71.104, -71.085), ob = testutil::uniform(rng, -71.104, -71.085);
    assoc::Query q{geokey::BBox::from_corners(la, oa, lb, ob), std::nullopt, std::nullopt, std::nullopt};
    std::string target = "/api/tweets?lat0=" + std::to_string(la) + "&lat1=" + std::to_string(lb) +
                         "&lon0=" + std::to_string(oa) + "&lon1=" + std::to_string(ob);
    // to_string keeps six decimals; mirror that in the library call.
    q.bbox = geokey::BBox::from_corners(std::stod(std::to_string(la)), std::stod(std::to_string(oa)),
                                        std::stod(std::to_string(lb)), std::stod(std::to_string(ob)));
    if (i % 3 == 1) {
      q.t0 = 1388534400 + 86400;
      q.t1 = 1388534400 + 4 * 86400;
      target += "&from=" + std::to_string(*q.t0) + "&to=" + std::to_string(*q.t1);
    }
    if (i % 4 == 2) {
      q.keyword = "mit";
      target += "&q=MIT";
    }
    const auto r = server.handle("GET", target, "");
    ASSERT_EQ(r.status, 200u) << r.body;
    EXPECT_EQ(records_of(r.body), assoc::query_bbox(server.tables(), q)) << target;
  }
  const auto all = server.handle("GET", "/api/tweets", "");
  assoc::Query whole{server.config().grid.bbox, std::nullopt, std::nullopt, std::nullopt};
  EXPECT_EQ(records_of(all.body), assoc::query_bbox(server.tables(), whole));
}

TEST(Handle, RejectsBadRequests) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  EXPECT_EQ(server.handle("GET", "/api/nothing", "").status, 404u);
  EXPECT_EQ(server.handle("DELETE", "/api/stats", "").status, 405u);
  EXPECT_EQ(server.handle("GET", "/api/tweets?lat0=1", "").status, 400u);
  EXPECT_EQ(server.handle("GET", "/api/tweets?lat0=a&lat1=1&lon0=1&lon1=2", "").status, 400u);
  EXPECT_EQ(server.handle("GET", "/api/tweets?from=5&to=4", "").status, 400u);
  EXPECT_EQ(server.handle("GET", "/api/topics?k=0", "").status, 400u);
  EXPECT_EQ(server.handle("PUT", "/api/scheme", "{").status, 400u);
  const auto before = server.scheme();
  const auto r = server.handle("PUT", "/api/scheme", R"({"mode":"density","bins":0})");
  EXPECT_EQ(r.status, 400u);
  EXPECT_NE(json::parse(r.body)["error"].get<std::string>().find("bins"), std::string::npos);
  EXPECT_EQ(server.scheme(), before);
}

TEST(Handle, SchemeGetPut) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  EXPECT_EQ(json::parse(server.handle("GET", "/api/scheme", "").body), to_json(render::SchemeConfig{}));
  const auto r = server.handle("PUT", "/api/scheme", R"({"mode":"keyword","keyword":"mit","alpha":1})");
  ASSERT_EQ(r.status, 200u);
  EXPECT_EQ(server.scheme().mode, render::Mode::Keyword);
  EXPECT_EQ(json::parse(server.handle("GET", "/api/scheme", "").body), json::parse(r.body));
}

TEST(Handle, TopicsMatchLibrary) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  const auto recs = seeded_records(300, 21);
  server.ingest_text(feed_text(recs));
  server.handle("PUT", "/api/scheme", R"({"t0":1388534400,"t1":1388707200})");
  const auto j = json::parse(server.handle("GET", "/api/topics?k=2", "").body);
  const assoc::Query q{server.config().grid.bbox, 1388534400, 1388707200, std::nullopt};
  const auto expected = render::top_terms(assoc::query_bbox(server.tables(), q), server.config().grid, 2,
                                          render::default_stopwords());
  EXPECT_EQ(j["cells"], to_json(expected));
  EXPECT_EQ(j["nrows"], 7);
  EXPECT_EQ(j["ncols"], 9);
}

TEST(Handle, HeightmapLoadedFromDataDir) {
  testutil::TempDir dir;
  const auto cfg = test_config(dir.path());
  gridmap::HeightGrid grid{cfg.grid, {}};
  for (std::size_t i = 0; i < cfg.grid.cell_count(); ++i) grid.heights.push_back(static_cast<double>(i) / 4);
  std::ofstream(heightmap_path(dir.path())) << [&] {
    std::ostringstream ss;
    gridmap::write_heightmap_tsv(ss, grid);
    return ss.str();
  }();
  Server server(cfg);
  const auto j = json::parse(server.handle("GET", "/api/heightmap", "").body);
  EXPECT_EQ(j["nrows"], 7);
  EXPECT_EQ(j["ncols"], 9);
  EXPECT_EQ(j["heights"].get<std::vector<double>>(), grid.heights);
  EXPECT_EQ(j["bbox"]["lat_min"], 42.350);

  auto wrong = cfg;
  wrong.grid.ncols = 8;
  EXPECT_THROW(Server{wrong}, Error);
}

TEST(RenderFrame, ModesUseLibraryRenderers) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  const auto recs = seeded_records(400, 31);
  server.ingest_text(feed_text(recs));
  const assoc::Query q{server.config().grid.bbox, std::nullopt, std::nullopt, std::nullopt};
  const auto window = assoc::query_bbox(server.tables(), q);
  const auto& grid = server.config().grid;

  render::SchemeConfig s;
  s.mode = render::Mode::Density;
  EXPECT_TRUE(server.render_frame(s).same_pixels(render::render_density(window, grid)));
  s.mode = render::Mode::Keyword;
  s.keyword = "mit";
  s.alpha = 1.0;
  EXPECT_TRUE(server.render_frame(s).same_pixels(render::render_density(render::filter_keyword(window, "mit"), grid)));
  s.mode = render::Mode::Animate;
  s.bins = 3;
  s.t0 = 1388534400;
  s.t1 = 1388534400 + 7 * 86400;
  const auto frames = render::animate(window, grid, *s.t0, *s.t1, 3);
  for (std::size_t tick = 0; tick < 6; ++tick) {
    EXPECT_TRUE(server.render_frame(s, tick).same_pixels(frames[tick % 3])) << tick;
  }
}

TEST(Live, HttpAndFrameStream) {
  testutil::TempDir dir;
  auto cfg = test_config(dir.path());
  gridmap::HeightGrid grid{cfg.grid, {}};
  for (std::size_t i = 0; i < cfg.grid.cell_count(); ++i) grid.heights.push_back(static_cast<double>(i % 11));
  {
    std::ofstream out(heightmap_path(dir.path()));
    gridmap::write_heightmap_tsv(out, grid);
  }
  Server server(cfg);
  server.handle("PUT", "/api/scheme", R"({"mode":"density"})");
  server.start();
  ASSERT_NE(server.port(), 0);

  const auto stats = testutil::http_call(server.port(), "GET", "/api/stats");
  EXPECT_EQ(stats.status, 200u);
  EXPECT_EQ(json::parse(stats.body)["ingest"]["records_kept"], 0);

  const auto recs = seeded_records(200, 41);
  const auto ingested = testutil::http_call(server.port(), "POST", "/api/ingest", feed_text(recs));
  EXPECT_EQ(json::parse(ingested.body)["records_kept"], 200);

  const auto put = testutil::http_call(server.port(), "PUT", "/api/scheme", R"({"mode":"height"})");
  ASSERT_EQ(put.status, 200u);
  testutil::FrameClient client(server.port());
  const auto first = parse_frame_message(client.read());
  const auto expected = render::render_height(server.heightmap(), render::Colormap{});
  EXPECT_EQ(first.width, 9);
  EXPECT_EQ(first.height, 7);
  EXPECT_EQ(first.pixels, expected.pixels);

  std::uint64_t last = first.seq;
  for (int i = 0; i < 5; ++i) {
    const auto f = parse_frame_message(client.read());
    EXPECT_GT(f.seq, last);
    last = f.seq;
  }

  const auto tweets = testutil::http_call(server.port(), "GET", "/api/tweets?lat0=42.350&lat1=42.357&lon0=-71.099&lon1=-71.090");
  const assoc::Query q{geokey::BBox{42.350, 42.357, -71.099, -71.090}, std::nullopt, std::nullopt, std::nullopt};
  EXPECT_EQ(records_of(tweets.body), assoc::query_bbox(server.tables(), q));
  server.stop();
}

TEST(Live, SchemeChangeIsNeverFollowedByStaleFrames) {
  testutil::TempDir dir;
  Server server(test_config(dir.path()));
  server.ingest_text(feed_text(seeded_records(200, 51)));
  server.start();
  testutil::FrameClient client(server.port());
  const auto density = render::render_density(
      assoc::query_bbox(server.tables(), assoc::Query{server.config().grid.bbox, {}, {}, {}}), server.config().grid);
  const auto height = render::render_height(server.heightmap());
  for (int round = 0; round < 6; ++round) {
    const bool to_density = round % 2 == 0;
    ASSERT_EQ(testutil::http_call(server.port(), "PUT", "/api/scheme",
                                  to_density ? R"({"mode":"density"})" : R"({"mode":"height"})")
                  .status,
              200u);
    // Frames queued before the change may still arrive; once a frame of the
    // new scheme shows up, every later frame must use it too.
    const auto& want = to_density ? density : height;
    bool switched = false;
    for (int i = 0; i < 12; ++i) {
      const auto f = parse_frame_message(client.read());
      if (f.pixels == want.pixels) switched = true;
      else EXPECT_FALSE(switched) << "stale frame after switch, round " << round;
    }
    EXPECT_TRUE(switched);
  }
  server.stop();
}

TEST(Live, PersistsAcrossRestart) {
  testutil::TempDir dir;
  std::string before;
  {
    Server server(test_config(dir.path()));
    server.start();
    testutil::http_call(server.port(), "POST", "/api/ingest", feed_text(seeded_records(150, 61)));
    before = testutil::http_call(server.port(), "GET", "/api/tweets").body;
  }
  Server server(test_config(dir.path()));
  server.start();
  EXPECT_EQ(testutil::http_call(server.port(), "GET", "/api/tweets").body, before);
  EXPECT_EQ(json::parse(before).size(), json::parse(server.handle("GET", "/api/tweets", "").body).size());
}

TEST(Live, SecondBindFails) {
  testutil::TempDir a, b;
  Server first(test_config(a.path()));
  first.start();
  auto cfg = test_config(b.path());
  cfg.port = first.port();
  Server second(cfg);
  try {
    second.start();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BindFailure);
  }
}

TEST(Live, TailsFeedFile) {
  testutil::TempDir dir;
  auto cfg = test_config(dir.path());
  cfg.feed = dir / "feed.jsonl";
  const auto recs = seeded_records(30, 71);
  {
    std::ofstream out(*cfg.feed);
    out << feed_text(std::vector<TweetRecord>(recs.begin(), recs.begin() + 10));
    // Unterminated line waits for its newline.
    out << testutil::feed_line(recs[10]).substr(0, 20);
  }
  Server server(cfg);
  server.start();
  const auto kept = [&] { return json::parse(server.handle("GET", "/api/stats", "").body)["ingest"]["records_kept"].get<int>(); };
  ASSERT_TRUE(eventually([&] { return kept() == 10; }));
  {
    std::ofstream out(*cfg.feed, std::ios::app);
    out << testutil::feed_line(recs[10]).substr(20) << "\n";
    out << feed_text(std::vector<TweetRecord>(recs.begin() + 11, recs.end()));
  }
  ASSERT_TRUE(eventually([&] { return kept() == 30; }));
  EXPECT_EQ(json::parse(server.handle("GET", "/api/stats", "").body)["ingest"]["records_dropped_malformed"], 0);
}
