#include <gtest/gtest.h>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "lumino/service.hpp"
#include "net_client.hpp"
#include "test_util.hpp"

using namespace lumino;

extern char** environ;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
};

// Runs the CLI with `args`; stdout captured, stderr discarded.
RunResult run(const std::string& args) {
  const std::string cmd = std::string(LUMINO_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  RunResult r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::vector<ingest::TweetRecord> write_feed(const std::filesystem::path& path, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ingest::TweetRecord> recs;
  std::ofstream out(path);
  for (std::size_t i = 0; i < n; ++i) {
    recs.push_back(testutil::random_record(rng, geokey::BBox{42.345, 42.362, -71.104, -71.085}, "c" + std::to_string(i)));
    out << testutil::feed_line(recs.back()) << '\n';
    if (i % 7 == 0) out << R"({"id":"x","ts":1,"user":"u","text":"no geo","geo":null})" << '\n';
  }
  return recs;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").status, 1);
  EXPECT_EQ(run("--frobnicate").status, 1);
  EXPECT_EQ(run("query --bbox 1,2,3").status, 1);
  EXPECT_EQ(run("query --bbox 1,2,3,x").status, 1);
  EXPECT_EQ(run("query").status, 1);
  EXPECT_EQ(run("render --mode sparkle --out /tmp/x").status, 1);
  EXPECT_EQ(run("--help").status, 0);
}

TEST(Cli, DataErrorsExitTwo) {
  testutil::TempDir dir;
  EXPECT_EQ(run("--data " + q(dir.path()) + " ingest " + q(dir / "missing.jsonl")).status, 2);
  std::ofstream(dir / "cloud.txt") << "42.35 -71.09\n";
  EXPECT_EQ(run("--data " + q(dir.path()) + " heightmap " + q(dir / "cloud.txt")).status, 2);
  std::ofstream(dir / "bad.tsv") << "only\tthree\tfields\n";
  EXPECT_EQ(run("--data " + q(dir.path()) + " ingest --tsv " + q(dir / "bad.tsv")).status, 2);
}

TEST(Cli, IngestEmptyFile) {
  testutil::TempDir dir;
  std::ofstream(dir / "empty.jsonl").close();
  const auto r = run("--data " + q(dir.path()) + " ingest " + q(dir / "empty.jsonl"));
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("records_kept=0"), std::string::npos);
  store::TableSet tables(service::store_dir(dir.path()));
  EXPECT_EQ(tables.stats().records, 0u);
}

TEST(Cli, QueryMatchesLibrary) {
  testutil::TempDir dir;
  write_feed(dir / "feed.jsonl", 500, 5);
  const auto ingested = run("--data " + q(dir.path()) + " ingest " + q(dir / "feed.jsonl"));
  ASSERT_EQ(ingested.status, 0);
  EXPECT_NE(ingested.out.find("records_kept=500"), std::string::npos);

  const auto r = run("--data " + q(dir.path()) + " query --bbox 42.350,42.357,-71.099,-71.090");
  ASSERT_EQ(r.status, 0);
  const auto r2 = run("--data " + q(dir.path()) +
                      " query --bbox 42.352,42.356,-71.097,-71.091 --from 1388620800 --to 1388880000 --keyword mit");
  ASSERT_EQ(r2.status, 0);

  store::TableSet tables(service::store_dir(dir.path()));
  std::string expected, expected2;
  const auto all = assoc::query_bbox(tables, {geokey::BBox{42.350, 42.357, -71.099, -71.090}, {}, {}, {}});
  for (const auto& rec : all) expected += ingest::to_tsv(rec);
  for (const auto& rec :
       assoc::query_bbox(tables, {geokey::BBox{42.352, 42.356, -71.097, -71.091}, 1388620800, 1388880000, "mit"})) {
    expected2 += ingest::to_tsv(rec);
  }
  EXPECT_FALSE(all.empty());
  EXPECT_EQ(r.out, expected);
  EXPECT_EQ(r2.out, expected2);

  // The archive reloads into an equivalent store.
  testutil::TempDir copy;
  ASSERT_EQ(run("--data " + q(copy.path()) + " ingest --tsv " + q(service::archive_path(dir.path()))).status, 0);
  EXPECT_EQ(run("--data " + q(copy.path()) + " query --bbox 42.350,42.357,-71.099,-71.090").out, expected);
}

TEST(Cli, HeightmapMatchesLibrary) {
  testutil::TempDir dir;
  std::mt19937_64 rng(9);
  gridmap::PointCloud cloud;
  for (int i = 0; i < 3000; ++i) {
    cloud.points.push_back({testutil::uniform(rng, 42.350, 42.357), testutil::uniform(rng, -71.099, -71.090),
                            testutil::uniform(rng, 0, 30)});
  }
  {
    std::ofstream out(dir / "cloud.txt");
    gridmap::write_point_cloud(out, cloud);
  }
  ASSERT_EQ(run("--data " + q(dir.path()) + " heightmap " + q(dir / "cloud.txt")).status, 0);
  std::ifstream in(service::heightmap_path(dir.path()));
  const auto grid = gridmap::read_heightmap_tsv(in, gridmap::mit_campus_grid());
  EXPECT_EQ(grid.heights, gridmap::build_height_grid(cloud, gridmap::mit_campus_grid()).heights);
}

TEST(Cli, RenderWritesFrames) {
  testutil::TempDir dir;
  const auto recs = write_feed(dir / "feed.jsonl", 300, 6);
  ASSERT_EQ(run("--data " + q(dir.path()) + " ingest " + q(dir / "feed.jsonl")).status, 0);

  ASSERT_EQ(run("--data " + q(dir.path()) + " render --mode density --out " + q(dir / "density")).status, 0);
  std::ifstream in(dir / "density" / "frame_0000.ppm", std::ios::binary);
  const auto frame = render::read_ppm(in);
  const auto spec = gridmap::mit_campus_grid();
  std::vector<ingest::TweetRecord> rounded;
  {
    store::TableSet tables(service::store_dir(dir.path()));
    rounded = assoc::query_bbox(tables, {spec.bbox, {}, {}, {}});
  }
  EXPECT_TRUE(frame.same_pixels(render::render_density(rounded, spec)));

  ASSERT_EQ(run("--data " + q(dir.path()) + " render --mode animate --bins 4 --out " + q(dir / "anim")).status, 0);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(std::filesystem::exists(dir / "anim" / ("frame_000" + std::to_string(i) + ".ppm")));
  EXPECT_FALSE(std::filesystem::exists(dir / "anim" / "frame_0004.ppm"));
}

TEST(Cli, ServeAnswersAndStopsOnSigterm) {
  testutil::TempDir dir;
  int fds[2];
  ASSERT_EQ(::pipe(fds), 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], 2);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  const std::string data = dir.path().string();
  std::vector<std::string> args = {LUMINO_CLI, "--data", data, "serve", "--port", "0", "--period", "20"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  ASSERT_EQ(posix_spawn(&pid, LUMINO_CLI, &actions, nullptr, argv.data(), environ), 0);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);

  std::string line;
  char c;
  while (::read(fds[0], &c, 1) == 1 && c != '\n') line += c;
  ::close(fds[0]);
  const auto colon = line.rfind(':');
  ASSERT_NE(colon, std::string::npos) << line;
  const auto port = static_cast<std::uint16_t>(std::stoi(line.substr(colon + 1)));

  const auto stats = testutil::http_call(port, "GET", "/api/stats");
  EXPECT_EQ(stats.status, 200u);
  EXPECT_EQ(service::json::parse(stats.body)["store"]["records"], 0);

  ::kill(pid, SIGTERM);
  int status = 0;
  ASSERT_EQ(::waitpid(pid, &status, 0), pid);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
}
