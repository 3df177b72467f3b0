#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "lumino/geokey.hpp"
#include "lumino/ingest.hpp"

namespace lumino::testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "lumino-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// A coordinate already on the 3-decimal key grid.
inline double grid_coord(std::mt19937_64& rng, double lo, double hi) {
  return std::round(uniform(rng, lo, hi) * 1000.0) / 1000.0;
}

inline const std::vector<std::string>& sample_words() {
  static const std::vector<std::string> words = {
      "mit", "tech", "coffee", "lab", "dome", "river", "charles", "lecture", "pset", "hack",
      "Boston", "Kendall", "the", "a", "of", "snow", "sunny", "café", "東京", "tea"};
  return words;
}

/// Synthetic geo-tweet inside `box`, coordinates on the key grid.
inline ingest::TweetRecord random_record(std::mt19937_64& rng, const geokey::BBox& box,
                                         const std::string& id) {
  ingest::TweetRecord rec;
  rec.id = id;
  rec.timestamp = 1388534400 + std::uniform_int_distribution<int>(0, 86400 * 7)(rng);
  rec.lat = grid_coord(rng, box.lat_min, box.lat_max);
  rec.lon = grid_coord(rng, box.lon_min, box.lon_max);
  static const char* users[] = {"alice", "bob", "carol", "dave", "erin"};
  rec.user = users[std::uniform_int_distribution<int>(0, 4)(rng)];
  const auto& words = sample_words();
  const int n = std::uniform_int_distribution<int>(1, 6)(rng);
  for (int i = 0; i < n; ++i) {
    if (i) rec.text += (i % 3 == 0) ? ", " : " ";
    rec.text += words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
  }
  return rec;
}

/// The record as one line of the JSON feed (geo is [lon, lat]).
inline std::string feed_line(const ingest::TweetRecord& rec) {
  return nlohmann::json{{"id", rec.id},
                        {"ts", rec.timestamp},
                        {"user", rec.user},
                        {"text", rec.text},
                        {"geo", {rec.lon, rec.lat}}}
      .dump();
}

}  // namespace lumino::testutil
