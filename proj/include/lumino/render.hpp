#pragma once

// Frame rendering. One pixel per grid cell; pixels are row-major RGB8
// starting at grid row 0 (the southern edge).

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lumino/gridmap.hpp"
#include "lumino/ingest.hpp"

namespace lumino::render {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Colormap {
  Rgb low{0, 0, 64};
  Rgb high{255, 255, 0};

  friend bool operator==(const Colormap&, const Colormap&) = default;
};

struct FrameBuffer {
  int width = 0;   // grid columns
  int height = 0;  // grid rows
  std::vector<std::uint8_t> pixels;
  std::uint64_t seq = 0;

  FrameBuffer() = default;
  FrameBuffer(int w, int h, Rgb fill = {});

  Rgb at(int row, int col) const;
  void set(int row, int col, Rgb c);
  /// Pixel equality, ignoring seq.
  bool same_pixels(const FrameBuffer& other) const {
    return width == other.width && height == other.height && pixels == other.pixels;
  }
};

enum class Mode { Height, Density, Keyword, Topics, Animate };

std::string_view mode_name(Mode mode) noexcept;
std::optional<Mode> parse_mode(std::string_view name) noexcept;

struct SchemeConfig {
  Mode mode = Mode::Height;
  std::string keyword;
  std::optional<std::int64_t> t0;  // unbounded when absent
  std::optional<std::int64_t> t1;
  int bins = 12;
  double alpha = 0.5;
  Colormap colormap;
  bool log_scale = false;

  /// Throws Errc::InvalidArgument.
  void validate() const;

  friend bool operator==(const SchemeConfig&, const SchemeConfig&) = default;
};

/// Colour at position t in [0, 1] along the map. Each channel moves from low
/// by the rounded signed offset (high - low) * t, ties away from zero.
Rgb interpolate(const Colormap& cmap, double t);

FrameBuffer render_height(const gridmap::HeightGrid& grid, const Colormap& cmap = {});

/// Records per cell (row-major); records outside the grid box are skipped.
std::vector<std::uint64_t> bin_counts(std::span<const ingest::TweetRecord> recs,
                                      const gridmap::GridSpec& spec);

/// Colours counts against `max_count` (linear or ln(1 + c) scaling).
FrameBuffer render_counts(std::span<const std::uint64_t> counts, const gridmap::GridSpec& spec,
                          const Colormap& cmap, bool log_scale, std::uint64_t max_count);

FrameBuffer render_density(std::span<const ingest::TweetRecord> recs,
                           const gridmap::GridSpec& spec, const Colormap& cmap = {},
                           bool log_scale = false);

/// round((1 - alpha) * base + alpha * overlay) per channel, halves rounded up.
/// Throws Errc::DimensionMismatch.
FrameBuffer composite(const FrameBuffer& base, const FrameBuffer& overlay, double alpha);

std::vector<ingest::TweetRecord> filter_keyword(std::span<const ingest::TweetRecord> recs,
                                                std::string_view keyword);

/// Density of the keyword matches composited over `base`.
FrameBuffer render_keyword(std::span<const ingest::TweetRecord> recs, std::string_view keyword,
                           const gridmap::GridSpec& spec, const FrameBuffer& base, double alpha,
                           const Colormap& cmap = {}, bool log_scale = false);

struct TermCount {
  std::string term;
  std::uint64_t count = 0;

  friend bool operator==(const TermCount&, const TermCount&) = default;
};

/// Per cell (row-major), the k most frequent non-stopword tokens ordered by
/// count descending then term ascending.
std::vector<std::vector<TermCount>> top_terms(std::span<const ingest::TweetRecord> recs,
                                              const gridmap::GridSpec& spec, std::size_t k,
                                              const std::set<std::string>& stopwords);

/// Fifty common English words.
const std::set<std::string>& default_stopwords();
/// One word per line; '#' starts a comment.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

/// Bin of `ts` when [t0, t1] is cut into `bins` half-open intervals (the last
/// one closed at t1); nullopt outside the window.
std::optional<std::size_t> animation_bin(std::int64_t ts, std::int64_t t0, std::int64_t t1,
                                         std::size_t bins);

/// One density frame per bin, all normalised by the largest cell count over
/// every bin.
std::vector<FrameBuffer> animate(std::span<const ingest::TweetRecord> recs,
                                 const gridmap::GridSpec& spec, std::int64_t t0, std::int64_t t1,
                                 std::size_t bins, const Colormap& cmap = {},
                                 bool log_scale = false);

/// Binary PPM, written north-up (grid row 0 is the bottom image row).
void write_ppm(std::ostream& out, const FrameBuffer& frame);
FrameBuffer read_ppm(std::istream& in);

}  // namespace lumino::render
