#include "lumino/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "lumino/error.hpp"
#include "lumino/tokenize.hpp"

namespace lumino::render {
namespace {

std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

std::uint8_t lerp_channel(std::uint8_t lo, std::uint8_t hi, double t) {
  const double offset = (static_cast<double>(hi) - static_cast<double>(lo)) * t;
  return clamp_channel(static_cast<double>(lo) + std::round(offset));
}

std::size_t cell_offset(int row, int col, int width) {
  return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
          static_cast<std::size_t>(col)) * 3;
}

}  // namespace

FrameBuffer::FrameBuffer(int w, int h, Rgb fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

Rgb FrameBuffer::at(int row, int col) const {
  const std::size_t o = cell_offset(row, col, width);
  return Rgb{pixels[o], pixels[o + 1], pixels[o + 2]};
}

void FrameBuffer::set(int row, int col, Rgb c) {
  const std::size_t o = cell_offset(row, col, width);
  pixels[o] = c.r;
  pixels[o + 1] = c.g;
  pixels[o + 2] = c.b;
}

std::string_view mode_name(Mode mode) noexcept {
  switch (mode) {
    case Mode::Height: return "height";
    case Mode::Density: return "density";
    case Mode::Keyword: return "keyword";
    case Mode::Topics: return "topics";
    case Mode::Animate: return "animate";
  }
  return "height";
}

std::optional<Mode> parse_mode(std::string_view name) noexcept {
  for (const Mode m : {Mode::Height, Mode::Density, Mode::Keyword, Mode::Topics, Mode::Animate}) {
    if (mode_name(m) == name) return m;
  }
  return std::nullopt;
}

void SchemeConfig::validate() const {
  if (bins < 1) throw Error(Errc::InvalidArgument, "bins must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidArgument, "alpha outside [0, 1]");
  if (t0 && t1 && *t0 > *t1) throw Error(Errc::InvalidArgument, "time window has t0 > t1");
}

Rgb interpolate(const Colormap& cmap, double t) {
  t = std::clamp(t, 0.0, 1.0);
  return Rgb{lerp_channel(cmap.low.r, cmap.high.r, t), lerp_channel(cmap.low.g, cmap.high.g, t),
             lerp_channel(cmap.low.b, cmap.high.b, t)};
}

FrameBuffer render_height(const gridmap::HeightGrid& grid, const Colormap& cmap) {
  FrameBuffer frame(grid.spec.ncols, grid.spec.nrows, cmap.low);
  const double max_h = grid.max_height();
  if (max_h <= 0) return frame;
  for (int r = 0; r < grid.spec.nrows; ++r) {
    for (int c = 0; c < grid.spec.ncols; ++c) {
      frame.set(r, c, interpolate(cmap, grid.at(r, c) / max_h));
    }
  }
  return frame;
}

std::vector<std::uint64_t> bin_counts(std::span<const ingest::TweetRecord> recs,
                                      const gridmap::GridSpec& spec) {
  std::vector<std::uint64_t> counts(spec.cell_count(), 0);
  for (const auto& rec : recs) {
    if (const auto cell = gridmap::align(rec.lat, rec.lon, spec)) {
      ++counts[static_cast<std::size_t>(cell->row) * static_cast<std::size_t>(spec.ncols) +
               static_cast<std::size_t>(cell->col)];
    }
  }
  return counts;
}

FrameBuffer render_counts(std::span<const std::uint64_t> counts, const gridmap::GridSpec& spec,
                          const Colormap& cmap, bool log_scale, std::uint64_t max_count) {
  if (counts.size() != spec.cell_count()) {
    throw Error(Errc::DimensionMismatch, "count vector does not match the grid");
  }
  FrameBuffer frame(spec.ncols, spec.nrows, cmap.low);
  if (max_count == 0) return frame;
  const double denom =
      log_scale ? std::log1p(static_cast<double>(max_count)) : static_cast<double>(max_count);
  for (int r = 0; r < spec.nrows; ++r) {
    for (int c = 0; c < spec.ncols; ++c) {
      const std::uint64_t n = counts[static_cast<std::size_t>(r) * spec.ncols + c];
      if (n == 0) continue;
      const double v = log_scale ? std::log1p(static_cast<double>(n)) : static_cast<double>(n);
      frame.set(r, c, interpolate(cmap, v / denom));
    }
  }
  return frame;
}

FrameBuffer render_density(std::span<const ingest::TweetRecord> recs,
                           const gridmap::GridSpec& spec, const Colormap& cmap, bool log_scale) {
  const auto counts = bin_counts(recs, spec);
  const std::uint64_t max_count = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  return render_counts(counts, spec, cmap, log_scale, max_count);
}

FrameBuffer composite(const FrameBuffer& base, const FrameBuffer& overlay, double alpha) {
  if (base.width != overlay.width || base.height != overlay.height ||
      base.pixels.size() != overlay.pixels.size()) {
    throw Error(Errc::DimensionMismatch, "frames differ in size");
  }
  FrameBuffer out = base;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double v = (1.0 - alpha) * base.pixels[i] + alpha * overlay.pixels[i];
    out.pixels[i] = clamp_channel(std::floor(v + 0.5));
  }
  return out;
}

std::vector<ingest::TweetRecord> filter_keyword(std::span<const ingest::TweetRecord> recs,
                                                std::string_view keyword) {
  std::vector<ingest::TweetRecord> out;
  for (const auto& rec : recs) {
    if (matches_keyword(token_set(rec.text), keyword)) out.push_back(rec);
  }
  return out;
}

FrameBuffer render_keyword(std::span<const ingest::TweetRecord> recs, std::string_view keyword,
                           const gridmap::GridSpec& spec, const FrameBuffer& base, double alpha,
                           const Colormap& cmap, bool log_scale) {
  if (base.width != spec.ncols || base.height != spec.nrows) {
    throw Error(Errc::DimensionMismatch, "base frame does not match the grid");
  }
  const auto matches = filter_keyword(recs, keyword);
  return composite(base, render_density(matches, spec, cmap, log_scale), alpha);
}

std::vector<std::vector<TermCount>> top_terms(std::span<const ingest::TweetRecord> recs,
                                              const gridmap::GridSpec& spec, std::size_t k,
                                              const std::set<std::string>& stopwords) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be >= 1");
  std::vector<std::map<std::string, std::uint64_t>> freq(spec.cell_count());
  for (const auto& rec : recs) {
    const auto cell = gridmap::align(rec.lat, rec.lon, spec);
    if (!cell) continue;
    auto& f = freq[static_cast<std::size_t>(cell->row) * spec.ncols + cell->col];
    for (const auto& token : tokenize(rec.text)) {
      if (!stopwords.contains(token)) ++f[token];
    }
  }
  std::vector<std::vector<TermCount>> out(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i) {
    auto& terms = out[i];
    for (auto& [term, n] : freq[i]) terms.push_back(TermCount{term, n});
    // freq is already term-ascending, so a stable sort on count keeps ties in order.
    std::stable_sort(terms.begin(), terms.end(),
                     [](const TermCount& a, const TermCount& b) { return a.count > b.count; });
    if (terms.size() > k) terms.resize(k);
  }
  return out;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "the", "be",   "to",    "of",    "and",  "a",    "in",    "that", "have",  "i",
      "it",  "for",  "not",   "on",    "with", "he",   "as",    "you",  "do",    "at",
      "this", "but", "his",   "by",    "from", "they", "we",    "say",  "her",   "she",
      "or",  "an",   "will",  "my",    "one",  "all",  "would", "there", "their", "what",
      "so",  "up",   "out",   "if",    "about", "who", "get",   "which", "go",   "me"};
  return words;
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (auto& token : tokenize(line)) words.insert(std::move(token));
  }
  return words;
}

std::optional<std::size_t> animation_bin(std::int64_t ts, std::int64_t t0, std::int64_t t1,
                                         std::size_t bins) {
  if (ts < t0 || ts > t1 || bins == 0 || t1 <= t0) return std::nullopt;
  if (ts == t1) return bins - 1;
  const auto offset = static_cast<unsigned __int128>(ts - t0);
  const auto span = static_cast<unsigned __int128>(t1 - t0);
  return static_cast<std::size_t>(offset * bins / span);
}

std::vector<FrameBuffer> animate(std::span<const ingest::TweetRecord> recs,
                                 const gridmap::GridSpec& spec, std::int64_t t0, std::int64_t t1,
                                 std::size_t bins, const Colormap& cmap, bool log_scale) {
  if (!(t0 < t1)) throw Error(Errc::InvalidArgument, "animation needs t0 < t1");
  if (bins < 1) throw Error(Errc::InvalidArgument, "animation needs bins >= 1");
  std::vector<std::vector<ingest::TweetRecord>> per_bin(bins);
  for (const auto& rec : recs) {
    if (const auto b = animation_bin(rec.timestamp, t0, t1, bins)) per_bin[*b].push_back(rec);
  }
  std::vector<std::vector<std::uint64_t>> counts;
  std::uint64_t global_max = 0;
  for (const auto& bin : per_bin) {
    counts.push_back(bin_counts(bin, spec));
    for (const auto n : counts.back()) global_max = std::max(global_max, n);
  }
  std::vector<FrameBuffer> frames;
  frames.reserve(bins);
  for (const auto& c : counts) frames.push_back(render_counts(c, spec, cmap, log_scale, global_max));
  return frames;
}

void write_ppm(std::ostream& out, const FrameBuffer& frame) {
  out << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  const auto row_bytes = static_cast<std::size_t>(frame.width) * 3;
  for (int r = frame.height - 1; r >= 0; --r) {
    out.write(reinterpret_cast<const char*>(frame.pixels.data() + r * row_bytes),
              static_cast<std::streamsize>(row_bytes));
  }
}

FrameBuffer read_ppm(std::istream& in) {
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || w < 0 || h < 0 || maxval != 255) {
    throw Error(Errc::Malformed, "not an 8-bit P6 image");
  }
  in.get();  // single whitespace after the header
  FrameBuffer frame(w, h);
  const auto row_bytes = static_cast<std::size_t>(w) * 3;
  for (int r = h - 1; r >= 0; --r) {
    in.read(reinterpret_cast<char*>(frame.pixels.data() + r * row_bytes),
            static_cast<std::streamsize>(row_bytes));
  }
  if (!in) throw Error(Errc::Malformed, "truncated P6 image");
  return frame;
}

}  // namespace lumino::render
