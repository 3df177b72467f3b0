#include "lumino/gridmap.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "lumino/error.hpp"

namespace lumino::gridmap {
namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double& out) {
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size() && std::isfinite(out);
}

int axis_index(double value, double lo, double hi, int n) {
  const auto idx = static_cast<long long>(std::floor((value - lo) / (hi - lo) * n));
  return static_cast<int>(std::clamp<long long>(idx, 0, n - 1));
}

}  // namespace

void GridSpec::validate() const {
  bbox.validate();
  if (nrows < 1 || ncols < 1) throw Error(Errc::InvalidArgument, "grid needs nrows, ncols >= 1");
  if (!(bbox.lat_max > bbox.lat_min) || !(bbox.lon_max > bbox.lon_min)) {
    throw Error(Errc::InvalidArgument, "grid box must have positive extent");
  }
}

GridSpec mit_campus_grid() {
  return GridSpec{geokey::BBox::from_corners(42.350, -71.090, 42.357, -71.099), 70, 90};
}

std::optional<CellIndex> align(double lat, double lon, const GridSpec& spec) {
  if (!spec.bbox.contains(lat, lon)) return std::nullopt;
  const auto& b = spec.bbox;
  return CellIndex{axis_index(lat, b.lat_min, b.lat_max, spec.nrows),
                   axis_index(lon, b.lon_min, b.lon_max, spec.ncols)};
}

double HeightGrid::max_height() const {
  double m = 0;
  for (const double h : heights) m = std::max(m, h);
  return m;
}

double percentile(std::vector<double> samples, double pct) {
  if (samples.empty()) return 0;
  std::sort(samples.begin(), samples.end());
  const double pos = pct / 100.0 * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return samples[lo] + (samples[hi] - samples[lo]) * frac;
}

HeightGrid build_height_grid(const PointCloud& cloud, const GridSpec& spec) {
  spec.validate();
  std::vector<std::vector<double>> bins(spec.cell_count());
  for (const auto& p : cloud.points) {
    if (const auto cell = align(p.lat, p.lon, spec)) {
      bins[static_cast<std::size_t>(cell->row) * static_cast<std::size_t>(spec.ncols) +
           static_cast<std::size_t>(cell->col)]
          .push_back(p.z);
    }
  }
  HeightGrid grid{spec, std::vector<double>(spec.cell_count(), 0.0)};
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i].empty()) continue;
    const double ground = percentile(bins[i], 5.0);
    const double surface = percentile(std::move(bins[i]), 95.0);
    grid.heights[i] = std::max(0.0, surface - ground);
  }
  return grid;
}

PointCloud read_point_cloud(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string lat_s, lon_s, z_s, extra;
    if (!(fields >> lat_s)) continue;  // blank or comment-only
    Point p;
    if (!(fields >> lon_s >> z_s) || (fields >> extra) || !parse_double(lat_s, p.lat) ||
        !parse_double(lon_s, p.lon) || !parse_double(z_s, p.z)) {
      throw Error(Errc::Malformed, "point cloud line " + std::to_string(line_no) +
                                       ": expected 'lat lon z'");
    }
    if (p.lat < -90 || p.lat > 90 || p.lon < -180 || p.lon > 180) {
      throw Error(Errc::Malformed,
                  "point cloud line " + std::to_string(line_no) + ": coordinate out of range");
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud load_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return read_point_cloud(in);
}

void write_point_cloud(std::ostream& out, const PointCloud& cloud) {
  out << "# lat lon z\n";
  for (const auto& p : cloud.points) {
    out << format_double(p.lat) << ' ' << format_double(p.lon) << ' ' << format_double(p.z)
        << '\n';
  }
}

void write_heightmap_tsv(std::ostream& out, const HeightGrid& grid) {
  for (int r = 0; r < grid.spec.nrows; ++r) {
    for (int c = 0; c < grid.spec.ncols; ++c) {
      if (c) out << '\t';
      out << format_double(grid.at(r, c));
    }
    out << '\n';
  }
}

HeightGrid read_heightmap_tsv(std::istream& in, const GridSpec& spec) {
  spec.validate();
  HeightGrid grid{spec, {}};
  grid.heights.reserve(spec.cell_count());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    int cols = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      const std::string_view field =
          std::string_view(line).substr(start, tab == std::string::npos ? tab : tab - start);
      double h = 0;
      if (!parse_double(field, h) || h < 0) {
        throw Error(Errc::Malformed, "heightmap row " + std::to_string(rows) + ": bad value");
      }
      grid.heights.push_back(h);
      ++cols;
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols != spec.ncols) {
      throw Error(Errc::DimensionMismatch, "heightmap row " + std::to_string(rows) + " has " +
                                               std::to_string(cols) + " columns, grid has " +
                                               std::to_string(spec.ncols));
    }
  }
  if (rows != spec.nrows) {
    throw Error(Errc::DimensionMismatch, "heightmap has " + std::to_string(rows) +
                                             " rows, grid has " + std::to_string(spec.nrows));
  }
  return grid;
}

}  // namespace lumino::gridmap
