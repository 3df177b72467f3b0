#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <vector>

#include "lumino/geokey.hpp"

namespace lumino::gridmap {

/// Display grid over a geographic box. Row 0 is the southern edge and
/// column 0 the western edge.
struct GridSpec {
  geokey::BBox bbox;
  int nrows = 1;
  int ncols = 1;

  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(nrows) * static_cast<std::size_t>(ncols);
  }
  /// Throws Errc::InvalidArgument for empty grids or a degenerate box.
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// The MIT campus box (42.350..42.357, -71.099..-71.090) on a 70 x 90 grid.
GridSpec mit_campus_grid();

struct CellIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Cell containing (lat, lon); nullopt outside the box. Points on the
/// northern or eastern edge land in the last row or column.
std::optional<CellIndex> align(double lat, double lon, const GridSpec& spec);

struct Point {
  double lat = 0;
  double lon = 0;
  double z = 0;  // elevation, meters

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;
};

struct HeightGrid {
  GridSpec spec;
  std::vector<double> heights;  // row-major, meters above ground

  double at(int row, int col) const {
    return heights[static_cast<std::size_t>(row) * static_cast<std::size_t>(spec.ncols) +
                   static_cast<std::size_t>(col)];
  }
  double max_height() const;
};

/// Linear-interpolated percentile (0..100) of unsorted samples.
double percentile(std::vector<double> samples, double pct);

/// Per cell: height = max(0, p95(z) - p5(z)) over the cell's points; cells
/// without points are 0.
HeightGrid build_height_grid(const PointCloud& cloud, const GridSpec& spec);

/// "lat lon z" per line, '#' comments and blank lines ignored. Throws
/// Errc::Malformed naming the line.
PointCloud read_point_cloud(std::istream& in);
PointCloud load_point_cloud(const std::filesystem::path& path);
void write_point_cloud(std::ostream& out, const PointCloud& cloud);

/// Tab-separated matrix of meters, row 0 first.
void write_heightmap_tsv(std::ostream& out, const HeightGrid& grid);
/// Reads a matrix written by write_heightmap_tsv; dimensions must match
/// `spec` (Errc::DimensionMismatch otherwise).
HeightGrid read_heightmap_tsv(std::istream& in, const GridSpec& spec);

}  // namespace lumino::gridmap
