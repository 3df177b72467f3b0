#pragma once

// Digit-interleaved latitude/longitude keys.
//
// A key is sign(lat), sign(lon), then the character-wise interleaving of the
// fixed-width decimal renderings of |lat| and |lon|. With the default format
// (2 integer digits, 3 fractional digits) the point (42.350, -71.090) becomes
// "+-4721..305900". Within one sign quadrant, lexicographic order on keys is
// Morton order on the absolute-value digit tuples, so a bounding box maps to a
// single key range that is a superset of the box.

#include <compare>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lumino/error.hpp"

namespace lumino::geokey {

struct GeoKeyFormat {
  int int_digits = 2;
  int frac_digits = 3;

  /// Number of characters in a key of this format.
  std::size_t key_length() const noexcept;
  /// Throws Errc::InvalidArgument when the widths are unusable.
  void validate() const;

  friend bool operator==(const GeoKeyFormat&, const GeoKeyFormat&) = default;
};

/// Format wide enough for the whole globe (longitudes up to 180).
inline constexpr GeoKeyFormat kGlobalFormat{3, 3};

struct GeoKey {
  std::string text;

  friend auto operator<=>(const GeoKey&, const GeoKey&) = default;
};

struct BBox {
  double lat_min = 0;
  double lat_max = 0;
  double lon_min = 0;
  double lon_max = 0;

  /// Orders each axis so min <= max; a corner pair may list
  /// longitudes east-to-west.
  static BBox from_corners(double lat_a, double lon_a, double lat_b, double lon_b);

  bool contains(double lat, double lon) const noexcept {
    return lat_min <= lat && lat <= lat_max && lon_min <= lon && lon <= lon_max;
  }
  /// Throws Errc::OutOfRange or Errc::InvalidArgument.
  void validate() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Inclusive on both ends.
struct GeoKeyRange {
  GeoKey start;
  GeoKey end;

  bool contains(std::string_view key) const noexcept {
    return start.text <= key && key <= end.text;
  }
};

struct LatLon {
  double lat = 0;
  double lon = 0;

  friend bool operator==(const LatLon&, const LatLon&) = default;
};

/// Rounds half away from zero to `frac_digits` decimals.
double round_to(double value, int frac_digits);

GeoKey encode_latlon(double lat, double lon, const GeoKeyFormat& fmt = {});
LatLon decode_latlon(std::string_view key, const GeoKeyFormat& fmt = {});

/// Throws Errc::QuadrantSplit when the box straddles lat = 0 or lon = 0.
GeoKeyRange box_range(const BBox& bbox, const GeoKeyFormat& fmt = {});

template <typename Payload>
using Candidate = std::pair<GeoKey, Payload>;

/// Keeps the candidates whose decoded coordinates lie inside `bbox`.
template <typename Payload>
std::vector<Candidate<Payload>> refine(const std::vector<Candidate<Payload>>& candidates,
                                       const BBox& bbox, const GeoKeyFormat& fmt = {}) {
  std::vector<Candidate<Payload>> kept;
  for (const auto& candidate : candidates) {
    const LatLon p = decode_latlon(candidate.first.text, fmt);
    if (bbox.contains(p.lat, p.lon)) kept.push_back(candidate);
  }
  return kept;
}

/// Storage column qualifier prefix for keys.
inline constexpr std::string_view kLatLonPrefix = "latlon|";

}  // namespace lumino::geokey
