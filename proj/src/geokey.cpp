#include "lumino/geokey.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace lumino::geokey {
namespace {

std::int64_t pow10(int n) {
  std::int64_t p = 1;
  while (n-- > 0) p *= 10;
  return p;
}

// |value| scaled to an integer count of 10^-frac_digits units.
std::int64_t scaled_abs(double value, const GeoKeyFormat& fmt) {
  return std::llround(std::fabs(value) * static_cast<double>(pow10(fmt.frac_digits)));
}

// Fixed-width rendering "II.FFF" of a scaled absolute value.
std::string render_axis(std::int64_t scaled, const GeoKeyFormat& fmt) {
  const std::int64_t unit = pow10(fmt.frac_digits);
  const std::int64_t int_part = scaled / unit;
  if (int_part >= pow10(fmt.int_digits)) {
    throw Error(Errc::WidthOverflow, "integer part " + std::to_string(int_part) +
                                         " needs more than " + std::to_string(fmt.int_digits) +
                                         " digits");
  }
  std::string out(static_cast<std::size_t>(fmt.int_digits + (fmt.frac_digits > 0 ? 1 : 0) +
                                            fmt.frac_digits),
                  '0');
  std::int64_t frac_part = scaled % unit;
  std::size_t pos = out.size();
  for (int i = 0; i < fmt.frac_digits; ++i) {
    out[--pos] = static_cast<char>('0' + frac_part % 10);
    frac_part /= 10;
  }
  if (fmt.frac_digits > 0) out[--pos] = '.';
  std::int64_t ip = int_part;
  for (int i = 0; i < fmt.int_digits; ++i) {
    out[--pos] = static_cast<char>('0' + ip % 10);
    ip /= 10;
  }
  return out;
}

std::string interleave(char lat_sign, char lon_sign, const std::string& lat,
                       const std::string& lon) {
  std::string key;
  key.reserve(2 + lat.size() * 2);
  key.push_back(lat_sign);
  key.push_back(lon_sign);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    key.push_back(lat[i]);
    key.push_back(lon[i]);
  }
  return key;
}

void check_coordinate(double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0)) {
    throw Error(Errc::OutOfRange, "latitude " + std::to_string(lat) + " outside [-90, 90]");
  }
  if (!(lon >= -180.0 && lon <= 180.0)) {
    throw Error(Errc::OutOfRange, "longitude " + std::to_string(lon) + " outside [-180, 180]");
  }
}

}  // namespace

std::size_t GeoKeyFormat::key_length() const noexcept {
  const int axis = int_digits + (frac_digits > 0 ? 1 : 0) + frac_digits;
  return static_cast<std::size_t>(2 + 2 * axis);
}

void GeoKeyFormat::validate() const {
  if (int_digits < 1 || int_digits > 9 || frac_digits < 0 || frac_digits > 9) {
    throw Error(Errc::InvalidArgument, "key format needs 1 <= int_digits <= 9 and "
                                       "0 <= frac_digits <= 9");
  }
}

BBox BBox::from_corners(double lat_a, double lon_a, double lat_b, double lon_b) {
  return BBox{std::min(lat_a, lat_b), std::max(lat_a, lat_b), std::min(lon_a, lon_b),
              std::max(lon_a, lon_b)};
}

void BBox::validate() const {
  check_coordinate(lat_min, lon_min);
  check_coordinate(lat_max, lon_max);
  if (lat_min > lat_max || lon_min > lon_max) {
    throw Error(Errc::InvalidArgument, "bounding box has min > max");
  }
}

double round_to(double value, int frac_digits) {
  const double unit = static_cast<double>(pow10(frac_digits));
  return std::round(value * unit) / unit;
}

GeoKey encode_latlon(double lat, double lon, const GeoKeyFormat& fmt) {
  fmt.validate();
  check_coordinate(lat, lon);
  const std::int64_t lat_scaled = scaled_abs(lat, fmt);
  const std::int64_t lon_scaled = scaled_abs(lon, fmt);
  // The sign follows the rounded value, so anything that rounds to zero is '+'.
  const char lat_sign = (lat < 0 && lat_scaled != 0) ? '-' : '+';
  const char lon_sign = (lon < 0 && lon_scaled != 0) ? '-' : '+';
  return GeoKey{interleave(lat_sign, lon_sign, render_axis(lat_scaled, fmt),
                           render_axis(lon_scaled, fmt))};
}

LatLon decode_latlon(std::string_view key, const GeoKeyFormat& fmt) {
  fmt.validate();
  auto malformed = [&](const std::string& why) {
    return Error(Errc::MalformedKey, "'" + std::string(key) + "': " + why);
  };
  if (key.size() != fmt.key_length()) throw malformed("wrong length");
  const auto is_sign = [](char c) { return c == '+' || c == '-'; };
  if (!is_sign(key[0]) || !is_sign(key[1])) throw malformed("bad sign prefix");

  const std::size_t axis_len = (key.size() - 2) / 2;
  const std::size_t point_pos = static_cast<std::size_t>(fmt.int_digits);
  std::int64_t lat_scaled = 0;
  std::int64_t lon_scaled = 0;
  for (std::size_t i = 0; i < axis_len; ++i) {
    const char a = key[2 + 2 * i];
    const char b = key[3 + 2 * i];
    if (fmt.frac_digits > 0 && i == point_pos) {
      if (a != '.' || b != '.') throw malformed("missing decimal points");
      continue;
    }
    if (a < '0' || a > '9' || b < '0' || b > '9') throw malformed("non-digit character");
    lat_scaled = lat_scaled * 10 + (a - '0');
    lon_scaled = lon_scaled * 10 + (b - '0');
  }
  const double unit = static_cast<double>(pow10(fmt.frac_digits));
  double lat = static_cast<double>(lat_scaled) / unit;
  double lon = static_cast<double>(lon_scaled) / unit;
  if (key[0] == '-') lat = -lat;
  if (key[1] == '-') lon = -lon;
  if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 180.0) {
    throw malformed("coordinate out of range");
  }
  return {lat, lon};
}

GeoKeyRange box_range(const BBox& bbox, const GeoKeyFormat& fmt) {
  fmt.validate();
  bbox.validate();
  if ((bbox.lat_min < 0 && bbox.lat_max >= 0) || (bbox.lon_min < 0 && bbox.lon_max >= 0)) {
    throw Error(Errc::QuadrantSplit, "bounding box crosses the equator or prime meridian");
  }
  // On a negative axis keys order by absolute value, so the bounds swap.
  const bool lat_neg = bbox.lat_max < 0;
  const bool lon_neg = bbox.lon_max < 0;
  const double lat_lo = lat_neg ? -bbox.lat_max : bbox.lat_min;
  const double lat_hi = lat_neg ? -bbox.lat_min : bbox.lat_max;
  const double lon_lo = lon_neg ? -bbox.lon_max : bbox.lon_min;
  const double lon_hi = lon_neg ? -bbox.lon_min : bbox.lon_max;
  const char lat_sign = lat_neg ? '-' : '+';
  const char lon_sign = lon_neg ? '-' : '+';

  GeoKeyRange range;
  range.start.text = interleave(lat_sign, lon_sign, render_axis(scaled_abs(lat_lo, fmt), fmt),
                                render_axis(scaled_abs(lon_lo, fmt), fmt));
  range.end.text = interleave(lat_sign, lon_sign, render_axis(scaled_abs(lat_hi, fmt), fmt),
                              render_axis(scaled_abs(lon_hi, fmt), fmt));
  return range;
}

}  // namespace lumino::geokey
