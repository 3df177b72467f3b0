#include "lumino/error.hpp"

namespace lumino {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::WidthOverflow: return "WidthOverflow";
    case Errc::MalformedKey: return "MalformedKey";
    case Errc::QuadrantSplit: return "QuadrantSplit";
    case Errc::Malformed: return "Malformed";
    case Errc::FormatMismatch: return "FormatMismatch";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::Integrity: return "Integrity";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
    case Errc::CorruptStore: return "CorruptStore";
    case Errc::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

}  // namespace lumino
