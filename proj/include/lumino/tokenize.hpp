#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace lumino {

/// Lowercased tokens in text order, split on whitespace and punctuation.
///
/// All ASCII characters other than letters and digits separate tokens, as do
/// the Unicode space characters and the common Unicode punctuation blocks.
/// Case folding covers ASCII, Latin-1, Greek and Cyrillic. Bytes that are not
/// valid UTF-8 act as separators. Store indexing and keyword search both go
/// through this function so that their token sets agree.
std::vector<std::string> tokenize(std::string_view text);

/// Distinct tokens of `text`.
std::set<std::string> token_set(std::string_view text);

/// True when every token of `keyword` occurs in `tokens`. A keyword with no
/// tokens matches nothing.
bool matches_keyword(const std::set<std::string>& tokens, std::string_view keyword);

}  // namespace lumino
