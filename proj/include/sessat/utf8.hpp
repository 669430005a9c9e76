#pragma once

#include <string>
#include <string_view>

namespace sessat {

// Decodes UTF-8 into Unicode scalar values. Invalid sequences decode to
// U+FFFD one byte at a time, so every input has a defined length.
std::u32string decode_utf8(std::string_view text);

std::string encode_utf8(std::u32string_view text);

inline std::size_t scalar_count(std::string_view text) {
  return decode_utf8(text).size();
}

}  // namespace sessat
