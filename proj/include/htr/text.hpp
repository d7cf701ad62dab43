#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace htr {

/// Decodes UTF-8 to code points. Throws EncodeError on ill-formed input.
std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);
std::string to_utf8(char32_t c);

/// Unicode canonical composition (NFC). Throws EncodeError on ill-formed input.
std::string nfc(std::string_view utf8);

/// Tokens separated by ' '; empty tokens are dropped.
std::vector<std::u32string> split_words(std::u32string_view text);

}  // namespace htr
