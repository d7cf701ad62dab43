#include "htr/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>

#include "htr/errors.hpp"

namespace htr {

namespace {

icu::UnicodeString to_unicode(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  int32_t length = 0;
  u_strFromUTF8(nullptr, 0, &length, utf8.data(), static_cast<int32_t>(utf8.size()), &status);
  if (status == U_BUFFER_OVERFLOW_ERROR) status = U_ZERO_ERROR;
  if (U_FAILURE(status)) throw EncodeError("text: ill-formed UTF-8 input");
  icu::UnicodeString out;
  UChar* buffer = out.getBuffer(length);
  u_strFromUTF8(buffer, length, nullptr, utf8.data(), static_cast<int32_t>(utf8.size()), &status);
  out.releaseBuffer(length);
  if (U_FAILURE(status)) throw EncodeError("text: ill-formed UTF-8 input");
  return out;
}

}  // namespace

std::u32string to_u32(std::string_view utf8) {
  const icu::UnicodeString u = to_unicode(utf8);
  std::u32string out(static_cast<std::size_t>(u.countChar32()), U'\0');
  UErrorCode status = U_ZERO_ERROR;
  u.toUTF32(reinterpret_cast<UChar32*>(out.data()), static_cast<int32_t>(out.size()), status);
  return out;
}

std::string to_utf8(std::u32string_view text) {
  std::string out;
  icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(text.data()), static_cast<int32_t>(text.size()))
      .toUTF8String(out);
  return out;
}

std::string to_utf8(char32_t c) { return to_utf8(std::u32string_view(&c, 1)); }

std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw EncodeError("text: NFC normalizer unavailable");
  const icu::UnicodeString normalized = normalizer->normalize(to_unicode(utf8), status);
  if (U_FAILURE(status)) throw EncodeError("text: NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::vector<std::u32string> split_words(std::u32string_view text) {
  std::vector<std::u32string> words;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(U' ', start);
    if (end == std::u32string_view::npos) end = text.size();
    if (end > start) words.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

}  // namespace htr
