#include <fstream>

#include "htr/data.hpp"
#include "htr/errors.hpp"
#include "htr/text.hpp"

namespace htr {

namespace {

constexpr std::u32string_view kRussian = U"абвгдеёжзийклмнопрстуфхцчшщъыьэюя";
constexpr std::u32string_view kKazakh = U"әғқңөұүһі";
constexpr std::u32string_view kRussianUpper = U"АБВГДЕЁЖЗИЙКЛМНОПРСТУФХЦЧШЩЪЫЬЭЮЯ";
constexpr std::u32string_view kKazakhUpper = U"ӘҒҚҢӨҰҮҺІ";

}  // namespace

Charset::Charset(std::u32string symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_.find(symbols_[i]) != i) {
      throw ConfigError("charset: duplicate symbol '" + to_utf8(symbols_[i]) + "'");
    }
  }
}

Charset Charset::russian33() { return Charset(std::u32string(kRussian)); }

Charset Charset::kazakh42() { return Charset(std::u32string(kRussian) + std::u32string(kKazakh)); }

Charset Charset::default_htr() { return Charset(std::u32string(kRussian) + std::u32string(kKazakh) + U" "); }

Charset Charset::mixed_case() {
  return Charset(std::u32string(kRussian) + std::u32string(kKazakh) + std::u32string(kRussianUpper) +
                 std::u32string(kKazakhUpper) + U" ");
}

Charset Charset::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open charset " + path.string());
  std::u32string symbols;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::u32string cps = to_u32(nfc(line));
    if (cps.size() != 1) {
      throw ConfigError("charset " + path.string() + ": line " + std::to_string(number) +
                        " must hold exactly one symbol");
    }
    symbols += cps;
  }
  return Charset(std::move(symbols));
}

void Charset::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write charset " + path.string());
  for (char32_t c : symbols_) out << to_utf8(c) << '\n';
}

int Charset::index(char32_t c) const {
  const std::size_t pos = symbols_.find(c);
  return pos == std::u32string::npos ? -1 : static_cast<int>(pos);
}

std::vector<std::string> Charset::symbol_strings() const {
  std::vector<std::string> out;
  for (char32_t c : symbols_) out.push_back(to_utf8(c));
  return out;
}

Label Charset::encode(std::string_view text) const {
  const std::u32string cps = to_u32(nfc(text));
  Label label;
  label.reserve(cps.size());
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const int k = index(cps[i]);
    if (k < 0) {
      throw EncodeError("charset: character '" + to_utf8(cps[i]) + "' at position " + std::to_string(i) +
                        " of \"" + std::string(text) + "\" is not in the charset");
    }
    label.push_back(k);
  }
  return label;
}

bool Charset::can_encode(std::string_view text) const {
  try {
    encode(text);
    return true;
  } catch (const EncodeError&) {
    return false;
  }
}

std::string Charset::decode(std::span<const int> label) const {
  std::u32string out;
  for (int k : label) {
    if (k < 0 || k >= size()) throw ContractError("charset: index " + std::to_string(k) + " out of range");
    out.push_back(symbols_[static_cast<std::size_t>(k)]);
  }
  return to_utf8(out);
}

}  // namespace htr
