#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htr/ctc.hpp"
#include "htr/imaging.hpp"

namespace htr {

// ---- charset ----

/// Ordered unique code points; the CTC blank is index size().
class Charset {
 public:
  Charset() = default;
  /// Throws ConfigError on duplicates.
  explicit Charset(std::u32string symbols);

  /// The 33 shared Russian/Kazakh lowercase letters.
  static Charset russian33();
  /// russian33 plus the 9 Kazakh-specific letters.
  static Charset kazakh42();
  /// kazakh42 plus space: the default recognizer alphabet.
  static Charset default_htr();
  /// Upper- and lowercase kazakh42 plus space.
  static Charset mixed_case();

  /// One symbol per line, UTF-8.
  static Charset load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(symbols_.size()); }
  int blank() const { return size(); }
  /// Index of `c`, or -1.
  int index(char32_t c) const;
  bool contains(char32_t c) const { return index(c) >= 0; }
  char32_t symbol(int i) const { return symbols_.at(static_cast<std::size_t>(i)); }
  const std::u32string& symbols() const { return symbols_; }
  /// UTF-8 string of every symbol, in index order.
  std::vector<std::string> symbol_strings() const;

  /// NFC-normalizes, then maps code points to indices. Throws EncodeError
  /// naming the first unknown character and its position.
  Label encode(std::string_view text) const;
  bool can_encode(std::string_view text) const;
  std::string decode(std::span<const int> label) const;

  bool operator==(const Charset&) const = default;

 private:
  std::u32string symbols_;
};

// ---- stroke font ----

struct RenderOptions {
  double unit = 3.0;          // pixels per font grid unit
  double stroke_width = 2.0;  // pixels
  double spacing = 1.5;       // grid units between letters
  double margin = 4.0;        // pixels around the text
  double jitter = 0.0;        // max per-point displacement, grid units
  std::uint64_t seed = 0;     // jitter seed
};

/// True if the embedded font has a glyph for `c` (space always renders).
bool has_glyph(char32_t c);
/// Renders UTF-8 text with the embedded polyline font. Throws EncodeError
/// for characters without a glyph.
GrayImage render_text(std::string_view text, const RenderOptions& options = {});

// ---- manifests and splits ----

struct ManifestEntry {
  std::string path;  // relative to the dataset directory
  std::string transcript;
  bool operator==(const ManifestEntry&) const = default;
};

/// UTF-8 TSV `path<TAB>transcript`, NFC transcripts, LF line endings.
void write_manifest(const std::filesystem::path& file, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file);

enum class Split { train, val, test1, test2 };
const char* split_name(Split s);
/// Throws ConfigError for unknown names.
Split parse_split(std::string_view name);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test1 = 0.075;
  double test2 = 0.075;
};

/// Deterministic partition. TEST1 takes whole transcript groups (words never
/// seen in train or val) whose total is the achievable size nearest its
/// target; TEST2 and val draw from the remaining entries while every
/// remaining transcript keeps at least one train entry. Throws ConfigError
/// with fewer than 2 distinct transcripts or when the constraints cannot be
/// met.
std::vector<Split> split_dataset(std::span<const ManifestEntry> entries, std::uint64_t seed,
                                 const SplitFractions& fractions = {});

/// Entries assigned to `which`, in manifest order.
std::vector<ManifestEntry> select_split(std::span<const ManifestEntry> entries, std::span<const Split> splits,
                                        Split which);

// ---- synthetic generator ----

/// 42 Kazakhstan and neighbouring city/country names, lowercase letters only.
const std::vector<std::string>& default_words();

struct GenerateOptions {
  int per_word = 50;
  std::uint64_t seed = 0;
  bool augment = true;
  RenderOptions render{.jitter = 0.25};
  AugmentRanges ranges;
};

struct GeneratedDataset {
  std::vector<ManifestEntry> entries;
  std::vector<Split> splits;
};

/// Renders `per_word` samples of every word into `out_dir`/images, then
/// writes manifest.tsv, the four split files (train.tsv, val.tsv,
/// test1.tsv, test2.tsv), charset.txt and words.txt. With per_word 1 or a
/// single distinct word there is nothing to hold out and every entry goes
/// to train. Throws EncodeError
/// naming any character outside `charset` or the font.
GeneratedDataset generate_dataset(std::span<const std::string> words, const Charset& charset,
                                  const std::filesystem::path& out_dir, const GenerateOptions& options = {});

/// Renders one sample exactly as generate_dataset does for `sample_seed`.
GrayImage render_sample(std::string_view word, std::uint64_t sample_seed, const GenerateOptions& options = {});

/// One UTF-8 line per entry, NFC-normalized, blank lines skipped.
std::vector<std::string> read_lines(const std::filesystem::path& file);

}  // namespace htr
