#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htr/data.hpp"
#include "htr/decode.hpp"
#include "htr/imaging.hpp"
#include "htr/models.hpp"
#include "htr/train.hpp"

namespace htr {

struct PreprocessOptions {
  bool deskew = false;
  bool deslant = false;
};

/// Optional deskew/deslant, then normalize_to_model at the spec's input size.
RowMatrixXd preprocess(const GrayImage& img, const ModelSpec& spec, const PreprocessOptions& options = {});

/// Entries of `<dir>/<split>.tsv`; IoError if the split file is missing.
std::vector<ManifestEntry> load_split(const std::filesystem::path& dir, Split split);

/// Reads and preprocesses every entry's image (paths relative to `dir`) and
/// encodes its transcript. Throws EncodeError on unknown characters.
std::vector<HtrSample> load_htr_samples(const std::filesystem::path& dir, std::span<const ManifestEntry> entries,
                                        const Charset& charset, const ModelSpec& spec,
                                        const PreprocessOptions& options = {});

/// Sorted distinct transcripts: the class list of a classification manifest.
std::vector<std::string> class_names(std::span<const ManifestEntry> entries);

/// Throws ConfigError for a transcript outside `classes`.
std::vector<ClassSample> load_class_samples(const std::filesystem::path& dir, std::span<const ManifestEntry> entries,
                                            std::span<const std::string> classes, const ModelSpec& spec,
                                            const PreprocessOptions& options = {});

// ---- decoding ----

enum class DecoderKind { bestpath, beamsearch, wordbeamsearch };
const char* decoder_name(DecoderKind kind);
/// Throws ConfigError listing the valid decoders.
DecoderKind parse_decoder(std::string_view name);

struct DecoderConfig {
  DecoderKind kind = DecoderKind::bestpath;
  int beam_width = 25;
  double lm_weight = 0.01;
  bool multi_word = false;
};

struct Recognition {
  std::string text;
  Label label;
  /// Best path: product of the per-frame maxima. Beam decoders: total
  /// probability of the returned labeling.
  double probability = 0;
  /// Decoder ranking score (log domain, LM included).
  double score = 0;
};

/// Decodes posteriors with a charset, an optional dictionary and an
/// optional character bigram LM.
class Decoder {
 public:
  Decoder(Charset charset, DecoderConfig config);

  /// Words are NFC-normalized and encoded; throws EncodeError on unknown
  /// characters.
  void set_dictionary(std::span<const std::string> words);
  /// Trains the character LM on `corpus` lines.
  void set_language_model(std::span<const std::string> corpus, double smoothing = 1.0);

  const Charset& charset() const { return charset_; }
  const DecoderConfig& config() const { return config_; }
  bool has_dictionary() const { return dictionary_.has_value(); }

  /// Throws ConfigError for wordbeamsearch without a dictionary and
  /// ShapeError when the column count is not charset size + 1.
  Recognition decode(const ProbMatrix& probs) const;
  Recognition decode(const ProbMatrix& probs, DecoderKind kind) const;

 private:
  Charset charset_;
  DecoderConfig config_;
  std::optional<PrefixTree> dictionary_;
  std::optional<CharLM> lm_;
};

/// Model inference over preprocessed inputs in batches.
std::vector<ProbMatrix> infer(const Model& model, std::span<const RowMatrixXd> inputs, int batch_size = 32);

/// Reads a probability matrix as CSV: one row per frame, charset size + 1
/// comma-separated columns with the blank last. Rows must sum to 1 within
/// 1e-6.
ProbMatrix read_prob_matrix(const std::filesystem::path& file);

/// (prediction, truth) pairs for corpus_eval.
std::vector<std::pair<std::string, std::string>> pair_predictions(std::span<const Recognition> predictions,
                                                                  std::span<const ManifestEntry> entries);

}  // namespace htr
