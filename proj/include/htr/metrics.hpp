#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace htr {

/// Edit operations turning a reference into a hypothesis. `n` is the
/// reference length, floored at 1.
struct EditOps {
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;
  std::int64_t n = 1;

  std::int64_t distance() const { return substitutions + insertions + deletions; }
  /// Error rate as a fraction (not a percentage).
  double rate() const { return static_cast<double>(distance()) / static_cast<double>(n); }
};

/// Minimal edit script between `reference` and `hypothesis`. Among minimal
/// scripts the backtrace prefers substitution, then deletion, then
/// insertion. If `reference_correct` is given it receives, per reference
/// token, whether that token is aligned to an identical hypothesis token.
template <typename T>
EditOps edit_ops(std::span<const T> reference, std::span<const T> hypothesis,
                 std::vector<bool>* reference_correct = nullptr) {
  const std::size_t rows = reference.size() + 1;
  const std::size_t cols = hypothesis.size() + 1;
  std::vector<std::int64_t> d(rows * cols);
  auto at = [&](std::size_t i, std::size_t j) -> std::int64_t& { return d[i * cols + j]; };
  for (std::size_t i = 0; i < rows; ++i) at(i, 0) = static_cast<std::int64_t>(i);
  for (std::size_t j = 0; j < cols; ++j) at(0, j) = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i < rows; ++i) {
    for (std::size_t j = 1; j < cols; ++j) {
      const std::int64_t diag = at(i - 1, j - 1) + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  EditOps ops;
  ops.n = std::max<std::int64_t>(1, static_cast<std::int64_t>(reference.size()));
  if (reference_correct) reference_correct->assign(reference.size(), false);
  std::size_t i = reference.size();
  std::size_t j = hypothesis.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (same) {
          if (reference_correct) (*reference_correct)[i - 1] = true;
        } else {
          ++ops.substitutions;
        }
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

/// Character-level edit operations over NFC code points; `reference` is the
/// ground truth.
EditOps levenshtein(std::string_view reference, std::string_view hypothesis);
/// Word-level edit operations; words are separated by spaces.
EditOps word_levenshtein(std::string_view reference, std::string_view hypothesis);

struct CharStat {
  std::int64_t count = 0;
  std::int64_t correct = 0;
  double accuracy() const { return count ? 100.0 * static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

struct EvalReport {
  /// Percentages. CER is micro-averaged unless `macro` is set; it is not
  /// clamped, so heavy insertions can push it above 100.
  double cer = 0;
  double wer = 0;
  double war = 0;
  double car = 0;
  /// Exact-match rate; equal to `war` for single-word samples.
  double accuracy = 0;
  bool macro = false;
  std::int64_t sample_count = 0;
  std::int64_t char_edits = 0;
  std::int64_t char_total = 0;
  std::int64_t word_edits = 0;
  std::int64_t word_total = 0;
  std::int64_t exact_matches = 0;
  /// Keyed by the UTF-8 encoding of each ground-truth character.
  std::map<std::string, CharStat> per_char;
};

struct EvalOptions {
  bool macro = false;
};

/// Corpus metrics over (prediction, ground_truth) pairs. Throws
/// ContractError on an empty list.
EvalReport corpus_eval(std::span<const std::pair<std::string, std::string>> pairs, const EvalOptions& options = {});

/// CSV with header `metric,symbol,value,count,correct`: overall rows first,
/// then one `char` row per symbol. `charset` symbols missing from the corpus
/// are listed with zero counts.
void write_report_csv(std::ostream& out, const EvalReport& report, std::span<const std::string> charset = {});

}  // namespace htr
