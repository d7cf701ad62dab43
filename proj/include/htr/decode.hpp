#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "htr/ctc.hpp"

namespace htr {

/// Per-frame argmax (lowest index wins ties) followed by collapse.
template <typename Derived>
Label best_path(const Eigen::MatrixBase<Derived>& probs) {
  std::vector<int> path(static_cast<std::size_t>(probs.rows()));
  for (Index t = 0; t < probs.rows(); ++t) {
    Index arg = 0;
    for (Index k = 1; k < probs.cols(); ++k) {
      if (probs(t, k) > probs(t, arg)) arg = k;
    }
    path[static_cast<std::size_t>(t)] = static_cast<int>(arg);
  }
  return collapse(path, static_cast<int>(probs.cols()) - 1);
}

/// Product of the per-frame maxima: the probability of the best path itself.
template <typename Derived>
double best_path_probability(const Eigen::MatrixBase<Derived>& probs) {
  double log_p = 0;
  for (Index t = 0; t < probs.rows(); ++t) log_p += std::log(static_cast<double>(probs.row(t).maxCoeff()));
  return std::exp(log_p);
}

struct DecodeResult {
  Label label;
  /// ln of the summed probability of all alignments of `label`.
  double log_prob = 0;
  /// log_prob plus the weighted character-LM contribution (equal to
  /// log_prob without an LM).
  double score = 0;
};

/// Prefix beam search keeping blank- and non-blank-ending mass separately.
/// Surviving beams and the best-path labeling are rescored with the exact
/// labeling probability, so the result never scores below best path. Exact
/// once beam_width covers every reachable labeling.
DecodeResult beam_search(const ProbMatrix& probs, int beam_width = 25);

/// Trie over dictionary words. Node 0 is the root.
class PrefixTree {
 public:
  PrefixTree() { nodes_.emplace_back(); }
  explicit PrefixTree(std::span<const Label> words);

  void insert(std::span<const int> word);

  static constexpr int kRoot = 0;
  /// Child reached through `symbol`, or -1.
  int child(int node, int symbol) const;
  const std::vector<int>& child_symbols(int node) const { return nodes_[static_cast<std::size_t>(node)].symbols; }
  bool is_word(int node) const { return nodes_[static_cast<std::size_t>(node)].is_word; }
  /// Node reached by walking `prefix` from the root, or -1.
  int find(std::span<const int> prefix) const;
  bool contains(std::span<const int> word) const;
  std::size_t word_count() const { return words_; }
  bool empty() const { return words_ == 0; }

 private:
  struct Node {
    std::vector<int> symbols;   // sorted
    std::vector<int> children;  // parallel to symbols
    bool is_word = false;
  };
  std::vector<Node> nodes_;
  std::size_t words_ = 0;
};

/// Add-k smoothed character bigram model. Outcomes are the charset symbols
/// plus a word boundary (index `boundary()`); the word separator symbol, if
/// any, is an alias of the boundary.
class CharLM {
 public:
  /// `sequences` may contain the separator symbol to delimit words.
  CharLM(std::span<const Label> sequences, int num_symbols, double smoothing = 1.0,
         int separator = -1);

  int boundary() const { return num_symbols_; }
  int num_symbols() const { return num_symbols_; }
  /// ln p(next | prev); both arguments in [0, num_symbols], separator maps to
  /// the boundary.
  double log_prob(int prev, int next) const;

 private:
  int canonical(int symbol) const;

  int num_symbols_;
  int separator_;
  double smoothing_;
  int outcomes_;
  std::vector<double> counts_;  // (num_symbols+1)^2, row = prev
  std::vector<double> totals_;
};

struct WordBeamOptions {
  int beam_width = 25;
  double lm_weight = 0.01;
  /// Allow several dictionary words joined by `separator`.
  bool multi_word = false;
  int separator = -1;
};

/// Beam search whose extensions keep the current word a dictionary prefix.
/// Only labelings ending in a complete word (or the empty labeling) are
/// returned. Throws ConfigError on an empty dictionary.
DecodeResult word_beam_search(const ProbMatrix& probs, const PrefixTree& dictionary, const CharLM* lm,
                              const WordBeamOptions& options = {});

/// Exact ln p(label | probs) summed over alignments; -inf if unreachable or
/// infeasible.
double labeling_log_prob(const ProbMatrix& probs, std::span<const int> label);

}  // namespace htr
