#include "htr/decode.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>

namespace htr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Beam {
  double log_blank = kNegInf;
  double log_non_blank = kNegInf;
  double lm = 0;
  int node = PrefixTree::kRoot;

  double total() const { return log_add(log_blank, log_non_blank); }
  double score() const { return total() + lm; }
};

using BeamSet = std::map<Label, Beam>;

struct Ranked {
  const Label* label;
  const Beam* beam;
};

// Highest score first; ties broken by the lexicographically smaller labeling.
std::vector<Ranked> rank(const BeamSet& beams) {
  std::vector<Ranked> out;
  out.reserve(beams.size());
  for (const auto& [label, beam] : beams) out.push_back({&label, &beam});
  std::stable_sort(out.begin(), out.end(),
                   [](const Ranked& a, const Ranked& b) { return a.beam->score() > b.beam->score(); });
  return out;
}

// Extension policy: fills `next` with the symbols a beam may append, and
// updates the child state (trie node, LM score) for one appended symbol.
struct Policy {
  std::function<void(const Label&, const Beam&, std::vector<int>&)> allowed;
  std::function<void(const Label&, const Beam&, int, Beam&)> extend;
};

BeamSet prefix_search(const ProbMatrix& probs, int beam_width, const Policy& policy) {
  if (beam_width < 1) throw ConfigError("beam search: beam_width must be >= 1");
  const Index frames = probs.rows();
  const int blank = static_cast<int>(probs.cols()) - 1;
  if (blank < 0) throw ShapeError("beam search: probability matrix has no columns");
  const RowMatrixXd lp = probs.array().log().matrix();

  BeamSet beams;
  beams[Label{}].log_blank = 0;
  std::vector<int> symbols;
  for (Index t = 0; t < frames; ++t) {
    std::vector<Ranked> ranked = rank(beams);
    if (ranked.size() > static_cast<std::size_t>(beam_width)) ranked.resize(static_cast<std::size_t>(beam_width));

    BeamSet next;
    for (const Ranked& r : ranked) {
      const Label& label = *r.label;
      const Beam& beam = *r.beam;
      auto [it, fresh] = next.try_emplace(label);
      Beam& same = it->second;
      if (fresh) {
        same.lm = beam.lm;
        same.node = beam.node;
      }
      // Stay on the same labeling: blank, or repeat of the last symbol.
      same.log_blank = log_add(same.log_blank, beam.total() + lp(t, blank));
      if (!label.empty()) {
        same.log_non_blank = log_add(same.log_non_blank, beam.log_non_blank + lp(t, label.back()));
      }

      symbols.clear();
      policy.allowed(label, beam, symbols);
      for (int c : symbols) {
        Label extended = label;
        extended.push_back(c);
        // A repeated symbol only extends from paths ending in blank.
        const double from = !label.empty() && label.back() == c ? beam.log_blank : beam.total();
        auto [jt, added] = next.try_emplace(std::move(extended));
        Beam& child = jt->second;
        if (added) policy.extend(label, beam, c, child);
        child.log_non_blank = log_add(child.log_non_blank, from + lp(t, c));
      }
    }
    beams = std::move(next);
  }
  return beams;
}

}  // namespace

DecodeResult beam_search(const ProbMatrix& probs, int beam_width) {
  const int blank = static_cast<int>(probs.cols()) - 1;
  Policy policy;
  policy.allowed = [blank](const Label&, const Beam&, std::vector<int>& out) {
    for (int c = 0; c < blank; ++c) out.push_back(c);
  };
  policy.extend = [](const Label&, const Beam&, int, Beam&) {};
  const BeamSet beams = prefix_search(probs, beam_width, policy);
  // Pruning loses the mass of discarded prefixes, so surviving beams and the
  // best-path labeling are rescored exactly.
  DecodeResult best{best_path(probs), 0, 0};
  best.log_prob = best.score = labeling_log_prob(probs, best.label);
  for (const Ranked& r : rank(beams)) {
    const double lp = labeling_log_prob(probs, *r.label);
    if (lp > best.log_prob || (lp == best.log_prob && *r.label < best.label)) best = {*r.label, lp, lp};
  }
  return best;
}

PrefixTree::PrefixTree(std::span<const Label> words) : PrefixTree() {
  for (const Label& w : words) insert(w);
}

void PrefixTree::insert(std::span<const int> word) {
  int node = kRoot;
  for (int s : word) {
    int next = child(node, s);
    if (next < 0) {
      next = static_cast<int>(nodes_.size());
      nodes_.emplace_back();
      Node& n = nodes_[static_cast<std::size_t>(node)];
      const auto pos = std::lower_bound(n.symbols.begin(), n.symbols.end(), s) - n.symbols.begin();
      n.symbols.insert(n.symbols.begin() + pos, s);
      n.children.insert(n.children.begin() + pos, next);
    }
    node = next;
  }
  Node& end = nodes_[static_cast<std::size_t>(node)];
  if (!end.is_word) {
    end.is_word = true;
    ++words_;
  }
}

int PrefixTree::child(int node, int symbol) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const auto it = std::lower_bound(n.symbols.begin(), n.symbols.end(), symbol);
  if (it == n.symbols.end() || *it != symbol) return -1;
  return n.children[static_cast<std::size_t>(it - n.symbols.begin())];
}

int PrefixTree::find(std::span<const int> prefix) const {
  int node = kRoot;
  for (int s : prefix) {
    node = child(node, s);
    if (node < 0) return -1;
  }
  return node;
}

bool PrefixTree::contains(std::span<const int> word) const {
  const int node = find(word);
  return node >= 0 && is_word(node);
}

CharLM::CharLM(std::span<const Label> sequences, int num_symbols, double smoothing, int separator)
    : num_symbols_(num_symbols), separator_(separator), smoothing_(smoothing) {
  if (num_symbols < 1) throw ConfigError("char LM: num_symbols must be positive");
  if (!(smoothing > 0)) throw ConfigError("char LM: smoothing must be positive");
  if (separator >= num_symbols) throw ConfigError("char LM: separator outside charset");
  outcomes_ = num_symbols + 1 - (separator >= 0 ? 1 : 0);
  const std::size_t n = static_cast<std::size_t>(num_symbols) + 1;
  counts_.assign(n * n, 0.0);
  totals_.assign(n, 0.0);
  auto count = [&](int prev, int next) {
    counts_[static_cast<std::size_t>(prev) * n + static_cast<std::size_t>(next)] += 1;
    totals_[static_cast<std::size_t>(prev)] += 1;
  };
  for (const Label& seq : sequences) {
    int prev = boundary();
    for (int s : seq) {
      if (s < 0 || s >= num_symbols) throw ContractError("char LM: symbol outside charset");
      const int c = canonical(s);
      if (c == boundary() && prev == boundary()) continue;
      count(prev, c);
      prev = c;
    }
    if (prev != boundary()) count(prev, boundary());
  }
}

int CharLM::canonical(int symbol) const { return symbol == separator_ ? boundary() : symbol; }

double CharLM::log_prob(int prev, int next) const {
  if (prev < 0 || prev > num_symbols_ || next < 0 || next > num_symbols_) {
    throw ContractError("char LM: symbol outside [0, num_symbols]");
  }
  const std::size_t n = static_cast<std::size_t>(num_symbols_) + 1;
  const std::size_t p = static_cast<std::size_t>(canonical(prev));
  const std::size_t q = static_cast<std::size_t>(canonical(next));
  return std::log((counts_[p * n + q] + smoothing_) / (totals_[p] + smoothing_ * outcomes_));
}

DecodeResult word_beam_search(const ProbMatrix& probs, const PrefixTree& dictionary, const CharLM* lm,
                              const WordBeamOptions& options) {
  if (dictionary.empty()) throw ConfigError("word beam search: dictionary is empty");
  const int blank = static_cast<int>(probs.cols()) - 1;
  if (options.multi_word && (options.separator < 0 || options.separator >= blank)) {
    throw ConfigError("word beam search: multi-word mode needs a separator inside the charset");
  }
  auto last_symbol = [&](const Label& label) {
    return label.empty() || label.back() == options.separator ? (lm ? lm->boundary() : -1) : label.back();
  };

  Policy policy;
  policy.allowed = [&](const Label&, const Beam& beam, std::vector<int>& out) {
    for (int c : dictionary.child_symbols(beam.node)) {
      if (c < blank) out.push_back(c);
    }
    if (options.multi_word && dictionary.is_word(beam.node) &&
        dictionary.child(beam.node, options.separator) < 0) {
      out.push_back(options.separator);
    }
  };
  policy.extend = [&](const Label& label, const Beam& parent, int c, Beam& child) {
    const int node = dictionary.child(parent.node, c);
    child.node = node >= 0 ? node : PrefixTree::kRoot;
    child.lm = parent.lm;
    if (lm) child.lm += options.lm_weight * lm->log_prob(last_symbol(label), c);
  };

  const BeamSet beams = prefix_search(probs, options.beam_width, policy);
  const Label* best_label = nullptr;
  double best_optical = kNegInf;
  double best_score = kNegInf;
  for (const Ranked& r : rank(beams)) {
    if (!r.label->empty() && !dictionary.is_word(r.beam->node)) continue;
    const double optical = labeling_log_prob(probs, *r.label);
    double score = optical + r.beam->lm;
    if (lm && !r.label->empty()) score += options.lm_weight * lm->log_prob(last_symbol(*r.label), lm->boundary());
    if (!best_label || score > best_score || (score == best_score && *r.label < *best_label)) {
      best_label = r.label;
      best_optical = optical;
      best_score = score;
    }
  }
  if (!best_label) return {Label{}, kNegInf, kNegInf};
  return {*best_label, best_optical, best_score};
}

double labeling_log_prob(const ProbMatrix& probs, std::span<const int> label) {
  if (ctc_min_frames(label) > probs.rows()) return kNegInf;
  return -ctc_loss(probs, label);
}

}  // namespace htr
