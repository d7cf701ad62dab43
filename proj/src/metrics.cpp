#include "htr/metrics.hpp"

#include <iomanip>

#include "htr/errors.hpp"
#include "htr/text.hpp"

namespace htr {

EditOps levenshtein(std::string_view reference, std::string_view hypothesis) {
  const std::u32string ref = to_u32(nfc(reference));
  const std::u32string hyp = to_u32(nfc(hypothesis));
  return edit_ops<char32_t>(ref, hyp);
}

EditOps word_levenshtein(std::string_view reference, std::string_view hypothesis) {
  const auto ref = split_words(to_u32(nfc(reference)));
  const auto hyp = split_words(to_u32(nfc(hypothesis)));
  return edit_ops<std::u32string>(ref, hyp);
}

EvalReport corpus_eval(std::span<const std::pair<std::string, std::string>> pairs, const EvalOptions& options) {
  if (pairs.empty()) throw ContractError("corpus_eval: no samples");
  EvalReport r;
  r.macro = options.macro;
  r.sample_count = static_cast<std::int64_t>(pairs.size());
  double macro_sum = 0;
  std::vector<bool> correct;
  for (const auto& [prediction, truth] : pairs) {
    const std::u32string hyp = to_u32(nfc(prediction));
    const std::u32string ref = to_u32(nfc(truth));
    const EditOps chars = edit_ops<char32_t>(ref, hyp, &correct);
    r.char_edits += chars.distance();
    r.char_total += chars.n;
    macro_sum += chars.rate();
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CharStat& stat = r.per_char[to_utf8(ref[i])];
      ++stat.count;
      stat.correct += correct[i];
    }
    const EditOps words = edit_ops<std::u32string>(split_words(ref), split_words(hyp));
    r.word_edits += words.distance();
    r.word_total += words.n;
    r.exact_matches += hyp == ref;
  }
  const double samples = static_cast<double>(r.sample_count);
  r.cer = options.macro ? 100.0 * macro_sum / samples
                        : 100.0 * static_cast<double>(r.char_edits) / static_cast<double>(r.char_total);
  r.car = 100.0 - r.cer;
  r.wer = 100.0 * static_cast<double>(r.word_edits) / static_cast<double>(r.word_total);
  r.war = 100.0 * static_cast<double>(r.exact_matches) / samples;
  r.accuracy = r.war;
  return r;
}

void write_report_csv(std::ostream& out, const EvalReport& report, std::span<const std::string> charset) {
  const auto old_precision = out.precision();
  out << std::setprecision(10);
  out << "metric,symbol,value,count,correct\n";
  out << "samples,," << report.sample_count << ',' << report.sample_count << ",\n";
  out << (report.macro ? "cer_macro" : "cer_micro") << ",," << report.cer << ',' << report.char_total << ','
      << report.char_edits << '\n';
  out << "wer,," << report.wer << ',' << report.word_total << ',' << report.word_edits << '\n';
  out << "war,," << report.war << ',' << report.sample_count << ',' << report.exact_matches << '\n';
  out << "accuracy,," << report.accuracy << ',' << report.sample_count << ',' << report.exact_matches << '\n';
  out << "car,," << report.car << ',' << report.char_total << ",\n";
  std::map<std::string, CharStat> rows = report.per_char;
  for (const std::string& s : charset) rows.try_emplace(s);
  for (const auto& [symbol, stat] : rows) {
    const std::string shown = symbol == " " ? "\" \"" : symbol == "," ? "\",\"" : symbol;
    out << "char," << shown << ',' << stat.accuracy() << ',' << stat.count << ',' << stat.correct << '\n';
  }
  out.precision(old_precision);
}

}  // namespace htr
