#include <gtest/gtest.h>

#include <sstream>

#include "htr/errors.hpp"
#include "htr/metrics.hpp"
#include "htr/random.hpp"
#include "htr/text.hpp"
#include "oracles.hpp"

namespace htr {
namespace {

using Pairs = std::vector<std::pair<std::string, std::string>>;

TEST(Levenshtein, Identity) {
  const EditOps ops = levenshtein("абвгд", "абвгд");
  EXPECT_EQ(ops.distance(), 0);
  EXPECT_EQ(ops.n, 5);
  EXPECT_EQ(ops.rate(), 0.0);
}

TEST(Levenshtein, SingleSubstitution) {
  const EditOps ops = levenshtein("казах", "казак");
  EXPECT_EQ(ops.substitutions, 1);
  EXPECT_EQ(ops.insertions + ops.deletions, 0);
  EXPECT_DOUBLE_EQ(ops.rate(), 0.2);
}

TEST(Levenshtein, KittenSitting) {
  const EditOps ops = levenshtein("kitten", "sitting");
  EXPECT_EQ(ops.substitutions, 2);
  EXPECT_EQ(ops.insertions, 1);
  EXPECT_EQ(ops.deletions, 0);
  EXPECT_DOUBLE_EQ(ops.rate(), 0.5);
}

TEST(Levenshtein, EmptyReferenceUsesGuard) {
  const EditOps ops = levenshtein("", "ab");
  EXPECT_EQ(ops.insertions, 2);
  EXPECT_EQ(ops.n, 1);
  EXPECT_EQ(levenshtein("", "").distance(), 0);
  EXPECT_EQ(levenshtein("ab", "").deletions, 2);
}

TEST(Levenshtein, SubstitutionPreferredOverInsertDelete) {
  const EditOps ops = levenshtein("ab", "ba");
  EXPECT_EQ(ops.distance(), 2);
  EXPECT_EQ(ops.substitutions, 2);
}

TEST(Levenshtein, NfcEquivalentStringsAreEqual) {
  // "й" precomposed vs "и" + combining breve.
  EXPECT_EQ(levenshtein("й", "й").distance(), 0);
}

TEST(Levenshtein, MatchesRecursiveOracleExhaustively) {
  const auto strings = testing::all_strings(U"abc", 4);
  for (const auto& a : strings) {
    for (const auto& b : strings) {
      const EditOps ops = edit_ops<char32_t>(a, b);
      ASSERT_EQ(ops.distance(), testing::recursive_distance(a, b));
      ASSERT_EQ(static_cast<std::int64_t>(b.size()),
                static_cast<std::int64_t>(a.size()) - ops.deletions + ops.insertions);
    }
  }
}

TEST(Levenshtein, MetricProperties) {
  Rng rng(1);
  auto random_string = [&] {
    std::u32string s(rng.below(8), U'a');
    for (char32_t& c : s) c = U'a' + static_cast<char32_t>(rng.below(4));
    return s;
  };
  for (int i = 0; i < 500; ++i) {
    const auto a = random_string(), b = random_string(), c = random_string();
    const auto ab = edit_ops<char32_t>(a, b).distance();
    EXPECT_EQ(ab, edit_ops<char32_t>(b, a).distance());
    EXPECT_LE(ab, edit_ops<char32_t>(a, c).distance() + edit_ops<char32_t>(c, b).distance());
    EXPECT_LE(ab, static_cast<std::int64_t>(std::max(a.size(), b.size())));
    EXPECT_EQ(ab == 0, a == b);
  }
}

TEST(WordLevenshtein, CountsTokens) {
  const EditOps ops = word_levenshtein("южно казахстанская область", "южно казахстанская");
  EXPECT_EQ(ops.deletions, 1);
  EXPECT_EQ(ops.n, 3);
}

TEST(CorpusEval, IdentityCorpus) {
  const Pairs pairs{{"алматы", "алматы"}, {"астана", "астана"}, {"шымкент", "шымкент"}};
  const EvalReport r = corpus_eval(pairs);
  EXPECT_EQ(r.cer, 0);
  EXPECT_EQ(r.wer, 0);
  EXPECT_EQ(r.war, 100);
  EXPECT_EQ(r.car, 100);
  EXPECT_EQ(r.sample_count, 3);
  for (const auto& [symbol, stat] : r.per_char) EXPECT_EQ(stat.accuracy(), 100) << symbol;
}

TEST(CorpusEval, SingleSubstitution) {
  const Pairs pairs{{"алмата", "алматы"}};
  const EvalReport r = corpus_eval(pairs);
  EXPECT_NEAR(r.cer, 100.0 / 6, 1e-12);
  EXPECT_EQ(r.war, 0);
  EXPECT_EQ(r.wer, 100);
  EXPECT_EQ(r.per_char.at("ы").correct, 0);
  EXPECT_EQ(r.per_char.at("а").correct, 2);
}

TEST(CorpusEval, MicroIsLengthWeightedMean) {
  Rng rng(3);
  const std::u32string alphabet = U"абвгд";
  auto random_word = [&](std::size_t min_len) {
    std::u32string s(min_len + rng.below(6), U'а');
    for (char32_t& c : s) c = alphabet[rng.below(alphabet.size())];
    return to_utf8(s);
  };
  Pairs pairs;
  for (int i = 0; i < 200; ++i) pairs.emplace_back(random_word(0), random_word(1));
  double weighted = 0, total = 0, macro = 0;
  for (const auto& [pred, truth] : pairs) {
    const EditOps ops = levenshtein(truth, pred);
    weighted += ops.rate() * static_cast<double>(ops.n);
    total += static_cast<double>(ops.n);
    macro += ops.rate();
  }
  const EvalReport micro = corpus_eval(pairs);
  EXPECT_NEAR(micro.cer, 100 * weighted / total, 1e-9);
  EXPECT_NEAR(micro.car + micro.cer, 100, 1e-12);
  EXPECT_NEAR(corpus_eval(pairs, {.macro = true}).cer, 100 * macro / 200, 1e-9);
}

TEST(CorpusEval, EmptyRejected) {
  EXPECT_THROW(corpus_eval(Pairs{}), ContractError);
}

TEST(ReportCsv, Layout) {
  const Pairs pairs{{"ab", "ab"}, {"a", "ac"}};
  std::ostringstream out;
  const std::vector<std::string> charset{"a", "b", "c", "d"};
  write_report_csv(out, corpus_eval(pairs), charset);
  const std::string csv = out.str();
  EXPECT_EQ(csv.rfind("metric,symbol,value,count,correct\nsamples,,2,2,\ncer_micro,,25,4,1\n", 0), 0u) << csv;
  EXPECT_NE(csv.find("war,,50,2,1\n"), std::string::npos);
  EXPECT_NE(csv.find("char,a,100,2,2\n"), std::string::npos);
  EXPECT_NE(csv.find("char,c,0,1,0\n"), std::string::npos);
  EXPECT_NE(csv.find("char,d,0,0,0\n"), std::string::npos);
}

TEST(Text, RoundTripAndErrors) {
  const std::string s = "әғқңөұүһі";
  EXPECT_EQ(to_utf8(to_u32(s)), s);
  EXPECT_EQ(to_u32(s).size(), 9u);
  EXPECT_THROW(to_u32("\xff\xfe"), EncodeError);
  EXPECT_EQ(split_words(U" a  bc "), (std::vector<std::u32string>{U"a", U"bc"}));
}

}  // namespace
}  // namespace htr
