#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "htr/data.hpp"
#include "htr/errors.hpp"
#include "htr/random.hpp"
#include "htr/text.hpp"

namespace htr {

void write_manifest(const std::filesystem::path& file, std::span<const ManifestEntry> entries) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + file.string());
  for (const ManifestEntry& e : entries) {
    const std::string transcript = nfc(e.transcript);
    if (e.path.find_first_of("\t\n") != std::string::npos || transcript.find_first_of("\t\n\r") != std::string::npos) {
      throw ContractError("manifest: tab or newline inside an entry: " + e.path);
    }
    out << e.path << '\t' << transcript << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + file.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw IoError("manifest " + file.string() + ": line " + std::to_string(number) + " is not path<TAB>transcript");
    }
    entries.push_back({line.substr(0, tab), nfc(line.substr(tab + 1))});
  }
  return entries;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test1: return "test1";
    case Split::test2: return "test2";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : {Split::train, Split::val, Split::test1, Split::test2}) {
    if (name == split_name(s)) return s;
  }
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val, test1 or test2)");
}

std::vector<Split> split_dataset(std::span<const ManifestEntry> entries, std::uint64_t seed,
                                 const SplitFractions& fractions) {
  const double fsum = fractions.train + fractions.val + fractions.test1 + fractions.test2;
  if (fractions.train <= 0 || fractions.val < 0 || fractions.test1 < 0 || fractions.test2 < 0 ||
      std::abs(fsum - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be non-negative, train positive, and sum to 1");
  }
  std::map<std::string, std::vector<std::size_t>> by_text;
  for (std::size_t i = 0; i < entries.size(); ++i) by_text[entries[i].transcript].push_back(i);
  if (by_text.size() < 2) throw ConfigError("split: need at least 2 distinct transcripts");

  Rng rng(seed);
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [text, idx] : by_text) groups.push_back(&idx);
  rng.shuffle(std::span(groups));

  const double n = static_cast<double>(entries.size());
  const std::size_t want_test1 = static_cast<std::size_t>(std::llround(fractions.test1 * n));
  const std::size_t want_test2 = static_cast<std::size_t>(std::llround(fractions.test2 * n));
  const std::size_t want_val = static_cast<std::size_t>(std::llround(fractions.val * n));

  // Subset sum over group sizes (all but the last group, which always stays
  // for training); parent[s] is the group that first reached sum s.
  std::vector<std::size_t> test1_groups;
  if (want_test1 > 0) {
    const std::size_t cap = entries.size();
    std::vector<int> parent(cap + 1, -2);
    parent[0] = -1;
    for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
      const std::size_t sz = groups[g]->size();
      // Descending order so sums reached by this group are not reused.
      for (std::size_t s = cap; s >= sz; --s) {
        if (parent[s] == -2 && parent[s - sz] != -2) parent[s] = static_cast<int>(g);
      }
    }
    std::size_t best = 0;
    for (std::size_t s = 1; s <= cap; ++s) {
      if (parent[s] == -2) continue;
      const auto dist = [&](std::size_t v) { return v > want_test1 ? v - want_test1 : want_test1 - v; };
      if (best == 0 || dist(s) < dist(best)) best = s;
    }
    for (std::size_t s = best; s > 0;) {
      const std::size_t g = static_cast<std::size_t>(parent[s]);
      test1_groups.push_back(g);
      s -= groups[g]->size();
    }
  }

  std::vector<Split> splits(entries.size(), Split::train);
  std::vector<bool> in_test1(groups.size(), false);
  for (std::size_t g : test1_groups) {
    in_test1[g] = true;
    for (std::size_t i : *groups[g]) splits[i] = Split::test1;
  }
  // One anchor per remaining transcript stays in train.
  std::vector<std::size_t> pool;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (in_test1[g]) continue;
    std::vector<std::size_t> members = *groups[g];
    rng.shuffle(std::span(members));
    pool.insert(pool.end(), members.begin() + 1, members.end());
  }
  rng.shuffle(std::span(pool));
  if (pool.size() < want_test2 + want_val) {
    throw ConfigError("split: not enough repeated transcripts to fill test2 and val");
  }
  for (std::size_t k = 0; k < want_test2; ++k) splits[pool[k]] = Split::test2;
  for (std::size_t k = want_test2; k < want_test2 + want_val; ++k) splits[pool[k]] = Split::val;
  return splits;
}

std::vector<ManifestEntry> select_split(std::span<const ManifestEntry> entries, std::span<const Split> splits,
                                        Split which) {
  if (entries.size() != splits.size()) throw ContractError("select_split: size mismatch");
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (splits[i] == which) out.push_back(entries[i]);
  }
  return out;
}

const std::vector<std::string>& default_words() {
  static const std::vector<std::string> words{
      "алматы",  "астана",    "шымкент",  "қарағанды", "ақтөбе",   "тараз",       "павлодар",
      "семей",   "атырау",    "қостанай", "қызылорда", "орал",     "петропавл",   "ақтау",
      "теміртау", "түркістан", "көкшетау", "талдықорған", "екібастұз", "жезқазған", "балқаш",
      "қазақстан", "ресей",   "мәскеу",   "киев",      "минск",    "ташкент",     "бішкек",
      "душанбе", "ашхабад",   "баку",     "ереван",    "тбилиси",  "қытай",       "бейжің",
      "германия", "берлин",   "франция",  "париж",     "лондон",   "түркия",      "анкара"};
  return words;
}

GrayImage render_sample(std::string_view word, std::uint64_t sample_seed, const GenerateOptions& options) {
  RenderOptions render = options.render;
  render.seed = derive_seed(sample_seed, 1);
  if (!options.augment) render.jitter = 0;
  GrayImage img = render_text(word, render);
  if (options.augment) img = augment(img, derive_seed(sample_seed, 2), options.ranges);
  return quantize8(crop_to_ink(img, 2));
}

GeneratedDataset generate_dataset(std::span<const std::string> words, const Charset& charset,
                                  const std::filesystem::path& out_dir, const GenerateOptions& options) {
  if (words.empty()) throw ConfigError("generate: empty word list");
  if (options.per_word < 1) throw ConfigError("generate: per_word must be >= 1");
  std::vector<std::string> normalized;
  for (const std::string& w : words) {
    normalized.push_back(nfc(w));
    charset.encode(normalized.back());
    for (char32_t c : to_u32(normalized.back())) {
      if (!has_glyph(c)) throw EncodeError("generate: no glyph for '" + to_utf8(c) + "' in \"" + w + "\"");
    }
  }
  std::filesystem::create_directories(out_dir / "images");

  GeneratedDataset data;
  std::uint64_t index = 0;
  for (const std::string& w : normalized) {
    for (int k = 0; k < options.per_word; ++k, ++index) {
      char name[32];
      std::snprintf(name, sizeof name, "images/%06llu.pgm", static_cast<unsigned long long>(index));
      write_pgm(out_dir / name, render_sample(w, derive_seed(options.seed, index), options));
      data.entries.push_back({name, w});
    }
  }
  const std::set<std::string> distinct(normalized.begin(), normalized.end());
  if (distinct.size() >= 2 && options.per_word >= 2) {
    data.splits = split_dataset(data.entries, derive_seed(options.seed, ~std::uint64_t{0}));
  } else {
    data.splits.assign(data.entries.size(), Split::train);
  }

  write_manifest(out_dir / "manifest.tsv", data.entries);
  for (Split s : {Split::train, Split::val, Split::test1, Split::test2}) {
    write_manifest(out_dir / (std::string(split_name(s)) + ".tsv"), select_split(data.entries, data.splits, s));
  }
  charset.save(out_dir / "charset.txt");
  std::ofstream dict(out_dir / "words.txt", std::ios::binary);
  for (const std::string& w : std::set<std::string>(normalized.begin(), normalized.end())) dict << w << '\n';
  return data;
}

std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(nfc(line));
  }
  return lines;
}

}  // namespace htr
