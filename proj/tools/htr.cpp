// htr: dataset generation, training, recognition, evaluation and page
// segmentation from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "htr/config.hpp"
#include "htr/data.hpp"
#include "htr/errors.hpp"
#include "htr/metrics.hpp"
#include "htr/pipeline.hpp"
#include "htr/segment.hpp"
#include "htr/text.hpp"
#include "htr/train.hpp"

namespace fs = std::filesystem;
using namespace htr;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string percent(double fraction) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * fraction << '%';
  return s.str();
}

AppConfig load_optional_config(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

Charset charset_for_data(const fs::path& dir) {
  const fs::path file = dir / "charset.txt";
  return fs::exists(file) ? Charset::load(file) : Charset::default_htr();
}

Charset checkpoint_charset(const Checkpoint& ckpt) { return Charset(ckpt.charset); }

// ---- gen ----

struct GenArgs {
  std::string words;
  std::string charset;
  std::string out;
  int per_word = 50;
  std::uint64_t seed = 0;
  bool no_augment = false;
};

int run_gen(const GenArgs& a) {
  const std::vector<std::string> words = a.words.empty() ? default_words() : read_lines(a.words);
  if (words.empty()) throw UsageError("gen: word list is empty");
  const Charset charset = a.charset.empty() ? Charset::default_htr() : Charset::load(a.charset);
  GenerateOptions opts;
  opts.per_word = a.per_word;
  opts.seed = a.seed;
  opts.augment = !a.no_augment;
  const GeneratedDataset ds = generate_dataset(words, charset, a.out, opts);
  std::array<std::size_t, 4> counts{};
  for (Split s : ds.splits) ++counts[static_cast<std::size_t>(s)];
  std::cout << "generated " << ds.entries.size() << " images for " << words.size() << " words in " << a.out
            << " (train " << counts[0] << ", val " << counts[1] << ", test1 " << counts[2] << ", test2 " << counts[3]
            << ")\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string model;
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::string history;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int run_train(const TrainArgs& a) {
  const ModelKind kind = parse_kind(a.model);
  AppConfig cfg = load_optional_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.max_epochs = *a.epochs;
  cfg.train.validate();

  const fs::path data(a.data);
  const std::vector<ManifestEntry> train_entries = load_split(data, Split::train);
  const std::vector<ManifestEntry> val_entries = load_split(data, Split::val);
  ModelSpec spec = ModelSpec::defaults(kind, cfg.model_size);

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  const TrainLog log = [](const std::string& line) { std::cout << line << '\n' << std::flush; };
  TrainResult result;
  Charset charset;
  std::vector<std::string> names;
  if (is_htr(kind)) {
    charset = charset_for_data(data);
    spec.charset_size = charset.size();
    Model model = Model::build(spec, cfg.train.seed);
    if (resume && resume->charset != charset.symbols()) throw ConfigError("train: resume checkpoint charset differs");
    const auto train = load_htr_samples(data, train_entries, charset, spec, cfg.preprocess);
    const auto val = load_htr_samples(data, val_entries, charset, spec, cfg.preprocess);
    result = train_htr(model, train, val, cfg.train, resume ? &*resume : nullptr, log);
    if (result.skipped > 0) std::cout << "skipped " << result.skipped << " infeasible training samples\n";
  } else {
    std::vector<ManifestEntry> all = train_entries;
    all.insert(all.end(), val_entries.begin(), val_entries.end());
    names = resume ? resume->class_names : class_names(all);
    spec.num_classes = static_cast<int>(names.size());
    Model model = Model::build(spec, cfg.train.seed);
    const auto train = load_class_samples(data, train_entries, names, spec, cfg.preprocess);
    const auto val = load_class_samples(data, val_entries, names, spec, cfg.preprocess);
    result = train_classifier(model, train, val, cfg.train, resume ? &*resume : nullptr, log);
  }

  for (Checkpoint* c : {&result.best, &result.last}) {
    c->charset = charset.symbols();
    c->class_names = names;
  }
  const fs::path out(a.out);
  save_checkpoint(out, result.best);
  save_checkpoint(out.string() + ".last", result.last);
  const fs::path history = a.history.empty() ? fs::path(out.string() + ".history.csv") : fs::path(a.history);
  std::ofstream h(history);
  if (!h) throw IoError("cannot write history " + history.string());
  write_history_csv(h, result.history);
  if (!h) throw IoError("cannot write history " + history.string());

  std::cout << (result.early_stopped ? "early stop" : "finished") << " after epoch " << result.last.schedule.epoch
            << "; best val_loss " << result.best.schedule.best_val_loss << " saved to " << out.string() << '\n';
  return 0;
}

// ---- recognize / eval ----

struct DecodeArgs {
  std::string config;
  std::string decoder;
  std::string dict;
  std::string lm;
  std::optional<int> beam_width;
  bool deskew = false;
  bool deslant = false;
};

AppConfig decode_config(const DecodeArgs& a) {
  AppConfig cfg = load_optional_config(a.config);
  if (!a.decoder.empty()) cfg.decoder.kind = parse_decoder(a.decoder);
  if (!a.dict.empty()) cfg.dictionary = a.dict;
  if (!a.lm.empty()) cfg.lm = a.lm;
  if (a.beam_width) cfg.decoder.beam_width = *a.beam_width;
  cfg.preprocess.deskew = cfg.preprocess.deskew || a.deskew;
  cfg.preprocess.deslant = cfg.preprocess.deslant || a.deslant;
  return cfg;
}

Decoder make_decoder(const Charset& charset, const AppConfig& cfg, bool need_dictionary) {
  if (need_dictionary && cfg.dictionary.empty()) throw UsageError("wordbeamsearch requires --dict");
  Decoder d(charset, cfg.decoder);
  if (!cfg.dictionary.empty()) d.set_dictionary(read_lines(cfg.dictionary));
  if (!cfg.lm.empty()) d.set_language_model(read_lines(cfg.lm));
  return d;
}

struct RecognizeArgs {
  DecodeArgs decode;
  std::string ckpt;
  std::string image;
  std::string matrix;
  std::string charset;
  bool all = false;
};

int run_recognize(const RecognizeArgs& a) {
  if (a.ckpt.empty() == a.matrix.empty()) throw UsageError("recognize: give exactly one of --ckpt or --matrix");
  if (!a.ckpt.empty() && a.image.empty()) throw UsageError("recognize: --ckpt needs --image");
  const AppConfig cfg = decode_config(a.decode);

  ProbMatrix probs;
  Charset charset;
  if (!a.ckpt.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    const Model model = restore_model(ckpt);
    const RowMatrixXd input = preprocess(read_image(a.image), model.spec(), cfg.preprocess);
    if (!is_htr(model.spec().kind)) {
      const Eigen::VectorXd p = model.forward_classifier(input);
      Index best = 0;
      p.maxCoeff(&best);
      const std::string name = static_cast<std::size_t>(best) < ckpt.class_names.size()
                                   ? ckpt.class_names[static_cast<std::size_t>(best)]
                                   : std::to_string(best);
      std::cout << name << '\t' << percent(p(best)) << '\n';
      return 0;
    }
    charset = checkpoint_charset(ckpt);
    probs = model.forward_htr(input);
  } else {
    charset = a.charset.empty() ? Charset::default_htr() : Charset::load(a.charset);
    probs = read_prob_matrix(a.matrix);
  }

  if (a.all) {
    const Decoder d = make_decoder(charset, cfg, false);
    for (DecoderKind k : {DecoderKind::bestpath, DecoderKind::beamsearch, DecoderKind::wordbeamsearch}) {
      if (k == DecoderKind::wordbeamsearch && cfg.dictionary.empty()) continue;
      const Recognition r = d.decode(probs, k);
      std::cout << decoder_name(k) << '\t' << r.text << '\t' << percent(r.probability) << '\n';
    }
    return 0;
  }
  const Decoder d = make_decoder(charset, cfg, cfg.decoder.kind == DecoderKind::wordbeamsearch);
  const Recognition r = d.decode(probs);
  std::cout << r.text << '\t' << percent(r.probability) << '\n';
  return 0;
}

struct EvalArgs {
  DecodeArgs decode;
  std::string ckpt;
  std::string data;
  std::string split = "test1";
  std::string out;
  bool macro = false;
  int batch_size = 32;
};

int run_eval(const EvalArgs& a) {
  const Split split = parse_split(a.split);
  AppConfig cfg = decode_config(a.decode);
  const fs::path data(a.data);
  if (cfg.decoder.kind == DecoderKind::wordbeamsearch && cfg.dictionary.empty() && fs::exists(data / "words.txt")) {
    cfg.dictionary = (data / "words.txt").string();
  }
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const Model model = restore_model(ckpt);
  const std::vector<ManifestEntry> entries = load_split(data, split);
  if (entries.empty()) throw IoError("split " + a.split + " is empty");

  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> symbols;
  if (is_htr(model.spec().kind)) {
    const Charset charset = checkpoint_charset(ckpt);
    symbols = charset.symbol_strings();
    const Decoder decoder = make_decoder(charset, cfg, cfg.decoder.kind == DecoderKind::wordbeamsearch);
    std::vector<RowMatrixXd> inputs;
    for (const ManifestEntry& e : entries) inputs.push_back(preprocess(read_image(data / e.path), model.spec(), cfg.preprocess));
    const std::vector<ProbMatrix> probs = infer(model, inputs, a.batch_size);
    std::vector<Recognition> recs;
    for (const ProbMatrix& p : probs) recs.push_back(decoder.decode(p));
    pairs = pair_predictions(recs, entries);
  } else {
    for (const ManifestEntry& e : entries) {
      const Eigen::VectorXd p =
          model.forward_classifier(preprocess(read_image(data / e.path), model.spec(), cfg.preprocess));
      Index best = 0;
      p.maxCoeff(&best);
      const auto i = static_cast<std::size_t>(best);
      pairs.emplace_back(i < ckpt.class_names.size() ? ckpt.class_names[i] : std::to_string(best), e.transcript);
    }
  }

  EvalOptions opts;
  opts.macro = a.macro;
  const EvalReport report = corpus_eval(pairs, opts);
  if (a.out.empty()) {
    write_report_csv(std::cout, report, symbols);
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write report " + a.out);
    write_report_csv(out, report, symbols);
  }
  std::cerr << a.split << " (" << report.sample_count << " samples, " << decoder_name(cfg.decoder.kind)
            << "): CER " << report.cer << " WER " << report.wer << " WAR " << report.war << " CAR " << report.car
            << '\n';
  return 0;
}

// ---- segment ----

struct SegmentArgs {
  std::string image;
  std::string out;
  SegmentOptions options;
  bool deskew = false;
};

int run_segment(const SegmentArgs& a) {
  GrayImage page = read_image(a.image);
  if (a.deskew) page = deskew(page).image;
  const std::vector<LineSegments> lines = segment_page(page, a.options);
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw IoError("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  out << "level,line,word,x,y,w,h\n";
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const Box& b = lines[l].line;
    out << "line," << l << ",," << b.x << ',' << b.y << ',' << b.w << ',' << b.h << '\n';
    for (std::size_t w = 0; w < lines[l].words.size(); ++w) {
      const Box& wb = lines[l].words[w];
      out << "word," << l << ',' << w << ',' << wb.x << ',' << wb.y << ',' << wb.w << ',' << wb.h << '\n';
    }
  }
  if (!a.out.empty()) {
    std::size_t words = 0;
    for (const LineSegments& l : lines) words += l.words.size();
    std::cout << lines.size() << " lines, " << words << " words\n";
  }
  return 0;
}

void add_decode_options(CLI::App* cmd, DecodeArgs& a) {
  cmd->add_option("--config", a.config, "INI config ([decoder] and [preprocess] sections)");
  cmd->add_option("--decoder", a.decoder, "bestpath, beamsearch or wordbeamsearch");
  cmd->add_option("--dict", a.dict, "Dictionary, one word per line");
  cmd->add_option("--lm", a.lm, "Text used to train the character bigram language model");
  cmd->add_option("--beam-width", a.beam_width, "Beam width");
  cmd->add_flag("--deskew", a.deskew, "Deskew images before recognition");
  cmd->add_flag("--deslant", a.deslant, "Deslant images before recognition");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Handwritten text recognition toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Render a synthetic word-image dataset");
  gen_cmd->add_option("--words", gen.words, "Word list, one per line (default: built-in 42 names)");
  gen_cmd->add_option("--per-word", gen.per_word, "Samples per word")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--charset", gen.charset, "Charset file, one symbol per line");
  gen_cmd->add_flag("--no-augment", gen.no_augment, "Disable affine augmentation");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a generated dataset");
  train_cmd->add_option("--model", train.model, "simple_htr, bluche, puigcerver, simple_cnn or mobilenet_mini")
      ->required();
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--config", train.config, "INI config");
  train_cmd->add_option("--out", train.out, "Best checkpoint path; the final state goes to <out>.last")->required();
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint (usually <out>.last)");
  train_cmd->add_option("--history", train.history, "History CSV (default <out>.history.csv)");
  train_cmd->add_option("--seed", train.seed, "Overrides train.seed");
  train_cmd->add_option("--epochs", train.epochs, "Overrides train.max_epochs");

  RecognizeArgs rec;
  CLI::App* rec_cmd = app.add_subcommand("recognize", "Transcribe one image or probability matrix");
  rec_cmd->add_option("--ckpt", rec.ckpt, "Checkpoint");
  rec_cmd->add_option("--image", rec.image, "PGM or PNG image");
  rec_cmd->add_option("--matrix", rec.matrix, "CSV probability matrix (T rows, C+1 columns) instead of a model");
  rec_cmd->add_option("--charset", rec.charset, "Charset for --matrix (default: built-in)");
  rec_cmd->add_flag("--all", rec.all, "Print every decoder's result");
  add_decode_options(rec_cmd, rec.decode);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "train, val, test1 or test2");
  eval_cmd->add_option("--out", ev.out, "Report CSV (default: stdout)");
  eval_cmd->add_flag("--macro", ev.macro, "Macro-average CER over samples");
  eval_cmd->add_option("--batch-size", ev.batch_size, "Inference batch size")->check(CLI::PositiveNumber);
  add_decode_options(eval_cmd, ev.decode);

  SegmentArgs seg;
  CLI::App* seg_cmd = app.add_subcommand("segment", "Find line and word boxes on a page");
  seg_cmd->add_option("--image", seg.image, "Page image")->required();
  seg_cmd->add_option("--out", seg.out, "Box CSV (default: stdout)");
  seg_cmd->add_option("--threshold", seg.options.threshold, "Gap threshold as a fraction of the profile maximum");
  seg_cmd->add_option("--min-gap-rows", seg.options.min_gap_rows, "Minimum blank rows between lines");
  seg_cmd->add_option("--min-gap-cols", seg.options.min_gap_cols, "Minimum blank columns between words");
  seg_cmd->add_flag("--deskew", seg.deskew, "Deskew the page first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(train);
    if (*rec_cmd) return run_recognize(rec);
    if (*eval_cmd) return run_eval(ev);
    if (*seg_cmd) return run_segment(seg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
