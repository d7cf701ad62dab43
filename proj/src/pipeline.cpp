#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "htr/errors.hpp"
#include "htr/pipeline.hpp"
#include "htr/text.hpp"

namespace htr {

RowMatrixXd preprocess(const GrayImage& img, const ModelSpec& spec, const PreprocessOptions& options) {
  GrayImage work = img;
  if (options.deskew) work = deskew(work).image;
  if (options.deslant) work = deslant(work).image;
  return normalize_to_model(work, spec.input_w, spec.input_h);
}

std::vector<ManifestEntry> load_split(const std::filesystem::path& dir, Split split) {
  const std::filesystem::path file = dir / (std::string(split_name(split)) + ".tsv");
  if (!std::filesystem::exists(file)) throw IoError("missing split file " + file.string());
  return read_manifest(file);
}

std::vector<HtrSample> load_htr_samples(const std::filesystem::path& dir, std::span<const ManifestEntry> entries,
                                        const Charset& charset, const ModelSpec& spec,
                                        const PreprocessOptions& options) {
  std::vector<HtrSample> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    out.push_back({preprocess(read_image(dir / e.path), spec, options), charset.encode(e.transcript)});
  }
  return out;
}

std::vector<std::string> class_names(std::span<const ManifestEntry> entries) {
  std::set<std::string> names;
  for (const ManifestEntry& e : entries) names.insert(e.transcript);
  return {names.begin(), names.end()};
}

std::vector<ClassSample> load_class_samples(const std::filesystem::path& dir, std::span<const ManifestEntry> entries,
                                            std::span<const std::string> classes, const ModelSpec& spec,
                                            const PreprocessOptions& options) {
  std::vector<ClassSample> out;
  for (const ManifestEntry& e : entries) {
    const auto it = std::find(classes.begin(), classes.end(), e.transcript);
    if (it == classes.end()) throw ConfigError("class '" + e.transcript + "' is not among the model's classes");
    out.push_back({preprocess(read_image(dir / e.path), spec, options), static_cast<int>(it - classes.begin())});
  }
  return out;
}

const char* decoder_name(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::bestpath: return "bestpath";
    case DecoderKind::beamsearch: return "beamsearch";
    case DecoderKind::wordbeamsearch: return "wordbeamsearch";
  }
  return "?";
}

DecoderKind parse_decoder(std::string_view name) {
  for (DecoderKind k : {DecoderKind::bestpath, DecoderKind::beamsearch, DecoderKind::wordbeamsearch}) {
    if (name == decoder_name(k)) return k;
  }
  throw ConfigError("unknown decoder '" + std::string(name) + "' (valid: bestpath, beamsearch, wordbeamsearch)");
}

Decoder::Decoder(Charset charset, DecoderConfig config) : charset_(std::move(charset)), config_(config) {
  if (config_.beam_width < 1) throw ConfigError("decoder: beam_width must be >= 1");
  if (config_.lm_weight < 0) throw ConfigError("decoder: lm_weight must be >= 0");
}

void Decoder::set_dictionary(std::span<const std::string> words) {
  std::vector<Label> labels;
  for (const std::string& w : words) labels.push_back(charset_.encode(w));
  dictionary_.emplace(labels);
}

void Decoder::set_language_model(std::span<const std::string> corpus, double smoothing) {
  std::vector<Label> labels;
  for (const std::string& line : corpus) labels.push_back(charset_.encode(line));
  lm_.emplace(labels, charset_.size(), smoothing, charset_.index(U' '));
}

Recognition Decoder::decode(const ProbMatrix& probs) const { return decode(probs, config_.kind); }

Recognition Decoder::decode(const ProbMatrix& probs, DecoderKind kind) const {
  if (probs.cols() != charset_.size() + 1) {
    throw ShapeError("decoder: matrix has " + std::to_string(probs.cols()) + " columns, charset needs " +
                     std::to_string(charset_.size() + 1));
  }
  Recognition r;
  switch (kind) {
    case DecoderKind::bestpath: {
      r.label = best_path(probs);
      r.probability = best_path_probability(probs);
      r.score = std::log(r.probability);
      break;
    }
    case DecoderKind::beamsearch: {
      const DecodeResult d = beam_search(probs, config_.beam_width);
      r.label = d.label;
      r.probability = std::exp(d.log_prob);
      r.score = d.score;
      break;
    }
    case DecoderKind::wordbeamsearch: {
      if (!dictionary_) throw ConfigError("wordbeamsearch needs a dictionary");
      WordBeamOptions o;
      o.beam_width = config_.beam_width;
      o.lm_weight = config_.lm_weight;
      o.multi_word = config_.multi_word;
      o.separator = charset_.index(U' ');
      const DecodeResult d = word_beam_search(probs, *dictionary_, lm_ ? &*lm_ : nullptr, o);
      r.label = d.label;
      r.probability = std::exp(d.log_prob);
      r.score = d.score;
      break;
    }
  }
  r.text = charset_.decode(r.label);
  return r;
}

std::vector<ProbMatrix> infer(const Model& model, std::span<const RowMatrixXd> inputs, int batch_size) {
  if (batch_size < 1) throw ConfigError("infer: batch_size must be >= 1");
  std::vector<ProbMatrix> out;
  out.reserve(inputs.size());
  for (std::size_t start = 0; start < inputs.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(inputs.size() - start, static_cast<std::size_t>(batch_size));
    for (ProbMatrix& p : model.forward_htr(inputs.subspan(start, n))) out.push_back(std::move(p));
  }
  return out;
}

ProbMatrix read_prob_matrix(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open matrix " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw IoError("matrix " + file.string() + ": bad number '" + cell + "' on row " +
                      std::to_string(rows.size() + 1));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("matrix " + file.string() + ": ragged row " + std::to_string(rows.size() + 1));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("matrix " + file.string() + " is empty");
  ProbMatrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index t = 0; t < m.rows(); ++t) {
    for (Index k = 0; k < m.cols(); ++k) {
      const double v = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
      if (!(v >= 0)) throw IoError("matrix " + file.string() + ": negative or NaN probability");
      m(t, k) = v;
    }
    if (std::abs(m.row(t).sum() - 1.0) > 1e-6) {
      throw IoError("matrix " + file.string() + ": row " + std::to_string(t + 1) + " does not sum to 1");
    }
  }
  return m;
}

std::vector<std::pair<std::string, std::string>> pair_predictions(std::span<const Recognition> predictions,
                                                                  std::span<const ManifestEntry> entries) {
  if (predictions.size() != entries.size()) throw ContractError("pair_predictions: size mismatch");
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < entries.size(); ++i) pairs.emplace_back(predictions[i].text, entries[i].transcript);
  return pairs;
}

}  // namespace htr
