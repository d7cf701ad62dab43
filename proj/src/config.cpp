#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include <CLI11.hpp>

#include "htr/config.hpp"
#include "htr/errors.hpp"

namespace htr {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': bad value '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + text + "'");
}

using Setter = std::function<void(AppConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"train.batch_size", [](AppConfig& c, auto& k, auto& v) { c.train.batch_size = parse_number<int>(k, v); }},
      {"train.lr", [](AppConfig& c, auto& k, auto& v) { c.train.lr = parse_number<double>(k, v); }},
      {"train.optimizer", [](AppConfig& c, auto&, auto& v) { c.train.optimizer = parse_optimizer(v); }},
      {"train.early_stop_patience",
       [](AppConfig& c, auto& k, auto& v) { c.train.early_stop_patience = parse_number<int>(k, v); }},
      {"train.plateau_patience",
       [](AppConfig& c, auto& k, auto& v) { c.train.plateau_patience = parse_number<int>(k, v); }},
      {"train.plateau_factor",
       [](AppConfig& c, auto& k, auto& v) { c.train.plateau_factor = parse_number<double>(k, v); }},
      {"train.max_epochs", [](AppConfig& c, auto& k, auto& v) { c.train.max_epochs = parse_number<int>(k, v); }},
      {"train.seed", [](AppConfig& c, auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"train.clip_norm", [](AppConfig& c, auto& k, auto& v) { c.train.clip_norm = parse_number<double>(k, v); }},
      {"train.min_improvement",
       [](AppConfig& c, auto& k, auto& v) { c.train.min_improvement = parse_number<double>(k, v); }},
      {"train.val_fraction",
       [](AppConfig& c, auto& k, auto& v) { c.train.val_fraction = parse_number<double>(k, v); }},
      {"model.size", [](AppConfig& c, auto&, auto& v) { c.model_size = parse_size(v); }},
      {"preprocess.deskew", [](AppConfig& c, auto& k, auto& v) { c.preprocess.deskew = parse_bool(k, v); }},
      {"preprocess.deslant", [](AppConfig& c, auto& k, auto& v) { c.preprocess.deslant = parse_bool(k, v); }},
      {"decoder.kind", [](AppConfig& c, auto&, auto& v) { c.decoder.kind = parse_decoder(v); }},
      {"decoder.beam_width",
       [](AppConfig& c, auto& k, auto& v) { c.decoder.beam_width = parse_number<int>(k, v); }},
      {"decoder.lm_weight",
       [](AppConfig& c, auto& k, auto& v) { c.decoder.lm_weight = parse_number<double>(k, v); }},
      {"decoder.multi_word", [](AppConfig& c, auto& k, auto& v) { c.decoder.multi_word = parse_bool(k, v); }},
      {"decoder.dictionary", [](AppConfig& c, auto&, auto& v) { c.dictionary = v; }},
      {"decoder.lm", [](AppConfig& c, auto&, auto& v) { c.lm = v; }},
  };
  return table;
}

}  // namespace

AppConfig parse_config(std::istream& in, const std::string& source) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  AppConfig config;
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string key;
    for (const std::string& p : item.parents) key += p + ".";
    key += item.name;
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(source + ": unknown config key '" + key + "'");
    if (item.inputs.size() != 1) throw ConfigError(source + ": key '" + key + "' needs exactly one value");
    try {
      it->second(config, key, item.inputs.front());
    } catch (const ConfigError& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }
  config.train.validate();
  if (config.decoder.beam_width < 1) throw ConfigError(source + ": decoder.beam_width must be >= 1");
  return config;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

}  // namespace htr
