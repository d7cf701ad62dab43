#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "htr/models.hpp"
#include "htr/pipeline.hpp"
#include "htr/train.hpp"

namespace htr {

/// Settings read from an INI file:
///
///   [train]      batch_size lr optimizer early_stop_patience plateau_patience
///                plateau_factor max_epochs seed clip_norm min_improvement
///                val_fraction
///   [model]      size (full|small)
///   [preprocess] deskew deslant
///   [decoder]    kind beam_width lm_weight multi_word dictionary lm
struct AppConfig {
  TrainConfig train;
  ModelSize model_size = ModelSize::full;
  PreprocessOptions preprocess;
  DecoderConfig decoder;
  std::string dictionary;  // word list path, empty for none
  std::string lm;          // LM training text path, empty for none
};

/// Throws ConfigError naming the offending key for unknown keys, sections
/// or malformed values.
AppConfig parse_config(std::istream& in, const std::string& source = "config");
AppConfig load_config(const std::filesystem::path& path);

}  // namespace htr
