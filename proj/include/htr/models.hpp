#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <utility>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htr/autodiff.hpp"
#include "htr/ctc.hpp"

namespace htr {

enum class ModelKind { simple_cnn, mobilenet_mini, simple_htr, bluche, puigcerver };

/// `small` shrinks channel and hidden widths for desk-scale training; the
/// layer structure and output shapes are unchanged.
enum class ModelSize { full, small };

const char* kind_name(ModelKind kind);
/// Throws ConfigError listing the valid kinds.
ModelKind parse_kind(std::string_view name);
const char* size_name(ModelSize size);
ModelSize parse_size(std::string_view name);
bool is_htr(ModelKind kind);

struct ModelSpec {
  ModelKind kind = ModelKind::simple_htr;
  ModelSize size = ModelSize::full;
  int charset_size = 43;  // HTR kinds
  int num_classes = 10;   // classifier kinds
  Index input_h = 32;
  Index input_w = 128;

  /// Spec with the input size the kind requires.
  static ModelSpec defaults(ModelKind kind, ModelSize size = ModelSize::full);
  int output_classes() const { return is_htr(kind) ? charset_size + 1 : num_classes; }
  bool operator==(const ModelSpec&) const = default;
};

/// Required (height, width) for a kind.
std::pair<Index, Index> required_input(ModelKind kind);

struct LayerShape {
  std::string name;
  Shape shape;
};

class Model {
 public:
  /// Allocates and initializes every parameter: weights uniform in
  /// +-sqrt(6 / (fan_in + fan_out)), biases zero except the LSTM forget
  /// gate (one), batch-norm scale one. Throws ConfigError on an invalid spec.
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  /// Trainable weights and non-trainable batch-norm statistics, in a fixed
  /// order. Addresses are stable for the model's lifetime.
  std::deque<Parameter>& parameters() { return params_; }
  const std::deque<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;
  std::size_t trainable_count() const;

  /// Output time steps for HTR kinds.
  Index time_steps() const;

  /// Logits for a (N, H, W, 1) batch: (N, T, C+1) for HTR kinds, (N, K) for
  /// classifiers. Training mode enables dropout (seeded) and batch
  /// statistics. `trace` receives every layer's output shape.
  Var forward(Graph& g, const Tensor& batch, bool training, std::uint64_t dropout_seed = 0,
              std::vector<LayerShape>* trace = nullptr);

  /// Stacks H x W inputs into a (N, H, W, 1) tensor; throws ShapeError on
  /// size mismatch.
  Tensor make_batch(std::span<const RowMatrixXd> inputs) const;

  /// Per-frame softmax posteriors for one preprocessed input (H x W).
  ProbMatrix forward_htr(const RowMatrixXd& input) const;
  std::vector<ProbMatrix> forward_htr(std::span<const RowMatrixXd> inputs) const;
  /// Class probabilities for one preprocessed input.
  Eigen::VectorXd forward_classifier(const RowMatrixXd& input) const;

  /// Layer-by-layer output shapes for a batch of one.
  std::vector<LayerShape> shape_table() const;

 private:
  explicit Model(const ModelSpec& spec) : spec_(spec) {}
  Parameter& add(const std::string& name, Shape shape, double fan_in, double fan_out, std::uint64_t seed);
  Parameter& add_constant(const std::string& name, Shape shape, double value, bool trainable);

  ModelSpec spec_;
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  Index time_steps_ = 0;
};

}  // namespace htr
