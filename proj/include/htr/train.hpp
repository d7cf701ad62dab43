#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "htr/data.hpp"
#include "htr/models.hpp"

namespace htr {

// ---- optimizers ----

enum class OptimizerKind { adam, adadelta };
const char* optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdadeltaOptions {
  double rho = 0.95;
  double epsilon = 1e-6;
};

/// First and second moment estimates; `first`/`second` are empty until the
/// first step.
struct MomentState {
  Tensor first;
  Tensor second;
};

/// Bias-corrected Adam; `step` is the 1-based index of this update.
void adam_step(Tensor& param, const Tensor& grad, MomentState& state, double lr, std::int64_t step,
               const AdamOptions& options = {});

/// Adadelta with a learning-rate multiplier: `first` accumulates squared
/// gradients, `second` squared updates.
void adadelta_step(Tensor& param, const Tensor& grad, MomentState& state, double lr,
                   const AdadeltaOptions& options = {});

/// Per-parameter optimizer state for every trainable parameter of a model.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t trainable_params) : kind_(kind), states_(trainable_params) {}

  OptimizerKind kind() const { return kind_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }
  std::vector<MomentState>& states() { return states_; }
  const std::vector<MomentState>& states() const { return states_; }

  /// Updates the trainable parameters in order; `grads` holds one tensor per
  /// trainable parameter.
  void step(std::deque<Parameter>& params, std::vector<Tensor>& grads, double lr);

 private:
  OptimizerKind kind_;
  std::vector<MomentState> states_;
  std::int64_t steps_ = 0;
};

/// Scales `grads` so their joint L2 norm is at most `max_norm` (no-op when
/// max_norm <= 0). Returns the norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// ---- schedule ----

struct TrainConfig {
  int batch_size = 32;
  double lr = 0.001;
  OptimizerKind optimizer = OptimizerKind::adam;
  int early_stop_patience = 20;
  int plateau_patience = 10;
  double plateau_factor = 0.2;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;          // <= 0 disables clipping
  double min_improvement = 1e-6;   // validation loss must drop by at least this
  double val_fraction = 0.1;       // classifier holdout

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct ScheduleState {
  int epoch = 0;  // completed epochs
  double best_val_loss = std::numeric_limits<double>::infinity();
  double lr = 0.001;
  int plateau_stale = 0;
  int early_stale = 0;
};

struct ScheduleEvent {
  bool improved = false;
  bool lr_decayed = false;
  bool stop = false;
};

/// Folds one epoch's validation loss into the plateau and early-stopping
/// counters.
ScheduleEvent update_schedule(ScheduleState& state, double val_loss, const TrainConfig& config);

// ---- checkpoints ----

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Binary layout (little-endian): "HTRK", u32 version, model spec, charset,
/// schedule state, optimizer kind and step count, then named tensors stored
/// as 32-bit floats. Optimizer moments are stored as tensors named
/// "opt/1/<param>" and "opt/2/<param>".
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelSpec spec;
  std::u32string charset;  // empty for classifiers
  std::vector<std::string> class_names;
  ScheduleState schedule;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::int64_t optimizer_steps = 0;
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws IoError on a truncated file or bad magic, ConfigError on an
/// unsupported version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of a model (and optionally its optimizer).
Checkpoint make_checkpoint(const Model& model, const Optimizer* optimizer, const ScheduleState& schedule);
/// Builds the checkpoint's architecture and loads its parameters; throws
/// ShapeError or ConfigError when tensors are missing or mismatched.
Model restore_model(const Checkpoint& checkpoint);
/// Optimizer state saved with `checkpoint` for `model`.
Optimizer restore_optimizer(const Checkpoint& checkpoint, const Model& model);

/// Rounds every value to the nearest 32-bit float, so in-memory state
/// matches what a checkpoint stores.
void round_to_float(Tensor& t);

// ---- training loops ----

struct HtrSample {
  RowMatrixXd input;  // model input (input_h x input_w)
  Label label;
};

struct ClassSample {
  RowMatrixXd input;
  int label = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_cer = 0;  // character error rate (HTR) or error rate (classifier), percent
  double lr = 0;
};

/// CSV with header epoch,train_loss,val_loss,val_cer,lr.
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

struct TrainResult {
  std::vector<EpochRecord> history;
  Checkpoint best;  // lowest validation loss
  Checkpoint last;  // state after the final epoch, for resuming
  int skipped = 0;  // training samples whose label cannot fit the model's frames
  bool early_stopped = false;
};

using TrainLog = std::function<void(const std::string&)>;

/// Minibatch training with CTC loss. Each epoch shuffles with a seed derived
/// from (seed, epoch), clips gradients, steps the optimizer, then rounds the
/// parameters and optimizer state to 32-bit floats so that resuming from
/// `last` reproduces the uninterrupted trajectory exactly. `resume` restores
/// parameters, optimizer and schedule and continues up to max_epochs.
TrainResult train_htr(Model& model, std::span<const HtrSample> train, std::span<const HtrSample> val,
                      const TrainConfig& config, const Checkpoint* resume = nullptr, const TrainLog& log = {});

/// Cross-entropy training. `val` may be empty, in which case
/// config.val_fraction of `train` is held out (seeded).
TrainResult train_classifier(Model& model, std::span<const ClassSample> train, std::span<const ClassSample> val,
                             const TrainConfig& config, const Checkpoint* resume = nullptr,
                             const TrainLog& log = {});

/// Mean CTC loss over `samples` (inference mode; samples whose label cannot
/// fit are skipped).
double mean_ctc_loss(const Model& model, std::span<const HtrSample> samples, int batch_size = 32);

}  // namespace htr
