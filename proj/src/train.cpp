#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include "htr/decode.hpp"
#include "htr/errors.hpp"
#include "htr/metrics.hpp"
#include "htr/random.hpp"
#include "htr/text.hpp"
#include "htr/train.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace htr {

const char* optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "adadelta"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "adadelta") return OptimizerKind::adadelta;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or adadelta)");
}

namespace {

void init_moments(MomentState& s, const Tensor& param) {
  if (s.first.same_shape(param)) return;
  s.first = Tensor(param.shape());
  s.second = Tensor(param.shape());
}

}  // namespace

void adam_step(Tensor& param, const Tensor& grad, MomentState& s, double lr, std::int64_t step,
               const AdamOptions& o) {
  if (!grad.same_shape(param)) throw ShapeError("adam_step: gradient shape differs from parameter");
  init_moments(s, param);
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  auto p = param.flat().array();
  auto g = grad.flat().array();
  auto m = s.first.flat().array();
  auto v = s.second.flat().array();
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g.square();
  p -= lr * (m / c1) / ((v / c2).sqrt() + o.epsilon);
}

void adadelta_step(Tensor& param, const Tensor& grad, MomentState& s, double lr, const AdadeltaOptions& o) {
  if (!grad.same_shape(param)) throw ShapeError("adadelta_step: gradient shape differs from parameter");
  init_moments(s, param);
  auto p = param.flat().array();
  auto g = grad.flat().array();
  auto acc_grad = s.first.flat().array();
  auto acc_update = s.second.flat().array();
  acc_grad = o.rho * acc_grad + (1.0 - o.rho) * g.square();
  const Eigen::ArrayXd update = g * (acc_update + o.epsilon).sqrt() / (acc_grad + o.epsilon).sqrt();
  p -= lr * update;
  acc_update = o.rho * acc_update + (1.0 - o.rho) * update.square();
}

void Optimizer::step(std::deque<Parameter>& params, std::vector<Tensor>& grads, double lr) {
  ++steps_;
  std::size_t k = 0;
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    if (k >= grads.size() || k >= states_.size()) throw ContractError("optimizer: gradient count mismatch");
    if (kind_ == OptimizerKind::adam) {
      adam_step(p.value, grads[k], states_[k], lr, steps_);
    } else {
      adadelta_step(p.value, grads[k], states_[k], lr);
    }
    ++k;
  }
  if (k != grads.size()) throw ContractError("optimizer: gradient count mismatch");
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0;
  for (const Tensor& g : grads) sq += g.flat().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads) g.flat() *= s;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("train: lr must be a non-negative number");
  if (early_stop_patience < 1) throw ConfigError("train: early_stop_patience must be >= 1");
  if (plateau_patience < 1) throw ConfigError("train: plateau_patience must be >= 1");
  if (!(plateau_factor > 0 && plateau_factor < 1)) throw ConfigError("train: plateau_factor must be in (0, 1)");
  if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
  if (!(min_improvement >= 0)) throw ConfigError("train: min_improvement must be >= 0");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("train: val_fraction must be in [0, 1)");
}

ScheduleEvent update_schedule(ScheduleState& s, double val_loss, const TrainConfig& config) {
  ScheduleEvent ev;
  if (val_loss < s.best_val_loss - config.min_improvement) {
    s.best_val_loss = val_loss;
    s.plateau_stale = 0;
    s.early_stale = 0;
    ev.improved = true;
    return ev;
  }
  if (++s.plateau_stale >= config.plateau_patience) {
    s.lr *= config.plateau_factor;
    s.plateau_stale = 0;
    ev.lr_decayed = true;
  }
  ev.stop = ++s.early_stale >= config.early_stop_patience;
  return ev;
}

// ---- checkpoint I/O ----

void round_to_float(Tensor& t) {
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw IoError("checkpoint " + file_ + " is truncated");
    return v;
  }
  std::string str() {
    const std::uint32_t n = pod<std::uint32_t>();
    if (n > (1u << 20)) throw IoError("checkpoint " + file_ + ": implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw IoError("checkpoint " + file_ + " is truncated");
    return s;
  }

 private:
  std::istream& in_;
  std::string file_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  Writer w(out);
  out.write("HTRK", 4);
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.spec.kind));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.spec.size));
  w.pod<std::int32_t>(c.spec.charset_size);
  w.pod<std::int32_t>(c.spec.num_classes);
  w.pod<std::int32_t>(static_cast<std::int32_t>(c.spec.input_h));
  w.pod<std::int32_t>(static_cast<std::int32_t>(c.spec.input_w));
  w.str(to_utf8(c.charset));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.class_names.size()));
  for (const std::string& name : c.class_names) w.str(name);
  w.pod<std::int32_t>(c.schedule.epoch);
  w.pod<double>(c.schedule.best_val_loss);
  w.pod<double>(c.schedule.lr);
  w.pod<std::int32_t>(c.schedule.plateau_stale);
  w.pod<std::int32_t>(c.schedule.early_stale);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.optimizer));
  w.pod<std::int64_t>(c.optimizer_steps);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const NamedTensor& t : c.tensors) {
    w.str(t.name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.value.rank()));
    for (Index d : t.value.shape()) w.pod<std::uint32_t>(static_cast<std::uint32_t>(d));
    std::vector<float> data(static_cast<std::size_t>(t.value.size()));
    for (Index i = 0; i < t.value.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(t.value[i]);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HTRK", 4) != 0) throw IoError(path.string() + " is not an HTRK checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw ConfigError("checkpoint " + path.string() + " has unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  const auto kind = r.pod<std::uint32_t>();
  const auto size = r.pod<std::uint32_t>();
  if (kind > static_cast<std::uint32_t>(ModelKind::puigcerver) || size > 1) {
    throw IoError("checkpoint " + path.string() + ": bad model spec");
  }
  c.spec.kind = static_cast<ModelKind>(kind);
  c.spec.size = static_cast<ModelSize>(size);
  c.spec.charset_size = r.pod<std::int32_t>();
  c.spec.num_classes = r.pod<std::int32_t>();
  c.spec.input_h = r.pod<std::int32_t>();
  c.spec.input_w = r.pod<std::int32_t>();
  c.charset = to_u32(r.str());
  const auto classes = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < classes; ++i) c.class_names.push_back(r.str());
  c.schedule.epoch = r.pod<std::int32_t>();
  c.schedule.best_val_loss = r.pod<double>();
  c.schedule.lr = r.pod<double>();
  c.schedule.plateau_stale = r.pod<std::int32_t>();
  c.schedule.early_stale = r.pod<std::int32_t>();
  const auto opt = r.pod<std::uint32_t>();
  if (opt > 1) throw IoError("checkpoint " + path.string() + ": bad optimizer kind");
  c.optimizer = static_cast<OptimizerKind>(opt);
  c.optimizer_steps = r.pod<std::int64_t>();
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw IoError("checkpoint " + path.string() + ": bad rank for " + t.name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.pod<std::uint32_t>());
    t.value = Tensor(shape);
    std::vector<float> data(static_cast<std::size_t>(t.value.size()));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw IoError("checkpoint " + path.string() + " is truncated");
    for (Index k = 0; k < t.value.size(); ++k) t.value[k] = data[static_cast<std::size_t>(k)];
    c.tensors.push_back(std::move(t));
  }
  return c;
}

Checkpoint make_checkpoint(const Model& model, const Optimizer* optimizer, const ScheduleState& schedule) {
  Checkpoint c;
  c.spec = model.spec();
  c.schedule = schedule;
  for (const Parameter& p : model.parameters()) c.tensors.push_back({p.name, p.value});
  if (optimizer) {
    c.optimizer = optimizer->kind();
    c.optimizer_steps = optimizer->steps();
    std::size_t k = 0;
    for (const Parameter& p : model.parameters()) {
      if (!p.trainable) continue;
      const MomentState& s = optimizer->states()[k++];
      if (s.first.size() == 0) continue;
      c.tensors.push_back({"opt/1/" + p.name, s.first});
      c.tensors.push_back({"opt/2/" + p.name, s.second});
    }
  }
  return c;
}

namespace {

const Tensor* find_tensor(const Checkpoint& c, const std::string& name) {
  for (const NamedTensor& t : c.tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

void load_parameters(Model& model, const Checkpoint& c) {
  if (!(model.spec() == c.spec)) throw ConfigError("checkpoint: model spec differs from the checkpoint's");
  for (Parameter& p : model.parameters()) {
    const Tensor* t = find_tensor(c, p.name);
    if (!t) throw ConfigError("checkpoint: missing parameter " + p.name);
    if (!t->same_shape(p.value)) {
      throw ShapeError("checkpoint: parameter " + p.name + " has shape " + to_string(t->shape()) + ", model expects " +
                       to_string(p.value.shape()));
    }
    p.value = *t;
  }
}

}  // namespace

Model restore_model(const Checkpoint& c) {
  Model m = Model::build(c.spec, 0);
  load_parameters(m, c);
  return m;
}

Optimizer restore_optimizer(const Checkpoint& c, const Model& model) {
  std::size_t trainable = 0;
  for (const Parameter& p : model.parameters()) trainable += p.trainable;
  Optimizer opt(c.optimizer, trainable);
  opt.set_steps(c.optimizer_steps);
  std::size_t k = 0;
  for (const Parameter& p : model.parameters()) {
    if (!p.trainable) continue;
    MomentState& s = opt.states()[k++];
    const Tensor* first = find_tensor(c, "opt/1/" + p.name);
    const Tensor* second = find_tensor(c, "opt/2/" + p.name);
    if (!first || !second) continue;
    if (!first->same_shape(p.value) || !second->same_shape(p.value)) {
      throw ShapeError("checkpoint: optimizer state for " + p.name + " has the wrong shape");
    }
    s.first = *first;
    s.second = *second;
  }
  return opt;
}

// ---- training ----

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,val_loss,val_cer,lr\n";
  out.precision(17);
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_cer << ',' << r.lr << '\n';
  }
}

namespace {

std::size_t trainable_count(const Model& m) {
  std::size_t n = 0;
  for (const Parameter& p : m.parameters()) n += p.trainable;
  return n;
}

// (val_loss, val_error_percent)
using Evaluate = std::function<std::pair<double, double>()>;
// Mean loss over the listed samples, built on `g`.
using BatchLoss = std::function<Var(Graph& g, std::span<const std::size_t> batch, std::uint64_t dropout_seed)>;

TrainResult run_training(Model& model, std::size_t n_train, const BatchLoss& batch_loss, const Evaluate& evaluate,
                         const TrainConfig& config, const Checkpoint* resume, const TrainLog& log) {
  config.validate();
  if (n_train == 0) throw ConfigError("train: no usable training samples");
  Optimizer opt(config.optimizer, trainable_count(model));
  ScheduleState st;
  st.lr = config.lr;
  if (resume) {
    load_parameters(model, *resume);
    if (resume->optimizer != config.optimizer) throw ConfigError("train: resume optimizer differs from config");
    opt = restore_optimizer(*resume, model);
    st = resume->schedule;
  }

  TrainResult result;
  result.best = make_checkpoint(model, &opt, st);
  std::vector<std::size_t> order(n_train);
  for (int epoch = st.epoch + 1; epoch <= config.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(epoch_seed).shuffle(std::span(order));

    double total = 0;
    std::uint64_t batch_index = 0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      Graph g;
      const Var loss = batch_loss(g, batch, derive_seed(epoch_seed, batch_index++));
      g.backward(loss);
      std::vector<Tensor> grads;
      for (const Parameter& p : model.parameters()) {
        if (p.trainable) grads.push_back(g.gradient(p));
      }
      clip_global_norm(grads, config.clip_norm);
      opt.step(model.parameters(), grads, st.lr);
      total += loss.value().item() * static_cast<double>(batch.size());
    }
    for (Parameter& p : model.parameters()) round_to_float(p.value);
    for (MomentState& s : opt.states()) {
      round_to_float(s.first);
      round_to_float(s.second);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = st.lr;
    rec.train_loss = total / static_cast<double>(n_train);
    std::tie(rec.val_loss, rec.val_cer) = evaluate();
    const ScheduleEvent ev = update_schedule(st, rec.val_loss, config);
    st.epoch = epoch;
    result.history.push_back(rec);
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %d: train_loss %.4f val_loss %.4f val_cer %.2f lr %.3g%s%s", epoch,
                    rec.train_loss, rec.val_loss, rec.val_cer, rec.lr, ev.improved ? " *" : "",
                    ev.lr_decayed ? " (lr decayed)" : "");
      log(line);
    }
    if (ev.improved) result.best = make_checkpoint(model, &opt, st);
    if (ev.stop) {
      result.early_stopped = true;
      if (log) log("early stop: no improvement for " + std::to_string(config.early_stop_patience) + " epochs");
      break;
    }
  }
  result.last = make_checkpoint(model, &opt, st);
  if (result.history.empty()) result.best = result.last;
  return result;
}

}  // namespace

double mean_ctc_loss(const Model& model, std::span<const HtrSample> samples, int batch_size) {
  const Index frames = model.time_steps();
  double total = 0;
  std::size_t count = 0;
  std::vector<RowMatrixXd> inputs;
  std::vector<const Label*> labels;
  const auto flush = [&] {
    if (inputs.empty()) return;
    Graph g(false);
    const Var logits = const_cast<Model&>(model).forward(g, model.make_batch(inputs), false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      total += ctc_loss(select(logits, static_cast<Index>(i)), *labels[i]).value().item();
      ++count;
    }
    inputs.clear();
    labels.clear();
  };
  for (const HtrSample& s : samples) {
    if (ctc_min_frames(s.label) > frames) continue;
    inputs.push_back(s.input);
    labels.push_back(&s.label);
    if (static_cast<int>(inputs.size()) == batch_size) flush();
  }
  flush();
  if (count == 0) throw ConfigError("no usable samples to evaluate");
  return total / static_cast<double>(count);
}

TrainResult train_htr(Model& model, std::span<const HtrSample> train, std::span<const HtrSample> val,
                      const TrainConfig& config, const Checkpoint* resume, const TrainLog& log) {
  if (!is_htr(model.spec().kind)) throw ConfigError("train_htr: model is a classifier");
  if (val.empty()) throw ConfigError("train_htr: validation split is empty");
  const Index frames = model.time_steps();
  std::vector<const HtrSample*> usable;
  int skipped = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const Index need = ctc_min_frames(train[i].label);
    if (need > frames) {
      ++skipped;
      if (log) {
        log("warning: skipping training sample " + std::to_string(i) + ": label needs " + std::to_string(need) +
            " frames, model emits " + std::to_string(frames));
      }
      continue;
    }
    usable.push_back(&train[i]);
  }

  const BatchLoss batch_loss = [&](Graph& g, std::span<const std::size_t> batch, std::uint64_t seed) {
    std::vector<RowMatrixXd> inputs;
    for (std::size_t i : batch) inputs.push_back(usable[i]->input);
    const Var logits = model.forward(g, model.make_batch(inputs), true, seed);
    Var loss;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Var l = ctc_loss(select(logits, static_cast<Index>(i)), usable[batch[i]]->label);
      loss = i == 0 ? l : add(loss, l);
    }
    return scale(loss, 1.0 / static_cast<double>(batch.size()));
  };
  const Evaluate evaluate = [&] {
    const double loss = mean_ctc_loss(model, val, config.batch_size);
    std::size_t edits = 0, chars = 0;
    for (std::size_t start = 0; start < val.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(val.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<RowMatrixXd> inputs;
      for (std::size_t i = start; i < end; ++i) inputs.push_back(val[i].input);
      const std::vector<ProbMatrix> probs = model.forward_htr(inputs);
      for (std::size_t i = start; i < end; ++i) {
        const Label hyp = best_path(probs[i - start]);
        edits += edit_ops<int>(val[i].label, hyp).distance();
        chars += val[i].label.size();
      }
    }
    return std::pair{loss, 100.0 * static_cast<double>(edits) / static_cast<double>(std::max<std::size_t>(chars, 1))};
  };
  TrainResult r = run_training(model, usable.size(), batch_loss, evaluate, config, resume, log);
  r.skipped = skipped;
  return r;
}

TrainResult train_classifier(Model& model, std::span<const ClassSample> train, std::span<const ClassSample> val,
                             const TrainConfig& config, const Checkpoint* resume, const TrainLog& log) {
  if (is_htr(model.spec().kind)) throw ConfigError("train_classifier: model is an HTR model");
  config.validate();
  const int classes = model.spec().num_classes;
  for (std::span<const ClassSample> set : {train, val}) {
    for (const ClassSample& s : set) {
      if (s.label < 0 || s.label >= classes) {
        throw ConfigError("train_classifier: label " + std::to_string(s.label) + " outside the model's " +
                          std::to_string(classes) + " classes");
      }
    }
  }
  std::vector<const ClassSample*> fit, held;
  if (val.empty()) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng(derive_seed(config.seed, ~std::uint64_t{0})).shuffle(std::span(idx));
    std::size_t n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(train.size())));
    if (n_val == 0 && train.size() >= 2) n_val = 1;
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_val ? held : fit).push_back(&train[idx[k]]);
  } else {
    for (const ClassSample& s : train) fit.push_back(&s);
    for (const ClassSample& s : val) held.push_back(&s);
  }
  if (held.empty()) throw ConfigError("train_classifier: validation set is empty");

  const BatchLoss batch_loss = [&](Graph& g, std::span<const std::size_t> batch, std::uint64_t seed) {
    std::vector<RowMatrixXd> inputs;
    std::vector<int> targets;
    for (std::size_t i : batch) {
      inputs.push_back(fit[i]->input);
      targets.push_back(fit[i]->label);
    }
    return cross_entropy_logits(model.forward(g, model.make_batch(inputs), true, seed), targets);
  };
  const Evaluate evaluate = [&] {
    double loss = 0;
    std::size_t wrong = 0;
    for (const ClassSample* s : held) {
      const Eigen::VectorXd p = model.forward_classifier(s->input);
      Eigen::Index best;
      p.maxCoeff(&best);
      wrong += best != s->label;
      loss -= std::log(std::max(p[s->label], 1e-300));
    }
    const double n = static_cast<double>(held.size());
    return std::pair{loss / n, 100.0 * static_cast<double>(wrong) / n};
  };
  return run_training(model, fit.size(), batch_loss, evaluate, config, resume, log);
}

}  // namespace htr
