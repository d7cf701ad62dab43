#include <cmath>

#include "htr/errors.hpp"
#include "htr/layers.hpp"
#include "htr/models.hpp"
#include "htr/random.hpp"

namespace htr {

namespace {

constexpr ModelKind kKinds[] = {ModelKind::simple_cnn, ModelKind::mobilenet_mini, ModelKind::simple_htr,
                                ModelKind::bluche, ModelKind::puigcerver};

struct PoolSize {
  Index h, w;
};

// SimpleHTR: five conv + ReLU + max-pool stages collapsing the height to 1.
constexpr Index kSimpleKernels[] = {5, 5, 3, 3, 3};
constexpr PoolSize kSimplePools[] = {{2, 2}, {2, 2}, {2, 1}, {2, 1}, {2, 1}};

std::vector<Index> simple_htr_channels(ModelSize s) {
  return s == ModelSize::full ? std::vector<Index>{32, 64, 128, 128, 256} : std::vector<Index>{8, 16, 32, 32, 64};
}
Index simple_htr_hidden(ModelSize s) { return s == ModelSize::full ? 256 : 64; }

// Bluche: conv 3x3/8, conv 2x4/16 (stride), gated 3x3, conv 3x3/32, gated
// 3x3, conv 2x4/64 (stride), conv 3x3/128. "2x4" is width x height: a
// kernel 4 tall and 2 wide with matching stride, so 128x32 becomes 32x2.
struct BlucheWidths {
  Index c1, c2, c3, c4, c5, hidden, dense;
};
BlucheWidths bluche_widths(ModelSize s) {
  if (s == ModelSize::full) return {8, 16, 32, 64, 128, 128, 128};
  return {4, 8, 16, 32, 64, 64, 64};
}

// Puigcerver: 5 conv blocks with 16n filters, max-pool after blocks 1-3,
// 5 BLSTM layers, dropout 0.5 before each recurrent layer and the output.
constexpr int kPuigBlocks = 5;
constexpr int kPuigPooled = 3;
constexpr int kPuigLstmLayers = 5;
Index puig_filters(ModelSize s, int n) { return (s == ModelSize::full ? 16 : 8) * n; }
Index puig_hidden(ModelSize s) { return s == ModelSize::full ? 256 : 64; }

// SimpleCNN: conv 5x5 + ReLU + max-pool 4x4, twice, then a softmax layer.
Index cnn_c1(ModelSize s) { return s == ModelSize::full ? 32 : 16; }
Index cnn_c2(ModelSize s) { return s == ModelSize::full ? 64 : 32; }
constexpr Index kCnnPool = 4;

// MobileNet-mini: strided 3x3 stem then 13 depthwise-separable blocks.
constexpr Index kMobileWidths[] = {64, 128, 128, 256, 256, 512, 512, 512, 512, 512, 512, 1024, 1024};
constexpr Index kMobileStrides[] = {1, 2, 1, 2, 1, 2, 1, 1, 1, 1, 1, 2, 1};
Index mobile_divisor(ModelSize s) { return s == ModelSize::full ? 4 : 8; }

Conv2DSpec conv_spec(Index k, Index cin, Index cout) { return {k, k, cin, cout, 1, 1, Padding::same}; }

struct Ctx {
  Model& m;
  Graph& g;
  bool training;
  std::uint64_t seed;
  std::vector<LayerShape>* trace;
  std::uint64_t drops = 0;

  Var p(const std::string& name) { return g.parameter(m.parameter(name)); }
  Var note(const std::string& name, Var v) {
    if (trace) trace->push_back({name, v.shape()});
    return v;
  }
  Var conv(const std::string& name, Var x, const Conv2DSpec& s) {
    return conv2d(x, s, p(name + "/w"), p(name + "/b"));
  }
  Var bn(const std::string& name, Var x) {
    Parameter& mean = m.parameter(name + "/mean");
    Parameter& var = m.parameter(name + "/var");
    return batchnorm(x, p(name + "/gamma"), p(name + "/beta"), mean.value, var.value, training);
  }
  Var drop(Var x, double rate) { return dropout(x, rate, training, derive_seed(seed, drops++)); }
  LSTMParams lstm_params(const std::string& name) {
    return {p(name + "/wx"), p(name + "/wh"), p(name + "/b")};
  }
  Var blstm(const std::string& name, Var x, Index hidden) {
    const LSTMSpec s{x.shape().back(), hidden, Direction::bidirectional};
    return lstm_forward(x, s, lstm_params(name + "/fw"), lstm_params(name + "/bw"));
  }
};

// (N, H, W, C) -> (N, W, H*C): one time step per image column.
Var to_sequence(Var x) {
  const Shape& s = x.shape();
  return reshape(permute(x, {0, 2, 1, 3}), {s[0], s[2], s[1] * s[3]});
}

Var forward_simple_htr(Ctx& c, Var x, ModelSize size) {
  const std::vector<Index> ch = simple_htr_channels(size);
  Index cin = 1;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const std::string name = "conv" + std::to_string(i + 1);
    x = c.note(name, relu(c.conv(name, x, conv_spec(kSimpleKernels[i], cin, ch[i]))));
    x = c.note("pool" + std::to_string(i + 1), maxpool2d(x, kSimplePools[i].h, kSimplePools[i].w));
    cin = ch[i];
  }
  x = c.note("sequence", to_sequence(x));
  x = c.note("blstm1", c.blstm("blstm1", x, simple_htr_hidden(size)));
  x = c.note("blstm2", c.blstm("blstm2", x, simple_htr_hidden(size)));
  return c.note("projection", dense(x, c.p("projection/w"), c.p("projection/b")));
}

Conv2DSpec bluche_stride_spec(Index cin, Index cout) { return {4, 2, cin, cout, 4, 2, Padding::valid}; }

Var forward_bluche(Ctx& c, Var x, ModelSize size) {
  const BlucheWidths w = bluche_widths(size);
  x = c.note("conv1", tanh(c.conv("conv1", x, conv_spec(3, 1, w.c1))));
  x = c.note("conv2", tanh(c.conv("conv2", x, bluche_stride_spec(w.c1, w.c2))));
  x = c.note("gate1", gated_conv2d(x, conv_spec(3, w.c2, w.c2), c.p("gate1/wf"), c.p("gate1/wg"), c.p("gate1/bf"),
                                   c.p("gate1/bg")));
  x = c.note("conv3", tanh(c.conv("conv3", x, conv_spec(3, w.c2, w.c3))));
  x = c.note("gate2", gated_conv2d(x, conv_spec(3, w.c3, w.c3), c.p("gate2/wf"), c.p("gate2/wg"), c.p("gate2/bf"),
                                   c.p("gate2/bg")));
  x = c.note("conv4", tanh(c.conv("conv4", x, bluche_stride_spec(w.c3, w.c4))));
  x = c.note("conv5", tanh(c.conv("conv5", x, conv_spec(3, w.c4, w.c5))));
  x = c.note("sequence", to_sequence(x));
  x = c.note("blstm1", c.blstm("blstm1", x, w.hidden));
  x = c.note("dense1", dense(x, c.p("dense1/w"), c.p("dense1/b")));
  x = c.note("blstm2", c.blstm("blstm2", x, w.hidden));
  return c.note("output", dense(x, c.p("output/w"), c.p("output/b")));
}

Var forward_puigcerver(Ctx& c, Var x, ModelSize size) {
  Index cin = 1;
  for (int n = 1; n <= kPuigBlocks; ++n) {
    const std::string name = "block" + std::to_string(n);
    if (n > kPuigPooled) x = c.drop(x, 0.2);
    x = c.conv(name + "/conv", x, conv_spec(3, cin, puig_filters(size, n)));
    x = c.note(name, relu(c.bn(name + "/bn", x)));
    if (n <= kPuigPooled) x = c.note(name + "/pool", maxpool2x2(x));
    cin = puig_filters(size, n);
  }
  x = c.note("sequence", to_sequence(x));
  for (int l = 1; l <= kPuigLstmLayers; ++l) {
    const std::string name = "blstm" + std::to_string(l);
    x = c.note(name, c.blstm(name, c.drop(x, 0.5), puig_hidden(size)));
  }
  return c.note("output", dense(c.drop(x, 0.5), c.p("output/w"), c.p("output/b")));
}

Var forward_simple_cnn(Ctx& c, Var x, ModelSize size) {
  x = c.note("conv1", relu(c.conv("conv1", x, conv_spec(5, 1, cnn_c1(size)))));
  x = c.note("pool1", maxpool2d(x, kCnnPool, kCnnPool));
  x = c.note("conv2", relu(c.conv("conv2", x, conv_spec(5, cnn_c1(size), cnn_c2(size)))));
  x = c.note("pool2", maxpool2d(x, kCnnPool, kCnnPool));
  const Shape& s = x.shape();
  x = c.note("flatten", reshape(x, {s[0], s[1] * s[2] * s[3]}));
  return c.note("output", dense(x, c.p("output/w"), c.p("output/b")));
}

Var forward_mobilenet(Ctx& c, Var x, ModelSize size) {
  const Index div = mobile_divisor(size);
  Index cin = 32 / div;
  x = c.conv("stem/conv", x, {3, 3, 1, cin, 2, 2, Padding::same});
  x = c.note("stem", relu(c.bn("stem/bn", x)));
  for (int b = 0; b < 13; ++b) {
    const std::string name = "block" + std::to_string(b + 1);
    const Index stride = kMobileStrides[b];
    const Index cout = kMobileWidths[b] / div;
    x = depthwise_conv2d(x, {3, 3, cin, cin, stride, stride, Padding::same}, c.p(name + "/dw"), c.p(name + "/db"));
    x = relu(c.bn(name + "/bn1", x));
    x = conv2d(x, conv_spec(1, cin, cout), c.p(name + "/pw"), c.p(name + "/pb"));
    x = c.note(name, relu(c.bn(name + "/bn2", x)));
    cin = cout;
  }
  x = c.note("avgpool", avgpool_global(x));
  return c.note("output", dense(x, c.p("output/w"), c.p("output/b")));
}

}  // namespace

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::simple_cnn: return "simple_cnn";
    case ModelKind::mobilenet_mini: return "mobilenet_mini";
    case ModelKind::simple_htr: return "simple_htr";
    case ModelKind::bluche: return "bluche";
    case ModelKind::puigcerver: return "puigcerver";
  }
  return "?";
}

ModelKind parse_kind(std::string_view name) {
  std::string valid;
  for (ModelKind k : kKinds) {
    if (name == kind_name(k)) return k;
    valid += valid.empty() ? "" : ", ";
    valid += kind_name(k);
  }
  throw ConfigError("unknown model kind '" + std::string(name) + "' (valid kinds: " + valid + ")");
}

const char* size_name(ModelSize size) { return size == ModelSize::full ? "full" : "small"; }

ModelSize parse_size(std::string_view name) {
  if (name == "full") return ModelSize::full;
  if (name == "small") return ModelSize::small;
  throw ConfigError("unknown model size '" + std::string(name) + "' (expected full or small)");
}

bool is_htr(ModelKind kind) { return kind != ModelKind::simple_cnn && kind != ModelKind::mobilenet_mini; }

std::pair<Index, Index> required_input(ModelKind kind) {
  switch (kind) {
    case ModelKind::simple_cnn:
    case ModelKind::mobilenet_mini: return {61, 512};
    case ModelKind::simple_htr:
    case ModelKind::bluche: return {32, 128};
    case ModelKind::puigcerver: return {64, 256};
  }
  return {0, 0};
}

ModelSpec ModelSpec::defaults(ModelKind kind, ModelSize size) {
  ModelSpec s;
  s.kind = kind;
  s.size = size;
  std::tie(s.input_h, s.input_w) = required_input(kind);
  return s;
}

Parameter& Model::add(const std::string& name, Shape shape, double fan_in, double fan_out, std::uint64_t seed) {
  Parameter& p = add_constant(name, std::move(shape), 0.0, true);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(derive_seed(seed, params_.size()));
  for (double& v : p.value.values()) v = rng.uniform(-limit, limit);
  return p;
}

Parameter& Model::add_constant(const std::string& name, Shape shape, double value, bool trainable) {
  if (index_.count(name)) throw ContractError("model: duplicate parameter " + name);
  index_[name] = params_.size();
  return params_.emplace_back(Parameter{name, Tensor(std::move(shape), value), trainable});
}

Parameter& Model::parameter(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("model: no parameter " + name);
  return params_[it->second];
}

const Parameter& Model::parameter(const std::string& name) const {
  return const_cast<Model*>(this)->parameter(name);
}

std::size_t Model::trainable_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) {
    if (p.trainable) n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  const auto [req_h, req_w] = required_input(spec.kind);
  if (spec.input_h != req_h || spec.input_w != req_w) {
    throw ConfigError(std::string(kind_name(spec.kind)) + " requires input " + std::to_string(req_w) + "x" +
                      std::to_string(req_h) + " (width x height), got " + std::to_string(spec.input_w) + "x" +
                      std::to_string(spec.input_h));
  }
  if (is_htr(spec.kind) && spec.charset_size < 1) throw ConfigError("model: charset_size must be positive");
  if (!is_htr(spec.kind) && spec.num_classes < 1) throw ConfigError("model: num_classes must be positive");

  Model m(spec);
  const auto conv = [&](const std::string& name, Index kh, Index kw, Index cin, Index cout) {
    m.add(name + "/w", {kh, kw, cin, cout}, double(kh * kw * cin), double(kh * kw * cout), seed);
    m.add_constant(name + "/b", {cout}, 0.0, true);
  };
  const auto dense_layer = [&](const std::string& name, Index in, Index out) {
    m.add(name + "/w", {in, out}, double(in), double(out), seed);
    m.add_constant(name + "/b", {out}, 0.0, true);
  };
  const auto bn = [&](const std::string& name, Index c) {
    m.add_constant(name + "/gamma", {c}, 1.0, true);
    m.add_constant(name + "/beta", {c}, 0.0, true);
    m.add_constant(name + "/mean", {c}, 0.0, false);
    m.add_constant(name + "/var", {c}, 1.0, false);
  };
  const auto blstm = [&](const std::string& name, Index in, Index hidden) {
    for (const char* dir : {"/fw", "/bw"}) {
      const std::string base = name + dir;
      m.add(base + "/wx", {in, 4 * hidden}, double(in), double(4 * hidden), seed);
      m.add(base + "/wh", {hidden, 4 * hidden}, double(hidden), double(4 * hidden), seed);
      Parameter& b = m.add_constant(base + "/b", {4 * hidden}, 0.0, true);
      for (Index j = hidden; j < 2 * hidden; ++j) b.value[j] = 1.0;
    }
    return 2 * hidden;
  };
  const Index classes = spec.output_classes();
  const ModelSize size = spec.size;

  switch (spec.kind) {
    case ModelKind::simple_htr: {
      const std::vector<Index> ch = simple_htr_channels(size);
      Index cin = 1, h = spec.input_h;
      for (std::size_t i = 0; i < ch.size(); ++i) {
        conv("conv" + std::to_string(i + 1), kSimpleKernels[i], kSimpleKernels[i], cin, ch[i]);
        cin = ch[i];
        h /= kSimplePools[i].h;
      }
      Index f = blstm("blstm1", h * cin, simple_htr_hidden(size));
      f = blstm("blstm2", f, simple_htr_hidden(size));
      dense_layer("projection", f, classes);
      m.time_steps_ = spec.input_w / 4;
      break;
    }
    case ModelKind::bluche: {
      const BlucheWidths w = bluche_widths(size);
      conv("conv1", 3, 3, 1, w.c1);
      conv("conv2", 4, 2, w.c1, w.c2);
      for (const char* gate : {"gate1", "gate2"}) {
        const Index c = std::string(gate) == "gate1" ? w.c2 : w.c3;
        m.add(std::string(gate) + "/wf", {3, 3, c, c}, double(9 * c), double(9 * c), seed);
        m.add(std::string(gate) + "/wg", {3, 3, c, c}, double(9 * c), double(9 * c), seed);
        m.add_constant(std::string(gate) + "/bf", {c}, 0.0, true);
        m.add_constant(std::string(gate) + "/bg", {c}, 0.0, true);
        if (std::string(gate) == "gate1") conv("conv3", 3, 3, w.c2, w.c3);
      }
      conv("conv4", 4, 2, w.c3, w.c4);
      conv("conv5", 3, 3, w.c4, w.c5);
      const Index h = ((spec.input_h - 4) / 4 + 1 - 4) / 4 + 1;
      Index f = blstm("blstm1", h * w.c5, w.hidden);
      dense_layer("dense1", f, w.dense);
      f = blstm("blstm2", w.dense, w.hidden);
      dense_layer("output", f, classes);
      m.time_steps_ = ((spec.input_w - 2) / 2 + 1 - 2) / 2 + 1;
      break;
    }
    case ModelKind::puigcerver: {
      Index cin = 1;
      for (int n = 1; n <= kPuigBlocks; ++n) {
        const std::string name = "block" + std::to_string(n);
        conv(name + "/conv", 3, 3, cin, puig_filters(size, n));
        bn(name + "/bn", puig_filters(size, n));
        cin = puig_filters(size, n);
      }
      Index f = (spec.input_h >> kPuigPooled) * cin;
      for (int l = 1; l <= kPuigLstmLayers; ++l) f = blstm("blstm" + std::to_string(l), f, puig_hidden(size));
      dense_layer("output", f, classes);
      m.time_steps_ = spec.input_w >> kPuigPooled;
      break;
    }
    case ModelKind::simple_cnn: {
      conv("conv1", 5, 5, 1, cnn_c1(size));
      conv("conv2", 5, 5, cnn_c1(size), cnn_c2(size));
      const Index h = spec.input_h / kCnnPool / kCnnPool, w = spec.input_w / kCnnPool / kCnnPool;
      dense_layer("output", h * w * cnn_c2(size), classes);
      break;
    }
    case ModelKind::mobilenet_mini: {
      const Index div = mobile_divisor(size);
      Index cin = 32 / div;
      conv("stem/conv", 3, 3, 1, cin);
      bn("stem/bn", cin);
      for (int b = 0; b < 13; ++b) {
        const std::string name = "block" + std::to_string(b + 1);
        const Index cout = kMobileWidths[b] / div;
        m.add(name + "/dw", {3, 3, cin}, 9.0, 9.0, seed);
        m.add_constant(name + "/db", {cin}, 0.0, true);
        bn(name + "/bn1", cin);
        m.add(name + "/pw", {1, 1, cin, cout}, double(cin), double(cout), seed);
        m.add_constant(name + "/pb", {cout}, 0.0, true);
        bn(name + "/bn2", cout);
        cin = cout;
      }
      dense_layer("output", cin, classes);
      break;
    }
  }
  return m;
}

Index Model::time_steps() const {
  if (!is_htr(spec_.kind)) throw ContractError("time_steps: classifier models have no time axis");
  return time_steps_;
}

Var Model::forward(Graph& g, const Tensor& batch, bool training, std::uint64_t dropout_seed,
                   std::vector<LayerShape>* trace) {
  const Shape want{batch.rank() == 4 ? batch.dim(0) : 0, spec_.input_h, spec_.input_w, 1};
  if (batch.rank() != 4 || batch.shape() != want) {
    throw ShapeError("model input: expected (N, " + std::to_string(spec_.input_h) + ", " +
                     std::to_string(spec_.input_w) + ", 1), got " + to_string(batch.shape()));
  }
  Ctx c{*this, g, training, dropout_seed, trace};
  Var x = c.note("input", g.constant(batch));
  switch (spec_.kind) {
    case ModelKind::simple_htr: return forward_simple_htr(c, x, spec_.size);
    case ModelKind::bluche: return forward_bluche(c, x, spec_.size);
    case ModelKind::puigcerver: return forward_puigcerver(c, x, spec_.size);
    case ModelKind::simple_cnn: return forward_simple_cnn(c, x, spec_.size);
    case ModelKind::mobilenet_mini: return forward_mobilenet(c, x, spec_.size);
  }
  throw ContractError("model: unknown kind");
}

Tensor Model::make_batch(std::span<const RowMatrixXd> inputs) const {
  const Index n = static_cast<Index>(inputs.size());
  Tensor batch({n, spec_.input_h, spec_.input_w, 1});
  const Index plane = spec_.input_h * spec_.input_w;
  for (Index i = 0; i < n; ++i) {
    const RowMatrixXd& img = inputs[static_cast<std::size_t>(i)];
    if (img.rows() != spec_.input_h || img.cols() != spec_.input_w) {
      throw ShapeError("model input: expected " + std::to_string(spec_.input_h) + "x" +
                       std::to_string(spec_.input_w) + " (rows x cols), got " + std::to_string(img.rows()) + "x" +
                       std::to_string(img.cols()));
    }
    std::copy(img.data(), img.data() + plane, batch.data() + i * plane);
  }
  return batch;
}

std::vector<ProbMatrix> Model::forward_htr(std::span<const RowMatrixXd> inputs) const {
  if (!is_htr(spec_.kind)) throw ContractError("forward_htr: " + std::string(kind_name(spec_.kind)) + " is a classifier");
  if (inputs.empty()) return {};
  Graph g(false);
  // Inference mode reads the batch-norm statistics without updating them.
  const Var logits = const_cast<Model*>(this)->forward(g, make_batch(inputs), false);
  const Tensor& v = logits.value();
  const Index t = v.dim(1), k = v.dim(2);
  std::vector<ProbMatrix> out;
  for (Index i = 0; i < v.dim(0); ++i) {
    const Eigen::Map<const RowMatrixXd> rows(v.data() + i * t * k, t, k);
    out.push_back(softmax_rows(rows));
  }
  return out;
}

ProbMatrix Model::forward_htr(const RowMatrixXd& input) const {
  return forward_htr(std::span<const RowMatrixXd>(&input, 1)).front();
}

Eigen::VectorXd Model::forward_classifier(const RowMatrixXd& input) const {
  if (is_htr(spec_.kind)) throw ContractError("forward_classifier: " + std::string(kind_name(spec_.kind)) + " is an HTR model");
  Graph g(false);
  const Var logits = const_cast<Model*>(this)->forward(g, make_batch(std::span<const RowMatrixXd>(&input, 1)), false);
  const RowMatrixXd probs = softmax_rows(logits.value().matrix());
  return probs.row(0).transpose();
}

std::vector<LayerShape> Model::shape_table() const {
  Graph g(false);
  std::vector<LayerShape> trace;
  const_cast<Model*>(this)->forward(g, Tensor({1, spec_.input_h, spec_.input_w, 1}), false, 0, &trace);
  return trace;
}

}  // namespace htr
