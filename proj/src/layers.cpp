#include "htr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "htr/random.hpp"

namespace htr {
namespace {

struct ImageDims {
  Index n, h, w, c;
  bool batched;
};

ImageDims image_dims(const Tensor& t, const char* op) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  throw ShapeError(std::string(op) + ": expected (H,W,C) or (N,H,W,C), got " +
                   to_string(t.shape()));
}

Shape image_shape(const ImageDims& d, Index h, Index w, Index c) {
  return d.batched ? Shape{d.n, h, w, c} : Shape{h, w, c};
}

struct ConvGeometry {
  Index n, h, w, c;
  Index oh, ow;
  Index kh, kw, sh, sw;
  Index pad_top, pad_left;
};

ConvGeometry conv_geometry(const ImageDims& d, const Conv2DSpec& s) {
  ConvGeometry g{d.n, d.h, d.w, d.c, s.out_h(d.h), s.out_w(d.w),
                 s.kernel_h, s.kernel_w, s.stride_h, s.stride_w, 0, 0};
  if (s.padding == Padding::same) {
    g.pad_top = std::max<Index>((g.oh - 1) * g.sh + g.kh - g.h, 0) / 2;
    g.pad_left = std::max<Index>((g.ow - 1) * g.sw + g.kw - g.w, 0) / 2;
  }
  if (g.oh <= 0 || g.ow <= 0) {
    throw ShapeError("conv: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                     " does not fit input " + std::to_string(g.h) + "x" + std::to_string(g.w));
  }
  return g;
}

// Rows: (n, oy, ox); columns: (ky, kx, c) to match the weight layout.
RowMatrixXd im2col(const double* x, const ConvGeometry& g) {
  RowMatrixXd cols = RowMatrixXd::Zero(g.n * g.oh * g.ow, g.kh * g.kw * g.c);
  for (Index n = 0; n < g.n; ++n) {
    for (Index oy = 0; oy < g.oh; ++oy) {
      for (Index ox = 0; ox < g.ow; ++ox) {
        double* row = cols.row((n * g.oh + oy) * g.ow + ox).data();
        for (Index ky = 0; ky < g.kh; ++ky) {
          const Index iy = oy * g.sh + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (Index kx = 0; kx < g.kw; ++kx) {
            const Index ix = ox * g.sw + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const double* src = x + ((n * g.h + iy) * g.w + ix) * g.c;
            std::copy(src, src + g.c, row + (ky * g.kw + kx) * g.c);
          }
        }
      }
    }
  }
  return cols;
}

void col2im(const RowMatrixXd& cols, const ConvGeometry& g, double* dx) {
  for (Index n = 0; n < g.n; ++n) {
    for (Index oy = 0; oy < g.oh; ++oy) {
      for (Index ox = 0; ox < g.ow; ++ox) {
        const double* row = cols.row((n * g.oh + oy) * g.ow + ox).data();
        for (Index ky = 0; ky < g.kh; ++ky) {
          const Index iy = oy * g.sh + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (Index kx = 0; kx < g.kw; ++kx) {
            const Index ix = ox * g.sw + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            double* dst = dx + ((n * g.h + iy) * g.w + ix) * g.c;
            const double* src = row + (ky * g.kw + kx) * g.c;
            for (Index c = 0; c < g.c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

void check_param_shape(const char* op, const char* what, const Tensor& t, const Shape& expected) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(op) + ": " + what + " has shape " + to_string(t.shape()) +
                     ", expected " + to_string(expected));
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Index Conv2DSpec::out_h(Index h) const {
  return padding == Padding::same ? (h + stride_h - 1) / stride_h : (h - kernel_h) / stride_h + 1;
}

Index Conv2DSpec::out_w(Index w) const {
  return padding == Padding::same ? (w + stride_w - 1) / stride_w : (w - kernel_w) / stride_w + 1;
}

Var conv2d(Var x, const Conv2DSpec& spec, Var weights, Var bias) {
  const ImageDims d = image_dims(x.value(), "conv2d");
  if (d.c != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  check_param_shape("conv2d", "weights", weights.value(), spec.weight_shape());
  check_param_shape("conv2d", "bias", bias.value(), {spec.out_channels});
  if (d.h < spec.kernel_h && spec.padding == Padding::valid) {
    throw ShapeError("conv2d: input height smaller than kernel");
  }
  const ConvGeometry g = conv_geometry(d, spec);
  const Index k = g.kh * g.kw * g.c;
  RowMatrixXd cols = im2col(x.value().data(), g);

  Tensor out(image_shape(d, g.oh, g.ow, spec.out_channels));
  auto om = out.matrix(g.n * g.oh * g.ow, spec.out_channels);
  om.noalias() = cols * weights.value().matrix(k, spec.out_channels);
  om.rowwise() += bias.value().flat().transpose();

  const Var in[] = {x, weights, bias};
  return x.graph().record(std::move(out), in,
                          [x, weights, bias, g, k, cols = std::move(cols)](Graph& gr, const Tensor& go) {
    const Index cout = bias.value().size();
    const auto gm = go.matrix(g.n * g.oh * g.ow, cout);
    if (Tensor* gw = gr.grad_target(weights)) gw->matrix(k, cout).noalias() += cols.transpose() * gm;
    if (Tensor* gb = gr.grad_target(bias)) gb->flat() += gm.colwise().sum().transpose();
    if (Tensor* gx = gr.grad_target(x)) {
      const RowMatrixXd dcols = gm * weights.value().matrix(k, cout).transpose();
      col2im(dcols, g, gx->data());
    }
  }, "conv2d");
}

Var gated_conv2d(Var x, const Conv2DSpec& spec, Var weights_feature, Var weights_gate,
                 Var bias_feature, Var bias_gate) {
  Var feature = conv2d(x, spec, weights_feature, bias_feature);
  Var gate = sigmoid(conv2d(x, spec, weights_gate, bias_gate));
  return mul(feature, gate);
}

Var depthwise_conv2d(Var x, const Conv2DSpec& spec, Var weights, Var bias) {
  const ImageDims d = image_dims(x.value(), "depthwise_conv2d");
  if (d.c != spec.in_channels || spec.out_channels != spec.in_channels) {
    throw ShapeError("depthwise_conv2d: channel mismatch (input " + std::to_string(d.c) +
                     ", spec " + std::to_string(spec.in_channels) + "->" +
                     std::to_string(spec.out_channels) + ")");
  }
  check_param_shape("depthwise_conv2d", "weights", weights.value(),
                    {spec.kernel_h, spec.kernel_w, spec.in_channels});
  check_param_shape("depthwise_conv2d", "bias", bias.value(), {spec.in_channels});
  const ConvGeometry g = conv_geometry(d, spec);

  Tensor out(image_shape(d, g.oh, g.ow, g.c));
  const double* xs = x.value().data();
  const double* ws = weights.value().data();
  const double* bs = bias.value().data();
  double* os = out.data();
  for (Index n = 0; n < g.n; ++n) {
    for (Index oy = 0; oy < g.oh; ++oy) {
      for (Index ox = 0; ox < g.ow; ++ox) {
        double* o = os + ((n * g.oh + oy) * g.ow + ox) * g.c;
        std::copy(bs, bs + g.c, o);
        for (Index ky = 0; ky < g.kh; ++ky) {
          const Index iy = oy * g.sh + ky - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (Index kx = 0; kx < g.kw; ++kx) {
            const Index ix = ox * g.sw + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const double* xi = xs + ((n * g.h + iy) * g.w + ix) * g.c;
            const double* wk = ws + (ky * g.kw + kx) * g.c;
            for (Index c = 0; c < g.c; ++c) o[c] += xi[c] * wk[c];
          }
        }
      }
    }
  }

  const Var in[] = {x, weights, bias};
  return x.graph().record(std::move(out), in, [x, weights, bias, g](Graph& gr, const Tensor& go) {
    Tensor* gx = gr.grad_target(x);
    Tensor* gw = gr.grad_target(weights);
    if (Tensor* gb = gr.grad_target(bias)) {
      gb->flat() += go.matrix(g.n * g.oh * g.ow, g.c).colwise().sum().transpose();
    }
    if (!gx && !gw) return;
    const double* xs = x.value().data();
    const double* ws = weights.value().data();
    const double* gs = go.data();
    for (Index n = 0; n < g.n; ++n) {
      for (Index oy = 0; oy < g.oh; ++oy) {
        for (Index ox = 0; ox < g.ow; ++ox) {
          const double* gout = gs + ((n * g.oh + oy) * g.ow + ox) * g.c;
          for (Index ky = 0; ky < g.kh; ++ky) {
            const Index iy = oy * g.sh + ky - g.pad_top;
            if (iy < 0 || iy >= g.h) continue;
            for (Index kx = 0; kx < g.kw; ++kx) {
              const Index ix = ox * g.sw + kx - g.pad_left;
              if (ix < 0 || ix >= g.w) continue;
              const Index xoff = ((n * g.h + iy) * g.w + ix) * g.c;
              const Index woff = (ky * g.kw + kx) * g.c;
              for (Index c = 0; c < g.c; ++c) {
                if (gw) (*gw)[woff + c] += gout[c] * xs[xoff + c];
                if (gx) (*gx)[xoff + c] += gout[c] * ws[woff + c];
              }
            }
          }
        }
      }
    }
  }, "depthwise_conv2d");
}

Var depthwise_separable_conv(Var x, const Conv2DSpec& spec, Var depth_weights,
                             Var point_weights, Var depth_bias, Var point_bias) {
  Conv2DSpec depth = spec;
  depth.out_channels = spec.in_channels;
  Conv2DSpec point{1, 1, spec.in_channels, spec.out_channels, 1, 1, Padding::valid};
  Var y = depthwise_conv2d(x, depth, depth_weights, depth_bias);
  return conv2d(y, point, point_weights, point_bias);
}

Var maxpool2d(Var x, Index pool_h, Index pool_w) {
  const ImageDims d = image_dims(x.value(), "maxpool2d");
  if (pool_h < 1 || pool_w < 1) throw ShapeError("maxpool2d: pool size must be positive");
  const Index oh = d.h / pool_h;
  const Index ow = d.w / pool_w;
  if (oh == 0 || ow == 0) {
    throw ShapeError("maxpool2d: input " + to_string(x.value().shape()) + " smaller than pool");
  }
  Tensor out(image_shape(d, oh, ow, d.c));
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  const double* xs = x.value().data();
  for (Index n = 0; n < d.n; ++n) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        for (Index c = 0; c < d.c; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          Index best_at = 0;
          for (Index py = 0; py < pool_h; ++py) {
            for (Index px = 0; px < pool_w; ++px) {
              const Index at = ((n * d.h + oy * pool_h + py) * d.w + ox * pool_w + px) * d.c + c;
              if (xs[at] > best) {
                best = xs[at];
                best_at = at;
              }
            }
          }
          const Index o = ((n * oh + oy) * ow + ox) * d.c + c;
          out[o] = best;
          argmax[static_cast<std::size_t>(o)] = best_at;
        }
      }
    }
  }
  const Var in[] = {x};
  return x.graph().record(std::move(out), in, [x, argmax = std::move(argmax)](Graph& g, const Tensor& go) {
    if (Tensor* gx = g.grad_target(x)) {
      for (std::size_t o = 0; o < argmax.size(); ++o) (*gx)[argmax[o]] += go[static_cast<Index>(o)];
    }
  }, "maxpool2d");
}

Var avgpool_global(Var x) {
  const ImageDims d = image_dims(x.value(), "avgpool_global");
  const Index area = d.h * d.w;
  Tensor out(d.batched ? Shape{d.n, d.c} : Shape{d.c});
  for (Index n = 0; n < d.n; ++n) {
    out.matrix(d.n, d.c).row(n) =
        x.value().matrix(d.n * area, d.c).middleRows(n * area, area).colwise().mean();
  }
  const Var in[] = {x};
  return x.graph().record(std::move(out), in, [x, d, area](Graph& g, const Tensor& go) {
    if (Tensor* gx = g.grad_target(x)) {
      auto gm = gx->matrix(d.n * area, d.c);
      const auto gom = go.matrix(d.n, d.c);
      for (Index n = 0; n < d.n; ++n) {
        gm.middleRows(n * area, area).rowwise() += gom.row(n) / static_cast<double>(area);
      }
    }
  }, "avgpool_global");
}

Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
              bool training, const BatchNormSpec& spec) {
  const Tensor& xv = x.value();
  const Index c = xv.shape().back();
  check_param_shape("batchnorm", "gamma", gamma.value(), {c});
  check_param_shape("batchnorm", "beta", beta.value(), {c});
  check_param_shape("batchnorm", "running_mean", running_mean, {c});
  check_param_shape("batchnorm", "running_var", running_var, {c});
  const Index m = xv.size() / c;
  const auto xm = xv.matrix(m, c);

  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd var;
  if (training) {
    mu = xm.colwise().mean();
    var = (xm.rowwise() - mu).array().square().colwise().mean();
    running_mean.flat() = spec.momentum * running_mean.flat() + (1.0 - spec.momentum) * mu.transpose();
    running_var.flat() = spec.momentum * running_var.flat() + (1.0 - spec.momentum) * var.transpose();
  } else {
    mu = running_mean.flat().transpose();
    var = running_var.flat().transpose();
  }
  const Eigen::RowVectorXd inv_std = (var.array() + spec.epsilon).rsqrt();
  RowMatrixXd xhat = (xm.rowwise() - mu).array().rowwise() * inv_std.array();

  Tensor out(xv.shape());
  out.matrix(m, c) = (xhat.array().rowwise() * gamma.value().flat().transpose().array()).rowwise() +
                     beta.value().flat().transpose().array();

  const Var in[] = {x, gamma, beta};
  return x.graph().record(std::move(out), in,
                          [x, gamma, beta, training, m, c, inv_std, xhat = std::move(xhat)](Graph& g, const Tensor& go) {
    const auto gm = go.matrix(m, c);
    if (Tensor* gb = g.grad_target(beta)) gb->flat() += gm.colwise().sum().transpose();
    if (Tensor* gg = g.grad_target(gamma)) {
      gg->flat() += (gm.array() * xhat.array()).colwise().sum().matrix().transpose();
    }
    if (Tensor* gx = g.grad_target(x)) {
      const Eigen::RowVectorXd scale = gamma.value().flat().transpose().array() * inv_std.array();
      if (!training) {
        gx->matrix(m, c).array() += gm.array().rowwise() * scale.array();
        return;
      }
      const Eigen::RowVectorXd sum_g = gm.colwise().sum();
      const Eigen::RowVectorXd sum_gx = (gm.array() * xhat.array()).colwise().sum();
      const double md = static_cast<double>(m);
      RowMatrixXd dx = (gm * md).rowwise() - sum_g;
      dx.array() -= xhat.array().rowwise() * sum_gx.array();
      gx->matrix(m, c).array() += dx.array().rowwise() * (scale.array() / md);
    }
  }, "batchnorm");
}

Var dropout(Var x, double p, bool training, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  Rng rng(seed);
  Tensor mask(x.value().shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
  Tensor out = x.value();
  out.flat().array() *= mask.flat().array();
  const Var in[] = {x};
  return x.graph().record(std::move(out), in, [x, mask = std::move(mask)](Graph& g, const Tensor& go) {
    if (Tensor* gx = g.grad_target(x)) gx->flat().array() += go.flat().array() * mask.flat().array();
  }, "dropout");
}

Var dense(Var x, Var w, Var b) { return add_bias(matmul_last(x, w), b); }

namespace {

struct LstmCache {
  // Per step, rows are batch entries: gates (N x 4H, post-activation),
  // cell state and its tanh (N x H).
  std::vector<RowMatrixXd> gates;
  std::vector<RowMatrixXd> cell;
  std::vector<RowMatrixXd> cell_tanh;
};

}  // namespace

Var lstm(Var seq, const LSTMParams& params, bool reverse) {
  const Tensor& xv = seq.value();
  if (xv.rank() != 2 && xv.rank() != 3) {
    throw ShapeError("lstm: expected (T,F) or (N,T,F), got " + to_string(xv.shape()));
  }
  const bool batched = xv.rank() == 3;
  const Index n = batched ? xv.dim(0) : 1;
  const Index steps = batched ? xv.dim(1) : xv.dim(0);
  const Index f = xv.shape().back();
  const Tensor& wx = params.input_weights.value();
  const Tensor& wh = params.recurrent_weights.value();
  const Tensor& bv = params.bias.value();
  if (wx.rank() != 2 || wx.dim(0) != f || wx.dim(1) % 4 != 0) {
    throw ShapeError("lstm: input weights " + to_string(wx.shape()) + " do not match feature size " +
                     std::to_string(f));
  }
  const Index h = wx.dim(1) / 4;
  check_param_shape("lstm", "recurrent weights", wh, {h, 4 * h});
  check_param_shape("lstm", "bias", bv, {4 * h});

  Tensor out(batched ? Shape{n, steps, h} : Shape{steps, h});
  if (steps == 0) {
    const Var in[] = {seq, params.input_weights, params.recurrent_weights, params.bias};
    return seq.graph().record(std::move(out), in, [](Graph&, const Tensor&) {}, "lstm");
  }

  // Input projection for every (n, t) at once; row index n * steps + t.
  RowMatrixXd proj = xv.matrix(n * steps, f) * wx.matrix();
  proj.rowwise() += bv.flat().transpose();

  LstmCache cache;
  cache.gates.resize(static_cast<std::size_t>(steps));
  cache.cell.resize(static_cast<std::size_t>(steps));
  cache.cell_tanh.resize(static_cast<std::size_t>(steps));

  RowMatrixXd hidden = RowMatrixXd::Zero(n, h);
  RowMatrixXd cell = RowMatrixXd::Zero(n, h);
  auto om = out.matrix(n * steps, h);
  const auto whm = wh.matrix();
  for (Index k = 0; k < steps; ++k) {
    const Index t = reverse ? steps - 1 - k : k;
    RowMatrixXd z(n, 4 * h);
    for (Index b = 0; b < n; ++b) z.row(b) = proj.row(b * steps + t);
    z.noalias() += hidden * whm;
    auto& gates = cache.gates[static_cast<std::size_t>(t)];
    gates.resize(n, 4 * h);
    gates.leftCols(2 * h) = z.leftCols(2 * h).unaryExpr(&sigmoid_scalar);
    gates.middleCols(2 * h, h) = z.middleCols(2 * h, h).array().tanh().matrix();
    gates.rightCols(h) = z.rightCols(h).unaryExpr(&sigmoid_scalar);
    cell = (gates.middleCols(h, h).array() * cell.array() +
            gates.leftCols(h).array() * gates.middleCols(2 * h, h).array()).matrix();
    cache.cell[static_cast<std::size_t>(t)] = cell;
    cache.cell_tanh[static_cast<std::size_t>(t)] = cell.array().tanh().matrix();
    hidden = (gates.rightCols(h).array() * cache.cell_tanh[static_cast<std::size_t>(t)].array()).matrix();
    for (Index b = 0; b < n; ++b) om.row(b * steps + t) = hidden.row(b);
  }

  const Var in[] = {seq, params.input_weights, params.recurrent_weights, params.bias};
  const Tensor hidden_out = out;
  return seq.graph().record(std::move(out), in,
      [seq, params, reverse, n, steps, f, h, hidden_out, cache = std::move(cache)](Graph& g, const Tensor& go) {
    const auto gom = go.matrix(n * steps, h);
    const auto hom = hidden_out.matrix(n * steps, h);
    const auto whm = params.recurrent_weights.value().matrix();
    RowMatrixXd dproj(n * steps, 4 * h);
    RowMatrixXd dh_next = RowMatrixXd::Zero(n, h);
    RowMatrixXd dc_next = RowMatrixXd::Zero(n, h);
    RowMatrixXd dwh = RowMatrixXd::Zero(h, 4 * h);
    RowMatrixXd prev_h(n, h);
    for (Index k = steps - 1; k >= 0; --k) {
      const Index t = reverse ? steps - 1 - k : k;
      const Index prev_t = reverse ? t + 1 : t - 1;
      const auto& gates = cache.gates[static_cast<std::size_t>(t)];
      const auto i_g = gates.leftCols(h).array();
      const auto f_g = gates.middleCols(h, h).array();
      const auto c_g = gates.middleCols(2 * h, h).array();
      const auto o_g = gates.rightCols(h).array();
      const auto tc = cache.cell_tanh[static_cast<std::size_t>(t)].array();

      RowMatrixXd dh = dh_next;
      for (Index b = 0; b < n; ++b) dh.row(b) += gom.row(b * steps + t);
      const RowMatrixXd dc = (dh.array() * o_g * (1.0 - tc.square()) + dc_next.array()).matrix();
      RowMatrixXd prev_c = RowMatrixXd::Zero(n, h);
      prev_h.setZero();
      if (k > 0) {
        prev_c = cache.cell[static_cast<std::size_t>(prev_t)];
        for (Index b = 0; b < n; ++b) prev_h.row(b) = hom.row(b * steps + prev_t);
      }
      RowMatrixXd dz(n, 4 * h);
      dz.leftCols(h) = (dc.array() * c_g * i_g * (1.0 - i_g)).matrix();
      dz.middleCols(h, h) = (dc.array() * prev_c.array() * f_g * (1.0 - f_g)).matrix();
      dz.middleCols(2 * h, h) = (dc.array() * i_g * (1.0 - c_g.square())).matrix();
      dz.rightCols(h) = (dh.array() * tc * o_g * (1.0 - o_g)).matrix();

      dc_next = (dc.array() * f_g).matrix();
      dh_next.noalias() = dz * whm.transpose();
      dwh.noalias() += prev_h.transpose() * dz;
      for (Index b = 0; b < n; ++b) dproj.row(b * steps + t) = dz.row(b);
    }
    if (Tensor* gwh = g.grad_target(params.recurrent_weights)) gwh->matrix() += dwh;
    if (Tensor* gb = g.grad_target(params.bias)) gb->flat() += dproj.colwise().sum().transpose();
    if (Tensor* gwx = g.grad_target(params.input_weights)) {
      gwx->matrix().noalias() += seq.value().matrix(n * steps, f).transpose() * dproj;
    }
    if (Tensor* gx = g.grad_target(seq)) {
      gx->matrix(n * steps, f).noalias() += dproj * params.input_weights.value().matrix().transpose();
    }
  }, "lstm");
}

Var lstm_forward(Var seq, const LSTMSpec& spec, const LSTMParams& forward_params,
                 const LSTMParams& backward_params) {
  if (seq.value().shape().back() != spec.input_size) {
    throw ShapeError("lstm_forward: feature size " + std::to_string(seq.value().shape().back()) +
                     " != spec input_size " + std::to_string(spec.input_size));
  }
  switch (spec.direction) {
    case Direction::forward:
      return lstm(seq, forward_params, false);
    case Direction::backward:
      return lstm(seq, forward_params, true);
    case Direction::bidirectional:
      break;
  }
  return concat_last(lstm(seq, forward_params, false), lstm(seq, backward_params, true));
}

}  // namespace htr
