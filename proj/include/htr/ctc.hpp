#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "htr/autodiff.hpp"
#include "htr/errors.hpp"
#include "htr/tensor.hpp"

namespace htr {

/// T x (C+1) per-frame posteriors; the last column is the CTC blank.
using ProbMatrix = RowMatrixXd;
/// Charset indices without blanks.
using Label = std::vector<int>;

/// Merges adjacent repeats, then drops blanks.
inline Label collapse(std::span<const int> path, int blank) {
  Label out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

/// Fewest frames that can emit `label`: one per symbol plus a separating
/// blank between each pair of equal neighbours.
inline Index ctc_min_frames(std::span<const int> label) {
  Index repeats = 0;
  for (std::size_t i = 1; i < label.size(); ++i) repeats += label[i] == label[i - 1];
  return static_cast<Index>(label.size()) + repeats;
}

template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  constexpr Scalar ninf = -std::numeric_limits<Scalar>::infinity();
  if (a == ninf) return b;
  if (b == ninf) return a;
  const Scalar hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

namespace detail {

inline void check_label(std::span<const int> label, Index num_classes, Index frames) {
  const int blank = static_cast<int>(num_classes) - 1;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] < 0 || label[i] >= blank) {
      throw ContractError("ctc: label symbol " + std::to_string(label[i]) + " at position " +
                          std::to_string(i) + " outside [0, " + std::to_string(blank) + ")");
    }
  }
  const Index need = ctc_min_frames(label);
  if (frames < need) {
    throw FeasibilityError("ctc: label of length " + std::to_string(label.size()) + " needs " +
                           std::to_string(need) + " frames, only " + std::to_string(frames) +
                           " available");
  }
}

}  // namespace detail

/// Forward-backward lattice of one (log-probability matrix, label) pair.
/// `alpha(t, s)` includes the emission at t; `beta(t, s)` covers frames
/// after t only, so alpha + beta summed over s equals log p(label) at every t.
template <typename Scalar>
struct CtcLattice {
  RowMatrix<Scalar> alpha;
  RowMatrix<Scalar> beta;
  std::vector<int> extended;  // blank-interleaved label
  Scalar log_likelihood;
};

template <typename Derived>
CtcLattice<typename Derived::Scalar> ctc_lattice(const Eigen::MatrixBase<Derived>& log_probs,
                                                 std::span<const int> label) {
  using Scalar = typename Derived::Scalar;
  constexpr Scalar ninf = -std::numeric_limits<Scalar>::infinity();
  const Index frames = log_probs.rows();
  detail::check_label(label, log_probs.cols(), frames);
  const int blank = static_cast<int>(log_probs.cols()) - 1;

  CtcLattice<Scalar> lat;
  lat.extended.assign(2 * label.size() + 1, blank);
  for (std::size_t i = 0; i < label.size(); ++i) lat.extended[2 * i + 1] = label[i];
  const auto& ext = lat.extended;
  const Index states = static_cast<Index>(ext.size());
  auto skip_allowed = [&](Index s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  if (frames == 0) {
    lat.log_likelihood = Scalar(0);
    return lat;
  }

  lat.alpha = RowMatrix<Scalar>::Constant(frames, states, ninf);
  lat.beta = RowMatrix<Scalar>::Constant(frames, states, ninf);
  lat.alpha(0, 0) = log_probs(0, blank);
  if (states > 1) lat.alpha(0, 1) = log_probs(0, ext[1]);
  for (Index t = 1; t < frames; ++t) {
    for (Index s = 0; s < states; ++s) {
      Scalar acc = lat.alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, lat.alpha(t - 1, s - 1));
      if (skip_allowed(s)) acc = log_add(acc, lat.alpha(t - 1, s - 2));
      lat.alpha(t, s) = acc == ninf ? ninf : acc + log_probs(t, ext[s]);
    }
  }

  lat.beta(frames - 1, states - 1) = Scalar(0);
  if (states > 1) lat.beta(frames - 1, states - 2) = Scalar(0);
  for (Index t = frames - 2; t >= 0; --t) {
    for (Index s = 0; s < states; ++s) {
      Scalar acc = lat.beta(t + 1, s) + log_probs(t + 1, ext[s]);
      if (s + 1 < states) acc = log_add(acc, lat.beta(t + 1, s + 1) + log_probs(t + 1, ext[s + 1]));
      if (s + 2 < states && skip_allowed(s + 2)) {
        acc = log_add(acc, lat.beta(t + 1, s + 2) + log_probs(t + 1, ext[s + 2]));
      }
      lat.beta(t, s) = acc;
    }
  }

  Scalar ll = lat.alpha(frames - 1, states - 1);
  if (states > 1) ll = log_add(ll, lat.alpha(frames - 1, states - 2));
  lat.log_likelihood = ll;
  return lat;
}

/// -ln p(label | probs) from a T x (C+1) probability matrix. Zeros are
/// allowed; an unreachable label yields +inf rather than NaN.
template <typename Derived>
typename Derived::Scalar ctc_loss(const Eigen::MatrixBase<Derived>& probs, std::span<const int> label) {
  using Scalar = typename Derived::Scalar;
  const RowMatrix<Scalar> log_probs = probs.array().log().matrix();
  return -ctc_lattice(log_probs, label).log_likelihood;
}

struct CtcResult {
  double loss = 0;
  /// Gradient with respect to the pre-softmax logits (T x (C+1)).
  RowMatrixXd grad;
};

/// Fused softmax + CTC: loss and exact gradient with respect to the logits
/// that produced `log_probs = log_softmax(logits)`.
template <typename Derived>
CtcResult ctc_loss_and_grad(const Eigen::MatrixBase<Derived>& log_probs, std::span<const int> label) {
  const RowMatrixXd lp = log_probs.template cast<double>();
  const CtcLattice<double> lat = ctc_lattice(lp, label);
  CtcResult res;
  res.loss = -lat.log_likelihood;
  res.grad = lp.array().exp().matrix();
  if (!std::isfinite(lat.log_likelihood) || lp.rows() == 0) return res;
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  RowMatrixXd occupancy = RowMatrixXd::Constant(lp.rows(), lp.cols(), ninf);
  for (Index t = 0; t < lp.rows(); ++t) {
    for (Index s = 0; s < static_cast<Index>(lat.extended.size()); ++s) {
      const double v = lat.alpha(t, s) + lat.beta(t, s);
      double& o = occupancy(t, lat.extended[static_cast<std::size_t>(s)]);
      o = log_add(o, v);
    }
  }
  res.grad.array() -= (occupancy.array() - lat.log_likelihood).exp();
  return res;
}

/// Graph op: CTC loss of one (T x (C+1)) logit matrix, fused with softmax.
Var ctc_loss(Var logits, std::span<const int> label);

}  // namespace htr
