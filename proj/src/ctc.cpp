#include "htr/ctc.hpp"

namespace htr {

Var ctc_loss(Var logits, std::span<const int> label) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("ctc_loss: expected (T, C+1) logits, got " + to_string(lv.shape()));
  CtcResult res = ctc_loss_and_grad(log_softmax_rows(lv.matrix()), label);
  const Var in[] = {logits};
  return logits.graph().record(Tensor::scalar(res.loss), in,
                               [logits, grad = std::move(res.grad)](Graph& g, const Tensor& go) {
    if (Tensor* gl = g.grad_target(logits)) gl->matrix() += grad * go.item();
  }, "ctc_loss");
}

}  // namespace htr
