#include "sflab/sobolev_loss.hpp"

namespace sflab {

Vector ResidualState::stacked() const {
  Vector r(e.size() + S.size());
  r << e, S;
  return r;
}

ResidualState residuals(const NetParams& p, const TrainingSet& ts) {
  const std::vector<NetOutput> out = evaluate(p, ts);
  ResidualState res;
  res.e.resize(ts.n);
  res.S.resize(ts.n * ts.k);
  for (std::size_t i = 0; i < ts.n; ++i) {
    res.e(i) = ts.y[i] - out[i].value;
    if (p.has_bias) {
      res.S.segment(i * ts.k, ts.k) = ts.h[i] / p.alpha - out[i].dir_grad;
    } else {
      res.S.segment(i * ts.k, ts.k) = ts.h[i] - out[i].dir_grad;
    }
  }
  return res;
}

double loss(const NetParams& p, const TrainingSet& ts) { return residuals(p, ts).loss(); }

LossGradient loss_gradient(const NetParams& p, const TrainingSet& ts) {
  return loss_gradient(p, ts, residuals(p, ts));
}

LossGradient loss_gradient(const NetParams& p, const TrainingSet& ts, const ResidualState& res) {
  const Matrix z = preactivations(p, ts);
  // gated(r, i) = a_r σ'(z_ri)
  const Matrix gated = (z.array() > 0.0).cast<double>().colwise() * p.a.array();

  // Row i of U is the parameter-space direction carried by sample i:
  // e_i · (value feature) + V_i S_i.
  const double value_scale = p.has_bias ? p.alpha : 1.0;
  Matrix u(ts.n, ts.d);
  for (std::size_t i = 0; i < ts.n; ++i) {
    Vector row = value_scale * res.e(i) * ts.x[i];
    if (ts.k > 0) row.noalias() += ts.V[i] * res.S.segment(i * ts.k, ts.k);
    u.row(i) = row.transpose();
  }

  LossGradient grad;
  grad.dW = -(gated * u);
  if (p.has_bias) grad.db = -p.beta * (gated * res.e);
  return grad;
}

}  // namespace sflab
