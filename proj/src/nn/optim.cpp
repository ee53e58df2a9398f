#include "uavbeam/nn/optim.hpp"

#include <cmath>

#include "uavbeam/errors.hpp"

namespace uavbeam::nn {

Adam::Adam(ModelParams& params, Config cfg) : vars_(params.trainable()), cfg_(cfg) {
  m_.reserve(vars_.size());
  v_.reserve(vars_.size());
  for (const Variable* v : vars_) {
    m_.emplace_back(v->value.size(), 0.0);
    v_.emplace_back(v->value.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < vars_.size(); ++k) {
    Variable& var = *vars_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < var.value.size(); ++i) {
      double g = var.grad[i];
      if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * var.value[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      var.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double lr_schedule(int epoch, const HyperParams& hp) {
  if (epoch < 1) throw ValidationError("epochs are 1-based");
  double lr = hp.lr;
  for (int drop : hp.lr_drop_epochs) {
    if (epoch >= drop) lr *= hp.lr_drop_factor;
  }
  return lr;
}

}  // namespace uavbeam::nn
