#pragma once

#include <cstdint>
#include <vector>

#include "uavbeam/nn/model.hpp"

namespace uavbeam::nn {

// Adam with bias correction. Decoupled from the model so two identically
// seeded runs share the exact same update trajectory.
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // classic L2 term folded into the gradient
  };

  explicit Adam(ModelParams& params) : Adam(params, Config()) {}
  Adam(ModelParams& params, Config cfg);

  // applies one update from the gradients currently held by the parameters
  void step(double lr);
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Variable*> vars_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  Config cfg_;
  std::int64_t t_ = 0;
};

// Piecewise-constant schedule: the base rate is multiplied by the drop
// factor at every configured epoch boundary. Epochs are 1-based.
double lr_schedule(int epoch, const HyperParams& hp);

}  // namespace uavbeam::nn
