#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uavbeam/nn/tensor.hpp"

namespace uavbeam::nn {

struct HyperParams {
  int epochs = 20;
  int train_batch = 8;
  int val_batch = 1024;
  int test_batch = 1024;
  double lr = 5e-4;
  double weight_decay = 0.0;
  std::vector<int> lr_drop_epochs = {12, 18};  // 1-based epochs where lr is scaled
  double lr_drop_factor = 0.1;
  int window = 8;    // past feature rows fed to the encoder
  int horizon = 3;   // future steps beyond the current one
  int codebook_size = 32;
  enum class DecoderInit { kContext, kZero };
  DecoderInit decoder_h0 = DecoderInit::kContext;

  void validate() const;  // throws ValidationError
};

// All weights and persistent buffers in a fixed manifest order. The layout
// follows the published architecture: two 1-d conv layers over the input
// window, batch norm, a recurrent encoder/decoder pair, and a two-layer
// classifier shared across decoder steps.
class ModelParams {
 public:
  static constexpr int kInputDim = 5;
  static constexpr int kHidden = 128;
  static constexpr int kClassifierHidden = 64;
  static constexpr int kKernel = 3;

  explicit ModelParams(int codebook_size);

  int codebook_size() const { return codebook_size_; }

  Variable conv1_w, conv1_b;
  Variable conv2_w, conv2_b;
  Variable bn_scale, bn_shift, bn_rmean, bn_rvar;
  // gate order inside each bank: update, reset, candidate
  std::vector<Variable> encoder;  // 12 tensors
  std::vector<Variable> decoder;  // 12 tensors
  Variable fc1_w, fc1_b;
  Variable fc2_w, fc2_b;

  std::vector<Variable*> manifest();              // checkpoint/init order
  std::vector<const Variable*> manifest() const;
  std::vector<Variable*> trainable();

  // value snapshot in manifest order, used for best-epoch bookkeeping
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

 private:
  int codebook_size_;
};

struct ParamCount {
  std::int64_t count = 0;
  std::int64_t size_bytes = 0;  // at 32-bit storage
};
ParamCount count_params(const std::vector<const Variable*>& manifest);
ParamCount count_params(const ModelParams& p);

// Seeded uniform init in +-1/sqrt(fan_in) per tensor; norm scale/shift start
// at one/zero and the running stats at zero/one.
void init_params(ModelParams& p, std::uint64_t seed);

// Probabilities for the current step and each future step: (horizon+1) x M.
struct ScoreSequence {
  int steps = 0;
  int classes = 0;
  std::vector<double> p;  // row major

  double at(int step, int m) const { return p[static_cast<std::size_t>(step) * classes + m]; }
  void check_rows_normalized(double tol = 1e-6) const;  // throws ValidationError
};

// Per-step probability tensors for a whole batch, eval or train mode.
// x is (B, window, 5) row major. Leaves the tensors in the supplied graph.
std::vector<Tensor> forward_batch(Graph& g, ModelParams& p, const std::vector<double>& x,
                                  int batch, const HyperParams& hp, bool train,
                                  bool update_running);

// Single window convenience wrapper, eval mode, pure.
ScoreSequence forward(ModelParams& p, const std::vector<double>& window_features,
                      const HyperParams& hp);

// Row argmax per step, ties to the lowest index.
std::vector<int> decode(const ScoreSequence& s);

// Sum over steps of -ln(score at the true label), scores floored at 1e-12.
double cross_entropy(const ScoreSequence& s, const std::vector<int>& labels);

}  // namespace uavbeam::nn
