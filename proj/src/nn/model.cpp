#include "uavbeam/nn/model.hpp"

#include <cmath>

#include "uavbeam/errors.hpp"
#include "uavbeam/util.hpp"

namespace uavbeam::nn {

void HyperParams::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (train_batch < 1 || val_batch < 1 || test_batch < 1) {
    throw ValidationError("batch sizes must be >= 1");
  }
  if (lr <= 0.0) throw ValidationError("learning rate must be positive");
  if (weight_decay < 0.0) throw ValidationError("negative weight decay");
  if (lr_drop_factor <= 0.0 || lr_drop_factor > 1.0) {
    throw ValidationError("lr drop factor must be in (0,1]");
  }
  if (window < 1) throw ValidationError("window must be >= 1");
  if (horizon < 0) throw ValidationError("horizon must be >= 0");
  if (codebook_size < 2) throw ValidationError("codebook size must be >= 2");
}

namespace {

std::vector<Variable> make_gru_bank(const std::string& prefix, int in_dim, int hidden) {
  std::vector<Variable> bank;
  bank.reserve(12);
  const char* gates[3] = {"update", "reset", "cand"};
  for (const char* gate : gates) {
    bank.emplace_back(prefix + "." + gate + ".w_in", Shape{hidden, in_dim});
    bank.emplace_back(prefix + "." + gate + ".w_rec", Shape{hidden, hidden});
    bank.emplace_back(prefix + "." + gate + ".b_in", Shape{hidden});
    bank.emplace_back(prefix + "." + gate + ".b_rec", Shape{hidden});
  }
  return bank;
}

GruCellTensors bank_tensors(Graph& g, std::vector<Variable>& bank) {
  GruCellTensors t;
  t.w_update = g.leaf(bank[0]);
  t.u_update = g.leaf(bank[1]);
  t.bi_update = g.leaf(bank[2]);
  t.bh_update = g.leaf(bank[3]);
  t.w_reset = g.leaf(bank[4]);
  t.u_reset = g.leaf(bank[5]);
  t.bi_reset = g.leaf(bank[6]);
  t.bh_reset = g.leaf(bank[7]);
  t.w_cand = g.leaf(bank[8]);
  t.u_cand = g.leaf(bank[9]);
  t.bi_cand = g.leaf(bank[10]);
  t.bh_cand = g.leaf(bank[11]);
  return t;
}

}  // namespace

ModelParams::ModelParams(int codebook_size)
    : conv1_w("conv1.weight", {kHidden, kInputDim, kKernel}),
      conv1_b("conv1.bias", {kHidden}),
      conv2_w("conv2.weight", {kHidden, kHidden, kKernel}),
      conv2_b("conv2.bias", {kHidden}),
      bn_scale("norm.scale", {kHidden}),
      bn_shift("norm.shift", {kHidden}),
      bn_rmean("norm.running_mean", {kHidden}, /*train=*/false),
      bn_rvar("norm.running_var", {kHidden}, /*train=*/false),
      encoder(make_gru_bank("encoder", kHidden, kHidden)),
      decoder(make_gru_bank("decoder", kHidden, kHidden)),
      fc1_w("fc1.weight", {kClassifierHidden, kHidden}),
      fc1_b("fc1.bias", {kClassifierHidden}),
      fc2_w("fc2.weight", {codebook_size, kClassifierHidden}),
      fc2_b("fc2.bias", {codebook_size}),
      codebook_size_(codebook_size) {
  if (codebook_size < 2) throw ValidationError("codebook size must be >= 2");
}

std::vector<Variable*> ModelParams::manifest() {
  std::vector<Variable*> m = {&conv1_w, &conv1_b, &conv2_w, &conv2_b,
                              &bn_scale, &bn_shift, &bn_rmean, &bn_rvar};
  for (auto& v : encoder) m.push_back(&v);
  for (auto& v : decoder) m.push_back(&v);
  m.push_back(&fc1_w);
  m.push_back(&fc1_b);
  m.push_back(&fc2_w);
  m.push_back(&fc2_b);
  return m;
}

std::vector<const Variable*> ModelParams::manifest() const {
  auto m = const_cast<ModelParams*>(this)->manifest();
  return {m.begin(), m.end()};
}

std::vector<Variable*> ModelParams::trainable() {
  std::vector<Variable*> out;
  for (Variable* v : manifest()) {
    if (v->trainable) out.push_back(v);
  }
  return out;
}

std::vector<std::vector<double>> ModelParams::snapshot() const {
  std::vector<std::vector<double>> snap;
  for (const Variable* v : manifest()) snap.push_back(v->value);
  return snap;
}

void ModelParams::restore(const std::vector<std::vector<double>>& snap) {
  auto m = manifest();
  if (snap.size() != m.size()) throw ShapeMismatch("snapshot layout mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (snap[i].size() != m[i]->value.size()) throw ShapeMismatch("snapshot layout mismatch");
    m[i]->value = snap[i];
  }
}

ParamCount count_params(const std::vector<const Variable*>& manifest) {
  ParamCount c;
  for (const Variable* v : manifest) {
    if (v->trainable) c.count += v->size();
  }
  c.size_bytes = c.count * 4;
  return c;
}

ParamCount count_params(const ModelParams& p) { return count_params(p.manifest()); }

void init_params(ModelParams& p, std::uint64_t seed) {
  Rng rng(derive_seed(seed, fnv1a64("param-init")));
  std::int64_t layer_fan_in = ModelParams::kHidden;
  for (Variable* v : p.manifest()) {
    if (!v->trainable) continue;
    if (v == &p.bn_scale) {
      std::fill(v->value.begin(), v->value.end(), 1.0);
      continue;
    }
    if (v == &p.bn_shift) {
      std::fill(v->value.begin(), v->value.end(), 0.0);
      continue;
    }
    // fan_in: product of all dims after the first; bias vectors inherit the
    // fan_in of the weight tensor preceding them in the manifest
    std::int64_t fan_in = layer_fan_in;
    if (v->shape.size() > 1) {
      fan_in = 1;
      for (std::size_t d = 1; d < v->shape.size(); ++d) fan_in *= v->shape[d];
      layer_fan_in = fan_in;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : v->value) x = rng.uniform(-bound, bound);
  }
  std::fill(p.bn_rmean.value.begin(), p.bn_rmean.value.end(), 0.0);
  std::fill(p.bn_rvar.value.begin(), p.bn_rvar.value.end(), 1.0);
}

void ScoreSequence::check_rows_normalized(double tol) const {
  for (int v = 0; v < steps; ++v) {
    double sum = 0.0;
    for (int m = 0; m < classes; ++m) {
      const double x = at(v, m);
      if (!(x > 0.0) || !(x < 1.0 + tol)) {
        throw ValidationError("score outside (0,1) at step " + std::to_string(v));
      }
      sum += x;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw ValidationError("step " + std::to_string(v) + " scores sum to " + format_double(sum));
    }
  }
}

std::vector<Tensor> forward_batch(Graph& g, ModelParams& p, const std::vector<double>& x,
                                  int batch, const HyperParams& hp, bool train,
                                  bool update_running) {
  if (static_cast<std::int64_t>(x.size()) !=
      static_cast<std::int64_t>(batch) * hp.window * ModelParams::kInputDim) {
    throw ShapeMismatch("input block does not match batch " + std::to_string(batch) +
                        " x window " + std::to_string(hp.window));
  }
  if (p.codebook_size() != hp.codebook_size) {
    throw ShapeMismatch("model codebook " + std::to_string(p.codebook_size()) +
                        " differs from configured " + std::to_string(hp.codebook_size));
  }
  Tensor in = g.input({batch, hp.window, ModelParams::kInputDim}, x);
  Tensor c1 = g.conv1d(in, g.leaf(p.conv1_w), g.leaf(p.conv1_b), 1);
  Tensor c2 = g.conv1d(c1, g.leaf(p.conv2_w), g.leaf(p.conv2_b), 1);
  Tensor bn = g.batchnorm(c2, g.leaf(p.bn_scale), g.leaf(p.bn_shift), p.bn_rmean, p.bn_rvar,
                          train, update_running);
  Tensor feat = g.relu(bn);

  const GruCellTensors enc = bank_tensors(g, p.encoder);
  Tensor h = g.input({batch, ModelParams::kHidden},
                     std::vector<double>(static_cast<std::size_t>(batch) * ModelParams::kHidden, 0.0));
  for (int t = 0; t < hp.window; ++t) {
    h = gru_cell(g, g.time_slice(feat, t), h, enc);
  }
  const Tensor context = h;

  const GruCellTensors dec = bank_tensors(g, p.decoder);
  Tensor dh = context;
  if (hp.decoder_h0 == HyperParams::DecoderInit::kZero) {
    dh = g.input({batch, ModelParams::kHidden},
                 std::vector<double>(static_cast<std::size_t>(batch) * ModelParams::kHidden, 0.0));
  }
  Tensor fc1w = g.leaf(p.fc1_w), fc1b = g.leaf(p.fc1_b);
  Tensor fc2w = g.leaf(p.fc2_w), fc2b = g.leaf(p.fc2_b);
  std::vector<Tensor> probs;
  probs.reserve(static_cast<std::size_t>(hp.horizon) + 1);
  for (int v = 0; v <= hp.horizon; ++v) {
    dh = gru_cell(g, context, dh, dec);
    Tensor hidden = g.relu(g.linear(dh, fc1w, fc1b));
    Tensor logits = g.linear(hidden, fc2w, fc2b);
    probs.push_back(g.softmax_rows(logits));
  }
  return probs;
}

ScoreSequence forward(ModelParams& p, const std::vector<double>& window_features,
                      const HyperParams& hp) {
  Graph g;
  auto probs = forward_batch(g, p, window_features, 1, hp, /*train=*/false,
                             /*update_running=*/false);
  ScoreSequence s;
  s.steps = hp.horizon + 1;
  s.classes = hp.codebook_size;
  s.p.reserve(static_cast<std::size_t>(s.steps) * s.classes);
  for (const Tensor& t : probs) {
    auto v = t.values();
    s.p.insert(s.p.end(), v.begin(), v.end());
  }
  return s;
}

std::vector<int> decode(const ScoreSequence& s) {
  std::vector<int> out(static_cast<std::size_t>(s.steps));
  for (int v = 0; v < s.steps; ++v) {
    int best = 0;
    for (int m = 1; m < s.classes; ++m) {
      if (s.at(v, m) > s.at(v, best)) best = m;
    }
    out[static_cast<std::size_t>(v)] = best;
  }
  return out;
}

double cross_entropy(const ScoreSequence& s, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != s.steps) {
    throw ShapeMismatch("got " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(s.steps) + " steps");
  }
  double loss = 0.0;
  for (int v = 0; v < s.steps; ++v) {
    const int l = labels[static_cast<std::size_t>(v)];
    if (l < 0 || l >= s.classes) {
      throw ShapeMismatch("label " + std::to_string(l) + " outside codebook");
    }
    loss += -std::log(std::max(s.at(v, l), 1e-12));
  }
  return loss;
}

}  // namespace uavbeam::nn
