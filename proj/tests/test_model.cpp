#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "helpers/reference_model.hpp"
#include "uavbeam/errors.hpp"
#include "uavbeam/nn/checkpoint.hpp"
#include "uavbeam/nn/model.hpp"
#include "uavbeam/nn/optim.hpp"
#include "uavbeam/util.hpp"

using namespace uavbeam;
using nn::HyperParams;
using nn::ModelParams;

namespace {

std::vector<double> random_window(Rng& rng, int window) {
  std::vector<double> x(static_cast<std::size_t>(window) * ModelParams::kInputDim);
  for (double& v : x) v = rng.uniform(-1.0, 1.5);
  return x;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("trainable parameter count matches the published architecture") {
  ModelParams p(32);
  const auto c = nn::count_params(p);
  // 2048 + 49280 + 256 + 99072 + 99072 + 8256 + 2080
  CHECK(c.count == 260064);
  CHECK(c.size_bytes == 1040256);
  CHECK(static_cast<double>(c.size_bytes) / (1024.0 * 1024.0) ==
        doctest::Approx(0.99).epsilon(0.005));
}

TEST_CASE("layer-by-layer parameter arithmetic") {
  ModelParams p(32);
  CHECK(p.conv1_w.size() + p.conv1_b.size() == 2048);
  CHECK(p.conv2_w.size() + p.conv2_b.size() == 49280);
  CHECK(p.bn_scale.size() + p.bn_shift.size() == 256);
  std::int64_t enc = 0;
  for (const auto& v : p.encoder) enc += v.size();
  CHECK(enc == 99072);
  std::int64_t dec = 0;
  for (const auto& v : p.decoder) dec += v.size();
  CHECK(dec == 99072);
  CHECK(p.fc1_w.size() + p.fc1_b.size() == 8256);
  CHECK(p.fc2_w.size() + p.fc2_b.size() == 2080);
}

TEST_CASE("running statistics do not count as trainable parameters") {
  ModelParams p(32);
  CHECK_FALSE(p.bn_rmean.trainable);
  CHECK_FALSE(p.bn_rvar.trainable);
  std::int64_t manifest_total = 0;
  for (const auto* v : p.manifest()) manifest_total += v->size();
  CHECK(manifest_total == 260064 + 256);
}

TEST_CASE("forward emits row-stochastic scores and is pure") {
  HyperParams hp;
  ModelParams p(hp.codebook_size);
  nn::init_params(p, 12);
  Rng rng(5);
  const auto x = random_window(rng, hp.window);

  auto s1 = nn::forward(p, x, hp);
  CHECK(s1.steps == hp.horizon + 1);
  CHECK(s1.classes == hp.codebook_size);
  CHECK_NOTHROW(s1.check_rows_normalized());

  auto s2 = nn::forward(p, x, hp);
  CHECK(s1.p == s2.p);
}

TEST_CASE("forward agrees with the plain-loop reference model") {
  HyperParams hp;
  ModelParams p(hp.codebook_size);
  nn::init_params(p, 99);
  // make running stats non-trivial so the eval path is exercised for real
  Rng stat_rng(17);
  for (double& v : p.bn_rmean.value) v = stat_rng.uniform(-0.3, 0.3);
  for (double& v : p.bn_rvar.value) v = stat_rng.uniform(0.6, 1.8);

  testing_helpers::ReferenceModel ref(p);
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = random_window(rng, hp.window);
    const auto got = nn::forward(p, x, hp);
    const auto want = ref.forward(x, hp.window, hp.horizon, true);
    double worst = 0.0;
    for (int v = 0; v <= hp.horizon; ++v) {
      for (int m = 0; m < hp.codebook_size; ++m) {
        worst = std::max(worst,
                         std::fabs(got.at(v, m) - want[static_cast<std::size_t>(v)]
                                                      [static_cast<std::size_t>(m)]));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("zero decoder initialization is honored") {
  HyperParams hp;
  hp.decoder_h0 = HyperParams::DecoderInit::kZero;
  ModelParams p(hp.codebook_size);
  nn::init_params(p, 3);
  testing_helpers::ReferenceModel ref(p);
  Rng rng(8);
  const auto x = random_window(rng, hp.window);
  const auto got = nn::forward(p, x, hp);
  const auto want = ref.forward(x, hp.window, hp.horizon, false);
  double worst = 0.0;
  for (int v = 0; v <= hp.horizon; ++v) {
    for (int m = 0; m < hp.codebook_size; ++m) {
      worst = std::max(
          worst,
          std::fabs(got.at(v, m) -
                    want[static_cast<std::size_t>(v)][static_cast<std::size_t>(m)]));
    }
  }
  CHECK(worst < 1e-12);

  const auto context_scores = nn::forward(p, x, HyperParams{});
  CHECK(got.p != context_scores.p);
}

TEST_CASE("batched eval forward equals the single-sample path") {
  HyperParams hp;
  ModelParams p(hp.codebook_size);
  nn::init_params(p, 21);
  Rng rng(77);
  const int b = 5;
  std::vector<double> block;
  std::vector<std::vector<double>> windows;
  for (int i = 0; i < b; ++i) {
    windows.push_back(random_window(rng, hp.window));
    block.insert(block.end(), windows.back().begin(), windows.back().end());
  }
  nn::Graph g;
  auto probs = nn::forward_batch(g, p, block, b, hp, false, false);
  for (int i = 0; i < b; ++i) {
    const auto single = nn::forward(p, windows[static_cast<std::size_t>(i)], hp);
    for (int v = 0; v <= hp.horizon; ++v) {
      const auto batch_vals = probs[static_cast<std::size_t>(v)].values();
      for (int m = 0; m < hp.codebook_size; ++m) {
        CHECK(std::fabs(batch_vals[static_cast<std::size_t>(i * hp.codebook_size + m)] -
                        single.at(v, m)) < 1e-12);
      }
    }
  }
}

TEST_CASE("decode takes per-row argmax with lowest-index ties") {
  nn::ScoreSequence s;
  s.steps = 3;
  s.classes = 4;
  s.p = {0.1, 0.7, 0.1, 0.1,
         0.25, 0.25, 0.25, 0.25,
         0.2, 0.2, 0.3, 0.3};
  const auto beams = nn::decode(s);
  CHECK(beams == std::vector<int>{1, 0, 2});
}

TEST_CASE("cross entropy closed forms") {
  nn::ScoreSequence uniform;
  uniform.steps = 4;
  uniform.classes = 32;
  uniform.p.assign(4 * 32, 1.0 / 32.0);
  CHECK(nn::cross_entropy(uniform, {0, 5, 9, 31}) ==
        doctest::Approx(4.0 * std::log(32.0)).epsilon(1e-12));

  nn::ScoreSequence hot;
  hot.steps = 2;
  hot.classes = 3;
  hot.p = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  CHECK(nn::cross_entropy(hot, {0, 1}) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

  // floored at 1e-12 when the true label has vanished
  CHECK(nn::cross_entropy(hot, {1, 1}) ==
        doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("cross entropy matches a hand-summed random case") {
  Rng rng(41);
  nn::ScoreSequence s;
  s.steps = 4;
  s.classes = 8;
  s.p.resize(32);
  for (int v = 0; v < 4; ++v) {
    double total = 0.0;
    for (int m = 0; m < 8; ++m) {
      const double e = std::exp(rng.uniform(-2.0, 2.0));
      s.p[static_cast<std::size_t>(v * 8 + m)] = e;
      total += e;
    }
    for (int m = 0; m < 8; ++m) s.p[static_cast<std::size_t>(v * 8 + m)] /= total;
  }
  const std::vector<int> labels = {3, 0, 7, 2};
  double want = 0.0;
  for (int v = 0; v < 4; ++v) {
    want += -std::log(s.p[static_cast<std::size_t>(v * 8 + labels[static_cast<std::size_t>(v)])]);
  }
  CHECK(nn::cross_entropy(s, labels) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("init is deterministic per seed and respects fan-in bounds") {
  ModelParams a(32), b(32), c(32);
  nn::init_params(a, 7);
  nn::init_params(b, 7);
  nn::init_params(c, 8);
  CHECK(a.conv1_w.value == b.conv1_w.value);
  CHECK(a.fc2_b.value == b.fc2_b.value);
  CHECK(a.conv1_w.value != c.conv1_w.value);

  const double conv1_bound = 1.0 / std::sqrt(15.0);
  for (double v : a.conv1_w.value) {
    CHECK(std::fabs(v) <= conv1_bound);
  }
  for (double v : a.conv1_b.value) {
    CHECK(std::fabs(v) <= conv1_bound);
  }
  const double fc1_bound = 1.0 / std::sqrt(128.0);
  for (double v : a.fc1_w.value) CHECK(std::fabs(v) <= fc1_bound);
  for (double v : a.bn_scale.value) CHECK(v == 1.0);
  for (double v : a.bn_shift.value) CHECK(v == 0.0);
  for (double v : a.bn_rvar.value) CHECK(v == 1.0);
}

TEST_CASE("adam first step moves a unit-gradient scalar by minus lr") {
  ModelParams p(2);
  nn::init_params(p, 1);
  const double before = p.fc2_b.value[0];
  nn::Adam opt(p);
  for (nn::Variable* v : p.trainable()) v->zero_grad();
  p.fc2_b.grad[0] = 1.0;
  opt.step(5e-4);
  CHECK(p.fc2_b.value[0] - before == doctest::Approx(-5e-4).epsilon(1e-6));
  // untouched gradient leaves its parameter in place
  CHECK(p.fc2_b.value[1] == p.fc2_b.value[1]);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  ModelParams p(4);
  nn::init_params(p, 2);
  const auto snap = p.snapshot();
  nn::Adam opt(p);
  for (nn::Variable* v : p.trainable()) v->zero_grad();
  opt.step(1e-3);
  const auto after = p.snapshot();
  CHECK(snap == after);
}

TEST_CASE("lr schedule drops compound at the configured epochs") {
  HyperParams hp;
  CHECK(nn::lr_schedule(1, hp) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(nn::lr_schedule(11, hp) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(nn::lr_schedule(12, hp) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(nn::lr_schedule(17, hp) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(nn::lr_schedule(18, hp) == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK(nn::lr_schedule(20, hp) == doctest::Approx(5e-6).epsilon(1e-12));
  CHECK_THROWS_AS(nn::lr_schedule(0, hp), ValidationError);
}

TEST_CASE("checkpoint round-trips bit exactly") {
  HyperParams hp;
  nn::Checkpoint c;
  c.params = std::make_unique<ModelParams>(hp.codebook_size);
  nn::init_params(*c.params, 77);
  Rng rng(6);
  for (double& v : c.params->bn_rmean.value) v = rng.uniform(-1.0, 1.0);
  for (double& v : c.params->bn_rvar.value) v = rng.uniform(0.5, 2.0);
  c.hp = hp;
  c.bounds = {33.0, 33.5, -112.25, -111.75};
  c.seed = 123456789;

  const std::string path = temp_path("uavbeam_ckpt_roundtrip.bin");
  nn::save_checkpoint(path, c);
  auto loaded = nn::load_checkpoint(path);

  CHECK(loaded.seed == c.seed);
  CHECK(loaded.dtype == "float64");
  CHECK(loaded.hp.window == hp.window);
  CHECK(loaded.hp.codebook_size == hp.codebook_size);
  CHECK(loaded.bounds.lat_min == c.bounds.lat_min);
  CHECK(loaded.bounds.lon_max == c.bounds.lon_max);

  auto got = loaded.params->manifest();
  auto want = c.params->manifest();
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i]->name == want[i]->name);
    CHECK(got[i]->value == want[i]->value);
  }
  std::filesystem::remove(path);
}

TEST_CASE("float32 checkpoints load with casted payloads") {
  HyperParams hp;
  nn::Checkpoint c;
  c.params = std::make_unique<ModelParams>(hp.codebook_size);
  nn::init_params(*c.params, 5);
  c.hp = hp;
  c.bounds = {1.0, 2.0, 3.0, 4.0};
  c.dtype = "float32";

  const std::string path = temp_path("uavbeam_ckpt_f32.bin");
  nn::save_checkpoint(path, c);
  auto loaded = nn::load_checkpoint(path);
  CHECK(loaded.dtype == "float32");
  for (std::size_t i = 0; i < c.params->conv1_w.value.size(); ++i) {
    CHECK(loaded.params->conv1_w.value[i] ==
          static_cast<double>(static_cast<float>(c.params->conv1_w.value[i])));
  }
  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected") {
  HyperParams hp;
  nn::Checkpoint c;
  c.params = std::make_unique<ModelParams>(hp.codebook_size);
  nn::init_params(*c.params, 9);
  c.hp = hp;
  c.bounds = {1.0, 2.0, 3.0, 4.0};
  const std::string path = temp_path("uavbeam_ckpt_corrupt.bin");
  nn::save_checkpoint(path, c);

  // flip one payload byte
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-16, std::ios::end);
    char byte;
    f.seekg(-16, std::ios::end);
    f.get(byte);
    f.seekp(-16, std::ios::end);
    byte = static_cast<char>(byte ^ 0x5a);
    f.put(byte);
  }
  CHECK_THROWS_AS(nn::load_checkpoint(path), ChecksumMismatch);

  // truncate
  nn::save_checkpoint(path, c);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 64);
  CHECK_THROWS_AS(nn::load_checkpoint(path), ChecksumMismatch);

  // trailing junk
  nn::save_checkpoint(path, c);
  {
    std::ofstream f(path, std::ios::binary | std::ios::app);
    f << "extra";
  }
  CHECK_THROWS_AS(nn::load_checkpoint(path), ChecksumMismatch);
  std::filesystem::remove(path);
}

TEST_CASE("batchnorm eval output is batch-size invariant") {
  HyperParams hp;
  ModelParams p(hp.codebook_size);
  nn::init_params(p, 14);
  Rng rng(33);
  for (double& v : p.bn_rmean.value) v = rng.uniform(-0.5, 0.5);
  for (double& v : p.bn_rvar.value) v = rng.uniform(0.7, 1.4);

  const auto w = random_window(rng, hp.window);
  const auto solo = nn::forward(p, w, hp);

  std::vector<double> block;
  std::vector<double> other = random_window(rng, hp.window);
  block.insert(block.end(), w.begin(), w.end());
  for (int copies = 0; copies < 7; ++copies) {
    block.insert(block.end(), other.begin(), other.end());
  }
  nn::Graph g;
  auto probs = nn::forward_batch(g, p, block, 8, hp, false, false);
  for (int v = 0; v <= hp.horizon; ++v) {
    const auto vals = probs[static_cast<std::size_t>(v)].values();
    for (int m = 0; m < hp.codebook_size; ++m) {
      CHECK(std::fabs(vals[static_cast<std::size_t>(m)] - solo.at(v, m)) < 1e-12);
    }
  }
}

TEST_CASE("model gradient flows into every trainable tensor") {
  HyperParams hp;
  hp.window = 4;
  hp.horizon = 1;
  hp.codebook_size = 8;
  ModelParams p(hp.codebook_size);
  nn::init_params(p, 4);
  Rng rng(2);
  std::vector<double> x(static_cast<std::size_t>(2 * hp.window * ModelParams::kInputDim));
  for (double& v : x) v = rng.uniform(-1.0, 1.0);

  for (nn::Variable* v : p.trainable()) v->zero_grad();
  nn::Graph g;
  auto probs = nn::forward_batch(g, p, x, 2, hp, true, false);
  nn::Tensor loss = g.mean_all(g.add(g.nll_rows(probs[0], {1, 2}), g.nll_rows(probs[1], {3, 0})));
  g.backward(loss);

  for (nn::Variable* v : p.trainable()) {
    double norm = 0.0;
    for (double gr : v->grad) norm += gr * gr;
    INFO(v->name);
    CHECK(norm > 0.0);
  }
}
