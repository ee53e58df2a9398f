#include "uavbeam/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "uavbeam/errors.hpp"
#include "uavbeam/nn/optim.hpp"
#include "uavbeam/util.hpp"

namespace uavbeam::pipeline {

namespace {

struct QtKey {
  std::int64_t q, t;
  bool operator==(const QtKey& o) const { return q == o.q && t == o.t; }
};
struct QtHash {
  std::size_t operator()(const QtKey& k) const {
    return static_cast<std::size_t>(splitmix64(static_cast<std::uint64_t>(k.q) * 0x9e3779b97f4a7c15ull ^
                                               static_cast<std::uint64_t>(k.t)));
  }
};

std::vector<double> pack_features(const std::vector<data::WindowedSample>& windows,
                                  const std::vector<std::size_t>& order, std::size_t begin,
                                  std::size_t end) {
  const std::size_t row = windows[order[begin]].features.size();
  std::vector<double> x;
  x.reserve((end - begin) * row);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& w = windows[order[i]].features;
    x.insert(x.end(), w.begin(), w.end());
  }
  return x;
}

// mean per-window loss over a window set, eval mode, batched
double eval_loss(nn::ModelParams& params, const nn::HyperParams& hp,
                 const std::vector<data::WindowedSample>& windows, int batch_size) {
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(batch_size));
    const int b = static_cast<int>(end - begin);
    nn::Graph g;
    auto probs = nn::forward_batch(g, params, pack_features(windows, order, begin, end), b, hp,
                                   /*train=*/false, /*update_running=*/false);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& labels = windows[order[i]].labels;
      for (int v = 0; v <= hp.horizon; ++v) {
        const auto p = probs[static_cast<std::size_t>(v)].values();
        const double score =
            p[(i - begin) * static_cast<std::size_t>(hp.codebook_size) +
              static_cast<std::size_t>(labels[static_cast<std::size_t>(v)])];
        total += -std::log(std::max(score, 1e-12));
      }
    }
  }
  return total / static_cast<double>(windows.size());
}

std::vector<double> eval_top1(nn::ModelParams& params, const nn::HyperParams& hp,
                              const std::vector<data::WindowedSample>& windows, int batch_size) {
  std::vector<std::int64_t> hits(static_cast<std::size_t>(hp.horizon) + 1, 0);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(batch_size));
    const int b = static_cast<int>(end - begin);
    nn::Graph g;
    auto probs = nn::forward_batch(g, params, pack_features(windows, order, begin, end), b, hp,
                                   false, false);
    const int m = hp.codebook_size;
    for (int v = 0; v <= hp.horizon; ++v) {
      const auto p = probs[static_cast<std::size_t>(v)].values();
      for (std::size_t i = begin; i < end; ++i) {
        const double* pr = p.data() + (i - begin) * static_cast<std::size_t>(m);
        int best = 0;
        for (int j = 1; j < m; ++j) {
          if (pr[j] > pr[best]) best = j;
        }
        if (best == windows[order[i]].labels[static_cast<std::size_t>(v)]) {
          hits[static_cast<std::size_t>(v)]++;
        }
      }
    }
  }
  std::vector<double> acc(hits.size());
  for (std::size_t v = 0; v < hits.size(); ++v) {
    acc[v] = static_cast<double>(hits[v]) / static_cast<double>(windows.size());
  }
  return acc;
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream o;
  o << "split.f_train=" << format_double(split.f_train) << "\n";
  o << "split.f_val=" << format_double(split.f_val) << "\n";
  o << "split.f_test=" << format_double(split.f_test) << "\n";
  o << "split.chunk_fractions=";
  for (std::size_t i = 0; i < split.chunk_fractions.size(); ++i) {
    if (i) o << ",";
    o << format_double(split.chunk_fractions[i]);
  }
  o << "\n";
  o << "split.min_chunk_len=" << split.min_chunk_len << "\n";
  o << "split.method=" << (split_method == SplitMethod::kAdjusted ? "adjusted" : "sequential")
    << "\n";
  o << "bounds=" << (bounds_mode == BoundsMode::kTrainOnly ? "train_only" : "whole_dataset")
    << "\n";
  o << "hp.epochs=" << hp.epochs << "\n";
  o << "hp.train_batch=" << hp.train_batch << "\n";
  o << "hp.val_batch=" << hp.val_batch << "\n";
  o << "hp.test_batch=" << hp.test_batch << "\n";
  o << "hp.lr=" << format_double(hp.lr) << "\n";
  o << "hp.weight_decay=" << format_double(hp.weight_decay) << "\n";
  o << "hp.lr_drop_factor=" << format_double(hp.lr_drop_factor) << "\n";
  o << "hp.lr_drop_epochs=";
  for (std::size_t i = 0; i < hp.lr_drop_epochs.size(); ++i) {
    if (i) o << ",";
    o << hp.lr_drop_epochs[i];
  }
  o << "\n";
  o << "hp.window=" << hp.window << "\n";
  o << "hp.horizon=" << hp.horizon << "\n";
  o << "hp.codebook=" << hp.codebook_size << "\n";
  o << "hp.decoder_h0="
    << (hp.decoder_h0 == nn::HyperParams::DecoderInit::kContext ? "context" : "zero") << "\n";
  o << "seed=" << seed << "\n";
  o << "select=" << (select == SelectRule::kBestVal ? "best_val" : "final") << "\n";
  return o.str();
}

std::string TrainReport::to_text() const {
  std::ostringstream o;
  o << "report.type=train\n";
  o << "seed=" << seed << "\n";
  o << "config_hash=" << config_hash << "\n";
  o << "windows.train=" << train_windows << "\n";
  o << "windows.val=" << val_windows << "\n";
  o << "windows.test=" << test_windows << "\n";
  o << "epochs=" << epochs.size() << "\n";
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    o << "epoch." << (e + 1) << ".train_loss=" << format_double(epochs[e].train_loss) << "\n";
    o << "epoch." << (e + 1) << ".val_loss=" << format_double(epochs[e].val_loss) << "\n";
    for (std::size_t v = 0; v < epochs[e].val_top1.size(); ++v) {
      o << "epoch." << (e + 1) << ".val_top1.step" << v << "="
        << format_double(epochs[e].val_top1[v]) << "\n";
    }
  }
  o << "selected_epoch=" << selected_epoch << "\n";
  o << "best_val_loss=" << format_double(best_val_loss) << "\n";
  return o.str();
}

TrainResult train(const data::RawDataset& d, const TrainConfig& cfg,
                  const std::function<void(const std::string&)>& log) {
  cfg.hp.validate();
  if (d.empty()) throw EmptyDataset("training needs a non-empty dataset");
  if (d.codebook_size != cfg.hp.codebook_size) {
    throw ValidationError("dataset codebook " + std::to_string(d.codebook_size) +
                          " does not match configured " + std::to_string(cfg.hp.codebook_size));
  }

  data::SplitConfig split_cfg = cfg.split;
  if (!cfg.min_chunk_is_explicit) {
    split_cfg.min_chunk_len = cfg.hp.window + cfg.hp.horizon;
  }

  TrainResult result;
  result.split = cfg.split_method == SplitMethod::kAdjusted
                     ? data::adjusted_split(d, split_cfg)
                     : data::sequential_split(d, split_cfg);

  // normalization sees only the training positions unless configured wider
  std::vector<geo::GeodeticPosition> fit_positions;
  const data::RawDataset& fit_src =
      cfg.bounds_mode == BoundsMode::kTrainOnly ? result.split.train : d;
  fit_positions.reserve(fit_src.size());
  for (const auto& s : fit_src.samples) fit_positions.push_back(s.ue_pos);
  const geo::NormalizationBounds bounds = geo::fit_bounds(fit_positions);

  const auto t0 = std::chrono::steady_clock::now();
  auto train_w = data::build_windows(result.split.train, bounds, cfg.hp.window, cfg.hp.horizon);
  auto val_w = data::build_windows(result.split.val, bounds, cfg.hp.window, cfg.hp.horizon);
  auto test_w = data::build_windows(result.split.test, bounds, cfg.hp.window, cfg.hp.horizon);
  if (train_w.empty() || val_w.empty() || test_w.empty()) {
    throw InsufficientData("windowing left an empty split: train " +
                           std::to_string(train_w.size()) + ", val " + std::to_string(val_w.size()) +
                           ", test " + std::to_string(test_w.size()));
  }

  auto params = std::make_unique<nn::ModelParams>(cfg.hp.codebook_size);
  nn::init_params(*params, cfg.seed);
  nn::Adam::Config adam_cfg;
  adam_cfg.weight_decay = cfg.hp.weight_decay;
  nn::Adam opt(*params, adam_cfg);

  TrainReport report;
  report.seed = cfg.seed;
  report.config_hash = to_hex(fnv1a64(cfg.to_text()));
  report.train_windows = static_cast<std::int64_t>(train_w.size());
  report.val_windows = static_cast<std::int64_t>(val_w.size());
  report.test_windows = static_cast<std::int64_t>(test_w.size());

  int best_epoch = 0;
  double best_val = 0.0;
  std::vector<std::vector<double>> best_snapshot;

  std::vector<std::size_t> order(train_w.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.hp.epochs; ++epoch) {
    const double lr = nn::lr_schedule(epoch, cfg.hp);
    Rng shuffle_rng(derive_seed(cfg.seed, fnv1a64("epoch-shuffle"), static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.hp.train_batch)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.hp.train_batch));
      const int b = static_cast<int>(end - begin);

      std::vector<std::vector<int>> step_labels(static_cast<std::size_t>(cfg.hp.horizon) + 1,
                                                std::vector<int>(static_cast<std::size_t>(b)));
      for (std::size_t i = begin; i < end; ++i) {
        for (int v = 0; v <= cfg.hp.horizon; ++v) {
          step_labels[static_cast<std::size_t>(v)][i - begin] =
              train_w[order[i]].labels[static_cast<std::size_t>(v)];
        }
      }

      for (nn::Variable* v : params->trainable()) v->zero_grad();
      nn::Graph g;
      auto probs = nn::forward_batch(g, *params, pack_features(train_w, order, begin, end), b,
                                     cfg.hp, /*train=*/true, /*update_running=*/true);
      nn::Tensor per_window;
      for (int v = 0; v <= cfg.hp.horizon; ++v) {
        nn::Tensor l = g.nll_rows(probs[static_cast<std::size_t>(v)],
                                  step_labels[static_cast<std::size_t>(v)]);
        per_window = v == 0 ? l : g.add(per_window, l);
      }
      nn::Tensor loss = g.mean_all(per_window);
      g.backward(loss);
      opt.step(lr);
      loss_sum += loss.scalar() * static_cast<double>(b);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(train_w.size());
    stats.val_loss = eval_loss(*params, cfg.hp, val_w, cfg.hp.val_batch);
    stats.val_top1 = eval_top1(*params, cfg.hp, val_w, cfg.hp.val_batch);
    report.epochs.push_back(stats);

    if (best_epoch == 0 || stats.val_loss < best_val) {
      best_epoch = epoch;
      best_val = stats.val_loss;
      best_snapshot = params->snapshot();
    }
    if (log) {
      std::ostringstream msg;
      msg << "epoch " << epoch << "/" << cfg.hp.epochs << " lr " << format_double(lr)
          << " train_loss " << format_double(stats.train_loss) << " val_loss "
          << format_double(stats.val_loss) << " val_top1.step0 "
          << format_double(stats.val_top1.front());
      log(msg.str());
    }
  }

  if (cfg.select == SelectRule::kBestVal) {
    params->restore(best_snapshot);
    report.selected_epoch = best_epoch;
  } else {
    report.selected_epoch = cfg.hp.epochs;
  }
  report.best_val_loss = best_val;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  result.checkpoint.params = std::move(params);
  result.checkpoint.hp = cfg.hp;
  result.checkpoint.bounds = bounds;
  result.checkpoint.seed = cfg.seed;
  result.report = std::move(report);
  return result;
}

std::vector<metrics::EvalSample> collect_eval_samples(const nn::Checkpoint& ckpt,
                                                      const data::RawDataset& d) {
  if (!ckpt.params) throw Error("checkpoint has no parameters");
  const nn::HyperParams& hp = ckpt.hp;
  auto windows = data::build_windows(d, ckpt.bounds, hp.window, hp.horizon);
  if (windows.empty()) {
    throw InsufficientData("dataset yields no evaluation windows");
  }

  std::unordered_map<QtKey, const data::RawSample*, QtHash> by_qt;
  by_qt.reserve(d.size());
  for (const auto& s : d.samples) by_qt[{s.q, s.t}] = &s;

  std::vector<metrics::EvalSample> out;
  out.reserve(windows.size() * static_cast<std::size_t>(hp.horizon + 1));
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  nn::ModelParams& params = *ckpt.params;
  const int m = hp.codebook_size;
  for (std::size_t begin = 0; begin < windows.size();
       begin += static_cast<std::size_t>(hp.test_batch)) {
    const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(hp.test_batch));
    const int b = static_cast<int>(end - begin);
    nn::Graph g;
    auto probs = nn::forward_batch(g, params, pack_features(windows, order, begin, end), b, hp,
                                   false, false);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& w = windows[order[i]];
      for (int v = 0; v <= hp.horizon; ++v) {
        metrics::EvalSample es;
        es.step = v;
        es.true_beam = w.labels[static_cast<std::size_t>(v)];
        const auto p = probs[static_cast<std::size_t>(v)].values();
        es.scores.assign(p.begin() + static_cast<std::ptrdiff_t>((i - begin) * static_cast<std::size_t>(m)),
                         p.begin() + static_cast<std::ptrdiff_t>((i - begin + 1) * static_cast<std::size_t>(m)));
        const auto it = by_qt.find({w.q, w.t + v});
        if (it != by_qt.end() && it->second->powers) {
          es.powers = *it->second->powers;
        }
        out.push_back(std::move(es));
      }
    }
  }
  return out;
}

metrics::MetricsReport evaluate(const nn::Checkpoint& ckpt, const data::RawDataset& d) {
  const auto samples = collect_eval_samples(ckpt, d);
  const auto pc = nn::count_params(*ckpt.params);
  return metrics::compute_report(samples, ckpt.hp.codebook_size, ckpt.hp.horizon + 1, pc.count,
                                 pc.size_bytes);
}

}  // namespace uavbeam::pipeline
