#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uavbeam/data.hpp"
#include "uavbeam/metrics.hpp"
#include "uavbeam/nn/checkpoint.hpp"
#include "uavbeam/nn/model.hpp"

namespace uavbeam::pipeline {

enum class SplitMethod { kAdjusted, kSequential };
enum class BoundsMode { kTrainOnly, kWholeDataset };
enum class SelectRule { kBestVal, kFinal };

struct TrainConfig {
  data::SplitConfig split;
  SplitMethod split_method = SplitMethod::kAdjusted;
  BoundsMode bounds_mode = BoundsMode::kTrainOnly;
  nn::HyperParams hp;
  std::uint64_t seed = 0;
  SelectRule select = SelectRule::kBestVal;
  // derive the chunk-length floor from window+horizon unless explicitly set
  bool min_chunk_is_explicit = false;

  std::string to_text() const;  // canonical form, hashed into reports
};

struct EpochStats {
  double train_loss = 0.0;  // mean per-window loss over the epoch
  double val_loss = 0.0;
  std::vector<double> val_top1;  // per prediction step
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int selected_epoch = 0;  // 1-based
  double best_val_loss = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::int64_t train_windows = 0;
  std::int64_t val_windows = 0;
  std::int64_t test_windows = 0;
  double wall_seconds = 0.0;  // excluded from the serialized report

  std::string to_text() const;  // deterministic key=value lines
};

struct TrainResult {
  nn::Checkpoint checkpoint;
  TrainReport report;
  data::Split split;
};

// Full training run: split, fit bounds, window, then seeded minibatch
// optimization with per-epoch validation. Progress lines go to `log` when
// provided. Throws InsufficientData when any split yields no windows.
TrainResult train(const data::RawDataset& d, const TrainConfig& cfg,
                  const std::function<void(const std::string&)>& log = nullptr);

// Windows the dataset with the checkpoint's bounds and shape settings, runs
// eval-mode inference, and aggregates every metric.
metrics::MetricsReport evaluate(const nn::Checkpoint& ckpt, const data::RawDataset& d);

// Raw per-step evaluation samples for callers that need custom aggregation.
std::vector<metrics::EvalSample> collect_eval_samples(const nn::Checkpoint& ckpt,
                                                      const data::RawDataset& d);

}  // namespace uavbeam::pipeline
