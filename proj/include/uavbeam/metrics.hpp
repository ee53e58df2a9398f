#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uavbeam::metrics {

// One prediction instance: the score row emitted for step v of some window,
// the true beam at that step, and (when the dataset carries them) the
// ground-truth per-beam receive powers of the labeled sample.
struct EvalSample {
  int step = 0;
  int true_beam = 0;
  std::vector<double> scores;                 // length M
  std::optional<std::vector<double>> powers;  // length M
};

// Fraction of samples whose true beam ranks inside the top K scores.
// Rank ties at the K-th score admit the lower beam index first.
double top_k_accuracy(const std::vector<EvalSample>& samples, int k);

// 10*log10 of ((P_best - Pn/2) / (P_predicted - Pn/2)). Pn defaults to the
// smallest power in the sample's own vector; pass noise_floor to use one
// scenario-wide value instead. Perfect prediction gives 0 dB.
double per_sample_power_loss_db(const EvalSample& s,
                                std::optional<double> noise_floor = std::nullopt);

// 10*log10 of the mean linear power ratio over the set.
double average_power_loss_db(const std::vector<EvalSample>& samples,
                             std::optional<double> noise_floor = std::nullopt);

struct OverheadPoint {
  int b_min = 0;        // smallest K whose top-K accuracy reaches the target
  double savings = 0.0; // 1 - b_min/M
};
// b_min falls back to M when no K reaches the target.
OverheadPoint overhead_savings(const std::vector<EvalSample>& samples, double target);

// Fraction of samples whose per-sample power loss is <= threshold_db.
double power_loss_reliability(const std::vector<EvalSample>& samples, double threshold_db,
                              std::optional<double> noise_floor = std::nullopt);

struct MetricsReport {
  int classes = 0;
  int steps = 0;
  std::vector<std::int64_t> samples_per_step;
  std::vector<std::vector<double>> topk_acc;   // [step][k-1], k = 1..M
  bool has_power = false;
  std::vector<double> mean_power_loss_db;      // [step]
  std::vector<double> reliability_1db;         // [step]
  std::vector<double> reliability_3db;         // [step]
  // pooled across steps at targets 0.80/0.85/0.90/0.95/0.99
  std::vector<std::pair<int, OverheadPoint>> overhead;          // (target pct, point)
  std::vector<std::vector<std::pair<int, OverheadPoint>>> overhead_per_step;
  std::int64_t param_count = 0;
  std::int64_t param_bytes = 0;

  // deterministic key=value lines for diffing
  std::string to_text() const;
};

MetricsReport compute_report(const std::vector<EvalSample>& samples, int classes, int steps,
                             std::int64_t param_count, std::int64_t param_bytes);

}  // namespace uavbeam::metrics
