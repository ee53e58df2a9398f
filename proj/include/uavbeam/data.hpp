#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uavbeam/geo.hpp"

namespace uavbeam::data {

struct RawSample {
  std::int64_t q = 0;  // trip id
  std::int64_t t = 0;  // sample index inside the trip
  geo::GeodeticPosition bs_pos;
  geo::GeodeticPosition ue_pos;
  double height_m = 0.0;
  int beam = 0;  // optimal beam, 0-based
  std::optional<std::vector<double>> powers;  // per-beam receive power, size M
};

struct RawDataset {
  std::vector<RawSample> samples;
  int codebook_size = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  // Checks ordering, label ranges, and power/label consistency.
  // Throws ValidationError with the offending sample index.
  void validate() const;
};

struct SplitConfig {
  double f_train = 0.65;
  double f_val = 0.15;
  double f_test = 0.20;
  // candidate chunk sizes as fractions of the dataset
  std::vector<double> chunk_fractions = {0.01, 0.02, 0.05, 0.10, 0.20};
  // chunks shorter than this are not considered (default window + horizon)
  int min_chunk_len = 11;

  void validate() const;  // throws ValidationError
};

struct Split {
  RawDataset train;
  RawDataset val;
  RawDataset test;
};

struct LabelDistribution {
  std::vector<std::int64_t> counts;  // indexed by beam
  std::int64_t total = 0;
};

struct AdjustedSplitInfo {
  std::int64_t chosen_chunk_size = 0;
  double chunk_stage_score = 0.0;   // best score over candidate chunk sizes
  double final_score = 0.0;         // score of the label-regrouped result
  std::vector<int> small_labels;    // labels routed entirely to train (< 3 samples)
};

// Deterministic in-order split: first floor(f_train*K) samples to train,
// next floor(f_val*K) to val, remainder to test.
Split sequential_split(const RawDataset& d, const SplitConfig& cfg);

LabelDistribution label_distribution(const RawDataset& d);

// L1 distance between the reference label distribution and each split's,
// summed over the three splits. An empty split contributes its full mass.
double distribution_similarity_score(const LabelDistribution& ref, const LabelDistribution& train,
                                     const LabelDistribution& val, const LabelDistribution& test);

// Two-stage distribution-balancing split: (i) search chunked in-order splits
// for the best similarity score, (ii) regroup per label and re-split each
// label group in (q,t) order. Stage (ii) determines the returned partition.
Split adjusted_split(const RawDataset& d, const SplitConfig& cfg,
                     AdjustedSplitInfo* info = nullptr);

struct WindowedSample {
  int window = 0;                 // feature rows
  int horizon = 0;                // future steps, labels has horizon+1 entries
  std::vector<double> features;   // window x 5, row major, oldest row first
  std::vector<int> labels;        // beams at t .. t+horizon
  std::int64_t q = 0;
  std::int64_t t = 0;             // anchor sample index
  int padded_rows = 0;            // zero rows at the top of the feature block

  void check_invariants() const;  // throws ValidationError
};

// Slides a window of `window` past feature rows over every maximal run of
// consecutive sample indices inside each trip, keeping anchors that still
// have `horizon` consecutive future samples in the same run. Histories
// shorter than the window are zero padded at the leading rows.
std::vector<WindowedSample> build_windows(const RawDataset& d,
                                          const geo::NormalizationBounds& bounds, int window,
                                          int horizon);

// Exposed for tests: floor/floor/remainder partition counts and the
// largest-remainder variant used for label groups.
struct SplitCounts {
  std::int64_t train = 0;
  std::int64_t val = 0;
  std::int64_t test = 0;
};
SplitCounts split_counts_floor(std::int64_t n, const SplitConfig& cfg);
SplitCounts split_counts_balanced(std::int64_t n, const SplitConfig& cfg);

}  // namespace uavbeam::data
