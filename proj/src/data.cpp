#include "uavbeam/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uavbeam/errors.hpp"

namespace uavbeam::data {

namespace {

// argmax with ties resolved to the lowest index
int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

RawDataset gather(const RawDataset& d, const std::vector<std::size_t>& indices) {
  RawDataset out;
  out.codebook_size = d.codebook_size;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(d.samples[i]);
  return out;
}

std::vector<double> to_probs(const LabelDistribution& dist, std::size_t m) {
  std::vector<double> p(m, 0.0);
  if (dist.total <= 0) return p;  // empty split keeps an all-zero distribution
  for (std::size_t b = 0; b < m && b < dist.counts.size(); ++b) {
    p[b] = static_cast<double>(dist.counts[b]) / static_cast<double>(dist.total);
  }
  return p;
}

LabelDistribution distribution_of(const RawDataset& d, const std::vector<std::size_t>& indices) {
  LabelDistribution dist;
  dist.counts.assign(static_cast<std::size_t>(d.codebook_size), 0);
  dist.total = static_cast<std::int64_t>(indices.size());
  for (std::size_t i : indices) {
    dist.counts[static_cast<std::size_t>(d.samples[i].beam)]++;
  }
  return dist;
}

}  // namespace

void RawDataset::validate() const {
  if (codebook_size <= 0) {
    throw ValidationError("codebook size must be positive, got " + std::to_string(codebook_size));
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const RawSample& s = samples[i];
    const std::string at = " (sample " + std::to_string(i) + ")";
    if (i > 0) {
      const RawSample& prev = samples[i - 1];
      if (s.q < prev.q || (s.q == prev.q && s.t <= prev.t)) {
        throw ValidationError("samples not strictly ordered by (q,t)" + at);
      }
    }
    if (s.beam < 0 || s.beam >= codebook_size) {
      throw ValidationError("beam " + std::to_string(s.beam) + " outside codebook" + at);
    }
    if (s.ue_pos.latitude_deg < -90.0 || s.ue_pos.latitude_deg > 90.0 ||
        s.bs_pos.latitude_deg < -90.0 || s.bs_pos.latitude_deg > 90.0) {
      throw ValidationError("latitude outside [-90,90]" + at);
    }
    if (s.ue_pos.longitude_deg < -180.0 || s.ue_pos.longitude_deg > 180.0 ||
        s.bs_pos.longitude_deg < -180.0 || s.bs_pos.longitude_deg > 180.0) {
      throw ValidationError("longitude outside [-180,180]" + at);
    }
    if (s.height_m < 0.0) {
      throw ValidationError("negative height" + at);
    }
    if (s.powers) {
      if (static_cast<int>(s.powers->size()) != codebook_size) {
        throw ValidationError("power vector length " + std::to_string(s.powers->size()) +
                              " does not match codebook " + std::to_string(codebook_size) + at);
      }
      if (argmax_lowest(*s.powers) != s.beam) {
        throw ValidationError("beam label does not maximize the power vector" + at);
      }
    }
  }
}

void SplitConfig::validate() const {
  if (f_train <= 0.0 || f_val < 0.0 || f_test < 0.0) {
    throw ValidationError("split fractions must be positive (train) and non-negative");
  }
  const double sum = f_train + f_val + f_test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1, got " + std::to_string(sum));
  }
  if (chunk_fractions.empty()) {
    throw ValidationError("no candidate chunk fractions configured");
  }
  for (double f : chunk_fractions) {
    if (f <= 0.0 || f > 1.0) {
      throw ValidationError("chunk fraction outside (0,1]: " + std::to_string(f));
    }
  }
  if (min_chunk_len < 1) {
    throw ValidationError("min_chunk_len must be at least 1");
  }
}

SplitCounts split_counts_floor(std::int64_t n, const SplitConfig& cfg) {
  SplitCounts c;
  c.train = static_cast<std::int64_t>(std::floor(cfg.f_train * static_cast<double>(n)));
  c.val = static_cast<std::int64_t>(std::floor(cfg.f_val * static_cast<double>(n)));
  c.test = n - c.train - c.val;
  return c;
}

SplitCounts split_counts_balanced(std::int64_t n, const SplitConfig& cfg) {
  const double targets[3] = {cfg.f_train * static_cast<double>(n),
                             cfg.f_val * static_cast<double>(n),
                             cfg.f_test * static_cast<double>(n)};
  std::int64_t counts[3];
  double fracs[3];
  std::int64_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = static_cast<std::int64_t>(std::floor(targets[i]));
    fracs[i] = targets[i] - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  // hand the leftover units to the largest fractional parts; ties favor the
  // earlier split so the outcome is deterministic
  std::int64_t leftover = n - assigned;
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int a, int b) { return fracs[a] > fracs[b]; });
  for (int i = 0; i < 3 && leftover > 0; ++i, --leftover) {
    counts[order[i]]++;
  }
  return {counts[0], counts[1], counts[2]};
}

Split sequential_split(const RawDataset& d, const SplitConfig& cfg) {
  cfg.validate();
  if (d.empty()) throw EmptyDataset("cannot split an empty dataset");
  const std::int64_t k = static_cast<std::int64_t>(d.size());
  const SplitCounts c = split_counts_floor(k, cfg);
  Split out;
  out.train.codebook_size = out.val.codebook_size = out.test.codebook_size = d.codebook_size;
  out.train.samples.assign(d.samples.begin(), d.samples.begin() + c.train);
  out.val.samples.assign(d.samples.begin() + c.train, d.samples.begin() + c.train + c.val);
  out.test.samples.assign(d.samples.begin() + c.train + c.val, d.samples.end());
  return out;
}

LabelDistribution label_distribution(const RawDataset& d) {
  LabelDistribution dist;
  dist.counts.assign(static_cast<std::size_t>(d.codebook_size), 0);
  dist.total = static_cast<std::int64_t>(d.size());
  for (const RawSample& s : d.samples) {
    dist.counts[static_cast<std::size_t>(s.beam)]++;
  }
  return dist;
}

double distribution_similarity_score(const LabelDistribution& ref, const LabelDistribution& train,
                                     const LabelDistribution& val, const LabelDistribution& test) {
  const std::size_t m = ref.counts.size();
  if (train.counts.size() != m || val.counts.size() != m || test.counts.size() != m) {
    throw ValidationError("label distributions cover different codebooks");
  }
  const auto pr = to_probs(ref, m);
  const auto pt = to_probs(train, m);
  const auto pv = to_probs(val, m);
  const auto pe = to_probs(test, m);
  double s = 0.0;
  for (std::size_t b = 0; b < m; ++b) {
    s += std::abs(pr[b] - pt[b]) + std::abs(pr[b] - pv[b]) + std::abs(pr[b] - pe[b]);
  }
  return s;
}

Split adjusted_split(const RawDataset& d, const SplitConfig& cfg, AdjustedSplitInfo* info) {
  cfg.validate();
  if (d.empty()) throw EmptyDataset("cannot split an empty dataset");
  const std::int64_t k = static_cast<std::int64_t>(d.size());
  const LabelDistribution ref = label_distribution(d);

  // candidate chunk sizes, ascending and unique so score ties go to the
  // smaller chunk
  std::vector<std::int64_t> sizes;
  for (double f : cfg.chunk_fractions) {
    std::int64_t c = static_cast<std::int64_t>(std::floor(f * static_cast<double>(k)));
    if (c < 1) c = 1;
    if (c > k) c = k;
    if (c >= cfg.min_chunk_len) sizes.push_back(c);
  }
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.empty()) {
    throw NoValidChunkSize("no candidate chunk size reaches the minimum length " +
                           std::to_string(cfg.min_chunk_len));
  }

  // stage (i): score an in-order chunked split for every candidate size
  double best_score = 0.0;
  std::int64_t best_size = -1;
  std::vector<std::size_t> best_train, best_val, best_test;
  for (std::int64_t c : sizes) {
    std::vector<std::size_t> tr, va, te;
    tr.reserve(static_cast<std::size_t>(k));
    for (std::int64_t start = 0; start < k; start += c) {
      const std::int64_t len = std::min(c, k - start);
      const SplitCounts sc = split_counts_floor(len, cfg);
      for (std::int64_t i = 0; i < len; ++i) {
        const std::size_t idx = static_cast<std::size_t>(start + i);
        if (i < sc.train) {
          tr.push_back(idx);
        } else if (i < sc.train + sc.val) {
          va.push_back(idx);
        } else {
          te.push_back(idx);
        }
      }
    }
    const double score = distribution_similarity_score(ref, distribution_of(d, tr),
                                                       distribution_of(d, va),
                                                       distribution_of(d, te));
    if (best_size < 0 || score < best_score) {
      best_score = score;
      best_size = c;
      best_train = std::move(tr);
      best_val = std::move(va);
      best_test = std::move(te);
    }
  }

  // stage (ii): pool each label's samples in (q,t) order and re-split the
  // group; this reassignment is authoritative
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(d.codebook_size));
  for (std::size_t i = 0; i < d.size(); ++i) {
    groups[static_cast<std::size_t>(d.samples[i].beam)].push_back(i);
  }
  std::vector<std::size_t> tr, va, te;
  std::vector<int> small_labels;
  for (std::size_t b = 0; b < groups.size(); ++b) {
    const auto& g = groups[b];
    if (g.empty()) continue;
    const std::int64_t n = static_cast<std::int64_t>(g.size());
    if (n < 3) {
      // too few samples to stratify; keep them all in train
      small_labels.push_back(static_cast<int>(b));
      tr.insert(tr.end(), g.begin(), g.end());
      continue;
    }
    const SplitCounts sc = split_counts_balanced(n, cfg);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::size_t idx = g[static_cast<std::size_t>(i)];
      if (i < sc.train) {
        tr.push_back(idx);
      } else if (i < sc.train + sc.val) {
        va.push_back(idx);
      } else {
        te.push_back(idx);
      }
    }
  }
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  std::sort(te.begin(), te.end());

  if (info) {
    info->chosen_chunk_size = best_size;
    info->chunk_stage_score = best_score;
    info->final_score = distribution_similarity_score(
        ref, distribution_of(d, tr), distribution_of(d, va), distribution_of(d, te));
    info->small_labels = small_labels;
  }

  Split out;
  out.train = gather(d, tr);
  out.val = gather(d, va);
  out.test = gather(d, te);
  return out;
}

void WindowedSample::check_invariants() const {
  if (static_cast<int>(labels.size()) != horizon + 1) {
    throw ValidationError("label count does not match horizon");
  }
  if (static_cast<int>(features.size()) != window * geo::kFeatureDim) {
    throw ValidationError("feature block size does not match window");
  }
  if (padded_rows < 0 || padded_rows >= window) {
    throw ValidationError("padded row count out of range");
  }
  for (int r = 0; r < window; ++r) {
    bool all_zero = true;
    for (int c = 0; c < geo::kFeatureDim; ++c) {
      if (features[static_cast<std::size_t>(r * geo::kFeatureDim + c)] != 0.0) {
        all_zero = false;
        break;
      }
    }
    if (r < padded_rows && !all_zero) {
      throw ValidationError("padding row is not zero");
    }
    if (r >= padded_rows && all_zero) {
      // a real feature row always carries a unit vector, so it cannot vanish
      throw ValidationError("non-padding row is all zero");
    }
  }
}

std::vector<WindowedSample> build_windows(const RawDataset& d,
                                          const geo::NormalizationBounds& bounds, int window,
                                          int horizon) {
  if (window < 1 || horizon < 0) {
    throw ValidationError("window must be >= 1 and horizon >= 0");
  }
  std::vector<WindowedSample> out;
  const auto& samples = d.samples;
  std::size_t run_start = 0;
  while (run_start < samples.size()) {
    // find the maximal run of consecutive t inside one trip
    std::size_t run_end = run_start + 1;
    while (run_end < samples.size() && samples[run_end].q == samples[run_start].q &&
           samples[run_end].t == samples[run_end - 1].t + 1) {
      ++run_end;
    }
    const std::int64_t len = static_cast<std::int64_t>(run_end - run_start);
    if (len >= horizon + 1) {
      // features for the whole run, computed once
      std::vector<geo::FeatureVector> feats(static_cast<std::size_t>(len));
      for (std::int64_t i = 0; i < len; ++i) {
        const RawSample& s = samples[run_start + static_cast<std::size_t>(i)];
        const geo::GeodeticPosition ue{s.ue_pos.latitude_deg, s.ue_pos.longitude_deg, s.height_m};
        const geo::GeodeticPosition bs{s.bs_pos.latitude_deg, s.bs_pos.longitude_deg, 0.0};
        feats[static_cast<std::size_t>(i)] = geo::make_feature(ue, bs, bounds);
      }
      for (std::int64_t anchor = 0; anchor + horizon < len; ++anchor) {
        WindowedSample w;
        w.window = window;
        w.horizon = horizon;
        const RawSample& a = samples[run_start + static_cast<std::size_t>(anchor)];
        w.q = a.q;
        w.t = a.t;
        w.features.assign(static_cast<std::size_t>(window) * geo::kFeatureDim, 0.0);
        const std::int64_t first = anchor - window + 1;
        w.padded_rows = first < 0 ? static_cast<int>(-first) : 0;
        for (std::int64_t j = std::max<std::int64_t>(first, 0); j <= anchor; ++j) {
          const auto row = static_cast<std::size_t>(j - first);
          const auto f = feats[static_cast<std::size_t>(j)].as_array();
          std::copy(f.begin(), f.end(), w.features.begin() + row * geo::kFeatureDim);
        }
        w.labels.resize(static_cast<std::size_t>(horizon) + 1);
        for (int v = 0; v <= horizon; ++v) {
          w.labels[static_cast<std::size_t>(v)] =
              samples[run_start + static_cast<std::size_t>(anchor + v)].beam;
        }
        out.push_back(std::move(w));
      }
    }
    run_start = run_end;
  }
  return out;
}

}  // namespace uavbeam::data
