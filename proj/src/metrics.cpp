#include "uavbeam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "uavbeam/errors.hpp"
#include "uavbeam/util.hpp"

namespace uavbeam::metrics {

namespace {

// number of beams scoring strictly better than the true one, counting
// equal-scoring lower indices as better
int true_beam_rank(const EvalSample& s) {
  const double own = s.scores[static_cast<std::size_t>(s.true_beam)];
  int rank = 0;
  for (int j = 0; j < static_cast<int>(s.scores.size()); ++j) {
    const double v = s.scores[static_cast<std::size_t>(j)];
    if (v > own || (v == own && j < s.true_beam)) ++rank;
  }
  return rank;
}

double linear_power_ratio(const EvalSample& s, std::optional<double> noise_floor) {
  if (!s.powers) throw MissingPowers("sample carries no power vector");
  const auto& p = *s.powers;
  if (p.size() != s.scores.size()) {
    throw ShapeMismatch("power vector length does not match score row");
  }
  const double pn = noise_floor ? *noise_floor : *std::min_element(p.begin(), p.end());
  int predicted = 0;
  for (int j = 1; j < static_cast<int>(s.scores.size()); ++j) {
    if (s.scores[static_cast<std::size_t>(j)] > s.scores[static_cast<std::size_t>(predicted)]) {
      predicted = j;
    }
  }
  const double best = *std::max_element(p.begin(), p.end());
  const double num = best - 0.5 * pn;
  const double den = p[static_cast<std::size_t>(predicted)] - 0.5 * pn;
  if (den <= 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

}  // namespace

double top_k_accuracy(const std::vector<EvalSample>& samples, int k) {
  if (samples.empty()) throw EmptySet("top-k accuracy of an empty sample set");
  if (k < 1) throw ValidationError("k must be >= 1");
  std::int64_t hits = 0;
  for (const EvalSample& s : samples) {
    if (true_beam_rank(s) < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double per_sample_power_loss_db(const EvalSample& s, std::optional<double> noise_floor) {
  return 10.0 * std::log10(linear_power_ratio(s, noise_floor));
}

double average_power_loss_db(const std::vector<EvalSample>& samples,
                             std::optional<double> noise_floor) {
  if (samples.empty()) throw EmptySet("power loss of an empty sample set");
  double sum = 0.0;
  for (const EvalSample& s : samples) sum += linear_power_ratio(s, noise_floor);
  return 10.0 * std::log10(sum / static_cast<double>(samples.size()));
}

OverheadPoint overhead_savings(const std::vector<EvalSample>& samples, double target) {
  if (samples.empty()) throw EmptySet("overhead savings of an empty sample set");
  if (target <= 0.0 || target > 1.0) throw ValidationError("target must be in (0,1]");
  const int m = static_cast<int>(samples[0].scores.size());
  // one rank pass gives every top-K accuracy at once
  std::vector<std::int64_t> rank_hist(static_cast<std::size_t>(m), 0);
  for (const EvalSample& s : samples) {
    rank_hist[static_cast<std::size_t>(true_beam_rank(s))]++;
  }
  OverheadPoint out;
  out.b_min = m;
  std::int64_t cum = 0;
  for (int k = 1; k <= m; ++k) {
    cum += rank_hist[static_cast<std::size_t>(k - 1)];
    const double acc = static_cast<double>(cum) / static_cast<double>(samples.size());
    if (acc >= target) {
      out.b_min = k;
      break;
    }
  }
  out.savings = 1.0 - static_cast<double>(out.b_min) / static_cast<double>(m);
  return out;
}

double power_loss_reliability(const std::vector<EvalSample>& samples, double threshold_db,
                              std::optional<double> noise_floor) {
  if (samples.empty()) throw EmptySet("reliability of an empty sample set");
  std::int64_t hits = 0;
  for (const EvalSample& s : samples) {
    if (per_sample_power_loss_db(s, noise_floor) <= threshold_db) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

MetricsReport compute_report(const std::vector<EvalSample>& samples, int classes, int steps,
                             std::int64_t param_count, std::int64_t param_bytes) {
  if (samples.empty()) throw EmptySet("cannot build a report from no samples");
  MetricsReport r;
  r.classes = classes;
  r.steps = steps;
  r.param_count = param_count;
  r.param_bytes = param_bytes;

  std::vector<std::vector<EvalSample>> by_step(static_cast<std::size_t>(steps));
  for (const EvalSample& s : samples) {
    if (s.step < 0 || s.step >= steps) throw ValidationError("sample step outside range");
    by_step[static_cast<std::size_t>(s.step)].push_back(s);
  }
  r.samples_per_step.resize(static_cast<std::size_t>(steps));
  r.topk_acc.resize(static_cast<std::size_t>(steps));

  r.has_power = true;
  for (const EvalSample& s : samples) {
    if (!s.powers) {
      r.has_power = false;
      break;
    }
  }

  const int targets[] = {80, 85, 90, 95, 99};
  for (int v = 0; v < steps; ++v) {
    const auto& set = by_step[static_cast<std::size_t>(v)];
    r.samples_per_step[static_cast<std::size_t>(v)] = static_cast<std::int64_t>(set.size());
    if (set.empty()) throw EmptySet("no samples for step " + std::to_string(v));
    auto& curve = r.topk_acc[static_cast<std::size_t>(v)];
    curve.resize(static_cast<std::size_t>(classes));
    // one rank histogram per step covers every K
    std::vector<std::int64_t> hist(static_cast<std::size_t>(classes), 0);
    for (const EvalSample& s : set) hist[static_cast<std::size_t>(true_beam_rank(s))]++;
    std::int64_t cum = 0;
    for (int k = 1; k <= classes; ++k) {
      cum += hist[static_cast<std::size_t>(k - 1)];
      curve[static_cast<std::size_t>(k - 1)] =
          static_cast<double>(cum) / static_cast<double>(set.size());
    }
    if (r.has_power) {
      r.mean_power_loss_db.push_back(average_power_loss_db(set));
      r.reliability_1db.push_back(power_loss_reliability(set, 1.0));
      r.reliability_3db.push_back(power_loss_reliability(set, 3.0));
    }
    std::vector<std::pair<int, OverheadPoint>> per_step;
    for (int t : targets) {
      per_step.emplace_back(t, overhead_savings(set, static_cast<double>(t) / 100.0));
    }
    r.overhead_per_step.push_back(std::move(per_step));
  }
  for (int t : targets) {
    r.overhead.emplace_back(t, overhead_savings(samples, static_cast<double>(t) / 100.0));
  }
  return r;
}

std::string MetricsReport::to_text() const {
  std::ostringstream o;
  o << "report.type=metrics\n";
  o << "classes=" << classes << "\n";
  o << "steps=" << steps << "\n";
  for (int v = 0; v < steps; ++v) {
    o << "samples.step" << v << "=" << samples_per_step[static_cast<std::size_t>(v)] << "\n";
  }
  for (int v = 0; v < steps; ++v) {
    for (int k = 1; k <= classes; ++k) {
      o << "top" << k << "_acc.step" << v << "="
        << format_double(topk_acc[static_cast<std::size_t>(v)][static_cast<std::size_t>(k - 1)])
        << "\n";
    }
  }
  o << "power_metrics=" << (has_power ? "present" : "absent") << "\n";
  if (has_power) {
    for (int v = 0; v < steps; ++v) {
      o << "mean_pl_db.step" << v << "=" << format_double(mean_power_loss_db[static_cast<std::size_t>(v)])
        << "\n";
    }
    for (int v = 0; v < steps; ++v) {
      o << "reliability.1db.step" << v << "="
        << format_double(reliability_1db[static_cast<std::size_t>(v)]) << "\n";
    }
    for (int v = 0; v < steps; ++v) {
      o << "reliability.3db.step" << v << "="
        << format_double(reliability_3db[static_cast<std::size_t>(v)]) << "\n";
    }
  }
  for (const auto& [t, pt] : overhead) {
    o << "overhead.b" << t << "=" << pt.b_min << "\n";
    o << "overhead.eta" << t << "=" << format_double(pt.savings) << "\n";
  }
  for (int v = 0; v < steps; ++v) {
    for (const auto& [t, pt] : overhead_per_step[static_cast<std::size_t>(v)]) {
      o << "overhead.b" << t << ".step" << v << "=" << pt.b_min << "\n";
      o << "overhead.eta" << t << ".step" << v << "=" << format_double(pt.savings) << "\n";
    }
  }
  o << "params.count=" << param_count << "\n";
  o << "params.size_bytes=" << param_bytes << "\n";
  o << "params.size_mb=" << format_double(static_cast<double>(param_bytes) / (1024.0 * 1024.0))
    << "\n";
  return o.str();
}

}  // namespace uavbeam::metrics
