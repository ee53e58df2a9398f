#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "uavbeam/data.hpp"
#include "uavbeam/errors.hpp"
#include "uavbeam/synth.hpp"
#include "uavbeam/util.hpp"

using namespace uavbeam;
using data::RawDataset;
using data::RawSample;

namespace {

// toy dataset with positions spread so windowing has usable geometry
RawDataset make_dataset(const std::vector<std::tuple<std::int64_t, std::int64_t, int>>& rows,
                        int codebook) {
  RawDataset d;
  d.codebook_size = codebook;
  for (const auto& [q, t, beam] : rows) {
    RawSample s;
    s.q = q;
    s.t = t;
    s.beam = beam;
    s.bs_pos = {33.0, -112.0, 0.0};
    s.ue_pos = {33.001 + 1e-5 * static_cast<double>(t) + 1e-3 * static_cast<double>(q),
                -111.999 + 2e-5 * static_cast<double>(t), 0.0};
    s.height_m = 60.0;
    s.ue_pos.altitude_m = s.height_m;
    d.samples.push_back(s);
  }
  return d;
}

RawDataset random_stream(Rng& rng, std::int64_t n, int codebook, bool skewed) {
  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
  for (std::int64_t i = 0; i < n; ++i) {
    int beam;
    if (skewed) {
      // labels drift with position in the stream so sequential splits starve
      const double center = static_cast<double>(codebook - 1) * static_cast<double>(i) /
                            static_cast<double>(n - 1);
      const double draw = center + rng.normal(0.0, 0.75);
      beam = std::clamp(static_cast<int>(std::lround(draw)), 0, codebook - 1);
    } else {
      beam = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(codebook)));
    }
    rows.emplace_back(i / 100, i % 100, beam);
  }
  return make_dataset(rows, codebook);
}

std::multiset<std::pair<std::int64_t, std::int64_t>> keys(const RawDataset& d) {
  std::multiset<std::pair<std::int64_t, std::int64_t>> out;
  for (const auto& s : d.samples) out.insert({s.q, s.t});
  return out;
}

void check_exact_partition(const RawDataset& d, const data::Split& sp) {
  auto all = keys(d);
  auto merged = keys(sp.train);
  for (auto k : keys(sp.val)) merged.insert(k);
  for (auto k : keys(sp.test)) merged.insert(k);
  CHECK(merged == all);
}

double split_score(const RawDataset& d, const data::Split& sp) {
  return data::distribution_similarity_score(
      data::label_distribution(d), data::label_distribution(sp.train),
      data::label_distribution(sp.val), data::label_distribution(sp.test));
}

}  // namespace

TEST_CASE("sequential split sizes follow floor-floor-remainder") {
  data::SplitConfig cfg;

  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows100;
  for (int i = 0; i < 100; ++i) rows100.emplace_back(0, i, i % 4);
  auto sp = data::sequential_split(make_dataset(rows100, 4), cfg);
  CHECK(sp.train.size() == 65);
  CHECK(sp.val.size() == 15);
  CHECK(sp.test.size() == 20);

  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows10;
  for (int i = 0; i < 10; ++i) rows10.emplace_back(0, i, 0);
  auto sp10 = data::sequential_split(make_dataset(rows10, 2), cfg);
  CHECK(sp10.train.size() == 6);
  CHECK(sp10.val.size() == 1);
  CHECK(sp10.test.size() == 3);

  std::vector<std::tuple<std::int64_t, std::int64_t, int>> big;
  for (int i = 0; i < 11387; ++i) big.emplace_back(i / 193, i % 193, i % 8);
  auto spb = data::sequential_split(make_dataset(big, 8), cfg);
  CHECK(spb.train.size() == 7401);
  CHECK(spb.val.size() == 1708);
  CHECK(spb.test.size() == 2278);
}

TEST_CASE("sequential split preserves stream order and partitions exactly") {
  data::SplitConfig cfg;
  Rng rng(11);
  auto d = random_stream(rng, 257, 5, false);
  auto sp = data::sequential_split(d, cfg);
  check_exact_partition(d, sp);
  CHECK(sp.train.samples.front().t == d.samples.front().t);
  CHECK(sp.test.samples.back().t == d.samples.back().t);
  CHECK_THROWS_AS(data::sequential_split(RawDataset{{}, 4}, cfg), EmptyDataset);
}

TEST_CASE("split config validation") {
  data::SplitConfig cfg;
  cfg.f_train = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  cfg.f_val = -0.15;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("label distribution tallies beams") {
  auto empty = data::label_distribution(RawDataset{{}, 4});
  CHECK(empty.total == 0);
  CHECK(std::count(empty.counts.begin(), empty.counts.end(), 0) == 4);

  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
  for (int b = 0; b < 4; ++b) rows.emplace_back(0, b, b);
  auto one_each = data::label_distribution(make_dataset(rows, 4));
  CHECK(one_each.counts == std::vector<std::int64_t>{1, 1, 1, 1});

  Rng rng(3);
  auto d = random_stream(rng, 1000, 7, false);
  std::vector<std::int64_t> tally(7, 0);
  for (const auto& s : d.samples) tally[static_cast<std::size_t>(s.beam)]++;
  auto ld = data::label_distribution(d);
  CHECK(ld.counts == tally);
  CHECK(ld.total == 1000);
}

TEST_CASE("similarity score hand case and invariances") {
  data::LabelDistribution ref{{5, 5}, 10};
  data::LabelDistribution all0{{8, 0}, 8};
  data::LabelDistribution even{{3, 3}, 6};
  CHECK(data::distribution_similarity_score(ref, ref, ref, ref) == 0.0);
  CHECK(data::distribution_similarity_score(ref, all0, even, even) ==
        doctest::Approx(1.0).epsilon(1e-12));

  data::LabelDistribution ref2{{50, 50}, 100};
  data::LabelDistribution all0b{{80, 0}, 80};
  data::LabelDistribution evenb{{30, 30}, 60};
  CHECK(data::distribution_similarity_score(ref2, all0b, evenb, evenb) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("empty split carries its full probability mass") {
  data::LabelDistribution ref{{5, 5}, 10};
  data::LabelDistribution empty{{0, 0}, 0};
  // identical train plus two empty splits: 0 + 1 + 1
  CHECK(data::distribution_similarity_score(ref, ref, empty, empty) ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("balanced label-group counts stay within one of round targets") {
  data::SplitConfig cfg;
  for (std::int64_t n = 3; n <= 400; ++n) {
    auto c = data::split_counts_balanced(n, cfg);
    CHECK(c.train + c.val + c.test == n);
    CHECK(std::llabs(c.train - std::llround(cfg.f_train * static_cast<double>(n))) <= 1);
    CHECK(std::llabs(c.val - std::llround(cfg.f_val * static_cast<double>(n))) <= 1);
    CHECK(std::llabs(c.test - std::llround(cfg.f_test * static_cast<double>(n))) <= 1);
  }
}

TEST_CASE("floor counts are the documented sequential rounding rule") {
  data::SplitConfig cfg;
  auto c = data::split_counts_floor(10, cfg);
  CHECK(c.train == 6);
  CHECK(c.val == 1);
  CHECK(c.test == 3);
}

TEST_CASE("adjusted split per-label proportions and exact partition") {
  Rng rng(23);
  auto d = random_stream(rng, 600, 6, true);
  data::SplitConfig cfg;
  data::AdjustedSplitInfo info;
  auto sp = data::adjusted_split(d, cfg, &info);
  check_exact_partition(d, sp);

  const auto ref = data::label_distribution(d);
  const auto tr = data::label_distribution(sp.train);
  const auto va = data::label_distribution(sp.val);
  const auto te = data::label_distribution(sp.test);
  for (int b = 0; b < 6; ++b) {
    const auto n_b = ref.counts[static_cast<std::size_t>(b)];
    if (n_b < 5) continue;
    const double nb = static_cast<double>(n_b);
    CHECK(std::llabs(tr.counts[static_cast<std::size_t>(b)] - std::llround(cfg.f_train * nb)) <= 1);
    CHECK(std::llabs(va.counts[static_cast<std::size_t>(b)] - std::llround(cfg.f_val * nb)) <= 1);
    CHECK(std::llabs(te.counts[static_cast<std::size_t>(b)] - std::llround(cfg.f_test * nb)) <= 1);
  }
  CHECK(info.chosen_chunk_size > 0);
  CHECK(info.final_score <= info.chunk_stage_score + 1e-12);
}

TEST_CASE("adjusted split routes rare labels to train") {
  // one label with a single sample, the rest populous
  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
  for (int i = 0; i < 120; ++i) rows.emplace_back(0, i, i == 60 ? 3 : i % 3);
  auto d = make_dataset(rows, 4);
  data::SplitConfig cfg;
  data::AdjustedSplitInfo info;
  auto sp = data::adjusted_split(d, cfg, &info);
  CHECK(info.small_labels == std::vector<int>{3});
  const auto tr = data::label_distribution(sp.train);
  CHECK(tr.counts[3] == 1);
  CHECK(data::label_distribution(sp.val).counts[3] == 0);
  CHECK(data::label_distribution(sp.test).counts[3] == 0);
}

TEST_CASE("adjusted split scores at or below sequential on skewed streams") {
  Rng rng(77);
  data::SplitConfig cfg;
  for (int trial = 0; trial < 25; ++trial) {
    auto d = random_stream(rng, 500, 8, true);
    auto adj = data::adjusted_split(d, cfg);
    auto seq = data::sequential_split(d, cfg);
    CHECK(split_score(d, adj) <= split_score(d, seq) + 1e-12);
  }
}

TEST_CASE("adjusted split on scenario-shaped data lands near published proportions") {
  synth::ScenarioConfig scfg;
  scfg.n_sequences = 59;
  scfg.seq_len = 193;
  scfg.seed = 4;
  auto d = synth::generate(scfg);
  REQUIRE(d.size() == 11387);
  data::SplitConfig cfg;
  auto sp = data::adjusted_split(d, cfg);
  const double k = 11387.0;
  CHECK(static_cast<double>(sp.train.size()) / k == doctest::Approx(0.6487).epsilon(0.016));
  CHECK(static_cast<double>(sp.val.size()) / k == doctest::Approx(0.1488).epsilon(0.016));
  CHECK(static_cast<double>(sp.test.size()) / k == doctest::Approx(0.2025).epsilon(0.016));
}

TEST_CASE("adjusted split rejects impossible chunk filters") {
  Rng rng(5);
  auto d = random_stream(rng, 40, 4, false);
  data::SplitConfig cfg;
  cfg.min_chunk_len = 100;  // no candidate chunk size can reach this
  CHECK_THROWS_AS(data::adjusted_split(d, cfg), NoValidChunkSize);
}

TEST_CASE("splits are deterministic") {
  Rng rng(123);
  auto d = random_stream(rng, 321, 6, true);
  data::SplitConfig cfg;
  auto a = data::adjusted_split(d, cfg);
  auto b = data::adjusted_split(d, cfg);
  CHECK(keys(a.train) == keys(b.train));
  CHECK(keys(a.val) == keys(b.val));
  CHECK(keys(a.test) == keys(b.test));
}

namespace {

// anchor-by-anchor enumeration straight from the admissibility rule
struct OracleWindow {
  std::int64_t q, t;
  int padded;
  std::vector<int> labels;
};

std::vector<OracleWindow> brute_force_windows(const RawDataset& d, int window, int horizon) {
  std::map<std::pair<std::int64_t, std::int64_t>, const RawSample*> idx;
  for (const auto& s : d.samples) idx[{s.q, s.t}] = &s;
  std::vector<OracleWindow> out;
  for (const auto& s : d.samples) {
    bool ok = true;
    std::vector<int> labels;
    for (int v = 0; v <= horizon; ++v) {
      auto it = idx.find({s.q, s.t + v});
      if (it == idx.end()) {
        ok = false;
        break;
      }
      labels.push_back(it->second->beam);
    }
    if (!ok) continue;
    int have = 0;
    for (int back = 1; back < window; ++back) {
      if (idx.count({s.q, s.t - back}) == 0) break;
      ++have;
    }
    out.push_back({s.q, s.t, window - 1 - have, std::move(labels)});
  }
  return out;
}

}  // namespace

TEST_CASE("window construction over one short sequence") {
  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
  for (int t = 0; t < 11; ++t) rows.emplace_back(0, t, t % 4);
  auto d = make_dataset(rows, 4);
  geo::NormalizationBounds bounds{32.9, 33.1, -112.1, -111.9};
  auto ws = data::build_windows(d, bounds, 8, 3);
  CHECK(ws.size() == 8);
  int padded = 0;
  for (const auto& w : ws) {
    w.check_invariants();
    if (w.padded_rows > 0) ++padded;
  }
  CHECK(padded == 7);
}

TEST_CASE("sequences shorter than the lookahead emit nothing") {
  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
  for (int t = 0; t < 3; ++t) rows.emplace_back(0, t, 0);
  auto d = make_dataset(rows, 4);
  geo::NormalizationBounds bounds{32.9, 33.1, -112.1, -111.9};
  CHECK(data::build_windows(d, bounds, 8, 3).empty());
}

TEST_CASE("no label span crosses a gap in t") {
  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
  for (int t : {0, 1, 2, 3, 5, 6, 7, 8, 9}) rows.emplace_back(0, t, t % 3);
  auto d = make_dataset(rows, 3);
  geo::NormalizationBounds bounds{32.9, 33.1, -112.1, -111.9};
  auto ws = data::build_windows(d, bounds, 2, 1);
  for (const auto& w : ws) {
    CHECK(w.t != 3);  // label span 3..4 would cross the hole at t=4
  }
  auto oracle = brute_force_windows(d, 2, 1);
  CHECK(ws.size() == oracle.size());
}

TEST_CASE("window construction matches brute-force enumeration on random sets") {
  Rng rng(31);
  geo::NormalizationBounds bounds{32.9, 33.2, -112.2, -111.9};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
    const int n_seq = 1 + static_cast<int>(rng.uniform_int(4));
    for (int q = 0; q < n_seq; ++q) {
      std::int64_t t = 0;
      const int len = 3 + static_cast<int>(rng.uniform_int(40));
      for (int i = 0; i < len; ++i) {
        rows.emplace_back(q, t, static_cast<int>(rng.uniform_int(5)));
        t += rng.uniform() < 0.15 ? 2 + static_cast<std::int64_t>(rng.uniform_int(3)) : 1;
      }
    }
    auto d = make_dataset(rows, 5);
    const int window = 1 + static_cast<int>(rng.uniform_int(9));
    const int horizon = static_cast<int>(rng.uniform_int(4));
    auto got = data::build_windows(d, bounds, window, horizon);
    auto want = brute_force_windows(d, window, horizon);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      got[i].check_invariants();
      CHECK(got[i].q == want[i].q);
      CHECK(got[i].t == want[i].t);
      CHECK(got[i].padded_rows == want[i].padded);
      CHECK(got[i].labels == want[i].labels);
    }
  }
}

TEST_CASE("window features are the frozen five-feature rows") {
  std::vector<std::tuple<std::int64_t, std::int64_t, int>> rows;
  for (int t = 0; t < 12; ++t) rows.emplace_back(0, t, t % 4);
  auto d = make_dataset(rows, 4);
  geo::NormalizationBounds bounds{32.9, 33.1, -112.1, -111.9};
  auto ws = data::build_windows(d, bounds, 4, 0);
  REQUIRE(!ws.empty());
  const auto& w = ws.back();  // full history, no padding
  REQUIRE(w.padded_rows == 0);
  for (int r = 0; r < 4; ++r) {
    const auto& s = d.samples[static_cast<std::size_t>(w.t - 3 + r)];
    geo::GeodeticPosition ue{s.ue_pos.latitude_deg, s.ue_pos.longitude_deg, s.height_m};
    geo::GeodeticPosition bs{s.bs_pos.latitude_deg, s.bs_pos.longitude_deg, 0.0};
    const auto f = geo::make_feature(ue, bs, bounds).as_array();
    for (int c = 0; c < geo::kFeatureDim; ++c) {
      CHECK(w.features[static_cast<std::size_t>(r * geo::kFeatureDim + c)] ==
            f[static_cast<std::size_t>(c)]);
    }
  }
}
