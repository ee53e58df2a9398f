#include "uavbeam/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "uavbeam/errors.hpp"
#include "uavbeam/util.hpp"

namespace uavbeam::io {

namespace {

constexpr const char* kBaseHeader = "q,t,lat_bs,lon_bs,lat_ue,lon_ue,height_m,beam";

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

[[noreturn]] void fail_line(const std::string& path, std::int64_t lineno, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(lineno) + ": " + what);
}

}  // namespace

void write_dataset(const std::string& path, const data::RawDataset& d) {
  bool with_powers = !d.samples.empty();
  for (const auto& s : d.samples) {
    if (!s.powers) {
      with_powers = false;
      break;
    }
  }
  for (const auto& s : d.samples) {
    if (with_powers != s.powers.has_value()) {
      throw ValidationError("dataset mixes rows with and without power vectors");
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << kBaseHeader;
  if (with_powers) {
    for (int i = 0; i < d.codebook_size; ++i) f << ",p" << i;
  }
  f << "\n";
  for (const auto& s : d.samples) {
    f << s.q << "," << s.t << "," << format_double(s.bs_pos.latitude_deg) << ","
      << format_double(s.bs_pos.longitude_deg) << "," << format_double(s.ue_pos.latitude_deg)
      << "," << format_double(s.ue_pos.longitude_deg) << "," << format_double(s.height_m) << ","
      << s.beam;
    if (with_powers) {
      for (double p : *s.powers) f << "," << format_double(p);
    }
    f << "\n";
  }
  if (!f) throw Error("write to '" + path + "' failed");
}

data::RawDataset read_dataset(const std::string& path, int codebook_override) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_string(line, ',');
  const auto base = split_string(kBaseHeader, ',');
  if (header.size() < base.size()) fail_line(path, 1, "header is missing columns");
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (header[i] != base[i]) {
      fail_line(path, 1, "expected column '" + base[i] + "', found '" + header[i] + "'");
    }
  }
  int n_powers = 0;
  for (std::size_t i = base.size(); i < header.size(); ++i) {
    if (header[i] != "p" + std::to_string(n_powers)) {
      fail_line(path, 1, "power columns must be p0..p{M-1}, found '" + header[i] + "'");
    }
    ++n_powers;
  }

  data::RawDataset d;
  std::int64_t lineno = 1;
  int max_beam = -1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tok = split_string(line, ',');
    if (tok.size() != header.size()) {
      fail_line(path, lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(tok.size()));
    }
    data::RawSample s;
    try {
      s.q = parse_int(tok[0]);
      s.t = parse_int(tok[1]);
      s.bs_pos.latitude_deg = parse_double(tok[2]);
      s.bs_pos.longitude_deg = parse_double(tok[3]);
      s.ue_pos.latitude_deg = parse_double(tok[4]);
      s.ue_pos.longitude_deg = parse_double(tok[5]);
      s.height_m = parse_double(tok[6]);
      s.beam = static_cast<int>(parse_int(tok[7]));
      if (n_powers > 0) {
        std::vector<double> p(static_cast<std::size_t>(n_powers));
        for (int i = 0; i < n_powers; ++i) {
          p[static_cast<std::size_t>(i)] = parse_double(tok[base.size() + static_cast<std::size_t>(i)]);
        }
        s.powers = std::move(p);
      }
    } catch (const ParseError& e) {
      fail_line(path, lineno, e.what());
    }
    s.ue_pos.altitude_m = s.height_m;
    max_beam = std::max(max_beam, s.beam);
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw EmptyDataset(path + ": no data rows");
  if (n_powers > 0) {
    d.codebook_size = n_powers;
  } else if (codebook_override > 0) {
    d.codebook_size = codebook_override;
  } else {
    d.codebook_size = max_beam + 1;
  }
  try {
    d.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return d;
}

std::string split_tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
  }
  throw Error("unreachable split tag");
}

void write_manifest(const std::string& path, const data::Split& s) {
  struct Row {
    std::int64_t q, t;
    SplitTag tag;
  };
  std::vector<Row> rows;
  rows.reserve(s.train.size() + s.val.size() + s.test.size());
  for (const auto& x : s.train.samples) rows.push_back({x.q, x.t, SplitTag::kTrain});
  for (const auto& x : s.val.samples) rows.push_back({x.q, x.t, SplitTag::kVal});
  for (const auto& x : s.test.samples) rows.push_back({x.q, x.t, SplitTag::kTest});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.q != b.q ? a.q < b.q : a.t < b.t;
  });
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  for (const Row& r : rows) {
    f << r.q << "," << r.t << "," << split_tag_name(r.tag) << "\n";
  }
  if (!f) throw Error("write to '" + path + "' failed");
}

std::map<std::pair<std::int64_t, std::int64_t>, SplitTag> read_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::map<std::pair<std::int64_t, std::int64_t>, SplitTag> out;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tok = split_string(line, ',');
    if (tok.size() != 3) fail_line(path, lineno, "expected q,t,split");
    SplitTag tag;
    if (tok[2] == "train") {
      tag = SplitTag::kTrain;
    } else if (tok[2] == "val") {
      tag = SplitTag::kVal;
    } else if (tok[2] == "test") {
      tag = SplitTag::kTest;
    } else {
      fail_line(path, lineno, "unknown split '" + tok[2] + "'");
    }
    try {
      out[{parse_int(tok[0]), parse_int(tok[1])}] = tag;
    } catch (const ParseError& e) {
      fail_line(path, lineno, e.what());
    }
  }
  return out;
}

data::RawDataset select_split(const data::RawDataset& d,
                              const std::map<std::pair<std::int64_t, std::int64_t>, SplitTag>& m,
                              SplitTag which) {
  data::RawDataset out;
  out.codebook_size = d.codebook_size;
  for (const auto& s : d.samples) {
    auto it = m.find({s.q, s.t});
    if (it != m.end() && it->second == which) out.samples.push_back(s);
  }
  return out;
}

data::RawDataset ingest_dataset(const std::string& path, const IngestMapping& map,
                                int codebook_override, bool strict, IngestStats* stats) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_string(line, ',');

  auto col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ParseError(path + ": header has no column '" + name + "'");
  };
  const std::size_t cq = col(map.q), ct = col(map.t);
  const std::size_t clat_bs = col(map.lat_bs), clon_bs = col(map.lon_bs);
  const std::size_t clat_ue = col(map.lat_ue), clon_ue = col(map.lon_ue);
  const std::size_t ch = col(map.height), cb = col(map.beam);
  std::vector<std::size_t> cpow;
  if (map.has_powers) {
    for (int i = 0;; ++i) {
      const std::string name = map.power_prefix + std::to_string(i);
      bool found = false;
      for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) {
          cpow.push_back(j);
          found = true;
          break;
        }
      }
      if (!found) break;
    }
    if (cpow.empty()) {
      throw ParseError(path + ": no power columns with prefix '" + map.power_prefix + "'");
    }
  }

  data::RawDataset d;
  IngestStats st;
  std::int64_t lineno = 1;
  int max_beam = -1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tok = split_string(line, ',');
    if (tok.size() != header.size()) {
      fail_line(path, lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(tok.size()));
    }
    data::RawSample s;
    try {
      s.q = parse_int(tok[cq]);
      s.t = parse_int(tok[ct]);
      s.bs_pos.latitude_deg = parse_double(tok[clat_bs]);
      s.bs_pos.longitude_deg = parse_double(tok[clon_bs]);
      s.ue_pos.latitude_deg = parse_double(tok[clat_ue]);
      s.ue_pos.longitude_deg = parse_double(tok[clon_ue]);
      s.height_m = parse_double(tok[ch]);
      s.beam = static_cast<int>(parse_int(tok[cb]));
      if (!cpow.empty()) {
        std::vector<double> p(cpow.size());
        for (std::size_t i = 0; i < cpow.size(); ++i) p[i] = parse_double(tok[cpow[i]]);
        s.powers = std::move(p);
      }
    } catch (const ParseError& e) {
      fail_line(path, lineno, e.what());
    }
    if (map.one_based_beams) s.beam -= 1;
    s.ue_pos.altitude_m = s.height_m;
    if (s.powers) {
      const int am = argmax_lowest(*s.powers);
      if (am != s.beam) {
        if (strict) {
          fail_line(path, lineno, "beam label " + std::to_string(s.beam) +
                                      " does not maximize the power row (argmax " +
                                      std::to_string(am) + ")");
        }
        ++st.beam_power_mismatches;
      }
    }
    max_beam = std::max(max_beam, s.beam);
    ++st.rows;
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw EmptyDataset(path + ": no data rows");

  std::stable_sort(d.samples.begin(), d.samples.end(),
                   [](const data::RawSample& a, const data::RawSample& b) {
                     return a.q != b.q ? a.q < b.q : a.t < b.t;
                   });
  for (std::size_t i = 1; i < d.samples.size(); ++i) {
    const auto& prev = d.samples[i - 1];
    const auto& cur = d.samples[i];
    if (cur.q == prev.q && cur.t == prev.t) {
      throw ValidationError(path + ": duplicate sample (" + std::to_string(cur.q) + "," +
                            std::to_string(cur.t) + ")");
    }
    if (cur.q == prev.q && cur.t != prev.t + 1) ++st.gap_rows;
  }

  if (!cpow.empty()) {
    d.codebook_size = static_cast<int>(cpow.size());
  } else if (codebook_override > 0) {
    d.codebook_size = codebook_override;
  } else {
    d.codebook_size = max_beam + 1;
  }
  if (st.beam_power_mismatches == 0) {
    d.validate();
  } else {
    // labels deliberately kept as supplied; skip the argmax revalidation by
    // validating a power-stripped view
    data::RawDataset view;
    view.codebook_size = d.codebook_size;
    view.samples = d.samples;
    for (auto& s : view.samples) s.powers.reset();
    view.validate();
  }
  if (stats) *stats = st;
  return d;
}

}  // namespace uavbeam::io
