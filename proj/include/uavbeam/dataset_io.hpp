#pragma once

#include <map>
#include <string>
#include <vector>

#include "uavbeam/data.hpp"

namespace uavbeam::io {

// Canonical dataset file: UTF-8 CSV with LF line endings and the mandatory
// header  q,t,lat_bs,lon_bs,lat_ue,lon_ue,height_m,beam[,p0..p{M-1}]
// The power block is optional but must be uniform across rows.
void write_dataset(const std::string& path, const data::RawDataset& d);

// codebook_override forces M when the file has no power columns; otherwise
// M is max(beam)+1 without powers or the power column count with them.
data::RawDataset read_dataset(const std::string& path, int codebook_override = 0);

enum class SplitTag { kTrain, kVal, kTest };
std::string split_tag_name(SplitTag t);

// Split manifest: one "q,t,split" line per sample.
void write_manifest(const std::string& path, const data::Split& s);
std::map<std::pair<std::int64_t, std::int64_t>, SplitTag> read_manifest(const std::string& path);

// Applies a manifest to a dataset, returning the named subset.
data::RawDataset select_split(const data::RawDataset& d,
                              const std::map<std::pair<std::int64_t, std::int64_t>, SplitTag>& m,
                              SplitTag which);

// Column mapping for foreign CSV layouts. Header names; empty power_prefix
// means the source has no power columns.
struct IngestMapping {
  std::string q = "q";
  std::string t = "t";
  std::string lat_bs = "lat_bs";
  std::string lon_bs = "lon_bs";
  std::string lat_ue = "lat_ue";
  std::string lon_ue = "lon_ue";
  std::string height = "height_m";
  std::string beam = "beam";
  std::string power_prefix = "p";
  bool has_powers = true;
  bool one_based_beams = false;
};

struct IngestStats {
  std::int64_t rows = 0;
  std::int64_t beam_power_mismatches = 0;  // label does not maximize its power row
  std::int64_t gap_rows = 0;               // t jumps by more than one inside a trip
};

// Reads a foreign CSV, converts beams to 0-based if asked, sorts by (q,t),
// and validates. With strict=true the first mismatched label aborts;
// otherwise mismatches are counted and the label is kept as supplied.
data::RawDataset ingest_dataset(const std::string& path, const IngestMapping& map,
                                int codebook_override, bool strict, IngestStats* stats = nullptr);

}  // namespace uavbeam::io
