#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uavbeam/data.hpp"
#include "uavbeam/dataset_io.hpp"
#include "uavbeam/errors.hpp"
#include "uavbeam/geo.hpp"
#include "uavbeam/metrics.hpp"
#include "uavbeam/nn/checkpoint.hpp"
#include "uavbeam/pipeline.hpp"
#include "uavbeam/synth.hpp"
#include "uavbeam/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uavbeam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

// flag combinations the parser cannot catch by itself
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

void require_writable(const std::string& path, bool force) {
  if (!force && fs::exists(path)) {
    throw UsageError("refusing to overwrite " + path + " (pass --force)");
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << content;
  if (!f) throw Error("short write to " + path);
}

void write_config(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// config validation driven purely by flags is a usage problem, not bad data
template <typename Fn>
void validate_flags(Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
}

json split_config_json(const data::SplitConfig& cfg, pipeline::SplitMethod method) {
  json j;
  j["f_train"] = cfg.f_train;
  j["f_val"] = cfg.f_val;
  j["f_test"] = cfg.f_test;
  j["chunk_fractions"] = cfg.chunk_fractions;
  j["min_chunk_len"] = cfg.min_chunk_len;
  j["method"] = method == pipeline::SplitMethod::kAdjusted ? "adjusted" : "sequential";
  return j;
}

struct SplitFlags {
  data::SplitConfig cfg;
  std::string method = "adjusted";
  CLI::Option* min_chunk_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--train", cfg.f_train, "train fraction");
    cmd->add_option("--val", cfg.f_val, "validation fraction");
    cmd->add_option("--test", cfg.f_test, "test fraction");
    cmd->add_option("--chunk-fractions", cfg.chunk_fractions,
                    "candidate chunk sizes as dataset fractions");
    min_chunk_opt = cmd->add_option("--min-chunk-len", cfg.min_chunk_len,
                                    "smallest admissible chunk length");
    cmd->add_option("--method", method, "adjusted|sequential")
        ->check(CLI::IsMember({"adjusted", "sequential"}));
  }

  pipeline::SplitMethod parsed_method() const {
    return method == "adjusted" ? pipeline::SplitMethod::kAdjusted
                                : pipeline::SplitMethod::kSequential;
  }
};

void cmd_synth(const synth::ScenarioConfig& cfg, const std::string& out, bool with_powers,
               bool force) {
  validate_flags([&] { cfg.validate(); });
  require_writable(out, force);

  data::RawDataset d = synth::generate(cfg);
  if (!with_powers) {
    for (auto& s : d.samples) s.powers.reset();
  }
  io::write_dataset(out, d);

  json j;
  j["command"] = "synth";
  j["out"] = out;
  j["seed"] = cfg.seed;
  j["sequences"] = cfg.n_sequences;
  j["len"] = cfg.seq_len;
  j["codebook"] = cfg.codebook_size;
  j["sector_start_deg"] = cfg.sector_start_deg;
  j["sector_end_deg"] = cfg.sector_end_deg;
  j["speed_mps"] = {cfg.speed_min_mps, cfg.speed_max_mps};
  j["height_m"] = {cfg.height_min_m, cfg.height_max_m};
  j["waypoint_jitter_m"] = cfg.waypoint_jitter_m;
  j["power_decay"] = cfg.power_decay;
  j["bs"] = {{"lat", cfg.bs_pos.latitude_deg}, {"lon", cfg.bs_pos.longitude_deg}};
  j["powers"] = with_powers;
  write_config(out + ".config.json", j);

  std::cout << "rows=" << d.size() << "\n";
  std::cout << "out=" << out << "\n";
}

void cmd_split(const std::string& data_path, const std::string& out_dir, SplitFlags& flags,
               int codebook, bool force) {
  validate_flags([&] { flags.cfg.validate(); });

  data::RawDataset d = io::read_dataset(data_path, codebook);
  fs::create_directories(out_dir);
  const std::string manifest_path = (fs::path(out_dir) / "split_manifest.csv").string();
  require_writable(manifest_path, force);

  data::Split split;
  data::AdjustedSplitInfo info;
  const auto method = flags.parsed_method();
  if (method == pipeline::SplitMethod::kAdjusted) {
    split = data::adjusted_split(d, flags.cfg, &info);
  } else {
    split = data::sequential_split(d, flags.cfg);
  }

  const auto ref = data::label_distribution(d);
  const auto tr = data::label_distribution(split.train);
  const auto va = data::label_distribution(split.val);
  const auto te = data::label_distribution(split.test);
  const double score = data::distribution_similarity_score(ref, tr, va, te);

  io::write_manifest(manifest_path, split);

  std::ostringstream table;
  table << "beam,n_total,n_train,n_val,n_test,p_total,p_train,p_val,p_test\n";
  auto prob = [](const data::LabelDistribution& ld, int b) {
    return ld.total == 0 ? 0.0
                         : static_cast<double>(ld.counts[static_cast<std::size_t>(b)]) /
                               static_cast<double>(ld.total);
  };
  for (int b = 0; b < d.codebook_size; ++b) {
    table << b << "," << ref.counts[static_cast<std::size_t>(b)] << ","
          << tr.counts[static_cast<std::size_t>(b)] << "," << va.counts[static_cast<std::size_t>(b)]
          << "," << te.counts[static_cast<std::size_t>(b)] << "," << format_double(prob(ref, b))
          << "," << format_double(prob(tr, b)) << "," << format_double(prob(va, b)) << ","
          << format_double(prob(te, b)) << "\n";
  }
  write_text_file((fs::path(out_dir) / "label_distribution.csv").string(), table.str());

  json j;
  j["command"] = "split";
  j["data"] = data_path;
  j["out"] = out_dir;
  j["codebook"] = d.codebook_size;
  j["split"] = split_config_json(flags.cfg, method);
  write_config((fs::path(out_dir) / "config.json").string(), j);

  std::cout << "method=" << flags.method << "\n";
  std::cout << "similarity_score=" << format_double(score) << "\n";
  if (method == pipeline::SplitMethod::kAdjusted) {
    std::cout << "chosen_chunk_size=" << info.chosen_chunk_size << "\n";
    std::cout << "chunk_stage_score=" << format_double(info.chunk_stage_score) << "\n";
    std::ostringstream small;
    for (std::size_t i = 0; i < info.small_labels.size(); ++i) {
      if (i) small << ",";
      small << info.small_labels[i];
    }
    std::cout << "small_labels=" << small.str() << "\n";
  }
  std::cout << "train=" << split.train.size() << " val=" << split.val.size()
            << " test=" << split.test.size() << "\n";
}

json train_config_json(const pipeline::TrainConfig& cfg, const std::string& data_path,
                       const std::string& out_dir, const std::string& dtype) {
  json j;
  j["command"] = "train";
  j["data"] = data_path;
  j["out"] = out_dir;
  j["seed"] = cfg.seed;
  j["dtype"] = dtype;
  j["split"] = split_config_json(cfg.split, cfg.split_method);
  j["bounds"] = cfg.bounds_mode == pipeline::BoundsMode::kTrainOnly ? "train" : "all";
  j["select"] = cfg.select == pipeline::SelectRule::kBestVal ? "best-val" : "final";
  json hp;
  hp["epochs"] = cfg.hp.epochs;
  hp["train_batch"] = cfg.hp.train_batch;
  hp["val_batch"] = cfg.hp.val_batch;
  hp["test_batch"] = cfg.hp.test_batch;
  hp["lr"] = cfg.hp.lr;
  hp["weight_decay"] = cfg.hp.weight_decay;
  hp["lr_drop_epochs"] = cfg.hp.lr_drop_epochs;
  hp["lr_drop_factor"] = cfg.hp.lr_drop_factor;
  hp["window"] = cfg.hp.window;
  hp["horizon"] = cfg.hp.horizon;
  hp["codebook"] = cfg.hp.codebook_size;
  hp["decoder_h0"] =
      cfg.hp.decoder_h0 == nn::HyperParams::DecoderInit::kContext ? "context" : "zero";
  j["hp"] = std::move(hp);
  return j;
}

void cmd_train(const std::string& data_path, const std::string& out_dir,
               pipeline::TrainConfig& cfg, int codebook, const std::string& dtype, bool quiet,
               bool force) {
  validate_flags([&] {
    cfg.split.validate();
    cfg.hp.validate();
  });

  data::RawDataset d = io::read_dataset(data_path, codebook);
  cfg.hp.codebook_size = d.codebook_size;

  fs::create_directories(out_dir);
  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
  require_writable(ckpt_path, force);

  auto log = [&](const std::string& line) {
    if (!quiet) std::cout << line << "\n";
  };
  pipeline::TrainResult result = pipeline::train(d, cfg, log);

  write_config((fs::path(out_dir) / "config.json").string(),
               train_config_json(cfg, data_path, out_dir, dtype));
  io::write_manifest((fs::path(out_dir) / "split_manifest.csv").string(), result.split);
  result.checkpoint.dtype = dtype;
  nn::save_checkpoint(ckpt_path, result.checkpoint);
  write_text_file((fs::path(out_dir) / "report.txt").string(), result.report.to_text());

  std::cout << "selected_epoch=" << result.report.selected_epoch << "\n";
  std::cout << "best_val_loss=" << format_double(result.report.best_val_loss) << "\n";
  std::cout << "run_dir=" << out_dir << "\n";
  std::cerr << "wall_seconds=" << format_double(result.report.wall_seconds) << "\n";
}

void cmd_eval(const std::string& ckpt_path, const std::string& data_path,
              const std::string& out_dir, const std::string& manifest_path,
              const std::string& split_name, int topk, int codebook, bool force) {
  nn::Checkpoint ckpt = nn::load_checkpoint(ckpt_path);
  data::RawDataset d = io::read_dataset(data_path, codebook);

  if (!manifest_path.empty()) {
    const auto manifest = io::read_manifest(manifest_path);
    io::SplitTag tag = io::SplitTag::kTest;
    if (split_name == "train") {
      tag = io::SplitTag::kTrain;
    } else if (split_name == "val") {
      tag = io::SplitTag::kVal;
    } else if (split_name != "test") {
      throw UsageError("--split must be train, val or test");
    }
    d = io::select_split(d, manifest, tag);
  }

  if (topk < 1 || topk > ckpt.hp.codebook_size) {
    throw UsageError("--topk must lie in [1, codebook]");
  }

  fs::create_directories(out_dir);
  const std::string report_path = (fs::path(out_dir) / "report.txt").string();
  require_writable(report_path, force);

  const auto samples = pipeline::collect_eval_samples(ckpt, d);
  const auto pc = nn::count_params(*ckpt.params);
  const int steps = ckpt.hp.horizon + 1;
  const auto report =
      metrics::compute_report(samples, ckpt.hp.codebook_size, steps, pc.count, pc.size_bytes);

  write_text_file(report_path, report.to_text());

  std::vector<std::vector<metrics::EvalSample>> by_step(static_cast<std::size_t>(steps));
  for (const auto& s : samples) by_step[static_cast<std::size_t>(s.step)].push_back(s);

  std::ostringstream topk_csv;
  topk_csv << "step,k,accuracy\n";
  for (int v = 0; v < steps; ++v) {
    for (int k = 1; k <= ckpt.hp.codebook_size; ++k) {
      topk_csv << v << "," << k << ","
               << format_double(report.topk_acc[static_cast<std::size_t>(v)][static_cast<std::size_t>(k - 1)])
               << "\n";
    }
  }
  write_text_file((fs::path(out_dir) / "topk_curve.csv").string(), topk_csv.str());

  if (report.has_power) {
    std::ostringstream rel_csv;
    rel_csv << "step,threshold_db,reliability\n";
    for (int v = 0; v < steps; ++v) {
      for (int i = 0; i <= 24; ++i) {
        const double thr = 0.25 * i;
        rel_csv << v << "," << format_double(thr) << ","
                << format_double(
                       metrics::power_loss_reliability(by_step[static_cast<std::size_t>(v)], thr))
                << "\n";
      }
    }
    write_text_file((fs::path(out_dir) / "reliability_curve.csv").string(), rel_csv.str());
  }

  std::ostringstream ov_csv;
  ov_csv << "step,target_pct,b_min,savings\n";
  for (const auto& [t, pt] : report.overhead) {
    ov_csv << "all," << t << "," << pt.b_min << "," << format_double(pt.savings) << "\n";
  }
  for (int v = 0; v < steps; ++v) {
    for (const auto& [t, pt] : report.overhead_per_step[static_cast<std::size_t>(v)]) {
      ov_csv << v << "," << t << "," << pt.b_min << "," << format_double(pt.savings) << "\n";
    }
  }
  write_text_file((fs::path(out_dir) / "overhead_curve.csv").string(), ov_csv.str());

  json j;
  j["command"] = "eval";
  j["checkpoint"] = ckpt_path;
  j["data"] = data_path;
  j["out"] = out_dir;
  j["manifest"] = manifest_path;
  j["split"] = manifest_path.empty() ? "all" : split_name;
  j["topk"] = topk;
  write_config((fs::path(out_dir) / "config.json").string(), j);

  for (int v = 0; v < steps; ++v) {
    std::cout << "top" << topk << "_acc.step" << v << "="
              << format_double(
                     report.topk_acc[static_cast<std::size_t>(v)][static_cast<std::size_t>(topk - 1)])
              << "\n";
  }
  std::cout << "power_metrics=" << (report.has_power ? "present" : "absent") << "\n";
  if (report.has_power) {
    for (int v = 0; v < steps; ++v) {
      std::cout << "mean_pl_db.step" << v << "="
                << format_double(report.mean_power_loss_db[static_cast<std::size_t>(v)]) << "\n";
    }
  }
  std::cout << "report=" << report_path << "\n";
}

void cmd_ingest(const std::string& in_path, const std::string& out_path,
                const std::string& mapping_path, io::IngestMapping map,
                const std::vector<std::string>& overridden, int codebook, bool strict,
                bool force) {
  if (!mapping_path.empty()) {
    std::ifstream f(mapping_path);
    if (!f) throw Error("cannot open mapping file " + mapping_path);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::parse_error& e) {
      throw UsageError("mapping file " + mapping_path + ": " + e.what());
    }
    io::IngestMapping from_file;
    from_file.q = j.value("q", map.q);
    from_file.t = j.value("t", map.t);
    from_file.lat_bs = j.value("lat_bs", map.lat_bs);
    from_file.lon_bs = j.value("lon_bs", map.lon_bs);
    from_file.lat_ue = j.value("lat_ue", map.lat_ue);
    from_file.lon_ue = j.value("lon_ue", map.lon_ue);
    from_file.height = j.value("height_m", map.height);
    from_file.beam = j.value("beam", map.beam);
    from_file.power_prefix = j.value("power_prefix", map.power_prefix);
    from_file.has_powers = j.value("has_powers", map.has_powers);
    from_file.one_based_beams = j.value("one_based_beams", map.one_based_beams);
    // explicit flags still win over the mapping file
    auto given = [&](const std::string& name) {
      return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
    };
    if (!given("q")) map.q = from_file.q;
    if (!given("t")) map.t = from_file.t;
    if (!given("lat-bs")) map.lat_bs = from_file.lat_bs;
    if (!given("lon-bs")) map.lon_bs = from_file.lon_bs;
    if (!given("lat-ue")) map.lat_ue = from_file.lat_ue;
    if (!given("lon-ue")) map.lon_ue = from_file.lon_ue;
    if (!given("height")) map.height = from_file.height;
    if (!given("beam")) map.beam = from_file.beam;
    if (!given("power-prefix")) map.power_prefix = from_file.power_prefix;
    if (!given("no-powers")) map.has_powers = from_file.has_powers;
    if (!given("one-based-beams")) map.one_based_beams = from_file.one_based_beams;
  }

  require_writable(out_path, force);

  io::IngestStats stats;
  data::RawDataset d = io::ingest_dataset(in_path, map, codebook, strict, &stats);
  io::write_dataset(out_path, d);

  json j;
  j["command"] = "ingest";
  j["in"] = in_path;
  j["out"] = out_path;
  j["codebook"] = d.codebook_size;
  j["strict"] = strict;
  json m;
  m["q"] = map.q;
  m["t"] = map.t;
  m["lat_bs"] = map.lat_bs;
  m["lon_bs"] = map.lon_bs;
  m["lat_ue"] = map.lat_ue;
  m["lon_ue"] = map.lon_ue;
  m["height_m"] = map.height;
  m["beam"] = map.beam;
  m["power_prefix"] = map.power_prefix;
  m["has_powers"] = map.has_powers;
  m["one_based_beams"] = map.one_based_beams;
  j["mapping"] = std::move(m);
  write_config(out_path + ".config.json", j);

  std::cout << "rows=" << stats.rows << "\n";
  std::cout << "beam_power_mismatches=" << stats.beam_power_mismatches << "\n";
  std::cout << "gap_rows=" << stats.gap_rows << "\n";
  std::cout << "out=" << out_path << "\n";
  if (stats.beam_power_mismatches > 0) {
    std::cerr << "warning: " << stats.beam_power_mismatches
              << " rows carry a label that does not maximize its power row\n";
  }
}

std::string resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("UAVBEAM_RUN_DIR"); env && *env) return env;
  throw UsageError("pass --out or set UAVBEAM_RUN_DIR");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPS-aided mmWave beam prediction toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scenario dataset");
  synth::ScenarioConfig scfg;
  scfg.n_sequences = 10;
  scfg.seq_len = 50;
  std::string synth_out;
  bool synth_no_powers = false;
  bool synth_force = false;
  synth_cmd->add_option("--out", synth_out, "output CSV path")->required();
  synth_cmd->add_option("--seed", scfg.seed, "RNG seed");
  synth_cmd->add_option("--sequences", scfg.n_sequences, "number of trips");
  synth_cmd->add_option("--len", scfg.seq_len, "samples per trip");
  synth_cmd->add_option("--codebook", scfg.codebook_size, "number of beams");
  synth_cmd->add_option("--sector-start", scfg.sector_start_deg, "sector start bearing, deg");
  synth_cmd->add_option("--sector-end", scfg.sector_end_deg, "sector end bearing, deg");
  synth_cmd->add_option("--speed-min", scfg.speed_min_mps, "slowest trip speed, m/s");
  synth_cmd->add_option("--speed-max", scfg.speed_max_mps, "fastest trip speed, m/s");
  synth_cmd->add_option("--height-min", scfg.height_min_m, "lowest flight height, m");
  synth_cmd->add_option("--height-max", scfg.height_max_m, "highest flight height, m");
  synth_cmd->add_option("--jitter", scfg.waypoint_jitter_m, "waypoint jitter sigma, m");
  synth_cmd->add_option("--power-decay", scfg.power_decay, "beam pattern falloff per deg^2");
  synth_cmd->add_option("--bs-lat", scfg.bs_pos.latitude_deg, "base station latitude");
  synth_cmd->add_option("--bs-lon", scfg.bs_pos.longitude_deg, "base station longitude");
  synth_cmd->add_flag("--no-powers", synth_no_powers, "omit the power columns");
  synth_cmd->add_flag("--force", synth_force, "overwrite existing output");

  // split
  auto* split_cmd = app.add_subcommand("split", "partition a dataset and report distributions");
  std::string split_data, split_out;
  SplitFlags split_flags;
  int split_codebook = 0;
  bool split_force = false;
  split_cmd->add_option("--data", split_data, "canonical dataset CSV")->required();
  split_cmd->add_option("--out", split_out, "output directory")->required();
  split_flags.attach(split_cmd);
  split_cmd->add_option("--codebook", split_codebook, "codebook size override for power-less files");
  split_cmd->add_flag("--force", split_force, "overwrite existing outputs");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a predictor and write a run directory");
  std::string train_data, train_out, train_dtype = "float64";
  pipeline::TrainConfig tcfg;
  SplitFlags train_split_flags;
  std::string train_bounds = "train", train_select = "best-val";
  int train_codebook = 0;
  bool train_quiet = false, train_force = false;
  train_cmd->add_option("--data", train_data, "canonical dataset CSV")->required();
  train_cmd->add_option("--out", train_out, "run directory (or set UAVBEAM_RUN_DIR)");
  train_cmd->add_option("--seed", tcfg.seed, "RNG seed");
  train_cmd->add_option("--epochs", tcfg.hp.epochs, "training epochs");
  train_cmd->add_option("--lr", tcfg.hp.lr, "base learning rate");
  train_cmd->add_option("--weight-decay", tcfg.hp.weight_decay, "L2 penalty");
  train_cmd->add_option("--lr-drop-epochs", tcfg.hp.lr_drop_epochs, "epochs where lr is scaled");
  train_cmd->add_option("--lr-drop-factor", tcfg.hp.lr_drop_factor, "lr scale at each drop");
  train_cmd->add_option("--train-batch", tcfg.hp.train_batch, "training batch size");
  train_cmd->add_option("--val-batch", tcfg.hp.val_batch, "validation batch size");
  train_cmd->add_option("--test-batch", tcfg.hp.test_batch, "test batch size");
  train_cmd->add_option("--window", tcfg.hp.window, "past samples per window");
  train_cmd->add_option("--horizon", tcfg.hp.horizon, "future steps beyond the current one");
  std::string train_decoder = "context";
  train_cmd->add_option("--decoder-h0", train_decoder, "decoder state init: context|zero")
      ->check(CLI::IsMember({"context", "zero"}));
  train_split_flags.attach(train_cmd);
  train_cmd->add_option("--bounds", train_bounds, "normalization fit scope: train|all")
      ->check(CLI::IsMember({"train", "all"}));
  train_cmd->add_option("--select", train_select, "checkpoint selection: best-val|final")
      ->check(CLI::IsMember({"best-val", "final"}));
  train_cmd->add_option("--dtype", train_dtype, "checkpoint payload dtype")
      ->check(CLI::IsMember({"float64", "float32"}));
  train_cmd->add_option("--codebook", train_codebook, "codebook size override for power-less files");
  train_cmd->add_flag("--quiet", train_quiet, "suppress per-epoch progress");
  train_cmd->add_flag("--force", train_force, "overwrite existing outputs");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint and write report tables");
  std::string eval_ckpt, eval_data, eval_out, eval_manifest, eval_split = "test";
  int eval_topk = 1, eval_codebook = 0;
  bool eval_force = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "canonical dataset CSV")->required();
  eval_cmd->add_option("--out", eval_out, "output directory (or set UAVBEAM_RUN_DIR)");
  eval_cmd->add_option("--manifest", eval_manifest, "split manifest; evaluates --split rows only");
  eval_cmd->add_option("--split", eval_split, "which manifest split to score: train|val|test");
  eval_cmd->add_option("--topk", eval_topk, "accuracy depth to print");
  eval_cmd->add_option("--codebook", eval_codebook, "codebook size override for power-less files");
  eval_cmd->add_flag("--force", eval_force, "overwrite existing outputs");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "convert a foreign CSV layout to canonical form");
  std::string ingest_in, ingest_out, ingest_mapping;
  io::IngestMapping imap;
  int ingest_codebook = 0;
  bool ingest_strict = false, ingest_no_powers = false, ingest_force = false;
  ingest_cmd->add_option("--in", ingest_in, "source CSV")->required();
  ingest_cmd->add_option("--out", ingest_out, "canonical CSV to write")->required();
  ingest_cmd->add_option("--mapping", ingest_mapping, "JSON column mapping file");
  ingest_cmd->add_option("--q", imap.q, "trip column name");
  ingest_cmd->add_option("--t", imap.t, "sample index column name");
  ingest_cmd->add_option("--lat-bs", imap.lat_bs, "base station latitude column");
  ingest_cmd->add_option("--lon-bs", imap.lon_bs, "base station longitude column");
  ingest_cmd->add_option("--lat-ue", imap.lat_ue, "terminal latitude column");
  ingest_cmd->add_option("--lon-ue", imap.lon_ue, "terminal longitude column");
  ingest_cmd->add_option("--height", imap.height, "terminal height column");
  ingest_cmd->add_option("--beam", imap.beam, "beam label column");
  ingest_cmd->add_option("--power-prefix", imap.power_prefix, "power column prefix");
  ingest_cmd->add_flag("--no-powers", ingest_no_powers, "source has no power columns");
  ingest_cmd->add_flag("--one-based-beams", imap.one_based_beams, "convert 1-based labels");
  ingest_cmd->add_option("--codebook", ingest_codebook, "codebook size override");
  ingest_cmd->add_flag("--strict", ingest_strict, "abort on the first mismatched label");
  ingest_cmd->add_flag("--force", ingest_force, "overwrite existing output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) {
      cmd_synth(scfg, synth_out, !synth_no_powers, synth_force);
    } else if (*split_cmd) {
      cmd_split(split_data, split_out, split_flags, split_codebook, split_force);
    } else if (*train_cmd) {
      tcfg.split = train_split_flags.cfg;
      tcfg.split_method = train_split_flags.parsed_method();
      tcfg.min_chunk_is_explicit = train_split_flags.min_chunk_opt->count() > 0;
      tcfg.bounds_mode = train_bounds == "train" ? pipeline::BoundsMode::kTrainOnly
                                                 : pipeline::BoundsMode::kWholeDataset;
      tcfg.select = train_select == "best-val" ? pipeline::SelectRule::kBestVal
                                               : pipeline::SelectRule::kFinal;
      tcfg.hp.decoder_h0 = train_decoder == "context" ? nn::HyperParams::DecoderInit::kContext
                                                      : nn::HyperParams::DecoderInit::kZero;
      cmd_train(train_data, resolve_out_dir(train_out), tcfg, train_codebook, train_dtype,
                train_quiet, train_force);
    } else if (*eval_cmd) {
      cmd_eval(eval_ckpt, eval_data, resolve_out_dir(eval_out), eval_manifest, eval_split,
               eval_topk, eval_codebook, eval_force);
    } else if (*ingest_cmd) {
      imap.has_powers = !ingest_no_powers;
      std::vector<std::string> overridden;
      for (const char* name : {"q", "t", "lat-bs", "lon-bs", "lat-ue", "lon-ue", "height", "beam",
                               "power-prefix", "no-powers", "one-based-beams"}) {
        if (ingest_cmd->count(std::string("--") + name) > 0) overridden.emplace_back(name);
      }
      cmd_ingest(ingest_in, ingest_out, ingest_mapping, imap, overridden, ingest_codebook,
                 ingest_strict, ingest_force);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
