#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

const std::string& workdir() {
  static const std::string dir = [] {
    const auto d = fs::temp_directory_path() / "uavbeam_cli_suite";
    fs::remove_all(d);
    fs::create_directories(d);
    return d.string();
  }();
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return {};
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

CmdResult run_cli(const std::string& args, const std::string& env_prefix = {}) {
  static int counter = 0;
  const std::string tag = std::to_string(counter++);
  const std::string out_file = workdir() + "/cmd_out_" + tag + ".txt";
  const std::string err_file = workdir() + "/cmd_err_" + tag + ".txt";
  std::string cmd = env_prefix;
  if (!cmd.empty()) cmd += " ";
  cmd += std::string(UAVBEAM_CLI_PATH) + " " + args + " > " + out_file + " 2> " + err_file;
  const int rc = std::system(cmd.c_str());
  CmdResult r;
  if (rc != -1 && WIFEXITED(rc)) r.code = WEXITSTATUS(rc);
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

// value of the first "key=value" stdout line, empty when absent
std::string stdout_value(const std::string& out, const std::string& key) {
  std::size_t pos = 0;
  const std::string prefix = key + "=";
  while (pos < out.size()) {
    std::size_t end = out.find('\n', pos);
    if (end == std::string::npos) end = out.size();
    const std::string line = out.substr(pos, end - pos);
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    pos = end + 1;
  }
  return {};
}

// powered 8-beam scenario shared by the train/eval cases
const std::string& powered_csv() {
  static const std::string path = [] {
    const std::string p = workdir() + "/powered.csv";
    const auto r =
        run_cli("synth --out " + p + " --seed 11 --sequences 10 --len 30 --codebook 8");
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

// one 2-epoch training run shared by the eval cases
const std::string& train_run_dir() {
  static const std::string dir = [] {
    const std::string d = workdir() + "/run_shared";
    const auto r = run_cli("train --data " + powered_csv() + " --out " + d +
                           " --seed 3 --epochs 2 --quiet");
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

// labels drift with the row index, so in-order splits are badly unbalanced
void write_skewed_csv(const std::string& path) {
  std::ofstream f(path);
  f << "q,t,lat_bs,lon_bs,lat_ue,lon_ue,height_m,beam\n";
  for (int q = 0; q < 4; ++q) {
    for (int t = 0; t < 100; ++t) {
      const int g = q * 100 + t;
      f << q << "," << t << ",33,-112," << 33.001 + 1e-5 * g << "," << -111.995 - 1e-5 * g
        << ",60," << g / 100 << "\n";
    }
  }
}

}  // namespace

TEST_CASE("synth is deterministic per seed and reports its row count") {
  const std::string a = workdir() + "/synth_a.csv";
  const std::string b = workdir() + "/synth_b.csv";
  const auto ra = run_cli("synth --out " + a + " --seed 5 --sequences 4 --len 25 --codebook 16");
  const auto rb = run_cli("synth --out " + b + " --seed 5 --sequences 4 --len 25 --codebook 16");
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(stdout_value(ra.out, "rows") == "100");
  CHECK(slurp(a) == slurp(b));
  CHECK(fs::exists(a + ".config.json"));

  const auto rc = run_cli("synth --out " + a + ".c.csv --seed 6 --sequences 4 --len 25 --codebook 16");
  REQUIRE(rc.code == 0);
  CHECK(slurp(a) != slurp(a + ".c.csv"));
}

TEST_CASE("ingesting a canonical file reproduces it byte for byte") {
  const std::string out = workdir() + "/roundtrip.csv";
  const auto r = run_cli("ingest --in " + powered_csv() + " --out " + out);
  REQUIRE(r.code == 0);
  CHECK(stdout_value(r.out, "rows") == "300");
  CHECK(stdout_value(r.out, "beam_power_mismatches") == "0");
  CHECK(stdout_value(r.out, "gap_rows") == "0");
  CHECK(slurp(out) == slurp(powered_csv()));
}

TEST_CASE("fractions that do not sum to one are a usage error") {
  const std::string out = workdir() + "/split_bad";
  const auto r = run_cli("split --data " + powered_csv() + " --out " + out +
                         " --train 0.5 --val 0.1 --test 0.1");
  CHECK(r.code == 1);
}

TEST_CASE("a missing dataset file is a data error") {
  const auto r = run_cli("split --data " + workdir() + "/absent.csv --out " + workdir() + "/x");
  CHECK(r.code == 2);
}

TEST_CASE("a malformed dataset file is a data error") {
  const std::string bad = workdir() + "/garbage.csv";
  std::ofstream(bad) << "this,is,not\na,dataset,file\n";
  const auto r = run_cli("train --data " + bad + " --out " + workdir() + "/y --epochs 1");
  CHECK(r.code == 2);
}

TEST_CASE("unknown flags are a usage error") {
  const auto r = run_cli("synth --out " + workdir() + "/z.csv --frobnicate 3");
  CHECK(r.code == 1);
}

TEST_CASE("existing outputs are preserved unless forced") {
  const std::string p = workdir() + "/protected.csv";
  REQUIRE(run_cli("synth --out " + p + " --seed 1 --sequences 2 --len 20 --codebook 4").code == 0);
  const std::string original = slurp(p);

  const auto refuse = run_cli("synth --out " + p + " --seed 2 --sequences 2 --len 20 --codebook 4");
  CHECK(refuse.code == 1);
  CHECK(slurp(p) == original);

  const auto force =
      run_cli("synth --out " + p + " --seed 2 --sequences 2 --len 20 --codebook 4 --force");
  CHECK(force.code == 0);
  CHECK(slurp(p) != original);
}

TEST_CASE("split writes its tables and scores the partition") {
  const std::string skewed = workdir() + "/skewed.csv";
  write_skewed_csv(skewed);

  const std::string adir = workdir() + "/split_adjusted";
  const auto adj = run_cli("split --data " + skewed + " --out " + adir + " --method adjusted");
  REQUIRE(adj.code == 0);
  CHECK(stdout_value(adj.out, "method") == "adjusted");
  CHECK(fs::exists(adir + "/split_manifest.csv"));
  CHECK(fs::exists(adir + "/label_distribution.csv"));
  CHECK(fs::exists(adir + "/config.json"));
  const std::string dist = slurp(adir + "/label_distribution.csv");
  CHECK(dist.rfind("beam,n_total,n_train,n_val,n_test,p_total,p_train,p_val,p_test\n", 0) == 0);

  const std::string sdir = workdir() + "/split_sequential";
  const auto seq = run_cli("split --data " + skewed + " --out " + sdir + " --method sequential");
  REQUIRE(seq.code == 0);

  // on drifting labels the balanced split must beat the in-order one
  const double adj_score = std::stod(stdout_value(adj.out, "similarity_score"));
  const double seq_score = std::stod(stdout_value(seq.out, "similarity_score"));
  CHECK(adj_score < seq_score);

  // headerless manifest covers every sample exactly once
  const std::string manifest = slurp(adir + "/split_manifest.csv");
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 400);
  CHECK(manifest.rfind("0,0,", 0) == 0);
}

TEST_CASE("train writes the full run directory") {
  const std::string& dir = train_run_dir();
  CHECK(fs::exists(dir + "/config.json"));
  CHECK(fs::exists(dir + "/split_manifest.csv"));
  CHECK(fs::exists(dir + "/checkpoint.bin"));
  CHECK(fs::exists(dir + "/report.txt"));
  const std::string report = slurp(dir + "/report.txt");
  CHECK(report.rfind("report.type=train\n", 0) == 0);
  CHECK(report.find("wall") == std::string::npos);
}

TEST_CASE("train is reproducible across runs and quiet on stdout") {
  const std::string d2 = workdir() + "/run_repeat";
  const auto r = run_cli("train --data " + powered_csv() + " --out " + d2 +
                         " --seed 3 --epochs 2 --quiet");
  REQUIRE(r.code == 0);
  CHECK(stdout_value(r.out, "selected_epoch") != "");
  CHECK(stdout_value(r.out, "best_val_loss") != "");
  CHECK(stdout_value(r.out, "run_dir") == d2);
  // wall time goes to stderr so stdout stays diffable
  CHECK(r.out.find("wall_seconds") == std::string::npos);
  CHECK(r.err.find("wall_seconds=") != std::string::npos);

  CHECK(slurp(d2 + "/checkpoint.bin") == slurp(train_run_dir() + "/checkpoint.bin"));
  CHECK(slurp(d2 + "/report.txt") == slurp(train_run_dir() + "/report.txt"));
}

TEST_CASE("the run directory falls back to the environment") {
  const std::string d = workdir() + "/run_env";
  const auto r = run_cli("train --data " + powered_csv() + " --epochs 1 --quiet",
                         "UAVBEAM_RUN_DIR=" + d);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(d + "/checkpoint.bin"));

  const auto missing = run_cli("train --data " + powered_csv() + " --epochs 1 --quiet");
  CHECK(missing.code == 1);
}

TEST_CASE("eval writes report tables and prints the headline metrics") {
  const std::string dir = workdir() + "/eval_out";
  const auto r = run_cli("eval --checkpoint " + train_run_dir() + "/checkpoint.bin --data " +
                         powered_csv() + " --out " + dir + " --manifest " + train_run_dir() +
                         "/split_manifest.csv --split test");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir + "/report.txt"));
  CHECK(fs::exists(dir + "/topk_curve.csv"));
  CHECK(fs::exists(dir + "/reliability_curve.csv"));
  CHECK(fs::exists(dir + "/overhead_curve.csv"));
  CHECK(fs::exists(dir + "/config.json"));
  CHECK(stdout_value(r.out, "top1_acc.step0") != "");
  CHECK(stdout_value(r.out, "power_metrics") == "present");
  CHECK(stdout_value(r.out, "mean_pl_db.step0") != "");
  CHECK(stdout_value(r.out, "report") == dir + "/report.txt");
  CHECK(slurp(dir + "/topk_curve.csv").rfind("step,k,accuracy\n", 0) == 0);
  CHECK(slurp(dir + "/reliability_curve.csv").rfind("step,threshold_db,reliability\n", 0) == 0);
  CHECK(slurp(dir + "/overhead_curve.csv").rfind("step,target_pct,b_min,savings\n", 0) == 0);

  const auto bad_k = run_cli("eval --checkpoint " + train_run_dir() + "/checkpoint.bin --data " +
                             powered_csv() + " --out " + dir + "_k --topk 99");
  CHECK(bad_k.code == 1);
}

TEST_CASE("evaluating power-less data still reports accuracy") {
  const std::string bare = workdir() + "/bare.csv";
  REQUIRE(run_cli("synth --out " + bare +
                  " --seed 11 --sequences 10 --len 30 --codebook 8 --no-powers")
              .code == 0);
  const std::string dir = workdir() + "/eval_bare";
  const auto r = run_cli("eval --checkpoint " + train_run_dir() + "/checkpoint.bin --data " +
                         bare + " --out " + dir);
  REQUIRE(r.code == 0);
  CHECK(stdout_value(r.out, "power_metrics") == "absent");
  CHECK(stdout_value(r.out, "top1_acc.step0") != "");
  CHECK(stdout_value(r.out, "mean_pl_db.step0") == "");
  CHECK(!fs::exists(dir + "/reliability_curve.csv"));
}

TEST_CASE("mismatched labels warn by default and abort in strict mode") {
  const std::string src = workdir() + "/mismatch.csv";
  {
    std::ofstream f(src);
    f << "q,t,lat_bs,lon_bs,lat_ue,lon_ue,height_m,beam,p0,p1,p2\n";
    for (int t = 0; t < 6; ++t) {
      // row 2 claims beam 0 while p2 dominates
      const int beam = (t == 2) ? 0 : 2;
      f << "0," << t << ",33,-112," << 33.001 + 1e-5 * t << "," << -111.995 << ",60," << beam
        << ",0.1,0.2,0.9\n";
    }
  }
  const std::string out = workdir() + "/mismatch_out.csv";
  const auto warn = run_cli("ingest --in " + src + " --out " + out);
  REQUIRE(warn.code == 0);
  CHECK(stdout_value(warn.out, "beam_power_mismatches") == "1");
  CHECK(warn.err.find("warning") != std::string::npos);

  const auto strict = run_cli("ingest --in " + src + " --out " + out + " --strict --force");
  CHECK(strict.code == 2);
}

TEST_CASE("foreign column names map through ingest flags") {
  const std::string src = workdir() + "/foreign.csv";
  {
    std::ofstream f(src);
    f << "trip,step,cell_lat,cell_lon,unit_lat,unit_lon,alt,label\n";
    for (int t = 0; t < 5; ++t) {
      f << "1," << t << ",33,-112," << 33.002 + 1e-5 * t << "," << -111.99 << ",55," << 1 + t % 3
        << "\n";
    }
  }
  const std::string out = workdir() + "/foreign_canonical.csv";
  const auto r = run_cli("ingest --in " + src + " --out " + out +
                         " --q trip --t step --lat-bs cell_lat --lon-bs cell_lon"
                         " --lat-ue unit_lat --lon-ue unit_lon --height alt --beam label"
                         " --no-powers --one-based-beams --codebook 3");
  REQUIRE(r.code == 0);
  const std::string text = slurp(out);
  CHECK(text.rfind("q,t,lat_bs,lon_bs,lat_ue,lon_ue,height_m,beam\n", 0) == 0);
  // labels arrive 1-based and leave 0-based
  CHECK(text.find(",0\n") != std::string::npos);
}
