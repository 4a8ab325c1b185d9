#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fadacs/manifest.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("FADACS_CLI");
  return env ? env : "";
}

int run(const std::string& args, const std::string& stderr_file = "/dev/null") {
  std::string cmd = cli_path() + " " + args + " >/dev/null 2>" + stderr_file;
  int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct temp_dir {
  fs::path path;
  explicit temp_dir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fadacs_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~temp_dir() { fs::remove_all(path); }
  std::string operator/(const std::string& sub) const { return (path / sub).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth with one seed twice produces identical digests") {
  if (cli_path().empty()) return;  // driven through ctest, which sets FADACS_CLI
  temp_dir tmp("synthdet");
  std::string args = "synth --seed 11 --n-lots 3 --days 1 --events --domain source --out ";
  REQUIRE(run(args + (tmp / "a")) == 0);
  REQUIRE(run(args + (tmp / "b")) == 0);
  for (const char* f : {"source/events.csv", "source/weather.csv", "source/truth_grid.csv",
                        "source/lots.csv", "source/pois.csv"}) {
    CHECK(fadacs::manifest::file_digest(tmp / ("a/" + std::string(f))) ==
          fadacs::manifest::file_digest(tmp / ("b/" + std::string(f))));
  }
  // a different seed changes the data
  REQUIRE(run("synth --seed 12 --n-lots 3 --days 1 --events --domain source --out " +
              (tmp / "c")) == 0);
  CHECK(fadacs::manifest::file_digest(tmp / "a/source/events.csv") !=
        fadacs::manifest::file_digest(tmp / "c/source/events.csv"));
}

TEST_CASE("evaluate without a checkpoint reports UpstreamStageMissing") {
  if (cli_path().empty()) return;
  temp_dir tmp("missing");
  REQUIRE(run("synth --seed 5 --n-lots 2 --days 1 --domain source --out " + (tmp / "d")) == 0);
  REQUIRE(run("featurize --grid " + (tmp / "d/source/truth_grid.csv") + " --lots " +
              (tmp / "d/source/lots.csv") + " --pois " + (tmp / "d/source/pois.csv") +
              " --hours " + (tmp / "d/source/opening_hours.csv") + " --weather " +
              (tmp / "d/source/weather.csv") + " --out " + (tmp / "bundle")) == 0);
  int rc = run("evaluate --data " + (tmp / "bundle") + " --out " + (tmp / "ev") +
                   " --model convlstm=" + (tmp / "nonexistent_model"),
               tmp / "err.txt");
  CHECK(rc == 0);  // the row fails, the report survives
  auto report = slurp(tmp / "ev/report.json");
  CHECK(report.find("UpstreamStageMissing") != std::string::npos);

  // a missing bundle is fatal with machine-readable stderr
  rc = run("evaluate --data " + (tmp / "no_bundle") + " --out " + (tmp / "ev2") +
               " --model m=" + (tmp / "nonexistent_model"),
           tmp / "err2.txt");
  CHECK(rc == 1);
  auto err = slurp(tmp / "err2.txt");
  CHECK(err.find("\"error\"") != std::string::npos);
  CHECK(err.find("UpstreamStageMissing") != std::string::npos);
}

TEST_CASE("config file values apply and flags override them") {
  if (cli_path().empty()) return;
  temp_dir tmp("config");
  {
    std::ofstream cfg(tmp / "cfg.json");
    cfg << "{\"synth\": {\"seed\": 21, \"n_lots\": 2, \"days\": 1}}\n";
  }
  REQUIRE(run("--config " + (tmp / "cfg.json") + " synth --domain source --out " + (tmp / "a")) ==
          0);
  REQUIRE(run("synth --seed 21 --n-lots 2 --days 1 --domain source --out " + (tmp / "b")) == 0);
  CHECK(fadacs::manifest::file_digest(tmp / "a/source/truth_grid.csv") ==
        fadacs::manifest::file_digest(tmp / "b/source/truth_grid.csv"));
  // flag wins over the config value
  REQUIRE(run("--config " + (tmp / "cfg.json") + " synth --seed 22 --domain source --out " +
              (tmp / "c")) == 0);
  CHECK(fadacs::manifest::file_digest(tmp / "a/source/truth_grid.csv") !=
        fadacs::manifest::file_digest(tmp / "c/source/truth_grid.csv"));
  // malformed config is ConfigInvalid
  {
    std::ofstream bad(tmp / "bad.json");
    bad << "{not json";
  }
  int rc = run("--config " + (tmp / "bad.json") + " synth --out " + (tmp / "d"), tmp / "err.txt");
  CHECK(rc == 1);
  CHECK(slurp(tmp / "err.txt").find("ConfigInvalid") != std::string::npos);
}

TEST_CASE("screen emits the feature table on synthetic data") {
  if (cli_path().empty()) return;
  temp_dir tmp("screen");
  REQUIRE(run("synth --seed 9 --n-lots 3 --days 2 --domain source --out " + (tmp / "d")) == 0);
  REQUIRE(run("screen --grid " + (tmp / "d/source/truth_grid.csv") + " --lots " +
              (tmp / "d/source/lots.csv") + " --pois " + (tmp / "d/source/pois.csv") +
              " --hours " + (tmp / "d/source/opening_hours.csv") + " --weather " +
              (tmp / "d/source/weather.csv") + " --out " + (tmp / "scr")) == 0);
  auto csv = slurp(tmp / "scr/screen.csv");
  CHECK(csv.find("feature,pcc,f_value,p_value,n,note") != std::string::npos);
  CHECK(csv.find("humidity_pct") != std::string::npos);
  CHECK(csv.find("n_open_poi_1km") != std::string::npos);
  CHECK(csv.find("is_weekend") != std::string::npos);
}

TEST_CASE("cluster subcommand groups the synthetic slots") {
  if (cli_path().empty()) return;
  temp_dir tmp("cluster");
  REQUIRE(run("synth --seed 13 --n-lots 3 --days 1 --domain source --out " + (tmp / "d")) == 0);
  REQUIRE(run("cluster --slots " + (tmp / "d/source/slots.csv") + " --mode rye --threshold 5 " +
              "--out " + (tmp / "lots")) == 0);
  auto csv = slurp(tmp / "lots/lots.csv");
  CHECK(csv.find("lot_id,rule,n_slots,centroid_lon,centroid_lat,slot_keys") != std::string::npos);
  // three sectors, far apart: three lots
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("end-to-end smoke: synth, ingest, featurize, train, adapt, evaluate, report") {
  if (cli_path().empty()) return;
  temp_dir tmp("e2e");
  // source domain as raw events, target as a grid
  REQUIRE(run("synth --seed 31 --n-lots 4 --days 2 --events --shift 0.7 --out " + (tmp / "d")) ==
          0);
  REQUIRE(run("ingest --schema rye --events " + (tmp / "d/source/events.csv") + " --out " +
              (tmp / "ing")) == 0);
  REQUIRE(run("featurize --events " + (tmp / "ing/clean_events.csv") + " --lots " +
              (tmp / "d/source/lots.csv") + " --pois " + (tmp / "d/source/pois.csv") +
              " --hours " + (tmp / "d/source/opening_hours.csv") + " --weather " +
              (tmp / "d/source/weather.csv") + " --out " + (tmp / "src_bundle")) == 0);
  REQUIRE(run("featurize --grid " + (tmp / "d/target/truth_grid.csv") + " --lots " +
              (tmp / "d/target/lots.csv") + " --pois " + (tmp / "d/target/pois.csv") +
              " --hours " + (tmp / "d/target/opening_hours.csv") + " --weather " +
              (tmp / "d/target/weather.csv") + " --norm-from " + (tmp / "src_bundle") +
              " --out " + (tmp / "tgt_bundle")) == 0);
  REQUIRE(run("train --data " + (tmp / "src_bundle") +
              " --model convlstm --hidden 4 --code-channels 4 --epochs 2 --batch 8 "
              "--batches-per-epoch 4 --seed 31 --out " +
              (tmp / "model")) == 0);
  REQUIRE(run("adapt --source-data " + (tmp / "src_bundle") + " --target-data " +
              (tmp / "tgt_bundle") + " --source-model " + (tmp / "model") +
              " --epochs 1 --batch 4 --batches-per-epoch 3 --seed 31 --out " +
              (tmp / "adapted")) == 0);
  REQUIRE(run("evaluate --data " + (tmp / "tgt_bundle") + " --out " + (tmp / "ev") +
              " --ha --model source_only=" + (tmp / "model") + " --model fadacs=" +
              (tmp / "adapted")) == 0);
  REQUIRE(run("report --in " + (tmp / "ev/report.json") + " --out " + (tmp / "final")) == 0);
  auto table = slurp(tmp / "final.csv");
  CHECK(table.find("ha") != std::string::npos);
  CHECK(table.find("source_only") != std::string::npos);
  CHECK(table.find("fadacs") != std::string::npos);
  CHECK(table.find("mae_5m") != std::string::npos);
  // normalization stats were reused verbatim across domains
  auto src_meta = slurp(tmp / "src_bundle/meta.json");
  auto tgt_meta = slurp(tmp / "tgt_bundle/meta.json");
  auto norm_of = [](const std::string& text) {
    return nlohmann::json::parse(text).at("normalization");
  };
  CHECK(norm_of(src_meta) == norm_of(tgt_meta));
  // manifests exist for every mutating stage
  for (const char* m : {"d/manifest.json", "ing/manifest.json", "src_bundle/manifest.json",
                        "model/manifest.json", "adapted/manifest.json", "ev/manifest.json"})
    CHECK(fs::exists(tmp / m));
}

}  // TEST_SUITE
