#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "foreg/datagen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace foreg;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "foreg_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FOREG_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Small synthetic bundle shared by several tests.
fs::path small_bundle(const fs::path& dir) {
  write(dir / "gen.json", R"({"schema_version": 1, "synthetic": {"n": 30, "m_in": 20, "m_out": 15}})");
  EXPECT_EQ(run_cli("generate --config " + (dir / "gen.json").string() + " --seed 4 --out " + (dir / "data").string()), 0);
  return dir / "data";
}

}  // namespace

TEST(CliGenerate, ByteIdenticalBundles) {
  const fs::path d = scratch("gen_det");
  write(d / "c.json", R"({"schema_version": 1, "synthetic": {"n": 25, "m_in": 30, "m_out": 30}})");
  ASSERT_EQ(run_cli("generate --config " + (d / "c.json").string() + " --seed 11 --out " + (d / "a").string()), 0);
  ASSERT_EQ(run_cli("generate --config " + (d / "c.json").string() + " --seed 11 --out " + (d / "b").string()), 0);
  for (const char* f : {"inputs.csv", "outputs.csv", "meta.json"}) EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
  ASSERT_EQ(run_cli("generate --config " + (d / "c.json").string() + " --seed 12 --out " + (d / "c").string()), 0);
  EXPECT_NE(slurp(d / "a" / "outputs.csv"), slurp(d / "c" / "outputs.csv"));
}

TEST(CliGenerate, DefaultsAndMeta) {
  const fs::path d = scratch("gen_default");
  ASSERT_EQ(run_cli("generate --seed 2 --out " + d.string()), 0);
  const json meta = read_json(d / "meta.json");
  EXPECT_EQ(meta["seed"], 2);
  EXPECT_EQ(meta["synthetic"]["r"], 4);
  EXPECT_EQ(meta["synthetic"]["n"], 200);
  EXPECT_EQ(meta["synthetic"]["sigma_in"], json({0.05, 0.1, 0.5, 0.7}));
  EXPECT_EQ(meta["synthetic"]["sigma_out"], json({0.05, 0.1, 0.5, 0.7}));
  const auto data = read_bundle(d);
  EXPECT_EQ(data.size(), 200);
  EXPECT_EQ(data.inputs.cols(), 100);
}

TEST(CliGenerate, FlagsOverrideConfig) {
  const fs::path d = scratch("gen_override");
  write(d / "c.json", R"({"schema_version": 1, "seed": 1, "out": "ignored", "synthetic": {"n": 5, "m_in": 4, "m_out": 4}})");
  ASSERT_EQ(run_cli("generate --config " + (d / "c.json").string() + " --seed 9 --out " + (d / "o").string()), 0);
  EXPECT_EQ(read_json(d / "o" / "meta.json")["seed"], 9);
}

TEST(CliGenerate, RejectsInvalidConfigs) {
  const fs::path d = scratch("gen_bad");
  write(d / "zero.json", R"({"schema_version": 1, "synthetic": {"n": 0}})");
  EXPECT_EQ(run_cli("generate --config " + (d / "zero.json").string() + " --out " + (d / "o").string()), 2);
  write(d / "unknown.json", R"({"schema_version": 1, "synthetic": {"n": 5, "colour": 3}})");
  EXPECT_EQ(run_cli("generate --config " + (d / "unknown.json").string() + " --out " + (d / "o").string()), 2);
  write(d / "top.json", R"({"schema_version": 1, "bogus": true})");
  EXPECT_EQ(run_cli("generate --config " + (d / "top.json").string() + " --out " + (d / "o").string()), 2);
  write(d / "nover.json", R"({"synthetic": {"n": 5}})");
  EXPECT_EQ(run_cli("generate --config " + (d / "nover.json").string() + " --out " + (d / "o").string()), 2);
  write(d / "ver.json", R"({"schema_version": 99})");
  EXPECT_EQ(run_cli("generate --config " + (d / "ver.json").string() + " --out " + (d / "o").string()), 2);
  EXPECT_EQ(run_cli("generate --representation tree --out " + (d / "o").string()), 2);
}

TEST(CliCorrupt, TauZeroLeavesOutputsIdentical) {
  const fs::path d = scratch("corrupt_zero");
  const fs::path data = small_bundle(d);
  ASSERT_EQ(run_cli("corrupt --data " + data.string() + " --type 2 --tau 0 --out " + (d / "c").string()), 0);
  EXPECT_EQ(slurp(d / "c" / "contaminated.csv"), slurp(data / "outputs.csv"));
  EXPECT_EQ(slurp(d / "c" / "inputs.csv"), slurp(data / "inputs.csv"));
  EXPECT_EQ(read_json(d / "c" / "indices.json"), json::array());
}

TEST(CliCorrupt, IndexFileLengthIsFloorTauN) {
  const fs::path d = scratch("corrupt_len");
  const fs::path data = small_bundle(d);
  for (int type : {1, 2, 3}) {
    const fs::path out = d / ("t" + std::to_string(type));
    ASSERT_EQ(run_cli("corrupt --data " + data.string() + " --type " + std::to_string(type) + " --tau 0.25 --seed 3 --out " +
                      out.string()),
              0);
    const json idx = read_json(out / "indices.json");
    EXPECT_EQ(idx.size(), 7u);  // floor(0.25 * 30)
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(slurp(out / "contaminated.csv"), slurp(out / "outputs.csv"));
  }
}

TEST(CliCorrupt, TypeOneTwiceShiftsByTwo) {
  const fs::path d = scratch("corrupt_twice");
  const fs::path data = small_bundle(d);
  const std::string common = " --type 1 --tau 0.2 --seed 8 --out ";
  ASSERT_EQ(run_cli("corrupt --data " + data.string() + common + (d / "once").string()), 0);
  ASSERT_EQ(run_cli("corrupt --data " + (d / "once").string() + common + (d / "twice").string()), 0);
  const auto idx = read_json(d / "once" / "indices.json").get<std::vector<Index>>();
  ASSERT_EQ(idx, read_json(d / "twice" / "indices.json").get<std::vector<Index>>());
  const Matrix y = read_bundle(data).outputs;
  const Matrix y2 = read_bundle(d / "twice").outputs;
  const std::size_t k = idx.size();
  for (std::size_t j = 0; j < k; ++j) EXPECT_EQ(y2.row(idx[j]), y.row(idx[(j + 2) % k]));
  std::vector<bool> touched(static_cast<std::size_t>(y.rows()), false);
  for (Index i : idx) touched[static_cast<std::size_t>(i)] = true;
  for (Index i = 0; i < y.rows(); ++i)
    if (!touched[static_cast<std::size_t>(i)]) EXPECT_EQ(y2.row(i), y.row(i));
}

TEST(CliFitPredict, RoundTripAndMissingFiles) {
  const fs::path d = scratch("fit");
  const fs::path data = small_bundle(d);
  write(d / "fit.json", R"({"schema_version": 1, "lambda": 1e-3,
    "kernels": {"input": {"type": "gaussian", "rho": 0.05}, "output": {"type": "laplacian", "rho": 5}},
    "loss": {"type": "huber", "kappa": 0.2, "p": 1}})");
  ASSERT_EQ(run_cli("fit --config " + (d / "fit.json").string() + " --data " + data.string() + " --out " + (d / "m").string()), 0);
  const json rep = read_json(d / "m" / "fit_report.json");
  EXPECT_GE(rep["sparsity"].get<double>(), 0.0);
  EXPECT_LE(rep["sparsity"].get<double>(), 1.0);
  ASSERT_EQ(run_cli("predict --model " + (d / "m" / "model.forarc").string() + " --data " + data.string() + " --out " +
                    (d / "p").string()),
            0);
  EXPECT_EQ(read_json(d / "p" / "predict_report.json")["mse"], rep["train_mse"]);
  // predictions ingest losslessly with the model grid as header
  const auto [pred, grid] = ingest_csv_matrix(d / "p" / "predictions.csv");
  EXPECT_EQ(format_csv(pred, &grid->locations()), slurp(d / "p" / "predictions.csv"));

  EXPECT_EQ(run_cli("predict --model " + (d / "nope.forarc").string() + " --data " + data.string() + " --out " +
                    (d / "p2").string()),
            4);
  EXPECT_EQ(run_cli("fit --data " + (d / "missing").string() + " --out " + (d / "m2").string()), 4);
}

TEST(CliFitPredict, EigenFlagsAndRejections) {
  const fs::path d = scratch("fit_eigen");
  const fs::path data = small_bundle(d);
  ASSERT_EQ(run_cli("fit --data " + data.string() + " --representation eigen --rank 5 --out " + (d / "m").string()), 0);
  EXPECT_EQ(read_json(d / "m" / "fit_report.json")["representation"]["rank"], 5);
  write(d / "h1.json", R"({"schema_version": 1, "loss": {"type": "huber", "kappa": 0.2, "p": 1}})");
  EXPECT_EQ(run_cli("fit --config " + (d / "h1.json").string() + " --data " + data.string() +
                    " --representation eigen --out " + (d / "m2").string()),
            2);
}

TEST(CliExitCodes, NumericalFailureIsThree) {
  const fs::path d = scratch("diverge");
  const fs::path data = small_bundle(d);
  write(d / "c.json", R"({"schema_version": 1, "lambda": 1e-3,
    "solver": {"warm_start": "zero", "step": {"type": "fixed", "gamma": 1e6}}})");
  EXPECT_EQ(run_cli("fit --config " + (d / "c.json").string() + " --data " + data.string() + " --out " + (d / "o").string()), 3);
  EXPECT_EQ(run_cli("cv --config " + (d / "c.json").string() + " --data " + data.string() + " --out " + (d / "o").string()), 3);
}

TEST(CliCv, TablesAndBest) {
  const fs::path d = scratch("cv");
  const fs::path data = small_bundle(d);
  write(d / "c.json", R"({"schema_version": 1, "cv": {"folds": 3, "family": "eps", "p": "inf",
    "lambdas": {"start": 1e-4, "stop": 1e-2, "count": 3}, "params": [0.01, 0.1], "aggregate": "median"}})");
  ASSERT_EQ(run_cli("cv --config " + (d / "c.json").string() + " --data " + data.string() + " --jobs 2 --out " +
                    (d / "a").string()),
            0);
  ASSERT_EQ(run_cli("cv --config " + (d / "c.json").string() + " --data " + data.string() + " --jobs 1 --out " +
                    (d / "b").string()),
            0);
  for (const char* f : {"cv_folds.csv", "cv_scores.csv", "cv_best.json"}) EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
  const std::string scores = slurp(d / "a" / "cv_scores.csv");
  EXPECT_EQ(std::count(scores.begin(), scores.end(), '\n'), 7);
  const std::string folds = slurp(d / "a" / "cv_folds.csv");
  EXPECT_EQ(std::count(folds.begin(), folds.end(), '\n'), 19);  // header + 6 cells x 3 folds
}

TEST(CliBenchmark, HugeKappaRowMatchesSquareAndSparsityBounded) {
  const fs::path d = scratch("bench");
  write(d / "c.json", R"({"schema_version": 1, "synthetic": {"m_in": 30, "m_out": 30},
    "benchmark": {"repeats": 2, "n_train": 30, "n_test": 20, "losses": [
      {"name": "square", "loss": {"type": "square"}, "lambda": 1e-3},
      {"name": "huge", "loss": {"type": "huber", "kappa": 1e9, "p": 2}, "lambda": 1e-3},
      {"name": "sparse", "loss": {"type": "eps", "epsilon": 1.0, "p": "inf"}, "lambda": 1e-3}]}})");
  ASSERT_EQ(run_cli("benchmark --config " + (d / "c.json").string() + " --seed 5 --out " + (d / "o").string()), 0);
  std::istringstream rows(slurp(d / "o" / "benchmark.csv"));
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "loss,lambda,spec,mse_mean,mse_std,sparsity_mean,sparsity_std,failures");
  std::vector<std::vector<std::string>> cells;
  while (std::getline(rows, line)) {
    std::vector<std::string> c;
    std::string tok;
    std::istringstream ls(line);
    while (std::getline(ls, tok, ',')) c.push_back(tok);
    cells.push_back(c);
  }
  ASSERT_EQ(cells.size(), 3u);
  const double sq = std::stod(cells[0][3]), huge = std::stod(cells[1][3]);
  EXPECT_LE(std::abs(huge - sq), 1e-6 * sq);
  for (const auto& c : cells) {
    EXPECT_GE(std::stod(c[5]), 0.0);
    EXPECT_LE(std::stod(c[5]), 1.0);
    EXPECT_EQ(c[7], "0");
  }
}

TEST(CliRobustnessRatio, IdenticalResidualsGiveOne) {
  const fs::path d = scratch("rr");
  write(d / "e.csv", "theta:0,0.5,1\n1,-2,0.5\n0.3,0.1,-1\n2,2,1\n");
  ASSERT_EQ(run_cli("robustness-ratio --clean " + (d / "e.csv").string() + " --corrupted " + (d / "e.csv").string() +
                    " --out " + (d / "o").string()),
            0);
  EXPECT_EQ(read_json(d / "o" / "robustness.json")["ratio"], 1.0);
  write(d / "short.csv", "theta:0,0.5,1\n1,-2,0.5\n");
  EXPECT_EQ(run_cli("robustness-ratio --clean " + (d / "e.csv").string() + " --corrupted " + (d / "short.csv").string() +
                    " --out " + (d / "o").string()),
            2);
}
