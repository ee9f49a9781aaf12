#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "dmlsl/faassim.hpp"
#include "oracles.hpp"

namespace dmlsl::cli {
namespace {

using testing::TempDir;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, std::string> parse_record(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(Cli, GenerateIsReproducible) {
  TempDir dir;
  const auto a = (dir / "a.csv").string(), b = (dir / "b.csv").string();
  for (const auto& path : {a, b}) {
    const auto r = invoke({"generate", "--n", "2000", "--dim-x", "5", "--theta", "0.5", "--seed", "42", "--out", path});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const std::string csv = slurp(a);
  EXPECT_EQ(csv, slurp(b));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "y,d,x1,x2,x3,x4,x5");
  EXPECT_EQ(line_count(csv), 2001u);
  EXPECT_TRUE(std::filesystem::exists(a + ".meta"));
}

TEST(Cli, GenerateRejectsTinyN) {
  TempDir dir;
  const auto r = invoke({"generate", "--n", "1", "--out", (dir / "x.csv").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, FitMissingInputs) {
  TempDir dir;
  auto r = invoke({"fit", "--data", (dir / "none.csv").string(), "--store", (dir / "s").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("Io"), std::string::npos) << r.err;
  std::ofstream(dir / "t.csv") << "y,x1\n1,2\n3,4\n";
  r = invoke({"fit", "--data", (dir / "t.csv").string(), "--store", (dir / "s").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("MissingColumn"), std::string::npos) << r.err;
  r = invoke({"fit", "--learner-g", "svm(c=1)", "--data", "dgp:n=50", "--store", (dir / "s").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("UnknownLearner"), std::string::npos) << r.err;
  EXPECT_NE(invoke({"fit", "--n-folds", "1", "--data", "dgp:n=50"}).code, 0);
  EXPECT_NE(invoke({"frobnicate"}).code, 0);
}

TEST(Cli, BonusPresetBothScalings) {
  TempDir dir;
  std::ofstream(dir / "bonus.csv") << testing::synthetic_bonus_csv(60, 3);
  const std::vector<std::string> common{"fit", "--preset-bonus", "--data", (dir / "bonus.csv").string(),
                                        "--learner-g", "random_forest(n_estimators=3)",
                                        "--learner-m", "random_forest(n_estimators=3)",
                                        "--store", (dir / "store").string(), "--seed", "9"};
  auto rep_args = common;
  rep_args.insert(rep_args.end(), {"--invocations-out", (dir / "rep.csv").string()});
  auto fold_args = common;
  fold_args.insert(fold_args.end(),
                   {"--scaling", "per_fold", "--backend", "pool", "--invocations-out", (dir / "fold.csv").string()});
  const auto rep = invoke(rep_args);
  const auto fold = invoke(fold_args);
  ASSERT_EQ(rep.code, 0) << rep.err;
  ASSERT_EQ(fold.code, 0) << fold.err;
  const auto a = parse_record(rep.out), b = parse_record(fold.out);
  EXPECT_EQ(a.at("invocations"), "200");
  EXPECT_EQ(b.at("invocations"), "1000");
  EXPECT_EQ(a.at("learner_fits"), "1000");
  EXPECT_EQ(a.at("theta"), b.at("theta"));
  EXPECT_EQ(a.at("theta_per_rep"), b.at("theta_per_rep"));
  EXPECT_EQ(line_count(slurp(dir / "rep.csv")), 201u);
  EXPECT_EQ(line_count(slurp(dir / "fold.csv")), 1001u);
}

TEST(Cli, SerialAndPoolRecordsMatchApartFromTiming) {
  TempDir dir;
  const auto strip = [](const std::string& rec) {
    auto kv = parse_record(rec);
    std::erase_if(kv, [](const auto& item) { return item.first.rfind("time_", 0) == 0; });
    return kv;
  };
  const std::vector<std::string> common{"fit", "--data", "dgp:n=150,dim_x=4,theta=1", "--n-folds", "3", "--n-rep",
                                        "4", "--learner-g", "random_forest(n_estimators=5,max_features=sqrt)",
                                        "--store", (dir / "s").string(), "--seed", "77"};
  auto serial = common;
  serial.insert(serial.end(), {"--backend", "serial"});
  auto pool = common;
  pool.insert(pool.end(), {"--backend", "pool", "--workers", "3"});
  const auto a = invoke(serial), b = invoke(pool);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(strip(a.out), strip(b.out));
  EXPECT_NE(a.out.find("time_fit_ms="), std::string::npos);
}

TEST(Cli, FaasFitReportsLedger) {
  TempDir dir;
  const auto r = invoke({"fit", "--data", "dgp:n=100", "--n-rep", "2", "--backend", "faas-sim", "--memory-mb", "2048",
                         "--store", (dir / "s").string(), "--profile-out", (dir / "p.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = parse_record(r.out);
  EXPECT_EQ(kv.at("memory_mb"), "2048");
  EXPECT_EQ(kv.at("invocations"), "4");
  EXPECT_TRUE(kv.contains("time_gb_seconds"));
  EXPECT_TRUE(kv.contains("time_usd"));
  const auto profile = parse_profile_csv(slurp(dir / "p.csv"));
  EXPECT_EQ(profile.size(), 4u);

  const auto sim = invoke({"simulate-cost", "--profile", (dir / "p.csv").string(), "--memory-mb", "512"});
  ASSERT_EQ(sim.code, 0) << sim.err;
  EXPECT_EQ(parse_record(sim.out).at("invocations"), "4");
}

TEST(Cli, SweepCardinality) {
  TempDir dir;
  const auto out = (dir / "sweep.csv").string();
  const auto r = invoke({"sweep", "--data", "dgp:n=60,dim_x=3", "--n-folds", "5", "--n-rep", "3", "--memory-grid",
                         "256,512,1024", "--repeats", "5", "--store", (dir / "s").string(), "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(out);
  EXPECT_EQ(line_count(csv), 31u);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 8u);
    EXPECT_EQ(f[3], f[1] == "per_rep" ? "6" : "30");
    EXPECT_NEAR(std::stod(f[6]), std::stod(f[5]) * 0.0000166667, 1e-15);
  }
  EXPECT_NE(invoke({"sweep", "--data", "dgp:n=60", "--backend", "serial", "--store", (dir / "s").string()}).code, 0);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir;
  std::ofstream(dir / "run.conf") << "# defaults\ndata=dgp:n=80\nn-rep=2\nseed=5\n";
  const auto base = std::vector<std::string>{"fit", "--config", (dir / "run.conf").string(), "--store",
                                             (dir / "s").string()};
  const auto a = invoke(base);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(parse_record(a.out).at("n_rep"), "2");
  EXPECT_EQ(parse_record(a.out).at("seed"), "5");
  auto over = base;
  over.insert(over.end(), {"--seed", "6"});
  const auto b = invoke(over);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(parse_record(b.out).at("seed"), "6");
  EXPECT_NE(parse_record(a.out).at("theta"), parse_record(b.out).at("theta"));
}

TEST(Cli, RecordPrecedesSummary) {
  TempDir dir;
  const auto r = invoke({"fit", "--data", "dgp:n=50", "--n-rep", "1", "--store", (dir / "s").string(), "--out",
                         (dir / "rec.txt").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("theta=", 0), 0u);
  EXPECT_EQ(slurp(dir / "rec.txt"), r.out);
  EXPECT_NE(r.err.find("CI"), std::string::npos);
}

}  // namespace
}  // namespace dmlsl::cli
