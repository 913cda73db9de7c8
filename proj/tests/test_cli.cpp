#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gngan/checkpoint.hpp"
#include "gngan/config.hpp"
#include "gngan/experiment.hpp"

using namespace gngan;
namespace fs = std::filesystem;

namespace {

const std::string kTiny =
    " --set eg_hidden_width=8 --set d_hidden_width=8 --set dataset_size=256 --set eval_samples=400 --batch-size 32";

struct Result {
  int status = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("gngan_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "GNGAN_THREADS=1 " + std::string(GNGAN_CLI_PATH) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, TrainWritesRunFilesAndIsReproducible) {
  const auto a = dir_ / "a", b = dir_ / "b";
  const std::string common = " train --variant gm_ne --seed 7 --epochs 2" + kTiny;
  ASSERT_EQ(run(common + " --out " + a.string()).status, 0);
  ASSERT_EQ(run(common + " --out " + b.string()).status, 0);
  for (const char* f : {"checkpoint.bin", "metrics.csv", "config.txt", "mode_report.csv"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  const auto m = lines(slurp(a / "metrics.csv"));
  ASSERT_GE(m.size(), 2u);
  EXPECT_EQ(m[0],
            "iteration,v_ae,v_d,v_g,lr,covered_modes,registered_points,tv_true,tv_differential,grad_norm_ae,"
            "grad_norm_d,grad_norm_g");
  EXPECT_EQ(split(m.back())[0], "16");
  EXPECT_FALSE(split(m.back())[5].empty());
  const auto ckpt = load_checkpoint(a / "checkpoint.bin");
  EXPECT_EQ(ckpt.iteration, 16u);
  EXPECT_EQ(ckpt.seed, 7u);
}

TEST_F(Cli, SeedsProduceRunDirectoriesAndSummary) {
  ASSERT_EQ(run(" train --seeds 1..8 --epochs 1 --out " + dir_.string() + kTiny).status, 0);
  for (int s = 1; s <= 8; ++s) EXPECT_TRUE(fs::exists(dir_ / ("seed_" + std::to_string(s)) / "checkpoint.bin")) << s;
  const auto runs = lines(slurp(dir_ / "runs.csv"));
  ASSERT_EQ(runs.size(), 9u);
  std::map<std::string, std::vector<double>> columns;
  const auto header = split(runs[0]);
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto f = split(runs[i]);
    EXPECT_EQ(f[1], "ok");
    for (std::size_t c = 2; c < f.size(); ++c)
      if (!f[c].empty()) columns[header[c]].push_back(std::stod(f[c]));
  }
  const auto summary = lines(slurp(dir_ / "summary.csv"));
  ASSERT_EQ(summary[0], "metric,mean,std,n");
  ASSERT_EQ(summary.size(), 5u);
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto f = split(summary[i]);
    const auto& v = columns[f[0]];
    ASSERT_EQ(v.size(), std::stoul(f[3])) << f[0];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(std::stod(f[1]), mean, 1e-12) << f[0];
    EXPECT_NEAR(std::stod(f[2]), std::sqrt(ss / static_cast<double>(v.size() - 1)), 1e-12) << f[0];
  }
}

TEST_F(Cli, EvalMatchesTrainingAndRepeats) {
  const std::string cfg = " --seed 3 --epochs 2" + kTiny;
  ASSERT_EQ(run(" train" + cfg + " --out " + dir_.string()).status, 0);
  const auto logged = slurp(dir_ / "mode_report.csv");
  const auto e1 = dir_ / "e1", e2 = dir_ / "e2";
  const auto r1 = run(" eval --checkpoint " + (dir_ / "checkpoint.bin").string() + cfg + " --out " + e1.string());
  ASSERT_EQ(r1.status, 0) << r1.err;
  EXPECT_NE(r1.out.find("covered_modes"), std::string::npos);
  ASSERT_EQ(run(" eval --checkpoint " + (dir_ / "checkpoint.bin").string() + cfg + " --out " + e2.string()).status, 0);
  EXPECT_EQ(slurp(e1 / "mode_report.csv"), logged);
  EXPECT_EQ(slurp(e2 / "mode_report.csv"), logged);
}

TEST_F(Cli, EvalOfUntrainedCheckpoint) {
  const std::string cfg = " --seed 4 --epochs 0" + kTiny;
  ASSERT_EQ(run(" train" + cfg + " --out " + dir_.string()).status, 0);
  const auto r = run(" eval --checkpoint " + (dir_ / "checkpoint.bin").string() + cfg);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto row = split(lines(slurp(dir_ / "mode_report.csv")).at(1));
  EXPECT_LT(std::stoul(row[2]), 10u);
}

TEST_F(Cli, EvalRefusesOtherConfigUnlessForced) {
  ASSERT_EQ(run(" train --seed 1 --epochs 0 --out " + dir_.string() + kTiny).status, 0);
  const auto ck = (dir_ / "checkpoint.bin").string();
  const auto r = run(" eval --checkpoint " + ck + " --lambda-m1 0.5" + kTiny);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("hash mismatch"), std::string::npos) << r.err;
  EXPECT_EQ(run(" eval --force --checkpoint " + ck + " --lambda-m1 0.5" + kTiny).status, 0);
}

TEST_F(Cli, OneDimensionalEvalWritesScoreCurve) {
  const std::string cfg = " --dataset tri1d --seed 2 --epochs 1 --set dataset_size=512";
  ASSERT_EQ(run(" train" + cfg + " --out " + dir_.string()).status, 0);
  ASSERT_EQ(run(" eval --checkpoint " + (dir_ / "checkpoint.bin").string() + cfg).status, 0);
  const auto curve = lines(slurp(dir_ / "score_curve.csv"));
  ASSERT_EQ(curve.size(), 402u);
  EXPECT_EQ(curve[0], "x,score");
  EXPECT_EQ(split(curve[1])[0], "-4");
  EXPECT_EQ(split(curve[401])[0], "4");
}

TEST_F(Cli, GradmapLatticeAndDeterminism) {
  ASSERT_EQ(run(" train --seed 5 --epochs 1 --out " + dir_.string() + kTiny).status, 0);
  const auto ck = (dir_ / "checkpoint.bin").string();
  const auto a = dir_ / "a.csv", b = dir_ / "b.csv";
  ASSERT_EQ(run(" gradmap --checkpoint " + ck + " --resolution 40 --bounds=-5,5,-5,5 --out " + a.string()).status, 0);
  ASSERT_EQ(run(" gradmap --checkpoint " + ck + " --out " + b.string()).status, 0);
  const auto rows = lines(slurp(a));
  ASSERT_EQ(rows.size(), 1601u);
  EXPECT_EQ(rows[0], "x,y,gx,gy");
  EXPECT_EQ(slurp(a), slurp(b));
  const auto r = run(" gradmap --checkpoint " + ck + " --resolution 3,2 --out -");
  EXPECT_EQ(lines(r.out).size(), 7u);
}

TEST_F(Cli, GradmapOfZeroDiscriminatorIsZero) {
  Rng rng(0);
  HyperParams hp;
  Checkpoint c;
  c.model = make_model({2, 1, 4, 1, 4}, hp, rng);
  for (auto* p : c.model.discriminator.parameters()) p->setZero();
  save_checkpoint(dir_ / "zero.bin", c);
  ASSERT_EQ(run(" gradmap --checkpoint " + (dir_ / "zero.bin").string() + " --out " + (dir_ / "g.csv").string()).status, 0);
  const auto rows = lines(slurp(dir_ / "g.csv"));
  ASSERT_EQ(rows.size(), 1601u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split(rows[i]);
    EXPECT_EQ(std::stod(f[2]), 0.0);
    EXPECT_EQ(std::stod(f[3]), 0.0);
  }
}

TEST_F(Cli, ConfigErrorsAreReported) {
  auto r = run(" train --lr -1 --out " + dir_.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("lr"), std::string::npos) << r.err;
  r = run(" train --set foo=1 --out " + dir_.string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("foo"), std::string::npos) << r.err;
  std::ofstream(dir_ / "cfg.txt") << "epochs = 1\nbogus_key = 2\n";
  r = run(" train --config " + (dir_ / "cfg.txt").string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("bogus_key"), std::string::npos) << r.err;
  EXPECT_NE(run(" frobnicate").status, 0);
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  std::ofstream(dir_ / "cfg.txt") << "# tiny run\nepochs = 1\nseed = 9\nlr = 0.5\n";
  ASSERT_EQ(run(" train --config " + (dir_ / "cfg.txt").string() + " --lr 0.002 --out " + (dir_ / "r").string() + kTiny).status, 0);
  const auto text = slurp(dir_ / "r" / "config.txt");
  EXPECT_NE(text.find("lr=0.002\n"), std::string::npos) << text;
  EXPECT_NE(text.find("seeds=9\n"), std::string::npos) << text;
}

TEST_F(Cli, NonFiniteLossAbortsWithPartialCheckpoint) {
  std::ofstream data(dir_ / "huge.csv");
  data << "x1,x2\n";
  for (int i = 0; i < 64; ++i) data << "1e200," << i << "\n";
  data.close();
  const auto r = run(" train --dataset csv:" + (dir_ / "huge.csv").string() + " --batch-size 32 --epochs 1 --out " +
                     (dir_ / "run").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("autoencoder"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoint.bin.aborted"));
  EXPECT_FALSE(fs::exists(dir_ / "run" / "checkpoint.bin"));
}

TEST_F(Cli, AblateRunsEveryArm) {
  ASSERT_EQ(run(" ablate --seeds 1,2 --epochs 1 --out " + dir_.string() + kTiny).status, 0);
  const auto rows = lines(slurp(dir_ / "ablation_summary.csv"));
  ASSERT_EQ(rows.size(), 17u);
  EXPECT_EQ(rows[0], "variant,metric,mean,std,n");
  for (const char* arm : {"standard_gan", "ne_only", "gm", "gm_ne"}) {
    EXPECT_TRUE(fs::exists(dir_ / arm / "seed_2" / "checkpoint.bin")) << arm;
  }
}
