#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mstyle_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" MSTYLE_CLI "' " + args + " > out.txt 2> err.txt";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir_ / "out.txt");
    r.err = slurp(dir_ / "err.txt");
    return r;
  }

  void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }

  /// Small corpus, dataset and a two-epoch checkpoint.
  void pipeline() {
    ASSERT_EQ(run("synth-data --out corpus --seconds 6 --clips 1").code, 0);
    ASSERT_EQ(run("preprocess --corpus corpus --out data.bin").code, 0);
    write("train.toml",
          "[train]\n"
          "dataset = \"data.bin\"\n"
          "out = \"model.mckp\"\n"
          "variant = \"snsm\"\n"
          "epochs = 2\n"
          "hidden = 32\n"
          "gating-hidden = \"16,16\"\n");
    const Result t = run("train --config train.toml");
    ASSERT_EQ(t.code, 0) << t.err;
    ASSERT_TRUE(fs::exists(dir_ / "model.mckp"));
  }

  fs::path single_run_dir() {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(dir_ / "runs")) {
      dirs.push_back(e.path());
    }
    EXPECT_EQ(dirs.size(), 1u);
    return dirs.empty() ? fs::path() : dirs.front();
  }

  fs::path dir_;
};

TEST_F(Cli, HelpForEverySubcommand) {
  for (const char* sub :
       {"synth-data", "preprocess", "train", "eval-replay", "eval-transfer", "eval-interp", "serve"}) {
    const Result r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
  }
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(run("").code, 1); }

TEST_F(Cli, MissingConfigFileNamesThePath) {
  const Result r = run("train --config does_not_exist.toml");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("does_not_exist.toml"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownFlagSuggestsClosestOption) {
  const Result r = run("train --dataset d --out o --epoch 3");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("'--epoch'"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("did you mean '--epochs'"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownConfigKeyIsUsageError) {
  write("bad.toml", "[train]\ndataset = \"d\"\nout = \"o\"\nepoch = 3\n");
  EXPECT_EQ(run("train --config bad.toml").code, 1);
}

TEST_F(Cli, InvalidValueIsUsageError) {
  EXPECT_EQ(run("train --dataset d --out o --variant lstm").code, 1);
  EXPECT_EQ(run("train --dataset d --out o --epochs many").code, 1);
}

TEST_F(Cli, RuntimeFailureExitsTwo) {
  const Result r = run("preprocess --corpus missing --out data.bin");
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, SynthDataIsDeterministic) {
  ASSERT_EQ(run("synth-data --out a --seconds 6 --clips 1 --seed 4").code, 0);
  ASSERT_EQ(run("synth-data --out b --seconds 6 --clips 1 --seed 4").code, 0);
  ASSERT_EQ(run("synth-data --out c --seconds 6 --clips 1 --seed 5").code, 0);
  std::size_t files = 0;
  bool any_differs = false;
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    const auto name = e.path().filename();
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / name)) << name;
    any_differs = any_differs || slurp(e.path()) != slurp(dir_ / "c" / name);
    ++files;
  }
  EXPECT_EQ(files, 1u + 4u * 2u);  // manifest plus motion and labels per clip
  EXPECT_TRUE(any_differs);
}

TEST_F(Cli, PipelineWritesReplayArtifacts) {
  pipeline();
  const Result r = run("eval-replay --dataset data.bin --checkpoint model.mckp --runs runs");
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path run_dir = single_run_dir();
  EXPECT_TRUE(std::regex_match(run_dir.filename().string(), std::regex(R"(\d{8}T\d{6}Z-[0-9a-f]{12})")));
  std::istringstream table(slurp(run_dir / "mse_table.csv"));
  std::string line;
  std::getline(table, line);
  EXPECT_EQ(line, "style,variant,clip,frames,mse,threshold,passed,diverged");
  std::size_t rows = 0;
  while (std::getline(table, line)) {
    EXPECT_NE(line.find(",snsm,"), std::string::npos);
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  EXPECT_TRUE(fs::exists(run_dir / "ability_matrix.json"));
  EXPECT_TRUE(fs::exists(run_dir / "replay_neutral_snsm.csv"));
}

TEST_F(Cli, TransferAndInterpolationRun) {
  pipeline();
  Result r = run("eval-transfer --dataset data.bin --checkpoint model.mckp --runs runs --from neutral --to tired");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("neutral -> tired"), std::string::npos);
  EXPECT_TRUE(fs::exists(single_run_dir() / "transition.json"));
  fs::remove_all(dir_ / "runs");
  r = run("eval-interp --dataset data.bin --checkpoint model.mckp --runs runs --first neutral --second proud "
          "--seconds 4");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(single_run_dir() / "interpolation.json"));
  EXPECT_EQ(run("eval-transfer --dataset data.bin --checkpoint model.mckp --from nobody --to tired").code, 2);
}

TEST_F(Cli, OfflineReplayIsReproducible) {
  pipeline();
  write("session.jsonl",
        "{\"type\":\"recording\",\"version\":1,\"fps\":60,\"trajectory_blend\":0.5,\"seed\":3,"
        "\"styles\":[\"neutral\",\"proud\",\"tired\",\"bouncy\"]}\n"
        "{\"t\":0,\"inputs\":[{\"type\":\"control\",\"dir\":[1,0],\"speed\":1.2,\"gait\":\"walk\"}]}\n"
        "{\"t\":30,\"inputs\":[{\"type\":\"set_style\",\"weights\":[0,0,1,0],\"duration_s\":0.5}]}\n"
        "{\"type\":\"end\",\"ticks\":90}\n");
  const Result a = run("serve --checkpoint model.mckp --replay session.jsonl --frames-out a.jsonl");
  ASSERT_EQ(a.code, 0) << a.err;
  const Result b = run("serve --checkpoint model.mckp --replay session.jsonl --frames-out b.jsonl");
  ASSERT_EQ(b.code, 0) << b.err;
  const std::regex hash(R"(stream hash ([0-9a-f]{16}))");
  std::smatch ma;
  std::smatch mb;
  ASSERT_TRUE(std::regex_search(a.out, ma, hash)) << a.out;
  ASSERT_TRUE(std::regex_search(b.out, mb, hash)) << b.out;
  EXPECT_EQ(ma[1], mb[1]);
  const std::string frames = slurp(dir_ / "a.jsonl");
  EXPECT_EQ(frames, slurp(dir_ / "b.jsonl"));
  EXPECT_EQ(std::count(frames.begin(), frames.end(), '\n'), 90);
  EXPECT_EQ(run("serve --checkpoint model.mckp --frames-out x.jsonl").code, 2);
}

}  // namespace
