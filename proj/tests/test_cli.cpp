#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
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
    const char* cli = std::getenv("CEMB_CLI");
    if (!cli) GTEST_SKIP() << "CEMB_CLI not set";
    cli_ = cli;
    dir_ = fs::temp_directory_path() / ("cemb_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    if (!dir_.empty()) fs::remove_all(dir_);
  }

  Result run(const std::string& args) {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" + cli_ + "' " + args + " >'" + out.string() + "' 2>'" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::string cli_;
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpListsSubcommandsAndConfigKeys) {
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* s : {"embed-train", "fnet-train", "rerank-eval", "tsa-train", "fnet.lr"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("embed-train --corpus x").code, 2);
  EXPECT_EQ(run("synth ner --out-dir . --set embed.dimz=3").code, 2);
  EXPECT_EQ(run("synth ner --out-dir . --set embed.dims=abc").code, 2);
  EXPECT_EQ(run("synth bogus --out-dir .").code, 2);
}

TEST_F(Cli, MissingInputNamesThePath) {
  const auto r = run("embed-train --corpus missing_corpus.txt --out emb.txt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing_corpus.txt"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "emb.txt"));
}

TEST_F(Cli, MalformedInputLeavesNoArtifact) {
  std::ofstream(dir_ / "bad.txt") << "a\tNN\tO\nb\tNN\tI-PER\n";
  EXPECT_EQ(run("embed-train --corpus bad.txt --out emb.txt").code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "emb.txt"));
  EXPECT_EQ(run("synth ner --out-dir no/such/dir").code, 2);
}

TEST_F(Cli, EmbedTrainQueryAndDeterminism) {
  ASSERT_EQ(run("--seed 7 synth ner --small --out-dir .").code, 0);
  const std::string train = "--seed 7 --workers 1 --set embed.dims=8 --set embed.epochs=1 embed-train "
                            "--corpus corpus.txt --taxonomy taxonomy.txt --out ";
  ASSERT_EQ(run(train + "a.txt").code, 0);
  ASSERT_EQ(run(train + "b.txt").code, 0);
  EXPECT_EQ(slurp(dir_ / "a.txt"), slurp(dir_ / "b.txt"));
  std::istringstream emb(slurp(dir_ / "a.txt"));
  std::string header, word;
  std::getline(emb, header);
  std::getline(emb, word);
  std::getline(emb, word);
  word = word.substr(0, word.find(' '));
  const auto q = run("embed-query --emb a.txt --k 3 --word " + word);
  EXPECT_EQ(q.code, 0) << q.err;
  EXPECT_EQ(std::count(q.out.begin(), q.out.end(), '\n'), 3);
  const auto oov = run("embed-query --emb a.txt --word zzzz_not_a_word");
  EXPECT_EQ(oov.code, 2);
  EXPECT_NE(oov.err.find("zzzz_not_a_word"), std::string::npos);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  ASSERT_EQ(run("synth ner --small --out-dir .").code, 0);
  std::ofstream(dir_ / "run.cfg") << "embed.dims = 5\nembed.epochs = 1\n";
  ASSERT_EQ(run("--config run.cfg embed-train --corpus corpus.txt --taxonomy taxonomy.txt --out a.txt").code, 0);
  EXPECT_EQ(slurp(dir_ / "a.txt").find(" 5\n") != std::string::npos, true);
  ASSERT_EQ(run("--config run.cfg --set embed.dims=6 embed-train --corpus corpus.txt --out b.txt").code, 0);
  EXPECT_EQ(slurp(dir_ / "b.txt").find(" 6\n") != std::string::npos, true);
  std::ofstream(dir_ / "bad.cfg") << "embed.dims\n";
  const auto r = run("--config bad.cfg embed-train --corpus corpus.txt --out c.txt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.cfg:1"), std::string::npos) << r.err;
}

TEST_F(Cli, TsaEvalRequiresConceptsWhenTrainedWithThem) {
  ASSERT_EQ(run("--seed 3 synth tsa --small --out-dir .").code, 0);
  const auto t = run("--seed 3 --set tsa.epochs=1 --set tsa.word_dims=6 --set tsa.hidden=4 --set tsa.attention_dims=4 "
                     "tsa-train --train train.jsonl --dev dev.jsonl --concepts concepts.txt --out-dir model");
  ASSERT_EQ(t.code, 0) << t.err;
  const auto missing = run("tsa-eval --model-dir model --test test.jsonl");
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--concepts"), std::string::npos);
  const auto ok = run("tsa-eval --model-dir model --test test.jsonl --concepts concepts.txt --out m.json");
  EXPECT_EQ(ok.code, 0) << ok.err;
  const auto m = slurp(dir_ / "m.json");
  for (const char* k : {"strict_acc", "macro_f1", "micro_f1", "sentiment_acc"}) EXPECT_NE(m.find(k), std::string::npos);
}
