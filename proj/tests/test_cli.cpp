#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "minusformer/cli.hpp"
#include "minusformer/errors.hpp"

using namespace minusformer;
using namespace minusformer::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("minusformer_cli_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string str(const std::string& leaf = "") const { return (path_ / leaf).string(); }

private:
    fs::path path_;
};

std::vector<std::string> argv_of(std::initializer_list<std::string> args) {
    std::vector<std::string> v{"minusformer"};
    v.insert(v.end(), args);
    return v;
}

std::size_t line_count(const std::string& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

std::string read_all(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small model so that end-to-end runs finish in seconds.
std::vector<std::string> small_run(const std::string& command, const std::string& out,
                                   std::initializer_list<std::string> extra = {}) {
    std::vector<std::string> v = argv_of({command, "--out", out, "--input-len", "24", "--pred-len", "6",
                                          "--embed-dim", "8", "--heads", "2", "--ffn-hidden", "16", "--epochs", "1",
                                          "--length", "400", "--variates", "2", "--lr", "1e-3", "--seed", "3"});
    v.insert(v.end(), extra);
    return v;
}

int run_dispatch(const std::vector<std::string>& argv, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = dispatch(parse_args(argv), out, err);
    if (err_text) *err_text = err.str();
    return code;
}

}  // namespace

TEST(Parse, DefaultsAndSubcommand) {
    const auto s = parse_args(argv_of({"train"}));
    EXPECT_EQ(s.command, Command::train);
    EXPECT_EQ(s.out_dir, "run");
    EXPECT_EQ(s.train.learning_rate, 1e-4);
    EXPECT_EQ(s.model.n_blocks, 2u);
    EXPECT_THROW(parse_args(argv_of({})), InvalidValue);
}

TEST(Parse, FlagsOverrideConfigOverrideDefaults) {
    TempDir dir("precedence");
    {
        std::ofstream c(dir.str("c.cfg"));
        c << "# comment\nlearning_rate = 1e-3\nbatch-size=8\nembed_dim=16\n";
    }
    const auto s = parse_args(argv_of({"train", "--config", dir.str("c.cfg"), "--lr", "5e-4"}));
    EXPECT_EQ(s.train.learning_rate, 5e-4);
    EXPECT_EQ(s.train.batch_size, 8u);
    EXPECT_EQ(s.model.embed_dim, 16u);
    EXPECT_EQ(s.overrides.at("learning_rate"), "5e-4");
    EXPECT_EQ(s.overrides.count("batch_size"), 0u);
}

TEST(Parse, Errors) {
    EXPECT_THROW(parse_args(argv_of({"train", "--blocks", "-1"})), InvalidValue);
    EXPECT_THROW(parse_args(argv_of({"train", "--blocks", "two"})), InvalidValue);
    EXPECT_THROW(parse_args(argv_of({"train", "--no-such-flag", "1"})), UnknownFlag);
    EXPECT_THROW(parse_args(argv_of({"train", "--config", "/nonexistent/c.cfg"})), MissingConfig);
    EXPECT_THROW(parse_args(argv_of({"frobnicate"})), std::exception);

    TempDir dir("badkey");
    {
        std::ofstream c(dir.str("c.cfg"));
        c << "warp_factor=9\n";
    }
    EXPECT_THROW(parse_args(argv_of({"train", "--config", dir.str("c.cfg")})), UnknownFlag);
}

TEST(Parse, SimulateEcho) {
    const auto s = parse_args(argv_of({"simulate", "--L", "8", "--nu", "1", "--mu", "0.5"}));
    const EnsembleSpec e = s.simulate.first();
    EXPECT_EQ(e.n_blocks, 8u);
    EXPECT_EQ(e.alpha, 1.0);
    EXPECT_EQ(e.nu, 1.0);
    EXPECT_EQ(e.mu, 0.5);
    EXPECT_EQ(s.simulate.blocks.size(), 1u);
}

TEST(Parse, ModelSwitches) {
    const auto s = parse_args(argv_of({"train", "--gate", "false", "--input-sign", "+", "--delta", "0"}));
    EXPECT_FALSE(s.model.gate_enabled);
    EXPECT_EQ(s.model.input_sign, Sign::plus);
    EXPECT_EQ(s.model.delta, 0);
}

TEST(Ablation, GridIsTheEightCombinations) {
    const auto g = ablation_grid();
    ASSERT_EQ(g.size(), 8u);
    std::set<std::tuple<Sign, Sign, bool>> seen;
    for (const auto& v : g) seen.insert({v.input_sign, v.output_sign, v.gate});
    EXPECT_EQ(seen.size(), 8u);
    EXPECT_EQ(g.front().input_sign, Sign::minus);
    EXPECT_TRUE(g.front().gate);
}

TEST(Dispatch, SimulateWritesPassingCsv) {
    TempDir dir("simulate");
    ASSERT_EQ(run_dispatch(argv_of({"simulate", "--out", dir.str(), "--trials", "20000"})), 0);
    const std::string csv = read_all(dir.str("simulation.csv"));
    EXPECT_EQ(line_count(dir.str("simulation.csv")), 25u);
    EXPECT_EQ(csv.find(",false"), std::string::npos);
    const std::string echo = read_all(dir.str("config.txt"));
    EXPECT_NE(echo.find("version="), std::string::npos);
    EXPECT_NE(echo.find("seed="), std::string::npos);
}

TEST(Dispatch, SynthThenTrainEvalDecompose) {
    TempDir dir("pipeline");
    ASSERT_EQ(run_dispatch(argv_of({"synth", "--out", dir.str("synth"), "--length", "400", "--variates", "2"})), 0);
    const std::string data = dir.str("synth/data.csv");
    EXPECT_EQ(line_count(data), 401u);

    ASSERT_EQ(run_dispatch(small_run("train", dir.str("train"), {"--data", data, "--blocks", "3"})), 0);
    for (const char* f : {"config.txt", "checkpoint.txt", "run_report.txt", "metrics.csv"})
        EXPECT_TRUE(fs::exists(dir.str(std::string("train/") + f))) << f;
    EXPECT_EQ(line_count(dir.str("train/metrics.csv")), 2u);

    const std::string ckpt = dir.str("train/checkpoint.txt");
    ASSERT_EQ(run_dispatch(argv_of({"eval", "--out", dir.str("eval"), "--data", data, "--checkpoint", ckpt})), 0);
    EXPECT_EQ(line_count(dir.str("eval/metrics.csv")), 3u);

    ASSERT_EQ(run_dispatch(argv_of({"decompose", "--out", dir.str("dec"), "--data", data, "--checkpoint", ckpt,
                                    "--window", "2"})),
              0);
    // 2 * L * D * H rows plus a header
    EXPECT_EQ(line_count(dir.str("dec/block_outputs.csv")), 2u * 3 * 2 * 6 + 1);
    EXPECT_EQ(line_count(dir.str("dec/attention.csv")), 3u * 2 * 2 * 2 + 1);
}

TEST(Dispatch, TrainIsReproducible) {
    TempDir dir("repro");
    ASSERT_EQ(run_dispatch(small_run("train", dir.str("a"))), 0);
    ASSERT_EQ(run_dispatch(small_run("train", dir.str("b"))), 0);
    EXPECT_EQ(read_all(dir.str("a/checkpoint.txt")), read_all(dir.str("b/checkpoint.txt")));
    EXPECT_EQ(read_all(dir.str("a/metrics.csv")), read_all(dir.str("b/metrics.csv")));
}

TEST(Dispatch, AblateWritesEightRows) {
    TempDir dir("ablate");
    ASSERT_EQ(run_dispatch(small_run("ablate", dir.str())), 0);
    const std::string csv = read_all(dir.str("ablation.csv"));
    EXPECT_EQ(line_count(dir.str("ablation.csv")), 9u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "input_sign,output_sign,gate,best_epoch,mse,mae,rmsp,mape,smape,mase,q25,q50,q75,overall");
    EXPECT_NE(csv.find("-X,-Y,gate,"), std::string::npos);
    EXPECT_NE(csv.find("+X,+Y,no-gate,"), std::string::npos);
}

TEST(Dispatch, ErrorsAreCategorized) {
    TempDir dir("errors");
    std::string err;
    EXPECT_EQ(run_dispatch(argv_of({"eval", "--out", dir.str()}), &err), 2);
    EXPECT_NE(err.find("cli/MissingConfig"), std::string::npos) << err;
    EXPECT_EQ(run_dispatch(argv_of({"train", "--out", dir.str(), "--data", "/nonexistent.csv"}), &err), 3);
    EXPECT_NE(err.find("data/IoError"), std::string::npos) << err;
}

TEST(Run, UsageErrorsExitTwo) {
    std::ostringstream out, err;
    std::vector<std::string> args{"minusformer", "train", "--blocks", "-1"};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    EXPECT_EQ(run(static_cast<int>(argv.size()), argv.data(), out, err), 2);
    EXPECT_NE(err.str().find("cli/InvalidValue"), std::string::npos) << err.str();
}

TEST(Run, HelpListsEveryFlag) {
    try {
        parse_args(argv_of({"train", "--help"}));
        FAIL();
    } catch (const HelpRequested& h) {
        for (const char* flag : {"--config", "--lr", "--blocks", "--input-sign", "--mu"})
            EXPECT_NE(h.text.find(flag), std::string::npos) << flag;
    }
}
