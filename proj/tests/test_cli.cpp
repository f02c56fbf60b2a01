#include "rmwarn/commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace rmwarn;
namespace fs = std::filesystem;

namespace {

const char* kBaseConfig = R"(data = series.csv
channels = P, T, q, Omega
target_site = S01
radius_km = 25
cell_kind = elman
hidden_dim = 4
head_hidden = 4
leads = 1
epochs = 3
warmup = 1
lambda0 = 0.1
gamma = 0.1
learning_rate = 0.01
seq_len = 32
target_arl0 = 30
n_boot = 100
block_len = 10
detection_window = 30
replications = 2
purge_gap = 5
synth.n_sites = 3
synth.steps = 1200
synth.unit = day
seed = 3
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

class Cli : public ::testing::Test {
protected:
    static fs::path dir;

    static void SetUpTestSuite() {
        dir = fs::temp_directory_path() / ("rmwarn_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        spit(dir / "base.conf", kBaseConfig);
        ASSERT_EQ(run("synth --config " + (dir / "base.conf").string() + " --out " + dir.string()), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(dir); }

    static int run(const std::string& args) {
        const std::string cmd = std::string(RMWARN_CLI) + " " + args + " >/dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }

    // Writes base config plus extra lines into a file beside series.csv.
    static fs::path config(const std::string& name, const std::string& extra) {
        const auto p = dir / name;
        spit(p, std::string(kBaseConfig) + extra);
        return p;
    }

    static fs::path out_dir(const std::string& name) {
        const auto p = dir / name;
        fs::create_directories(p);
        return p;
    }
};

fs::path Cli::dir;

}  // namespace

TEST_F(Cli, SynthWritesSeriesAndManifest) {
    EXPECT_TRUE(fs::exists(dir / "series.csv"));
    EXPECT_NE(slurp(dir / "manifest.txt").find("change = none"), std::string::npos);
    const auto out = out_dir("planted");
    const auto cfg = config("planted.conf", "change.kind = drought\nchange.onset = 700\nchange.wet_prob_multiplier = 0.2\n");
    ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + out.string()), 0);
    EXPECT_NE(slurp(out / "manifest.txt").find("true_onset = 700\n"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
    EXPECT_EQ(run("train --config " + (dir / "missing.conf").string()), 2);
    EXPECT_EQ(run("train --config " + config("unknown.conf", "bogus_key = 1\n").string()), 2);
    EXPECT_EQ(run("train --config " + config("range.conf", "n_boot = 10\n").string()), 2);
    EXPECT_EQ(run("train"), 2);
    // A config naming a file that does not exist is a config mistake, not bad data.
    EXPECT_EQ(run("train --config " + config("nodata.conf", "data = nowhere.csv\n").string()), 2);
    EXPECT_EQ(run("calibrate --config " + (dir / "base.conf").string()), 2);  // no --checkpoint
}

TEST_F(Cli, DataErrorsExitThree) {
    spit(dir / "garbled.csv", "when,where\n1,2\n");
    EXPECT_EQ(run("train --config " + config("garbled.conf", "data = garbled.csv\n").string() + " --out " + out_dir("d1").string()), 3);
    auto text = slurp(dir / "series.csv");
    const auto row = text.find('\n') + 1;
    const auto p_field = text.find(',', text.find(',', text.find(',', row) + 1) + 1) + 1;
    text.replace(p_field, text.find(',', p_field) - p_field, "-1");
    spit(dir / "negative.csv", text);
    EXPECT_EQ(run("train --config " + config("neg.conf", "data = negative.csv\n").string() + " --out " + out_dir("d2").string()), 3);
}

TEST_F(Cli, NumericErrorsExitFour) {
    auto series = load_series((dir / "series.csv").string(), {});
    const auto c = series.channel_index("T");
    for (std::size_t s = 0; s < series.n_sites(); ++s)
        for (std::size_t t = 0; t < series.n_times(); ++t) series.set(s, t, c, 20.0);
    {
        std::ofstream f(dir / "flat.csv");
        write_series(f, series);
    }
    EXPECT_EQ(run("train --config " + config("flat.conf", "data = flat.csv\n").string() + " --out " + out_dir("n1").string()), 4);
    EXPECT_EQ(run("train --config " + config("diverge.conf", "learning_rate = 1e300\n").string() + " --out " + out_dir("n2").string()), 4);
}

TEST_F(Cli, TrainIsByteDeterministic) {
    const auto a = out_dir("ta"), b = out_dir("tb");
    ASSERT_EQ(run("train --config " + (dir / "base.conf").string() + " --out " + a.string()), 0);
    ASSERT_EQ(run("train --config " + (dir / "base.conf").string() + " --out " + b.string()), 0);
    EXPECT_EQ(slurp(a / "model.ckpt"), slurp(b / "model.ckpt"));
    EXPECT_EQ(slurp(a / "loss_log.csv"), slurp(b / "loss_log.csv"));
    EXPECT_TRUE(slurp(a / "loss_log.csv").starts_with("epoch,L_task,L_RM,lambda\n"));
    const auto c = out_dir("tc");
    ASSERT_EQ(run("train --config " + (dir / "base.conf").string() + " --seed 4 --out " + c.string()), 0);
    EXPECT_NE(slurp(a / "model.ckpt"), slurp(c / "model.ckpt"));
}

TEST_F(Cli, CheckpointRoundTripsThroughCli) {
    const auto a = out_dir("rt");
    ASSERT_EQ(run("train --config " + (dir / "base.conf").string() + " --out " + a.string()), 0);
    const auto m = load_checkpoint((a / "model.ckpt").string());
    save_checkpoint((a / "again.ckpt").string(), m);
    EXPECT_EQ(slurp(a / "model.ckpt"), slurp(a / "again.ckpt"));
}

TEST_F(Cli, NoRegularizedEpochsGiveZeroLambdaColumn) {
    const auto a = out_dir("k0");
    ASSERT_EQ(run("train --config " + config("k0.conf", "warmup = 3\n").string() + " --out " + a.string()), 0);
    std::istringstream log(slurp(a / "loss_log.csv"));
    std::string line;
    std::getline(log, line);
    int rows = 0;
    while (std::getline(log, line)) {
        EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");
        ++rows;
    }
    EXPECT_EQ(rows, 3);
}

TEST_F(Cli, PipelineWritesExpectedFiles) {
    const auto a = out_dir("pipe");
    const auto base = (dir / "base.conf").string();
    ASSERT_EQ(run("train --config " + base + " --out " + a.string()), 0);
    const auto ckpt = (a / "model.ckpt").string();
    ASSERT_EQ(run("calibrate --config " + base + " --checkpoint " + ckpt + " --out " + a.string()), 0);
    ASSERT_EQ(run("detect --config " + base + " --checkpoint " + ckpt + " --calibration " + (a / "calibration.csv").string() +
                  " --out " + a.string()),
              0);
    ASSERT_EQ(run("evaluate --config " + base + " --checkpoint " + ckpt + " --out " + a.string()), 0);
    EXPECT_TRUE(slurp(a / "calibration.csv").starts_with("target_arl0,B_star,ci_lo,ci_hi,n_boot,seed\n"));
    EXPECT_TRUE(slurp(a / "null.csv").starts_with("month,mu0,sigma0,psi0,eta\n"));
    EXPECT_TRUE(slurp(a / "trace.csv").starts_with("time,r_t,R_t,B\n"));
    EXPECT_TRUE(slurp(a / "alarms.csv").starts_with("detector,time,statistic,threshold,event_kind\n"));
    EXPECT_TRUE(slurp(a / "metrics.csv").starts_with("metric,lead,model,mean,sd,n_replications\n"));

    const auto cal = read_calibration(a / "calibration.csv");
    EXPECT_GT(cal.threshold.b_star, 0.0);
    EXPECT_EQ(cal.threshold.n_boot, 100);
}

TEST_F(Cli, SingleReplicationHasZeroSpread) {
    const auto a = out_dir("rep1");
    ASSERT_EQ(run("replicate --config " + config("rep1.conf", "replications = 1\n").string() + " --out " + a.string()), 0);
    std::istringstream f(slurp(a / "replicate.csv"));
    std::string line;
    std::getline(f, line);
    int rows = 0;
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        ASSERT_EQ(cells.size(), 6u);
        if (cells[3] != "NA") {
            EXPECT_EQ(cells[4], "0");
        }
        EXPECT_EQ(cells[5], "1");
        ++rows;
    }
    EXPECT_GT(rows, 0);
}

TEST_F(Cli, ReplicateIndependentOfWorkerCount) {
    const auto a = out_dir("w1"), b = out_dir("w3");
    const auto base = (dir / "base.conf").string();
    ASSERT_EQ(run("replicate --config " + base + " --workers 1 --out " + a.string()), 0);
    ASSERT_EQ(run("replicate --config " + base + " --workers 3 --out " + b.string()), 0);
    EXPECT_EQ(slurp(a / "replicate.csv"), slurp(b / "replicate.csv"));
}
