// rmwarn: synthetic data, training, calibration, detection, evaluation and
// replication from a single config file.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric/training error.

#include "rmwarn/commands.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string out = ".";
    std::string checkpoint;
    std::string calibration;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "run configuration file")->required();
    cmd->add_option("--seed", c.seed, "override the config seed");
    cmd->add_option("--workers", c.workers, "worker threads (replicate)")->check(CLI::PositiveNumber);
    cmd->add_option("--out", c.out, "output directory");
}

rmwarn::RunConfig load(const Common& c) {
    auto cfg = rmwarn::load_config(c.config);
    if (c.seed) rmwarn::override_seed(cfg, *c.seed);
    return cfg;
}

rmwarn::RmModel load_model(const Common& c) {
    if (c.checkpoint.empty()) throw rmwarn::ConfigError("--checkpoint is required");
    return rmwarn::load_checkpoint(c.checkpoint);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reverse-martingale precipitation forecasting and early warning"};
    app.require_subcommand(1);
    Common c;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and manifest");
    auto* train = app.add_subcommand("train", "train a model; writes model.ckpt and loss_log.csv");
    auto* calibrate = app.add_subcommand("calibrate", "fit the null and the SR threshold; writes calibration.csv and null.csv");
    auto* detect = app.add_subcommand("detect", "run the SR detector; writes trace.csv and alarms.csv");
    auto* evaluate = app.add_subcommand("evaluate", "score forecasts against baselines; writes metrics.csv");
    auto* replicate = app.add_subcommand("replicate", "repeat training over seeds; writes replicate.csv");
    for (auto* cmd : {synth, train, calibrate, detect, evaluate, replicate}) add_common(cmd, c);
    for (auto* cmd : {calibrate, detect, evaluate}) cmd->add_option("--checkpoint", c.checkpoint, "model checkpoint")->required();
    detect->add_option("--calibration", c.calibration, "calibration.csv from calibrate")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const auto cfg = load(c);
        const std::filesystem::path out = c.out;
        if (synth->parsed()) {
            rmwarn::cmd_synth(cfg, out);
        } else if (train->parsed()) {
            rmwarn::cmd_train(cfg, out);
        } else if (calibrate->parsed()) {
            rmwarn::cmd_calibrate(cfg, load_model(c), out);
        } else if (detect->parsed()) {
            rmwarn::cmd_detect(cfg, load_model(c), rmwarn::read_calibration(c.calibration), out);
        } else if (evaluate->parsed()) {
            rmwarn::cmd_evaluate(cfg, load_model(c), out);
        } else if (replicate->parsed()) {
            rmwarn::cmd_replicate(cfg, c.workers, out);
        }
    } catch (const rmwarn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const rmwarn::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const rmwarn::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
