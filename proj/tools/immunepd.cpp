// SPDX-License-Identifier: Apache-2.0
//
// immunepd <simulate|train|compare|gradcheck|sweep> [--config FILE] [--out DIR]
//          [--seed N] [--set key=value ...]

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "immunepd/commands.hpp"

namespace {

struct Options {
    std::string config_path;
    std::string out_dir;
    std::string seed;
    std::vector<std::string> overrides;
};

int dispatch(const std::string& command, const Options& opts) {
    using namespace immunepd;

    std::string text;
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) {
            std::cerr << "config error: cannot read '" << opts.config_path << "'\n";
            return kExitConfig;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }

    // Flags win over file keys; the dedicated flags win over --set.
    std::vector<std::string> overrides = opts.overrides;
    if (!opts.seed.empty()) overrides.push_back("train.seed=" + opts.seed);
    if (!opts.out_dir.empty()) overrides.push_back("output.dir=" + opts.out_dir);

    ParseResult parsed;
    try {
        parsed = parse_config(text, overrides);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << '\n';

    const RunConfig& cfg = parsed.config;
    if (command == "simulate") return cmd_simulate(cfg, std::cout);
    if (command == "train") return cmd_train(cfg, std::cout);
    if (command == "compare") return cmd_compare(cfg, std::cout);
    if (command == "gradcheck") return cmd_gradcheck(cfg, std::cout);
    return cmd_sweep(cfg, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural immune PD tracking control of a DC actuating mechanism"};
    app.require_subcommand(1);

    Options opts;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "Run one closed-loop episode and write episode.csv"},
        {"train", "Train the suppressor network; write train.csv and weights.txt"},
        {"compare", "Compare two controllers on the same episode"},
        {"gradcheck", "Check backward-pass gradients against finite differences"},
        {"sweep", "Episode metrics over a grid of (K_P, K_D)"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config_path, "Key-value configuration file");
        sub->add_option("--out", opts.out_dir, "Output directory (output.dir)");
        sub->add_option("--seed", opts.seed, "Random seed (train.seed)");
        sub->add_option("--set", opts.overrides, "Override a key: --set key=value")->allow_extra_args(false);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : immunepd::kExitConfig;
    }
    return dispatch(app.get_subcommands().front()->get_name(), opts);
}
