// SPDX-License-Identifier: Apache-2.0
//
// Batch commands behind the command-line front end. Each one reads a
// validated RunConfig, writes its CSV outputs plus the effective
// configuration into the output directory, and returns a process exit code.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "immunepd/config.hpp"
#include "immunepd/gradcheck.hpp"
#include "immunepd/training.hpp"

namespace immunepd {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumerical = 2 };

inline constexpr double kGradcheckTolerance = 1e-5;

/// Raised for unreadable inputs or unwritable outputs; maps to exit code 1.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace cmd_detail {

namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    body(out);
    out.flush();
    if (!out) throw IoError("failed while writing '" + path.string() + "'");
}

inline fs::path prepare_output(const RunConfig& cfg) {
    const fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    write_file(dir / "config.effective.ini", [&](std::ostream& o) { o << effective_config_text(cfg); });
    return dir;
}

inline SuppressorNet load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("net.weights", 0, "checkpoint '" + path + "' does not exist or is unreadable");
    try {
        return read_checkpoint(in);
    } catch (const std::runtime_error& e) {
        throw ConfigError("net.weights", 0, "checkpoint '" + path + "': " + e.what());
    }
}

/// The configured checkpoint, or freshly initialised weights.
inline SuppressorNet suppressor_for(const RunConfig& cfg) {
    if (!cfg.weights_path.empty()) return load_checkpoint(cfg.weights_path);
    return {cfg.topology, init_weights(cfg.topology, cfg.init_scale, cfg.seed)};
}

inline bool needs_network(const EpisodeConfig& ep) {
    return ep.controller == Controller::NeuralImmunePd && ep.suppressor;
}

inline void print_metrics(std::ostream& log, const std::string& label, const Metrics& m) {
    log << std::left << std::setw(22) << label << " rmse=" << m.rmse << " max|e|=" << m.max_abs_e
        << " settle=" << m.settle_time << '\n';
}

/// Runs a command body and maps failures onto exit codes.
template <typename Body>
int guarded(std::ostream& log, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        log << "i/o error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const StepFailure& e) {
        log << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::domain_error& e) {
        log << "invariant violated: " << e.what() << '\n';
        return kExitConfig;
    }
}

}  // namespace cmd_detail

/// Runs one episode with the configured controller; writes episode.csv.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    using namespace cmd_detail;
    return guarded(log, [&] {
        const auto dir = prepare_output(cfg);
        std::optional<SuppressorNet> net;
        if (needs_network(cfg.episode)) net = suppressor_for(cfg);
        const EpisodeLog episode = run_episode(cfg.episode, cfg.plant(), cfg.nominal(), cfg.gains, net ? &*net : nullptr);
        write_file(dir / "episode.csv", [&](std::ostream& o) { write_episode_csv(o, episode); });
        print_metrics(log, std::string(to_string(cfg.episode.controller)), metrics(episode));
        return static_cast<int>(kExitOk);
    });
}

/// Trains the suppressor; writes train.csv, weights.txt and the episode of
/// the last epoch.
inline int cmd_train(const RunConfig& cfg, std::ostream& log) {
    using namespace cmd_detail;
    return guarded(log, [&] {
        const auto dir = prepare_output(cfg);
        const TrainReport report = train(cfg.episode, cfg.plant(), cfg.nominal(), cfg.gains, cfg.train_options());
        write_file(dir / "train.csv", [&](std::ostream& o) { write_train_csv(o, report); });
        write_file(dir / "weights.txt", [&](std::ostream& o) { write_checkpoint(o, report.net.topology, report.net.weights); });
        write_file(dir / "episode.csv", [&](std::ostream& o) { write_episode_csv(o, report.final_log); });
        const auto& first = report.epochs.front();
        const auto& last = report.epochs.back();
        log << "epochs " << first.epoch << ".." << last.epoch << ": J " << first.J << " -> " << last.J
            << ", rmse " << first.rmse << " -> " << last.rmse << '\n';
        if (report.diverged) {
            log << "numerical failure: training diverged at epoch " << last.epoch << '\n';
            return static_cast<int>(kExitNumerical);
        }
        return static_cast<int>(kExitOk);
    });
}

/// Runs two controllers on the same episode; writes compare_left.csv,
/// compare_right.csv and summary.csv. A neural side uses net.weights, or
/// trains first when no checkpoint is configured; a baseline side is
/// grid-tuned unless baseline.tune is off.
inline int cmd_compare(const RunConfig& cfg, std::ostream& log) {
    using namespace cmd_detail;
    return guarded(log, [&] {
        const auto dir = prepare_output(cfg);
        const LumpedParams lp = cfg.plant();
        const NominalParams np = cfg.nominal();

        std::optional<SuppressorNet> net;
        std::optional<ImmunePidBaselineParams> baseline;
        auto make_choice = [&](Controller kind, const char* side) {
            ControllerChoice choice{kind, nullptr, cfg.episode.baseline, std::string(side) + ":" + std::string(to_string(kind))};
            if (kind == Controller::NeuralImmunePd) {
                if (!net) {
                    if (!cfg.weights_path.empty()) {
                        net = load_checkpoint(cfg.weights_path);
                    } else {
                        const TrainReport report = train(cfg.episode, lp, np, cfg.gains, cfg.train_options());
                        if (report.diverged) throw StepFailure("training diverged before comparison");
                        log << "trained suppressor: J " << report.epochs.front().J << " -> " << report.epochs.back().J << '\n';
                        net = report.net;
                    }
                }
                choice.net = &*net;
            }
            if (kind == Controller::ImmunePidBaseline) {
                if (!baseline) {
                    baseline = cfg.episode.baseline;
                    if (cfg.tune_baseline) {
                        const TunedBaseline tuned = tune_baseline(cfg.episode, lp, np, cfg.gains, cfg.episode.baseline);
                        baseline = tuned.params;
                        log << "tuned baseline: K0=" << tuned.params.K0 << " eta=" << tuned.params.eta
                            << " sigma=" << tuned.params.sigma << '\n';
                    }
                }
                choice.baseline = *baseline;
            }
            return choice;
        };

        const ControllerChoice left = make_choice(cfg.compare_left, "left");
        const ControllerChoice right = make_choice(cfg.compare_right, "right");
        const Comparison cmp = compare(cfg.episode, lp, np, cfg.gains, left, right);

        write_file(dir / "compare_left.csv", [&](std::ostream& o) { write_episode_csv(o, cmp.left.log); });
        write_file(dir / "compare_right.csv", [&](std::ostream& o) { write_episode_csv(o, cmp.right.log); });
        write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, cmp); });
        print_metrics(log, cmp.left.label, cmp.left.metrics);
        print_metrics(log, cmp.right.label, cmp.right.metrics);
        log << "lower rmse: " << cmp.better() << '\n';
        return static_cast<int>(kExitOk);
    });
}

struct GradcheckSummary {
    std::vector<GradcheckResult> runs;
    double max_rel_error = 0.0;
};

inline GradcheckSummary run_gradcheck(const RunConfig& cfg) {
    std::vector<int> ps = cfg.gradcheck_p;
    if (ps.empty()) ps.push_back(cfg.topology.p);
    GradcheckSummary summary;
    const BpttOptions opts{cfg.gradcheck_corrupt};
    for (int p : ps) {
        NetTopology topo = cfg.topology;
        topo.p = p;
        for (int i = 0; i < cfg.gradcheck_seeds; ++i) {
            const auto r = gradcheck(topo, cfg.gradcheck_steps, cfg.seed + static_cast<std::uint64_t>(i), opts);
            summary.max_rel_error = std::max(summary.max_rel_error, r.max_rel_error);
            summary.runs.push_back(r);
        }
    }
    return summary;
}

/// Compares backward-pass gradients against finite differences on random
/// teacher-forced episodes; writes gradcheck.csv. Exit 2 above 1e-5.
inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
    using namespace cmd_detail;
    return guarded(log, [&] {
        const auto dir = prepare_output(cfg);
        const GradcheckSummary summary = run_gradcheck(cfg);
        write_file(dir / "gradcheck.csv", [&](std::ostream& o) {
            o.precision(17);
            o << "p,seed,max_rel_error\n";
            for (const auto& r : summary.runs) o << r.p << ',' << r.seed << ',' << r.max_rel_error << '\n';
        });
        log << "max relative gradient error: " << summary.max_rel_error << '\n';
        return static_cast<int>(summary.max_rel_error < kGradcheckTolerance ? kExitOk : kExitNumerical);
    });
}

struct SweepRow {
    Gains gains;
    bool critical = false;
    Metrics metrics;
};

/// One episode per grid point, run concurrently; results keep grid order.
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
    std::optional<SuppressorNet> net;
    if (cmd_detail::needs_network(cfg.episode)) net = cmd_detail::suppressor_for(cfg);
    const LumpedParams lp = cfg.plant();
    const NominalParams np = cfg.nominal();

    std::vector<std::future<SweepRow>> jobs;
    for (const Gains& g : cfg.sweep_grid)
        jobs.push_back(std::async(std::launch::async, [&, g] {
            return SweepRow{g, check_critical_damping(g),
                            metrics(run_episode(cfg.episode, lp, np, g, net ? &*net : nullptr))};
        }));
    std::vector<SweepRow> rows;
    for (auto& job : jobs) rows.push_back(job.get());
    return rows;
}

inline constexpr std::string_view kSweepCsvHeader = "K_P,K_D,critical,rmse,max_abs_e,settle_time";

/// Episode metrics for each (K_P, K_D) in sweep.grid; writes sweep.csv.
inline int cmd_sweep(const RunConfig& cfg, std::ostream& log) {
    using namespace cmd_detail;
    return guarded(log, [&] {
        const auto dir = prepare_output(cfg);
        const auto rows = run_sweep(cfg);
        write_file(dir / "sweep.csv", [&](std::ostream& o) {
            o.precision(17);
            o << kSweepCsvHeader << '\n';
            for (const auto& r : rows)
                o << r.gains.K_P << ',' << r.gains.K_D << ',' << (r.critical ? 1 : 0) << ',' << r.metrics.rmse << ','
                  << r.metrics.max_abs_e << ',' << r.metrics.settle_time << '\n';
        });
        for (const auto& r : rows) {
            std::ostringstream label;
            label << "K_P=" << r.gains.K_P << " K_D=" << r.gains.K_D << (r.critical ? " *" : "");
            print_metrics(log, label.str(), r.metrics);
        }
        return static_cast<int>(kExitOk);
    });
}

}  // namespace immunepd
