// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat key-value document.
//
//   # comment
//   [gains]
//   K_P = 100
//   K_D = 20
//
// Keys live in sections; a key outside any section (or a `--set` override)
// may use its bare name when that name is unique, otherwise `section.key`.
// Absent keys take the defaults below, which reproduce the benchmark set-up
// (a2 = 7.6, a1 = 0.0234, a0 = 0.26, K_P = 100, K_D = 20).
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "immunepd/episode.hpp"
#include "immunepd/training.hpp"

namespace immunepd {

/// Config problem tied to a key and, when read from a file, a line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, int line, const std::string& message)
        : std::runtime_error(format(key, line, message)), key_(std::move(key)), line_(line) {}

    [[nodiscard]] const std::string& key() const { return key_; }
    [[nodiscard]] int line() const { return line_; }

private:
    static std::string format(const std::string& key, int line, const std::string& message) {
        std::string out;
        if (line > 0) out += "line " + std::to_string(line) + ": ";
        if (!key.empty()) out += "'" + key + "': ";
        return out + message;
    }

    std::string key_;
    int line_;
};

struct RunConfig {
    std::optional<PhysicalParams> physical;  ///< when set, `lumped` is derived from it
    LumpedParams lumped;
    std::optional<double> a2_hat;  ///< defaults to the plant's a2
    std::optional<double> a1_hat;  ///< defaults to the plant's a1
    Gains gains;

    NetTopology topology;
    double init_scale = 0.1;
    std::string weights_path;  ///< checkpoint to load instead of initialising

    double eta = 1e-3;
    int epochs = 50;
    std::uint64_t seed = 0;
    double error_sign = 1.0;

    EpisodeConfig episode;
    bool tune_baseline = true;

    Controller compare_left = Controller::NeuralImmunePd;
    Controller compare_right = Controller::ImmunePidBaseline;

    int gradcheck_seeds = 10;
    int gradcheck_steps = 20;
    std::vector<int> gradcheck_p;  ///< empty: use the configured topology
    bool gradcheck_corrupt = false;

    std::vector<Gains> sweep_grid{{25.0, 10.0}, {100.0, 20.0}, {400.0, 40.0}};

    std::string out_dir = "out";

    bool operator==(const RunConfig&) const = default;

    [[nodiscard]] LumpedParams plant() const { return physical ? lump(*physical) : lumped; }
    [[nodiscard]] NominalParams nominal() const {
        const LumpedParams lp = plant();
        return {a2_hat.value_or(lp.a2), a1_hat.value_or(lp.a1)};
    }
    /// Same configuration with the nominal defaults written out.
    [[nodiscard]] RunConfig resolved() const {
        RunConfig out = *this;
        const NominalParams np = nominal();
        out.a2_hat = np.a2_hat;
        out.a1_hat = np.a1_hat;
        return out;
    }
    [[nodiscard]] TrainOptions train_options() const { return {topology, epochs, eta, seed, init_scale, error_sign}; }
};

struct ParseResult {
    RunConfig config;
    std::vector<std::string> warnings;
};

namespace config_detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

inline double parse_double(std::string_view text) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw std::invalid_argument("expected a finite number, got '" + std::string(text) + "'");
    return v;
}

template <typename Int>
Int parse_integer(std::string_view text) {
    Int v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected an integer, got '" + std::string(text) + "'");
    return v;
}

inline bool parse_bool(std::string_view text) {
    if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
    if (text == "false" || text == "off" || text == "no" || text == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + std::string(text) + "'");
}

inline std::vector<std::string_view> split_list(std::string_view text) {
    std::vector<std::string_view> items;
    while (true) {
        const auto comma = text.find(',');
        const auto item = trim(text.substr(0, comma));
        if (!item.empty()) items.push_back(item);
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return items;
}

enum class Block { None, Lumped, Physical, Nominal };

struct KeySpec {
    std::string section;
    std::string name;
    Block block = Block::None;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;

    [[nodiscard]] std::string full_name() const { return section + "." + name; }
};

// Accessors are generic lambdas returning a reference, so one definition
// serves both the setter and the getter.

template <typename Access>
KeySpec number(std::string section, std::string name, Access access, Block block = Block::None) {
    return {std::move(section), std::move(name), block,
            [access](RunConfig& c, std::string_view v) { access(c) = parse_double(v); },
            [access](const RunConfig& c) { return format_double(access(c)); }};
}

template <typename Int, typename Access>
KeySpec integer(std::string section, std::string name, Access access) {
    return {std::move(section), std::move(name), Block::None,
            [access](RunConfig& c, std::string_view v) { access(c) = parse_integer<Int>(v); },
            [access](const RunConfig& c) { return std::to_string(access(c)); }};
}

template <typename Access>
KeySpec boolean(std::string section, std::string name, Access access) {
    return {std::move(section), std::move(name), Block::None,
            [access](RunConfig& c, std::string_view v) { access(c) = parse_bool(v); },
            [access](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); }};
}

template <typename Access>
KeySpec text(std::string section, std::string name, Access access) {
    return {std::move(section), std::move(name), Block::None,
            [access](RunConfig& c, std::string_view v) { access(c) = std::string(v); },
            [access](const RunConfig& c) { return std::string(access(c)); }};
}

template <typename Access>
KeySpec optional_number(std::string section, std::string name, Access access, Block block = Block::None) {
    return {std::move(section), std::move(name), block,
            [access](RunConfig& c, std::string_view v) { access(c) = parse_double(v); },
            [access](const RunConfig& c) { return format_double(*access(c)); }};
}

template <typename Access>
KeySpec controller(std::string section, std::string name, Access access) {
    return {std::move(section), std::move(name), Block::None,
            [access](RunConfig& c, std::string_view v) { access(c) = parse_controller(v); },
            [access](const RunConfig& c) { return std::string(to_string(access(c))); }};
}

template <typename Access>
KeySpec physical(std::string name, Access access) {
    return {"physical", std::move(name), Block::Physical,
            [access](RunConfig& c, std::string_view v) {
                if (!c.physical) c.physical.emplace();
                access(*c.physical) = parse_double(v);
            },
            [access](const RunConfig& c) { return format_double(access(*c.physical)); }};
}

inline const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = [] {
        std::vector<KeySpec> t;
        t.push_back(number("plant", "a2", [](auto& c) -> auto& { return c.lumped.a2; }, Block::Lumped));
        t.push_back(number("plant", "a1", [](auto& c) -> auto& { return c.lumped.a1; }, Block::Lumped));
        t.push_back(number("plant", "a0", [](auto& c) -> auto& { return c.lumped.a0; }, Block::Lumped));

        t.push_back(physical("J_c", [](auto& p) -> auto& { return p.J_c; }));
        t.push_back(physical("m", [](auto& p) -> auto& { return p.m; }));
        t.push_back(physical("r", [](auto& p) -> auto& { return p.r; }));
        t.push_back(physical("B", [](auto& p) -> auto& { return p.B; }));
        t.push_back(physical("g", [](auto& p) -> auto& { return p.g; }));
        t.push_back(physical("J_m", [](auto& p) -> auto& { return p.J_m; }));
        t.push_back(physical("B_m", [](auto& p) -> auto& { return p.B_m; }));
        t.push_back(physical("j", [](auto& p) -> auto& { return p.j; }));
        t.push_back(physical("R", [](auto& p) -> auto& { return p.R; }));
        t.push_back(physical("L", [](auto& p) -> auto& { return p.L; }));
        t.push_back(physical("k_t", [](auto& p) -> auto& { return p.k_t; }));
        t.push_back(physical("k_v", [](auto& p) -> auto& { return p.k_v; }));

        t.push_back(optional_number("nominal", "a2_hat", [](auto& c) -> auto& { return c.a2_hat; }, Block::Nominal));
        t.push_back(optional_number("nominal", "a1_hat", [](auto& c) -> auto& { return c.a1_hat; }, Block::Nominal));

        t.push_back(number("gains", "K_P", [](auto& c) -> auto& { return c.gains.K_P; }));
        t.push_back(number("gains", "K_D", [](auto& c) -> auto& { return c.gains.K_D; }));

        t.push_back(integer<int>("net", "p", [](auto& c) -> auto& { return c.topology.p; }));
        t.push_back(number("net", "T", [](auto& c) -> auto& { return c.topology.T; }));
        t.push_back(number("net", "a", [](auto& c) -> auto& { return c.topology.a; }));
        t.push_back(number("net", "init_scale", [](auto& c) -> auto& { return c.init_scale; }));
        t.push_back(number("net", "input_scale_e", [](auto& c) -> auto& { return c.episode.input_scaling.e; }));
        t.push_back(number("net", "input_scale_e_dot", [](auto& c) -> auto& { return c.episode.input_scaling.e_dot; }));
        t.push_back({"net", "input_scale_u_dot", Block::None,
                     [](RunConfig& c, std::string_view v) {
                         if (v == "dt") c.episode.input_scaling.u_dot.reset();
                         else c.episode.input_scaling.u_dot = parse_double(v);
                     },
                     [](const RunConfig& c) {
                         const auto& f = c.episode.input_scaling.u_dot;
                         return f ? format_double(*f) : std::string("dt");
                     }});
        t.push_back(text("net", "weights", [](auto& c) -> auto& { return c.weights_path; }));

        t.push_back(number("train", "eta", [](auto& c) -> auto& { return c.eta; }));
        t.push_back(integer<int>("train", "epochs", [](auto& c) -> auto& { return c.epochs; }));
        t.push_back(integer<std::uint64_t>("train", "seed", [](auto& c) -> auto& { return c.seed; }));
        t.push_back(number("train", "error_sign", [](auto& c) -> auto& { return c.error_sign; }));

        t.push_back({"trajectory", "kind", Block::None,
                     [](RunConfig& c, std::string_view v) { c.episode.trajectory.kind = parse_trajectory_kind(v); },
                     [](const RunConfig& c) { return std::string(to_string(c.episode.trajectory.kind)); }});
        t.push_back(number("trajectory", "amplitude", [](auto& c) -> auto& { return c.episode.trajectory.amplitude; }));
        t.push_back(number("trajectory", "omega", [](auto& c) -> auto& { return c.episode.trajectory.omega; }));
        t.push_back(number("trajectory", "start", [](auto& c) -> auto& { return c.episode.trajectory.start; }));
        t.push_back(number("trajectory", "target", [](auto& c) -> auto& { return c.episode.trajectory.target; }));
        t.push_back(number("trajectory", "rise_time", [](auto& c) -> auto& { return c.episode.trajectory.rise_time; }));
        t.push_back(number("trajectory", "value", [](auto& c) -> auto& { return c.episode.trajectory.value; }));

        t.push_back(number("episode", "t0", [](auto& c) -> auto& { return c.episode.t0; }));
        t.push_back(number("episode", "tf", [](auto& c) -> auto& { return c.episode.tf; }));
        t.push_back(number("episode", "dt", [](auto& c) -> auto& { return c.episode.dt; }));
        t.push_back(number("episode", "theta0", [](auto& c) -> auto& { return c.episode.initial.theta; }));
        t.push_back(number("episode", "theta_dot0", [](auto& c) -> auto& { return c.episode.initial.theta_dot; }));
        t.push_back(controller("episode", "controller", [](auto& c) -> auto& { return c.episode.controller; }));
        t.push_back(boolean("episode", "suppressor", [](auto& c) -> auto& { return c.episode.suppressor; }));

        t.push_back(number("baseline", "K0", [](auto& c) -> auto& { return c.episode.baseline.K0; }));
        t.push_back(number("baseline", "eta", [](auto& c) -> auto& { return c.episode.baseline.eta; }));
        t.push_back(number("baseline", "sigma", [](auto& c) -> auto& { return c.episode.baseline.sigma; }));
        t.push_back(number("baseline", "Kp", [](auto& c) -> auto& { return c.episode.baseline.Kp_i; }));
        t.push_back(number("baseline", "Ki", [](auto& c) -> auto& { return c.episode.baseline.Ki_i; }));
        t.push_back(number("baseline", "Kd", [](auto& c) -> auto& { return c.episode.baseline.Kd_i; }));
        t.push_back(boolean("baseline", "tune", [](auto& c) -> auto& { return c.tune_baseline; }));

        t.push_back(controller("compare", "left", [](auto& c) -> auto& { return c.compare_left; }));
        t.push_back(controller("compare", "right", [](auto& c) -> auto& { return c.compare_right; }));

        t.push_back(integer<int>("gradcheck", "seeds", [](auto& c) -> auto& { return c.gradcheck_seeds; }));
        t.push_back(integer<int>("gradcheck", "steps", [](auto& c) -> auto& { return c.gradcheck_steps; }));
        t.push_back({"gradcheck", "p", Block::None,
                     [](RunConfig& c, std::string_view v) {
                         c.gradcheck_p.clear();
                         for (auto item : split_list(v)) c.gradcheck_p.push_back(parse_integer<int>(item));
                     },
                     [](const RunConfig& c) {
                         std::string out;
                         for (std::size_t i = 0; i < c.gradcheck_p.size(); ++i)
                             out += (i ? ", " : "") + std::to_string(c.gradcheck_p[i]);
                         return out;
                     }});
        t.push_back(boolean("gradcheck", "corrupt", [](auto& c) -> auto& { return c.gradcheck_corrupt; }));

        t.push_back({"sweep", "grid", Block::None,
                     [](RunConfig& c, std::string_view v) {
                         c.sweep_grid.clear();
                         for (auto item : split_list(v)) {
                             const auto colon = item.find(':');
                             if (colon == std::string_view::npos)
                                 throw std::invalid_argument("grid points are K_P:K_D, got '" + std::string(item) + "'");
                             c.sweep_grid.push_back({parse_double(trim(item.substr(0, colon))),
                                                     parse_double(trim(item.substr(colon + 1)))});
                         }
                     },
                     [](const RunConfig& c) {
                         std::string out;
                         for (std::size_t i = 0; i < c.sweep_grid.size(); ++i)
                             out += (i ? ", " : "") + format_double(c.sweep_grid[i].K_P) + ":" +
                                    format_double(c.sweep_grid[i].K_D);
                         return out;
                     }});

        t.push_back(text("output", "dir", [](auto& c) -> auto& { return c.out_dir; }));
        return t;
    }();
    return table;
}

inline const KeySpec& lookup(std::string_view section, std::string_view key, int line) {
    const auto& table = key_table();
    const auto dot = key.find('.');
    if (dot != std::string_view::npos) {
        section = key.substr(0, dot);
        key = key.substr(dot + 1);
    }
    if (!section.empty()) {
        for (const auto& spec : table)
            if (spec.section == section && spec.name == key) return spec;
        throw ConfigError(std::string(section) + "." + std::string(key), line, "unknown key");
    }
    const KeySpec* found = nullptr;
    for (const auto& spec : table) {
        if (spec.name != key) continue;
        if (found != nullptr)
            throw ConfigError(std::string(key), line,
                              "ambiguous key; qualify it (e.g. " + found->full_name() + " or " + spec.full_name() + ")");
        found = &spec;
    }
    if (found == nullptr) throw ConfigError(std::string(key), line, "unknown key");
    return *found;
}

struct Assignment {
    const KeySpec* spec;
    std::string value;
    int line;  ///< 0 for command-line overrides
};

inline void require(bool ok, const char* key, const std::string& message) {
    if (!ok) throw ConfigError(key, 0, message);
}

inline void check_invariants(const RunConfig& c) {
    if (c.physical) {
        try {
            validate(*c.physical);
        } catch (const std::domain_error& e) {
            throw ConfigError("physical", 0, e.what());
        }
    }
    const LumpedParams lp = c.plant();
    require(lp.a2 > 0.0, "plant.a2", "must be > 0");
    require(lp.a1 >= 0.0, "plant.a1", "must be >= 0");
    require(lp.a0 >= 0.0, "plant.a0", "must be >= 0");
    require(c.nominal().a2_hat > 0.0, "nominal.a2_hat", "must be > 0");

    require(c.gains.K_P > 0.0, "gains.K_P", "must be > 0");
    require(c.gains.K_D > 0.0, "gains.K_D", "must be > 0");

    require(c.topology.p >= 1, "net.p", "must be a positive integer");
    require(c.topology.T > 0.0, "net.T", "must be > 0");
    require(c.topology.a > 0.0, "net.a", "must be > 0");
    require(c.init_scale >= 0.0, "net.init_scale", "must be >= 0");
    if (c.episode.input_scaling.u_dot) require(*c.episode.input_scaling.u_dot >= 0.0, "net.input_scale_u_dot", "must be >= 0");

    require(c.eta >= 0.0, "train.eta", "must be >= 0");
    require(c.epochs >= 1, "train.epochs", "must be >= 1");
    require(c.error_sign == 1.0 || c.error_sign == -1.0, "train.error_sign", "must be +1 or -1");

    const auto& tr = c.episode.trajectory;
    if (tr.kind == Trajectory::Kind::SmoothStep) require(tr.rise_time > 0.0, "trajectory.rise_time", "must be > 0");

    const auto& ep = c.episode;
    require(ep.dt > 0.0, "episode.dt", "must be > 0");
    require(ep.t0 >= 0.0, "episode.t0", "must be >= 0");
    require(ep.tf > ep.t0, "episode.tf", "must be > episode.t0");
    try {
        (void)ep.steps();
    } catch (const std::domain_error&) {
        throw ConfigError("episode.dt", 0, "(tf - t0) / dt must be a positive integer");
    }

    require(ep.baseline.K0 > 0.0, "baseline.K0", "must be > 0");
    require(ep.baseline.eta >= 0.0 && ep.baseline.eta < 1.0, "baseline.eta", "must lie in [0, 1)");
    require(ep.baseline.sigma > 0.0, "baseline.sigma", "must be > 0");

    require(c.gradcheck_seeds >= 1, "gradcheck.seeds", "must be >= 1");
    require(c.gradcheck_steps >= 1, "gradcheck.steps", "must be >= 1");
    for (int p : c.gradcheck_p) require(p >= 1, "gradcheck.p", "entries must be positive integers");

    require(!c.sweep_grid.empty(), "sweep.grid", "needs at least one K_P:K_D point");
    for (const auto& g : c.sweep_grid) require(g.K_P > 0.0 && g.K_D > 0.0, "sweep.grid", "gains must be > 0");

    require(!c.out_dir.empty(), "output.dir", "must not be empty");
}

}  // namespace config_detail

/// Parses a config document, then applies `key=value` overrides in order.
inline ParseResult parse_config(std::string_view text, const std::vector<std::string>& overrides = {}) {
    using namespace config_detail;
    std::vector<Assignment> assignments;

    std::string section;
    int line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("", line_no, "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            const auto& table = key_table();
            const bool known = std::any_of(table.begin(), table.end(), [&](const KeySpec& s) { return s.section == section; });
            if (!known) throw ConfigError(section, line_no, "unknown section");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("", line_no, "expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("", line_no, "missing key before '='");
        assignments.push_back({&lookup(section, key, line_no), std::string(value), line_no});
    }

    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError(ov, 0, "override must look like key=value");
        const auto key = trim(std::string_view(ov).substr(0, eq));
        const auto value = trim(std::string_view(ov).substr(eq + 1));
        assignments.push_back({&lookup("", key, 0), std::string(value), 0});
    }

    ParseResult result;
    bool lumped_seen = false;
    bool physical_seen = false;
    for (const auto& a : assignments) {
        try {
            a.spec->set(result.config, a.value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(a.spec->full_name(), a.line, e.what());
        }
        lumped_seen |= a.spec->block == Block::Lumped;
        physical_seen |= a.spec->block == Block::Physical;
        if (lumped_seen && physical_seen)
            throw ConfigError(a.spec->full_name(), a.line,
                              "give either the [plant] lumped coefficients or the [physical] parameters, not both");
    }

    check_invariants(result.config);

    if (!check_critical_damping(result.config.gains)) {
        std::ostringstream msg;
        msg << "gains K_P = " << result.config.gains.K_P << ", K_D = " << result.config.gains.K_D
            << " are not critically damped (K_D^2 != 4 K_P); the error dynamics may oscillate";
        result.warnings.push_back(msg.str());
    }
    return result;
}

/// The effective configuration with every key spelled out. Parsing the
/// result yields `c.resolved()`.
inline std::string effective_config_text(const RunConfig& c) {
    using namespace config_detail;
    std::ostringstream out;
    out << "# effective configuration (defaults applied)\n";
    std::string section;
    const RunConfig resolved = c.resolved();
    for (const auto& spec : key_table()) {
        if (spec.block == Block::Lumped && c.physical) continue;
        if (spec.block == Block::Physical && !c.physical) continue;
        if (spec.section != section) {
            section = spec.section;
            out << "\n[" << section << "]\n";
        }
        out << spec.name << " = " << spec.get(resolved) << '\n';
    }
    return out.str();
}

}  // namespace immunepd
