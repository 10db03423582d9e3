#pragma once

// Run configuration: a flat "key = value" text format.
//
//   # comment
//   nodes = 5
//   edge = 1 2 0.12        # tail head weight, repeatable; order fixes edge indices
//   tree = 1 2 3 4         # optional explicit spanning tree (1-based edge indices)
//   n = 3
//   sigma = auto           # or a number; auto = 1.05 * sqrt(lambda_max(H)/2 + 1)
//   mu0 = 10               # optional; present = start zooming in immediately
//
// See README.md for the full key list and defaults.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qedge/errors.hpp"
#include "qedge/graph.hpp"

namespace qedge {

enum class InitMode { Random, Zero, Explicit };

inline const char* to_string(InitMode m) {
    switch (m) {
        case InitMode::Random: return "random";
        case InitMode::Zero: return "zero";
        case InitMode::Explicit: return "explicit";
    }
    return "?";
}

struct RunConfig {
    int nodes = 0;
    std::vector<Edge> edges;  // 0-based node indices
    std::optional<std::vector<int>> tree;  // 0-based edge indices
    int n = 1;
    std::optional<double> sigma;  // nullopt = auto
    double delta = 0.1;
    double M = 63.0;
    double epsilon = 0.75;
    std::optional<double> mu0;
    double tau = 1.0;
    double gamma_out = 2.0;
    double dt = 1e-3;
    double horizon = 100.0;
    std::uint64_t seed = 1;
    double kappa = 10.0;
    double conv_floor = 1e-6;
    bool stop_on_convergence = false;
    int sample_every = 10;
    InitMode init = InitMode::Random;
    double init_pos = 5.0;
    double init_vel = 1.0;
    std::vector<double> x0, v0;  // explicit init, agent-major, N*n values each
    std::optional<double> init_r1_fraction;
    std::string out = "out";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::optional<double> to_double(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Parses and validates a config. Throws ConfigError listing every problem found.
inline RunConfig parse_config(std::string_view text) {
    using detail::to_double;
    RunConfig cfg;
    std::vector<std::string> errors;
    std::set<std::string> seen;
    std::vector<int> edge_lines;
    bool have_nodes = false;
    int tree_line = 0;
    std::vector<long long> raw_tree;
    struct RawEdge {
        long long tail, head;
        double weight;
        int line;
    };
    std::vector<RawEdge> raw_edges;

    auto err = [&](int line, const std::string& msg) { errors.push_back("line " + std::to_string(line) + ": " + msg); };

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            err(line_no, "syntax error, expected 'key = value'");
            continue;
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string_view value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            err(line_no, "syntax error, expected 'key = value'");
            continue;
        }
        if (key != "edge" && !seen.insert(key).second) {
            err(line_no, "duplicate key '" + key + "'");
            continue;
        }
        const auto words = detail::split_ws(value);

        auto real = [&](double& dst) {
            if (auto v = to_double(value)) dst = *v;
            else err(line_no, key + ": expected a number, got '" + std::string(value) + "'");
        };
        auto opt_real = [&](std::optional<double>& dst) {
            if (auto v = to_double(value)) dst = *v;
            else err(line_no, key + ": expected a number, got '" + std::string(value) + "'");
        };
        auto integer = [&](int& dst) {
            if (auto v = detail::to_int<int>(value)) dst = *v;
            else err(line_no, key + ": expected an integer, got '" + std::string(value) + "'");
        };
        auto reals = [&](std::vector<double>& dst) {
            dst.clear();
            for (auto w : words) {
                if (auto v = to_double(w)) dst.push_back(*v);
                else {
                    err(line_no, key + ": '" + std::string(w) + "' is not a number");
                    return;
                }
            }
        };

        if (key == "nodes") {
            integer(cfg.nodes);
            have_nodes = true;
        } else if (key == "edge") {
            if (words.size() != 3) {
                err(line_no, "edge: expected 'tail head weight'");
                continue;
            }
            auto t = detail::to_int<long long>(words[0]);
            auto h = detail::to_int<long long>(words[1]);
            auto w = to_double(words[2]);
            if (!t || !h || !w) {
                err(line_no, "edge: expected 'tail head weight' with integer nodes and a numeric weight");
                continue;
            }
            raw_edges.push_back({*t, *h, *w, line_no});
        } else if (key == "tree") {
            tree_line = line_no;
            raw_tree.clear();
            for (auto w : words) {
                if (auto k = detail::to_int<long long>(w)) raw_tree.push_back(*k);
                else {
                    err(line_no, "tree: '" + std::string(w) + "' is not an edge index");
                    tree_line = 0;
                    break;
                }
            }
        } else if (key == "n") {
            integer(cfg.n);
        } else if (key == "sigma") {
            if (value == "auto") cfg.sigma.reset();
            else opt_real(cfg.sigma);
        } else if (key == "delta") {
            real(cfg.delta);
        } else if (key == "M") {
            real(cfg.M);
        } else if (key == "epsilon") {
            real(cfg.epsilon);
        } else if (key == "mu0") {
            opt_real(cfg.mu0);
        } else if (key == "tau") {
            real(cfg.tau);
        } else if (key == "gamma_out") {
            real(cfg.gamma_out);
        } else if (key == "dt") {
            real(cfg.dt);
        } else if (key == "horizon") {
            real(cfg.horizon);
        } else if (key == "seed") {
            if (auto v = detail::to_int<std::uint64_t>(value)) cfg.seed = *v;
            else err(line_no, "seed: expected an unsigned 64-bit integer");
        } else if (key == "kappa") {
            real(cfg.kappa);
        } else if (key == "conv_floor") {
            real(cfg.conv_floor);
        } else if (key == "stop_on_convergence") {
            if (value == "true") cfg.stop_on_convergence = true;
            else if (value == "false") cfg.stop_on_convergence = false;
            else err(line_no, "stop_on_convergence: expected true or false");
        } else if (key == "sample_every") {
            integer(cfg.sample_every);
        } else if (key == "init") {
            if (value == "random") cfg.init = InitMode::Random;
            else if (value == "zero") cfg.init = InitMode::Zero;
            else if (value == "explicit") cfg.init = InitMode::Explicit;
            else err(line_no, "init: expected random, zero or explicit");
        } else if (key == "init_pos") {
            real(cfg.init_pos);
        } else if (key == "init_vel") {
            real(cfg.init_vel);
        } else if (key == "x0") {
            reals(cfg.x0);
        } else if (key == "v0") {
            reals(cfg.v0);
        } else if (key == "init_r1_fraction") {
            opt_real(cfg.init_r1_fraction);
        } else if (key == "out") {
            cfg.out = std::string(value);
        } else {
            err(line_no, "unknown key '" + key + "'");
        }
    }

    // Semantic checks.
    if (!have_nodes) errors.push_back("nodes: missing");
    else if (cfg.nodes < 1) errors.push_back("nodes: must be >= 1");
    std::set<std::pair<long long, long long>> pairs;
    for (std::size_t k = 0; k < raw_edges.size(); ++k) {
        const auto& e = raw_edges[k];
        const std::string name = "line " + std::to_string(e.line) + ": edge e" + std::to_string(k + 1) + " (" +
                                 std::to_string(e.tail) + " -> " + std::to_string(e.head) + ")";
        bool ok = true;
        if (have_nodes && (e.tail < 1 || e.tail > cfg.nodes || e.head < 1 || e.head > cfg.nodes)) {
            errors.push_back(name + ": node index outside [1, " + std::to_string(cfg.nodes) + "]");
            ok = false;
        }
        if (e.tail == e.head) {
            errors.push_back(name + ": self-loop");
            ok = false;
        }
        if (!(e.weight > 0.0)) {
            errors.push_back(name + ": weight must be positive, got " + detail::fmt17(e.weight));
            ok = false;
        }
        if (!pairs.emplace(e.tail, e.head).second) {
            errors.push_back(name + ": duplicate edge");
            ok = false;
        }
        if (ok) cfg.edges.push_back({static_cast<int>(e.tail - 1), static_cast<int>(e.head - 1), e.weight});
    }
    if (tree_line > 0) {
        std::vector<int> tree;
        for (long long k : raw_tree) {
            if (k < 1 || k > static_cast<long long>(raw_edges.size())) {
                errors.push_back("line " + std::to_string(tree_line) + ": tree: edge index " + std::to_string(k) +
                                 " outside [1, " + std::to_string(raw_edges.size()) + "]");
            } else {
                tree.push_back(static_cast<int>(k - 1));
            }
        }
        cfg.tree = std::move(tree);
    }

    auto positive = [&](const char* name, double v) {
        if (!(v > 0.0)) errors.push_back(std::string(name) + ": must be > 0");
    };
    if (cfg.n < 1) errors.push_back("n: must be >= 1");
    if (cfg.sigma) positive("sigma", *cfg.sigma);
    positive("delta", cfg.delta);
    if (!(cfg.M > cfg.delta)) errors.push_back("M: must exceed delta");
    positive("epsilon", cfg.epsilon);
    if (cfg.mu0) positive("mu0", *cfg.mu0);
    positive("tau", cfg.tau);
    if (!(cfg.gamma_out > 1.0)) errors.push_back("gamma_out: must be > 1");
    positive("dt", cfg.dt);
    positive("horizon", cfg.horizon);
    if (cfg.dt > 0 && cfg.horizon > 0 && cfg.dt > cfg.horizon) errors.push_back("dt: must not exceed horizon");
    positive("kappa", cfg.kappa);
    positive("conv_floor", cfg.conv_floor);
    if (cfg.sample_every < 1) errors.push_back("sample_every: must be >= 1");
    if (cfg.init_pos < 0.0) errors.push_back("init_pos: must be >= 0");
    if (cfg.init_vel < 0.0) errors.push_back("init_vel: must be >= 0");
    if (cfg.init_r1_fraction && !(*cfg.init_r1_fraction > 0.0 && *cfg.init_r1_fraction <= 1.0)) {
        errors.push_back("init_r1_fraction: must lie in (0, 1]");
    }
    if (cfg.init_r1_fraction && !cfg.mu0) errors.push_back("init_r1_fraction: requires mu0");
    if (!cfg.x0.empty() || !cfg.v0.empty()) {
        if (seen.count("init") && cfg.init != InitMode::Explicit) {
            errors.push_back("x0/v0: only allowed with init = explicit");
        }
        cfg.init = InitMode::Explicit;
    }
    if (cfg.init == InitMode::Explicit && have_nodes && cfg.nodes > 0 && cfg.n > 0) {
        const auto want = static_cast<std::size_t>(cfg.nodes) * static_cast<std::size_t>(cfg.n);
        if (cfg.x0.size() != want) errors.push_back("x0: expected " + std::to_string(want) + " values");
        if (cfg.v0.size() != want) errors.push_back("v0: expected " + std::to_string(want) + " values");
    }
    if (cfg.out.empty()) errors.push_back("out: must not be empty");

    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

/// Canonical text form; parse_config(print_config(c)) == c.
inline std::string print_config(const RunConfig& c) {
    using detail::fmt17;
    std::ostringstream os;
    os << "nodes = " << c.nodes << "\n";
    for (const Edge& e : c.edges) os << "edge = " << e.tail + 1 << " " << e.head + 1 << " " << fmt17(e.weight) << "\n";
    if (c.tree) {
        os << "tree =";
        for (int k : *c.tree) os << " " << k + 1;
        os << "\n";
    }
    os << "n = " << c.n << "\n";
    os << "sigma = " << (c.sigma ? fmt17(*c.sigma) : std::string("auto")) << "\n";
    os << "delta = " << fmt17(c.delta) << "\n";
    os << "M = " << fmt17(c.M) << "\n";
    os << "epsilon = " << fmt17(c.epsilon) << "\n";
    if (c.mu0) os << "mu0 = " << fmt17(*c.mu0) << "\n";
    os << "tau = " << fmt17(c.tau) << "\n";
    os << "gamma_out = " << fmt17(c.gamma_out) << "\n";
    os << "dt = " << fmt17(c.dt) << "\n";
    os << "horizon = " << fmt17(c.horizon) << "\n";
    os << "seed = " << c.seed << "\n";
    os << "kappa = " << fmt17(c.kappa) << "\n";
    os << "conv_floor = " << fmt17(c.conv_floor) << "\n";
    os << "stop_on_convergence = " << (c.stop_on_convergence ? "true" : "false") << "\n";
    os << "sample_every = " << c.sample_every << "\n";
    os << "init = " << to_string(c.init) << "\n";
    os << "init_pos = " << fmt17(c.init_pos) << "\n";
    os << "init_vel = " << fmt17(c.init_vel) << "\n";
    auto list = [&](const char* key, const std::vector<double>& xs) {
        if (xs.empty()) return;
        os << key << " =";
        for (double x : xs) os << " " << fmt17(x);
        os << "\n";
    };
    list("x0", c.x0);
    list("v0", c.v0);
    if (c.init_r1_fraction) os << "init_r1_fraction = " << fmt17(*c.init_r1_fraction) << "\n";
    os << "out = " << c.out << "\n";
    return os.str();
}

inline DirectedGraph graph_of(const RunConfig& c) { return DirectedGraph(c.nodes, c.edges); }

}  // namespace qedge
