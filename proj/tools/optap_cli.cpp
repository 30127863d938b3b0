// optap: regulator tap selection and power flow verification from the command line.
//
// Exit codes: 0 ok, 1 input error, 2 numerical failure, 3 infeasible.

#include "optap/feeder_io.hpp"
#include "optap/lin3f.hpp"
#include "optap/opts.hpp"
#include "optap/zbus.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace optap;
using nlohmann::json;

enum ExitCode { exit_ok = 0, exit_input = 1, exit_numeric = 2, exit_infeasible = 3 };

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::string feeder;
    std::string taps = "0";
    std::optional<double> vmin;
    std::optional<double> vmax;
    std::optional<double> verify_vmin;
    std::optional<double> verify_vmax;
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::optional<std::string> constants;
    std::optional<double> lower_bound;
    std::string tie_break = "lowest";
    std::string out;
    std::string format;
    std::string taps_out;
    long long cap = 100000;
    bool timings = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--feeder", f.feeder, "Feeder file (JSON)")->required();
    cmd->add_option("--tol", f.tol, "Z-bus tolerance on max |dv|");
    cmd->add_option("--max-iter", f.max_iter, "Z-bus iteration limit");
    cmd->add_option("--out", f.out, "Output file (default: standard output)");
    cmd->add_option("--format", f.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
}

void add_limits(CLI::App* cmd, Flags& f) {
    cmd->add_option("--vmin", f.vmin, "Lower voltage limit inside the LP (p.u.)");
    cmd->add_option("--vmax", f.vmax, "Upper voltage limit inside the LP (p.u.)");
    cmd->add_option("--verify-vmin", f.verify_vmin, "Lower limit of the verification band (p.u.)");
    cmd->add_option("--verify-vmax", f.verify_vmax, "Upper limit of the verification band (p.u.)");
}

void add_constants(CLI::App* cmd, Flags& f) {
    cmd->add_option("--constants", f.constants, "Linearization constants")
        ->check(CLI::IsMember({"balanced", "base"}));
}

/// Built-in defaults, then feeder defaults, then flags.
OptsConfig resolve_config(const FeederModel& model, const Flags& f) {
    OptsConfig cfg;
    try {
        apply_defaults(cfg, model.defaults);
    } catch (const std::exception& e) {
        throw InputError(std::string("feeder defaults: ") + e.what());
    }
    if (f.vmin) cfg.v_min = *f.vmin;
    if (f.vmax) cfg.v_max = *f.vmax;
    if (f.verify_vmin) cfg.verify_v_min = *f.verify_vmin;
    if (f.verify_vmax) cfg.verify_v_max = *f.verify_vmax;
    if (f.tol) cfg.zbus.tol = *f.tol;
    if (f.max_iter) cfg.zbus.max_iter = *f.max_iter;
    if (f.constants) cfg.constants = constants_mode_from(*f.constants);
    if (f.lower_bound) cfg.lower_bound = *f.lower_bound;
    cfg.tie_break = tie_break_from(f.tie_break);
    try {
        cfg.check();
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    if (cfg.lower_bound && !(*cfg.lower_bound > 0.0)) throw InputError("--lower-bound must be positive");
    return cfg;
}

FeederModel load_model(const std::string& path) {
    try {
        return load_feeder(path);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
}

/// Comma-separated taps in regulator then phase order; a single value applies to every phase.
TapVector parse_taps(const std::string& text, const FeederModel& model) {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            values.push_back(v);
        } catch (const std::exception&) {
            throw InputError("bad tap value '" + item + "'");
        }
    }
    std::size_t slots = 0;
    for (const auto& s : model.svrs) slots += static_cast<std::size_t>(s.phases.size());
    if (values.size() == 1) values.assign(slots, values.front());
    if (values.size() != slots)
        throw InputError("expected " + std::to_string(slots) + " tap values, got " + std::to_string(values.size()));
    TapVector taps = zero_taps(model);
    std::size_t k = 0;
    for (std::size_t s = 0; s < model.svrs.size(); ++s)
        for (Phase ph : model.svrs[s].phases) {
            const auto& svr = model.svrs[s];
            const int t = values[k++];
            if (t < svr.tap_min || t > svr.tap_max)
                throw InputError("tap " + std::to_string(t) + " outside [" + std::to_string(svr.tap_min) + ", " +
                                 std::to_string(svr.tap_max) + "] for " + svr.from + "->" + svr.to);
            taps[s][ph] = t;
        }
    return taps;
}

void emit(const Flags& f, const std::function<void(std::ostream&)>& write) {
    if (f.out.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream file(f.out, std::ios::binary);
    if (!file) throw InputError("cannot open output file '" + f.out + "'");
    write(file);
    if (!file) throw InputError("failed writing '" + f.out + "'");
}

/// Summary lines go to stdout when the main output is a file, else to stderr.
std::ostream& summary_stream(const Flags& f) { return f.out.empty() ? std::cerr : std::cout; }

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

json voltages_json(const FeederModel& model, const PowerFlowSolution& sol) {
    json arr = json::array();
    for (std::size_t b = 0; b < model.buses.size(); ++b)
        for (Phase ph : sol.voltages[b].mask()) {
            const Complex v = sol.voltages[b][ph];
            arr.push_back({{"bus", model.buses[b].id},
                           {"phase", std::string(1, phase_char(ph))},
                           {"re", v.real()},
                           {"im", v.imag()},
                           {"magnitude", std::abs(v)}});
        }
    return arr;
}

struct Extreme {
    double value;
    std::string where;
};

std::pair<Extreme, Extreme> extremes(const FeederModel& model, const PowerFlowSolution& sol) {
    Extreme lo{std::numeric_limits<double>::infinity(), ""};
    Extreme hi{-std::numeric_limits<double>::infinity(), ""};
    for (std::size_t b = 0; b < model.buses.size(); ++b) {
        if (model.buses[b].is_slack) continue;
        for (Phase ph : sol.voltages[b].mask()) {
            const double m = std::abs(sol.voltages[b][ph]);
            const std::string where = model.buses[b].id + "." + phase_char(ph);
            if (m < lo.value) lo = {m, where};
            if (m > hi.value) hi = {m, where};
        }
    }
    return {lo, hi};
}

int cmd_powerflow(const Flags& f) {
    const FeederModel model = load_model(f.feeder);
    const OptsConfig cfg = resolve_config(model, f);
    const TapVector taps = parse_taps(f.taps, model);
    PowerFlowSolution sol;
    try {
        sol = solve_zbus(model, ratios_from_taps(model, taps), cfg.zbus);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
    if (!sol.converged) {
        std::cerr << "error: Z-bus iteration did not converge after " << sol.iterations << " iterations (last step "
                  << sol.last_step << ")\n";
        return exit_numeric;
    }
    const double c = import_objective(sol, model);
    const auto [lo, hi] = extremes(model, sol);
    const bool feasible = feasibility(sol, model, cfg.verify_v_min, cfg.verify_v_max);
    if (f.format == "json") {
        emit(f, [&](std::ostream& os) {
            json j{{"feeder", model.name},
                   {"converged", true},
                   {"iterations", sol.iterations},
                   {"residual", sol.residual},
                   {"objective", c},
                   {"v_min", lo.value},
                   {"v_max", hi.value},
                   {"feasible", feasible},
                   {"unbalance_percent", voltage_unbalance(sol)},
                   {"svrs", taps_json(model, taps, sol.ratios)},
                   {"voltages", voltages_json(model, sol)}};
            os << j.dump(2) << '\n';
        });
    } else {
        emit(f, [&](std::ostream& os) { write_solution_csv(os, model, sol); });
    }
    auto& s = summary_stream(f);
    s << "converged in " << sol.iterations << " iterations, residual " << fmt("%.3e", sol.residual) << '\n';
    s << "import objective " << fmt("%.6f", c) << '\n';
    s << "min |v| " << fmt("%.4f", lo.value) << " at " << lo.where << '\n';
    s << "max |v| " << fmt("%.4f", hi.value) << " at " << hi.where << '\n';
    s << "unbalance " << fmt("%.2f", voltage_unbalance(sol)) << " %\n";
    s << (feasible ? "feasible" : "infeasible") << " for [" << cfg.verify_v_min << ", " << cfg.verify_v_max << "]\n";
    return exit_ok;
}

int cmd_opts(const Flags& f) {
    const FeederModel model = load_model(f.feeder);
    const OptsConfig cfg = resolve_config(model, f);
    OptsReport rep;
    try {
        rep = run_opts(model, cfg);
    } catch (const OptsError& e) {
        std::cerr << "error: " << e.what() << '\n';
        switch (e.kind()) {
        case FailureKind::input: return exit_input;
        case FailureKind::infeasible: return exit_infeasible;
        case FailureKind::numeric: return exit_numeric;
        }
        return exit_numeric;
    }
    if (f.format == "csv")
        emit(f, [&](std::ostream& os) { write_report_csv(os, rep); });
    else
        emit(f, [&](std::ostream& os) { os << report_json(model, rep, f.timings).dump(2) << '\n'; });
    if (!f.taps_out.empty()) {
        std::ofstream file(f.taps_out, std::ios::binary);
        if (!file) throw InputError("cannot open output file '" + f.taps_out + "'");
        write_taps_csv(file, model, rep.taps, rep.ratios);
    }
    if (!rep.feasible) {
        std::cerr << "verified voltage profile leaves [" << cfg.verify_v_min << ", " << cfg.verify_v_max << "]\n";
        return exit_infeasible;
    }
    return exit_ok;
}

int cmd_lindiff(const Flags& f) {
    const FeederModel model = load_model(f.feeder);
    OptsConfig cfg = resolve_config(model, f);
    const bool exact_point = f.constants == "base";
    const TapVector taps = parse_taps(f.taps, model);
    const RatioVector ratios = ratios_from_taps(model, taps);
    PowerFlowSolution sol;
    std::vector<LinDiffRow> rows;
    try {
        sol = solve_zbus(model, ratios, cfg.zbus);
        if (!sol.converged) {
            std::cerr << "error: Z-bus iteration did not converge\n";
            return exit_numeric;
        }
        const LinearizationConstants k = exact_point ? constants_from_solution(model, sol) : constants_balanced(model);
        rows = lindiff(model, linear_powerflow(model, k, ratios), sol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
    if (f.format == "json") {
        emit(f, [&](std::ostream& os) {
            json arr = json::array();
            for (const auto& r : rows) {
                if (!std::isfinite(r.min_exact)) continue;
                arr.push_back({{"phase", r.phase},
                               {"max_abs_diff", r.max_abs_diff},
                               {"min_linear", r.min_linear},
                               {"min_zbus", r.min_exact}});
            }
            os << json{{"feeder", model.name}, {"constants", exact_point ? "base" : "balanced"}, {"rows", arr}}.dump(2)
               << '\n';
        });
    } else {
        emit(f, [&](std::ostream& os) { write_lindiff_csv(os, rows); });
    }
    return exit_ok;
}

int cmd_bruteforce(const Flags& f) {
    const FeederModel model = load_model(f.feeder);
    const OptsConfig cfg = resolve_config(model, f);
    BruteForceOptions opts;
    opts.cap = f.cap;
    opts.v_min = cfg.verify_v_min;
    opts.v_max = cfg.verify_v_max;
    opts.zbus = cfg.zbus;
    const long long total = tap_combinations(model);
    if (total > opts.cap)
        throw InputError("tap grid has " + std::to_string(total) + " combinations, above --cap " +
                         std::to_string(opts.cap));
    BruteForceResult res;
    try {
        res = brute_force(model, opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
    if (!res.found) {
        std::cerr << "no feasible tap combination among " << res.evaluated << " (" << res.diverged << " diverged)\n";
        return exit_infeasible;
    }
    const RatioVector ratios = ratios_from_taps(model, res.best_taps);
    if (f.format == "csv") {
        emit(f, [&](std::ostream& os) { write_taps_csv(os, model, res.best_taps, ratios); });
    } else {
        emit(f, [&](std::ostream& os) {
            json j{{"feeder", model.name},
                   {"objective", res.best_objective},
                   {"svrs", taps_json(model, res.best_taps, ratios)},
                   {"evaluated", res.evaluated},
                   {"feasible", res.feasible},
                   {"diverged", res.diverged}};
            os << j.dump(2) << '\n';
        });
    }
    summary_stream(f) << "best import " << fmt("%.6f", res.best_objective) << " over " << res.feasible
                      << " feasible of " << res.evaluated << " combinations\n";
    return exit_ok;
}

int cmd_validate(const Flags& f) {
    FeederModel model;
    try {
        model = read_feeder(read_text_file(f.feeder));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    }
    const auto violations = validate(model);
    for (const auto& v : violations) std::cout << v.element << ": " << v.rule << ": " << v.message << '\n';
    if (!violations.empty()) return exit_input;
    std::cout << "valid: " << model.buses.size() << " buses, " << model.lines.size() << " lines, " << model.svrs.size()
              << " regulators\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regulator tap selection with linearized three-phase power flow"};
    app.require_subcommand(1);
    Flags f;

    auto* pf = app.add_subcommand("powerflow", "Z-bus power flow at fixed taps");
    add_common(pf, f);
    add_limits(pf, f);
    pf->add_option("--taps", f.taps, "Taps, comma separated per regulator phase (one value applies to all)");

    auto* op = app.add_subcommand("opts", "Optimal tap selection with verification");
    add_common(op, f);
    add_limits(op, f);
    add_constants(op, f);
    op->add_option("--lower-bound", f.lower_bound, "External lower bound for the gap");
    op->add_option("--tie-break", f.tie_break, "Choice among equal-import LP optima")
        ->check(CLI::IsMember({"lowest", "highest", "none"}));
    op->add_option("--taps-out", f.taps_out, "Also write the selected taps as CSV");
    op->add_flag("--timings", f.timings, "Include stage timings in the JSON report");

    auto* ld = app.add_subcommand("lindiff", "Linear vs. nonlinear voltage magnitude comparison");
    add_common(ld, f);
    add_constants(ld, f);
    ld->add_option("--taps", f.taps, "Taps, comma separated per regulator phase (one value applies to all)");

    auto* bf = app.add_subcommand("bruteforce", "Exhaustive tap enumeration");
    add_common(bf, f);
    add_limits(bf, f);
    bf->add_option("--cap", f.cap, "Maximum number of tap combinations");

    auto* va = app.add_subcommand("validate", "Check a feeder file");
    va->add_option("--feeder", f.feeder, "Feeder file (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_input;
    }

    try {
        if (*pf) return cmd_powerflow(f);
        if (*op) return cmd_opts(f);
        if (*ld) return cmd_lindiff(f);
        if (*bf) return cmd_bruteforce(f);
        if (*va) return cmd_validate(f);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_input;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
    return exit_input;
}
