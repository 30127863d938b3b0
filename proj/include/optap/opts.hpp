#pragma once

// Optimal regulator tap selection: LinDist3Flow linear program, ratio
// recovery, snapping to the tap grid and verification by Z-bus power flow.

#include "optap/feeder.hpp"
#include "optap/lin3f.hpp"
#include "optap/lp.hpp"
#include "optap/zbus.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace optap {

enum class ConstantsMode { balanced, from_zero_tap_solution };

/// Secondary criterion among LP optima. The import objective of the linear
/// model is often flat over a whole face of the feasible set, so the choice
/// of vertex is made explicit here.
enum class TieBreak { lowest_voltage, highest_voltage, none };

inline ConstantsMode constants_mode_from(const std::string& s) {
    if (s == "balanced") return ConstantsMode::balanced;
    if (s == "base" || s == "from_zero_tap_solution") return ConstantsMode::from_zero_tap_solution;
    throw std::invalid_argument("unknown constants mode '" + s + "' (expected balanced or base)");
}

inline const char* to_string(ConstantsMode m) { return m == ConstantsMode::balanced ? "balanced" : "base"; }

inline TieBreak tie_break_from(const std::string& s) {
    if (s == "lowest") return TieBreak::lowest_voltage;
    if (s == "highest") return TieBreak::highest_voltage;
    if (s == "none") return TieBreak::none;
    throw std::invalid_argument("unknown tie-break '" + s + "' (expected lowest, highest or none)");
}

inline const char* to_string(TieBreak t) {
    switch (t) {
    case TieBreak::lowest_voltage: return "lowest";
    case TieBreak::highest_voltage: return "highest";
    case TieBreak::none: return "none";
    }
    return "none";
}

struct OptsConfig {
    double v_min = 0.9; // voltage limits inside the LP
    double v_max = 1.1;
    double verify_v_min = 0.9; // band for the verified feasibility flag
    double verify_v_max = 1.1;
    double r_min = 0.9; // intersected with each device's own range
    double r_max = 1.1;
    ZbusOptions zbus;
    ConstantsMode constants = ConstantsMode::from_zero_tap_solution;
    TieBreak tie_break = TieBreak::lowest_voltage;
    double tie_tolerance = 1e-7; // relative slack on the import optimum during the tie-break solve
    LpOptions lp;
    std::optional<double> lower_bound; // external bound for the optimality gap

    void check() const {
        if (!(v_min > 0.0 && v_min < v_max)) throw std::invalid_argument("need 0 < v_min < v_max");
        if (!(verify_v_min > 0.0 && verify_v_min < verify_v_max))
            throw std::invalid_argument("need 0 < verify_v_min < verify_v_max");
        if (!(r_min > 0.0 && r_min < r_max)) throw std::invalid_argument("need 0 < r_min < r_max");
        if (!(zbus.tol > 0.0) || zbus.max_iter < 1) throw std::invalid_argument("bad power flow tolerance or iteration limit");
        if (!(tie_tolerance >= 0.0)) throw std::invalid_argument("tie tolerance must be nonnegative");
    }
};

/// Fills fields from feeder-embedded defaults. Callers apply explicit flags afterwards.
inline void apply_defaults(OptsConfig& cfg, const FeederDefaults& d) {
    if (d.v_min) cfg.v_min = *d.v_min;
    if (d.v_max) cfg.v_max = *d.v_max;
    if (d.verify_v_min) cfg.verify_v_min = *d.verify_v_min;
    if (d.verify_v_max) cfg.verify_v_max = *d.verify_v_max;
    if (d.tol) cfg.zbus.tol = *d.tol;
    if (d.max_iter) cfg.zbus.max_iter = *d.max_iter;
    if (d.constants) cfg.constants = constants_mode_from(*d.constants);
}

/// Ratio interval actually offered to the LP for one device.
inline std::pair<double, double> effective_ratio_range(const SvrSpec& svr, const OptsConfig& cfg) {
    const auto [lo, hi] = ratio_range(svr);
    const double a = std::max(lo, cfg.r_min);
    const double b = std::min(hi, cfg.r_max);
    if (a > b) throw std::invalid_argument(detail::svr_name(svr) + ": configured ratio range misses the device range");
    return {a, b};
}

/// Interval of the primary gain g (v_n = g v_n') implied by a ratio interval.
inline std::pair<double, double> gain_range(const SvrSpec& svr, const OptsConfig& cfg) {
    const auto [lo, hi] = effective_ratio_range(svr, cfg);
    if (svr.kind == SvrKind::B) return {lo, hi};
    return {1.0 / hi, 1.0 / lo};
}

// ---------------------------------------------------------------------------
// LP construction

struct LpCensus {
    int voltage_vars = 0;
    int flow_vars = 0;
    int slack_vars = 0;
    int drop_rows = 0;
    int balance_rows = 0;
    int svr_balance_rows = 0;
    int svr_relaxation_rows = 0;

    int vars() const { return voltage_vars + flow_vars + slack_vars; }
    int rows() const { return drop_rows + balance_rows + svr_balance_rows + svr_relaxation_rows; }
};

struct OptsLp {
    SparseLp lp;
    Topology topo;
    LinDistVariables vars;
    LpCensus census;
    std::vector<int> objective_edges; // feeder-head topology edges
};

/// Builds the linear program over v~ (bounded by the squared voltage limits)
/// and free Re/Im sending-end flows. Each regulator phase gets
///   v~_n - g_lo^2 v~_n' - s_lo = 0,   v~_n - g_hi^2 v~_n' + s_hi = 0,   s >= 0
/// and the objective is the real power leaving the slack bus.
inline OptsLp build_lp(const FeederModel& model, const LinearizationConstants& k, const OptsConfig& cfg) {
    cfg.check();
    OptsLp out;
    out.topo = build_topology(model);
    out.vars = number_variables(model, out.topo);
    std::vector<LinearRow> rows = branch_rows(model, out.topo, k, out.vars);

    const int base_vars = out.vars.count;
    for (const auto& row : rows) {
        switch (row.kind) {
        case RowKind::voltage_drop: ++out.census.drop_rows; break;
        case RowKind::balance_re:
        case RowKind::balance_im: ++out.census.balance_rows; break;
        default: ++out.census.svr_balance_rows; break;
        }
    }

    std::vector<std::string> names = out.vars.names;
    int next = base_vars;
    for (std::size_t s = 0; s < model.svrs.size(); ++s) {
        const auto& svr = model.svrs[s];
        const auto [g_lo, g_hi] = gain_range(svr, cfg);
        const int n = out.topo.bus_index.at(svr.from);
        const int sec = out.topo.bus_index.at(svr.to);
        for (Phase ph : svr.phases) {
            const std::string tag = svr.from + "_" + svr.to + "_" + phase_char(ph);
            LinearRow low{RowKind::svr_gain_low, {}, 0.0, "relaxLo_" + tag};
            detail::add_voltage_term(low, out.vars, model, out.topo, n, ph, 1.0);
            detail::add_voltage_term(low, out.vars, model, out.topo, sec, ph, -g_lo * g_lo);
            low.terms.emplace_back(next++, -1.0);
            names.push_back("sLo_" + tag);
            LinearRow high{RowKind::svr_gain_high, {}, 0.0, "relaxHi_" + tag};
            detail::add_voltage_term(high, out.vars, model, out.topo, n, ph, 1.0);
            detail::add_voltage_term(high, out.vars, model, out.topo, sec, ph, -g_hi * g_hi);
            high.terms.emplace_back(next++, 1.0);
            names.push_back("sHi_" + tag);
            rows.push_back(std::move(low));
            rows.push_back(std::move(high));
            out.census.svr_relaxation_rows += 2;
            out.census.slack_vars += 2;
        }
    }

    const int n_vars = next;
    const int n_rows = static_cast<int>(rows.size());
    std::vector<Eigen::Triplet<double>> trip;
    SparseLp& lp = out.lp;
    lp.b.resize(n_rows);
    lp.row_names.reserve(n_rows);
    for (int r = 0; r < n_rows; ++r) {
        for (const auto& [col, coef] : rows[r].terms)
            if (coef != 0.0) trip.emplace_back(r, col, coef);
        lp.b(r) = rows[r].rhs;
        lp.row_names.push_back(rows[r].name);
    }
    lp.A.resize(n_rows, n_vars);
    lp.A.setFromTriplets(trip.begin(), trip.end());
    lp.A.makeCompressed();
    lp.names = std::move(names);
    lp.c = Eigen::VectorXd::Zero(n_vars);
    lp.lower = Eigen::VectorXd::Constant(n_vars, -lp_inf);
    lp.upper = Eigen::VectorXd::Constant(n_vars, lp_inf);

    for (std::size_t b = 0; b < model.buses.size(); ++b)
        for (int col : out.vars.v[b])
            if (col >= 0) {
                lp.lower(col) = cfg.v_min * cfg.v_min;
                lp.upper(col) = cfg.v_max * cfg.v_max;
                ++out.census.voltage_vars;
            }
    for (std::size_t e = 0; e < out.topo.edges.size(); ++e)
        for (int i = 0; i < 3; ++i)
            if (out.vars.p[e][i] >= 0) out.census.flow_vars += 2;
    for (int j = base_vars; j < n_vars; ++j) {
        lp.lower(j) = 0.0;
        lp.upper(j) = lp_inf;
    }
    for (int e : out.topo.children[out.topo.slack]) {
        out.objective_edges.push_back(e);
        for (int col : out.vars.p[e])
            if (col >= 0) lp.c(col) = 1.0;
    }
    return out;
}

/// Secondary solve among the (near-)optimal points: fix c^T x <= C* + slack
/// and minimise (or maximise) the sum of v~.
inline SparseLp tie_break_lp(const OptsLp& olp, double optimum, const OptsConfig& cfg) {
    const SparseLp& lp = olp.lp;
    const int m = lp.rows();
    const int n = lp.cols();
    SparseLp out;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(lp.A.nonZeros() + n + 1);
    for (int j = 0; j < n; ++j)
        for (Eigen::SparseMatrix<double>::InnerIterator it(lp.A, j); it; ++it)
            trip.emplace_back(static_cast<int>(it.row()), j, it.value());
    for (int j = 0; j < n; ++j)
        if (lp.c(j) != 0.0) trip.emplace_back(m, j, lp.c(j));
    trip.emplace_back(m, n, 1.0);
    out.A.resize(m + 1, n + 1);
    out.A.setFromTriplets(trip.begin(), trip.end());
    out.A.makeCompressed();
    out.b.resize(m + 1);
    out.b.head(m) = lp.b;
    out.b(m) = optimum + cfg.tie_tolerance * std::max(1.0, std::abs(optimum));
    out.lower.resize(n + 1);
    out.upper.resize(n + 1);
    out.lower.head(n) = lp.lower;
    out.upper.head(n) = lp.upper;
    out.lower(n) = 0.0;
    out.upper(n) = lp_inf;
    out.c = Eigen::VectorXd::Zero(n + 1);
    const double sign = cfg.tie_break == TieBreak::highest_voltage ? -1.0 : 1.0;
    for (const auto& cols : olp.vars.v)
        for (int col : cols)
            if (col >= 0) out.c(col) = sign;
    out.names = lp.names;
    out.names.push_back("sObj");
    out.row_names = lp.row_names;
    out.row_names.push_back("objective_cap");
    return out;
}

/// Value of v~ for a bus phase, the slack contributing its fixed |v_S|^2.
inline double squared_voltage(const OptsLp& olp, const FeederModel& model, const Eigen::VectorXd& x, int bus, Phase ph) {
    if (bus == olp.topo.slack) return std::norm(model.slack_voltage.at(ph));
    return x(olp.vars.v[bus][index_of(ph)]);
}

/// Per regulator phase r from sqrt(v~_n / v~_n'), clamped into range when the excursion is round-off.
inline RatioVector recover_ratios(const Eigen::VectorXd& x, const OptsLp& olp, const FeederModel& model,
                                  const OptsConfig& cfg, double clamp_tol = 1e-6) {
    RatioVector out;
    for (const auto& svr : model.svrs) {
        const auto [lo, hi] = effective_ratio_range(svr, cfg);
        const int n = olp.topo.bus_index.at(svr.from);
        const int sec = olp.topo.bus_index.at(svr.to);
        RealPhaseVector r(svr.phases);
        for (Phase ph : svr.phases) {
            const double vn = squared_voltage(olp, model, x, n, ph);
            const double vs = squared_voltage(olp, model, x, sec, ph);
            if (!(vn > 0.0) || !(vs > 0.0))
                throw NumericalError(detail::svr_name(svr) + ": nonpositive squared voltage in LP solution");
            const double g = std::sqrt(vn / vs);
            double ratio = svr.kind == SvrKind::B ? g : 1.0 / g;
            if (ratio < lo - clamp_tol || ratio > hi + clamp_tol)
                throw NumericalError(detail::svr_name(svr) + ": recovered ratio outside its range");
            r[ph] = std::clamp(ratio, lo, hi);
        }
        out.push_back(r);
    }
    return out;
}

inline double optimality_gap(double verified, double lower_bound) {
    if (!(lower_bound > 0.0)) throw std::invalid_argument("lower bound must be positive");
    return (verified - lower_bound) / lower_bound * 100.0;
}

// ---------------------------------------------------------------------------
// Pipeline

enum class FailureKind { input, numeric, infeasible };

class OptsError : public std::runtime_error {
public:
    OptsError(std::string stage, FailureKind kind, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), kind_(kind) {}
    const std::string& stage() const { return stage_; }
    FailureKind kind() const { return kind_; }

private:
    std::string stage_;
    FailureKind kind_;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct OptsReport {
    std::string feeder;
    TapVector taps;
    RatioVector ratios;            // snapped to the tap grid
    RatioVector continuous_ratios; // straight from the LP
    std::optional<double> objective_lp;
    double objective_verified = 0.0;
    VoltageEnvelope envelope;
    bool feasible = false;
    double unbalance = 0.0;
    std::optional<double> lower_bound;
    std::optional<double> gap_percent;
    int lp_iterations = 0;
    int zbus_iterations = 0;
    std::vector<StageTiming> timings;
    PowerFlowSolution solution;
    OptsConfig config;
};

namespace detail {

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline PowerFlowSolution checked_zbus(const FeederModel& model, const RatioVector& ratios, const OptsConfig& cfg,
                                      const char* stage) {
    PowerFlowSolution sol;
    try {
        sol = solve_zbus(model, ratios, cfg.zbus);
    } catch (const std::exception& e) {
        throw OptsError(stage, FailureKind::numeric, e.what());
    }
    if (!sol.converged)
        throw OptsError(stage, FailureKind::numeric,
                        "Z-bus iteration did not converge in " + std::to_string(sol.iterations) + " iterations");
    return sol;
}

inline void fill_metrics(OptsReport& rep, const FeederModel& model, PowerFlowSolution sol) {
    const OptsConfig& cfg = rep.config;
    rep.objective_verified = import_objective(sol, model);
    rep.envelope = voltage_envelope(sol, model);
    rep.feasible = feasibility(sol, model, cfg.verify_v_min, cfg.verify_v_max);
    rep.unbalance = voltage_unbalance(sol);
    rep.zbus_iterations = sol.iterations;
    rep.lower_bound = cfg.lower_bound;
    if (cfg.lower_bound) rep.gap_percent = optimality_gap(rep.objective_verified, *cfg.lower_bound);
    rep.solution = std::move(sol);
}

} // namespace detail

/// Verified metrics at fixed taps, no optimisation.
inline OptsReport evaluate_taps(const FeederModel& model, const TapVector& taps, const OptsConfig& cfg) {
    cfg.check();
    OptsReport rep;
    rep.feeder = model.name;
    rep.config = cfg;
    detail::Stopwatch clock;
    try {
        rep.ratios = ratios_from_taps(model, taps);
    } catch (const std::exception& e) {
        throw OptsError("taps", FailureKind::input, e.what());
    }
    rep.taps = taps;
    rep.continuous_ratios = rep.ratios;
    PowerFlowSolution sol = detail::checked_zbus(model, rep.ratios, cfg, "verify");
    detail::fill_metrics(rep, model, std::move(sol));
    rep.timings.push_back({"verify", clock.lap()});
    return rep;
}

/// Full pipeline: zero-tap base flow, constants, LP (plus tie-break), ratio
/// recovery and snapping, verification at the snapped taps.
inline OptsReport run_opts(const FeederModel& model, const OptsConfig& cfg) {
    try {
        cfg.check();
        require_valid(model);
    } catch (const std::exception& e) {
        throw OptsError("input", FailureKind::input, e.what());
    }
    if (model.svrs.empty()) return evaluate_taps(model, {}, cfg);

    OptsReport rep;
    rep.feeder = model.name;
    rep.config = cfg;
    detail::Stopwatch clock;

    const PowerFlowSolution base = detail::checked_zbus(model, unit_ratios(model), cfg, "base");
    rep.timings.push_back({"base", clock.lap()});

    LinearizationConstants k;
    try {
        k = cfg.constants == ConstantsMode::balanced ? constants_balanced(model) : constants_from_solution(model, base);
    } catch (const std::exception& e) {
        throw OptsError("constants", FailureKind::numeric, e.what());
    }
    rep.timings.push_back({"constants", clock.lap()});

    OptsLp olp;
    try {
        olp = build_lp(model, k, cfg);
    } catch (const std::exception& e) {
        throw OptsError("build", FailureKind::input, e.what());
    }
    const LpSolution first = solve_lp(olp.lp, cfg.lp);
    rep.lp_iterations = first.iterations;
    if (first.status == LpStatus::infeasible)
        throw OptsError("lp", FailureKind::infeasible, "linear program is infeasible for the configured voltage limits");
    if (first.status != LpStatus::optimal)
        throw OptsError("lp", FailureKind::numeric, std::string("simplex stopped with status ") + to_string(first.status));
    rep.objective_lp = first.objective;
    Eigen::VectorXd x = first.x;
    if (cfg.tie_break != TieBreak::none) {
        const SparseLp second = tie_break_lp(olp, first.objective, cfg);
        const LpSolution refined = solve_lp(second, cfg.lp);
        rep.lp_iterations += refined.iterations;
        if (refined.status != LpStatus::optimal)
            throw OptsError("lp", FailureKind::numeric,
                            std::string("tie-break solve stopped with status ") + to_string(refined.status));
        x = refined.x.head(olp.lp.cols());
    }
    rep.timings.push_back({"lp", clock.lap()});

    try {
        rep.continuous_ratios = recover_ratios(x, olp, model, cfg);
    } catch (const std::exception& e) {
        throw OptsError("recover", FailureKind::numeric, e.what());
    }
    for (std::size_t s = 0; s < model.svrs.size(); ++s) {
        const auto& svr = model.svrs[s];
        PhaseVector<int> t(svr.phases);
        for (Phase ph : svr.phases) t[ph] = ratio_to_tap(rep.continuous_ratios[s][ph], svr);
        rep.taps.push_back(t);
    }
    rep.ratios = ratios_from_taps(model, rep.taps);
    rep.timings.push_back({"recover", clock.lap()});

    PowerFlowSolution sol = detail::checked_zbus(model, rep.ratios, cfg, "verify");
    detail::fill_metrics(rep, model, std::move(sol));
    rep.timings.push_back({"verify", clock.lap()});
    return rep;
}

/// Equivalent feeder with every regulator replaced by a closed connection
/// (its secondary bus merged into the primary).
inline FeederModel without_svrs(const FeederModel& model) {
    FeederModel out = model;
    std::map<std::string, std::string> merged;
    for (const auto& s : model.svrs) merged[s.to] = s.from;
    out.svrs.clear();
    out.buses.clear();
    for (const auto& b : model.buses)
        if (!merged.count(b.id)) out.buses.push_back(b);
    for (auto& l : out.lines) {
        if (merged.count(l.from)) l.from = merged[l.from];
        if (merged.count(l.to)) l.to = merged[l.to];
    }
    require_valid(out);
    return out;
}

// ---------------------------------------------------------------------------
// Exhaustive tap search

struct BruteForceOptions {
    long long cap = 100000;
    double v_min = 0.9;
    double v_max = 1.1;
    ZbusOptions zbus;
};

struct BruteForceResult {
    bool found = false;
    TapVector best_taps;
    double best_objective = 0.0;
    long long evaluated = 0;
    long long feasible = 0;
    long long diverged = 0;
};

inline long long tap_combinations(const FeederModel& model) {
    long long total = 1;
    for (const auto& s : model.svrs)
        for ([[maybe_unused]] Phase ph : s.phases) {
            total *= static_cast<long long>(s.tap_max - s.tap_min + 1);
            if (total > (1LL << 40)) return total;
        }
    return total;
}

namespace detail {

/// Tie order between equal objectives: element-wise lexicographic on (|t|, t),
/// so neutral taps win, then the negative of a +-pair.
inline bool tap_order_less(const std::vector<int>& a, const std::vector<int>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto ka = std::make_pair(std::abs(a[i]), a[i]);
        const auto kb = std::make_pair(std::abs(b[i]), b[i]);
        if (ka != kb) return ka < kb;
    }
    return false;
}

} // namespace detail

inline BruteForceResult brute_force(const FeederModel& model, const BruteForceOptions& opts = {}) {
    require_valid(model);
    const long long total = tap_combinations(model);
    if (total > opts.cap)
        throw std::invalid_argument("tap grid has " + std::to_string(total) + " combinations, above the cap of " +
                                    std::to_string(opts.cap));

    struct Slot {
        int svr;
        Phase ph;
        int lo;
        int hi;
    };
    std::vector<Slot> slots;
    for (int s = 0; s < static_cast<int>(model.svrs.size()); ++s)
        for (Phase ph : model.svrs[s].phases) slots.push_back({s, ph, model.svrs[s].tap_min, model.svrs[s].tap_max});

    std::vector<int> cur(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) cur[i] = slots[i].lo;
    std::vector<int> best;
    BruteForceResult res;
    TapVector taps = zero_taps(model);
    const double eq_tol = 1e-12;
    while (true) {
        for (std::size_t i = 0; i < slots.size(); ++i) taps[slots[i].svr][slots[i].ph] = cur[i];
        ++res.evaluated;
        const PowerFlowSolution sol = solve_zbus(model, ratios_from_taps(model, taps), opts.zbus);
        if (!sol.converged) {
            ++res.diverged;
        } else if (feasibility(sol, model, opts.v_min, opts.v_max)) {
            ++res.feasible;
            const double c = import_objective(sol, model);
            const double scale = std::max(1.0, std::abs(c));
            const bool better = !res.found || c < res.best_objective - eq_tol * scale;
            const bool tie = res.found && !better && c <= res.best_objective + eq_tol * scale;
            if (better || (tie && detail::tap_order_less(cur, best))) {
                res.found = true;
                res.best_objective = c;
                res.best_taps = taps;
                best = cur;
            }
        }
        std::size_t i = slots.size();
        while (i > 0) {
            --i;
            if (cur[i] < slots[i].hi) {
                ++cur[i];
                break;
            }
            cur[i] = slots[i].lo;
            if (i == 0) {
                i = slots.size() + 1;
                break;
            }
        }
        if (slots.empty() || i == slots.size() + 1) break;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Report output

inline nlohmann::json taps_json(const FeederModel& model, const TapVector& taps, const RatioVector& ratios) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t s = 0; s < taps.size(); ++s) {
        nlohmann::json t = nlohmann::json::object();
        nlohmann::json r = nlohmann::json::object();
        for (Phase ph : taps[s].mask()) {
            t[std::string(1, phase_char(ph))] = taps[s][ph];
            r[std::string(1, phase_char(ph))] = ratios[s][ph];
        }
        arr.push_back({{"from", model.svrs[s].from}, {"to", model.svrs[s].to}, {"taps", t}, {"ratios", r}});
    }
    return arr;
}

inline nlohmann::json report_json(const FeederModel& model, const OptsReport& rep, bool with_timings = true) {
    nlohmann::json j;
    j["feeder"] = rep.feeder;
    j["svrs"] = taps_json(model, rep.taps, rep.ratios);
    nlohmann::json cont = nlohmann::json::array();
    for (const auto& r : rep.continuous_ratios) {
        nlohmann::json o = nlohmann::json::object();
        for (Phase ph : r.mask()) o[std::string(1, phase_char(ph))] = r[ph];
        cont.push_back(o);
    }
    j["continuous_ratios"] = cont;
    j["objective_lp"] = rep.objective_lp ? nlohmann::json(*rep.objective_lp) : nlohmann::json(nullptr);
    j["objective_verified"] = rep.objective_verified;
    j["v_min"] = rep.envelope.min;
    j["v_max"] = rep.envelope.max;
    j["feasible"] = rep.feasible;
    j["unbalance_percent"] = rep.unbalance;
    j["lower_bound"] = rep.lower_bound ? nlohmann::json(*rep.lower_bound) : nlohmann::json(nullptr);
    j["gap_percent"] = rep.gap_percent ? nlohmann::json(*rep.gap_percent) : nlohmann::json(nullptr);
    j["lp_iterations"] = rep.lp_iterations;
    j["zbus_iterations"] = rep.zbus_iterations;
    const OptsConfig& c = rep.config;
    j["config"] = {{"v_min", c.v_min},
                   {"v_max", c.v_max},
                   {"verify_v_min", c.verify_v_min},
                   {"verify_v_max", c.verify_v_max},
                   {"r_min", c.r_min},
                   {"r_max", c.r_max},
                   {"tol", c.zbus.tol},
                   {"max_iter", c.zbus.max_iter},
                   {"constants", to_string(c.constants)},
                   {"tie_break", to_string(c.tie_break)}};
    if (with_timings) {
        nlohmann::json t = nlohmann::json::object();
        for (const auto& s : rep.timings) t[s.stage] = s.seconds;
        j["timings_s"] = t;
    }
    return j;
}

inline void write_report_csv(std::ostream& os, const OptsReport& rep) {
    os << "feeder,objective_verified,objective_lp,v_min,v_max,feasible,unbalance_percent,gap_percent\n";
    char buf[320];
    std::string lp;
    std::string gap;
    if (rep.gap_percent) {
        char g[32];
        std::snprintf(g, sizeof g, "%.4f", *rep.gap_percent);
        gap = g;
    }
    if (rep.objective_lp) {
        char l[32];
        std::snprintf(l, sizeof l, "%.6f", *rep.objective_lp);
        lp = l;
    }
    std::snprintf(buf, sizeof buf, "%s,%.6f,%s,%.6f,%.6f,%s,%.4f,%s\n", rep.feeder.c_str(), rep.objective_verified,
                  lp.c_str(), rep.envelope.min, rep.envelope.max, rep.feasible ? "feasible" : "infeasible",
                  rep.unbalance, gap.c_str());
    os << buf;
}

inline void write_taps_csv(std::ostream& os, const FeederModel& model, const TapVector& taps, const RatioVector& ratios) {
    os << "svr,phase,tap,ratio\n";
    char buf[160];
    for (std::size_t s = 0; s < taps.size(); ++s)
        for (Phase ph : taps[s].mask()) {
            std::snprintf(buf, sizeof buf, "%s->%s,%c,%d,%.5f\n", model.svrs[s].from.c_str(), model.svrs[s].to.c_str(),
                          phase_char(ph), taps[s][ph], ratios[s][ph]);
            os << buf;
        }
}

} // namespace optap
