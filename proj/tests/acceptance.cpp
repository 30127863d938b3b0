// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "optap/feeder_io.hpp"
#include "optap/lin3f.hpp"
#include "optap/opts.hpp"
#include "lp_oracle.hpp"
#include "opts_checks.hpp"
#include "test_support.hpp"
#include "tiny_feeders.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace optap;
using optap::testing::fixture;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

std::string fmt(const char* pattern, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("FAILED " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

// Criterion 6 collects every converged Z-bus solution produced here.
struct CertificateLog {
    long long solutions = 0;
    double worst_kcl = 0.0;
    double worst_objective = 0.0;
    void add(const FeederModel& m, const PowerFlowSolution& sol) {
        if (!sol.converged) return;
        const auto c = optap::testing::certify(m, sol);
        ++solutions;
        worst_kcl = std::max(worst_kcl, c.kcl);
        worst_objective = std::max(worst_objective, c.objective_mismatch);
    }
};

// Criterion 9 collects every optimal LP solution of the tap problem produced here.
struct BalanceLog {
    long long solutions = 0;
    double worst = 0.0;
};

CertificateLog certificates;
BalanceLog balances;

OptsConfig config_for(const FeederModel& m) {
    OptsConfig c;
    apply_defaults(c, m.defaults);
    return c;
}

/// run_opts plus a replay of its LP solves for the balance log.
OptsReport opts_logged(const FeederModel& m, const OptsConfig& cfg) {
    OptsReport rep = run_opts(m, cfg);
    certificates.add(m, rep.solution);
    if (m.svrs.empty()) return rep;
    const auto base = solve_zbus(m, unit_ratios(m), cfg.zbus);
    certificates.add(m, base);
    const auto k = cfg.constants == ConstantsMode::balanced ? constants_balanced(m) : constants_from_solution(m, base);
    const OptsLp olp = build_lp(m, k, cfg);
    const auto first = solve_lp(olp.lp, cfg.lp);
    if (first.status == LpStatus::optimal) {
        ++balances.solutions;
        balances.worst = std::max(balances.worst, optap::testing::svr_balance_error(olp, m, first.x));
        if (cfg.tie_break != TieBreak::none) {
            const auto second = solve_lp(tie_break_lp(olp, first.objective, cfg), cfg.lp);
            if (second.status == LpStatus::optimal) {
                ++balances.solutions;
                balances.worst = std::max(balances.worst,
                                          optap::testing::svr_balance_error(olp, m, second.x.head(olp.lp.cols())));
            }
        }
    }
    return rep;
}

void print(int id, const char* title, const Outcome& o) {
    std::printf("criterion %d [%s]: %s\n", id, title, o.pass ? "PASS" : "FAIL");
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
}

Outcome criterion1() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto m = fixture("ieee13.json");
    const auto ratios = unit_ratios(m);
    const auto sol = solve_zbus(m, ratios);
    certificates.add(m, sol);
    const auto rows = lindiff(m, linear_powerflow(m, constants_balanced(m), ratios), sol);
    const double dt = seconds_since(t0);
    for (int p = 0; p < 3; ++p)
        o.require(rows[p].max_abs_diff <= 0.015, fmt("phase %s max |diff| %.4f <= 0.015", rows[p].phase.c_str(),
                                                     rows[p].max_abs_diff));
    const auto& all = rows[3];
    o.require(within(all.min_exact, 0.88, 0.01), fmt("min |v| %.4f = 0.88 +- 0.01", all.min_exact));
    o.require(within(all.min_linear, 0.89, 0.01), fmt("min sqrt(v~) %.4f = 0.89 +- 0.01", all.min_linear));
    o.require(all.min_linear >= all.min_exact, "linear minimum overestimates the exact minimum");
    o.require(dt < 2.0, fmt("runtime %.3f s < 2 s", dt));
    o.note(fmt("max |diff| a/b/c = %.4f/%.4f/%.4f, min |v| = %.4f, min sqrt(v~) = %.4f, %.3f s", rows[0].max_abs_diff,
               rows[1].max_abs_diff, rows[2].max_abs_diff, all.min_exact, all.min_linear, dt));
    return o;
}

struct Ieee13Run {
    OptsReport rep;
    bool criterion2 = false;
};

Ieee13Run ieee13_run;

Outcome criterion2() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto m = fixture("ieee13.json");
    const OptsConfig cfg = config_for(m);
    const auto rep = opts_logged(m, cfg);
    const auto plain = without_svrs(m);
    const auto none = opts_logged(plain, cfg);
    const double dt = seconds_since(t0);
    o.require(cfg.v_min == 0.93 && cfg.verify_v_min == 0.9 && cfg.verify_v_max == 1.1, "LP v_min 0.93, band [0.9, 1.1]");
    o.require(within(rep.objective_verified, 0.7176, 0.01 * 0.7176),
              fmt("verified C %.5f = 0.7176 +- 1%%", rep.objective_verified));
    o.require(within(rep.envelope.min, 0.92, 0.015), fmt("envelope min %.4f = 0.92 +- 0.015", rep.envelope.min));
    o.require(within(rep.envelope.max, 1.04, 0.015), fmt("envelope max %.4f = 1.04 +- 0.015", rep.envelope.max));
    o.require(rep.feasible, "verified profile feasible");
    o.require(within(rep.unbalance, 4.15, 0.5), fmt("unbalance %.3f%% = 4.15 +- 0.5%%", rep.unbalance));
    o.require(within(none.objective_verified, 0.7198, 0.01 * 0.7198),
              fmt("no-regulator C %.5f = 0.7198 +- 1%%", none.objective_verified));
    o.require(!none.feasible, "no-regulator run flagged infeasible");
    o.require(dt < 5.0, fmt("runtime %.3f s < 5 s", dt));
    o.note(fmt("taps (%d, %d, %d), C = %.5f, envelope (%.4f, %.4f), %s, unbalance %.3f%%", rep.taps[0][Phase::a],
               rep.taps[0][Phase::b], rep.taps[0][Phase::c], rep.objective_verified, rep.envelope.min,
               rep.envelope.max, rep.feasible ? "feasible" : "infeasible", rep.unbalance));
    o.note(fmt("no regulator: C = %.5f, min |v| %.4f, %s; %.3f s", none.objective_verified, none.envelope.min,
               none.feasible ? "feasible" : "infeasible", dt));
    ieee13_run = {rep, o.pass};
    return o;
}

Outcome criterion3() {
    Outcome o;
    const auto& rep = ieee13_run.rep;
    const int want[3] = {4, -8, 7};
    bool exact = true, near = true;
    for (Phase p : all_phases) {
        const int t = rep.taps[0][p];
        exact = exact && t == want[index_of(p)];
        near = near && std::abs(t - want[index_of(p)]) <= 2;
    }
    o.note(fmt("recovered taps (%d, %d, %d) vs (4, -8, 7)", rep.taps[0][Phase::a], rep.taps[0][Phase::b],
               rep.taps[0][Phase::c]));
    if (exact) return o;
    o.require(near, "each tap within +-2 steps");
    o.require(within(rep.objective_verified, 0.7176, 0.01 * 0.7176),
              fmt("verified C %.5f within the criterion 2 objective band 0.7176 +- 1%%", rep.objective_verified));
    o.note(std::string("remaining criterion 2 clauses: ") + (ieee13_run.criterion2 ? "met" : "not all met"));
    return o;
}

Outcome criterion4() {
    Outcome o;
    const double g1 = optimality_gap(0.7176, 0.7141);
    const double g2 = optimality_gap(0.4206, 0.4161);
    o.require(within(g1, 0.49, 0.01), fmt("gap(0.7176, 0.7141) = %.4f = 0.49 +- 0.01", g1));
    o.require(within(g2, 1.08, 0.01), fmt("gap(0.4206, 0.4161) = %.4f = 1.08 +- 0.01", g2));
    o.note(fmt("%.4f%%, %.4f%%", g1, g2));
    return o;
}

Outcome criterion5() {
    Outcome o;
    const auto t0 = Clock::now();
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const auto m = optap::testing::tiny_feeder(seed);
        OptsConfig cfg;
        const auto rep = opts_logged(m, cfg);
        BruteForceOptions bo;
        bo.v_min = cfg.verify_v_min;
        bo.v_max = cfg.verify_v_max;
        const auto best = brute_force(m, bo);
        for (int t = m.svrs[0].tap_min; t <= m.svrs[0].tap_max; ++t)
            certificates.add(m, solve_zbus(m, ratios_from_taps(m, TapVector{PhaseVector<int>(m.svrs[0].phases, t)})));
        o.require(best.found && best.evaluated == 33, fmt("%s: brute-force best exists over 33 taps", m.name.c_str()));
        if (!best.found) continue;
        const double ratio = rep.objective_verified / best.best_objective;
        o.require(ratio <= 1.005, fmt("%s: opts C %.6f <= 1.005 x brute-force C %.6f (ratio %.5f)", m.name.c_str(),
                                      rep.objective_verified, best.best_objective, ratio));
        o.note(fmt("%s (%s): opts tap %d C %.6f, brute-force tap %d C %.6f, ratio %.5f", m.name.c_str(),
                   m.svrs[0].kind == SvrKind::A ? "A" : "B", rep.taps[0][Phase::a], rep.objective_verified,
                   best.best_taps[0][Phase::a], best.best_objective, ratio));
    }
    const double dt = seconds_since(t0);
    o.require(dt < 10.0, fmt("runtime %.3f s < 10 s", dt));
    o.note(fmt("%.3f s", dt));
    return o;
}

Outcome criterion7() {
    Outcome o;
    std::vector<FeederModel> models = {fixture("ieee13.json"), fixture("tiny3.json"), fixture("tiny3_noload.json")};
    for (unsigned s = 1; s <= 5; ++s) models.push_back(optap::testing::tiny_feeder(s));
    std::mt19937 rng(7);
    double worst = 0.0;
    int cases = 0;
    for (const auto& m : models)
        for (int trial = 0; trial < 10; ++trial) {
            RatioVector ratios;
            for (const auto& s : m.svrs) {
                const auto [lo, hi] = ratio_range(s);
                std::uniform_real_distribution<double> d(lo, hi);
                RealPhaseVector r(s.phases);
                for (Phase p : s.phases) r[p] = trial == 0 ? 1.0 : d(rng);
                ratios.push_back(r);
            }
            const auto sol = solve_zbus(m, ratios, {1e-12, 500});
            certificates.add(m, sol);
            if (!sol.converged) {
                o.require(false, m.name + ": power flow converged");
                continue;
            }
            const auto lin = linear_powerflow(m, constants_from_solution(m, sol), ratios);
            for (std::size_t b = 0; b < m.buses.size(); ++b)
                for (Phase p : m.buses[b].phases)
                    worst = std::max(worst, std::abs(lin.v_sq[b][p] - std::norm(sol.voltages[b][p])));
            ++cases;
        }
    o.require(worst <= 1e-8, fmt("max |v~ - |v|^2| %.2e <= 1e-8", worst));
    o.note(fmt("%d fixture/ratio cases, max |v~ - |v|^2| = %.2e", cases, worst));
    return o;
}

Outcome criterion8() {
    using namespace optap::testing;
    Outcome o;
    std::mt19937 rng(20240611);
    int agree = 0, counts[3] = {0, 0, 0};
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const RandomLp r = random_lp(rng, k % 5 == 3 ? 1 : k % 5 == 4 ? 2 : 0);
        const SparseLp lp = make_lp(r.A, r.b, r.c, r.lo, r.hi);
        const OracleResult want = oracle(r.A, r.b, r.c, r.lo, r.hi);
        const LpSolution got = solve_lp(lp);
        const LpSolution again = solve_lp(lp);
        const bool same_class = verdict_of(got.status) == want.verdict;
        bool ok = same_class;
        if (same_class && want.verdict == Verdict::optimal) {
            const double err = std::abs(got.objective - want.objective) / std::max(1.0, std::abs(want.objective));
            worst = std::max(worst, err);
            ok = err <= 1e-7;
        }
        const bool deterministic = got.status == again.status && got.x == again.x && got.iterations == again.iterations;
        o.require(ok, fmt("LP %d: %s vs oracle", k, to_string(got.status)));
        o.require(deterministic, fmt("LP %d: repeated solve identical", k));
        if (ok && deterministic) ++agree;
        if (want.verdict != Verdict::other) ++counts[static_cast<int>(want.verdict)];
    }
    o.note(fmt("%d/50 agree (optimal %d, infeasible %d, unbounded %d), max relative objective error %.2e", agree,
               counts[0], counts[1], counts[2], worst));
    return o;
}

Outcome criterion9() {
    Outcome o;
    int round_trip_failures = 0;
    for (SvrKind kind : {SvrKind::A, SvrKind::B})
        for (int t = -16; t <= 16; ++t)
            if (ratio_to_tap(tap_to_ratio(t, kind, 0.00625), kind, 0.00625) != t) ++round_trip_failures;
    o.require(round_trip_failures == 0, "tap -> ratio -> tap over all 66 taps");

    std::mt19937 rng(1234);
    std::uniform_real_distribution<double> r_dist(0.85, 1.15), v_dist(0.8, 1.2);
    int pairs = 0, mismatches = 0;
    for (SvrKind kind : {SvrKind::A, SvrKind::B}) {
        const auto m = optap::testing::upstream_line_feeder(kind);
        const OptsConfig cfg;
        const OptsLp olp = build_lp(m, constants_balanced(m), cfg);
        const auto [lo, hi] = effective_ratio_range(m.svrs[0], cfg);
        const int col_p = olp.vars.v[olp.topo.bus_index.at("p")][0];
        const int col_r = olp.vars.v[olp.topo.bus_index.at("reg")][0];
        for (int k = 0; k < 500; ++k) {
            const double r = r_dist(rng), v = v_dist(rng), g = primary_gain(kind, r);
            Eigen::VectorXd x = Eigen::VectorXd::Zero(olp.lp.cols());
            x(col_r) = v;
            x(col_p) = g * g * v;
            const auto [s_lo, s_hi] = optap::testing::relaxation_slacks(olp, m, 0, Phase::a, x);
            const bool admitted = s_lo >= -1e-12 && s_hi >= -1e-12;
            ++pairs;
            if (admitted != (r >= lo && r <= hi)) ++mismatches;
        }
        opts_logged(m, cfg);
    }
    o.require(pairs >= 1000 && mismatches == 0, fmt("relaxation membership on %d pairs, %d mismatches", pairs, mismatches));
    o.require(balances.solutions > 0 && balances.worst <= 1e-7,
              fmt("regulator power balance over %lld optimal LP solutions, worst %.2e <= 1e-7", balances.solutions,
                  balances.worst));
    o.note(fmt("round trip 66/66, %d relaxation pairs, balance worst %.2e over %lld LP solutions",
               pairs - mismatches, balances.worst, balances.solutions));
    return o;
}

Outcome criterion6() {
    Outcome o;
    std::vector<FeederModel> models = {fixture("ieee13.json"), fixture("tiny3.json"), fixture("tiny3_noload.json")};
    std::mt19937 rng(6);
    for (const auto& m : models)
        for (int k = 0; k < 20; ++k)
            certificates.add(m, solve_zbus(m, ratios_from_taps(m, optap::testing::random_taps(m, rng))));
    o.require(certificates.worst_kcl <= 1e-8, fmt("worst KCL residual %.2e <= 1e-8", certificates.worst_kcl));
    o.require(certificates.worst_objective <= 1e-10,
              fmt("worst objective mismatch %.2e <= 1e-10", certificates.worst_objective));
    o.note(fmt("%lld converged solutions, worst KCL %.2e, worst objective mismatch %.2e", certificates.solutions,
               certificates.worst_kcl, certificates.worst_objective));
    return o;
}

} // namespace

int main() {
    struct Item {
        int id;
        const char* title;
        std::function<Outcome()> run;
    };
    // Criterion 6 runs last so that it certifies every solution produced by the others.
    const std::vector<Item> order = {
        {1, "linear vs nonlinear voltages, IEEE-13", criterion1},
        {2, "optimal taps verified on IEEE-13", criterion2},
        {3, "recovered IEEE-13 taps", criterion3},
        {4, "optimality gap arithmetic", criterion4},
        {5, "tiny feeders vs exhaustive search", criterion5},
        {7, "linearization-point exactness", criterion7},
        {8, "simplex vs vertex enumeration", criterion8},
        {9, "round trip and relaxation invariants", criterion9},
        {6, "power flow certificates", criterion6},
    };
    std::vector<std::pair<const Item*, Outcome>> results;
    for (const auto& item : order) {
        Outcome o;
        try {
            o = item.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.notes.push_back(std::string("exception: ") + e.what());
        }
        results.emplace_back(&item, o);
    }
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.first->id < b.first->id; });
    int failed = 0;
    for (const auto& [item, o] : results) {
        print(item->id, item->title, o);
        if (!o.pass) ++failed;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
    return failed == 0 ? 0 : 1;
}
