#pragma once

// LinDist3Flow: squared voltage magnitudes v~ and complex sending-end edge
// flows S~ tied together by constant rotation matrices Gamma_m and constant
// higher-order terms H~ (voltage drop) and L~ (loss) per line.

#include "optap/feeder.hpp"
#include "optap/zbus.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace optap {

struct LinearizationConstants {
    std::vector<PhaseMatrix> gamma;          // per bus
    std::vector<RealPhaseVector> h;          // per line
    std::vector<ComplexPhaseVector> l;       // per line
};

/// Gamma from a balanced 1, a^2, a profile (a = 1 at 120 deg); H~ = L~ = 0.
inline LinearizationConstants constants_balanced(const FeederModel& model) {
    const Complex alpha = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    const std::array<Complex, 3> powers{Complex{1.0, 0.0}, alpha, alpha * alpha};
    LinearizationConstants k;
    for (const auto& bus : model.buses) {
        PhaseMatrix g(bus.phases);
        for (Phase r : bus.phases)
            for (Phase c : bus.phases) g(r, c) = powers[((index_of(c) - index_of(r)) % 3 + 3) % 3];
        k.gamma.push_back(g);
    }
    for (const auto& line : model.lines) {
        k.h.emplace_back(line.z.mask(), 0.0);
        k.l.emplace_back(line.z.mask(), Complex{});
    }
    return k;
}

/// Gamma, H~ and L~ evaluated at a converged power flow solution.
inline LinearizationConstants constants_from_solution(const FeederModel& model, const PowerFlowSolution& base) {
    detail::require_converged(base);
    LinearizationConstants k;
    for (std::size_t b = 0; b < model.buses.size(); ++b) {
        const auto& bus = model.buses[b];
        const auto& v = base.voltages.at(b);
        PhaseMatrix g(bus.phases);
        for (Phase r : bus.phases)
            for (Phase c : bus.phases) {
                if (std::abs(v.at(c)) == 0.0) throw NumericalError("zero voltage at bus " + bus.id);
                g(r, c) = v.at(r) / v.at(c);
            }
        k.gamma.push_back(g);
    }
    std::map<std::string, int> index;
    for (int i = 0; i < static_cast<int>(model.buses.size()); ++i) index[model.buses[i].id] = i;
    for (const auto& line : model.lines) {
        const PhaseMask mask = line.z.mask();
        const auto i = line_current(line, base.voltages[index.at(line.from)], base.voltages[index.at(line.to)]);
        RealPhaseVector h(mask);
        ComplexPhaseVector l(mask);
        for (Phase p : mask) {
            // diag(Z I Z^H) and diag(Z I) with I = i i^H
            Complex zi{};
            for (Phase q : mask) zi += line.z(p, q) * i[q];
            Complex hz{};
            for (Phase q : mask)
                for (Phase s : mask) hz += line.z(p, q) * i[q] * std::conj(i[s]) * std::conj(line.z(p, s));
            if (std::abs(hz.imag()) > 1e-10 * std::max(1.0, std::abs(hz)))
                throw NumericalError("higher-order voltage term has a non-negligible imaginary part");
            h[p] = hz.real();
            l[p] = zi * std::conj(i[p]);
        }
        k.h.push_back(h);
        k.l.push_back(l);
    }
    return k;
}

inline void check_constants(const FeederModel& model, const LinearizationConstants& k) {
    if (k.gamma.size() != model.buses.size() || k.h.size() != model.lines.size() || k.l.size() != model.lines.size())
        throw std::invalid_argument("linearization constants do not match the feeder");
    for (std::size_t b = 0; b < model.buses.size(); ++b)
        if (k.gamma[b].mask() != model.buses[b].phases)
            throw std::invalid_argument("rotation matrix phases differ from bus " + model.buses[b].id);
    for (std::size_t e = 0; e < model.lines.size(); ++e)
        if (k.h[e].mask() != model.lines[e].z.mask() || k.l[e].mask() != model.lines[e].z.mask())
            throw std::invalid_argument("higher-order term phases differ from line " + detail::line_name(model.lines[e]));
}

// ---------------------------------------------------------------------------
// Shared constraint rows

/// Column numbering for v~ (non-slack bus phases) and Re/Im S~ (edge phases).
struct LinDistVariables {
    std::vector<std::array<int, 3>> v; // per bus, -1 when absent or slack
    std::vector<std::array<int, 3>> p; // per topology edge
    std::vector<std::array<int, 3>> q;
    std::vector<std::string> names;
    int count = 0;

    int add(std::string name) {
        names.push_back(std::move(name));
        return count++;
    }
};

inline LinDistVariables number_variables(const FeederModel& model, const Topology& topo) {
    LinDistVariables vars;
    vars.v.assign(model.buses.size(), {-1, -1, -1});
    vars.p.assign(topo.edges.size(), {-1, -1, -1});
    vars.q.assign(topo.edges.size(), {-1, -1, -1});
    for (int b : topo.order) {
        if (b == topo.slack) continue;
        for (Phase ph : model.buses[b].phases)
            vars.v[b][index_of(ph)] = vars.add("v_" + model.buses[b].id + "_" + phase_char(ph));
    }
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        const Edge& edge = topo.edges[e];
        const std::string tag = model.buses[edge.from].id + "_" + model.buses[edge.to].id + "_";
        for (Phase ph : edge.phases) {
            vars.p[e][index_of(ph)] = vars.add("P_" + tag + phase_char(ph));
            vars.q[e][index_of(ph)] = vars.add("Q_" + tag + phase_char(ph));
        }
    }
    return vars;
}

enum class RowKind { voltage_drop, balance_re, balance_im, svr_balance_re, svr_balance_im, svr_gain, svr_gain_low, svr_gain_high };

/// A sparse real row  sum coef * x = rhs.
struct LinearRow {
    RowKind kind;
    std::vector<std::pair<int, double>> terms;
    double rhs = 0.0;
    std::string name;
};

namespace detail {

/// Adds coef * v~ for a bus phase, moving the fixed slack value to the right-hand side.
inline void add_voltage_term(LinearRow& row, const LinDistVariables& vars, const FeederModel& model, const Topology& topo,
                             int bus, Phase ph, double coef) {
    if (bus == topo.slack) {
        row.rhs -= coef * std::norm(model.slack_voltage.at(ph));
        return;
    }
    row.terms.emplace_back(vars.v[bus][index_of(ph)], coef);
}

} // namespace detail

/// Voltage-drop and power-balance rows for lines, exact balance rows for SVRs.
///
///   v~_n - v~_m - 2 Re{(Gamma_m o conj Z)(S~_nm - L~_nm)} = H~_nm
///   S~_nm - sum_k S~_mk - (Gamma_m o conj Y_m) v~_m = s_load,m + L~_nm
///   S~_nn' - S~_n'm = 0
///
/// S~ is the sending-end flow, so the receiving-end flow S~ - L~ enters the drop.
inline std::vector<LinearRow> branch_rows(const FeederModel& model, const Topology& topo,
                                          const LinearizationConstants& k, const LinDistVariables& vars) {
    check_constants(model, k);
    std::vector<LinearRow> rows;
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        const Edge& edge = topo.edges[e];
        const std::string tag = model.buses[edge.from].id + "_" + model.buses[edge.to].id + "_";
        if (edge.kind == EdgeKind::svr) {
            const int d = topo.line_edge(detail::downstream_line(topo, edge.to));
            for (Phase ph : edge.phases) {
                const int i = index_of(ph);
                rows.push_back({RowKind::svr_balance_re, {{vars.p[e][i], 1.0}, {vars.p[d][i], -1.0}}, 0.0,
                                "svrP_" + tag + phase_char(ph)});
                rows.push_back({RowKind::svr_balance_im, {{vars.q[e][i], 1.0}, {vars.q[d][i], -1.0}}, 0.0,
                                "svrQ_" + tag + phase_char(ph)});
            }
            continue;
        }
        const LineSpec& line = model.lines[edge.index];
        const PhaseMatrix& gamma = k.gamma[edge.to];
        const auto& h = k.h[edge.index];
        const auto& l = k.l[edge.index];
        const BusSpec& m = model.buses[edge.to];

        for (Phase ph : edge.phases) {
            LinearRow drop{RowKind::voltage_drop, {}, h[ph], "drop_" + tag + phase_char(ph)};
            detail::add_voltage_term(drop, vars, model, topo, edge.from, ph, 1.0);
            detail::add_voltage_term(drop, vars, model, topo, edge.to, ph, -1.0);
            for (Phase ps : edge.phases) {
                const Complex g = gamma(ph, ps) * std::conj(line.z(ph, ps));
                drop.terms.emplace_back(vars.p[e][index_of(ps)], -2.0 * g.real());
                drop.terms.emplace_back(vars.q[e][index_of(ps)], 2.0 * g.imag());
                drop.rhs -= 2.0 * (g * l[ps]).real();
            }
            rows.push_back(std::move(drop));

            const Complex fixed = m.load.get_or(ph, Complex{}) + l[ph];
            LinearRow re{RowKind::balance_re, {{vars.p[e][index_of(ph)], 1.0}}, fixed.real(), "balP_" + tag + phase_char(ph)};
            LinearRow im{RowKind::balance_im, {{vars.q[e][index_of(ph)], 1.0}}, fixed.imag(), "balQ_" + tag + phase_char(ph)};
            for (int c : topo.children[edge.to]) {
                const int i = index_of(ph);
                if (vars.p[c][i] < 0) continue;
                re.terms.emplace_back(vars.p[c][i], -1.0);
                im.terms.emplace_back(vars.q[c][i], -1.0);
            }
            if (m.shunt && m.shunt->mask().contains(ph)) {
                for (Phase ps : m.shunt->mask()) {
                    const Complex coef = gamma(ph, ps) * std::conj((*m.shunt)(ph, ps));
                    if (coef == Complex{}) continue;
                    detail::add_voltage_term(re, vars, model, topo, edge.to, ps, -coef.real());
                    detail::add_voltage_term(im, vars, model, topo, edge.to, ps, -coef.imag());
                }
            }
            rows.push_back(std::move(re));
            rows.push_back(std::move(im));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Fixed-ratio evaluation

struct LinearFlowResult {
    std::vector<RealPhaseVector> v_sq;     // per bus, slack included
    std::vector<ComplexPhaseVector> flows; // per topology edge, sending end
};

/// Solves the square LinDist3Flow system at fixed regulator ratios, with
/// the exact squared gain v~_n = g^2 v~_n' across each regulator.
inline LinearFlowResult linear_powerflow(const FeederModel& model, const LinearizationConstants& k,
                                         const RatioVector& ratios) {
    const Topology topo = build_topology(model);
    if (ratios.size() != model.svrs.size()) throw std::invalid_argument("ratio vector size does not match SVR count");
    const LinDistVariables vars = number_variables(model, topo);
    std::vector<LinearRow> rows = branch_rows(model, topo, k, vars);
    for (std::size_t s = 0; s < model.svrs.size(); ++s) {
        const auto& svr = model.svrs[s];
        const auto [lo, hi] = ratio_range(svr);
        const int n = topo.bus_index.at(svr.from);
        const int sec = topo.bus_index.at(svr.to);
        for (Phase ph : svr.phases) {
            const double r = ratios[s].at(ph);
            if (r < lo - 1e-12 || r > hi + 1e-12) throw std::out_of_range("regulator ratio outside its range");
            const double g = primary_gain(svr.kind, r);
            LinearRow row{RowKind::svr_gain, {}, 0.0, "gain_" + svr.from + "_" + phase_char(ph)};
            detail::add_voltage_term(row, vars, model, topo, n, ph, 1.0);
            detail::add_voltage_term(row, vars, model, topo, sec, ph, -g * g);
            rows.push_back(std::move(row));
        }
    }
    if (static_cast<int>(rows.size()) != vars.count)
        throw std::logic_error("LinDist3Flow system is not square");

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs(vars.count);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
        for (const auto& [col, coef] : rows[r].terms) trip.emplace_back(r, col, coef);
        rhs(r) = rows[r].rhs;
    }
    Eigen::SparseMatrix<double> a(vars.count, vars.count);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw NumericalError("LinDist3Flow system is singular");
    const Eigen::VectorXd x = lu.solve(rhs);

    LinearFlowResult out;
    for (std::size_t b = 0; b < model.buses.size(); ++b) {
        RealPhaseVector v(model.buses[b].phases);
        for (Phase ph : model.buses[b].phases)
            v[ph] = static_cast<int>(b) == topo.slack ? std::norm(model.slack_voltage[ph]) : x(vars.v[b][index_of(ph)]);
        out.v_sq.push_back(v);
    }
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        ComplexPhaseVector s(topo.edges[e].phases);
        for (Phase ph : topo.edges[e].phases) s[ph] = {x(vars.p[e][index_of(ph)]), x(vars.q[e][index_of(ph)])};
        out.flows.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear vs nonlinear voltage comparison

struct LinDiffRow {
    std::string phase; // "a", "b", "c" or "all"
    double max_abs_diff = 0.0;
    double min_linear = std::numeric_limits<double>::infinity();
    double min_exact = std::numeric_limits<double>::infinity();
};

/// Per-phase max | sqrt(v~) - |v| |, min sqrt(v~), min |v| over non-slack buses, plus an "all" row.
inline std::vector<LinDiffRow> lindiff(const FeederModel& model, const LinearFlowResult& lin, const PowerFlowSolution& exact) {
    std::vector<LinDiffRow> rows(4);
    rows[0].phase = "a";
    rows[1].phase = "b";
    rows[2].phase = "c";
    rows[3].phase = "all";
    for (std::size_t b = 0; b < model.buses.size(); ++b) {
        if (model.buses[b].is_slack) continue;
        for (Phase ph : model.buses[b].phases) {
            const double lin_mag = std::sqrt(std::max(0.0, lin.v_sq[b][ph]));
            const double mag = std::abs(exact.voltages[b][ph]);
            for (LinDiffRow* row : {&rows[index_of(ph)], &rows[3]}) {
                row->max_abs_diff = std::max(row->max_abs_diff, std::abs(lin_mag - mag));
                row->min_linear = std::min(row->min_linear, lin_mag);
                row->min_exact = std::min(row->min_exact, mag);
            }
        }
    }
    return rows;
}

inline void write_lindiff_csv(std::ostream& os, const std::vector<LinDiffRow>& rows) {
    os << "phase,max_abs_diff,min_linear,min_zbus\n";
    char buf[128];
    for (const auto& r : rows) {
        if (!std::isfinite(r.min_exact)) continue; // phase absent from the feeder
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f\n", r.phase.c_str(), r.max_abs_diff, r.min_linear, r.min_exact);
        os << buf;
    }
}

} // namespace optap
