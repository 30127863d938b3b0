#pragma once

#include "optap/feeder.hpp"
#include "optap/ybus.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace optap {

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ZbusOptions {
    double tol = 1e-9; // on max |dv| between iterates
    int max_iter = 200;
};

struct PowerFlowSolution {
    BusVoltages voltages; // every bus, slack and SVR secondaries included
    RatioVector ratios;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity(); // inf-norm of nodal current mismatch
    double last_step = std::numeric_limits<double>::infinity();
    bool converged = false;
};

namespace detail {

inline Complex flat_start_value(const FeederModel& model, Phase p) {
    if (model.slack_voltage.mask().contains(p)) return model.slack_voltage[p];
    // Phase missing at the slack: fall back to a balanced phasor at the mean slack magnitude.
    double mag = 0.0;
    for (Phase q : model.slack_voltage.mask()) mag += std::abs(model.slack_voltage[q]);
    mag /= std::max(1, model.slack_voltage.mask().size());
    return std::polar(mag, -2.0 * std::numbers::pi / 3.0 * index_of(p));
}

/// Constant-power injection current conj(s_inj / v) with s_inj = -load.
inline Complex load_current(const BusSpec& bus, Phase p, Complex v) {
    const Complex load = bus.load.get_or(p, Complex{});
    if (load == Complex{}) return {};
    return std::conj(-load / v);
}

inline void require_converged(const PowerFlowSolution& sol) {
    if (!sol.converged) throw NumericalError("power flow solution has not converged");
}

} // namespace detail

/// Nonlinear power flow at fixed ratios by Z-bus fixed-point iteration:
///   v <- Y^{-1} (conj(s_inj / v) - Y_NS v_S)
/// with shunt admittances folded into Y. Divergence is reported through
/// `converged = false`, never thrown.
inline PowerFlowSolution solve_zbus(const FeederModel& model, const RatioVector& ratios, const ZbusOptions& opts = {},
                                    const std::optional<BusVoltages>& v0 = std::nullopt) {
    if (!(opts.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    const AdmittanceSystem sys = assemble(model, ratios);
    const int n = sys.size();

    VectorComplex vs(static_cast<Eigen::Index>(sys.slack_coords.size()));
    for (std::size_t k = 0; k < sys.slack_coords.size(); ++k) vs(k) = model.slack_voltage.at(sys.slack_coords[k].phase);
    const VectorComplex w = sys.Y_NS * vs;

    Eigen::SparseLU<SparseComplex> lu;
    lu.compute(sys.Y);
    if (lu.info() != Eigen::Success) throw NumericalError("bus admittance matrix is singular: " + lu.lastErrorMessage());

    VectorComplex v(n);
    for (int r = 0; r < n; ++r) {
        const auto& c = sys.coords[r];
        if (v0 && static_cast<int>(v0->size()) > c.bus && (*v0)[c.bus].mask().contains(c.phase))
            v(r) = (*v0)[c.bus][c.phase];
        else
            v(r) = detail::flat_start_value(model, c.phase);
    }

    auto injections = [&](const VectorComplex& x) {
        VectorComplex i(n);
        for (int r = 0; r < n; ++r) i(r) = detail::load_current(model.buses[sys.coords[r].bus], sys.coords[r].phase, x(r));
        return i;
    };

    PowerFlowSolution sol;
    sol.ratios = ratios;
    for (int it = 1; it <= opts.max_iter; ++it) {
        const VectorComplex next = lu.solve(injections(v) - w);
        const double step = n == 0 ? 0.0 : (next - v).cwiseAbs().maxCoeff();
        v = next;
        sol.iterations = it;
        sol.last_step = step;
        if (!std::isfinite(step)) break;
        if (step < opts.tol) {
            sol.converged = true;
            break;
        }
    }
    sol.residual = n == 0 ? 0.0 : (sys.Y * v + w - injections(v)).cwiseAbs().maxCoeff();
    if (!std::isfinite(sol.residual)) sol.converged = false;

    sol.voltages.resize(model.buses.size());
    for (std::size_t b = 0; b < model.buses.size(); ++b) sol.voltages[b] = ComplexPhaseVector(model.buses[b].phases);
    for (const auto& c : sys.slack_coords) sol.voltages[c.bus][c.phase] = model.slack_voltage[c.phase];
    for (int r = 0; r < n; ++r) sol.voltages[sys.coords[r].bus][sys.coords[r].phase] = v(r);
    const auto secondary = recover_svr_secondary(model, ratios, sol.voltages);
    for (std::size_t k = 0; k < model.svrs.size(); ++k) {
        const auto& svr = model.svrs[k];
        for (int b = 0; b < static_cast<int>(model.buses.size()); ++b)
            if (model.buses[b].id == svr.to) sol.voltages[b] = secondary[k];
    }
    return sol;
}

/// Branch current n->m of a line over its phase mask, i = Z^{-1}(v_n - v_m).
inline ComplexPhaseVector line_current(const LineSpec& line, const ComplexPhaseVector& v_from,
                                       const ComplexPhaseVector& v_to) {
    const PhaseMask mask = line.z.mask();
    const DenseComplex yl = detail::invert_impedance(line.z, detail::line_name(line));
    VectorComplex dv(mask.size());
    int k = 0;
    for (Phase p : mask) dv(k++) = v_from.at(p) - v_to.at(p);
    const VectorComplex i = yl * dv;
    ComplexPhaseVector out(mask);
    k = 0;
    for (Phase p : mask) out[p] = i(k++);
    return out;
}

/// Current entering every edge at its sending end, indexed like `Topology::edges`.
inline std::vector<ComplexPhaseVector> edge_currents(const FeederModel& model, const Topology& topo,
                                                     const PowerFlowSolution& sol) {
    std::vector<ComplexPhaseVector> out(topo.edges.size());
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        const Edge& edge = topo.edges[e];
        if (edge.kind == EdgeKind::line)
            out[e] = line_current(model.lines[edge.index], sol.voltages[edge.from], sol.voltages[edge.to]);
    }
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        const Edge& edge = topo.edges[e];
        if (edge.kind != EdgeKind::svr) continue;
        const auto& svr = model.svrs[edge.index];
        const auto& downstream = out[topo.line_edge(detail::downstream_line(topo, edge.to))];
        ComplexPhaseVector i(svr.phases);
        for (Phase p : svr.phases) i[p] = downstream.at(p) / primary_gain(svr.kind, sol.ratios[edge.index].at(p));
        out[e] = i;
    }
    return out;
}

/// Worst nodal KCL mismatch, recomputed branch by branch from Ohm's law and
/// the nodal injection i_m = conj(s_inj / v_m) - Y_m v_m (slack and SVR
/// secondaries excluded).
inline double kcl_residual(const FeederModel& model, const PowerFlowSolution& sol) {
    const Topology topo = build_topology(model);
    const auto currents = edge_currents(model, topo, sol);
    std::vector<bool> secondary(model.buses.size(), false);
    for (const auto& s : model.svrs) secondary[topo.bus_index.at(s.to)] = true;
    double worst = 0.0;
    for (int b = 0; b < static_cast<int>(model.buses.size()); ++b) {
        if (b == topo.slack || secondary[b]) continue;
        const auto& bus = model.buses[b];
        const auto& v = sol.voltages[b];
        for (Phase p : bus.phases) {
            Complex balance = currents[topo.parent_edge[b]].get_or(p, Complex{});
            for (int e : topo.children[b]) balance -= currents[e].get_or(p, Complex{});
            balance += detail::load_current(bus, p, v[p]);
            if (bus.shunt && bus.shunt->mask().contains(p))
                for (Phase q : bus.shunt->mask()) balance -= (*bus.shunt)(p, q) * v[q];
            worst = std::max(worst, std::abs(balance));
        }
    }
    return worst;
}

/// Real power import Re{1^T diag(v_S conj(Y_S v))} through the slack row of the admittance matrix.
inline double import_objective(const PowerFlowSolution& sol, const FeederModel& model) {
    detail::require_converged(sol);
    const AdmittanceSystem sys = assemble(model, sol.ratios);
    const int ns = static_cast<int>(sys.slack_coords.size());
    VectorComplex stacked(ns + sys.size());
    for (int k = 0; k < ns; ++k) stacked(k) = sol.voltages[sys.slack_coords[k].bus][sys.slack_coords[k].phase];
    for (int r = 0; r < sys.size(); ++r) stacked(ns + r) = sol.voltages[sys.coords[r].bus][sys.coords[r].phase];
    const VectorComplex i_s = sys.Y_S * stacked;
    double c = 0.0;
    for (int k = 0; k < ns; ++k) c += (stacked(k) * std::conj(i_s(k))).real();
    return c;
}

/// Same quantity summed edge by edge over the feeder-head edges, Re{sum 1^T diag(v_S conj(i_Sm))}.
inline double import_objective_edges(const PowerFlowSolution& sol, const FeederModel& model) {
    detail::require_converged(sol);
    const Topology topo = build_topology(model);
    const auto currents = edge_currents(model, topo, sol);
    const auto& vs = sol.voltages[topo.slack];
    double c = 0.0;
    for (int e : topo.children[topo.slack])
        for (Phase p : topo.edges[e].phases) c += (vs[p] * std::conj(currents[e][p])).real();
    return c;
}

/// Largest bus voltage unbalance in percent: 100 max_phi | |v_phi| - avg | / avg, buses with >= 2 phases.
inline double voltage_unbalance(const PowerFlowSolution& sol) {
    double worst = 0.0;
    for (const auto& v : sol.voltages) {
        if (v.mask().size() < 2) continue;
        double avg = 0.0;
        for (Phase p : v.mask()) avg += std::abs(v[p]);
        avg /= v.mask().size();
        if (avg <= 0.0) continue;
        for (Phase p : v.mask()) worst = std::max(worst, 100.0 * std::abs(std::abs(v[p]) - avg) / avg);
    }
    return worst;
}

struct VoltageEnvelope {
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
};

/// Extreme voltage magnitudes over non-slack buses and phases.
inline VoltageEnvelope voltage_envelope(const PowerFlowSolution& sol, const FeederModel& model) {
    detail::require_converged(sol);
    VoltageEnvelope env;
    for (std::size_t b = 0; b < model.buses.size(); ++b) {
        if (model.buses[b].is_slack) continue;
        for (Phase p : sol.voltages[b].mask()) {
            const double m = std::abs(sol.voltages[b][p]);
            env.min = std::min(env.min, m);
            env.max = std::max(env.max, m);
        }
    }
    return env;
}

inline bool feasibility(const PowerFlowSolution& sol, const FeederModel& model, double v_min, double v_max) {
    const VoltageEnvelope env = voltage_envelope(sol, model);
    return env.min >= v_min && env.max <= v_max;
}

/// CSV: bus,phase,re,im,magnitude,angle_deg in feeder bus order.
inline void write_solution_csv(std::ostream& os, const FeederModel& model, const PowerFlowSolution& sol) {
    os << "bus,phase,re,im,magnitude,angle_deg\n";
    char buf[160];
    for (std::size_t b = 0; b < model.buses.size(); ++b)
        for (Phase p : sol.voltages[b].mask()) {
            const Complex v = sol.voltages[b][p];
            std::snprintf(buf, sizeof buf, "%s,%c,%.10f,%.10f,%.10f,%.6f\n", model.buses[b].id.c_str(), phase_char(p),
                          v.real(), v.imag(), std::abs(v), std::arg(v) * 180.0 / std::numbers::pi);
            os << buf;
        }
}

} // namespace optap
