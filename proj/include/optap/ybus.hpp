#pragma once

#include "optap/feeder.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace optap {

using SparseComplex = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;
using DenseComplex = Eigen::MatrixXcd;
using VectorComplex = Eigen::VectorXcd;

/// Per-bus voltages indexed like `FeederModel::buses`.
using BusVoltages = std::vector<ComplexPhaseVector>;

struct Coordinate {
    int bus;
    Phase phase;
};

/// Bus admittance matrix with ideal-regulator secondaries eliminated.
///
/// Non-slack coordinates N are numbered 0..n-1, slack coordinates S are
/// numbered 0..s-1 in phase order. Then
///   i_N = Y v_N + Y_NS v_S,   i_S = Y_SN v_N + Y_SS v_S,
/// and `Y_S = [Y_SS  Y_SN]` acts on the stacked vector [v_S; v_N].
struct AdmittanceSystem {
    SparseComplex Y;
    SparseComplex Y_NS;
    SparseComplex Y_SN;
    SparseComplex Y_SS;
    SparseComplex Y_S;
    std::vector<Coordinate> coords;       // non-slack, retained
    std::vector<Coordinate> slack_coords;
    std::vector<std::string> eliminated; // SVR secondary bus ids
    std::map<std::pair<int, int>, int> row_of;

    int row(int bus, Phase p) const {
        auto it = row_of.find({bus, index_of(p)});
        if (it == row_of.end()) throw std::out_of_range("no admittance row for bus/phase");
        return it->second;
    }
    int size() const { return static_cast<int>(coords.size()); }
};

class SingularImpedanceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline DenseComplex dense(const PhaseMatrix& m, PhaseMask mask) {
    const int n = mask.size();
    DenseComplex out = DenseComplex::Zero(n, n);
    int r = 0;
    for (Phase pr : mask) {
        int c = 0;
        for (Phase pc : mask) out(r, c++) = m(pr, pc);
        ++r;
    }
    return out;
}

inline DenseComplex invert_impedance(const PhaseMatrix& z, const std::string& what) {
    const DenseComplex zd = dense(z, z.mask());
    Eigen::FullPivLU<DenseComplex> lu(zd);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) throw SingularImpedanceError(what + ": singular series impedance");
    return lu.inverse();
}

/// Indices of SVRs by secondary bus index.
inline std::map<int, int> svr_by_secondary(const FeederModel& model, const Topology& topo) {
    std::map<int, int> out;
    for (int k = 0; k < static_cast<int>(model.svrs.size()); ++k) out[topo.bus_index.at(model.svrs[k].to)] = k;
    return out;
}

/// Per-phase primary gain g over the regulated phases (v_primary = g v_secondary).
inline Eigen::VectorXd gains(const SvrSpec& svr, const RealPhaseVector& ratio) {
    Eigen::VectorXd g(svr.phases.size());
    int k = 0;
    for (Phase p : svr.phases) {
        if (!ratio.mask().contains(p))
            throw std::invalid_argument("svr " + svr.from + "->" + svr.to + " lacks a ratio for phase " + phase_char(p));
        const double r = ratio[p];
        if (!(r > 0.0)) throw std::invalid_argument("svr ratio must be positive");
        g(k++) = primary_gain(svr.kind, r);
    }
    return g;
}

/// Line leaving an SVR secondary.
inline int downstream_line(const Topology& topo, int secondary) {
    for (int e : topo.children[secondary])
        if (topo.edges[e].kind == EdgeKind::line) return topo.edges[e].index;
    throw std::logic_error("svr secondary without downstream line");
}

} // namespace detail

inline AdmittanceSystem assemble(const FeederModel& model, const RatioVector& ratios) {
    const Topology topo = build_topology(model);
    if (ratios.size() != model.svrs.size()) throw std::invalid_argument("ratio vector size does not match SVR count");
    const auto secondaries = detail::svr_by_secondary(model, topo);

    AdmittanceSystem sys;
    // Global numbering: slack coordinates first, then retained non-slack ones.
    std::map<std::pair<int, int>, int> global;
    for (Phase p : model.buses[topo.slack].phases) {
        global[{topo.slack, index_of(p)}] = static_cast<int>(sys.slack_coords.size());
        sys.slack_coords.push_back({topo.slack, p});
    }
    const int ns = static_cast<int>(sys.slack_coords.size());
    for (int b : topo.order) {
        if (b == topo.slack) continue;
        if (secondaries.count(b)) {
            sys.eliminated.push_back(model.buses[b].id);
            continue;
        }
        for (Phase p : model.buses[b].phases) {
            const int r = static_cast<int>(sys.coords.size());
            sys.row_of[{b, index_of(p)}] = r;
            global[{b, index_of(p)}] = ns + r;
            sys.coords.push_back({b, p});
        }
    }
    const int n = static_cast<int>(sys.coords.size());

    std::vector<Eigen::Triplet<Complex>> trip;
    auto stamp = [&](int bus_r, int bus_c, PhaseMask mask, const DenseComplex& block) {
        int i = 0;
        for (Phase pr : mask) {
            int j = 0;
            for (Phase pc : mask) {
                const Complex v = block(i, j);
                if (v != Complex{}) trip.emplace_back(global.at({bus_r, index_of(pr)}), global.at({bus_c, index_of(pc)}), v);
                ++j;
            }
            ++i;
        }
    };

    for (int k = 0; k < static_cast<int>(model.lines.size()); ++k) {
        const auto& line = model.lines[k];
        const int f = topo.bus_index.at(line.from);
        const int t = topo.bus_index.at(line.to);
        if (secondaries.count(f)) continue; // stamped with its regulator
        const DenseComplex yl = detail::invert_impedance(line.z, detail::line_name(line));
        const PhaseMask mask = line.z.mask();
        stamp(f, f, mask, yl);
        stamp(f, t, mask, -yl);
        stamp(t, f, mask, -yl);
        stamp(t, t, mask, yl);
    }
    for (const auto& [secondary, k] : secondaries) {
        const auto& svr = model.svrs[k];
        const auto& line = model.lines[detail::downstream_line(topo, secondary)];
        const int n_primary = topo.bus_index.at(svr.from);
        const int m = topo.bus_index.at(line.to);
        const DenseComplex yl = detail::invert_impedance(line.z, detail::line_name(line));
        const Eigen::VectorXd g = detail::gains(svr, ratios[k]);
        const DenseComplex ginv = g.cwiseInverse().cast<Complex>().asDiagonal();
        const PhaseMask mask = line.z.mask();
        stamp(n_primary, n_primary, mask, ginv * yl * ginv);
        stamp(n_primary, m, mask, -(ginv * yl));
        stamp(m, n_primary, mask, -(yl * ginv));
        stamp(m, m, mask, yl);
    }
    for (int b = 0; b < static_cast<int>(model.buses.size()); ++b) {
        const auto& bus = model.buses[b];
        if (!bus.shunt) continue;
        stamp(b, b, bus.shunt->mask(), detail::dense(*bus.shunt, bus.shunt->mask()));
    }

    SparseComplex full(ns + n, ns + n);
    full.setFromTriplets(trip.begin(), trip.end());
    full.prune(Complex{});
    sys.Y_SS = full.topLeftCorner(ns, ns);
    sys.Y_SN = full.topRightCorner(ns, n);
    sys.Y_NS = full.bottomLeftCorner(n, ns);
    sys.Y = full.bottomRightCorner(n, n);
    sys.Y_S = full.topRows(ns);
    sys.Y.makeCompressed();
    sys.Y_NS.makeCompressed();
    sys.Y_SN.makeCompressed();
    sys.Y_SS.makeCompressed();
    sys.Y_S.makeCompressed();
    return sys;
}

/// Secondary voltages of every SVR (indexed like `model.svrs`) from primary voltages.
inline std::vector<ComplexPhaseVector> recover_svr_secondary(const FeederModel& model, const RatioVector& ratios,
                                                             const BusVoltages& voltages) {
    if (ratios.size() != model.svrs.size()) throw std::invalid_argument("ratio vector size does not match SVR count");
    std::map<std::string, int> index;
    for (int i = 0; i < static_cast<int>(model.buses.size()); ++i) index[model.buses[i].id] = i;
    std::vector<ComplexPhaseVector> out;
    for (std::size_t k = 0; k < model.svrs.size(); ++k) {
        const auto& svr = model.svrs[k];
        const auto& primary = voltages.at(index.at(svr.from));
        ComplexPhaseVector v(svr.phases);
        for (Phase p : svr.phases) {
            const double r = ratios[k].at(p);
            if (r == 0.0) throw std::invalid_argument("zero regulator ratio");
            v[p] = primary.at(p) / primary_gain(svr.kind, r);
        }
        out.push_back(v);
    }
    return out;
}

/// Matrix Market coordinate dump; complex entries written as two reals.
inline void write_matrix_market(std::ostream& os, const SparseComplex& m) {
    os << "%%MatrixMarket matrix coordinate complex general\n";
    os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    char buf[96];
    for (int c = 0; c < m.outerSize(); ++c)
        for (SparseComplex::InnerIterator it(m, c); it; ++it) {
            std::snprintf(buf, sizeof buf, "%ld %ld %.17g %.17g\n", static_cast<long>(it.row() + 1),
                          static_cast<long>(it.col() + 1), it.value().real(), it.value().imag());
            os << buf;
        }
}

} // namespace optap
