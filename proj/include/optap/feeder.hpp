#pragma once

#include "optap/phase.hpp"

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace optap {

enum class SvrKind { A, B };

struct BusSpec {
    std::string id;
    PhaseMask phases;
    ComplexPhaseVector load;          // constant-power consumption, p.u.
    std::optional<PhaseMatrix> shunt; // constant admittance, p.u.
    bool is_slack = false;
};

struct LineSpec {
    std::string from;
    std::string to;
    PhaseMatrix z;
};

struct SvrSpec {
    std::string from; // primary
    std::string to;   // secondary
    SvrKind kind = SvrKind::B;
    PhaseMask phases;
    int tap_min = -16;
    int tap_max = 16;
    double step = 0.00625;
};

/// Optional run settings shipped inside a feeder file. Command-line flags override them.
struct FeederDefaults {
    std::optional<double> v_min;
    std::optional<double> v_max;
    std::optional<double> verify_v_min;
    std::optional<double> verify_v_max;
    std::optional<double> tol;
    std::optional<int> max_iter;
    std::optional<std::string> constants;

    bool empty() const {
        return !v_min && !v_max && !verify_v_min && !verify_v_max && !tol && !max_iter && !constants;
    }
    bool operator==(const FeederDefaults&) const = default;
};

struct FeederModel {
    std::string name;
    std::vector<BusSpec> buses;
    std::vector<LineSpec> lines;
    std::vector<SvrSpec> svrs;
    ComplexPhaseVector slack_voltage;
    FeederDefaults defaults;
};

using TapVector = std::vector<PhaseVector<int>>;
using RatioVector = std::vector<RealPhaseVector>;

// ---------------------------------------------------------------------------
// Tap <-> ratio algebra

struct TapBounds {
    int min = -16;
    int max = 16;
};

inline double tap_to_ratio(int tap, SvrKind kind, double step, TapBounds bounds = {}) {
    if (tap < bounds.min || tap > bounds.max)
        throw std::out_of_range("tap " + std::to_string(tap) + " outside [" + std::to_string(bounds.min) + ", " +
                                std::to_string(bounds.max) + "]");
    return kind == SvrKind::B ? 1.0 - step * tap : 1.0 + step * tap;
}

/// Nearest tap for a continuous ratio; halves round away from zero, then clamp.
inline int ratio_to_tap(double ratio, SvrKind kind, double step, TapBounds bounds = {}) {
    const double raw = kind == SvrKind::B ? (1.0 - ratio) / step : (ratio - 1.0) / step;
    // Snap values within floating noise of a half so that e.g. 0.5 - 1e-15 still rounds away from zero.
    const double snapped = std::round(raw * 1e9) / 1e9;
    const long t = std::lround(snapped);
    if (t < bounds.min) return bounds.min;
    if (t > bounds.max) return bounds.max;
    return static_cast<int>(t);
}

inline TapBounds tap_bounds(const SvrSpec& svr) { return {svr.tap_min, svr.tap_max}; }

inline double tap_to_ratio(int tap, const SvrSpec& svr) { return tap_to_ratio(tap, svr.kind, svr.step, tap_bounds(svr)); }
inline int ratio_to_tap(double ratio, const SvrSpec& svr) {
    return ratio_to_tap(ratio, svr.kind, svr.step, tap_bounds(svr));
}

/// Achievable ratio interval of a device.
inline std::pair<double, double> ratio_range(const SvrSpec& svr) {
    const double lo = tap_to_ratio(svr.kind == SvrKind::B ? svr.tap_max : svr.tap_min, svr);
    const double hi = tap_to_ratio(svr.kind == SvrKind::B ? svr.tap_min : svr.tap_max, svr);
    return {lo, hi};
}

/// Voltage gain g with v_primary = g * v_secondary.
inline double primary_gain(SvrKind kind, double ratio) { return kind == SvrKind::B ? ratio : 1.0 / ratio; }

inline TapVector zero_taps(const FeederModel& model) {
    TapVector taps;
    for (const auto& s : model.svrs) taps.emplace_back(s.phases, 0);
    return taps;
}

inline RatioVector ratios_from_taps(const FeederModel& model, const TapVector& taps) {
    if (taps.size() != model.svrs.size()) throw std::invalid_argument("tap vector size does not match SVR count");
    RatioVector ratios;
    for (std::size_t k = 0; k < taps.size(); ++k) {
        const auto& svr = model.svrs[k];
        RealPhaseVector r(svr.phases);
        for (Phase p : svr.phases) r[p] = tap_to_ratio(taps[k].at(p), svr);
        ratios.push_back(r);
    }
    return ratios;
}

inline RatioVector unit_ratios(const FeederModel& model) { return ratios_from_taps(model, zero_taps(model)); }

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string element;
    std::string rule;
    std::string message;
};

namespace rule {
inline constexpr const char* duplicate_id = "duplicate-id";
inline constexpr const char* unknown_bus = "unknown-bus";
inline constexpr const char* slack_count = "slack-count";
inline constexpr const char* slack_load = "slack-no-load";
inline constexpr const char* mask_subset = "mask-subset";
inline constexpr const char* line_mask = "line-mask";
inline constexpr const char* line_impedance = "line-impedance";
inline constexpr const char* svr_settings = "svr-settings";
inline constexpr const char* svr_isolation = "svr-secondary-isolation";
inline constexpr const char* not_a_tree = "not-a-tree";
inline constexpr const char* phase_continuity = "phase-continuity";
inline constexpr const char* slack_voltage = "slack-voltage";
inline constexpr const char* non_finite = "non-finite";
} // namespace rule

namespace detail {

inline bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

inline std::string line_name(const LineSpec& l) { return "line " + l.from + "->" + l.to; }
inline std::string svr_name(const SvrSpec& s) { return "svr " + s.from + "->" + s.to; }

} // namespace detail

inline std::vector<Violation> validate(const FeederModel& model) {
    std::vector<Violation> out;
    auto add = [&](std::string element, const char* r, std::string msg) {
        out.push_back({std::move(element), r, std::move(msg)});
    };

    std::map<std::string, int> index;
    int slack_count = 0;
    for (int i = 0; i < static_cast<int>(model.buses.size()); ++i) {
        const auto& b = model.buses[i];
        const std::string el = "bus " + b.id;
        if (!index.emplace(b.id, i).second) add(el, rule::duplicate_id, "bus id appears more than once");
        if (b.phases.empty()) add(el, rule::mask_subset, "bus has no phases");
        if (!b.load.mask().subset_of(b.phases)) add(el, rule::mask_subset, "load phases not present at bus");
        for (Phase p : b.load.mask())
            if (!detail::finite(b.load[p])) add(el, rule::non_finite, "load is not finite");
        if (b.shunt) {
            if (!b.shunt->mask().subset_of(b.phases)) add(el, rule::mask_subset, "shunt phases not present at bus");
            for (Phase r : b.shunt->mask())
                for (Phase c : b.shunt->mask())
                    if (!detail::finite((*b.shunt)(r, c))) add(el, rule::non_finite, "shunt is not finite");
        }
        if (b.is_slack) {
            ++slack_count;
            bool has_load = false;
            for (Phase p : b.load.mask()) has_load = has_load || b.load[p] != Complex{};
            if (has_load || b.shunt) add(el, rule::slack_load, "slack bus carries a load or shunt");
            if (model.slack_voltage.mask() != b.phases)
                add(el, rule::slack_voltage, "slack voltage phases differ from slack bus phases");
            for (Phase p : model.slack_voltage.mask())
                if (!detail::finite(model.slack_voltage[p]) || std::abs(model.slack_voltage[p]) == 0.0)
                    add(el, rule::slack_voltage, "slack voltage must be finite and nonzero");
        }
    }
    if (slack_count != 1) add("feeder", rule::slack_count, "expected exactly one slack bus, found " + std::to_string(slack_count));

    const int n = static_cast<int>(model.buses.size());
    std::vector<int> in_degree(n, 0);
    std::vector<int> out_degree(n, 0);
    std::vector<std::vector<int>> adjacency(n);
    std::vector<PhaseMask> parent_phases(n);
    auto lookup = [&](const std::string& id, const std::string& el) -> int {
        auto it = index.find(id);
        if (it == index.end()) {
            add(el, rule::unknown_bus, "references unknown bus '" + id + "'");
            return -1;
        }
        return it->second;
    };
    auto link = [&](int f, int t, PhaseMask phases) {
        ++out_degree[f];
        ++in_degree[t];
        adjacency[f].push_back(t);
        parent_phases[t] = phases;
    };

    for (const auto& l : model.lines) {
        const std::string el = detail::line_name(l);
        const int f = lookup(l.from, el);
        const int t = lookup(l.to, el);
        if (f < 0 || t < 0) continue;
        const PhaseMask common = model.buses[f].phases & model.buses[t].phases;
        if (common.empty()) add(el, rule::line_mask, "endpoints share no phase");
        if (l.z.mask() != common) add(el, rule::line_mask, "impedance phases " + l.z.mask().str() + " != common phases " + common.str());
        if (!l.z.is_symmetric()) add(el, rule::line_impedance, "impedance matrix is not symmetric");
        for (Phase r : l.z.mask()) {
            if (l.z(r, r) == Complex{}) add(el, rule::line_impedance, std::string("zero diagonal on phase ") + phase_char(r));
            for (Phase c : l.z.mask())
                if (!detail::finite(l.z(r, c))) add(el, rule::non_finite, "impedance is not finite");
        }
        if (f == t) add(el, rule::not_a_tree, "self loop");
        link(f, t, l.z.mask());
    }

    for (const auto& s : model.svrs) {
        const std::string el = detail::svr_name(s);
        const int f = lookup(s.from, el);
        const int t = lookup(s.to, el);
        if (s.tap_min > 0 || s.tap_max < 0) add(el, rule::svr_settings, "tap range must contain 0");
        if (!(s.step > 0.0) || !std::isfinite(s.step)) add(el, rule::svr_settings, "step must be positive");
        else if (1.0 - s.step * std::max(std::abs(s.tap_min), std::abs(s.tap_max)) <= 0.0)
            add(el, rule::svr_settings, "tap range allows a nonpositive ratio");
        if (s.phases.empty()) add(el, rule::svr_settings, "no phases");
        if (f < 0 || t < 0) continue;
        if (!s.phases.subset_of(model.buses[f].phases) || !s.phases.subset_of(model.buses[t].phases))
            add(el, rule::mask_subset, "regulated phases not present at both endpoints");
        if (f == t) add(el, rule::not_a_tree, "self loop");
        link(f, t, s.phases);
    }

    // Radial structure rooted at the slack.
    int slack = -1;
    for (int i = 0; i < n; ++i)
        if (model.buses[i].is_slack && slack < 0) slack = i;
    const std::size_t edge_count = model.lines.size() + model.svrs.size();
    if (n > 0 && edge_count != static_cast<std::size_t>(n - 1))
        add("feeder", rule::not_a_tree, std::to_string(edge_count) + " edges for " + std::to_string(n) + " buses");
    for (int i = 0; i < n; ++i) {
        const auto& b = model.buses[i];
        if (b.is_slack && in_degree[i] != 0) add("bus " + b.id, rule::not_a_tree, "slack bus has an incoming edge");
        if (!b.is_slack && in_degree[i] != 1)
            add("bus " + b.id, rule::not_a_tree, "expected one incoming edge, found " + std::to_string(in_degree[i]));
        if (!b.is_slack && in_degree[i] == 1 && !b.phases.subset_of(parent_phases[i]))
            add("bus " + b.id, rule::phase_continuity, "phases " + b.phases.str() + " not fed by incoming edge");
    }
    if (slack >= 0) {
        std::vector<bool> seen(n, false);
        std::queue<int> q;
        q.push(slack);
        seen[slack] = true;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : adjacency[u])
                if (!seen[v]) {
                    seen[v] = true;
                    q.push(v);
                }
        }
        for (int i = 0; i < n; ++i)
            if (!seen[i]) add("bus " + model.buses[i].id, rule::not_a_tree, "not reachable from the slack bus");
    }

    // Ideal-regulator secondaries carry exactly one downstream line and nothing else.
    for (const auto& s : model.svrs) {
        auto it = index.find(s.to);
        if (it == index.end()) continue;
        const int t = it->second;
        const auto& b = model.buses[t];
        const std::string el = detail::svr_name(s);
        int outgoing_lines = 0;
        for (const auto& l : model.lines)
            if (l.from == s.to) ++outgoing_lines;
        if (in_degree[t] != 1 || out_degree[t] != 1 || outgoing_lines != 1)
            add(el, rule::svr_isolation, "secondary bus " + s.to + " must have exactly one outgoing line and no other edges");
        bool has_load = false;
        for (Phase p : b.load.mask()) has_load = has_load || b.load[p] != Complex{};
        if (has_load || b.shunt) add(el, rule::svr_isolation, "secondary bus " + s.to + " carries a load or shunt");
        if (b.is_slack) add(el, rule::svr_isolation, "secondary bus is the slack bus");
        if (b.phases != s.phases) add(el, rule::svr_isolation, "secondary bus phases must equal regulated phases");
    }
    return out;
}

/// Throws std::invalid_argument listing every violation.
inline void require_valid(const FeederModel& model) {
    const auto violations = validate(model);
    if (violations.empty()) return;
    std::string msg = "invalid feeder model:";
    for (const auto& v : violations) msg += "\n  [" + v.rule + "] " + v.element + ": " + v.message;
    throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// Tree view of a valid model

enum class EdgeKind { line, svr };

struct Edge {
    EdgeKind kind;
    int index; // into model.lines or model.svrs
    int from;  // bus index
    int to;    // bus index
    PhaseMask phases;
};

struct Topology {
    int slack = -1;
    std::vector<Edge> edges;               // lines first, then svrs
    std::vector<int> parent_edge;          // per bus, -1 for slack
    std::vector<std::vector<int>> children; // per bus, edge ids
    std::vector<int> order;                // breadth-first from the slack
    std::map<std::string, int> bus_index;

    int line_edge(int line_index) const { return line_index; }
    int svr_edge(int svr_index) const { return static_cast<int>(edge_count_lines) + svr_index; }
    std::size_t edge_count_lines = 0;
};

/// Requires a valid model.
inline Topology build_topology(const FeederModel& model) {
    require_valid(model);
    Topology t;
    const int n = static_cast<int>(model.buses.size());
    for (int i = 0; i < n; ++i) {
        t.bus_index[model.buses[i].id] = i;
        if (model.buses[i].is_slack) t.slack = i;
    }
    for (int k = 0; k < static_cast<int>(model.lines.size()); ++k) {
        const auto& l = model.lines[k];
        t.edges.push_back({EdgeKind::line, k, t.bus_index.at(l.from), t.bus_index.at(l.to), l.z.mask()});
    }
    t.edge_count_lines = model.lines.size();
    for (int k = 0; k < static_cast<int>(model.svrs.size()); ++k) {
        const auto& s = model.svrs[k];
        t.edges.push_back({EdgeKind::svr, k, t.bus_index.at(s.from), t.bus_index.at(s.to), s.phases});
    }
    t.parent_edge.assign(n, -1);
    t.children.assign(n, {});
    for (int e = 0; e < static_cast<int>(t.edges.size()); ++e) {
        t.parent_edge[t.edges[e].to] = e;
        t.children[t.edges[e].from].push_back(e);
    }
    std::queue<int> q;
    q.push(t.slack);
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        t.order.push_back(u);
        for (int e : t.children[u]) q.push(t.edges[e].to);
    }
    return t;
}

} // namespace optap
