#pragma once

// JSON feeder files (format 1).
//
//   { "format": 1, "name": "...",
//     "slack_voltage": {"phases": "abc", "values": [[re, im], ...]},
//     "buses": [{"id": "650", "phases": "abc", "slack": true,
//                "load":  {"phases": "abc", "values": [[re, im], ...]},
//                "shunt": {"phases": "c", "rows": [[[re, im]]]}}],
//     "lines": [{"from": "632", "to": "633", "z": {"phases": "abc", "rows": [...]}}],
//     "svrs":  [{"from": "650", "to": "rg60", "kind": "B", "phases": "abc",
//                "tap_min": -16, "tap_max": 16, "step": 0.00625}],
//     "defaults": {"v_min": 0.93, ...} }
//
// Matrices are row-major over the declared phase order. Loads are wye
// constant-power consumption; any other "load_model"/"connection" is rejected.

#include "optap/feeder.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace optap {

class FeederFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

using json = nlohmann::json;

inline const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw FeederFormatError(where + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw FeederFormatError(where + ": missing field '" + key + "'");
    return *it;
}

inline double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw FeederFormatError(where + ": expected a number");
    return j.get<double>();
}

inline Complex complex_from(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) throw FeederFormatError(where + ": complex value must be [re, im]");
    return {number(j[0], where), number(j[1], where)};
}

inline json complex_to(Complex z) { return json::array({z.real(), z.imag()}); }

inline PhaseMask mask_from(const json& j, const std::string& where) {
    if (!j.is_string()) throw FeederFormatError(where + ": phases must be a string like \"abc\"");
    try {
        return PhaseMask::parse(j.get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw FeederFormatError(where + ": " + e.what());
    }
}

inline ComplexPhaseVector vector_from(const json& j, const std::string& where) {
    const PhaseMask mask = mask_from(field(j, "phases", where), where);
    const json& values = field(j, "values", where);
    if (!values.is_array() || static_cast<int>(values.size()) != mask.size())
        throw FeederFormatError(where + ": expected " + std::to_string(mask.size()) + " values");
    ComplexPhaseVector v(mask);
    int k = 0;
    for (Phase p : mask) v[p] = complex_from(values[k++], where);
    return v;
}

inline json vector_to(const ComplexPhaseVector& v) {
    json values = json::array();
    for (Phase p : v.mask()) values.push_back(complex_to(v[p]));
    return {{"phases", v.mask().str()}, {"values", values}};
}

inline PhaseMatrix matrix_from(const json& j, const std::string& where) {
    const PhaseMask mask = mask_from(field(j, "phases", where), where);
    const json& rows = field(j, "rows", where);
    const auto n = static_cast<std::size_t>(mask.size());
    if (!rows.is_array() || rows.size() != n) throw FeederFormatError(where + ": expected " + std::to_string(n) + " rows");
    PhaseMatrix m(mask);
    std::size_t r = 0;
    for (Phase pr : mask) {
        const json& row = rows[r++];
        if (!row.is_array() || row.size() != n) throw FeederFormatError(where + ": row has wrong length");
        std::size_t c = 0;
        for (Phase pc : mask) m(pr, pc) = complex_from(row[c++], where);
    }
    return m;
}

inline json matrix_to(const PhaseMatrix& m) {
    json rows = json::array();
    for (Phase r : m.mask()) {
        json row = json::array();
        for (Phase c : m.mask()) row.push_back(complex_to(m(r, c)));
        rows.push_back(row);
    }
    return {{"phases", m.mask().str()}, {"rows", rows}};
}

inline void line_col(const std::string& text, std::size_t byte, std::size_t& line, std::size_t& col) {
    line = 1;
    col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
}

template <typename T>
void optional_field(const json& obj, const char* key, std::optional<T>& out) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw FeederFormatError(std::string("defaults: field '") + key + "' has the wrong type");
    }
}

} // namespace detail

/// Parses a feeder document without checking the model invariants.
inline FeederModel read_feeder(const std::string& text) {
    using detail::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 0;
        std::size_t col = 0;
        detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1, line, col);
        throw FeederFormatError("syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                                ": " + e.what());
    }
    if (!doc.is_object()) throw FeederFormatError("feeder document must be a JSON object");
    FeederModel model;
    try {
        const json& format = detail::field(doc, "format", "feeder");
        if (!format.is_number_integer() || format.get<int>() != 1)
            throw FeederFormatError("feeder: unsupported format version (expected 1)");

        if (auto it = doc.find("name"); it != doc.end() && it->is_string()) model.name = it->get<std::string>();
        model.slack_voltage = detail::vector_from(detail::field(doc, "slack_voltage", "feeder"), "slack_voltage");

        const json& buses = detail::field(doc, "buses", "feeder");
        if (!buses.is_array()) throw FeederFormatError("buses: expected an array");
        for (std::size_t i = 0; i < buses.size(); ++i) {
            const json& jb = buses[i];
            const std::string where = "buses[" + std::to_string(i) + "]";
            BusSpec b;
            const json& id = detail::field(jb, "id", where);
            if (!id.is_string()) throw FeederFormatError(where + ": id must be a string");
            b.id = id.get<std::string>();
            b.phases = detail::mask_from(detail::field(jb, "phases", where), where);
            if (auto it = jb.find("slack"); it != jb.end()) {
                if (!it->is_boolean()) throw FeederFormatError(where + ": slack must be boolean");
                b.is_slack = it->get<bool>();
            }
            if (auto it = jb.find("load_model"); it != jb.end() && *it != "constant_power")
                throw FeederFormatError(where + ": only constant_power loads are supported");
            if (auto it = jb.find("connection"); it != jb.end() && *it != "wye")
                throw FeederFormatError(where + ": only wye-connected loads are supported");
            if (auto it = jb.find("load"); it != jb.end()) b.load = detail::vector_from(*it, where + ".load");
            if (auto it = jb.find("shunt"); it != jb.end()) b.shunt = detail::matrix_from(*it, where + ".shunt");
            model.buses.push_back(std::move(b));
        }

        const json& lines = detail::field(doc, "lines", "feeder");
        if (!lines.is_array()) throw FeederFormatError("lines: expected an array");
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const std::string where = "lines[" + std::to_string(i) + "]";
            const json& jl = lines[i];
            LineSpec l;
            l.from = detail::field(jl, "from", where).get<std::string>();
            l.to = detail::field(jl, "to", where).get<std::string>();
            l.z = detail::matrix_from(detail::field(jl, "z", where), where + ".z");
            model.lines.push_back(std::move(l));
        }

        if (auto it = doc.find("svrs"); it != doc.end()) {
            if (!it->is_array()) throw FeederFormatError("svrs: expected an array");
            for (std::size_t i = 0; i < it->size(); ++i) {
                const std::string where = "svrs[" + std::to_string(i) + "]";
                const json& js = (*it)[i];
                SvrSpec s;
                s.from = detail::field(js, "from", where).get<std::string>();
                s.to = detail::field(js, "to", where).get<std::string>();
                const json& kind = detail::field(js, "kind", where);
                if (kind == "A") s.kind = SvrKind::A;
                else if (kind == "B") s.kind = SvrKind::B;
                else throw FeederFormatError(where + ": kind must be \"A\" or \"B\"");
                s.phases = detail::mask_from(detail::field(js, "phases", where), where);
                if (auto f = js.find("tap_min"); f != js.end()) s.tap_min = f->get<int>();
                if (auto f = js.find("tap_max"); f != js.end()) s.tap_max = f->get<int>();
                if (auto f = js.find("step"); f != js.end()) s.step = detail::number(*f, where + ".step");
                model.svrs.push_back(std::move(s));
            }
        }

        if (auto it = doc.find("defaults"); it != doc.end()) {
            if (!it->is_object()) throw FeederFormatError("defaults: expected an object");
            auto& d = model.defaults;
            detail::optional_field(*it, "v_min", d.v_min);
            detail::optional_field(*it, "v_max", d.v_max);
            detail::optional_field(*it, "verify_v_min", d.verify_v_min);
            detail::optional_field(*it, "verify_v_max", d.verify_v_max);
            detail::optional_field(*it, "tol", d.tol);
            detail::optional_field(*it, "max_iter", d.max_iter);
            detail::optional_field(*it, "constants", d.constants);
        }
    } catch (const json::exception& e) {
        throw FeederFormatError(std::string("schema violation: ") + e.what());
    }
    return model;
}

/// Parses and validates a feeder document.
inline FeederModel parse_feeder(const std::string& text) {
    FeederModel model = read_feeder(text);
    require_valid(model);
    return model;
}

inline std::string serialize_feeder(const FeederModel& model) {
    using detail::json;
    json doc;
    doc["format"] = 1;
    if (!model.name.empty()) doc["name"] = model.name;
    doc["slack_voltage"] = detail::vector_to(model.slack_voltage);
    json buses = json::array();
    for (const auto& b : model.buses) {
        json jb = {{"id", b.id}, {"phases", b.phases.str()}};
        if (b.is_slack) jb["slack"] = true;
        if (!b.load.mask().empty()) jb["load"] = detail::vector_to(b.load);
        if (b.shunt) jb["shunt"] = detail::matrix_to(*b.shunt);
        buses.push_back(jb);
    }
    doc["buses"] = buses;
    json lines = json::array();
    for (const auto& l : model.lines) lines.push_back({{"from", l.from}, {"to", l.to}, {"z", detail::matrix_to(l.z)}});
    doc["lines"] = lines;
    json svrs = json::array();
    for (const auto& s : model.svrs)
        svrs.push_back({{"from", s.from},
                        {"to", s.to},
                        {"kind", s.kind == SvrKind::A ? "A" : "B"},
                        {"phases", s.phases.str()},
                        {"tap_min", s.tap_min},
                        {"tap_max", s.tap_max},
                        {"step", s.step}});
    doc["svrs"] = svrs;
    if (!model.defaults.empty()) {
        json d = json::object();
        const auto& f = model.defaults;
        if (f.v_min) d["v_min"] = *f.v_min;
        if (f.v_max) d["v_max"] = *f.v_max;
        if (f.verify_v_min) d["verify_v_min"] = *f.verify_v_min;
        if (f.verify_v_max) d["verify_v_max"] = *f.verify_v_max;
        if (f.tol) d["tol"] = *f.tol;
        if (f.max_iter) d["max_iter"] = *f.max_iter;
        if (f.constants) d["constants"] = *f.constants;
        doc["defaults"] = d;
    }
    return doc.dump(2) + "\n";
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FeederFormatError("cannot open feeder file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline FeederModel load_feeder(const std::string& path) { return parse_feeder(read_text_file(path)); }

inline bool operator==(const BusSpec& a, const BusSpec& b) {
    return a.id == b.id && a.phases == b.phases && a.load == b.load && a.shunt == b.shunt && a.is_slack == b.is_slack;
}
inline bool operator==(const LineSpec& a, const LineSpec& b) { return a.from == b.from && a.to == b.to && a.z == b.z; }
inline bool operator==(const SvrSpec& a, const SvrSpec& b) {
    return a.from == b.from && a.to == b.to && a.kind == b.kind && a.phases == b.phases && a.tap_min == b.tap_min &&
           a.tap_max == b.tap_max && a.step == b.step;
}
inline bool operator==(const FeederModel& a, const FeederModel& b) {
    return a.name == b.name && a.buses == b.buses && a.lines == b.lines && a.svrs == b.svrs &&
           a.slack_voltage == b.slack_voltage && a.defaults == b.defaults;
}

} // namespace optap
