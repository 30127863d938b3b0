#include "optap/feeder_io.hpp"
#include "optap/opts.hpp"
#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <fstream>
#include <json.hpp>

using namespace optap;
using Catch::Approx;
using optap::testing::data_path;
using optap::testing::fixture;

namespace {

bool has_rule(const std::vector<Violation>& v, const char* rule_name) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.rule == rule_name; });
}

FeederModel tiny() { return fixture("tiny3.json"); }

} // namespace

TEST_CASE("phase masks parse and print", "[phase]") {
    CHECK(PhaseMask::parse("abc").size() == 3);
    CHECK(PhaseMask::parse("ca").str() == "ac");
    CHECK(PhaseMask::parse("b").contains(Phase::b));
    CHECK_FALSE(PhaseMask::parse("b").contains(Phase::a));
    CHECK_THROWS_AS(PhaseMask::parse("abd"), std::invalid_argument);
    CHECK_THROWS_AS(PhaseMask::parse("aa"), std::invalid_argument);
    RealPhaseVector v(PhaseMask::parse("ac"), 1.0);
    CHECK_THROWS_AS(v[Phase::b], std::out_of_range);
    CHECK(v.get_or(Phase::b, 7.0) == 7.0);
}

TEST_CASE("tap/ratio examples", "[taps]") {
    CHECK(tap_to_ratio(16, SvrKind::B, 0.00625) == Approx(0.9));
    CHECK(tap_to_ratio(-16, SvrKind::B, 0.00625) == Approx(1.1));
    CHECK(tap_to_ratio(16, SvrKind::A, 0.00625) == Approx(1.1));
    CHECK(tap_to_ratio(4, SvrKind::B, 0.00625) == Approx(0.975));
    CHECK(tap_to_ratio(-8, SvrKind::B, 0.00625) == Approx(1.05));
    CHECK(tap_to_ratio(7, SvrKind::B, 0.00625) == Approx(0.95625));
    CHECK_THROWS_AS(tap_to_ratio(17, SvrKind::B, 0.00625), std::out_of_range);
    CHECK(ratio_to_tap(0.95, SvrKind::B, 0.00625) == 8);
    CHECK(ratio_to_tap(1.2, SvrKind::A, 0.00625) == 16);
    CHECK(ratio_to_tap(0.5, SvrKind::A, 0.00625) == -16);
    // exactly half a step rounds away from zero
    CHECK(ratio_to_tap(1.0 + 0.5 * 0.00625, SvrKind::A, 0.00625) == 1);
    CHECK(ratio_to_tap(1.0 - 0.5 * 0.00625, SvrKind::A, 0.00625) == -1);
}

TEST_CASE("tap -> ratio -> tap round trip on every tap, both kinds", "[taps][property]") {
    for (SvrKind kind : {SvrKind::A, SvrKind::B})
        for (int t = -16; t <= 16; ++t) {
            const double r = tap_to_ratio(t, kind, 0.00625);
            REQUIRE(ratio_to_tap(r, kind, 0.00625) == t);
            // perturbations smaller than half a step keep the tap
            REQUIRE(ratio_to_tap(r + 0.0031, kind, 0.00625) == t);
            REQUIRE(ratio_to_tap(r - 0.0031, kind, 0.00625) == t);
        }
}

TEST_CASE("ratio ranges per kind", "[taps]") {
    SvrSpec s;
    s.phases = PhaseMask::parse("a");
    s.kind = SvrKind::B;
    auto [lo, hi] = ratio_range(s);
    CHECK(lo == Approx(0.9));
    CHECK(hi == Approx(1.1));
    s.tap_min = -4;
    s.tap_max = 10;
    std::tie(lo, hi) = ratio_range(s);
    CHECK(lo == Approx(1.0 - 10 * 0.00625));
    CHECK(hi == Approx(1.0 + 4 * 0.00625));
    s.kind = SvrKind::A;
    std::tie(lo, hi) = ratio_range(s);
    CHECK(lo == Approx(1.0 - 4 * 0.00625));
    CHECK(hi == Approx(1.0 + 10 * 0.00625));
    CHECK(primary_gain(SvrKind::A, 1.25) == Approx(0.8));
    CHECK(primary_gain(SvrKind::B, 1.25) == Approx(1.25));
}

TEST_CASE("IEEE-13 fixture matches its manifest", "[fixture]") {
    const FeederModel m = fixture("ieee13.json");
    std::ifstream in(data_path("ieee13_manifest.json"));
    const auto man = nlohmann::json::parse(in);
    CHECK(m.buses.size() == man["buses"].get<std::size_t>());
    CHECK(m.lines.size() == man["lines"].get<std::size_t>());
    CHECK(m.svrs.size() == man["svrs"].get<std::size_t>());
    int phases = 0, line_phases = 0, loads = 0, shunts = 0;
    for (const auto& b : m.buses) {
        if (!b.is_slack) phases += b.phases.size();
        if (!b.load.mask().empty()) ++loads;
        if (b.shunt) ++shunts;
    }
    for (const auto& l : m.lines) line_phases += l.z.mask().size();
    CHECK(phases == man["non_slack_bus_phases"].get<int>());
    CHECK(line_phases == man["line_phases"].get<int>());
    CHECK(m.svrs[0].phases.size() == man["svr_phases"].get<int>());
    CHECK(loads == man["loaded_buses"].get<int>());
    CHECK(shunts == man["shunt_buses"].get<int>());
    CHECK(validate(m).empty());
    CHECK(m.defaults.v_min == 0.93);
}

TEST_CASE("serialize then parse returns the same model", "[io]") {
    for (const char* name : {"ieee13.json", "tiny3.json", "tiny3_noload.json"}) {
        const FeederModel m = fixture(name);
        const FeederModel back = parse_feeder(serialize_feeder(m));
        CHECK(back == m);
    }
}

TEST_CASE("syntax errors report line and column", "[io]") {
    try {
        parse_feeder("{\n  \"format\": 1,\n  \"buses\": [,]\n}");
        FAIL("no exception");
    } catch (const FeederFormatError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_feeder("[]"), FeederFormatError);
    CHECK_THROWS_AS(parse_feeder("{\"format\": 2}"), FeederFormatError);
    CHECK_THROWS_AS(load_feeder(data_path("does_not_exist.json")), FeederFormatError);
}

TEST_CASE("schema rejects unsupported load models", "[io]") {
    auto doc = nlohmann::json::parse(serialize_feeder(tiny()));
    doc["buses"][2]["load_model"] = "constant_current";
    CHECK_THROWS_AS(parse_feeder(doc.dump()), FeederFormatError);
    doc["buses"][2].erase("load_model");
    doc["buses"][2]["connection"] = "delta";
    CHECK_THROWS_AS(parse_feeder(doc.dump()), FeederFormatError);
    doc["buses"][2].erase("connection");
    doc["svrs"][0]["kind"] = "C";
    CHECK_THROWS_AS(parse_feeder(doc.dump()), FeederFormatError);
    doc["svrs"][0]["kind"] = "A";
    doc["buses"][2]["load"]["values"] = nlohmann::json::array({nlohmann::json::array({1.0})});
    CHECK_THROWS_AS(parse_feeder(doc.dump()), FeederFormatError);
}

TEST_CASE("validation rules fire on broken models", "[validate]") {
    SECTION("duplicate id") {
        auto m = tiny();
        m.buses[2].id = "reg";
        CHECK(has_rule(validate(m), rule::duplicate_id));
    }
    SECTION("unknown bus") {
        auto m = tiny();
        m.lines[0].to = "nowhere";
        CHECK(has_rule(validate(m), rule::unknown_bus));
    }
    SECTION("slack count") {
        auto m = tiny();
        m.buses[0].is_slack = false;
        CHECK(has_rule(validate(m), rule::slack_count));
        m = tiny();
        m.buses[2].is_slack = true;
        CHECK(has_rule(validate(m), rule::slack_count));
    }
    SECTION("loaded slack") {
        auto m = tiny();
        m.buses[0].load = ComplexPhaseVector(PhaseMask::parse("a"), Complex(0.1, 0));
        CHECK(has_rule(validate(m), rule::slack_load));
    }
    SECTION("line phases") {
        auto m = tiny();
        m.lines[0].z = PhaseMatrix::diagonal(PhaseMask::parse("ab"), Complex(0.01, 0.02));
        CHECK(has_rule(validate(m), rule::line_mask));
    }
    SECTION("asymmetric or zero impedance") {
        auto m = fixture("ieee13.json");
        m.lines[0].z(Phase::a, Phase::b) += Complex(0.001, 0);
        CHECK(has_rule(validate(m), rule::line_impedance));
        m = tiny();
        m.lines[0].z(Phase::a, Phase::a) = Complex{};
        CHECK(has_rule(validate(m), rule::line_impedance));
    }
    SECTION("regulator settings") {
        auto m = tiny();
        m.svrs[0].step = 0.0;
        CHECK(has_rule(validate(m), rule::svr_settings));
        m = tiny();
        m.svrs[0].tap_min = 1;
        CHECK(has_rule(validate(m), rule::svr_settings));
        m = tiny();
        m.svrs[0].step = 0.1;
        CHECK(has_rule(validate(m), rule::svr_settings));
    }
    SECTION("regulator secondary must be isolated") {
        auto m = tiny();
        m.buses[1].load = ComplexPhaseVector(PhaseMask::parse("a"), Complex(0.1, 0));
        CHECK(has_rule(validate(m), rule::svr_isolation));
    }
    SECTION("cycle") {
        auto m = tiny();
        LineSpec extra;
        extra.from = "src";
        extra.to = "load";
        extra.z = PhaseMatrix::diagonal(PhaseMask::parse("a"), Complex(0.01, 0.02));
        m.lines.push_back(extra);
        CHECK(has_rule(validate(m), rule::not_a_tree));
        CHECK_THROWS(require_valid(m));
    }
    SECTION("phase continuity") {
        auto m = fixture("ieee13.json");
        for (auto& b : m.buses)
            if (b.id == "652") b.phases = PhaseMask::parse("ab");
        CHECK(has_rule(validate(m), rule::phase_continuity));
    }
    SECTION("non-finite load") {
        auto m = tiny();
        m.buses[2].load[Phase::a] = Complex(std::nan(""), 0);
        CHECK(has_rule(validate(m), rule::non_finite));
    }
    SECTION("slack voltage phases") {
        auto m = tiny();
        m.slack_voltage = ComplexPhaseVector(PhaseMask::parse("ab"), Complex(1, 0));
        CHECK(has_rule(validate(m), rule::slack_voltage));
    }
}

TEST_CASE("topology is breadth-first from the slack", "[topology]") {
    const auto m = fixture("ieee13.json");
    const Topology t = build_topology(m);
    REQUIRE(t.slack == t.bus_index.at("650"));
    CHECK(t.order.front() == t.slack);
    CHECK(t.order.size() == m.buses.size());
    std::vector<int> pos(m.buses.size());
    for (std::size_t i = 0; i < t.order.size(); ++i) pos[t.order[i]] = static_cast<int>(i);
    for (const auto& e : t.edges) CHECK(pos[e.from] < pos[e.to]);
    CHECK(t.edges[t.svr_edge(0)].kind == EdgeKind::svr);
    CHECK(t.parent_edge[t.bus_index.at("rg60")] == t.svr_edge(0));
}

TEST_CASE("tap vectors and ratio vectors line up with regulators", "[taps]") {
    const auto m = fixture("ieee13.json");
    const TapVector z = zero_taps(m);
    REQUIRE(z.size() == 1);
    const RatioVector r = unit_ratios(m);
    for (Phase p : m.svrs[0].phases) CHECK(r[0][p] == 1.0);
    TapVector t = z;
    t[0][Phase::a] = 4;
    t[0][Phase::b] = -8;
    t[0][Phase::c] = 7;
    const RatioVector rr = ratios_from_taps(m, t);
    CHECK(rr[0][Phase::a] == Approx(0.975));
    CHECK(rr[0][Phase::b] == Approx(1.05));
    CHECK(rr[0][Phase::c] == Approx(0.95625));
    CHECK_THROWS_AS(ratios_from_taps(m, TapVector{}), std::invalid_argument);
    CHECK(tap_combinations(m) == 33LL * 33 * 33);
}
