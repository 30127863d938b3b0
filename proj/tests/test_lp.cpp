#include "lp_oracle.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <random>
#include <sstream>

using namespace optap;
using Catch::Approx;
using namespace optap::testing;

TEST_CASE("50 random LPs agree with vertex enumeration", "[lp][oracle]") {
    std::mt19937 rng(20240611);
    int counts[3] = {0, 0, 0};
    for (int k = 0; k < 50; ++k) {
        const RandomLp r = random_lp(rng, k % 5 == 3 ? 1 : k % 5 == 4 ? 2 : 0);
        const SparseLp lp = make_lp(r.A, r.b, r.c, r.lo, r.hi);
        const OracleResult want = oracle(r.A, r.b, r.c, r.lo, r.hi);
        const LpSolution got = solve_lp(lp);
        INFO("lp " << k << " flavour " << r.flavour << " n " << r.A.cols() << " m " << r.A.rows());
        REQUIRE(verdict_of(got.status) == want.verdict);
        ++counts[static_cast<int>(want.verdict)];
        if (want.verdict == Verdict::optimal) {
            CHECK(std::abs(got.objective - want.objective) <= 1e-7 * std::max(1.0, std::abs(want.objective)));
            const auto res = residuals(lp, got);
            CHECK(res.primal <= 1e-9);
            CHECK(res.bounds <= 1e-9);
        }
    }
    // the sample exercises every outcome
    CHECK(counts[0] >= 30);
    CHECK(counts[1] >= 1);
    CHECK(counts[2] >= 1);
}

TEST_CASE("repeated solves are bit-identical", "[lp]") {
    std::mt19937 rng(99);
    for (int k = 0; k < 20; ++k) {
        const RandomLp r = random_lp(rng, k % 3);
        const SparseLp lp = make_lp(r.A, r.b, r.c, r.lo, r.hi);
        const LpSolution a = solve_lp(lp);
        const LpSolution b = solve_lp(lp);
        REQUIRE(a.status == b.status);
        CHECK(a.iterations == b.iterations);
        CHECK(a.basis == b.basis);
        CHECK(a.objective == b.objective);
        CHECK(a.x == b.x);
    }
}

TEST_CASE("textbook example", "[lp]") {
    // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 as equalities with slacks
    Eigen::MatrixXd A(3, 5);
    A << 1, 0, 1, 0, 0, 0, 2, 0, 1, 0, 3, 2, 0, 0, 1;
    Eigen::VectorXd b(3), c(5), lo = Eigen::VectorXd::Zero(5), hi = Eigen::VectorXd::Constant(5, lp_inf);
    b << 4, 12, 18;
    c << -3, -5, 0, 0, 0;
    const auto sol = solve_lp(make_lp(A, b, c, lo, hi));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.objective == Approx(-36.0));
    CHECK(sol.x(0) == Approx(2.0));
    CHECK(sol.x(1) == Approx(6.0));
}

TEST_CASE("cycling example terminates at the optimum", "[lp]") {
    // Beale's degenerate problem
    Eigen::MatrixXd A(3, 7);
    A << 1, 0, 0, 0.25, -8, -1, 9, 0, 1, 0, 0.5, -12, -0.5, 3, 0, 0, 1, 0, 0, 1, 0;
    Eigen::VectorXd b(3), c(7), lo = Eigen::VectorXd::Zero(7), hi = Eigen::VectorXd::Constant(7, lp_inf);
    b << 0, 0, 1;
    c << 0, 0, 0, -0.75, 20, -0.5, 6;
    const auto sol = solve_lp(make_lp(A, b, c, lo, hi));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.objective == Approx(-1.25));
    CHECK(sol.x(3) == Approx(1.0));
    CHECK(sol.x(5) == Approx(1.0));
}

TEST_CASE("free variables, bound flips and equality rows", "[lp]") {
    // min x - y, x + y = 1, x free, y in [0, 3]  ->  y = 3, x = -2
    Eigen::MatrixXd A(1, 2);
    A << 1, 1;
    Eigen::VectorXd b(1), c(2), lo(2), hi(2);
    b << 1;
    c << 1, -1;
    lo << -lp_inf, 0;
    hi << lp_inf, 3;
    const auto sol = solve_lp(make_lp(A, b, c, lo, hi));
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.x(0) == Approx(-2.0));
    CHECK(sol.x(1) == Approx(3.0));
    // a bounded variable that only moves bound to bound
    Eigen::MatrixXd A2(1, 3);
    A2 << 1, 1, 1;
    Eigen::VectorXd b2(1), c2(3), lo2 = Eigen::VectorXd::Zero(3), hi2(3);
    b2 << 2.5;
    c2 << -1, -2, -3;
    hi2 << 1, 1, 1;
    const auto s2 = solve_lp(make_lp(A2, b2, c2, lo2, hi2));
    REQUIRE(s2.status == LpStatus::optimal);
    CHECK(s2.objective == Approx(-0.5 - 2 - 3));
}

TEST_CASE("classification of small infeasible and unbounded problems", "[lp]") {
    Eigen::MatrixXd A(2, 2);
    A << 1, 1, 1, 1;
    Eigen::VectorXd b(2), c(2), lo = Eigen::VectorXd::Zero(2), hi = Eigen::VectorXd::Constant(2, 10.0);
    b << 1, 2;
    c << 1, 1;
    CHECK(solve_lp(make_lp(A, b, c, lo, hi)).status == LpStatus::infeasible);
    Eigen::MatrixXd A1(1, 2);
    A1 << 1, -1;
    Eigen::VectorXd b1(1), c1(2), hi1 = Eigen::VectorXd::Constant(2, lp_inf);
    b1 << 0;
    c1 << -1, 0;
    CHECK(solve_lp(make_lp(A1, b1, c1, lo, hi1)).status == LpStatus::unbounded);
}

TEST_CASE("bounds-only problems and iteration limits", "[lp]") {
    SparseLp lp;
    lp.A.resize(0, 3);
    lp.b.resize(0);
    lp.c = Eigen::Vector3d(1, -1, 0);
    lp.lower = Eigen::Vector3d(-1, 0, -lp_inf);
    lp.upper = Eigen::Vector3d(1, 2, lp_inf);
    auto sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(sol.objective == Approx(-3.0));
    lp.upper(1) = lp_inf;
    CHECK(solve_lp(lp).status == LpStatus::unbounded);

    Eigen::MatrixXd A(3, 5);
    A << 1, 0, 1, 0, 0, 0, 2, 0, 1, 0, 3, 2, 0, 0, 1;
    Eigen::VectorXd b(3), c(5);
    b << 4, 12, 18;
    c << -3, -5, 0, 0, 0;
    const auto limited =
        solve_lp(make_lp(A, b, c, Eigen::VectorXd::Zero(5), Eigen::VectorXd::Constant(5, lp_inf)), 1);
    CHECK(limited.status == LpStatus::iteration_limit);
}

TEST_CASE("malformed problems are rejected", "[lp]") {
    Eigen::MatrixXd A(1, 2);
    A << 1, 1;
    Eigen::VectorXd b(1), c(2), lo = Eigen::VectorXd::Zero(2), hi = Eigen::VectorXd::Ones(2);
    b << 1;
    c << 1, 1;
    auto lp = make_lp(A, b, c, lo, hi);
    lp.lower(0) = 2.0;
    CHECK_THROWS_AS(solve_lp(lp), std::invalid_argument);
    lp = make_lp(A, b, c, lo, hi);
    lp.c.resize(3);
    CHECK_THROWS_AS(solve_lp(lp), std::invalid_argument);
    lp = make_lp(A, b, c, lo, hi);
    lp.upper(1) = -lp_inf;
    CHECK_THROWS_AS(solve_lp(lp), std::invalid_argument);
    lp = make_lp(Eigen::MatrixXd::Zero(1, 2), b, c, lo, hi);
    CHECK_THROWS_AS(solve_lp(lp), std::invalid_argument);
}

TEST_CASE("text dump names rows and columns", "[lp]") {
    Eigen::MatrixXd A(1, 2);
    A << 1, 2;
    auto lp = make_lp(A, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2),
                      Eigen::VectorXd::Ones(2));
    lp.names = {"x", "y"};
    lp.row_names = {"r"};
    std::ostringstream os;
    write_lp(os, lp, "T");
    const std::string s = os.str();
    CHECK(s.rfind("NAME", 0) == 0);
    CHECK(s.find(" T\n") != std::string::npos);
    CHECK(s.find("ROWS") != std::string::npos);
    CHECK(s.find(" y ") != std::string::npos);
    CHECK(s.find("ENDATA") != std::string::npos);
}
