#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dispatch/bellman.hpp"

using namespace dispatch;

TEST_CASE("anchored solve on a two-state alternating chain") {
    // 0 -> 1 -> 0, cost only in state 0; by hand: mu = 1, v = (0, -1/2).
    std::vector<SparseRow> rows{{{1, 1.0}}, {{0, 1.0}}};
    Eigen::VectorXd cost(2);
    cost << 1.0, 0.0;
    const AnchoredSolution sol = solve_anchored_average_cost(rows, cost, 0);
    CHECK(sol.avg_cost == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.values[0] == doctest::Approx(0.0));
    CHECK(sol.values[1] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(sol.residual <= 1e-12);
}

TEST_CASE("value family is invariant to constant shifts") {
    std::vector<SparseRow> rows{{{0, 0.25}, {1, 0.75}}, {{0, 0.5}, {1, 0.5}}};
    Eigen::VectorXd cost(2);
    cost << 2.0, 3.0;
    const AnchoredSolution sol = solve_anchored_average_cost(rows, cost, 0);
    Eigen::VectorXd shifted = sol.values.array() + 17.5;
    CHECK(bellman_residual(rows, cost, sol.values, sol.avg_cost) <= 1e-12);
    CHECK(bellman_residual(rows, cost, shifted, sol.avg_cost) <= 1e-10);
}

TEST_CASE("unichain with a transient state solves on the full system") {
    // state 2 drains into the recurrent pair {0, 1}
    std::vector<SparseRow> rows{
        {{1, 1.0}}, {{0, 0.5}, {1, 0.5}}, {{0, 0.5}, {1, 0.5}}};
    Eigen::VectorXd cost(3);
    cost << 1.0, 0.0, 7.0;
    const AnchoredSolution sol = solve_anchored_average_cost(rows, cost, 0);
    CHECK(sol.residual <= 1e-9);
    CHECK(sol.values[0] == 0.0);
    // stationary distribution of {0,1} is (1/3, 2/3): mu = 2 * sum(pi c)
    CHECK(sol.avg_cost == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    // transient state: one-step lookahead v2 = c2 - mu/2 + (v0 + v1)/2
    const double expect =
        7.0 - sol.avg_cost / 2 + 0.5 * (sol.values[0] + sol.values[1]);
    CHECK(sol.values[2] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("multichain input yields a non-finite or large residual, not a crash") {
    std::vector<SparseRow> rows{{{0, 1.0}}, {{1, 1.0}}};
    Eigen::VectorXd cost(2);
    cost << 2.0, 5.0;
    const AnchoredSolution sol = solve_anchored_average_cost(rows, cost, 0);
    CHECK(!(sol.residual <= 1e-9));
}

TEST_CASE("jump-chain stationary distribution of a known chain") {
    // birth-death on 3 states
    std::vector<SparseRow> rows{
        {{1, 1.0}}, {{0, 0.5}, {2, 0.5}}, {{1, 1.0}}};
    const Eigen::VectorXd pi = jump_chain_stationary(rows);
    CHECK(pi.sum() == doctest::Approx(1.0));
    CHECK(pi[0] == doctest::Approx(0.25));
    CHECK(pi[1] == doctest::Approx(0.5));
    CHECK(pi[2] == doctest::Approx(0.25));
}

TEST_CASE("strongly connected components and irreducibility") {
    SUBCASE("one component") {
        std::vector<SparseRow> rows{{{1, 1.0}}, {{2, 1.0}}, {{0, 1.0}}};
        CHECK(is_irreducible(rows));
    }
    SUBCASE("chain of three singletons") {
        std::vector<SparseRow> rows{{{1, 1.0}}, {{2, 1.0}}, {{2, 1.0}}};
        int n = 0;
        const auto comp = strongly_connected_components(rows, n);
        CHECK(n == 3);
        // ids come out in reverse topological order: the sink first
        CHECK(comp[2] == 0);
        CHECK(comp[1] == 1);
        CHECK(comp[0] == 2);
        CHECK(!is_irreducible(rows));
    }
    SUBCASE("two two-cycles joined one way") {
        std::vector<SparseRow> rows{
            {{1, 1.0}}, {{0, 0.5}, {2, 0.5}}, {{3, 1.0}}, {{2, 1.0}}};
        int n = 0;
        const auto comp = strongly_connected_components(rows, n);
        CHECK(n == 2);
        CHECK(comp[0] == comp[1]);
        CHECK(comp[2] == comp[3]);
        CHECK(comp[0] != comp[2]);
    }
}
