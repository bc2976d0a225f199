#include <doctest.h>

#include <random>

#include "support/oracles.hpp"
#include "surfdist/errors.hpp"
#include "surfdist/transport.hpp"

using namespace surfdist;

namespace {

Eigen::MatrixXd random_cost(int m, int n, std::mt19937_64& rng, int max_value = 1000) {
    std::uniform_int_distribution<int> c(0, max_value);
    Eigen::MatrixXd cost(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) cost(i, j) = c(rng);
    return cost;
}

// integer cost of the positive-mass support (uniform marginals keep every
// flow at exactly 1/n, so the support is a permutation)
long long support_cost(const TransportPlan& plan, const Eigen::MatrixXd& cost) {
    long long s = 0;
    for (const auto& e : plan.entries)
        if (e.mass > 0.0) s += static_cast<long long>(cost(e.from, e.to));
    return s;
}

} // namespace

TEST_CASE("a single arc moves all mass") {
    DiscreteMeasure mu{{0}, {1.0}}, nu{{0}, {1.0}};
    Eigen::MatrixXd cost(1, 1);
    cost(0, 0) = 3.5;
    TransportPlan plan = solve_kantorovich(mu, nu, cost);
    REQUIRE(plan.entries.size() == 1);
    CHECK(plan.entries[0].mass == 1.0);
    CHECK(plan.total_cost == 3.5);
}

TEST_CASE("two-point instances pick the cheap matching") {
    DiscreteMeasure mu = DiscreteMeasure::uniform(2), nu = DiscreteMeasure::uniform(2);
    Eigen::MatrixXd cost(2, 2);
    cost << 0, 1, 1, 0;
    CHECK(solve_kantorovich(mu, nu, cost).total_cost == 0.0);
    cost << 1, 0, 0, 1;
    CHECK(solve_kantorovich(mu, nu, cost).total_cost == 0.0);
    cost << 0, 2, 1, 4;
    // diagonal costs 4, anti-diagonal costs 3
    CHECK(solve_kantorovich(mu, nu, cost).total_cost == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("uniform instances match the brute-force permutation optimum") {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> size(1, 8);
    for (int trial = 0; trial < 50; ++trial) {
        int n = size(rng);
        DiscreteMeasure mu = DiscreteMeasure::uniform(n), nu = DiscreteMeasure::uniform(n);
        Eigen::MatrixXd cost = random_cost(n, n, rng);
        TransportPlan plan = solve_kantorovich(mu, nu, cost);
        auto best = oracle::permutation_optimum(cost.cast<int>());
        CHECK(support_cost(plan, cost) == best.cost_int);
        // the reported total is the plan's own dot product, bit for bit
        double dot = 0.0;
        for (const auto& e : plan.entries) dot += e.mass * cost(e.from, e.to);
        CHECK(plan.total_cost == dot);
    }
}

TEST_CASE("marginals of the plan reproduce the measures") {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        int m = 2 + static_cast<int>(u(rng) * 6), n = 2 + static_cast<int>(u(rng) * 6);
        DiscreteMeasure mu, nu;
        double sa = 0.0;
        for (int i = 0; i < m; ++i) {
            mu.points.push_back(i);
            mu.weights.push_back(u(rng));
            sa += mu.weights.back();
        }
        for (int i = 0; i < m; ++i) mu.weights[i] /= sa;
        double sbv = 0.0;
        for (int j = 0; j < n; ++j) {
            nu.points.push_back(j);
            nu.weights.push_back(u(rng));
            sbv += nu.weights.back();
        }
        for (int j = 0; j < n; ++j) nu.weights[j] /= sbv;

        Eigen::MatrixXd cost = random_cost(m, n, rng);
        TransportPlan plan = solve_kantorovich(mu, nu, cost);
        std::vector<double> row(m, 0.0), col(n, 0.0);
        for (const auto& e : plan.entries) {
            row[e.from] += e.mass;
            col[e.to] += e.mass;
            CHECK(e.mass >= 0.0);
        }
        for (int i = 0; i < m; ++i) CHECK(row[i] == doctest::Approx(mu.weights[i]).epsilon(1e-12));
        double nu_total = 0.0;
        for (int j = 0; j < n; ++j) nu_total += col[j];
        CHECK(nu_total == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(plan.entries.size() <= static_cast<std::size_t>(m + n - 1));
        for (std::size_t k = 1; k < plan.entries.size(); ++k) {
            bool sorted = plan.entries[k - 1].from < plan.entries[k].from ||
                          (plan.entries[k - 1].from == plan.entries[k].from &&
                           plan.entries[k - 1].to < plan.entries[k].to);
            CHECK(sorted);
        }
    }
}

TEST_CASE("larger drifting marginals with zero-mass sites stay in bounds") {
    // renormalized weight vectors whose partial subtractions drift in the
    // last unit; mixing in exact zeros mimics boundary sample sites
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        int m = 16 + static_cast<int>(rng() % 24), n = 16 + static_cast<int>(rng() % 24);
        DiscreteMeasure mu, nu;
        auto fill = [&](DiscreteMeasure& d, int count) {
            double total = 0.0;
            for (int i = 0; i < count; ++i) {
                d.points.push_back(i);
                double w = (rng() % 5 == 0) ? 0.0 : u(rng);
                d.weights.push_back(w);
                total += w;
            }
            for (auto& w : d.weights) w /= total;
        };
        fill(mu, m);
        fill(nu, n);
        Eigen::MatrixXd cost = random_cost(m, n, rng);
        TransportPlan plan = solve_kantorovich(mu, nu, cost);
        std::vector<double> row(m, 0.0);
        for (const auto& e : plan.entries) row[e.from] += e.mass;
        for (int i = 0; i < m; ++i)
            CHECK(row[i] == doctest::Approx(mu.weights[i]).epsilon(1e-12));
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                CHECK(plan.dual_u[i] + plan.dual_v[j] <= cost(i, j) + 1e-9);
    }
}

TEST_CASE("duals certify optimality") {
    std::mt19937_64 rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        int m = 3 + trial % 5, n = 3 + (trial / 2) % 5;
        DiscreteMeasure mu = DiscreteMeasure::uniform(m), nu = DiscreteMeasure::uniform(n);
        Eigen::MatrixXd cost = random_cost(m, n, rng);
        TransportPlan plan = solve_kantorovich(mu, nu, cost);
        REQUIRE(plan.dual_u.size() == static_cast<std::size_t>(m));
        REQUIRE(plan.dual_v.size() == static_cast<std::size_t>(n));
        double tol = 1e-9 * (1.0 + cost.maxCoeff());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                CHECK(plan.dual_u[i] + plan.dual_v[j] <= cost(i, j) + tol);
        for (const auto& e : plan.entries)
            if (e.mass > 0.0)
                CHECK(plan.dual_u[e.from] + plan.dual_v[e.to] ==
                      doctest::Approx(cost(e.from, e.to)).epsilon(1e-9));
    }
}

TEST_CASE("doubling the costs doubles the value bit-exactly") {
    std::mt19937_64 rng(109);
    DiscreteMeasure mu = DiscreteMeasure::uniform(6), nu = DiscreteMeasure::uniform(6);
    Eigen::MatrixXd cost = random_cost(6, 6, rng);
    double v1 = solve_kantorovich(mu, nu, cost).total_cost;
    double v2 = solve_kantorovich(mu, nu, 2.0 * cost).total_cost;
    CHECK(v2 == 2.0 * v1);
}

TEST_CASE("fully degenerate costs terminate") {
    DiscreteMeasure mu = DiscreteMeasure::uniform(12), nu = DiscreteMeasure::uniform(12);
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(12, 12, 7.0);
    TransportPlan plan = solve_kantorovich(mu, nu, cost);
    CHECK(plan.total_cost == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("input validation rejects malformed instances") {
    DiscreteMeasure mu = DiscreteMeasure::uniform(2), nu = DiscreteMeasure::uniform(3);
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS((void)solve_kantorovich(mu, nu, cost), SolverError); // shape mismatch

    DiscreteMeasure empty;
    CHECK_THROWS_AS((void)solve_kantorovich(empty, nu, cost), SolverError);

    DiscreteMeasure neg{{0, 1}, {0.5, -0.1}};
    CHECK_THROWS_AS((void)solve_kantorovich(neg, mu, cost), SolverError);

    Eigen::MatrixXd bad = cost;
    bad(0, 0) = -1.0;
    CHECK_THROWS_AS((void)solve_kantorovich(mu, mu, bad), SolverError);

    DiscreteMeasure heavy{{0, 1}, {0.7, 0.7}};
    CHECK_THROWS_AS((void)solve_kantorovich(mu, heavy, cost), SolverError); // imbalance

    TransportOptions small;
    small.max_size = 4;
    DiscreteMeasure five = DiscreteMeasure::uniform(5);
    CHECK_THROWS_AS((void)solve_kantorovich(five, five, Eigen::MatrixXd::Zero(5, 5), small),
                    SolverError);
}

TEST_CASE("residual imbalance within tolerance is repaired") {
    DiscreteMeasure mu = DiscreteMeasure::uniform(3);
    DiscreteMeasure nu = DiscreteMeasure::uniform(3);
    nu.weights[2] += 2e-10; // inside the default 1e-9 balance tolerance
    Eigen::MatrixXd cost(3, 3);
    cost << 0, 5, 5, 5, 0, 5, 5, 5, 0;
    TransportPlan plan = solve_kantorovich(mu, nu, cost);
    double moved = 0.0;
    for (const auto& e : plan.entries) moved += e.mass;
    CHECK(moved == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plan.total_cost < 1e-8);
}

TEST_CASE("soft correspondence takes the heaviest arc, ties to the smaller target") {
    TransportPlan plan;
    plan.source_count = 3;
    plan.target_count = 3;
    plan.entries = {{0, 1, 0.2}, {0, 2, 0.1}, {1, 0, 0.15}, {1, 2, 0.15}, {2, 2, 0.4}};
    auto corr = plan_as_soft_correspondence(plan);
    REQUIRE(corr.size() == 3);
    CHECK(corr[0] == 1);
    CHECK(corr[1] == 0); // tie 0.15/0.15 resolved to the smaller target index
    CHECK(corr[2] == 2);

    TransportPlan missing;
    missing.source_count = 2;
    missing.target_count = 1;
    missing.entries = {{0, 0, 1.0}};
    CHECK_THROWS_AS((void)plan_as_soft_correspondence(missing), SolverError);
}
