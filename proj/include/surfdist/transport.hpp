#pragma once

#include <vector>

#include <Eigen/Dense>

namespace surfdist {

// Weighted point set; points are site indices into whatever sample set the
// caller owns, weights are nonnegative and sum to 1 (within 1e-9).
struct DiscreteMeasure {
    std::vector<int> points;
    std::vector<double> weights;

    static DiscreteMeasure uniform(int n);
    int size() const { return static_cast<int>(weights.size()); }
    double total() const;
};

struct TransportEntry {
    int from = 0;
    int to = 0;
    double mass = 0.0;
};

// Basic optimal solution of the Kantorovich problem. Entries are the basic
// arcs (possibly with zero mass on degenerate ones), sorted by (from, to);
// at most m+n-1 of them. Duals certify optimality: u_i + v_j <= cost(i,j)
// with equality on basic arcs.
struct TransportPlan {
    int source_count = 0;
    int target_count = 0;
    std::vector<TransportEntry> entries;
    double total_cost = 0.0;
    std::vector<double> dual_u;
    std::vector<double> dual_v;
};

struct TransportOptions {
    double balance_tol = 1e-9; // relative weight-sum mismatch repaired by rescaling nu
    int max_size = 1024;       // cap on either marginal length (dense cost only)
};

// Exact optimum by network simplex on the bipartite transportation graph.
TransportPlan solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                const Eigen::MatrixXd& cost, const TransportOptions& options = {});

// For each source site, the target receiving the most mass from it
// (smallest target index on ties).
std::vector<int> plan_as_soft_correspondence(const TransportPlan& plan);

} // namespace surfdist
