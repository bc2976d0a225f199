#include "surfdist/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "surfdist/errors.hpp"

namespace surfdist {

DiscreteMeasure DiscreteMeasure::uniform(int n) {
    DiscreteMeasure mu;
    mu.points.resize(n);
    std::iota(mu.points.begin(), mu.points.end(), 0);
    mu.weights.assign(n, 1.0 / n);
    return mu;
}

double DiscreteMeasure::total() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

namespace {

struct Arc {
    int s = -1;   // source node (0..m-1)
    int t = -1;   // target node (m..m+n-1)
    double flow = 0.0;
};

} // namespace

TransportPlan solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                const Eigen::MatrixXd& cost, const TransportOptions& options) {
    const int m = mu.size();
    const int n = nu.size();
    if (m < 1 || n < 1) throw SolverError("transport requires nonempty measures");
    if (m > options.max_size || n > options.max_size)
        throw SolverError("transport instance " + std::to_string(m) + "x" + std::to_string(n) +
                          " exceeds the dense cap " + std::to_string(options.max_size) +
                          "; reduce the sample count");
    if (cost.rows() != m || cost.cols() != n)
        throw SolverError("cost matrix is " + std::to_string(cost.rows()) + "x" +
                          std::to_string(cost.cols()) + ", expected " + std::to_string(m) + "x" +
                          std::to_string(n));
    double cscale = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double c = cost(i, j);
            if (!std::isfinite(c) || c < 0.0) throw SolverError("cost entries must be finite and >= 0");
            cscale = std::max(cscale, c);
        }
    for (double w : mu.weights)
        if (!(w >= 0.0)) throw SolverError("negative source weight");
    for (double w : nu.weights)
        if (!(w >= 0.0)) throw SolverError("negative target weight");

    std::vector<double> a = mu.weights;
    std::vector<double> b = nu.weights;
    double sa = mu.total(), sb = nu.total();
    if (!(sa > 0.0) || !(sb > 0.0)) throw SolverError("measures must carry positive mass");
    if (std::abs(sa - sb) > options.balance_tol * std::max(sa, sb))
        throw SolverError("measure totals differ by " + std::to_string(std::abs(sa - sb)) +
                          ", beyond the balance tolerance");
    // repair residual imbalance by proportional rescaling of nu, then push the
    // leftover rounding onto its largest entry so the sums match bit-exactly
    double scale = sa / sb;
    double sb2 = 0.0;
    for (double& w : b) {
        w *= scale;
        sb2 += w;
    }
    int jmax = static_cast<int>(std::max_element(b.begin(), b.end()) - b.begin());
    b[jmax] += sa - sb2;
    if (b[jmax] < 0.0) b[jmax] = 0.0;

    const int N = m + n;
    std::vector<Arc> arcs;
    arcs.reserve(N - 1);

    // northwest-corner initial basis (spanning staircase tree)
    {
        std::vector<double> ra = a, rb = b;
        int i = 0, j = 0;
        while (true) {
            double x = std::min(ra[i], rb[j]);
            arcs.push_back({i, m + j, x});
            ra[i] -= x;
            rb[j] -= x;
            if (i == m - 1 && j == n - 1) break;
            if (ra[i] == 0.0 && i < m - 1)
                ++i;
            else if (j < n - 1)
                ++j;
            else
                ++i; // bottom row: rounding drift left residual supply here
        }
    }

    std::vector<std::vector<int>> adj(N);
    for (int k = 0; k < static_cast<int>(arcs.size()); ++k) {
        adj[arcs[k].s].push_back(k);
        adj[arcs[k].t].push_back(k);
    }

    std::vector<int> parent_node(N), parent_arc(N), depth(N), order(N);
    std::vector<double> pot(N);
    auto refresh_tree = [&]() {
        std::fill(parent_node.begin(), parent_node.end(), -1);
        parent_node[0] = 0;
        parent_arc[0] = -1;
        depth[0] = 0;
        pot[0] = 0.0;
        order[0] = 0;
        int head = 0, tail = 1;
        while (head < tail) {
            int x = order[head++];
            for (int k : adj[x]) {
                int y = arcs[k].s == x ? arcs[k].t : arcs[k].s;
                if (parent_node[y] >= 0) continue;
                parent_node[y] = x;
                parent_arc[y] = k;
                depth[y] = depth[x] + 1;
                pot[y] = cost(arcs[k].s, arcs[k].t - m) - pot[x];
                order[tail++] = y;
            }
        }
        if (tail != N) throw SolverError("transport basis lost connectivity");
    };

    const double eps = 1e-12 * cscale;
    long long iter_cap = 64LL * N * N + 4096;
    int degenerate_streak = 0;
    bool bland = false;

    std::vector<int> cycle_arcs;
    std::vector<char> cycle_sign; // 1 gains flow, 0 loses

    for (long long iter = 0;; ++iter) {
        if (iter > iter_cap) throw SolverError("transport pivot cap exceeded");
        refresh_tree();

        // pricing: most negative reduced cost (Dantzig), or first negative in
        // index order while resolving a degenerate streak (Bland)
        int ei = -1, ej = -1;
        double best = -eps;
        for (int i = 0; i < m && (!bland || ei < 0); ++i) {
            double ui = pot[i];
            for (int j = 0; j < n; ++j) {
                double rc = cost(i, j) - ui - pot[m + j];
                if (rc < best) {
                    best = rc;
                    ei = i;
                    ej = j;
                    if (bland) break;
                }
            }
        }
        if (ei < 0) break; // optimal

        // the entering arc closes one cycle in the tree; walk both endpoints
        // to their common ancestor, recording crossing direction
        cycle_arcs.clear();
        cycle_sign.clear();
        int x = m + ej, y = ei;
        // crossing x -> parent is +flow when leaving a source node
        while (depth[x] > depth[y]) {
            cycle_arcs.push_back(parent_arc[x]);
            cycle_sign.push_back(x < m);
            x = parent_node[x];
        }
        // crossing parent -> y is +flow when the parent is a source node
        while (depth[y] > depth[x]) {
            cycle_arcs.push_back(parent_arc[y]);
            cycle_sign.push_back(parent_node[y] < m);
            y = parent_node[y];
        }
        while (x != y) {
            cycle_arcs.push_back(parent_arc[x]);
            cycle_sign.push_back(x < m);
            x = parent_node[x];
            cycle_arcs.push_back(parent_arc[y]);
            cycle_sign.push_back(parent_node[y] < m);
            y = parent_node[y];
        }

        double delta = std::numeric_limits<double>::infinity();
        int leave = -1;
        long long leave_id = -1;
        for (std::size_t k = 0; k < cycle_arcs.size(); ++k) {
            if (cycle_sign[k]) continue;
            const Arc& arc = arcs[cycle_arcs[k]];
            long long id = static_cast<long long>(arc.s) * n + (arc.t - m);
            if (arc.flow < delta || (arc.flow == delta && id < leave_id)) {
                delta = arc.flow;
                leave = cycle_arcs[k];
                leave_id = id;
            }
        }
        if (leave < 0) throw SolverError("transport cycle without a leaving arc");

        for (std::size_t k = 0; k < cycle_arcs.size(); ++k)
            arcs[cycle_arcs[k]].flow += cycle_sign[k] ? delta : -delta;
        arcs[leave].flow = 0.0;

        if (delta == 0.0) {
            if (++degenerate_streak > N) bland = true;
        } else {
            degenerate_streak = 0;
            bland = false;
        }

        // swap the leaving arc's slot for the entering arc
        auto drop = [&](int node, int slot) {
            auto& lst = adj[node];
            lst.erase(std::find(lst.begin(), lst.end(), slot));
        };
        drop(arcs[leave].s, leave);
        drop(arcs[leave].t, leave);
        arcs[leave] = {ei, m + ej, delta};
        adj[ei].push_back(leave);
        adj[m + ej].push_back(leave);
    }

    TransportPlan plan;
    plan.source_count = m;
    plan.target_count = n;
    plan.dual_u.resize(m);
    plan.dual_v.resize(n);
    for (int i = 0; i < m; ++i) plan.dual_u[i] = pot[i];
    for (int j = 0; j < n; ++j) plan.dual_v[j] = pot[m + j];
    std::sort(arcs.begin(), arcs.end(), [](const Arc& p, const Arc& q) {
        return p.s != q.s ? p.s < q.s : p.t < q.t;
    });
    plan.entries.reserve(arcs.size());
    for (const Arc& arc : arcs) {
        plan.entries.push_back({arc.s, arc.t - m, arc.flow});
        plan.total_cost += arc.flow * cost(arc.s, arc.t - m);
    }
    return plan;
}

std::vector<int> plan_as_soft_correspondence(const TransportPlan& plan) {
    std::vector<int> target(plan.source_count, -1);
    std::vector<double> best(plan.source_count, -1.0);
    for (const TransportEntry& e : plan.entries) {
        // entries sorted by (from, to): strict > keeps the smallest target on ties
        if (e.mass > best[e.from]) {
            best[e.from] = e.mass;
            target[e.from] = e.to;
        }
    }
    for (int i = 0; i < plan.source_count; ++i)
        if (target[i] < 0) throw SolverError("plan has no arc for source " + std::to_string(i));
    return target;
}

} // namespace surfdist
