#include "dispatch/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Dense>

namespace dispatch {

double bellman_residual(const std::vector<SparseRow>& rows, const Eigen::VectorXd& cost,
                        const Eigen::VectorXd& values, double avg_cost) {
    double worst = 0.0;
    for (std::size_t s = 0; s < rows.size(); ++s) {
        double expect = 0.0;
        for (const auto& [col, p] : rows[s]) expect += p * values[col];
        const double r = values[s] - (cost[s] - 0.5 * avg_cost + expect);
        // a NaN row (from a degenerate solve) must poison the residual, not
        // fall out of the max
        if (!std::isfinite(r)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

namespace {

// Bordered square system over an index subset: Bellman rows for each member
// plus the anchor row. `index_of[global] >= 0` selects members.
AnchoredSolution solve_on_subset(const std::vector<SparseRow>& rows,
                                 const Eigen::VectorXd& cost,
                                 const std::vector<int>& members,
                                 const std::vector<int>& index_of, int anchor_local) {
    const int n = static_cast<int>(members.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
    for (int k = 0; k < n; ++k) {
        const int s = members[k];
        A(k, k) += 1.0;
        for (const auto& [col, p] : rows[s]) {
            const int local = index_of[col];
            // Closed-class members only transition within the class.
            if (local >= 0) A(k, local) -= p;
        }
        A(k, n) = 0.5;
        b(k) = cost[s];
    }
    A(n, anchor_local) = 1.0;
    Eigen::VectorXd x = A.partialPivLu().solve(b);

    AnchoredSolution sol;
    sol.values = x.head(n);
    sol.avg_cost = x(n);
    return sol;
}

} // namespace

AnchoredSolution solve_anchored_average_cost(const std::vector<SparseRow>& rows,
                                             const Eigen::VectorXd& cost, int anchor) {
    const int n = static_cast<int>(rows.size());
    std::vector<int> identity(n);
    for (int i = 0; i < n; ++i) identity[i] = i;
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;

    AnchoredSolution sol = solve_on_subset(rows, cost, all, identity, anchor);
    sol.values.array() -= sol.values[anchor]; // exactly zero, not epsilon
    sol.residual = bellman_residual(rows, cost, sol.values, sol.avg_cost);
    if (sol.residual <= 1e-9) return sol;

    // Singular or ill-conditioned: the chain is not unichain over the full
    // index set. Solve on the closed communicating class (preferring the
    // anchor's), then fill transient classes by one-step lookahead in
    // topological order.
    int num_components = 0;
    const std::vector<int> comp = strongly_connected_components(rows, num_components);

    std::vector<char> closed(num_components, 1);
    for (int s = 0; s < n; ++s)
        for (const auto& [col, p] : rows[s])
            if (comp[col] != comp[s]) closed[comp[s]] = 0;

    int target = closed[comp[anchor]] ? comp[anchor] : -1;
    if (target < 0)
        for (int c = 0; c < num_components && target < 0; ++c)
            if (closed[c]) target = c;
    if (target < 0) throw NumericalError("no closed communicating class found");

    std::vector<int> members;
    std::vector<int> index_of(n, -1);
    for (int s = 0; s < n; ++s)
        if (comp[s] == target) {
            index_of[s] = static_cast<int>(members.size());
            members.push_back(s);
        }
    const int anchor_local = index_of[anchor] >= 0 ? index_of[anchor] : 0;
    AnchoredSolution core = solve_on_subset(rows, cost, members, index_of, anchor_local);

    Eigen::VectorXd values = Eigen::VectorXd::Zero(n);
    std::vector<char> known(n, 0);
    for (int k = 0; k < static_cast<int>(members.size()); ++k) {
        values[members[k]] = core.values[k];
        known[members[k]] = 1;
    }

    // Tarjan ids are in reverse topological order: low ids are sinks, so a
    // class only depends on classes with lower ids.
    for (int c = 0; c < num_components; ++c) {
        if (c == target) continue;
        std::vector<int> cls;
        for (int s = 0; s < n; ++s)
            if (comp[s] == c && !known[s]) cls.push_back(s);
        if (cls.empty()) continue;
        std::vector<int> local(n, -1);
        for (std::size_t k = 0; k < cls.size(); ++k) local[cls[k]] = static_cast<int>(k);
        const int m = static_cast<int>(cls.size());
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
        for (int k = 0; k < m; ++k) {
            b(k) = cost[cls[k]] - 0.5 * core.avg_cost;
            for (const auto& [col, p] : rows[cls[k]]) {
                if (local[col] >= 0)
                    A(k, local[col]) -= p;
                else
                    b(k) += p * values[col];
            }
        }
        const Eigen::VectorXd v = A.partialPivLu().solve(b);
        for (int k = 0; k < m; ++k) {
            values[cls[k]] = v(k);
            known[cls[k]] = 1;
        }
    }

    values.array() -= values[anchor];
    AnchoredSolution out;
    out.values = std::move(values);
    out.avg_cost = core.avg_cost;
    out.residual = bellman_residual(rows, cost, out.values, out.avg_cost);
    return out;
}

Eigen::VectorXd jump_chain_stationary(const std::vector<SparseRow>& rows) {
    const int n = static_cast<int>(rows.size());
    // pi (I - P) = 0 with the last balance equation replaced by sum(pi) = 1.
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    for (int s = 0; s < n; ++s)
        for (const auto& [col, p] : rows[s]) A(col, s) -= p;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    A.row(n - 1).setOnes();
    b(n - 1) = 1.0;
    return A.partialPivLu().solve(b);
}

std::vector<int> strongly_connected_components(const std::vector<SparseRow>& rows,
                                               int& num_components) {
    const int n = static_cast<int>(rows.size());
    std::vector<int> comp(n, -1), low(n, 0), disc(n, -1), stack;
    std::vector<char> on_stack(n, 0);
    stack.reserve(n);
    num_components = 0;
    int timer = 0;

    // Iterative Tarjan; frames carry the next out-edge position.
    struct Frame {
        int node;
        std::size_t edge;
    };
    std::vector<Frame> frames;
    for (int root = 0; root < n; ++root) {
        if (disc[root] != -1) continue;
        frames.push_back({root, 0});
        while (!frames.empty()) {
            auto& [u, e] = frames.back();
            if (e == 0) {
                disc[u] = low[u] = timer++;
                stack.push_back(u);
                on_stack[u] = 1;
            }
            bool descended = false;
            while (e < rows[u].size()) {
                const int v = rows[u][e].first;
                ++e;
                if (disc[v] == -1) {
                    frames.push_back({v, 0});
                    descended = true;
                    break;
                }
                if (on_stack[v]) low[u] = std::min(low[u], disc[v]);
            }
            if (descended) continue;
            if (low[u] == disc[u]) {
                while (true) {
                    const int w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = num_components;
                    if (w == u) break;
                }
                ++num_components;
            }
            const int child = u;
            frames.pop_back();
            if (!frames.empty())
                low[frames.back().node] = std::min(low[frames.back().node], low[child]);
        }
    }
    return comp;
}

bool is_irreducible(const std::vector<SparseRow>& rows) {
    int num_components = 0;
    strongly_connected_components(rows, num_components);
    return num_components == 1;
}

} // namespace dispatch
