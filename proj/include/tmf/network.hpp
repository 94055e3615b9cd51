/// @file network.hpp Static agent topology and consensus averaging of particle ensembles.

#ifndef TMF_NETWORK_HPP
#define TMF_NETWORK_HPP

#include <algorithm>
#include <cstddef>
#include <queue>
#include <string>
#include <vector>

#include "ensemble.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "types.hpp"

namespace tmf {

/// N x N binary adjacency with mandatory self-loops. Row l lists the agents
/// whose information agent l receives.
class Topology {
public:
    Topology() = default;

    explicit Topology(std::vector<std::vector<bool>> adjacency) : adjacency_(std::move(adjacency)) {
        const std::size_t n = adjacency_.size();
        if (n == 0) {
            throw StructuralError("Topology: at least one agent is required");
        }
        for (std::size_t l = 0; l < n; ++l) {
            if (adjacency_[l].size() != n) {
                throw StructuralError("Topology: adjacency must be square");
            }
            if (!adjacency_[l][l]) {
                throw StructuralError("Topology: agent " + std::to_string(l) + " is missing its self-loop");
            }
        }
    }

    /// Builds the adjacency from per-agent neighbour lists.
    static Topology from_neighbor_lists(const std::vector<std::vector<int>>& lists) {
        const std::size_t n = lists.size();
        std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
        for (std::size_t l = 0; l < n; ++l) {
            for (int nb : lists[l]) {
                if (nb < 0 || static_cast<std::size_t>(nb) >= n) {
                    throw StructuralError("Topology: neighbour id " + std::to_string(nb) + " out of range");
                }
                adj[l][static_cast<std::size_t>(nb)] = true;
            }
        }
        return Topology(std::move(adj));
    }

    static Topology complete(int n) {
        return Topology(std::vector<std::vector<bool>>(static_cast<std::size_t>(n),
                                                       std::vector<bool>(static_cast<std::size_t>(n), true)));
    }

    static Topology isolated(int n) {
        std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n)));
        for (std::size_t l = 0; l < adj.size(); ++l) {
            adj[l][l] = true;
        }
        return Topology(std::move(adj));
    }

    [[nodiscard]] int size() const noexcept { return static_cast<int>(adjacency_.size()); }
    [[nodiscard]] bool edge(int from, int to) const { return adjacency_.at(from).at(to); }

    /// Ascending ids l' with A(l, l') = 1, including l.
    [[nodiscard]] std::vector<int> neighbors(int l) const {
        if (l < 0 || l >= size()) {
            throw StructuralError("Topology::neighbors: agent " + std::to_string(l) + " out of range");
        }
        std::vector<int> out;
        for (int j = 0; j < size(); ++j) {
            if (adjacency_[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)]) {
                out.push_back(j);
            }
        }
        return out;
    }

    [[nodiscard]] int max_degree() const {
        int best = 0;
        for (int l = 0; l < size(); ++l) {
            best = std::max(best, static_cast<int>(neighbors(l).size()));
        }
        return best;
    }

    /// Connectivity of the symmetrised graph.
    [[nodiscard]] bool is_connected() const {
        const int n = size();
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        std::queue<int> frontier;
        frontier.push(0);
        seen[0] = true;
        int visited = 1;
        while (!frontier.empty()) {
            const int u = frontier.front();
            frontier.pop();
            for (int v = 0; v < n; ++v) {
                if (!seen[static_cast<std::size_t>(v)] && (edge(u, v) || edge(v, u))) {
                    seen[static_cast<std::size_t>(v)] = true;
                    ++visited;
                    frontier.push(v);
                }
            }
        }
        return visited == n;
    }

private:
    std::vector<std::vector<bool>> adjacency_;
};

struct ConsensusOptions {
    double gamma = 0.1;
    int iterations = 1;
    /// Use the agent's own mean in every summand, as the update is printed,
    /// instead of each neighbour's mean.
    bool literal = false;
};

/// Requires 0 < gamma < 1 and gamma * max |Nbs(l)| < 1.
inline void validate_gamma(const Topology& topology, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0) || !(gamma * topology.max_degree() < 1.0)) {
        throw ConfigError("gamma out of stable range: need 0 < gamma < 1 and gamma * max_degree < 1 (gamma=" +
                          std::to_string(gamma) + ", max_degree=" + std::to_string(topology.max_degree()) + ")");
    }
}

/// One synchronous consensus application:
///     x_i^l <- x_i^l + gamma * sum_{l' in Nbs(l)} (mean^{l'} - x_i^l)
/// with every mean taken from the pre-step ensembles.
[[nodiscard]] inline std::vector<ParticleEnsemble> consensus_step(const std::vector<ParticleEnsemble>& ensembles,
                                                                  const Topology& topology,
                                                                  const ConsensusOptions& options,
                                                                  unsigned threads = 1) {
    if (static_cast<int>(ensembles.size()) != topology.size()) {
        throw StructuralError("consensus_step: need one ensemble per agent");
    }
    validate_gamma(topology, options.gamma);
    for (const auto& e : ensembles) {
        if (e.size() != ensembles.front().size() || e.dim() != ensembles.front().dim()) {
            throw StructuralError("consensus_step: ensembles differ in size or dimension");
        }
    }

    std::vector<ParticleEnsemble> current = ensembles;
    for (int iter = 0; iter < options.iterations; ++iter) {
        std::vector<Vector> means;
        means.reserve(current.size());
        for (const auto& e : current) {
            means.push_back(e.mean());
        }
        std::vector<ParticleEnsemble> next = current;
        parallel_for(current.size(), threads, [&](std::size_t l) {
            const std::vector<int> nbs = topology.neighbors(static_cast<int>(l));
            const auto degree = static_cast<double>(nbs.size());
            Vector pull = Vector::Zero(current[l].dim());
            if (options.literal) {
                pull = degree * means[l];
            } else {
                for (int nb : nbs) {
                    pull += means[static_cast<std::size_t>(nb)];
                }
            }
            // x + gamma * (sum_nb mean_nb - degree * x)
            Matrix& x = next[l].particles;
            x = (1.0 - options.gamma * degree) * current[l].particles;
            x.rowwise() += (options.gamma * pull).transpose();
        });
        current = std::move(next);
    }
    return current;
}

} // namespace tmf

#endif // TMF_NETWORK_HPP
