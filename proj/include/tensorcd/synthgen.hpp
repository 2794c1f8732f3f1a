#pragma once

#include "errors.hpp"
#include "graph_io.hpp"
#include "linalg.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tensorcd {

/// Dirichlet(alpha). The categorical flag selects the alpha0 = 0 limit, where each draw
/// is one-hot with category probabilities proportional to alpha.
struct DirichletSpec {
    Vector alpha;
    bool categorical = false;

    Index k() const { return alpha.size(); }
    double alpha0() const { return categorical ? 0.0 : alpha.sum(); }

    /// alpha_i = alpha0 / k; alpha0 == 0 gives the uniform categorical limit.
    static DirichletSpec symmetric(Index k, double alpha0) {
        if (k < 1) throw ValidationError("Dirichlet needs k >= 1");
        if (alpha0 < 0) throw ValidationError("alpha0 must be nonnegative");
        DirichletSpec s;
        if (alpha0 == 0) {
            s.alpha = Vector::Ones(k);
            s.categorical = true;
        } else {
            s.alpha = Vector::Constant(k, alpha0 / static_cast<double>(k));
        }
        return s;
    }
};

struct CommunityTruth {
    Matrix Pi;  ///< k x n, columns on the simplex
    Matrix P;   ///< k x k connectivity
};

struct TopicTruth {
    Matrix mu;  ///< d x k topic-word matrix, column-stochastic
    DirichletSpec prior;
};

enum class EdgeModel { bernoulli, poisson };

inline Matrix sample_memberships(const DirichletSpec& spec, Index n, std::uint64_t seed) {
    const Index k = spec.k();
    if (k < 1) throw ValidationError("membership sampling needs k >= 1");
    if (n < 1) throw ValidationError("membership sampling needs n >= 1");
    Rng rng(seed);
    Matrix Pi = Matrix::Zero(k, n);
    if (spec.categorical) {
        if ((spec.alpha.array() < 0).any() || spec.alpha.sum() <= 0)
            throw ValidationError("categorical weights must be nonnegative with positive sum");
        std::discrete_distribution<Index> pick(spec.alpha.data(), spec.alpha.data() + k);
        for (Index i = 0; i < n; ++i) Pi(pick(rng), i) = 1.0;
        return Pi;
    }
    if ((spec.alpha.array() <= 0).any()) throw ValidationError("Dirichlet concentration entries must be positive");
    std::vector<std::gamma_distribution<double>> gammas;
    for (Index a = 0; a < k; ++a) gammas.emplace_back(spec.alpha(a), 1.0);
    for (Index i = 0; i < n; ++i) {
        double s = 0;
        // Very small concentrations can underflow every draw to zero; redraw in that case.
        while (s <= 0) {
            for (Index a = 0; a < k; ++a) Pi(a, i) = gammas[a](rng);
            s = Pi.col(i).sum();
        }
        Pi.col(i) /= s;
    }
    return Pi;
}

/// p_out everywhere plus (p_in - p_out) on the diagonal.
inline Matrix planted_connectivity(Index k, double p_in, double p_out) {
    Matrix P = Matrix::Constant(k, k, p_out);
    P.diagonal().setConstant(p_in);
    return P;
}

struct GraphShape {
    bool directed = false;
    std::optional<Index> bipartite_split;  ///< only pairs (left, right) are drawn when set
};

inline std::vector<std::string> default_ids(Index n) {
    std::vector<std::string> ids(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = std::to_string(i);
    return ids;
}

/// Draws every eligible pair independently with rate pi_i' P pi_j.
inline SparseGraph generate_mmsb(const CommunityTruth& truth, EdgeModel model, std::uint64_t seed,
                                 const GraphShape& shape = {}) {
    const Matrix& Pi = truth.Pi;
    const Matrix& P = truth.P;
    const Index k = Pi.rows(), n = Pi.cols();
    if (P.rows() != k || P.cols() != k) throw ValidationError("connectivity matrix must be k x k");
    if ((P.array() < 0).any()) throw ValidationError("connectivity entries must be nonnegative");
    if (model == EdgeModel::bernoulli && (P.array() > 1).any())
        throw ValidationError("Bernoulli model needs connectivity entries in [0, 1]");
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Matrix Q = P * Pi;  // column j holds P pi_j
    std::vector<Eigen::Triplet<double, int>> entries;
    auto draw = [&](Index i, Index j) {
        double r = Pi.col(i).dot(Q.col(j));
        if (model == EdgeModel::bernoulli) {
            if (r > 1 + 1e-12) throw ValidationError("Bernoulli rate exceeds 1");
            if (unif(rng) < r) entries.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
        } else if (r > 0) {
            std::poisson_distribution<long> pois(r);
            long c = pois(rng);
            if (c > 0) entries.emplace_back(static_cast<int>(i), static_cast<int>(j), static_cast<double>(c));
        }
    };
    if (shape.bipartite_split) {
        const Index nl = *shape.bipartite_split;
        for (Index i = 0; i < nl; ++i)
            for (Index j = nl; j < n; ++j) draw(i, j);
    } else {
        for (Index i = 0; i < n; ++i)
            for (Index j = shape.directed ? 0 : i + 1; j < n; ++j)
                if (j != i) draw(i, j);
    }
    SparseGraph g;
    g.directed = shape.directed;
    g.bipartite_split = shape.bipartite_split;
    g.external_ids = default_ids(n);
    g.adjacency = assemble_adjacency(n, entries, shape.directed, model == EdgeModel::poisson);
    return g;
}

/// Undirected generator whose cost scales with the number of edges rather than n^2.
/// Edge counts per community pair (a, b) are Poisson with mean P_ab S_a S_b / 2, where
/// S_a = sum_i pi_i(a), and endpoints are drawn proportionally to membership. Each
/// unordered pair then receives a Poisson(pi_i' P pi_j) count. With the Bernoulli model the
/// counts are collapsed to 0/1, which matches the exact model up to O(rate^2) per pair.
inline SparseGraph generate_mmsb_sparse(const CommunityTruth& truth, EdgeModel model, std::uint64_t seed) {
    const Matrix& Pi = truth.Pi;
    const Index k = Pi.rows(), n = Pi.cols();
    if (truth.P.rows() != k || truth.P.cols() != k) throw ValidationError("connectivity matrix must be k x k");
    if ((truth.P.array() < 0).any()) throw ValidationError("connectivity entries must be nonnegative");
    Rng rng(seed);
    const Vector S = Pi.rowwise().sum();
    std::vector<std::discrete_distribution<int>> endpoint;
    for (Index a = 0; a < k; ++a) {
        std::vector<double> w(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = Pi(a, i);
        endpoint.emplace_back(w.begin(), w.end());
    }
    std::vector<Eigen::Triplet<double, int>> entries;
    for (Index a = 0; a < k; ++a)
        for (Index b = 0; b < k; ++b) {
            double mean = truth.P(a, b) * S(a) * S(b) / 2.0;
            if (mean <= 0) continue;
            std::poisson_distribution<long> count(mean);
            long m = count(rng);
            for (long e = 0; e < m; ++e) {
                int i = endpoint[a](rng), j = endpoint[b](rng);
                if (i != j) entries.emplace_back(i, j, 1.0);
            }
        }
    SparseGraph g;
    g.external_ids = default_ids(n);
    g.adjacency = assemble_adjacency(n, entries, false, model == EdgeModel::poisson);
    return g;
}

/// Documents with h ~ Dirichlet and doc_length words drawn i.i.d. from mu h.
inline Corpus generate_lda(const TopicTruth& truth, Index n_docs, Index doc_length, std::uint64_t seed) {
    const Matrix& mu = truth.mu;
    const Index d = mu.rows(), k = mu.cols();
    if (doc_length < 3) throw ValidationError("documents need at least 3 words");
    if (truth.prior.k() != k) throw ValidationError("prior dimension must match the number of topics");
    if ((mu.array() < 0).any()) throw ValidationError("topic-word entries must be nonnegative");
    Matrix H = sample_memberships(truth.prior, n_docs, seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::discrete_distribution<int>> words;
    for (Index z = 0; z < k; ++z) words.emplace_back(mu.col(z).data(), mu.col(z).data() + d);
    std::vector<Eigen::Triplet<double, int>> trips;
    for (Index t = 0; t < n_docs; ++t) {
        std::discrete_distribution<Index> topic(H.col(t).data(), H.col(t).data() + k);
        for (Index w = 0; w < doc_length; ++w) trips.emplace_back(static_cast<int>(t), words[topic(rng)](rng), 1.0);
    }
    Corpus c;
    c.vocab_size = d;
    c.freq.resize(n_docs, d);
    c.freq.setFromTriplets(trips.begin(), trips.end());
    c.freq.makeCompressed();
    c.doc_ids.resize(static_cast<std::size_t>(n_docs));
    for (Index t = 0; t < n_docs; ++t) c.doc_ids[static_cast<std::size_t>(t)] = t + 1;
    return c;
}

}  // namespace tensorcd
