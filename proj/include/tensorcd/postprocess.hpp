#pragma once

#include "errors.hpp"
#include "graph_io.hpp"
#include "linalg.hpp"
#include "stgd.hpp"
#include "whitening.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace tensorcd {

struct TopicEstimate {
    Matrix mu_hat;     ///< d x k
    Vector alpha_hat;  ///< sums to 1
    Index zero_columns = 0;
};

struct CommunityEstimate {
    Matrix Pi_hat;     ///< k x n; columns of nodes without an estimate are zero
    Vector alpha_hat;
    double threshold = 0;
    Index k_hat = 0;
    Index zero_columns = 0;  ///< estimated nodes left with no membership after thresholding
};

inline void require_nonzero(const Vector& lambda) {
    std::string bad;
    for (Index i = 0; i < lambda.size(); ++i)
        if (!(lambda(i) > 0)) bad += (bad.empty() ? "" : ", ") + std::to_string(i);
    if (!bad.empty()) throw DegenerateComponentError("zero eigenvalue for component(s) " + bad);
}

/// gamma = (sum lambda^-2)^-1/2, the scale that makes gamma^2 lambda^-2 sum to one.
inline double gamma_from_eigenvalues(const Vector& lambda) {
    require_nonzero(lambda);
    return 1.0 / std::sqrt(lambda.array().pow(-2).sum());
}

inline Vector alpha_from_eigenvalues(const Vector& lambda) {
    const double g = gamma_from_eigenvalues(lambda);
    Vector a = (g * g) * lambda.array().pow(-2).matrix();
    return a / a.sum();
}

/// Clips negatives to zero and rescales each nonzero column to sum to one.
inline Index normalize_columns(Matrix& M) {
    M = M.cwiseMax(0.0);
    Index zero = 0;
    for (Index j = 0; j < M.cols(); ++j) {
        double s = M.col(j).sum();
        if (s > 0)
            M.col(j) /= s;
        else
            ++zero;
    }
    return zero;
}

/// mu_hat = W (W'W)^-1 Phi, i.e. the pseudoinverse of W' applied to Phi, then projected to
/// the simplex column by column.
inline TopicEstimate recover_topics(const WhiteningContext& ctx, const EigenEstimate& est) {
    if (ctx.W.cols() != est.Phi.rows()) throw ValidationError("whitening and eigenvector dimensions differ");
    TopicEstimate t;
    t.alpha_hat = alpha_from_eigenvalues(est.Lambda);
    Matrix gram = ctx.W.transpose() * ctx.W;
    t.mu_hat = ctx.W * gram.ldlt().solve(est.Phi);
    t.zero_columns = normalize_columns(t.mu_hat);
    return t;
}

/// Unnormalized memberships of the given nodes: gamma^(1/3) diag(Lambda)^-1 Phibar' W' G_{y,A}'
/// where Phibar has unit columns and G_{y,A} is the row of node y restricted to the columns of A.
inline Matrix membership_scores(const SparseRows& rows_to_A, const Matrix& W, const EigenEstimate& est) {
    require_nonzero(est.Lambda);
    Matrix unit = est.Phi;
    for (Index i = 0; i < unit.cols(); ++i) unit.col(i) /= unit.col(i).norm();
    const double g = gamma_from_eigenvalues(est.Lambda);
    Matrix proj = W * unit;                 // n_A x k
    Matrix raw = (rows_to_A * proj).transpose();  // k x m
    raw = est.Lambda.cwiseInverse().asDiagonal() * raw;
    return std::cbrt(g) * raw;
}

/// Clip, normalize, zero every entry <= threshold, renormalize. Returns the count of
/// columns (among `active`) that end up all zero.
inline Index threshold_memberships(Matrix& Pi, double threshold, const std::vector<Index>* active = nullptr) {
    if (threshold < 0 || threshold > 1) throw ValidationError("threshold must lie in [0, 1]");
    normalize_columns(Pi);
    Pi = (Pi.array() > threshold).select(Pi, 0.0);
    normalize_columns(Pi);
    Index zero = 0;
    if (active) {
        for (Index j : *active)
            if (Pi.col(j).sum() == 0) ++zero;
    } else {
        for (Index j = 0; j < Pi.cols(); ++j)
            if (Pi.col(j).sum() == 0) ++zero;
    }
    return zero;
}

/// Minimum-cost assignment of rows to columns of a square cost matrix (Hungarian method).
/// Returns assignment[row] = column.
inline std::vector<Index> hungarian(const Matrix& cost) {
    const Index n = cost.rows();
    if (cost.cols() != n) throw ValidationError("assignment needs a square cost matrix");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0), way_cost(n + 1);
    std::vector<Index> p(n + 1, 0), way(n + 1, 0);
    for (Index i = 1; i <= n; ++i) {
        p[0] = i;
        Index j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            Index i0 = p[j0], j1 = 0;
            double delta = inf;
            for (Index j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            Index j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<Index> assignment(n, -1);
    for (Index j = 1; j <= n; ++j)
        if (p[j] > 0) assignment[p[j] - 1] = j - 1;
    return assignment;
}

/// Raw memberships of every node outside A (k x n, zero columns for A).
inline Matrix pass_memberships(const SparseGraph& g, const NodePartition& part, const WhiteningContext& ctx,
                               const EigenEstimate& est) {
    const Index n = g.n_nodes();
    std::vector<bool> in_A(static_cast<std::size_t>(n), false);
    for (Index a : part.A) in_A[static_cast<std::size_t>(a)] = true;
    std::vector<Index> others;
    for (const auto* set : {&part.X, &part.B, &part.C}) others.insert(others.end(), set->begin(), set->end());
    SparseRows rows = extract_block(g.adjacency, others, part.A);
    Matrix scores = membership_scores(rows, ctx.W, est);
    Matrix out = Matrix::Zero(est.Phi.cols(), n);
    for (std::size_t i = 0; i < others.size(); ++i) out.col(others[i]) = scores.col(static_cast<Index>(i));
    return out;
}

/// Memberships of A^c = X u B u C from one fitted pass.
inline CommunityEstimate recover_memberships(const SparseGraph& g, const NodePartition& part,
                                             const WhiteningContext& ctx, const EigenEstimate& est, double threshold) {
    CommunityEstimate e;
    e.Pi_hat = pass_memberships(g, part, ctx, est);
    e.alpha_hat = alpha_from_eigenvalues(est.Lambda);
    e.threshold = threshold;
    e.k_hat = est.Phi.cols();
    std::vector<Index> active;
    for (const auto* set : {&part.X, &part.B, &part.C}) active.insert(active.end(), set->begin(), set->end());
    e.zero_columns = threshold_memberships(e.Pi_hat, threshold, &active);
    return e;
}

/// Pearson correlation between two rows restricted to the given columns.
inline double row_correlation(const Matrix& P, Index i, const Matrix& Q, Index j, const std::vector<Index>& cols) {
    const double m = static_cast<double>(cols.size());
    double sx = 0, sy = 0;
    for (Index c : cols) {
        sx += P(i, c);
        sy += Q(j, c);
    }
    const double mx = sx / m, my = sy / m;
    double xy = 0, xx = 0, yy = 0;
    for (Index c : cols) {
        const double a = P(i, c) - mx, b = Q(j, c) - my;
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    return (xx > 0 && yy > 0) ? xy / std::sqrt(xx * yy) : 0.0;
}

/// Permutation of the second pass's communities that best matches the first pass on the
/// shared nodes: perm[i] is the second-pass row aligned with first-pass row i.
inline std::vector<Index> align_passes(const Matrix& first, const Matrix& second, const std::vector<Index>& shared) {
    const Index k = first.rows();
    Matrix cost(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j) cost(i, j) = -row_correlation(first, i, second, j, shared);
    return hungarian(cost);
}

/// Swaps the roles of X and A.
inline NodePartition exchange_roles(const NodePartition& p) {
    NodePartition q = p;
    std::swap(q.X, q.A);
    return q;
}

/// Combines the pass over (X, A, B, C) with the pass over (A, X, B, C): the first supplies
/// X u B u C, the second supplies A after its communities are aligned on B u C.
inline CommunityEstimate combine_passes(const Matrix& raw_first, const Matrix& raw_second, const NodePartition& part,
                                        const Vector& alpha_hat, double threshold) {
    Matrix first = raw_first, second = raw_second;
    normalize_columns(first);
    normalize_columns(second);
    std::vector<Index> shared(part.B);
    shared.insert(shared.end(), part.C.begin(), part.C.end());
    const std::vector<Index> perm = align_passes(first, second, shared);
    CommunityEstimate e;
    e.Pi_hat = raw_first;
    for (Index i = 0; i < e.Pi_hat.rows(); ++i)
        for (Index a : part.A) e.Pi_hat(i, a) = raw_second(perm[i], a);
    e.alpha_hat = alpha_hat;
    e.threshold = threshold;
    e.k_hat = e.Pi_hat.rows();
    std::vector<Index> active;
    for (const auto* set : {&part.X, &part.A, &part.B, &part.C}) active.insert(active.end(), set->begin(), set->end());
    e.zero_columns = threshold_memberships(e.Pi_hat, threshold, &active);
    return e;
}

}  // namespace tensorcd
