#pragma once

#include "errors.hpp"
#include "linalg.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

namespace tensorcd {

namespace detail {

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300, eps = 1e-16;
    constexpr int max_iter = 10000;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1) < eps) return h;
    }
    throw ConvergenceError("incomplete beta continued fraction", std::abs(h));
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
    if (a <= 0 || b <= 0) throw ValidationError("incomplete beta needs positive shape parameters");
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    const double front =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1) / (a + b + 2)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1 - front * detail::beta_continued_fraction(b, a, 1 - x) / b;
}

/// P(T > t) for Student's t with nu degrees of freedom.
inline double student_t_upper_tail(double t, double nu) {
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    const double tail = 0.5 * regularized_incomplete_beta(nu / 2, 0.5, nu / (nu + t * t));
    return t >= 0 ? tail : 1 - tail;
}

struct PvalMatrix {
    Matrix values;   ///< k x k_hat right p-values (rows: ground truth, columns: estimates)
    Matrix t_stats;  ///< k x k_hat
    Index n_samples = 0;
    std::vector<std::pair<Index, Index>> undefined;  ///< cells with a zero-variance row, p set to 1
};

/// T_ij = rho sqrt(n-2) / sqrt(1-rho^2) with rho the Pearson correlation of Pi_i and Pi_hat_j.
inline PvalMatrix pvalue_matrix(const Matrix& Pi_true, const Matrix& Pi_hat, int workers = 1) {
    const Index n = Pi_true.cols();
    if (Pi_hat.cols() != n) throw ValidationError("membership matrices cover different node counts");
    if (n < 3) throw ValidationError("p-values need at least 3 nodes");
    const Index k = Pi_true.rows(), kh = Pi_hat.rows();
    auto centered = [](const Matrix& M) {
        Matrix C = M.colwise() - M.rowwise().mean();
        return C;
    };
    const Matrix A = centered(Pi_true), B = centered(Pi_hat);
    const Vector na = A.rowwise().norm(), nb = B.rowwise().norm();
    const Matrix cross = A * B.transpose();
    PvalMatrix pv;
    pv.n_samples = n;
    pv.values.resize(k, kh);
    pv.t_stats.resize(k, kh);
    const double dof = static_cast<double>(n - 2);
    std::vector<char> bad(static_cast<std::size_t>(k * kh), 0);
    parallel_for(k * kh, workers, [&](long lo, long hi) {
        for (long cell = lo; cell < hi; ++cell) {
            const Index i = cell % k, j = cell / k;
            if (na(i) == 0 || nb(j) == 0) {
                pv.values(i, j) = 1.0;
                pv.t_stats(i, j) = 0.0;
                bad[static_cast<std::size_t>(cell)] = 1;
                continue;
            }
            const double rho = std::clamp(cross(i, j) / (na(i) * nb(j)), -1.0, 1.0);
            const double denom = std::sqrt(std::max(0.0, 1 - rho * rho));
            const double T = denom > 0 ? rho * std::sqrt(dof) / denom
                                       : (rho > 0 ? std::numeric_limits<double>::infinity()
                                                  : -std::numeric_limits<double>::infinity());
            pv.t_stats(i, j) = T;
            pv.values(i, j) = std::clamp(student_t_upper_tail(T, dof), 0.0, 1.0);
        }
    });
    for (Index cell = 0; cell < k * kh; ++cell)
        if (bad[static_cast<std::size_t>(cell)]) pv.undefined.emplace_back(cell % k, cell / k);
    return pv;
}

/// Benjamini-Hochberg adjusted p-values over all cells.
inline Matrix benjamini_hochberg(const Matrix& p) {
    const Index m = p.size();
    std::vector<Index> idx(static_cast<std::size_t>(m));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return p.data()[a] < p.data()[b]; });
    Matrix adj(p.rows(), p.cols());
    double running = 1.0;
    for (Index r = m; r >= 1; --r) {
        const Index cell = idx[static_cast<std::size_t>(r - 1)];
        running = std::min(running, p.data()[cell] * static_cast<double>(m) / static_cast<double>(r));
        adj.data()[cell] = std::min(running, 1.0);
    }
    return adj;
}

struct MatchGraph {
    std::vector<std::pair<Index, Index>> edges;  ///< (ground-truth i, estimate j)
    double p_threshold = 0.01;
    Index k = 0;
    Index k_hat = 0;
    bool fdr_adjusted = false;

    Index degree_of_truth(Index i) const {
        return static_cast<Index>(std::count_if(edges.begin(), edges.end(), [i](const auto& e) { return e.first == i; }));
    }
};

/// Edge (i, j) whenever the p-value is <= p_threshold. With fdr_q the Benjamini-Hochberg
/// adjusted p-values are compared with fdr_q instead.
inline MatchGraph build_match_graph(const PvalMatrix& pv, double p_threshold = 0.01,
                                    std::optional<double> fdr_q = std::nullopt) {
    if (!(p_threshold > 0 && p_threshold < 1)) throw ValidationError("p_threshold must lie in (0, 1)");
    MatchGraph g;
    g.k = pv.values.rows();
    g.k_hat = pv.values.cols();
    g.p_threshold = p_threshold;
    Matrix p = pv.values;
    double level = p_threshold;
    if (fdr_q) {
        if (!(*fdr_q > 0 && *fdr_q < 1)) throw ValidationError("fdr_q must lie in (0, 1)");
        p = benjamini_hochberg(pv.values);
        level = *fdr_q;
        g.fdr_adjusted = true;
    }
    for (Index i = 0; i < g.k; ++i)
        for (Index j = 0; j < g.k_hat; ++j)
            if (p(i, j) <= level) g.edges.emplace_back(i, j);
    return g;
}

/// Fraction of ground-truth communities with at least one match.
inline double recovery_ratio(const MatchGraph& m, Index k) {
    if (k < 1) throw ValidationError("recovery ratio needs k >= 1");
    std::vector<bool> hit(static_cast<std::size_t>(k), false);
    for (const auto& [i, j] : m.edges)
        if (i >= 0 && i < k) hit[static_cast<std::size_t>(i)] = true;
    return static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(k);
}

/// (1/k) sum over matched pairs of the mean absolute difference between the two rows.
inline double average_error(const MatchGraph& m, const Matrix& Pi_true, const Matrix& Pi_hat) {
    if (Pi_true.cols() != Pi_hat.cols()) throw ValidationError("membership matrices cover different node counts");
    const double n = static_cast<double>(Pi_true.cols());
    const Index k = Pi_true.rows();
    if (k < 1 || n == 0) throw ValidationError("average error needs nonempty memberships");
    double total = 0;
    for (const auto& [i, j] : m.edges) total += (Pi_hat.row(j) - Pi_true.row(i)).cwiseAbs().sum() / n;
    return total / static_cast<double>(k);
}

struct Bridgeness {
    Vector b;  ///< per node, in [0, 1]
    Vector B;  ///< degree-corrected, D_i b_i
};

/// b = 1 - sqrt(k/(k-1) sum_j (pi(j) - 1/k)^2). Nodes whose column is all zero get b = 0.
inline Bridgeness bridgeness(const Matrix& Pi_hat, const Vector& degrees) {
    const Index k = Pi_hat.rows(), n = Pi_hat.cols();
    if (k < 2) throw ValidationError("bridgeness is undefined for a single community");
    if (degrees.size() != n) throw ValidationError("degree vector does not match the membership matrix");
    const double kk = static_cast<double>(k);
    Bridgeness out{Vector(n), Vector(n)};
    for (Index i = 0; i < n; ++i) {
        if (Pi_hat.col(i).sum() <= 0) {
            out.b(i) = 0;
        } else {
            const double dev = (Pi_hat.col(i).array() - 1.0 / kk).square().sum();
            out.b(i) = std::clamp(1.0 - std::sqrt(kk / (kk - 1) * dev), 0.0, 1.0);
        }
        out.B(i) = degrees(i) * out.b(i);
    }
    return out;
}

/// Entropy (nats) of a Bernoulli(p) variable.
inline double binary_entropy(double p) {
    auto h = [](double q) { return q > 0 ? -q * std::log(q) : 0.0; };
    return h(p) + h(1 - p);
}

struct NmiResult {
    double value = 0;
    Index degenerate_rows = 0;  ///< rows with zero entropy, counted with a zero term
};

namespace detail {

/// H(X | Y) for two binary rows.
inline double conditional_entropy(const std::vector<char>& x, const std::vector<char>& y) {
    double c[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t t = 0; t < x.size(); ++t) c[x[t]][y[t]] += 1;
    const double n = static_cast<double>(x.size());
    auto h = [](double q) { return q > 0 ? -q * std::log(q) : 0.0; };
    double joint = 0;
    for (auto& row : c)
        for (double v : row) joint += h(v / n);
    return joint - binary_entropy((c[0][1] + c[1][1]) / n);
}

inline double normalized_conditional(const std::vector<std::vector<char>>& X, const std::vector<std::vector<char>>& Y,
                                     Index& degenerate) {
    double sum = 0;
    for (const auto& x : X) {
        const double n = static_cast<double>(x.size());
        const double hx = binary_entropy(static_cast<double>(std::count(x.begin(), x.end(), 1)) / n);
        if (hx <= 0) {
            ++degenerate;
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (const auto& y : Y) best = std::min(best, conditional_entropy(x, y) / hx);
        sum += std::min(best, 1.0);
    }
    return sum / static_cast<double>(X.size());
}

inline std::vector<std::vector<char>> binarize_rows(const Matrix& M, double threshold) {
    std::vector<std::vector<char>> rows(static_cast<std::size_t>(M.rows()), std::vector<char>(M.cols()));
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) rows[i][j] = M(i, j) > threshold ? 1 : 0;
    return rows;
}

}  // namespace detail

/// Overlapping NMI: 1 - (H(Pi|Pi_hat)_norm + H(Pi_hat|Pi)_norm) / 2 with entries above
/// `threshold` read as 1 (the default reads every positive entry as 1).
/// Each normalized term averages, over the rows of the conditioned side, the smallest
/// H(row | other row) / H(row).
inline NmiResult nmi_overlap(const Matrix& Pi_true, const Matrix& Pi_hat, double threshold = 0) {
    if (Pi_true.cols() != Pi_hat.cols()) throw ValidationError("membership matrices cover different node counts");
    if (Pi_true.rows() == 0 || Pi_hat.rows() == 0 || Pi_true.cols() == 0)
        throw ValidationError("NMI needs nonempty memberships");
    if (threshold < 0 || threshold >= 1) throw ValidationError("NMI threshold must lie in [0, 1)");
    const auto X = detail::binarize_rows(Pi_true, threshold), Y = detail::binarize_rows(Pi_hat, threshold);
    NmiResult r;
    const double a = detail::normalized_conditional(X, Y, r.degenerate_rows);
    const double b = detail::normalized_conditional(Y, X, r.degenerate_rows);
    r.value = std::clamp(1 - 0.5 * (a + b), 0.0, 1.0);
    return r;
}

struct ValidationReport {
    PvalMatrix pvals;
    MatchGraph match;
    double recovery_ratio = 0;
    double avg_error = 0;
    Bridgeness bridge;
    NmiResult nmi;
};

inline ValidationReport validate(const Matrix& Pi_true, const Matrix& Pi_hat, const Vector& degrees,
                                 double p_threshold = 0.01, std::optional<double> fdr_q = std::nullopt,
                                 int workers = 1, double nmi_threshold = 0) {
    ValidationReport r;
    r.pvals = pvalue_matrix(Pi_true, Pi_hat, workers);
    r.match = build_match_graph(r.pvals, p_threshold, fdr_q);
    r.recovery_ratio = recovery_ratio(r.match, Pi_true.rows());
    r.avg_error = average_error(r.match, Pi_true, Pi_hat);
    if (Pi_hat.rows() >= 2) r.bridge = bridgeness(Pi_hat, degrees);
    r.nmi = nmi_overlap(Pi_true, Pi_hat, nmi_threshold);
    return r;
}

}  // namespace tensorcd
