#pragma once

#include "errors.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "whitening.hpp"

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace tensorcd {

/// Sign of the alpha0/(alpha0+2) cross terms in the shifted update. `centered` subtracts them,
/// which is what the centered third moment requires; `additive` adds them.
enum class ShiftSign { centered, additive };

/// Community-path shifted update. `gradient` is the exact gradient of the centered sample
/// reward (three cyclic terms per factor, consistent with the loss). `printed` keeps only the
/// y_C-direction terms, each multiplied by 3. The topic path has identical views, where both
/// coincide.
enum class ShiftForm { gradient, printed };

struct StgdConfig {
    double theta = 1.0;
    double learn_rate_0 = 0;  ///< 0 selects 0.01 / sqrt(k)
    double decay_tau = 0;     ///< 0 selects 10 * n_X
    Index max_epochs = 200;
    Index batch = 1;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    std::optional<bool> shifted;  ///< unset: on exactly when alpha0 > 0
    double alpha0 = 0;
    ShiftSign shift_sign = ShiftSign::centered;
    ShiftForm shift_form = ShiftForm::gradient;
    int workers = 1;
    std::string trace_path;  ///< per-epoch `epoch,loss,max_change` CSV when nonempty
    /// At the end of each epoch in the first half of the run, a column whose norm falls below
    /// reseed_fraction of the median column norm, or that nearly duplicates a longer column
    /// (|cosine| above reseed_cosine), is redrawn orthogonal to the others. 0 disables.
    double reseed_fraction = 0.25;
    double reseed_cosine = 0.8;
    /// Each update is scaled down so its Frobenius norm stays within this fraction of |Phi|_F. 0 disables.
    double max_step = 0.1;
};

struct EpochTrace {
    Index epoch;
    double loss;
    double max_change;
};

struct EigenEstimate {
    Matrix Phi;     ///< k x k, column i is phi_i
    Vector Lambda;  ///< |phi_i|^3
    Index iterations_run = 0;  ///< epochs completed
    Index updates = 0;
    double final_loss = 0;
    bool converged = false;
    std::vector<Index> degenerate_columns;
    Index reseeded = 0;  ///< collapsed columns redrawn during the run
    std::vector<EpochTrace> trace;
};

/// The update below moves each column by 3 theta sum_j <phi_j,phi_i>^2 phi_j, which is the exact
/// gradient of theta' sum_ij <v_i,v_j>^3 with theta' = theta / 2. Losses reported alongside the
/// updates therefore use this weight.
inline constexpr double loss_weight_for_update(double theta) { return theta / 2.0; }

inline double learning_rate(const StgdConfig& cfg, Index k, Index n_samples, Index t) {
    const double lr0 = cfg.learn_rate_0 > 0 ? cfg.learn_rate_0 : 0.01 / std::sqrt(static_cast<double>(k));
    const double tau = cfg.decay_tau > 0 ? cfg.decay_tau : 10.0 * static_cast<double>(n_samples);
    return lr0 / (1.0 + static_cast<double>(t) / tau);
}

inline bool use_shift(const StgdConfig& cfg) { return cfg.shifted.value_or(cfg.alpha0 > 0); }

/// Coefficients of the centering terms.
struct ShiftCoefficients {
    double triple = 0;  ///< 2 alpha0^2 / ((alpha0+1)(alpha0+2))
    double cross = 0;   ///< signed alpha0 / (alpha0+2)
};

inline ShiftCoefficients shift_coefficients(double alpha0, ShiftSign sign) {
    ShiftCoefficients c;
    c.triple = 2 * alpha0 * alpha0 / ((alpha0 + 1) * (alpha0 + 2));
    c.cross = (sign == ShiftSign::centered ? -1.0 : 1.0) * alpha0 / (alpha0 + 2);
    return c;
}

/// One whitened sample with explicit vectors.
struct WhitenedTriple {
    Vector yA, yB, yC;
};

/// Orthogonality part of the step, Phi ((Phi'Phi) o (Phi'Phi)).
inline Matrix orthogonality_term(const Matrix& Phi) {
    Matrix G = Phi.transpose() * Phi;
    return Phi * G.cwiseAbs2();
}

/// theta sum_ij <v_i,v_j>^3 - sum_i <v_i,y_A><v_i,y_B><v_i,y_C>.
inline double loss_at_sample(const Matrix& V, const WhitenedTriple& s, double theta) {
    Matrix G = V.transpose() * V;
    Vector a = V.transpose() * s.yA, b = V.transpose() * s.yB, c = V.transpose() * s.yC;
    return theta * G.array().cube().sum() - (a.array() * b.array() * c.array()).sum();
}

/// Unshifted single-sample update:
/// phi_i - 3 theta beta sum_j <phi_j,phi_i>^2 phi_j + beta (three cyclic data terms).
inline Matrix stgd_step(const Matrix& Phi, const WhitenedTriple& s, double theta, double beta) {
    Vector a = Phi.transpose() * s.yA, b = Phi.transpose() * s.yB, c = Phi.transpose() * s.yC;
    Matrix D = s.yC * (a.array() * b.array()).matrix().transpose() + s.yA * (b.array() * c.array()).matrix().transpose() +
               s.yB * (a.array() * c.array()).matrix().transpose();
    Matrix out = Phi - 3 * theta * beta * orthogonality_term(Phi) + beta * D;
    if (!out.allFinite()) throw DivergenceError("non-finite update; reduce learn_rate_0");
    return out;
}

inline Matrix stgd_step(const Matrix& Phi, const WhitenedTriple& s, const StgdConfig& cfg, Index t, Index n_samples) {
    return stgd_step(Phi, s, cfg.theta, learning_rate(cfg, Phi.cols(), n_samples, t));
}

namespace detail {

/// Per-sample quantities of a document needed by the corrected topic terms.
struct DocumentTerms {
    Vector P;  ///< <phi_i, y>
    Vector q;  ///< sum_w c_w <phi_i, w_w>^2
    Matrix Dphi;  ///< column i: sum_w c_w <w_w, phi_i> w_w
    Matrix R;     ///< column i: sum_w c_w <w_w, phi_i>^2 w_w
};

inline DocumentTerms document_terms(const Matrix& Phi, const Eigen::Ref<const Vector>& y, const TopicSamples& ts,
                                    Index t) {
    DocumentTerms d;
    d.P = Phi.transpose() * y;
    const Index k = Phi.cols();
    d.q = Vector::Zero(k);
    d.Dphi = Matrix::Zero(Phi.rows(), k);
    d.R = Matrix::Zero(Phi.rows(), k);
    if (!ts.word_repeat_correction) return d;
    auto row = row_view(ts.corpus->freq, t);
    for (Index e = 0; e < row.nnz; ++e) {
        const double cw = row.values[e];
        const auto w = ts.W.row(row.indices[e]).transpose();
        Vector h = Phi.transpose() * w;
        d.q += cw * h.cwiseAbs2();
        d.Dphi.noalias() += w * (cw * h).transpose();
        d.R.noalias() += w * (cw * h.cwiseAbs2()).transpose();
    }
    return d;
}

}  // namespace detail

/// Adds the data part of the update for sample t (the term multiplied by beta) to `out`.
/// Community: gradient of the sample reward in data_reward, three cyclic terms per factor.
/// Topic: 3 T_t(phi, phi, .) with T_t the repeat-corrected per-document triple, plus centering.
inline void accumulate_data_term(const WhitenedViews& v, Index t, const Matrix& Phi, const StgdConfig& cfg, Matrix& out) {
    const bool shifted = use_shift(cfg);
    const ShiftCoefficients sc = shift_coefficients(cfg.alpha0, cfg.shift_sign);
    if (v.topic) {
        const TopicSamples& ts = *v.topic;
        const auto y = v.yA.col(t);
        const double s2 = ts.scales.second(t), s3 = ts.scales.third(t);
        detail::DocumentTerms d = detail::document_terms(Phi, y, ts, t);
        const Vector& P = d.P;
        // T(phi, phi, .) for the corrected triple estimate.
        Matrix T = y * (P.cwiseAbs2() - d.q).transpose() - 2 * d.Dphi * P.asDiagonal() + 2 * d.R;
        T *= s3;
        if (shifted) {
            const Vector m = Phi.transpose() * v.muA;
            const Vector pair_quad = s2 * (P.cwiseAbs2() - d.q);           // Pr(phi, phi)
            const Matrix pair_lin = s2 * (y * P.transpose() - d.Dphi);      // Pr phi
            T += sc.triple * v.muA * m.cwiseAbs2().transpose();
            T += sc.cross * (v.muA * pair_quad.transpose() + 2 * pair_lin * m.asDiagonal());
        }
        out += 3 * T;
        return;
    }
    const auto yA = v.yA.col(t), yB = v.yB.col(t), yC = v.yC.col(t);
    const Vector a = Phi.transpose() * yA, b = Phi.transpose() * yB, c = Phi.transpose() * yC;
    if (!shifted) {
        out.noalias() += yC * (a.cwiseProduct(b)).transpose();
        out.noalias() += yA * (b.cwiseProduct(c)).transpose();
        out.noalias() += yB * (a.cwiseProduct(c)).transpose();
        return;
    }
    const Vector mA = Phi.transpose() * v.muA, mB = Phi.transpose() * v.muB, mC = Phi.transpose() * v.muC;
    const Vector bc = b.cwiseProduct(c), ac = a.cwiseProduct(c), ab = a.cwiseProduct(b);
    if (cfg.shift_form == ShiftForm::printed) {
        // 3 [ab y_C + triple mA mB mu_C + cross (ab mu_C + a mB y_C + mA b y_C)]
        const Vector toC = ab + sc.cross * (a.cwiseProduct(mB) + mA.cwiseProduct(b));
        const Vector toMuC = sc.triple * mA.cwiseProduct(mB) + sc.cross * ab;
        out.noalias() += 3 * (yC * toC.transpose() + v.muC * toMuC.transpose());
        return;
    }
    // Gradient of abc + triple mA mB mC + cross (ab mC + a mB c + mA b c), m = Phi' mu.
    const Vector qA = bc + sc.cross * (b.cwiseProduct(mC) + mB.cwiseProduct(c));
    const Vector qB = ac + sc.cross * (a.cwiseProduct(mC) + mA.cwiseProduct(c));
    const Vector qC = ab + sc.cross * (a.cwiseProduct(mB) + mA.cwiseProduct(b));
    out.noalias() += yA * qA.transpose() + yB * qB.transpose() + yC * qC.transpose();
    const Vector rA = sc.triple * mB.cwiseProduct(mC) + sc.cross * bc;
    const Vector rB = sc.triple * mA.cwiseProduct(mC) + sc.cross * ac;
    const Vector rC = sc.triple * mA.cwiseProduct(mB) + sc.cross * ab;
    out.noalias() += v.muA * rA.transpose() + v.muB * rB.transpose() + v.muC * rC.transpose();
}

/// Sum over columns of the sample tensor evaluated at (phi_i, phi_i, phi_i).
inline double data_reward(const WhitenedViews& v, Index t, const Matrix& Phi, const StgdConfig& cfg) {
    const bool shifted = use_shift(cfg);
    const ShiftCoefficients sc = shift_coefficients(cfg.alpha0, cfg.shift_sign);
    if (v.topic) {
        const TopicSamples& ts = *v.topic;
        const auto y = v.yA.col(t);
        detail::DocumentTerms d = detail::document_terms(Phi, y, ts, t);
        const Vector& P = d.P;
        Vector cube = P.array().cube().matrix() - 3 * P.cwiseProduct(d.q);
        if (ts.word_repeat_correction) {
            // 2 sum_w c_w <phi, w>^3 = 2 phi' R(:, i)
            for (Index i = 0; i < Phi.cols(); ++i) cube(i) += 2 * Phi.col(i).dot(d.R.col(i));
        }
        double r = ts.scales.third(t) * cube.sum();
        if (shifted) {
            const Vector m = Phi.transpose() * v.muA;
            const Vector pair_quad = ts.scales.second(t) * (P.cwiseAbs2() - d.q);
            r += sc.triple * m.array().cube().sum() + sc.cross * 3 * pair_quad.cwiseProduct(m).sum();
        }
        return r;
    }
    const Vector a = Phi.transpose() * v.yA.col(t), b = Phi.transpose() * v.yB.col(t),
                 c = Phi.transpose() * v.yC.col(t);
    double r = (a.array() * b.array() * c.array()).sum();
    if (shifted) {
        const Vector mA = Phi.transpose() * v.muA, mB = Phi.transpose() * v.muB, mC = Phi.transpose() * v.muC;
        r += sc.triple * (mA.array() * mB.array() * mC.array()).sum();
        r += sc.cross * ((a.array() * b.array() * mC.array()).sum() + (a.array() * mB.array() * c.array()).sum() +
                         (mA.array() * b.array() * c.array()).sum());
    }
    return r;
}

/// Average of the per-sample loss with orthogonality weight theta.
inline double average_loss(const WhitenedViews& v, const Matrix& Phi, const StgdConfig& cfg, double theta) {
    const double ortho = theta * (Phi.transpose() * Phi).array().cube().sum();
    double reward = 0;
    for (Index t = 0; t < v.n_samples(); ++t) reward += data_reward(v, t, Phi, cfg);
    return ortho - reward / static_cast<double>(std::max<Index>(v.n_samples(), 1));
}

/// Update on the samples order[lo, hi): data terms averaged over the batch.
inline Matrix stgd_batch_step(const Matrix& Phi, const WhitenedViews& v, const std::vector<Index>& order, Index lo,
                              Index hi, const StgdConfig& cfg, double beta) {
    const Index k = Phi.cols();
    Matrix D = Matrix::Zero(k, k);
    const Index len = hi - lo;
    if (cfg.workers > 1 && len > 1) {
        const int chunks = static_cast<int>(std::min<Index>(cfg.workers, len));
        std::vector<Matrix> partial(static_cast<std::size_t>(chunks), Matrix::Zero(k, k));
        parallel_for(chunks, chunks, [&](long c0, long c1) {
            for (long c = c0; c < c1; ++c)
                for (Index s = lo + c * len / chunks; s < lo + (c + 1) * len / chunks; ++s)
                    accumulate_data_term(v, order[static_cast<std::size_t>(s)], Phi, cfg, partial[c]);
        });
        for (const auto& p : partial) D += p;
    } else {
        for (Index s = lo; s < hi; ++s) accumulate_data_term(v, order[static_cast<std::size_t>(s)], Phi, cfg, D);
    }
    Matrix step = (beta / static_cast<double>(len)) * D - 3 * cfg.theta * beta * orthogonality_term(Phi);
    if (!step.allFinite()) throw DivergenceError("non-finite update; reduce learn_rate_0");
    if (cfg.max_step > 0) {
        const double cap = cfg.max_step * std::max(Phi.norm(), 1e-3), size = step.norm();
        if (size > cap) step *= cap / size;
    }
    return Phi + step;
}

/// Gaussian columns scaled to norm 1/sqrt(k), then orthonormalized (so the start has unit columns).
inline Matrix initial_components(Index k, std::uint64_t seed) {
    Rng rng(seed);
    Matrix G = unit_gaussian_columns(k, k, rng) / std::sqrt(static_cast<double>(k));
    return orthonormal_basis(G);
}

/// Redraws degenerate columns in the orthogonal complement of the healthy ones, at the median
/// norm. A column is degenerate when its norm is below `fraction` of the median, or when it is
/// the shorter of a pair whose |cosine| exceeds `cosine`.
inline Index reseed_degenerate(Matrix& Phi, double fraction, double cosine, Rng& rng) {
    const Index k = Phi.cols();
    if (fraction <= 0 || k < 2) return 0;
    Vector norms = Phi.colwise().norm().transpose();
    std::vector<double> sorted(norms.data(), norms.data() + k);
    std::nth_element(sorted.begin(), sorted.begin() + k / 2, sorted.end());
    const double median = sorted[static_cast<std::size_t>(k / 2)];
    if (!(median > 0)) return 0;
    std::vector<bool> bad(static_cast<std::size_t>(k), false);
    for (Index i = 0; i < k; ++i) bad[i] = norms(i) < fraction * median;
    if (cosine > 0 && cosine < 1)
        for (Index i = 0; i < k; ++i)
            for (Index j = i + 1; j < k; ++j) {
                if (bad[i] || bad[j]) continue;
                if (std::abs(Phi.col(i).dot(Phi.col(j))) > cosine * norms(i) * norms(j))
                    bad[norms(i) < norms(j) ? i : j] = true;
            }
    std::vector<Index> healthy, redraw;
    for (Index i = 0; i < k; ++i) (bad[i] ? redraw : healthy).push_back(i);
    if (redraw.empty()) return 0;
    Matrix Q(k, 0);
    if (!healthy.empty()) {
        Matrix keep(k, static_cast<Index>(healthy.size()));
        for (std::size_t j = 0; j < healthy.size(); ++j)
            keep.col(static_cast<Index>(j)) = Phi.col(healthy[j]) / norms(healthy[j]);
        Q = orthonormal_basis(keep);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i : redraw) {
        Vector g(k);
        for (Index r = 0; r < k; ++r) g(r) = normal(rng);
        for (int pass = 0; pass < 2; ++pass) g -= Q * (Q.transpose() * g);
        g.normalize();
        Phi.col(i) = median * g;
        Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
        Q.col(Q.cols() - 1) = g;
    }
    return static_cast<Index>(redraw.size());
}

inline Vector eigenvalues_from_norms(const Matrix& Phi) { return Phi.colwise().norm().array().cube().matrix().transpose(); }

inline EigenEstimate run_stgd(const WhitenedViews& v, const StgdConfig& cfg) {
    if (cfg.theta <= 0) throw ValidationError("theta must be positive");
    if (cfg.batch < 1) throw ValidationError("batch must be at least 1");
    if (cfg.learn_rate_0 < 0) throw ValidationError("learn_rate_0 must be positive");
    const Index k = v.k(), n = v.n_samples();
    if (n == 0) throw ValidationError("no whitened samples");
    EigenEstimate est;
    est.Phi = initial_components(k, cfg.seed);
    Rng rng(cfg.seed ^ 0x5bd1e995ULL);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const double loss_theta = loss_weight_for_update(cfg.theta);
    std::ofstream trace;
    if (!cfg.trace_path.empty()) {
        trace.open(cfg.trace_path);
        if (!trace) throw FileError("cannot write trace '" + cfg.trace_path + "'");
        trace << "epoch,loss,max_change\n";
    }
    Index t = 0;
    for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const Matrix start = est.Phi;
        std::shuffle(order.begin(), order.end(), rng);
        for (Index lo = 0; lo < n; lo += cfg.batch) {
            const Index hi = std::min(n, lo + cfg.batch);
            est.Phi = stgd_batch_step(est.Phi, v, order, lo, hi, cfg, learning_rate(cfg, k, n, t));
            ++t;
        }
        if (2 * (epoch + 1) <= cfg.max_epochs)
            est.reseeded += reseed_degenerate(est.Phi, cfg.reseed_fraction, cfg.reseed_cosine, rng);
        const double change = (est.Phi - start).cwiseAbs().maxCoeff();
        est.iterations_run = epoch + 1;
        if (trace.is_open()) {
            double loss = average_loss(v, est.Phi, cfg, loss_theta);
            est.trace.push_back({epoch + 1, loss, change});
            trace << epoch + 1 << ',' << std::setprecision(12) << loss << ',' << change << '\n';
        }
        if (change < cfg.tol) {
            est.converged = true;
            break;
        }
    }
    est.updates = t;
    est.Lambda = eigenvalues_from_norms(est.Phi);
    for (Index i = 0; i < k; ++i)
        if (est.Phi.col(i).norm() < 1e-12) est.degenerate_columns.push_back(i);
    est.final_loss = average_loss(v, est.Phi, cfg, loss_theta);
    return est;
}

}  // namespace tensorcd
