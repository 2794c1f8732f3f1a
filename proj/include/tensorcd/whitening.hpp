#pragma once

#include "audit.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "sparse_svd.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>

namespace tensorcd {

enum class WhiteningMethod { tall_thin_svd, tall_thin_qr, exact_small };

inline const char* to_string(WhiteningMethod m) {
    switch (m) {
        case WhiteningMethod::tall_thin_svd: return "tall-thin-svd";
        case WhiteningMethod::tall_thin_qr: return "tall-thin-qr";
        case WhiteningMethod::exact_small: return "exact-small";
    }
    return "?";
}

struct WhiteningOptions {
    WhiteningMethod method = WhiteningMethod::tall_thin_svd;
    std::uint64_t seed = 0;
    int power_iterations = 1;
    double rank_tol = 1e-8;
    Index exact_limit = 2000;  ///< largest dimension accepted by the dense path
};

struct WhiteningContext {
    Matrix W;                ///< n x k
    Vector singular_values;  ///< top-k eigenvalues of M2, decreasing
    WhiteningMethod method = WhiteningMethod::tall_thin_svd;
    std::uint64_t projection_seed = 0;
    Index projection_width = 0;
};

namespace detail {

/// W = basis E_k diag(lambda_k)^-1/2 from the eigenpairs of core = basis' M2 basis.
inline WhiteningContext whiten_from_core(const Matrix& basis, const Matrix& core, Index k, double rank_tol) {
    SortedEigen eig = sorted_symmetric_eigen(core);
    const double top = eig.values.size() ? eig.values(0) : 0.0;
    Index rank = 0;
    for (Index i = 0; i < eig.values.size(); ++i)
        if (eig.values(i) > rank_tol * top && eig.values(i) > 0) ++rank;
    if (top <= 0 || rank < k)
        throw DegenerateMomentError(
            "M2 has numerical rank " + std::to_string(rank) + " < k = " + std::to_string(k), static_cast<long>(rank));
    WhiteningContext ctx;
    ctx.singular_values = eig.values.head(k);
    ctx.W = basis * (eig.vectors.leftCols(k) * ctx.singular_values.cwiseSqrt().cwiseInverse().asDiagonal());
    canonical_column_signs(ctx.W);
    return ctx;
}

}  // namespace detail

/// Rank-k whitening matrix of the second moment. The randomized paths sketch M2 with a
/// unit-norm Gaussian S of width 2k, form O = M2 S, take an orthonormal basis of O (from its
/// thin SVD or thin QR), and whiten the projected core basis' M2 basis.
inline WhiteningContext randomized_whiten(const FactoredSymmetric& M2, Index k, const WhiteningOptions& opt = {}) {
    const Index n = M2.rows();
    if (k < 1 || k > n) throw ValidationError("whitening needs 1 <= k <= dimension");
    if (opt.method == WhiteningMethod::exact_small) {
        if (n > opt.exact_limit) throw ValidationError("exact whitening is limited to small dimensions");
        Matrix dense = M2.expand();
        WhiteningContext ctx = detail::whiten_from_core(Matrix::Identity(n, n), dense, k, opt.rank_tol);
        ctx.method = opt.method;
        ctx.projection_seed = opt.seed;
        ctx.projection_width = n;
        return ctx;
    }
    const Index width = std::min<Index>(2 * k, n);
    Rng rng(opt.seed);
    Matrix S = unit_gaussian_columns(n, width, rng);
    for (int q = 0; q < opt.power_iterations; ++q) S = orthonormal_basis(M2.apply(S));
    Matrix O = M2.apply(S);
    audit::note(O, "whitening sketch");
    Matrix basis;
    if (opt.method == WhiteningMethod::tall_thin_svd) {
        Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd(O, Eigen::ComputeThinU);
        const Vector& sv = svd.singularValues();
        Index keep = 0;
        while (keep < sv.size() && sv(keep) > opt.rank_tol * sv(0) && sv(keep) > 0) ++keep;
        basis = svd.matrixU().leftCols(keep);
    } else {
        basis = orthonormal_basis(O);
    }
    if (basis.cols() < k)
        throw DegenerateMomentError("M2 sketch has rank " + std::to_string(basis.cols()) + " < k",
                                    static_cast<long>(basis.cols()));
    Matrix core = basis.transpose() * M2.apply(basis);
    WhiteningContext ctx = detail::whiten_from_core(basis, core, k, opt.rank_tol);
    ctx.method = opt.method;
    ctx.projection_seed = opt.seed;
    ctx.projection_width = width;
    audit::note(ctx.W, "whitening matrix");
    return ctx;
}

inline WhiteningContext randomized_whiten(const MomentSummary& m, Index k, const WhiteningOptions& opt = {}) {
    return randomized_whiten(m.M2, k, opt);
}

/// |W' M2 W - I|_F computed through operator products only.
inline double whitening_residual(const FactoredSymmetric& M2, const Matrix& W) {
    Matrix R = W.transpose() * M2.apply(W);
    R -= Matrix::Identity(W.cols(), W.cols());
    return R.norm();
}

/// Data needed to apply the word-repeat correction on the topic path.
struct TopicSamples {
    std::shared_ptr<const Corpus> corpus;
    Matrix W;                  ///< d x k whitening matrix
    DocumentScales scales;
    bool word_repeat_correction = true;
};

/// Whitened per-sample views, one column per sample.
struct WhitenedViews {
    Matrix yA, yB, yC;  ///< k x n_samples
    Vector muA, muB, muC;
    std::shared_ptr<const TopicSamples> topic;  ///< set on the topic path only

    Index k() const { return yA.rows(); }
    Index n_samples() const { return yA.cols(); }
};

/// Community path: y_A = W' G_{x,A}', y_B = W' Z_B G_{x,B}', y_C = W' Z_C G_{x,C}'.
inline WhitenedViews whiten_views(const WhiteningContext& ctx, const SymmetrizationPair& z, const SampleStream& stream,
                                  int workers = 0) {
    if (stream.is_topic()) throw ValidationError("community views need a graph sample stream");
    const PartitionBlocks& b = *stream.blocks();
    const Matrix& W = ctx.W;
    if (W.rows() != b.XA.cols() || z.ZB.rows() != W.rows() || z.ZC.rows() != W.rows() ||
        z.ZB.cols() != b.XB.cols() || z.ZC.cols() != b.XC.cols())
        throw ValidationError("whitening matrix and symmetrizers do not match the partition");
    const Matrix TB = W.transpose() * z.ZB.left * z.ZB.core;  // k x r
    const Matrix TC = W.transpose() * z.ZC.left * z.ZC.core;
    const Index k = W.cols(), n = b.n_X;
    WhitenedViews v;
    v.yA.resize(k, n);
    v.yB.resize(k, n);
    v.yC.resize(k, n);
    parallel_for(n, workers, [&](long lo, long hi) {
        const Index len = hi - lo;
        v.yA.middleCols(lo, len) = (b.XA.middleRows(lo, len) * W).transpose();
        v.yB.middleCols(lo, len) = TB * (b.XB.middleRows(lo, len) * z.ZB.right).transpose();
        v.yC.middleCols(lo, len) = TC * (b.XC.middleRows(lo, len) * z.ZC.right).transpose();
    });
    v.muA = v.yA.rowwise().mean();
    v.muB = v.yB.rowwise().mean();
    v.muC = v.yC.rowwise().mean();
    audit::note(v.yA, "whitened views");
    return v;
}

/// Topic path: all three views are W' c_t. The means use the first-order document scaling.
inline WhitenedViews whiten_views(const WhiteningContext& ctx, const SampleStream& stream,
                                  TopicScaling scaling = TopicScaling::per_document, bool word_repeat_correction = true) {
    if (!stream.is_topic()) throw ValidationError("topic views need a corpus sample stream");
    const Corpus& c = *stream.corpus();
    if (ctx.W.rows() != c.vocab_size) throw ValidationError("whitening matrix does not match the vocabulary");
    auto topic = std::make_shared<TopicSamples>();
    topic->corpus = stream.corpus();
    topic->W = ctx.W;
    topic->scales = document_scales(c, scaling);
    topic->word_repeat_correction = word_repeat_correction;
    WhitenedViews v;
    v.yA = (c.freq * ctx.W).transpose();
    v.yB = v.yA;
    v.yC = v.yA;
    v.muA = v.yA * topic->scales.first / static_cast<double>(c.n_docs());
    v.muB = v.muA;
    v.muC = v.muA;
    v.topic = std::move(topic);
    return v;
}

}  // namespace tensorcd
