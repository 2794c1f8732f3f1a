#pragma once

#include "audit.hpp"
#include "errors.hpp"
#include "graph_io.hpp"
#include "linalg.hpp"
#include "operator.hpp"
#include "sparse_svd.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

namespace tensorcd {

/// Rows x in X of the adjacency, restricted to the columns of A, B and C.
struct PartitionBlocks {
    SparseRows XA, XB, XC;
    Index n_X = 0;

    const SparseRows& block(NodeSet s) const {
        switch (s) {
            case NodeSet::A: return XA;
            case NodeSet::B: return XB;
            case NodeSet::C: return XC;
            default: throw ValidationError("no moment block for set X");
        }
    }

    static std::shared_ptr<const PartitionBlocks> extract(const SparseGraph& g, const NodePartition& p) {
        if (p.X.empty()) throw ValidationError("partition set X is empty");
        auto b = std::make_shared<PartitionBlocks>();
        b->XA = extract_block(g.adjacency, p.X, p.A);
        b->XB = extract_block(g.adjacency, p.X, p.B);
        b->XC = extract_block(g.adjacency, p.X, p.C);
        b->n_X = static_cast<Index>(p.X.size());
        return b;
    }
};

/// Pairs(Y1, Y2) = G_{X,Y1}' G_{X,Y2} / n_X kept as a product of the two sparse blocks.
class PairsMatrix {
public:
    PairsMatrix(std::shared_ptr<const PartitionBlocks> blocks, NodeSet y1, NodeSet y2)
        : blocks_(std::move(blocks)), y1_(y1), y2_(y2) {
        if (blocks_->n_X == 0) throw ValidationError("partition set X is empty");
    }

    Index rows() const { return left().cols(); }
    Index cols() const { return right().cols(); }

    Matrix apply(const Matrix& X) const {
        Matrix inner = right() * X;
        return (left().transpose() * inner) / static_cast<double>(blocks_->n_X);
    }
    Matrix apply_transpose(const Matrix& Y) const {
        Matrix inner = left() * Y;
        return (right().transpose() * inner) / static_cast<double>(blocks_->n_X);
    }
    /// Dense form, for small-scale checks.
    Matrix expand() const {
        Matrix L = Matrix(left());
        Matrix R = Matrix(right());
        return L.transpose() * R / static_cast<double>(blocks_->n_X);
    }
    LinearOperator as_operator() const {
        LinearOperator op;
        op.rows = rows();
        op.cols = cols();
        auto self = *this;
        op.apply = [self](const Matrix& X) { return self.apply(X); };
        op.apply_transpose = [self](const Matrix& Y) { return self.apply_transpose(Y); };
        return op;
    }

private:
    const SparseRows& left() const { return blocks_->block(y1_); }
    const SparseRows& right() const { return blocks_->block(y2_); }

    std::shared_ptr<const PartitionBlocks> blocks_;
    NodeSet y1_, y2_;
};

inline PairsMatrix compute_pairs(std::shared_ptr<const PartitionBlocks> blocks, NodeSet y1, NodeSet y2) {
    return PairsMatrix(std::move(blocks), y1, y2);
}

inline PairsMatrix compute_pairs(const SparseGraph& g, const NodePartition& p, NodeSet y1, NodeSet y2) {
    return PairsMatrix(PartitionBlocks::extract(g, p), y1, y2);
}

/// left * core * right'. Neither outer factor is wider than a few k.
struct LowRankProduct {
    Matrix left;
    Matrix core;
    Matrix right;

    Index rows() const { return left.rows(); }
    Index cols() const { return right.rows(); }
    Matrix apply(const Matrix& X) const { return left * (core * (right.transpose() * X)); }
    Matrix apply_transpose(const Matrix& Y) const { return right * (core.transpose() * (left.transpose() * Y)); }
    Matrix expand() const { return left * core * right.transpose(); }
};

struct SymmetrizationPair {
    LowRankProduct ZB;  ///< Pairs(A,C) Pairs(B,C)^+  (n_A x n_B)
    LowRankProduct ZC;  ///< Pairs(A,B) Pairs(C,B)^+  (n_A x n_C)
    Vector pairs_singular_values;  ///< retained spectrum of Pairs(B,C)
};

enum class PseudoinverseMethod { randomized, lanczos };

struct SymmetrizerOptions {
    PseudoinverseMethod method = PseudoinverseMethod::randomized;
    std::uint64_t seed = 0;
    int power_iterations = 1;
    double rank_tol = 1e-8;
};

/// Rank-k SVD of an implicit operator from a random range sketch of width 2k.
inline TruncatedSvd randomized_svd(const LinearOperator& A, Index k, std::uint64_t seed, int power_iterations) {
    const Index width = std::min({2 * k, A.rows, A.cols});
    Rng rng(seed);
    Matrix Y = A.apply(unit_gaussian_columns(A.cols, width, rng));
    for (int q = 0; q < power_iterations; ++q) {
        Matrix Z = A.apply_transpose(orthonormal_basis(Y));
        Y = A.apply(orthonormal_basis(Z));
    }
    Matrix Q = orthonormal_basis(Y);
    Matrix Bt = A.apply_transpose(Q);  // (Q' A)'
    audit::note(Q, "range basis");
    audit::note(Bt, "projected operator");
    Eigen::JacobiSVD<Matrix> svd(Bt, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index r = std::min(k, svd.singularValues().size());
    TruncatedSvd out;
    out.S = svd.singularValues().head(r);
    out.U = Q * svd.matrixV().leftCols(r);
    out.V = svd.matrixU().leftCols(r);
    return out;
}

/// Z_B = Pairs(A,C) V S^-1 U' and Z_C = Pairs(A,B) U S^-1 V' from one rank-k SVD
/// Pairs(B,C) ~ U S V'.
inline SymmetrizationPair compute_symmetrizers(std::shared_ptr<const PartitionBlocks> blocks, Index k,
                                               const SymmetrizerOptions& opt = {}) {
    PairsMatrix bc(blocks, NodeSet::B, NodeSet::C);
    if (bc.rows() < k || bc.cols() < k) throw ValidationError("sets B and C need at least k nodes");
    const LinearOperator op = bc.as_operator();
    TruncatedSvd svd;
    if (opt.method == PseudoinverseMethod::lanczos) {
        SparseSvdOptions so;
        so.seed = opt.seed;
        svd = sparse_svd(op, k, so);
    } else {
        svd = randomized_svd(op, k, opt.seed, opt.power_iterations);
    }
    const double s1 = svd.S.size() ? svd.S(0) : 0.0;
    Index rank = 0;
    for (Index i = 0; i < svd.S.size(); ++i)
        if (svd.S(i) > opt.rank_tol * s1 && svd.S(i) > 0) ++rank;
    if (s1 <= 0 || rank < k)
        throw DegenerateMomentError("Pairs(B,C) has numerical rank " + std::to_string(rank) + " < k = " +
                                        std::to_string(k),
                                    static_cast<long>(rank));
    const Matrix inv = svd.S.cwiseInverse().asDiagonal();
    SymmetrizationPair z;
    z.pairs_singular_values = svd.S;
    z.ZB.left = compute_pairs(blocks, NodeSet::A, NodeSet::C).apply(svd.V);
    z.ZB.core = inv;
    z.ZB.right = svd.U;
    z.ZC.left = compute_pairs(blocks, NodeSet::A, NodeSet::B).apply(svd.U);
    z.ZC.core = inv;
    z.ZC.right = svd.V;
    audit::note(z.ZB.left, "Z_B left factor");
    audit::note(z.ZC.left, "Z_C left factor");
    return z;
}

inline SymmetrizationPair compute_symmetrizers(const SparseGraph& g, const NodePartition& p, Index k,
                                               const SymmetrizerOptions& opt = {}) {
    return compute_symmetrizers(PartitionBlocks::extract(g, p), k, opt);
}

/// Symmetric operator S + L C L' + diag(d); any of the three parts may be absent.
class FactoredSymmetric {
public:
    FactoredSymmetric() = default;
    explicit FactoredSymmetric(Index n) : n_(n) {}

    Index rows() const { return n_; }

    void set_sparse(SparseCols S) { sparse_ = std::move(S); }
    void set_low_rank(Matrix left, Matrix core) {
        left_ = std::move(left);
        core_ = std::move(core);
    }
    void set_diagonal(Vector d) { diag_ = std::move(d); }

    const std::optional<SparseCols>& sparse() const { return sparse_; }
    const Matrix& left() const { return left_; }
    const Matrix& core() const { return core_; }
    const Vector& diagonal() const { return diag_; }

    Matrix apply(const Matrix& X) const {
        Matrix Y = Matrix::Zero(n_, X.cols());
        if (sparse_) Y.noalias() += (*sparse_) * X;
        if (left_.cols() > 0) Y.noalias() += left_ * (core_ * (left_.transpose() * X));
        if (diag_.size() > 0) Y.noalias() += diag_.asDiagonal() * X;
        return Y;
    }

    /// Dense n x n form, for small-scale checks only.
    Matrix expand() const {
        Matrix M = Matrix::Zero(n_, n_);
        if (sparse_) M += Matrix(*sparse_);
        if (left_.cols() > 0) M += left_ * core_ * left_.transpose();
        if (diag_.size() > 0) M.diagonal() += diag_;
        return M;
    }

    LinearOperator as_operator() const {
        LinearOperator op;
        op.rows = op.cols = n_;
        auto self = *this;
        op.apply = [self](const Matrix& X) { return self.apply(X); };
        op.apply_transpose = op.apply;
        return op;
    }

private:
    Index n_ = 0;
    std::optional<SparseCols> sparse_;
    Matrix left_;
    Matrix core_;
    Vector diag_;
};

struct MomentSummary {
    Vector M1;
    FactoredSymmetric M2;
    double alpha0 = 0;
};

/// M1 = mean_x G_{x,A}'. M2 = sym(mean_x Z_C G_{x,C}' G_{x,B} Z_B') - a (M1 M1' - diag(M1 M1'))
/// with a = alpha0 / (alpha0 + 1). The raw term is symmetrized because its finite-sample
/// estimate is not exactly symmetric.
inline MomentSummary compute_m2_community(const PartitionBlocks& blocks, const SymmetrizationPair& z, double alpha0) {
    if (alpha0 < 0) throw ValidationError("alpha0 must be nonnegative");
    const double nx = static_cast<double>(blocks.n_X);
    const Index nA = blocks.XA.cols();
    if (z.ZB.rows() != nA || z.ZC.rows() != nA || z.ZB.cols() != blocks.XB.cols() || z.ZC.cols() != blocks.XC.cols())
        throw ValidationError("symmetrizer shapes do not match the partition");
    MomentSummary m;
    m.alpha0 = alpha0;
    m.M1 = (blocks.XA.transpose() * Vector::Ones(blocks.n_X)) / nx;

    Matrix gc = blocks.XC * z.ZC.right;  // n_X x r
    Matrix gb = blocks.XB * z.ZB.right;
    Matrix K = z.ZC.core * (gc.transpose() * gb / nx) * z.ZB.core.transpose();
    const Index rc = z.ZC.left.cols(), rb = z.ZB.left.cols();
    const double a = alpha0 / (alpha0 + 1.0);

    Matrix left(nA, rc + rb + 1);
    left << z.ZC.left, z.ZB.left, m.M1;
    Matrix core = Matrix::Zero(rc + rb + 1, rc + rb + 1);
    core.block(0, rc, rc, rb) = 0.5 * K;
    core.block(rc, 0, rb, rc) = 0.5 * K.transpose();
    core(rc + rb, rc + rb) = -a;
    audit::note(left, "M2 left factor");

    m.M2 = FactoredSymmetric(nA);
    m.M2.set_low_rank(std::move(left), std::move(core));
    m.M2.set_diagonal(a * m.M1.cwiseAbs2());
    return m;
}

/// How topic-path moments weight each document.
enum class TopicScaling {
    raw_counts,    ///< plain frequency vectors c_t
    per_document,  ///< c_t / L_t and pair counts / (L_t (L_t - 1)), unbiased for the topic mixture
};

/// Per-document divisors for the first, second and third order terms.
struct DocumentScales {
    Vector first, second, third;
};

inline DocumentScales document_scales(const Corpus& c, TopicScaling s) {
    const Vector L = document_lengths(c);
    DocumentScales d;
    if (s == TopicScaling::raw_counts) {
        d.first = d.second = d.third = Vector::Ones(L.size());
    } else {
        d.first = L.cwiseInverse();
        d.second = (L.array() * (L.array() - 1)).inverse().matrix();
        d.third = (L.array() * (L.array() - 1) * (L.array() - 2)).inverse().matrix();
    }
    return d;
}

/// M1 = mean c_t; M2 = (alpha0+1) mean(c_t c_t' - diag c_t) - alpha0 M1 M1', accumulated as
/// one sparse product.
inline MomentSummary compute_m2_topic(const Corpus& c, double alpha0, TopicScaling scaling = TopicScaling::per_document) {
    if (alpha0 < 0) throw ValidationError("alpha0 must be nonnegative");
    const Index n = c.n_docs(), d = c.vocab_size;
    if (n == 0) throw ValidationError("corpus has no documents with at least 3 words");
    const DocumentScales sc = document_scales(c, scaling);
    MomentSummary m;
    m.alpha0 = alpha0;
    m.M1 = (c.freq.transpose() * sc.first) / static_cast<double>(n);

    SparseRows weighted = sc.second.cwiseSqrt().asDiagonal() * c.freq;
    SparseCols S = SparseCols(weighted.transpose()) * weighted;
    Vector diag = c.freq.transpose() * sc.second;
    for (Index w = 0; w < d; ++w)
        if (diag(w) != 0) S.coeffRef(w, w) -= diag(w);
    S *= (alpha0 + 1.0) / static_cast<double>(n);
    S.prune(0.0);
    S.makeCompressed();

    m.M2 = FactoredSymmetric(d);
    m.M2.set_sparse(std::move(S));
    if (alpha0 > 0) m.M2.set_low_rank(m.M1, Matrix::Constant(1, 1, -alpha0));
    return m;
}

/// Sparse row of a CSR matrix, viewed without copying.
struct SparseRowView {
    const int* indices = nullptr;
    const double* values = nullptr;
    Index nnz = 0;
    Index dim = 0;

    double sum() const {
        double s = 0;
        for (Index i = 0; i < nnz; ++i) s += values[i];
        return s;
    }
    Vector dense() const {
        Vector v = Vector::Zero(dim);
        for (Index i = 0; i < nnz; ++i) v(indices[i]) = values[i];
        return v;
    }
};

inline SparseRowView row_view(const SparseRows& M, Index r) {
    const auto* outer = M.outerIndexPtr();
    SparseRowView v;
    v.indices = M.innerIndexPtr() + outer[r];
    v.values = M.valuePtr() + outer[r];
    v.nnz = outer[r + 1] - outer[r];
    v.dim = M.cols();
    return v;
}

struct RawTriple {
    Index index;
    SparseRowView a, b, c;
};

/// Restartable source of the raw third-order samples: (G_{x,A}', G_{x,B}', G_{x,C}') per
/// x in X, or (c_t, c_t, c_t) per document.
class SampleStream {
public:
    SampleStream(std::shared_ptr<const PartitionBlocks> blocks, double alpha0)
        : blocks_(std::move(blocks)), alpha0_(alpha0) {}
    SampleStream(std::shared_ptr<const Corpus> corpus, double alpha0) : corpus_(std::move(corpus)), alpha0_(alpha0) {}

    bool is_topic() const { return corpus_ != nullptr; }
    double alpha0() const { return alpha0_; }
    const std::shared_ptr<const PartitionBlocks>& blocks() const { return blocks_; }
    const std::shared_ptr<const Corpus>& corpus() const { return corpus_; }

    Index size() const { return is_topic() ? corpus_->n_docs() : blocks_->n_X; }

    RawTriple at(Index i) const {
        if (is_topic()) {
            auto v = row_view(corpus_->freq, i);
            return {i, v, v, v};
        }
        return {i, row_view(blocks_->XA, i), row_view(blocks_->XB, i), row_view(blocks_->XC, i)};
    }

    /// Visiting order: natural without a seed, otherwise a seeded shuffle.
    std::vector<Index> order(std::optional<std::uint64_t> seed = std::nullopt) const {
        std::vector<Index> idx(static_cast<std::size_t>(size()));
        std::iota(idx.begin(), idx.end(), Index{0});
        if (seed) {
            Rng rng(*seed);
            std::shuffle(idx.begin(), idx.end(), rng);
        }
        return idx;
    }

    class iterator {
    public:
        iterator(const SampleStream* s, Index i) : s_(s), i_(i) {}
        RawTriple operator*() const { return s_->at(i_); }
        iterator& operator++() {
            ++i_;
            return *this;
        }
        bool operator!=(const iterator& o) const { return i_ != o.i_; }

    private:
        const SampleStream* s_;
        Index i_;
    };
    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, size()}; }

private:
    std::shared_ptr<const PartitionBlocks> blocks_;
    std::shared_ptr<const Corpus> corpus_;
    double alpha0_ = 0;
};

inline SampleStream third_moment_sample_stream(std::shared_ptr<const PartitionBlocks> blocks, double alpha0) {
    return SampleStream(std::move(blocks), alpha0);
}

inline SampleStream third_moment_sample_stream(std::shared_ptr<const Corpus> corpus, double alpha0) {
    return SampleStream(std::move(corpus), alpha0);
}

}  // namespace tensorcd
