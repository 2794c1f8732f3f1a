#include <tensorcd/sparse_svd.hpp>
#include <tensorcd/synthgen.hpp>
#include <tensorcd/whitening.hpp>

#include <gtest/gtest.h>

using namespace tensorcd;

namespace {

FactoredSymmetric dense_operator(const Matrix& M) {
    FactoredSymmetric f(M.rows());
    f.set_sparse(SparseCols(M.sparseView()));
    return f;
}

/// Random PSD matrix of rank r with a clear gap, as a factored operator.
FactoredSymmetric low_rank_psd(Index n, Index r, std::uint64_t seed) {
    Rng rng(seed);
    Matrix U = orthonormal_basis(unit_gaussian_columns(n, r, rng));
    Matrix core = Matrix::Zero(r, r);
    for (Index i = 0; i < r; ++i) core(i, i) = 1.0 + 0.5 * static_cast<double>(r - i);
    FactoredSymmetric f(n);
    f.set_low_rank(U, core);
    Vector noise(n);
    for (Index i = 0; i < n; ++i) noise(i) = 1e-4 * (1 + i % 3);
    f.set_diagonal(noise);
    return f;
}

}  // namespace

TEST(Whitening, IdentityIsAlreadyWhite) {
    for (auto method : {WhiteningMethod::tall_thin_svd, WhiteningMethod::tall_thin_qr, WhiteningMethod::exact_small}) {
        WhiteningOptions opt;
        opt.method = method;
        WhiteningContext ctx = randomized_whiten(dense_operator(Matrix::Identity(6, 6)), 6, opt);
        EXPECT_LT((ctx.W.transpose() * ctx.W - Matrix::Identity(6, 6)).norm(), 1e-12) << to_string(method);
    }
}

TEST(Whitening, DiagonalHandExample) {
    Matrix M(2, 2);
    M << 4, 0, 0, 1;
    for (auto method : {WhiteningMethod::tall_thin_svd, WhiteningMethod::tall_thin_qr, WhiteningMethod::exact_small}) {
        WhiteningOptions opt;
        opt.method = method;
        WhiteningContext ctx = randomized_whiten(dense_operator(M), 1, opt);
        EXPECT_NEAR(std::abs(ctx.W(0, 0)), 0.5, 1e-12);
        EXPECT_NEAR(ctx.W(1, 0), 0.0, 1e-12);
        EXPECT_NEAR((ctx.W.transpose() * M * ctx.W)(0, 0), 1.0, 1e-12);
        EXPECT_GT(ctx.W(0, 0), 0.0);  // sign convention: largest entry positive
    }
}

TEST(Whitening, MethodsAgreeUpToRotation) {
    const Index n = 500, k = 6;
    FactoredSymmetric M2 = low_rank_psd(n, k, 3);
    WhiteningOptions opt;
    opt.method = WhiteningMethod::exact_small;
    const WhiteningContext ex = randomized_whiten(M2, k, opt);
    const Matrix dense = M2.expand();
    for (auto method : {WhiteningMethod::tall_thin_svd, WhiteningMethod::tall_thin_qr}) {
        opt.method = method;
        opt.seed = 11;
        WhiteningContext ctx = randomized_whiten(M2, k, opt);
        EXPECT_LE(whitening_residual(M2, ctx.W), 1e-6 * std::sqrt(static_cast<double>(k)));
        // W_i' M2 W_j is orthogonal when both whiten the same top-k space.
        const Matrix R = ctx.W.transpose() * dense * ex.W;
        EXPECT_LT((R * R.transpose() - Matrix::Identity(k, k)).norm(), 1e-5) << to_string(method);
        const Vector rel = (ctx.singular_values - ex.singular_values).cwiseQuotient(ex.singular_values);
        EXPECT_LT(rel.cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Whitening, SeedsGiveRotatedSolutions) {
    const Index k = 4;
    FactoredSymmetric M2 = low_rank_psd(300, k, 5);
    WhiteningOptions a, b;
    a.seed = 1;
    b.seed = 2;
    WhiteningContext ca = randomized_whiten(M2, k, a), cb = randomized_whiten(M2, k, b);
    const Matrix R = ca.W.transpose() * M2.apply(cb.W);
    EXPECT_LT((R.transpose() * R - Matrix::Identity(k, k)).norm(), 1e-6);
    EXPECT_LT(((ca.singular_values - cb.singular_values).cwiseQuotient(ca.singular_values)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Whitening, RankDeficientIsDegenerate) {
    FactoredSymmetric M2 = low_rank_psd(50, 2, 1);
    M2.set_diagonal(Vector());
    EXPECT_THROW(randomized_whiten(M2, 3), DegenerateMomentError);
    WhiteningOptions opt;
    opt.method = WhiteningMethod::exact_small;
    EXPECT_THROW(randomized_whiten(M2, 3, opt), DegenerateMomentError);
    EXPECT_THROW(randomized_whiten(M2, 0), ValidationError);
}

TEST(Whitening, ExactPathRefusesLargeDimensions) {
    FactoredSymmetric M2 = low_rank_psd(60, 2, 1);
    WhiteningOptions opt;
    opt.method = WhiteningMethod::exact_small;
    opt.exact_limit = 50;
    EXPECT_THROW(randomized_whiten(M2, 2, opt), ValidationError);
}

TEST(Views, IdentityWhiteningReturnsRawVectors) {
    // Four nodes per set; W = I on A and Z_B = Z_C = I.
    std::vector<Eigen::Triplet<double, int>> t;
    for (int x = 0; x < 4; ++x)
        for (int j = 0; j < 4; ++j)
            if ((x + j) % 2 == 0) {
                t.emplace_back(x, 4 + j, 1.0);
                t.emplace_back(x, 8 + ((j + 1) % 4), 1.0);
                t.emplace_back(x, 12 + ((j + 2) % 4), 1.0);
            }
    SparseGraph g;
    g.adjacency = assemble_adjacency(16, t, false, false);
    NodePartition p{{0, 1, 2, 3}, {4, 5, 6, 7}, {8, 9, 10, 11}, {12, 13, 14, 15}, 0};
    auto blocks = PartitionBlocks::extract(g, p);
    WhiteningContext ctx;
    ctx.W = Matrix::Identity(4, 4);
    SymmetrizationPair z;
    z.ZB = {Matrix::Identity(4, 4), Matrix::Identity(4, 4), Matrix::Identity(4, 4)};
    z.ZC = z.ZB;
    WhitenedViews v = whiten_views(ctx, z, third_moment_sample_stream(blocks, 0.0), 1);
    EXPECT_EQ(v.yA, Matrix(blocks->XA).transpose());
    EXPECT_EQ(v.yB, Matrix(blocks->XB).transpose());
    EXPECT_EQ(v.yC, Matrix(blocks->XC).transpose());
}

TEST(Views, ZeroSampleGivesZeroView) {
    Corpus c;
    c.vocab_size = 3;
    Matrix counts(2, 3);
    counts << 0, 0, 0, 1, 1, 1;
    c.freq = counts.sparseView();
    WhiteningContext ctx;
    ctx.W = Matrix::Random(3, 2);
    WhitenedViews v = whiten_views(ctx, third_moment_sample_stream(std::make_shared<Corpus>(c), 0.0));
    EXPECT_EQ(v.yA.col(0), Vector::Zero(2));
}

TEST(Views, CommunityViewsMatchDenseEvaluation) {
    CommunityTruth truth{sample_memberships(DirichletSpec::symmetric(3, 1.0), 80, 4), planted_connectivity(3, 0.8, 0.2)};
    SparseGraph g = generate_mmsb(truth, EdgeModel::bernoulli, 5);
    NodePartition p = partition_nodes(g, kEqualQuarters, 6, 3);
    auto blocks = PartitionBlocks::extract(g, p);
    SymmetrizationPair z = compute_symmetrizers(blocks, 3);
    MomentSummary m = compute_m2_community(*blocks, z, 1.0);
    WhiteningContext ctx = randomized_whiten(m, 3);
    for (int workers : {1, 3}) {
        WhitenedViews v = whiten_views(ctx, z, third_moment_sample_stream(blocks, 1.0), workers);
        const Matrix GA = Matrix(blocks->XA), GB = Matrix(blocks->XB), GC = Matrix(blocks->XC);
        const Matrix yA = ctx.W.transpose() * GA.transpose();
        const Matrix yB = ctx.W.transpose() * z.ZB.expand() * GB.transpose();
        const Matrix yC = ctx.W.transpose() * z.ZC.expand() * GC.transpose();
        EXPECT_LT((v.yA - yA).norm(), 1e-8 * yA.norm());
        EXPECT_LT((v.yB - yB).norm(), 1e-8 * yB.norm());
        EXPECT_LT((v.yC - yC).norm(), 1e-8 * yC.norm());
        EXPECT_TRUE(v.muB.isApprox(yB.rowwise().mean(), 1e-10));
    }
}

TEST(SparseSvd, DiagonalExample) {
    Matrix D = Eigen::Vector3d(3, 2, 1).asDiagonal();
    TruncatedSvd s = sparse_svd(make_operator(D), 2);
    EXPECT_NEAR(s.S(0), 3.0, 1e-10);
    EXPECT_NEAR(s.S(1), 2.0, 1e-10);
}

TEST(SparseSvd, RankOneOuterProduct) {
    Vector u(4), v(3);
    u << 1, -2, 0.5, 3;
    v << 2, 1, -1;
    TruncatedSvd s = sparse_svd(make_operator(Matrix(u * v.transpose())), 1);
    EXPECT_NEAR(s.S(0), u.norm() * v.norm(), 1e-10);
    EXPECT_NEAR(std::abs(s.U.col(0).dot(u.normalized())), 1.0, 1e-10);
    EXPECT_NEAR(std::abs(s.V.col(0).dot(v.normalized())), 1.0, 1e-10);
}

TEST(SparseSvd, MatchesDenseSvd) {
    Rng rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Eigen::Triplet<double, int>> t;
    for (int i = 0; i < 300; ++i)
        for (int j = 0; j < 300; ++j)
            if (u(rng) < 0.03) t.emplace_back(i, j, u(rng));
    auto A = std::make_shared<SparseCols>(300, 300);
    A->setFromTriplets(t.begin(), t.end());
    SparseSvdOptions opt;
    opt.tol = 1e-12;
    TruncatedSvd s = sparse_svd(make_operator(std::shared_ptr<const SparseCols>(A)), 10, opt);
    const Matrix denseA(*A);
    Eigen::JacobiSVD<Matrix> dense(denseA);
    for (Index i = 0; i < 10; ++i) EXPECT_NEAR(s.S(i), dense.singularValues()(i), 1e-8) << i;
}
