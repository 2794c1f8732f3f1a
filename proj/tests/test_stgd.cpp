#include "oracles.hpp"

#include <tensorcd/graph_io.hpp>
#include <tensorcd/stgd.hpp>

#include <gtest/gtest.h>

#include <iostream>
#include <memory>
#include <random>

using namespace tensorcd;

namespace {

Matrix gaussian(Index r, Index c, Rng& rng) {
    std::normal_distribution<double> n(0, 1);
    Matrix M(r, c);
    for (Index i = 0; i < M.size(); ++i) M.data()[i] = n(rng);
    return M;
}

WhitenedViews random_views(Index k, Index n, std::uint64_t seed) {
    Rng rng(seed);
    WhitenedViews v;
    v.yA = gaussian(k, n, rng);
    v.yB = gaussian(k, n, rng);
    v.yC = gaussian(k, n, rng);
    v.muA = v.yA.rowwise().mean();
    v.muB = v.yB.rowwise().mean();
    v.muC = v.yC.rowwise().mean();
    return v;
}

/// Views whose empirical third moment is sum_i lambda_i v_i (x) v_i (x) v_i exactly.
WhitenedViews known_spectrum_views(const Matrix& V, const Vector& lambda, Index copies) {
    const Index k = V.cols(), r = lambda.size();
    WhitenedViews v;
    v.yA.resize(k, r * copies);
    for (Index i = 0; i < r; ++i) {
        const double s = std::cbrt(static_cast<double>(r) * lambda(i));
        for (Index c = 0; c < copies; ++c) v.yA.col(i * copies + c) = s * V.col(i);
    }
    v.yB = v.yA;
    v.yC = v.yA;
    v.muA = v.yA.rowwise().mean();
    v.muB = v.muA;
    v.muC = v.muA;
    return v;
}

Matrix implicit_direction(const Matrix& Phi, const WhitenedViews& v, StgdConfig cfg) {
    cfg.max_step = 0;
    std::vector<Index> order(static_cast<std::size_t>(v.n_samples()));
    std::iota(order.begin(), order.end(), Index{0});
    const double beta = 1e-3;
    return (stgd_batch_step(Phi, v, order, 0, v.n_samples(), cfg, beta) - Phi) / beta;
}

}  // namespace

TEST(Loss, ZeroComponent) {
    WhitenedTriple s{Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};
    EXPECT_EQ(loss_at_sample(Matrix::Zero(1, 1), s, 1.0), 0.0);
}

TEST(Loss, UnitExample) {
    WhitenedTriple s{Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};
    EXPECT_DOUBLE_EQ(loss_at_sample(Matrix::Ones(1, 1), s, 1.0), 0.0);
}

TEST(Loss, MatchesExplicitTensor) {
    Rng rng(3);
    const Matrix V = gaussian(2, 2, rng);
    WhitenedTriple s{gaussian(2, 1, rng), gaussian(2, 1, rng), gaussian(2, 1, rng)};
    oracle::Tensor3 T(2);
    T.add_outer(s.yA, s.yB, s.yC, 1.0);
    double ortho = 0;
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) ortho += std::pow(V.col(i).dot(V.col(j)), 3);
    double data = 0;
    for (Index i = 0; i < 2; ++i) data += T.at(V.col(i), V.col(i), V.col(i));
    EXPECT_NEAR(loss_at_sample(V, s, 0.7), 0.7 * ortho - data, 1e-10);
}

TEST(Step, ZeroRateLeavesComponentsUnchanged) {
    Rng rng(1);
    const Matrix Phi = gaussian(3, 3, rng);
    WhitenedTriple s{gaussian(3, 1, rng), gaussian(3, 1, rng), gaussian(3, 1, rng)};
    EXPECT_EQ(stgd_step(Phi, s, 1.0, 0.0), Phi);
}

TEST(Step, UnitFixedPoint) {
    WhitenedTriple s{Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};
    EXPECT_DOUBLE_EQ(stgd_step(Matrix::Ones(1, 1), s, 1.0, 0.1)(0, 0), 1.0);
}

TEST(Step, MatchesFiniteDifferences) {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Index k = 3;
        const Matrix Phi = gaussian(k, k, rng);
        WhitenedTriple s{gaussian(k, 1, rng), gaussian(k, 1, rng), gaussian(k, 1, rng)};
        const double theta = 1.0, beta = 1e-2;
        const Matrix dir = (stgd_step(Phi, s, theta, beta) - Phi) / beta;
        const Matrix fd = oracle::central_differences(
            [&](const Matrix& V) { return loss_at_sample(V, s, loss_weight_for_update(theta)); }, Phi, 1e-5);
        for (Index i = 0; i < fd.size(); ++i)
            EXPECT_LE(std::abs(dir.data()[i] + fd.data()[i]), 1e-5 * std::abs(fd.data()[i])) << "trial " << trial;
    }
}

TEST(Step, NonFiniteUpdateIsDivergence) {
    WhitenedTriple s{Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};
    EXPECT_THROW(stgd_step(Matrix::Constant(1, 1, 1e200), s, 1.0, 1.0), DivergenceError);
}

TEST(Schedule, DefaultsAndDecay) {
    StgdConfig cfg;
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 4, 100, 0), 0.005);
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 4, 100, 1000), 0.0025);
    cfg.learn_rate_0 = 0.2;
    cfg.decay_tau = 5;
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 4, 100, 5), 0.1);
}

TEST(Shift, CoefficientsAndDefaults) {
    ShiftCoefficients c = shift_coefficients(1.0, ShiftSign::centered);
    EXPECT_DOUBLE_EQ(c.triple, 2.0 / 6.0);
    EXPECT_DOUBLE_EQ(c.cross, -1.0 / 3.0);
    EXPECT_DOUBLE_EQ(shift_coefficients(1.0, ShiftSign::additive).cross, 1.0 / 3.0);
    StgdConfig cfg;
    EXPECT_FALSE(use_shift(cfg));
    cfg.alpha0 = 0.5;
    EXPECT_TRUE(use_shift(cfg));
    cfg.shifted = false;
    EXPECT_FALSE(use_shift(cfg));
}

TEST(Batch, ImplicitMatchesExplicitTensorCommunity) {
    for (Index k : {2, 3, 5}) {
        WhitenedViews v = random_views(k, 150, 40 + k);
        Rng rng(k);
        const Matrix Phi = gaussian(k, k, rng);
        for (double alpha0 : {0.0, 0.8}) {
            StgdConfig cfg;
            cfg.alpha0 = alpha0;
            const Matrix implicit = implicit_direction(Phi, v, cfg);
            const Matrix grad = oracle::batch_gradient(oracle::materialize(v, cfg), Phi, cfg.theta / 2);
            EXPECT_LE((implicit + grad).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, grad.cwiseAbs().maxCoeff()))
                << "k " << k << " alpha0 " << alpha0;
        }
    }
}

TEST(Batch, ImplicitMatchesExplicitTensorTopic) {
    const Index d = 7, k = 3, docs = 60;
    Rng rng(5);
    std::uniform_int_distribution<int> count(0, 3);
    Matrix counts(docs, d);
    for (Index t = 0; t < docs; ++t) {
        do {
            for (Index w = 0; w < d; ++w) counts(t, w) = count(rng);
        } while (counts.row(t).sum() < 3);
    }
    auto corpus = std::make_shared<Corpus>();
    corpus->vocab_size = d;
    corpus->freq = counts.sparseView();
    corpus->freq.makeCompressed();
    WhiteningContext ctx;
    ctx.W = gaussian(d, k, rng) / 3.0;
    const Matrix Phi = gaussian(k, k, rng);
    for (bool correction : {true, false})
        for (double alpha0 : {0.0, 1.5}) {
            WhitenedViews v = whiten_views(ctx, third_moment_sample_stream(corpus, alpha0), TopicScaling::per_document,
                                           correction);
            StgdConfig cfg;
            cfg.alpha0 = alpha0;
            const Matrix implicit = implicit_direction(Phi, v, cfg);
            const Matrix grad = oracle::batch_gradient(oracle::materialize(v, cfg), Phi, cfg.theta / 2);
            EXPECT_LE((implicit + grad).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, grad.cwiseAbs().maxCoeff()))
                << "correction " << correction << " alpha0 " << alpha0;
            // The reported reward is the same tensor evaluated at the components.
            const oracle::Tensor3 T = oracle::materialize(v, cfg);
            double reward = 0;
            for (Index i = 0; i < k; ++i) reward += T.at(Phi.col(i), Phi.col(i), Phi.col(i));
            const double ortho = 0.5 * (Phi.transpose() * Phi).array().cube().sum();
            EXPECT_NEAR(average_loss(v, Phi, cfg, 0.5), ortho - reward, 1e-9 * std::max(1.0, std::abs(reward)));
        }
}

TEST(Batch, TopicShiftVersusFullCentering) {
    // The implemented topic shift centers with the pair moment E[x (x) x] (x) M1. The fully
    // written third moment centers with diag(c_t) (x) M1 instead. This measures the gap on a
    // small corpus, checks it is exactly that cross-term difference, and reports its size.
    const Index d = 6, k = 3, docs = 80;
    const double alpha0 = 0.8;
    Rng rng(11);
    std::uniform_int_distribution<int> count(0, 3);
    Matrix counts(docs, d);
    for (Index t = 0; t < docs; ++t) {
        do {
            for (Index w = 0; w < d; ++w) counts(t, w) = count(rng);
        } while (counts.row(t).sum() < 3);
    }
    auto corpus = std::make_shared<Corpus>();
    corpus->vocab_size = d;
    corpus->freq = counts.sparseView();
    corpus->freq.makeCompressed();
    WhiteningContext ctx;
    ctx.W = gaussian(d, k, rng) / 3.0;

    // Word-space terms with unit document scaling.
    const double inv = 1.0 / docs;
    const Vector M1 = counts.colwise().sum().transpose() * inv;
    oracle::Tensor3 raw(d), diag_cross(d), pair_cross(d), cube(d);
    Matrix pair = Matrix::Zero(d, d);
    for (Index t = 0; t < docs; ++t) {
        const Vector c = counts.row(t).transpose();
        raw.add_outer(c, c, c, inv);
        for (Index i = 0; i < d; ++i) {
            const Vector e = Vector::Unit(d, i);
            raw.add_outer(e, e, c, -c(i) * inv);
            raw.add_outer(e, c, e, -c(i) * inv);
            raw.add_outer(c, e, e, -c(i) * inv);
            raw.add_outer(e, e, e, 2 * c(i) * inv);
        }
        pair += inv * (c * c.transpose() - Matrix(c.asDiagonal()));
    }
    const Matrix D = M1.asDiagonal();
    for (int slot : {1, 2, 3}) {
        diag_cross.add_pair(D, M1, slot, 1.0);
        pair_cross.add_pair(pair, M1, slot, 1.0);
    }
    cube.add_outer(M1, M1, M1, 1.0);
    const double a = alpha0 / (alpha0 + 2), triple = 2 * alpha0 * alpha0 / ((alpha0 + 1) * (alpha0 + 2));
    auto whiten = [&](const oracle::Tensor3& T) {
        oracle::Tensor3 out(k);
        for (Index i = 0; i < k; ++i)
            for (Index j = 0; j < k; ++j)
                for (Index l = 0; l < k; ++l) out.slice[i](j, l) = T.at(ctx.W.col(i), ctx.W.col(j), ctx.W.col(l));
        return out;
    };
    const oracle::Tensor3 wraw = whiten(raw), wdiag = whiten(diag_cross), wpair = whiten(pair_cross), wcube = whiten(cube);

    WhitenedViews v = whiten_views(ctx, third_moment_sample_stream(corpus, alpha0), TopicScaling::raw_counts, true);
    StgdConfig cfg;
    cfg.alpha0 = alpha0;
    const oracle::Tensor3 ours = oracle::materialize(v, cfg);
    double gap = 0, scale = 0, resid = 0;
    for (Index i = 0; i < k; ++i) {
        // Full centering, divided by its leading (alpha0 + 1)(alpha0 + 2) / 2.
        const Matrix full = wraw.slice[i] - a * wdiag.slice[i] + triple * wcube.slice[i];
        const Matrix expected_gap = -a * (wpair.slice[i] - wdiag.slice[i]);
        gap = std::max(gap, (ours.slice[i] - full).cwiseAbs().maxCoeff());
        scale = std::max(scale, full.cwiseAbs().maxCoeff());
        resid = std::max(resid, (ours.slice[i] - full - expected_gap).cwiseAbs().maxCoeff());
    }
    std::cout << "[ topic shift ] max |shifted - fully centered| = " << gap << " (relative " << gap / scale << ")\n";
    RecordProperty("topic_shift_gap_relative", std::to_string(gap / scale));
    EXPECT_LE(resid, 1e-10 * scale);
}

TEST(Batch, PrintedShiftFormMatchesHandEvaluation) {
    const Index k = 3;
    WhitenedViews v = random_views(k, 1, 8);
    Rng rng(9);
    v.muA = gaussian(k, 1, rng);
    v.muB = gaussian(k, 1, rng);
    v.muC = gaussian(k, 1, rng);
    const Matrix Phi = gaussian(k, k, rng);
    StgdConfig cfg;
    cfg.alpha0 = 0.7;
    cfg.shift_form = ShiftForm::printed;
    const double triple = 2 * 0.49 / (1.7 * 2.7), cross = -0.7 / 2.7;
    Matrix expected(k, k);
    for (Index i = 0; i < k; ++i) {
        const Vector p = Phi.col(i);
        const double a = p.dot(v.yA.col(0)), b = p.dot(v.yB.col(0)), mA = p.dot(v.muA), mB = p.dot(v.muB);
        expected.col(i) = 3 * (a * b * v.yC.col(0) + triple * mA * mB * v.muC +
                               cross * (a * b * v.muC + a * mB * v.yC.col(0) + mA * b * v.yC.col(0)));
    }
    const Matrix G = Phi.transpose() * Phi;
    expected -= 3 * cfg.theta * Phi * G.cwiseProduct(G);
    EXPECT_LT((implicit_direction(Phi, v, cfg) - expected).cwiseAbs().maxCoeff(), 1e-6 * expected.cwiseAbs().maxCoeff());
}

TEST(Batch, ParallelAccumulationMatchesSerial) {
    WhitenedViews v = random_views(4, 97, 2);
    Rng rng(8);
    const Matrix Phi = gaussian(4, 4, rng);
    StgdConfig serial, parallel;
    parallel.workers = 4;
    std::vector<Index> order(97);
    std::iota(order.begin(), order.end(), Index{0});
    const Matrix a = stgd_batch_step(Phi, v, order, 0, 97, serial, 1e-3);
    const Matrix b = stgd_batch_step(Phi, v, order, 0, 97, parallel, 1e-3);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Batch, StepIsCapped) {
    WhitenedViews v = random_views(3, 10, 4);
    v.yA *= 100;
    StgdConfig cfg;
    const Matrix Phi = Matrix::Identity(3, 3);
    std::vector<Index> order{0, 1, 2};
    const Matrix next = stgd_batch_step(Phi, v, order, 0, 3, cfg, 1.0);
    EXPECT_LE((next - Phi).norm(), cfg.max_step * Phi.norm() * (1 + 1e-12));
}

TEST(Run, ZeroEpochsReturnsInitialization) {
    WhitenedViews v = random_views(3, 20, 1);
    StgdConfig cfg;
    cfg.max_epochs = 0;
    cfg.seed = 4;
    EigenEstimate e = run_stgd(v, cfg);
    EXPECT_EQ(e.iterations_run, 0);
    EXPECT_EQ(e.Phi, initial_components(3, 4));
    EXPECT_LT((e.Phi.transpose() * e.Phi - Matrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(Run, SingleRepeatedSampleReachesFixedPoint) {
    // k = 1, y = s: the update vanishes at phi = s, so lambda = s^3.
    const double s = 1.3;
    WhitenedViews v;
    v.yA = Matrix::Constant(1, 1, s);
    v.yB = v.yA;
    v.yC = v.yA;
    v.muA = v.muB = v.muC = Vector::Constant(1, s);
    StgdConfig cfg;
    cfg.learn_rate_0 = 0.05;
    cfg.max_epochs = 20000;
    cfg.tol = 1e-12;
    EigenEstimate e = run_stgd(v, cfg);
    EXPECT_TRUE(e.converged);
    EXPECT_NEAR(std::abs(e.Phi(0, 0)), s, 1e-6);
    EXPECT_NEAR(e.Lambda(0), s * s * s, 1e-5);
}

TEST(Run, RecoversKnownOrthogonalSpectrum) {
    Rng rng(31);
    const Matrix V = orthonormal_basis(gaussian(3, 3, rng));
    Vector lambda(3);
    lambda << 0.5, 0.3, 0.2;
    WhitenedViews v = known_spectrum_views(V, lambda, 50);
    StgdConfig cfg;
    cfg.seed = 2;
    EigenEstimate e = run_stgd(v, cfg);
    for (Index i = 0; i < 3; ++i) {
        Index best = 0;
        const Vector u = e.Phi.col(i).normalized();
        (V.transpose() * u).cwiseAbs().maxCoeff(&best);
        EXPECT_GE(std::abs(u.dot(V.col(best))), 0.99);
        EXPECT_NEAR(e.Lambda(i), lambda(best), 0.05 * lambda(best));
        for (Index j = 0; j < 3; ++j)
            if (j != i) EXPECT_LE(std::abs(u.dot(e.Phi.col(j).normalized())), 0.05);
    }
}

TEST(Run, SampleOrderDoesNotChangeTheOptimum) {
    Rng rng(7);
    const Matrix V = orthonormal_basis(gaussian(3, 3, rng));
    Vector lambda(3);
    lambda << 0.5, 0.3, 0.2;
    WhitenedViews v = known_spectrum_views(V, lambda, 40);
    WhitenedViews w = v;
    std::vector<Index> perm(static_cast<std::size_t>(v.n_samples()));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        w.yA.col(static_cast<Index>(i)) = v.yA.col(perm[i]);
        w.yB.col(static_cast<Index>(i)) = v.yB.col(perm[i]);
        w.yC.col(static_cast<Index>(i)) = v.yC.col(perm[i]);
    }
    StgdConfig cfg;
    const EigenEstimate a = run_stgd(v, cfg), b = run_stgd(w, cfg);
    EXPECT_NEAR(a.final_loss, b.final_loss, 1e-3 * std::abs(a.final_loss));
}

TEST(Run, TraceIsWritten) {
    WhitenedViews v = random_views(2, 30, 3);
    StgdConfig cfg;
    cfg.max_epochs = 3;
    cfg.trace_path = ::testing::TempDir() + "/stgd_trace.csv";
    EigenEstimate e = run_stgd(v, cfg);
    EXPECT_EQ(e.trace.size(), 3u);
    std::ifstream in(cfg.trace_path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "epoch,loss,max_change");
}

TEST(Run, RejectsBadConfig) {
    WhitenedViews v = random_views(2, 5, 1);
    StgdConfig cfg;
    cfg.theta = 0;
    EXPECT_THROW(run_stgd(v, cfg), ValidationError);
    cfg = {};
    cfg.batch = 0;
    EXPECT_THROW(run_stgd(v, cfg), ValidationError);
}

TEST(Reseed, CollapsedColumnIsRedrawnOrthogonally) {
    Matrix Phi = Matrix::Identity(4, 4);
    Phi.col(2) *= 1e-3;
    Rng rng(1);
    EXPECT_EQ(reseed_degenerate(Phi, 0.25, 0.8, rng), 1);
    EXPECT_NEAR(Phi.col(2).norm(), 1.0, 1e-12);
    for (Index j : {0, 1, 3}) EXPECT_NEAR(Phi.col(2).dot(Phi.col(j)), 0.0, 1e-12);
}

TEST(Reseed, DuplicateColumnIsRedrawn) {
    Matrix Phi = Matrix::Identity(3, 3);
    Phi.col(1) = 0.9 * Phi.col(0) + 0.05 * Phi.col(2);
    Rng rng(2);
    EXPECT_EQ(reseed_degenerate(Phi, 0.25, 0.8, rng), 1);
    EXPECT_LT(std::abs(Phi.col(1).normalized().dot(Phi.col(0))), 1e-12);
    Matrix healthy = Matrix::Identity(3, 3);
    EXPECT_EQ(reseed_degenerate(healthy, 0.25, 0.8, rng), 0);
    EXPECT_EQ(healthy, Matrix::Identity(3, 3));
}

TEST(Eigenvalues, NormCubed) {
    EXPECT_DOUBLE_EQ(eigenvalues_from_norms(Matrix::Identity(2, 2))(0), 1.0);
    EXPECT_DOUBLE_EQ(eigenvalues_from_norms(2 * Matrix::Identity(2, 2))(1), 8.0);
    Rng rng(4);
    const Matrix Phi = gaussian(3, 4, rng);
    const Vector L = eigenvalues_from_norms(Phi);
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(L(i), std::pow(Phi.col(i).norm(), 3), 1e-12);
}
