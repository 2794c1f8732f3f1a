#pragma once

#include "graph_io.hpp"
#include "moments.hpp"
#include "postprocess.hpp"
#include "stgd.hpp"
#include "whitening.hpp"

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace tensorcd {

struct StageTimings {
    double preprocessing = 0;  ///< seconds: partition, moments, whitening, whitened views
    double stgd = 0;
    double postprocessing = 0;
};

struct CommunityFitOptions {
    Index k = 2;
    double alpha0 = 0;
    PartitionFractions fractions = kEqualQuarters;
    std::uint64_t seed = 0;
    SymmetrizerOptions symmetrizer;
    WhiteningOptions whitening;
    StgdConfig stgd;
    double threshold = 0.05;
    bool exchange_roles = true;  ///< second pass with X and A swapped to estimate A
    int workers = 1;
};

/// Everything one pass over a partition produces.
struct CommunityPass {
    NodePartition partition;
    SymmetrizationPair symmetrizers;
    WhiteningContext whitening;
    EigenEstimate eigen;
    double whitening_residual = 0;
    Matrix raw_memberships;  ///< k x n, zero outside X u B u C
};

struct CommunityFit {
    NodePartition partition;
    CommunityPass first;
    std::optional<CommunityPass> second;
    Matrix combined;  ///< raw memberships of every estimated node, communities aligned across passes
    std::vector<Index> estimated_nodes;
    CommunityEstimate estimate;
    StageTimings timings;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double lap() {
        auto now = std::chrono::steady_clock::now();
        double s = std::chrono::duration<double>(now - start_).count();
        start_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline CommunityPass run_pass(const SparseGraph& g, const NodePartition& part, const CommunityFitOptions& opt,
                              std::uint64_t seed, StageTimings& timings) {
    Stopwatch clock;
    CommunityPass pass;
    pass.partition = part;
    auto blocks = PartitionBlocks::extract(g, part);
    SymmetrizerOptions so = opt.symmetrizer;
    so.seed = seed + 1;
    pass.symmetrizers = compute_symmetrizers(blocks, opt.k, so);
    MomentSummary m = compute_m2_community(*blocks, pass.symmetrizers, opt.alpha0);
    WhiteningOptions wo = opt.whitening;
    wo.seed = seed + 2;
    pass.whitening = randomized_whiten(m, opt.k, wo);
    pass.whitening_residual = whitening_residual(m.M2, pass.whitening.W);
    WhitenedViews views =
        whiten_views(pass.whitening, pass.symmetrizers, third_moment_sample_stream(blocks, opt.alpha0), opt.workers);
    timings.preprocessing += clock.lap();

    StgdConfig sc = opt.stgd;
    sc.seed = seed + 3;
    sc.alpha0 = opt.alpha0;
    pass.eigen = run_stgd(views, sc);
    timings.stgd += clock.lap();

    pass.raw_memberships = pass_memberships(g, part, pass.whitening, pass.eigen);
    timings.postprocessing += clock.lap();
    return pass;
}

}  // namespace detail

/// Full community pipeline: partition, moments, whitening, STGD, memberships.
inline CommunityFit fit_community(const SparseGraph& g, const CommunityFitOptions& opt) {
    if (opt.k < 1) throw ConfigError("k must be at least 1");
    if (opt.alpha0 < 0) throw ConfigError("alpha0 must be nonnegative");
    CommunityFit fit;
    detail::Stopwatch clock;
    fit.partition = partition_nodes(g, opt.fractions, opt.seed, opt.k);
    fit.timings.preprocessing += clock.lap();
    fit.first = detail::run_pass(g, fit.partition, opt, opt.seed, fit.timings);
    clock.lap();

    const auto& p = fit.partition;
    const bool exchange = opt.exchange_roles && !g.bipartite_split;
    for (const auto* set : exchange ? std::vector{&p.X, &p.A, &p.B, &p.C} : std::vector{&p.X, &p.B, &p.C}) {
        if (g.bipartite_split && set != &p.X) continue;
        fit.estimated_nodes.insert(fit.estimated_nodes.end(), set->begin(), set->end());
    }
    std::sort(fit.estimated_nodes.begin(), fit.estimated_nodes.end());

    const Vector alpha_hat = alpha_from_eigenvalues(fit.first.eigen.Lambda);
    if (exchange) {
        CommunityFitOptions swapped = opt;
        if (!swapped.stgd.trace_path.empty()) swapped.stgd.trace_path += ".exchanged";
        fit.second = detail::run_pass(g, exchange_roles(p), swapped, opt.seed + 1000, fit.timings);
        clock.lap();
        fit.estimate = combine_passes(fit.first.raw_memberships, fit.second->raw_memberships, p, alpha_hat, 0.0);
    } else {
        fit.estimate.Pi_hat = fit.first.raw_memberships;
        if (g.bipartite_split) fit.estimate.Pi_hat.rightCols(g.n_nodes() - *g.bipartite_split).setZero();
        fit.estimate.alpha_hat = alpha_hat;
        fit.estimate.k_hat = opt.k;
        normalize_columns(fit.estimate.Pi_hat);
    }
    fit.combined = fit.estimate.Pi_hat;
    fit.estimate.threshold = opt.threshold;
    fit.estimate.zero_columns = threshold_memberships(fit.estimate.Pi_hat, opt.threshold, &fit.estimated_nodes);
    fit.timings.postprocessing += clock.lap();
    return fit;
}

/// Re-thresholds the combined memberships of a finished fit.
inline CommunityEstimate rethreshold(const CommunityFit& fit, double threshold) {
    CommunityEstimate e = fit.estimate;
    e.Pi_hat = fit.combined;
    e.threshold = threshold;
    e.zero_columns = threshold_memberships(e.Pi_hat, threshold, &fit.estimated_nodes);
    return e;
}

struct TopicFitOptions {
    Index k = 2;
    double alpha0 = 0;
    TopicScaling scaling = TopicScaling::per_document;
    bool word_repeat_correction = true;
    std::uint64_t seed = 0;
    WhiteningOptions whitening;
    StgdConfig stgd;
};

struct TopicFit {
    WhiteningContext whitening;
    EigenEstimate eigen;
    TopicEstimate estimate;
    double whitening_residual = 0;
    StageTimings timings;
};

inline TopicFit fit_topics(std::shared_ptr<const Corpus> corpus, const TopicFitOptions& opt) {
    if (opt.k < 1) throw ConfigError("k must be at least 1");
    detail::Stopwatch clock;
    TopicFit fit;
    MomentSummary m = compute_m2_topic(*corpus, opt.alpha0, opt.scaling);
    WhiteningOptions wo = opt.whitening;
    wo.seed = opt.seed + 2;
    fit.whitening = randomized_whiten(m, opt.k, wo);
    fit.whitening_residual = whitening_residual(m.M2, fit.whitening.W);
    WhitenedViews views = whiten_views(fit.whitening, third_moment_sample_stream(corpus, opt.alpha0), opt.scaling,
                                       opt.word_repeat_correction);
    fit.timings.preprocessing = clock.lap();
    StgdConfig sc = opt.stgd;
    sc.seed = opt.seed + 3;
    sc.alpha0 = opt.alpha0;
    fit.eigen = run_stgd(views, sc);
    fit.timings.stgd = clock.lap();
    fit.estimate = recover_topics(fit.whitening, fit.eigen);
    fit.timings.postprocessing = clock.lap();
    return fit;
}

}  // namespace tensorcd
