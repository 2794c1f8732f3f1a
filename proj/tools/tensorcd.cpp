// tensorcd: generate synthetic instances, fit community or topic models, validate estimates.

#include <tensorcd/tensorcd.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace tensorcd;

namespace {

/// Error tagged with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& what) : Error(stage + ": " + what) {}
};

template <class F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

struct Outputs {
    fs::path dir;
    bool force = false;
    std::vector<fs::path> planned;

    fs::path add(const std::string& name) {
        planned.push_back(dir / name);
        return planned.back();
    }
    /// Refuses to touch anything unless every planned file is new or --force was given.
    void claim() const {
        if (dir.empty()) throw ConfigError("an output directory is required (--output)");
        if (!force)
            for (const auto& p : planned)
                if (fs::exists(p)) throw FileError("'" + p.string() + "' exists; pass --force to overwrite");
        fs::create_directories(dir);
    }
};

std::string threshold_tag(double t) {
    std::ostringstream os;
    os << t;
    return os.str();
}

LoadOptions load_options(const RunConfig& cfg) {
    return {cfg.directed, cfg.weighted || cfg.model == EdgeModel::poisson, cfg.bipartite_left.has_value()};
}

void require(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing ") + what + " path");
    if (!fs::exists(path)) throw FileError(std::string(what) + " '" + path + "' does not exist");
}

int cmd_generate(const RunConfig& cfg) {
    Outputs out{cfg.output, cfg.force};
    KeyValueReport run;
    if (cfg.mode == Mode::community) {
        const fs::path graph = out.add("graph.txt"), pi = out.add("truth_pi.txt"), P = out.add("truth_P.txt"),
                       manifest = out.add("manifest.txt");
        out.claim();
        CommunityTruth truth{sample_memberships(DirichletSpec::symmetric(cfg.k, cfg.alpha0), cfg.n, cfg.seed),
                             planted_connectivity(cfg.k, cfg.p_in, cfg.p_out)};
        GraphShape shape{cfg.directed, cfg.bipartite_left};
        SparseGraph g = in_stage("generate", [&] { return generate_mmsb(truth, cfg.model, cfg.seed + 1, shape); });
        write_edge_list(g, graph.string(), cfg.model == EdgeModel::poisson);
        write_dense(truth.Pi, pi.string());
        write_dense(truth.P, P.string());
        run.set("nodes", g.n_nodes());
        run.set("stored_entries", g.n_entries());
        write_manifest(cfg, run, manifest.string());
        std::cout << "wrote " << graph.string() << " (" << g.n_nodes() << " nodes, " << g.n_entries()
                  << " stored entries)\n";
    } else {
        const fs::path corpus = out.add("docword.txt"), mu = out.add("truth_mu.txt"), alpha = out.add("truth_alpha.txt"),
                       manifest = out.add("manifest.txt");
        out.claim();
        TopicTruth truth;
        // Topic-word columns from a sparse symmetric Dirichlet over the vocabulary.
        truth.mu = sample_memberships(DirichletSpec::symmetric(cfg.vocab, 0.1 * static_cast<double>(cfg.vocab)), cfg.k,
                                      cfg.seed + 2);
        truth.prior = DirichletSpec::symmetric(cfg.k, cfg.alpha0);
        Corpus c = in_stage("generate", [&] { return generate_lda(truth, cfg.docs, cfg.doc_length, cfg.seed + 1); });
        write_bag_of_words(c, corpus.string());
        write_dense(truth.mu, mu.string());
        write_column(truth.prior.alpha / truth.prior.alpha.sum(), alpha.string());
        run.set("documents", c.n_docs());
        write_manifest(cfg, run, manifest.string());
        std::cout << "wrote " << corpus.string() << " (" << c.n_docs() << " documents)\n";
    }
    return 0;
}

void record_timings(KeyValueReport& run, const StageTimings& t) {
    run.set("seconds_preprocessing", t.preprocessing);
    run.set("seconds_stgd", t.stgd);
    run.set("seconds_postprocessing", t.postprocessing);
}

void record_eigen(KeyValueReport& run, const std::string& prefix, const EigenEstimate& e) {
    run.set(prefix + "epochs", e.iterations_run);
    run.set(prefix + "updates", e.updates);
    run.set(prefix + "converged", e.converged);
    run.set(prefix + "final_loss", e.final_loss);
    run.set(prefix + "reseeded_columns", e.reseeded);
    if (!e.degenerate_columns.empty())
        std::cerr << "warning: " << e.degenerate_columns.size() << " component(s) ended with zero norm\n";
}

int cmd_fit(const RunConfig& cfg) {
    require(cfg.input, "input");
    Outputs out{cfg.output, cfg.force};
    KeyValueReport run;
    const fs::path manifest = out.add("manifest.txt"), alpha = out.add("alpha_hat.txt");
    if (cfg.mode == Mode::community) {
        const fs::path pi = out.add("pi_hat.txt"), raw = out.add("pi_raw.txt"), remap = out.add("remap.txt");
        std::vector<fs::path> sweep;
        for (double t : cfg.threshold_sweep) sweep.push_back(out.add("pi_hat_t" + threshold_tag(t) + ".txt"));
        out.claim();
        SparseGraph g = in_stage("load", [&] { return load_edge_list(cfg.input, load_options(cfg)); });
        if (g.self_loops_dropped) std::cerr << "warning: dropped " << g.self_loops_dropped << " self-loop(s)\n";
        CommunityFitOptions opt;
        opt.k = cfg.k;
        opt.alpha0 = cfg.alpha0;
        opt.fractions = cfg.fractions;
        opt.seed = cfg.seed;
        opt.symmetrizer.method = cfg.pinv;
        opt.symmetrizer.power_iterations = cfg.power_iterations;
        opt.whitening.method = cfg.whitening;
        opt.whitening.power_iterations = cfg.power_iterations;
        opt.stgd = cfg.stgd;
        opt.stgd.trace_path = cfg.trace;
        opt.stgd.workers = resolve_workers(cfg.workers);
        opt.threshold = cfg.threshold;
        opt.exchange_roles = cfg.exchange_roles;
        opt.workers = resolve_workers(cfg.workers);
        CommunityFit fit = in_stage("fit", [&] { return fit_community(g, opt); });
        write_memberships(fit.estimate.Pi_hat, g.external_ids, pi.string());
        write_memberships(fit.combined, g.external_ids, raw.string());
        write_remap(g, remap.string());
        write_column(fit.estimate.alpha_hat, alpha.string());
        for (std::size_t i = 0; i < sweep.size(); ++i)
            write_memberships(rethreshold(fit, cfg.threshold_sweep[i]).Pi_hat, g.external_ids, sweep[i].string());
        run.set("nodes", g.n_nodes());
        run.set("estimated_nodes", static_cast<Index>(fit.estimated_nodes.size()));
        run.set("zero_columns", fit.estimate.zero_columns);
        run.set("whitening_residual", fit.first.whitening_residual);
        record_eigen(run, "pass1_", fit.first.eigen);
        if (fit.second) {
            run.set("whitening_residual_exchanged", fit.second->whitening_residual);
            record_eigen(run, "pass2_", fit.second->eigen);
        }
        record_timings(run, fit.timings);
        if (fit.estimate.zero_columns)
            std::cerr << "warning: " << fit.estimate.zero_columns << " node(s) have no membership above the threshold\n";
        std::cout << "fit " << g.n_nodes() << " nodes in "
                  << fit.timings.preprocessing + fit.timings.stgd + fit.timings.postprocessing << " s\n";
    } else {
        const fs::path mu = out.add("mu_hat.txt");
        out.claim();
        auto corpus = in_stage("load", [&] { return std::make_shared<const Corpus>(load_bag_of_words(cfg.input)); });
        if (corpus->skipped_docs) std::cerr << "warning: skipped " << corpus->skipped_docs << " short document(s)\n";
        TopicFitOptions opt;
        opt.k = cfg.k;
        opt.alpha0 = cfg.alpha0;
        opt.scaling = cfg.scaling;
        opt.word_repeat_correction = cfg.word_repeat_correction;
        opt.seed = cfg.seed;
        opt.whitening.method = cfg.whitening;
        opt.whitening.power_iterations = cfg.power_iterations;
        opt.stgd = cfg.stgd;
        opt.stgd.trace_path = cfg.trace;
        opt.stgd.workers = resolve_workers(cfg.workers);
        TopicFit fit = in_stage("fit", [&] { return fit_topics(corpus, opt); });
        write_dense(fit.estimate.mu_hat, mu.string());
        write_column(fit.estimate.alpha_hat, alpha.string());
        run.set("documents", corpus->n_docs());
        run.set("whitening_residual", fit.whitening_residual);
        record_eigen(run, "", fit.eigen);
        record_timings(run, fit.timings);
        std::cout << "fit " << corpus->n_docs() << " documents in "
                  << fit.timings.preprocessing + fit.timings.stgd + fit.timings.postprocessing << " s\n";
    }
    write_manifest(cfg, run, manifest.string());
    return 0;
}

void write_pvalues(const PvalMatrix& pv, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path.string() + "'");
    out << "truth,estimate,t_stat,p_value\n" << std::setprecision(12);
    for (Index i = 0; i < pv.values.rows(); ++i)
        for (Index j = 0; j < pv.values.cols(); ++j)
            out << i << ',' << j << ',' << pv.t_stats(i, j) << ',' << pv.values(i, j) << '\n';
}

void write_bridgeness(const Bridgeness& b, const std::vector<std::string>& ids, const std::vector<Index>& nodes,
                      const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path.string() + "'");
    out << "node,bridgeness,degree_corrected\n" << std::setprecision(12);
    for (std::size_t c = 0; c < nodes.size(); ++c)
        out << ids[static_cast<std::size_t>(nodes[c])] << ',' << b.b(static_cast<Index>(c)) << ','
            << b.B(static_cast<Index>(c)) << '\n';
}

void fill_report(KeyValueReport& r, const ValidationReport& v) {
    r.set("k", v.match.k);
    r.set("k_hat", v.match.k_hat);
    r.set("p_threshold", v.match.p_threshold);
    r.set("fdr_adjusted", v.match.fdr_adjusted);
    r.set("match_edges", static_cast<Index>(v.match.edges.size()));
    r.set("recovery_ratio", v.recovery_ratio);
    r.set("average_error", v.avg_error);
    r.set("nmi_overlap", v.nmi.value);
    r.set("nmi_degenerate_rows", v.nmi.degenerate_rows);
    r.set("undefined_correlations", static_cast<Index>(v.pvals.undefined.size()));
    if (v.bridge.b.size()) {
        r.set("mean_bridgeness", v.bridge.b.mean());
        r.set("max_bridgeness", v.bridge.b.maxCoeff());
    }
}

Matrix columns(const Matrix& M, const std::vector<Index>& cols) {
    Matrix out(M.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = M.col(cols[c]);
    return out;
}

/// Ground truth is stored densely in generator order; node ids in the graph are those indices.
Matrix truth_columns(const Matrix& dense, const std::vector<std::string>& ids) {
    Matrix out(dense.rows(), static_cast<Index>(ids.size()));
    for (std::size_t c = 0; c < ids.size(); ++c) {
        long long j;
        if (!detail::parse_long(ids[c], j) || j < 0 || j >= dense.cols())
            throw ValidationError("node '" + ids[c] + "' has no column in the ground truth");
        out.col(static_cast<Index>(c)) = dense.col(static_cast<Index>(j));
    }
    return out;
}

int cmd_validate(const RunConfig& cfg) {
    require(cfg.truth, "truth");
    require(cfg.estimate, "estimate");
    Outputs out{cfg.output, cfg.force};
    const fs::path report = out.add("report.txt"), pvalues = out.add("pvalues.csv");
    const fs::path bridge = cfg.mode == Mode::community ? out.add("bridgeness.csv") : fs::path{};
    const fs::path sweep = cfg.threshold_sweep.empty() ? fs::path{} : out.add("threshold_sweep.csv");
    out.claim();
    const int workers = resolve_workers(cfg.workers);
    KeyValueReport r;
    std::vector<Index> nodes;
    Matrix truth, estimate;
    Vector degrees;
    std::vector<std::string> ids;
    in_stage("load", [&] {
        if (cfg.mode == Mode::community) {
            require(cfg.graph, "graph");
            SparseGraph g = load_edge_list(cfg.graph, load_options(cfg));
            ids = g.external_ids;
            const Index compared = g.bipartite_split ? *g.bipartite_split : g.n_nodes();
            for (Index i = 0; i < compared; ++i) nodes.push_back(i);
            truth = columns(truth_columns(read_dense(cfg.truth), ids), nodes);
            estimate = columns(read_memberships(cfg.estimate, ids), nodes);
            degrees = g.degrees()(Eigen::seqN(0, compared));
        } else {
            // Topics are compared as k x d "memberships" of words.
            truth = read_dense(cfg.truth).transpose();
            estimate = read_dense(cfg.estimate).transpose();
            if (truth.cols() != estimate.cols()) throw ValidationError("topic matrices have different vocabularies");
        }
        return 0;
    });
    ValidationReport v = in_stage("validate", [&] {
        ValidationReport rep;
        if (cfg.mode == Mode::community) {
            rep = validate(truth, estimate, degrees, cfg.p_threshold, cfg.fdr_q, workers, cfg.threshold);
        } else {
            rep.pvals = pvalue_matrix(truth, estimate, workers);
            rep.match = build_match_graph(rep.pvals, cfg.p_threshold, cfg.fdr_q);
            rep.recovery_ratio = recovery_ratio(rep.match, truth.rows());
            rep.avg_error = average_error(rep.match, truth, estimate);
            rep.nmi = nmi_overlap(truth, estimate, 0);
        }
        return rep;
    });
    r.set("mode", cfg.mode == Mode::community ? "community" : "topic");
    r.set("compared_columns", truth.cols());
    fill_report(r, v);
    r.write(report.string());
    write_pvalues(v.pvals, pvalues);
    if (cfg.mode == Mode::community) write_bridgeness(v.bridge, ids, nodes, bridge);
    if (!sweep.empty()) {
        std::ofstream s(sweep);
        if (!s) throw FileError("cannot write '" + sweep.string() + "'");
        s << "threshold,recovery_ratio,average_error,nmi_overlap,zero_columns\n" << std::setprecision(12);
        for (double t : cfg.threshold_sweep) {
            Matrix e = estimate;
            const Index zero = threshold_memberships(e, t);
            ValidationReport vt = validate(truth, e, degrees.size() ? degrees : Vector::Ones(e.cols()),
                                           cfg.p_threshold, cfg.fdr_q, workers, t);
            s << t << ',' << vt.recovery_ratio << ',' << vt.avg_error << ',' << vt.nmi.value << ',' << zero << '\n';
        }
    }
    std::cout << "recovery_ratio: " << v.recovery_ratio << "\naverage_error: " << v.avg_error
              << "\nnmi_overlap: " << v.nmi.value << '\n';
    return 0;
}

/// Prints a manifest and, when present alongside it, a validation report.
int cmd_report(const RunConfig& cfg) {
    require(cfg.input, "input");
    const fs::path dir = cfg.input;
    bool any = false;
    if (fs::exists(dir / "manifest.txt")) {
        any = true;
        std::cout << "# run\n";
        read_manifest_results((dir / "manifest.txt").string()).write(std::cout);
    }
    if (fs::exists(dir / "report.txt")) {
        any = true;
        std::cout << "# validation\n";
        KeyValueReport::read((dir / "report.txt").string()).write(std::cout);
    }
    if (fs::exists(dir / "threshold_sweep.csv")) {
        any = true;
        std::cout << "# threshold sweep\n" << std::ifstream(dir / "threshold_sweep.csv").rdbuf();
    }
    if (!any) throw FileError("no manifest or report found in '" + dir.string() + "'");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Moment-tensor community and topic detection"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool force = false;
    std::string sweep, trace, input, output, truth, estimate, graph;
    std::vector<std::string> overrides;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--workers", workers, "worker threads (default: TENSORCD_WORKERS or all cores)");
        sub->add_flag("--force", force, "overwrite existing outputs");
        sub->add_option("--set", overrides, "extra key=value setting, repeatable");
        sub->add_option("--input", input, "input edge list, corpus, or run directory");
        sub->add_option("--output", output, "output directory");
    };
    auto* gen = app.add_subcommand("generate", "write a synthetic graph or corpus with its ground truth");
    auto* fit = app.add_subcommand("fit", "estimate memberships or topics");
    auto* val = app.add_subcommand("validate", "compare an estimate with ground truth");
    auto* rep = app.add_subcommand("report", "summarize a run directory");
    for (auto* s : {gen, fit, val, rep}) common(s);
    for (auto* s : {fit, val})
        s->add_option("--threshold-sweep", sweep, "comma-separated membership thresholds");
    fit->add_option("--trace", trace, "per-epoch STGD trace CSV");
    val->add_option("--truth", truth, "ground truth file");
    val->add_option("--estimate", estimate, "estimate file");
    val->add_option("--graph", graph, "edge list defining nodes and degrees");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
        }
        if (seed) cfg.seed = *seed;
        if (workers) cfg.workers = *workers;
        if (!sweep.empty()) cfg.set("threshold_sweep", sweep);
        if (!trace.empty()) cfg.trace = trace;
        if (!input.empty()) cfg.input = input;
        if (!output.empty()) cfg.output = output;
        if (!truth.empty()) cfg.truth = truth;
        if (!estimate.empty()) cfg.estimate = estimate;
        if (!graph.empty()) cfg.graph = graph;
        cfg.force = force;
        cfg.check();
        if (gen->parsed()) return cmd_generate(cfg);
        if (fit->parsed()) return cmd_fit(cfg);
        if (val->parsed()) return cmd_validate(cfg);
        return cmd_report(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
