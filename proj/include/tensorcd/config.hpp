#pragma once

#include "errors.hpp"
#include "graph_io.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "stgd.hpp"
#include "synthgen.hpp"
#include "text_io.hpp"
#include "whitening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace tensorcd {

enum class Mode { community, topic };

/// Everything a CLI run needs. Built from `key = value` text with later assignments winning.
struct RunConfig {
    Mode mode = Mode::community;
    Index k = 2;
    double alpha0 = 0;
    EdgeModel model = EdgeModel::bernoulli;
    bool directed = false;
    bool weighted = false;
    std::optional<Index> bipartite_left;  ///< generate: size of the left block

    // generate
    Index n = 1000;
    double p_in = 0.5;
    double p_out = 0.02;
    Index docs = 1000;
    Index vocab = 500;
    Index doc_length = 50;

    // fit
    PartitionFractions fractions = kEqualQuarters;
    WhiteningMethod whitening = WhiteningMethod::tall_thin_svd;
    PseudoinverseMethod pinv = PseudoinverseMethod::randomized;
    int power_iterations = 1;
    StgdConfig stgd;
    TopicScaling scaling = TopicScaling::per_document;
    bool word_repeat_correction = true;
    bool exchange_roles = true;
    double threshold = 0.05;
    std::vector<double> threshold_sweep;

    // validate
    double p_threshold = 0.01;
    std::optional<double> fdr_q;

    std::uint64_t seed = 0;
    int workers = 0;  ///< 0 resolves through TENSORCD_WORKERS or the hardware

    std::string input, output, truth, estimate, graph, trace;
    bool force = false;

    void set(const std::string& key, const std::string& value);
    void load(const std::string& path);
    void check() const;
    KeyValueReport to_report() const;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double to_real(const std::string& key, const std::string& v) {
    double x;
    if (!parse_double(v, x)) throw ConfigError("'" + key + "' needs a number, got '" + v + "'");
    return x;
}

inline long long to_integer(const std::string& key, const std::string& v) {
    long long x;
    if (!parse_long(v, x)) throw ConfigError("'" + key + "' needs an integer, got '" + v + "'");
    return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("'" + key + "' needs true or false, got '" + v + "'");
}

inline std::vector<double> to_reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_real(key, trim(item)));
    return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
    std::ostringstream os;
    os << std::setprecision(12);
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
    return os.str();
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string v = trim(raw);
    if (key == "mode") {
        if (v == "community") mode = Mode::community;
        else if (v == "topic") mode = Mode::topic;
        else throw ConfigError("mode must be community or topic");
    } else if (key == "k") {
        k = to_integer(key, v);
    } else if (key == "alpha0") {
        alpha0 = to_real(key, v);
    } else if (key == "model") {
        if (v == "bernoulli") model = EdgeModel::bernoulli;
        else if (v == "poisson") model = EdgeModel::poisson;
        else throw ConfigError("model must be bernoulli or poisson");
    } else if (key == "directed") {
        directed = to_bool(key, v);
    } else if (key == "weighted") {
        weighted = to_bool(key, v);
    } else if (key == "bipartite_left") {
        if (v.empty() || v == "none") bipartite_left.reset();
        else bipartite_left = to_integer(key, v);
    } else if (key == "n") {
        n = to_integer(key, v);
    } else if (key == "p_in") {
        p_in = to_real(key, v);
    } else if (key == "p_out") {
        p_out = to_real(key, v);
    } else if (key == "docs") {
        docs = to_integer(key, v);
    } else if (key == "vocab") {
        vocab = to_integer(key, v);
    } else if (key == "doc_length") {
        doc_length = to_integer(key, v);
    } else if (key == "fractions") {
        auto f = to_reals(key, v);
        if (f.size() != 4) throw ConfigError("fractions needs four values for X, A, B, C");
        std::copy(f.begin(), f.end(), fractions.begin());
    } else if (key == "whitening") {
        if (v == "tall-thin-svd") whitening = WhiteningMethod::tall_thin_svd;
        else if (v == "tall-thin-qr") whitening = WhiteningMethod::tall_thin_qr;
        else if (v == "exact-small") whitening = WhiteningMethod::exact_small;
        else throw ConfigError("whitening must be tall-thin-svd, tall-thin-qr or exact-small");
    } else if (key == "pinv") {
        if (v == "randomized") pinv = PseudoinverseMethod::randomized;
        else if (v == "lanczos") pinv = PseudoinverseMethod::lanczos;
        else throw ConfigError("pinv must be randomized or lanczos");
    } else if (key == "power_iterations") {
        power_iterations = static_cast<int>(to_integer(key, v));
    } else if (key == "theta") {
        stgd.theta = to_real(key, v);
    } else if (key == "learn_rate_0") {
        stgd.learn_rate_0 = to_real(key, v);
    } else if (key == "decay_tau") {
        stgd.decay_tau = to_real(key, v);
    } else if (key == "max_epochs") {
        stgd.max_epochs = to_integer(key, v);
    } else if (key == "batch") {
        stgd.batch = to_integer(key, v);
    } else if (key == "tol") {
        stgd.tol = to_real(key, v);
    } else if (key == "shifted") {
        if (v == "auto") stgd.shifted.reset();
        else stgd.shifted = to_bool(key, v);
    } else if (key == "shift_sign") {
        if (v == "centered") stgd.shift_sign = ShiftSign::centered;
        else if (v == "additive") stgd.shift_sign = ShiftSign::additive;
        else throw ConfigError("shift_sign must be centered or additive");
    } else if (key == "shift_form") {
        if (v == "gradient") stgd.shift_form = ShiftForm::gradient;
        else if (v == "printed") stgd.shift_form = ShiftForm::printed;
        else throw ConfigError("shift_form must be gradient or printed");
    } else if (key == "reseed_fraction") {
        stgd.reseed_fraction = to_real(key, v);
    } else if (key == "reseed_cosine") {
        stgd.reseed_cosine = to_real(key, v);
    } else if (key == "max_step") {
        stgd.max_step = to_real(key, v);
    } else if (key == "scaling") {
        if (v == "per-document") scaling = TopicScaling::per_document;
        else if (v == "raw-counts") scaling = TopicScaling::raw_counts;
        else throw ConfigError("scaling must be per-document or raw-counts");
    } else if (key == "word_repeat_correction") {
        word_repeat_correction = to_bool(key, v);
    } else if (key == "exchange_roles") {
        exchange_roles = to_bool(key, v);
    } else if (key == "threshold") {
        threshold = to_real(key, v);
    } else if (key == "threshold_sweep") {
        threshold_sweep = v.empty() ? std::vector<double>{} : to_reals(key, v);
    } else if (key == "p_threshold") {
        p_threshold = to_real(key, v);
    } else if (key == "fdr_q") {
        if (v.empty() || v == "none") fdr_q.reset();
        else fdr_q = to_real(key, v);
    } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(to_integer(key, v));
    } else if (key == "workers") {
        workers = static_cast<int>(to_integer(key, v));
    } else if (key == "input") {
        input = v;
    } else if (key == "output") {
        output = v;
    } else if (key == "truth") {
        truth = v;
    } else if (key == "estimate") {
        estimate = v;
    } else if (key == "graph") {
        graph = v;
    } else if (key == "trace") {
        trace = v;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

/// Reads `key = value` lines; `#` starts a comment. Keys under `run.` are skipped, so a
/// manifest written by write_manifest loads back as the config that produced it.
inline void RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open config '" + path + "'");
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.rfind("run.", 0) == 0) continue;  // manifest results, not settings
        set(key, line.substr(eq + 1));
    }
}

inline void RunConfig::check() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (alpha0 < 0) throw ConfigError("alpha0 must be nonnegative");
    if (threshold < 0 || threshold > 1) throw ConfigError("threshold must lie in [0, 1]");
    for (double t : threshold_sweep)
        if (t < 0 || t > 1) throw ConfigError("threshold_sweep values must lie in [0, 1]");
    if (p_threshold <= 0 || p_threshold >= 1) throw ConfigError("p_threshold must lie in (0, 1)");
    if (fdr_q && (*fdr_q <= 0 || *fdr_q >= 1)) throw ConfigError("fdr_q must lie in (0, 1)");
    if (stgd.theta <= 0) throw ConfigError("theta must be positive");
    if (stgd.learn_rate_0 < 0) throw ConfigError("learn_rate_0 must be positive (0 selects the default)");
    if (stgd.batch < 1) throw ConfigError("batch must be at least 1");
    if (stgd.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    double total = 0;
    for (double f : fractions) {
        if (f < 0) throw ConfigError("fractions must be nonnegative");
        total += f;
    }
    if (std::abs(total - 1) > 1e-9) throw ConfigError("fractions must sum to 1");
    std::set<std::string> seen;
    for (const auto* p : {&input, &output, &truth, &estimate, &graph, &trace})
        if (!p->empty() && !seen.insert(*p).second) throw ConfigError("path '" + *p + "' is used twice");
}

inline KeyValueReport RunConfig::to_report() const {
    KeyValueReport r;
    r.set("mode", mode == Mode::community ? "community" : "topic");
    r.set("k", k);
    r.set("alpha0", alpha0);
    r.set("model", model == EdgeModel::bernoulli ? "bernoulli" : "poisson");
    r.set("directed", directed);
    r.set("weighted", weighted);
    r.set("bipartite_left", bipartite_left ? std::to_string(*bipartite_left) : std::string("none"));
    r.set("n", n);
    r.set("p_in", p_in);
    r.set("p_out", p_out);
    r.set("docs", docs);
    r.set("vocab", vocab);
    r.set("doc_length", doc_length);
    r.set("fractions", detail::join(std::vector<double>(fractions.begin(), fractions.end())));
    r.set("whitening", to_string(whitening));
    r.set("pinv", pinv == PseudoinverseMethod::randomized ? "randomized" : "lanczos");
    r.set("power_iterations", power_iterations);
    r.set("theta", stgd.theta);
    r.set("learn_rate_0", stgd.learn_rate_0);
    r.set("decay_tau", stgd.decay_tau);
    r.set("max_epochs", stgd.max_epochs);
    r.set("batch", stgd.batch);
    r.set("tol", stgd.tol);
    r.set("shifted", stgd.shifted ? (*stgd.shifted ? "true" : "false") : "auto");
    r.set("shift_sign", stgd.shift_sign == ShiftSign::centered ? "centered" : "additive");
    r.set("shift_form", stgd.shift_form == ShiftForm::gradient ? "gradient" : "printed");
    r.set("reseed_fraction", stgd.reseed_fraction);
    r.set("reseed_cosine", stgd.reseed_cosine);
    r.set("max_step", stgd.max_step);
    r.set("scaling", scaling == TopicScaling::per_document ? "per-document" : "raw-counts");
    r.set("word_repeat_correction", word_repeat_correction);
    r.set("exchange_roles", exchange_roles);
    r.set("threshold", threshold);
    r.set("threshold_sweep", detail::join(threshold_sweep));
    r.set("p_threshold", p_threshold);
    r.set("fdr_q", fdr_q ? std::to_string(*fdr_q) : std::string("none"));
    r.set("seed", std::to_string(seed));
    r.set("workers", resolve_workers(workers));
    r.set("input", input);
    r.set("output", output);
    r.set("truth", truth);
    r.set("estimate", estimate);
    r.set("graph", graph);
    r.set("trace", trace);
    return r;
}

/// Resolved config followed by `run.*` result lines, all as `key = value`.
inline void write_manifest(const RunConfig& cfg, const KeyValueReport& run, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path + "'");
    const KeyValueReport settings = cfg.to_report();
    for (const auto& [k, v] : settings.entries()) out << k << " = " << v << '\n';
    for (const auto& [k, v] : run.entries()) out << "run." << k << " = " << v << '\n';
}

/// `run.*` entries of a manifest, keys without the prefix.
inline KeyValueReport read_manifest_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open manifest '" + path + "'");
    KeyValueReport r;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos || line.rfind("run.", 0) != 0) continue;
        r.set(line.substr(4, eq - 4), line.substr(eq + 3));
    }
    return r;
}

}  // namespace tensorcd
