#pragma once

#include "errors.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tensorcd {

struct LoadOptions {
    bool directed = false;
    bool weighted = false;
    bool bipartite = false;
};

/// Observed network in CSR form. Internal ids are compact; external_ids[i] is the id
/// node i carried in the input file.
struct SparseGraph {
    SparseRows adjacency;
    bool directed = false;
    std::optional<Index> bipartite_split;
    std::vector<std::string> external_ids;
    Index self_loops_dropped = 0;

    Index n_nodes() const { return adjacency.rows(); }
    Index n_entries() const { return adjacency.nonZeros(); }

    /// Number of stored neighbours per node.
    Vector degrees() const {
        Vector d(n_nodes());
        for (Index i = 0; i < n_nodes(); ++i)
            d(i) = static_cast<double>(adjacency.outerIndexPtr()[i + 1] - adjacency.outerIndexPtr()[i]);
        return d;
    }
};

struct Corpus {
    SparseRows freq;  ///< n_docs x vocab_size word counts
    Index vocab_size = 0;
    Index skipped_docs = 0;
    std::vector<Index> doc_ids;  ///< 1-based id from the input for each kept row

    Index n_docs() const { return freq.rows(); }
};

struct NodePartition {
    std::vector<Index> X, A, B, C;
    std::uint64_t seed = 0;
};

enum class NodeSet { X, A, B, C };

inline const char* to_string(NodeSet s) {
    switch (s) {
        case NodeSet::X: return "X";
        case NodeSet::A: return "A";
        case NodeSet::B: return "B";
        case NodeSet::C: return "C";
    }
    return "?";
}

inline const std::vector<Index>& members(const NodePartition& p, NodeSet s) {
    switch (s) {
        case NodeSet::X: return p.X;
        case NodeSet::A: return p.A;
        case NodeSet::B: return p.B;
        default: return p.C;
    }
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& v) {
    std::string tmp(s);
    char* end = nullptr;
    v = std::strtod(tmp.c_str(), &end);
    return end == tmp.c_str() + tmp.size() && !tmp.empty();
}

inline bool parse_long(std::string_view s, long long& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

/// Integer-looking ids sort numerically, everything else lexicographically after them.
inline bool id_less(const std::string& a, const std::string& b) {
    long long x, y;
    bool na = parse_long(a, x), nb = parse_long(b, y);
    if (na && nb) return x < y;
    if (na != nb) return na;
    return a < b;
}

inline std::vector<std::string> compact_ids(std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end(), id_less);
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

}  // namespace detail

/// Builds a graph from (src, dst, weight) entries over internal ids. Undirected inputs are
/// mirrored; duplicates are summed when weighted and collapsed to 1 otherwise.
inline SparseRows assemble_adjacency(Index n, const std::vector<Eigen::Triplet<double, int>>& entries, bool directed,
                                     bool weighted) {
    std::vector<Eigen::Triplet<double, int>> all;
    all.reserve(entries.size() * (directed ? 1 : 2));
    for (const auto& e : entries) {
        all.push_back(e);
        if (!directed && e.row() != e.col()) all.emplace_back(e.col(), e.row(), e.value());
    }
    SparseRows G(n, n);
    if (weighted)
        G.setFromTriplets(all.begin(), all.end());
    else
        G.setFromTriplets(all.begin(), all.end(), [](double, double) { return 1.0; });
    G.makeCompressed();
    return G;
}

inline SparseGraph load_edge_list(std::istream& in, const LoadOptions& opt = {}) {
    struct Raw {
        std::string src, dst;
        double w;
    };
    std::vector<Raw> raw;
    std::string line;
    long lineno = 0;
    Index loops = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tok = detail::split_ws(line);
        if (tok.empty() || tok[0].front() == '#') continue;
        if (tok.size() < 2 || tok.size() > 3) throw ParseError("expected 'src dst [weight]'", lineno);
        double w = 1.0;
        if (tok.size() == 3) {
            if (!detail::parse_double(tok[2], w)) throw ParseError("bad weight '" + std::string(tok[2]) + "'", lineno);
            if (!std::isfinite(w)) throw ParseError("non-finite weight", lineno);
            if (w < 0) throw ValidationError("negative weight on line " + std::to_string(lineno));
            if (!opt.weighted) w = 1.0;
        }
        if (!opt.bipartite && tok[0] == tok[1]) {
            ++loops;
            continue;
        }
        if (w == 0.0) continue;
        raw.push_back({std::string(tok[0]), std::string(tok[1]), w});
    }
    if (raw.empty()) throw ValidationError("edge list contains no edges");

    SparseGraph g;
    g.directed = opt.directed;
    g.self_loops_dropped = loops;
    std::vector<std::string> left, right;
    for (const auto& r : raw) {
        left.push_back(r.src);
        (opt.bipartite ? right : left).push_back(r.dst);
    }
    left = detail::compact_ids(std::move(left));
    right = detail::compact_ids(std::move(right));
    std::unordered_map<std::string, int> lmap, rmap;
    for (std::size_t i = 0; i < left.size(); ++i) lmap.emplace(left[i], static_cast<int>(i));
    const int offset = static_cast<int>(left.size());
    for (std::size_t i = 0; i < right.size(); ++i) rmap.emplace(right[i], offset + static_cast<int>(i));
    g.external_ids = left;
    g.external_ids.insert(g.external_ids.end(), right.begin(), right.end());
    if (opt.bipartite) g.bipartite_split = static_cast<Index>(left.size());

    std::vector<Eigen::Triplet<double, int>> entries;
    entries.reserve(raw.size());
    for (const auto& r : raw)
        entries.emplace_back(lmap.at(r.src), opt.bipartite ? rmap.at(r.dst) : lmap.at(r.dst), r.w);
    g.adjacency = assemble_adjacency(static_cast<Index>(g.external_ids.size()), entries, opt.directed, opt.weighted);
    return g;
}

inline SparseGraph load_edge_list(const std::string& path, const LoadOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open edge list '" + path + "'");
    return load_edge_list(in, opt);
}

/// Writes each stored entry once (upper triangle for undirected graphs) using external ids.
inline void write_edge_list(const SparseGraph& g, std::ostream& out, bool with_weights = true) {
    out << std::setprecision(17);
    for (Index i = 0; i < g.n_nodes(); ++i)
        for (SparseRows::InnerIterator it(g.adjacency, i); it; ++it) {
            if (!g.directed && it.col() < i) continue;
            const auto& s = g.external_ids.empty() ? std::to_string(i) : g.external_ids[i];
            const auto& d = g.external_ids.empty() ? std::to_string(it.col()) : g.external_ids[it.col()];
            out << s << ' ' << d;
            if (with_weights) out << ' ' << it.value();
            out << '\n';
        }
}

inline void write_edge_list(const SparseGraph& g, const std::string& path, bool with_weights = true) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path + "'");
    write_edge_list(g, out, with_weights);
}

inline void write_remap(const SparseGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path + "'");
    for (Index i = 0; i < g.n_nodes(); ++i)
        out << i << ' ' << (g.external_ids.empty() ? std::to_string(i) : g.external_ids[i]) << '\n';
}

inline Corpus load_bag_of_words(std::istream& in) {
    long long header[3];
    std::string line;
    long lineno = 0;
    for (int h = 0; h < 3;) {
        if (!std::getline(in, line)) throw FormatError("truncated header: expected n_docs, vocab_size, nnz");
        ++lineno;
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 1 || !detail::parse_long(tok[0], header[h]) || header[h] < 0)
            throw ParseError("bad header value", lineno);
        ++h;
    }
    const long long n_docs = header[0], vocab = header[1], nnz = header[2];
    if (n_docs == 0) throw ValidationError("corpus declares zero documents");

    std::map<long long, std::vector<std::pair<int, double>>> docs;
    long long seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        long long doc, word, count;
        if (tok.size() != 3 || !detail::parse_long(tok[0], doc) || !detail::parse_long(tok[1], word) ||
            !detail::parse_long(tok[2], count))
            throw ParseError("expected 'docID wordID count'", lineno);
        if (doc < 1 || doc > n_docs) throw ValidationError("docID out of range on line " + std::to_string(lineno));
        if (word < 1 || word > vocab) throw ValidationError("wordID out of range on line " + std::to_string(lineno));
        if (count < 0) throw ValidationError("negative count on line " + std::to_string(lineno));
        ++seen;
        docs[doc].emplace_back(static_cast<int>(word - 1), static_cast<double>(count));
    }
    if (seen != nnz)
        throw FormatError("header declares " + std::to_string(nnz) + " entries, body has " + std::to_string(seen));

    Corpus c;
    c.vocab_size = static_cast<Index>(vocab);
    std::vector<Eigen::Triplet<double, int>> trips;
    int row = 0;
    for (const auto& [id, words] : docs) {
        double total = 0;
        for (const auto& w : words) total += w.second;
        if (total < 3) {
            ++c.skipped_docs;
            continue;
        }
        for (const auto& w : words) trips.emplace_back(row, w.first, w.second);
        c.doc_ids.push_back(static_cast<Index>(id));
        ++row;
    }
    c.skipped_docs += static_cast<Index>(n_docs) - static_cast<Index>(docs.size());
    c.freq.resize(row, c.vocab_size);
    c.freq.setFromTriplets(trips.begin(), trips.end());
    c.freq.makeCompressed();
    return c;
}

inline Corpus load_bag_of_words(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open corpus '" + path + "'");
    return load_bag_of_words(in);
}

inline void write_bag_of_words(const Corpus& c, std::ostream& out) {
    out << c.n_docs() << '\n' << c.vocab_size << '\n' << c.freq.nonZeros() << '\n';
    for (Index d = 0; d < c.n_docs(); ++d)
        for (SparseRows::InnerIterator it(c.freq, d); it; ++it)
            out << d + 1 << ' ' << it.col() + 1 << ' ' << static_cast<long long>(it.value()) << '\n';
}

inline void write_bag_of_words(const Corpus& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path + "'");
    write_bag_of_words(c, out);
}

/// Total word count of every document.
inline Vector document_lengths(const Corpus& c) {
    Vector L(c.n_docs());
    for (Index d = 0; d < c.n_docs(); ++d) {
        double s = 0;
        for (SparseRows::InnerIterator it(c.freq, d); it; ++it) s += it.value();
        L(d) = s;
    }
    return L;
}

/// Fractions are given in (X, A, B, C) order.
using PartitionFractions = std::array<double, 4>;

inline constexpr PartitionFractions kEqualQuarters{0.25, 0.25, 0.25, 0.25};

namespace detail {

inline NodePartition split_nodes(std::vector<Index> nodes, const PartitionFractions& f, std::uint64_t seed, Index k) {
    double total = 0;
    for (double v : f) {
        if (!(v > 0)) throw ConfigError("partition fractions must be positive");
        total += v;
    }
    if (total > 1 + 1e-12) throw ConfigError("partition fractions sum to more than 1");
    Rng rng(seed);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    const double n = static_cast<double>(nodes.size());
    NodePartition p;
    p.seed = seed;
    std::array<std::vector<Index>*, 4> sets{&p.X, &p.A, &p.B, &p.C};
    std::size_t at = 0;
    for (int s = 1; s < 4; ++s) {
        auto size = static_cast<std::size_t>(std::floor(f[s] * n));
        sets[s]->assign(nodes.begin() + at, nodes.begin() + at + size);
        at += size;
    }
    p.X.assign(nodes.begin() + at, nodes.end());
    for (int s = 0; s < 4; ++s) {
        std::sort(sets[s]->begin(), sets[s]->end());
        if (static_cast<Index>(sets[s]->size()) < k)
            throw ConfigError(std::string("partition set ") + to_string(static_cast<NodeSet>(s)) + " has " +
                              std::to_string(sets[s]->size()) + " nodes, fewer than k = " + std::to_string(k));
    }
    return p;
}

}  // namespace detail

/// Random split of [0, n) into X, A, B, C. |A|, |B|, |C| = floor(fraction * n); X takes the rest.
inline NodePartition partition_nodes(Index n_nodes, const PartitionFractions& fractions, std::uint64_t seed, Index k) {
    std::vector<Index> nodes(static_cast<std::size_t>(n_nodes));
    std::iota(nodes.begin(), nodes.end(), Index{0});
    return detail::split_nodes(std::move(nodes), fractions, seed, k);
}

inline NodePartition partition_nodes(const SparseGraph& g, const PartitionFractions& fractions, std::uint64_t seed,
                                     Index k) {
    if (g.bipartite_split) {
        // X is the whole left block; A, B, C split the right block in the given proportions,
        // leftover right nodes going to A.
        const Index nl = *g.bipartite_split;
        std::vector<Index> right(static_cast<std::size_t>(g.n_nodes() - nl));
        std::iota(right.begin(), right.end(), nl);
        for (double v : fractions)
            if (!(v > 0)) throw ConfigError("partition fractions must be positive");
        const double abc = fractions[1] + fractions[2] + fractions[3];
        Rng rng(seed);
        std::shuffle(right.begin(), right.end(), rng);
        NodePartition p;
        p.seed = seed;
        p.X.resize(static_cast<std::size_t>(nl));
        std::iota(p.X.begin(), p.X.end(), Index{0});
        auto nb = static_cast<std::size_t>(std::floor(fractions[2] / abc * static_cast<double>(right.size())));
        auto nc = static_cast<std::size_t>(std::floor(fractions[3] / abc * static_cast<double>(right.size())));
        p.B.assign(right.begin(), right.begin() + nb);
        p.C.assign(right.begin() + nb, right.begin() + nb + nc);
        p.A.assign(right.begin() + nb + nc, right.end());
        std::array<std::vector<Index>*, 4> sets{&p.X, &p.A, &p.B, &p.C};
        for (int s = 0; s < 4; ++s) {
            std::sort(sets[s]->begin(), sets[s]->end());
            if (static_cast<Index>(sets[s]->size()) < k)
                throw ConfigError(std::string("partition set ") + to_string(static_cast<NodeSet>(s)) +
                                  " has fewer than k nodes");
        }
        return p;
    }
    return partition_nodes(g.n_nodes(), fractions, seed, k);
}

}  // namespace tensorcd
