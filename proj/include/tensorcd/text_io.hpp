#pragma once

#include "errors.hpp"
#include "linalg.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace tensorcd {

/// Dense text: header line `rows cols`, then one column per line (column-major order).
inline void write_dense(const Matrix& M, std::ostream& out) {
    out << M.rows() << ' ' << M.cols() << '\n' << std::setprecision(17);
    for (Index j = 0; j < M.cols(); ++j) {
        for (Index i = 0; i < M.rows(); ++i) out << (i ? " " : "") << M(i, j);
        out << '\n';
    }
}

inline void write_dense(const Matrix& M, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path + "'");
    write_dense(M, out);
}

inline Matrix read_dense(std::istream& in) {
    long rows = -1, cols = -1;
    if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw FormatError("dense matrix header must be 'rows cols'");
    Matrix M(rows, cols);
    for (long j = 0; j < cols; ++j)
        for (long i = 0; i < rows; ++i)
            if (!(in >> M(i, j))) throw FormatError("dense matrix body shorter than its header");
    std::string extra;
    if (in >> extra) throw FormatError("dense matrix body longer than its header");
    return M;
}

inline Matrix read_dense(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open '" + path + "'");
    return read_dense(in);
}

/// One value per line.
inline void write_column(const Vector& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path + "'");
    out << std::setprecision(17);
    for (Index i = 0; i < v.size(); ++i) out << v(i) << '\n';
}

inline Vector read_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open '" + path + "'");
    std::vector<double> vals;
    double x;
    while (in >> x) vals.push_back(x);
    if (!in.eof()) throw FormatError("non-numeric entry in '" + path + "'");
    return Eigen::Map<Vector>(vals.data(), static_cast<Index>(vals.size()));
}

/// Sparse memberships: one `community node weight` line per nonzero entry, nodes by external id.
inline void write_memberships(const Matrix& Pi, const std::vector<std::string>& ids, std::ostream& out) {
    if (static_cast<Index>(ids.size()) != Pi.cols()) throw ValidationError("one id per membership column required");
    out << std::setprecision(17);
    for (Index j = 0; j < Pi.cols(); ++j)
        for (Index i = 0; i < Pi.rows(); ++i)
            if (Pi(i, j) != 0) out << i << ' ' << ids[static_cast<std::size_t>(j)] << ' ' << Pi(i, j) << '\n';
}

inline void write_memberships(const Matrix& Pi, const std::vector<std::string>& ids, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write '" + path + "'");
    write_memberships(Pi, ids, out);
}

/// Reads membership triples into a k x ids.size() matrix whose columns follow `ids`. Rows
/// default to one past the largest community index seen. Nodes missing from `ids` are an
/// error unless `skip_unknown` is set.
inline Matrix read_memberships(std::istream& in, const std::vector<std::string>& ids, Index k = 0,
                               bool skip_unknown = false) {
    std::unordered_map<std::string, Index> index;
    for (std::size_t j = 0; j < ids.size(); ++j) index.emplace(ids[j], static_cast<Index>(j));
    struct Entry {
        Index row, col;
        double w;
    };
    std::vector<Entry> entries;
    Index rows = k;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long long c;
        std::string node;
        double w;
        std::string extra;
        if (!(ls >> c >> node >> w) || (ls >> extra)) throw ParseError("expected 'community node weight'", lineno);
        if (c < 0 || (k > 0 && c >= k)) throw ValidationError("community index out of range on line " + std::to_string(lineno));
        auto it = index.find(node);
        if (it == index.end()) {
            if (skip_unknown) continue;
            throw ValidationError("unknown node '" + node + "' on line " + std::to_string(lineno));
        }
        entries.push_back({static_cast<Index>(c), it->second, w});
        if (k == 0) rows = std::max<Index>(rows, static_cast<Index>(c) + 1);
    }
    Matrix Pi = Matrix::Zero(rows, static_cast<Index>(ids.size()));
    for (const auto& e : entries) Pi(e.row, e.col) = e.w;
    return Pi;
}

inline Matrix read_memberships(const std::string& path, const std::vector<std::string>& ids, Index k = 0,
                               bool skip_unknown = false) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open '" + path + "'");
    return read_memberships(in, ids, k, skip_unknown);
}

/// Ordered `key: value` document.
class KeyValueReport {
public:
    template <class T>
    void set(const std::string& key, const T& value) {
        std::ostringstream os;
        os << std::setprecision(12) << value;
        put(key, os.str());
    }
    void set(const std::string& key, const std::string& value) { put(key, value); }
    void set(const std::string& key, const char* value) { put(key, value); }
    void set(const std::string& key, bool value) { put(key, value ? "true" : "false"); }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string get(const std::string& key) const {
        for (const auto& [k, v] : entries_)
            if (k == key) return v;
        throw ValidationError("report has no key '" + key + "'");
    }

    void write(std::ostream& out) const {
        for (const auto& [k, v] : entries_) out << k << ": " << v << '\n';
    }
    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw FileError("cannot write '" + path + "'");
        write(out);
    }

    static KeyValueReport read(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FileError("cannot open '" + path + "'");
        KeyValueReport r;
        std::string line;
        while (std::getline(in, line)) {
            auto c = line.find(": ");
            if (c == std::string::npos) continue;
            r.put(line.substr(0, c), line.substr(c + 2));
        }
        return r;
    }

private:
    void put(const std::string& key, const std::string& value) {
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = value;
                return;
            }
        entries_.emplace_back(key, value);
    }
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace tensorcd
