#pragma once

// Dense reference computations used only by the tests: materialized k x k x k tensors and
// finite differences. Nothing here is shared with the library's implicit code paths.

#include <tensorcd/moments.hpp>
#include <tensorcd/stgd.hpp>
#include <tensorcd/whitening.hpp>

#include <vector>

namespace oracle {

using tensorcd::Index;
using tensorcd::Matrix;
using tensorcd::Vector;

/// T[i](j, l) = T_ijl.
struct Tensor3 {
    std::vector<Matrix> slice;

    explicit Tensor3(Index k) : slice(static_cast<std::size_t>(k), Matrix::Zero(k, k)) {}
    Index k() const { return static_cast<Index>(slice.size()); }

    void add_outer(const Vector& a, const Vector& b, const Vector& c, double w) {
        for (Index i = 0; i < k(); ++i) slice[i].noalias() += (w * a(i)) * b * c.transpose();
    }
    /// Adds P (x) c with P a k x k matrix occupying slots (1,2), (1,3) or (2,3).
    void add_pair(const Matrix& P, const Vector& c, int free_slot, double w) {
        for (Index i = 0; i < k(); ++i)
            for (Index j = 0; j < k(); ++j)
                for (Index l = 0; l < k(); ++l) {
                    double v = free_slot == 3 ? P(i, j) * c(l) : free_slot == 2 ? P(i, l) * c(j) : c(i) * P(j, l);
                    slice[i](j, l) += w * v;
                }
    }
    double at(const Vector& a, const Vector& b, const Vector& c) const {
        double s = 0;
        for (Index i = 0; i < k(); ++i) s += a(i) * b.dot(slice[i] * c);
        return s;
    }
    /// Gradient of phi -> T(phi, phi, phi).
    Vector cubic_gradient(const Vector& phi) const {
        Vector g = Vector::Zero(k());
        for (Index i = 0; i < k(); ++i) {
            g(i) += phi.dot(slice[i] * phi);                 // slot 1 free
            g += phi(i) * (slice[i] * phi + slice[i].transpose() * phi);  // slots 2 and 3 free
        }
        return g;
    }
};

/// Materialized tensor the stochastic updates implicitly average over, including the
/// centering terms when the configuration is shifted.
inline Tensor3 materialize(const tensorcd::WhitenedViews& v, const tensorcd::StgdConfig& cfg) {
    const Index k = v.k(), n = v.n_samples();
    const double inv_n = 1.0 / static_cast<double>(n);
    const bool shifted = tensorcd::use_shift(cfg);
    const auto sc = tensorcd::shift_coefficients(cfg.alpha0, cfg.shift_sign);
    Tensor3 T(k);
    if (v.topic) {
        const auto& ts = *v.topic;
        const auto& F = ts.corpus->freq;
        Matrix pair = Matrix::Zero(k, k);
        for (Index t = 0; t < n; ++t) {
            const Vector y = v.yA.col(t);
            const double s2 = ts.scales.second(t), s3 = ts.scales.third(t);
            T.add_outer(y, y, y, s3 * inv_n);
            Matrix P = y * y.transpose();
            for (tensorcd::SparseRows::InnerIterator it(F, t); it; ++it) {
                const Vector w = ts.W.row(it.col()).transpose();
                const double c = it.value();
                if (ts.word_repeat_correction) {
                    T.add_outer(w, w, y, -c * s3 * inv_n);
                    T.add_outer(w, y, w, -c * s3 * inv_n);
                    T.add_outer(y, w, w, -c * s3 * inv_n);
                    T.add_outer(w, w, w, 2 * c * s3 * inv_n);
                    P -= c * w * w.transpose();
                }
            }
            pair += s2 * inv_n * P;
        }
        if (shifted) {
            T.add_outer(v.muA, v.muA, v.muA, sc.triple);
            for (int slot : {1, 2, 3}) T.add_pair(pair, v.muA, slot, sc.cross);
        }
        return T;
    }
    Matrix AB = Matrix::Zero(k, k), AC = Matrix::Zero(k, k), BC = Matrix::Zero(k, k);
    for (Index t = 0; t < n; ++t) {
        const Vector a = v.yA.col(t), b = v.yB.col(t), c = v.yC.col(t);
        T.add_outer(a, b, c, inv_n);
        AB += inv_n * a * b.transpose();
        AC += inv_n * a * c.transpose();
        BC += inv_n * b * c.transpose();
    }
    if (shifted) {
        T.add_outer(v.muA, v.muB, v.muC, sc.triple);
        T.add_pair(AB, v.muC, 3, sc.cross);
        T.add_pair(AC, v.muB, 2, sc.cross);
        T.add_pair(BC, v.muA, 1, sc.cross);
    }
    return T;
}

/// Gradient of theta' sum_ij <phi_i, phi_j>^3 - sum_i T(phi_i, phi_i, phi_i).
inline Matrix batch_gradient(const Tensor3& T, const Matrix& Phi, double theta_prime) {
    const Index k = Phi.cols();
    const Matrix G = Phi.transpose() * Phi;
    Matrix grad(Phi.rows(), k);
    for (Index i = 0; i < k; ++i) {
        Vector g = Vector::Zero(Phi.rows());
        for (Index j = 0; j < k; ++j) g += 6 * theta_prime * G(i, j) * G(i, j) * Phi.col(j);
        grad.col(i) = g - T.cubic_gradient(Phi.col(i));
    }
    return grad;
}

/// Central differences of f at every entry of V.
template <class F>
Matrix central_differences(F&& f, const Matrix& V, double h) {
    Matrix g(V.rows(), V.cols());
    for (Index i = 0; i < V.rows(); ++i)
        for (Index j = 0; j < V.cols(); ++j) {
            Matrix p = V, m = V;
            p(i, j) += h;
            m(i, j) -= h;
            g(i, j) = (f(p) - f(m)) / (2 * h);
        }
    return g;
}

}  // namespace oracle
