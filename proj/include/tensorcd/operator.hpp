#pragma once

#include "linalg.hpp"

#include <functional>
#include <memory>

namespace tensorcd {

/// Matrix-free linear map supporting block products with A and A'.
struct LinearOperator {
    Index rows = 0;
    Index cols = 0;
    std::function<Matrix(const Matrix&)> apply;            ///< X (cols x m) -> A X
    std::function<Matrix(const Matrix&)> apply_transpose;  ///< Y (rows x m) -> A' Y
};

template <class SparseT>
LinearOperator make_operator(std::shared_ptr<const SparseT> A) {
    LinearOperator op;
    op.rows = A->rows();
    op.cols = A->cols();
    op.apply = [A](const Matrix& X) -> Matrix { return (*A) * X; };
    op.apply_transpose = [A](const Matrix& Y) -> Matrix { return A->transpose() * Y; };
    return op;
}

inline LinearOperator make_operator(const Matrix& A) {
    auto M = std::make_shared<const Matrix>(A);
    LinearOperator op;
    op.rows = A.rows();
    op.cols = A.cols();
    op.apply = [M](const Matrix& X) -> Matrix { return (*M) * X; };
    op.apply_transpose = [M](const Matrix& Y) -> Matrix { return M->transpose() * Y; };
    return op;
}

/// Truncated singular triplets A ~ U diag(S) V'.
struct TruncatedSvd {
    Matrix U;
    Vector S;
    Matrix V;
    double max_residual = 0;  ///< max_i of max(|A v_i - s_i u_i|, |A' u_i - s_i v_i|)
};

}  // namespace tensorcd
