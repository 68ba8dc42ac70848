#pragma once

#include <complex>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace cavqed {

using Complex = std::complex<double>;

template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;

using SparseMatrixXcd = SparseMatrix<Complex>;
using Triplet = Eigen::Triplet<Complex, int>;

inline constexpr Complex kI{0.0, 1.0};

}  // namespace cavqed
