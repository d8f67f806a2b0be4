/*
 Copyright 2026 The Contraflow Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <functional>
#include <utility>

#include <Eigen/Dense>

namespace contraflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Symmetric part 0.5 * (A + A^T). Throws DimensionError for non-square input.
Mat sym_part(const Mat& a);

struct SymEigen {
    Vec values;   // ascending
    Mat vectors;  // orthonormal columns, vectors.col(i) pairs with values(i)
};

/// Eigendecomposition of a symmetric matrix (D <= 16).
///
/// 2x2 uses the closed form; larger sizes use cyclic Jacobi sweeps. Throws
/// ContractViolation when |S_ij - S_ji| exceeds 1e-10 (relative to max(1, max|S|)).
SymEigen eig_sym(const Mat& s);

/// Eigenvalues only; same algorithm as eig_sym.
Vec eigvals_sym(const Mat& s);

enum class QuadratureScheme { Midpoint, GaussLegendre };

struct Quadrature {
    QuadratureScheme scheme = QuadratureScheme::GaussLegendre;
    Vec nodes;    // in [0, 1]
    Vec weights;  // sum to 1
};

/// Nodes and weights for integrals over [0, 1].
Quadrature quadrature_nodes(QuadratureScheme scheme, int n);

using VecFn = std::function<Vec(const Vec&)>;

inline constexpr double kDefaultFdStep = 1e-5;

/// Central-difference Jacobian of f at x. Throws NumericError if f yields NaN.
Mat finite_diff_jacobian(const VecFn& f, const Vec& x, double h = kDefaultFdStep);

bool all_finite(const Mat& m);
void require_finite(const Mat& m, const char* what);

/// Row-major reshape of a flat vector into rows x cols.
Mat reshape_row_major(const Vec& flat, Index rows, Index cols);

}  // namespace contraflow
