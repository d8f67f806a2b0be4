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

#include "contraflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "contraflow/errors.hpp"

namespace contraflow {

Mat sym_part(const Mat& a) {
    if (a.rows() != a.cols()) {
        throw DimensionError("sym_part: matrix is " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + ", expected square");
    }
    Mat s(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        s(i, i) = a(i, i);
        for (Index j = i + 1; j < a.cols(); ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

namespace {

void check_symmetric(const Mat& s) {
    if (s.rows() != s.cols()) {
        throw DimensionError("eig_sym: matrix is not square");
    }
    if (s.rows() > 16) {
        throw DimensionError("eig_sym: dimension " + std::to_string(s.rows()) + " exceeds 16");
    }
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    for (Index i = 0; i < s.rows(); ++i) {
        for (Index j = i + 1; j < s.cols(); ++j) {
            if (std::abs(s(i, j) - s(j, i)) > 1e-10 * scale) {
                throw ContractViolation("eig_sym: input is not symmetric at (" + std::to_string(i) +
                                        "," + std::to_string(j) + ")");
            }
        }
    }
}

SymEigen eig2(const Mat& s) {
    const double a = s(0, 0);
    const double b = 0.5 * (s(0, 1) + s(1, 0));
    const double c = s(1, 1);
    const double mean = 0.5 * (a + c);
    const double radius = std::hypot(0.5 * (a - c), b);
    const double theta = 0.5 * std::atan2(2.0 * b, a - c);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    SymEigen out{Vec(2), Mat(2, 2)};
    out.values << mean - radius, mean + radius;
    // (ct, st) spans the eigenspace of the larger eigenvalue.
    out.vectors << -st, ct, ct, st;
    return out;
}

SymEigen jacobi(const Mat& s) {
    const Index n = s.rows();
    Mat a = sym_part(s);
    Mat v = Mat::Identity(n, n);
    const double scale = a.norm();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Index p = 0; p < n; ++p) {
            for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (std::sqrt(off) <= 1e-16 * scale || off == 0.0) break;
        for (Index p = 0; p < n; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                // Stable rotation angle (Golub & Van Loan, sym.schur2).
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) < a(j, j); });
    SymEigen out{Vec(n), Mat(n, n)};
    for (Index i = 0; i < n; ++i) {
        out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace

SymEigen eig_sym(const Mat& s) {
    check_symmetric(s);
    if (s.rows() == 1) return SymEigen{Vec::Constant(1, s(0, 0)), Mat::Identity(1, 1)};
    if (s.rows() == 2) return eig2(s);
    return jacobi(s);
}

Vec eigvals_sym(const Mat& s) { return eig_sym(s).values; }

Quadrature quadrature_nodes(QuadratureScheme scheme, int n) {
    if (n < 1) throw ArgumentError("quadrature_nodes: n must be >= 1, got " + std::to_string(n));
    Quadrature q{scheme, Vec(n), Vec(n)};
    if (scheme == QuadratureScheme::Midpoint) {
        for (int i = 0; i < n; ++i) {
            q.nodes(i) = (i + 0.5) / n;
            q.weights(i) = 1.0 / n;
        }
        return q;
    }
    // Newton iteration on the Legendre polynomial P_n, roots on [-1, 1].
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged root for the weight
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x_i are descending; store ascending nodes on [0, 1]
        q.nodes(i) = 0.5 * (1.0 - x);
        q.nodes(n - 1 - i) = 0.5 * (1.0 + x);
        q.weights(i) = 0.5 * w;
        q.weights(n - 1 - i) = 0.5 * w;
    }
    if (n % 2 == 1) q.nodes(n / 2) = 0.5;
    return q;
}

Mat finite_diff_jacobian(const VecFn& f, const Vec& x, double h) {
    if (!(h > 0.0)) throw ArgumentError("finite_diff_jacobian: h must be positive");
    const Vec f0 = f(x);
    require_finite(f0, "finite_diff_jacobian: f(x)");
    Mat jac(f0.size(), x.size());
    Vec xp = x;
    for (Index j = 0; j < x.size(); ++j) {
        xp(j) = x(j) + h;
        const Vec fp = f(xp);
        xp(j) = x(j) - h;
        const Vec fm = f(xp);
        xp(j) = x(j);
        if (!all_finite(fp) || !all_finite(fm)) {
            throw NumericError("finite_diff_jacobian: f returned a non-finite value along coordinate " +
                               std::to_string(j));
        }
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite value");
}

Mat reshape_row_major(const Vec& flat, Index rows, Index cols) {
    if (flat.size() != rows * cols) throw DimensionError("reshape_row_major: size mismatch");
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = flat(i * cols + j);
    }
    return m;
}

}  // namespace contraflow
