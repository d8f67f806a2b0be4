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

#include "contraflow/jacobian_field.hpp"

#include <algorithm>
#include <cmath>

#include "contraflow/errors.hpp"

namespace contraflow {

std::string to_string(RegKind kind) {
    switch (kind) {
        case RegKind::Constant:
            return "constant";
        case RegKind::StateIndependentVector:
            return "state-independent";
        case RegKind::StateDependentVector:
            return "state-dependent";
        case RegKind::Eigenvalue:
            return "eigenvalue";
    }
    return "constant";
}

RegKind reg_kind_from_string(const std::string& name) {
    if (name == "constant") return RegKind::Constant;
    if (name == "state-independent") return RegKind::StateIndependentVector;
    if (name == "state-dependent") return RegKind::StateDependentVector;
    if (name == "eigenvalue") return RegKind::Eigenvalue;
    throw ArgumentError("unknown regularization '" + name +
                        "' (constant|state-independent|state-dependent|eigenvalue)");
}

std::string to_string(FieldMode mode) { return mode == FieldMode::Contractive ? "contractive" : "unconstrained"; }

FieldMode field_mode_from_string(const std::string& name) {
    if (name == "contractive") return FieldMode::Contractive;
    if (name == "unconstrained") return FieldMode::Unconstrained;
    throw ArgumentError("unknown field mode '" + name + "' (contractive|unconstrained)");
}

Mat skew_from_components(double a, double b, double c) {
    Mat s(3, 3);
    s << 0.0, -a, b, a, 0.0, -c, -b, c, 0.0;
    return s;
}

Mat negative_definite_from(const Vec& a_flat, const Vec& eps, int dim) {
    const Mat a = reshape_row_major(a_flat, dim, dim);
    Mat j = -(a.transpose() * a);
    for (int i = 0; i < dim; ++i) j(i, i) -= eps(i);
    // A^T A is symmetric in exact arithmetic; force it bitwise.
    return sym_part(j);
}

JacobianField::JacobianField(FieldConfig cfg) : cfg_(std::move(cfg)) { build(); }

JacobianField::JacobianField(FieldConfig cfg, ParamStore store) : cfg_(std::move(cfg)), store_(std::move(store)) {
    const std::size_t before = store_.size();
    build();
    if (store_.size() != before) throw ParseError("JacobianField: parameter store does not match the configuration");
}

void JacobianField::build() {
    const int d = cfg_.state_dim;
    if (d < 1 || d > 16) throw ArgumentError("JacobianField: state_dim must be in [1, 16]");
    if (cfg_.cond_dim < 0) throw ArgumentError("JacobianField: cond_dim must be >= 0");
    if (cfg_.skew && d != 3) {
        throw UnsupportedDimension("skew-symmetric component is only defined for D = 3, got D = " + std::to_string(d));
    }
    const int in = d + cfg_.cond_dim;
    std::vector<int> widths{in};
    widths.insert(widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    widths.push_back(d * d);
    j_net_ = Mlp(store_, "j_net", widths, cfg_.activation);
    if (cfg_.skew) {
        std::vector<int> sw{in};
        sw.insert(sw.end(), cfg_.skew_hidden.begin(), cfg_.skew_hidden.end());
        sw.push_back(3);
        skew_net_ = Mlp(store_, "skew_net", sw, cfg_.activation);
    }
    if (cfg_.reg.kind == RegKind::StateIndependentVector) {
        eps_hat_ = store_.has("eps_hat") ? store_.slice("eps_hat") : store_.add("eps_hat", static_cast<std::size_t>(d));
    }
    if (cfg_.reg.kind == RegKind::StateDependentVector) {
        std::vector<int> gw{d};
        gw.insert(gw.end(), cfg_.reg.g_hidden.begin(), cfg_.reg.g_hidden.end());
        gw.push_back(d);
        g_net_ = Mlp(store_, "g_net", gw, cfg_.activation);
    }
    if (cfg_.reg.kind == RegKind::Eigenvalue && cfg_.reg.reference == EigenReference::Index &&
        (cfg_.reg.reference_index < 0 || cfg_.reg.reference_index >= d)) {
        throw ArgumentError("JacobianField: eigenvalue reference index out of range");
    }
}

void JacobianField::init(Rng& rng) {
    j_net_.init(store_, rng);
    if (skew_net_) skew_net_->init(store_, rng, 0.1);
    if (g_net_) g_net_->init(store_, rng);
    if (eps_hat_) {
        // Symmetric eps_hat is a stationary point of the spread loss, so start
        // from a slightly jittered value around sqrt(eps).
        auto e = store_.segment(*eps_hat_);
        const double base = std::sqrt(cfg_.reg.eps);
        for (Index i = 0; i < e.size(); ++i) e(i) = base * (1.0 + 0.1 * rng.normal());
    }
}

Vec JacobianField::input_of(const Vec& x, const Vec& cond) const {
    if (x.size() != cfg_.state_dim) {
        throw DimensionError("JacobianField: state has dimension " + std::to_string(x.size()) + ", expected " +
                             std::to_string(cfg_.state_dim));
    }
    if (cond.size() != cfg_.cond_dim) {
        throw DimensionError("JacobianField: condition has dimension " + std::to_string(cond.size()) +
                             ", expected " + std::to_string(cfg_.cond_dim));
    }
    if (cfg_.cond_dim == 0) return x;
    Vec in(x.size() + cond.size());
    in << x, cond;
    return in;
}

Mat JacobianField::raw_matrix(const Vec& x, const Vec& cond) const {
    const Vec out = j_net_.forward(store_, input_of(x, cond));
    return reshape_row_major(out, cfg_.state_dim, cfg_.state_dim);
}

Vec JacobianField::eps_vector(const Vec& x) const {
    const int d = cfg_.state_dim;
    switch (cfg_.reg.kind) {
        case RegKind::Constant:
        case RegKind::Eigenvalue:
            return Vec::Constant(d, cfg_.reg.eps);
        case RegKind::StateIndependentVector:
            return (store_.segment(*eps_hat_).array().square() + kEpsFloor).matrix();
        case RegKind::StateDependentVector: {
            if (x.size() != d) throw DimensionError("eps_vector: state dimension mismatch");
            return (g_net_->forward(store_, x).array().square() + kEpsFloor).matrix();
        }
    }
    return Vec::Constant(d, cfg_.reg.eps);
}

Mat JacobianField::nd_jacobian(const Vec& x, const Vec& cond) const {
    if (cfg_.mode != FieldMode::Contractive) {
        throw ContractViolation("nd_jacobian is only available in contractive mode; use raw_matrix");
    }
    const Vec a = j_net_.forward(store_, input_of(x, cond));
    return negative_definite_from(a, eps_vector(x), cfg_.state_dim);
}

Mat JacobianField::skew_matrix(const Vec& x, const Vec& cond) const {
    if (cfg_.state_dim != 3) {
        throw UnsupportedDimension("skew_matrix: only defined for D = 3, got D = " + std::to_string(cfg_.state_dim));
    }
    if (!skew_net_) throw ArgumentError("skew_matrix: no skew network configured");
    const Vec c = skew_net_->forward(store_, input_of(x, cond));
    return skew_from_components(c(0), c(1), c(2));
}

Mat JacobianField::full_jacobian(const Vec& x, const Vec& cond) const {
    Mat j = cfg_.mode == FieldMode::Contractive ? nd_jacobian(x, cond) : raw_matrix(x, cond);
    if (skew_net_) j += skew_matrix(x, cond);
    return j;
}

ContractionStats contraction_stats(const Mat& jac) {
    const Vec lambda = eigvals_sym(sym_part(jac));
    const double hi = lambda(lambda.size() - 1);
    return {hi, std::abs(hi - lambda(0))};
}

ContractionStats JacobianField::contraction_stats(const Vec& x, const Vec& cond) const {
    return contraflow::contraction_stats(full_jacobian(x, cond));
}

std::vector<Mat> JacobianField::full_jacobian_batch(const Mat& inputs) const {
    const int d = cfg_.state_dim;
    const Mat a = j_net_.forward_batch(store_, inputs);
    Mat skew;
    if (skew_net_) skew = skew_net_->forward_batch(store_, inputs);
    Mat g;
    if (g_net_) g = g_net_->forward_batch(store_, inputs.leftCols(d));
    Vec fixed_eps;
    if (!g_net_) fixed_eps = eps_vector(Vec::Zero(d));
    std::vector<Mat> out;
    out.reserve(static_cast<std::size_t>(inputs.rows()));
    for (Index r = 0; r < inputs.rows(); ++r) {
        Mat j;
        if (cfg_.mode == FieldMode::Contractive) {
            const Vec eps = g_net_ ? Vec((g.row(r).array().square() + kEpsFloor).matrix().transpose()) : fixed_eps;
            j = negative_definite_from(a.row(r).transpose(), eps, d);
        } else {
            j = reshape_row_major(a.row(r).transpose(), d, d);
        }
        if (skew_net_) j += skew_from_components(skew(r, 0), skew(r, 1), skew(r, 2));
        out.push_back(std::move(j));
    }
    return out;
}

double JacobianField::reg_loss(const Mat& states, const Mat& conds) const {
    const double beta = cfg_.reg.beta;
    const int d = cfg_.state_dim;
    auto spread_sq = [](const Vec& e) {
        double s = 0.0;
        for (Index n = 1; n < e.size(); ++n) s += (e(0) - e(n)) * (e(0) - e(n));
        return s;
    };
    switch (cfg_.reg.kind) {
        case RegKind::Constant:
            return 0.0;
        case RegKind::StateIndependentVector:
            return -beta * spread_sq(eps_vector(Vec::Zero(d)));
        case RegKind::StateDependentVector: {
            if (states.rows() == 0) return 0.0;
            double acc = 0.0;
            for (Index r = 0; r < states.rows(); ++r) acc += spread_sq(eps_vector(states.row(r).transpose()));
            return -beta * acc / static_cast<double>(states.rows());
        }
        case RegKind::Eigenvalue: {
            if (states.rows() == 0) return 0.0;
            double acc = 0.0;
            for (Index r = 0; r < states.rows(); ++r) {
                const Vec cond = cfg_.cond_dim > 0 ? Vec(conds.row(r).transpose()) : Vec();
                const Vec lambda = eigvals_sym(sym_part(full_jacobian(states.row(r).transpose(), cond)));
                const Index ref = cfg_.reg.reference == EigenReference::Max ? lambda.size() - 1 : cfg_.reg.reference_index;
                for (Index n = 0; n < lambda.size(); ++n) {
                    acc += (lambda(ref) - lambda(n)) * (lambda(ref) - lambda(n));
                }
            }
            return -beta * acc / static_cast<double>(states.rows());
        }
    }
    return 0.0;
}

ad::Var JacobianField::raw_batch(ad::Tape& tape, ad::Var inputs) const { return j_net_.forward(tape, inputs); }

ad::Var JacobianField::eps_batch(ad::Tape& tape, ad::Var states) const {
    const int d = cfg_.state_dim;
    switch (cfg_.reg.kind) {
        case RegKind::StateIndependentVector:
            return ad::add_scalar(ad::square(tape.param(*eps_hat_, 1, d)), kEpsFloor);
        case RegKind::StateDependentVector:
            return ad::add_scalar(ad::square(g_net_->forward(tape, states)), kEpsFloor);
        default:
            return tape.constant(Mat::Constant(1, d, cfg_.reg.eps));
    }
}

ad::Var JacobianField::skew_batch(ad::Tape& tape, ad::Var inputs) const { return skew_net_->forward(tape, inputs); }

ad::Var JacobianField::reg_loss(ad::Tape& tape, ad::Var states, ad::Var inputs) const {
    const double beta = cfg_.reg.beta;
    switch (cfg_.reg.kind) {
        case RegKind::Constant:
            return tape.constant(Mat::Zero(1, 1));
        case RegKind::StateIndependentVector:
        case RegKind::StateDependentVector:
            return ad::spread_loss(eps_batch(tape, states), beta);
        case RegKind::Eigenvalue: {
            // The skew term has no symmetric part, so it does not enter this loss.
            return ad::eigen_spread_loss(raw_batch(tape, inputs), eps_batch(tape, states), beta, cfg_.mode,
                                         cfg_.reg.reference, cfg_.reg.reference_index);
        }
    }
    return tape.constant(Mat::Zero(1, 1));
}

void JacobianField::project(ParamStore& store) const {
    if (!eps_hat_) return;
    auto e = store.segment(*eps_hat_);
    const double cap = cfg_.reg.eps_cap;
    for (Index i = 0; i < e.size(); ++i) e(i) = std::clamp(e(i), -cap, cap);
}

namespace ad {

namespace {

// eps row for output row r: either the single broadcast row or row r.
inline double eps_at(const Mat& eps, Index r, Index j) { return eps.rows() == 1 ? eps(0, j) : eps(r, j); }

}  // namespace

Var apply_jacobian(Var a, Var eps, Var delta, int repeat, FieldMode mode) {
    const Index rows = a.rows();
    const Index d = delta.cols();
    if (a.cols() != d * d) throw DimensionError("apply_jacobian: A width must be D^2");
    if (delta.rows() * repeat != rows) throw DimensionError("apply_jacobian: rows != delta rows * repeat");
    if (mode == FieldMode::Contractive && eps.cols() != d) throw DimensionError("apply_jacobian: eps width");
    if (mode == FieldMode::Contractive && eps.rows() != 1 && eps.rows() != rows) {
        throw DimensionError("apply_jacobian: eps rows");
    }
    return a.tape->record(
        {a, eps, delta},
        [repeat, d, mode](const std::vector<const Mat*>& in) -> Mat {
            const Mat& av = *in[0];
            const Mat& ev = *in[1];
            const Mat& dv = *in[2];
            Mat out(av.rows(), d);
            Vec u(d);
            for (Index r = 0; r < av.rows(); ++r) {
                const Index i = r / repeat;
                for (Index p = 0; p < d; ++p) {
                    double acc = 0.0;
                    for (Index q = 0; q < d; ++q) acc += av(r, p * d + q) * dv(i, q);
                    u(p) = acc;
                }
                if (mode == FieldMode::Unconstrained) {
                    out.row(r) = u.transpose();
                    continue;
                }
                for (Index q = 0; q < d; ++q) {
                    double acc = 0.0;
                    for (Index p = 0; p < d; ++p) acc += av(r, p * d + q) * u(p);
                    out(r, q) = -(acc + eps_at(ev, r, q) * dv(i, q));
                }
            }
            return out;
        },
        [repeat, d, mode](const BackwardArgs& args) {
            const Mat& av = *args.inputs[0];
            const Mat& ev = *args.inputs[1];
            const Mat& dv = *args.inputs[2];
            const Mat& g = args.grad;
            Mat* da = args.input_grads[0];
            Mat* de = args.input_grads[1];
            Mat* dd = args.input_grads[2];
            Vec u(d);
            Vec ag(d);
            for (Index r = 0; r < av.rows(); ++r) {
                const Index i = r / repeat;
                if (mode == FieldMode::Unconstrained) {
                    // y = A d: dA_pq = g_p d_q, dd = A^T g
                    for (Index p = 0; p < d; ++p) {
                        for (Index q = 0; q < d; ++q) {
                            if (da) (*da)(r, p * d + q) += g(r, p) * dv(i, q);
                            if (dd) (*dd)(i, q) += av(r, p * d + q) * g(r, p);
                        }
                    }
                    continue;
                }
                for (Index p = 0; p < d; ++p) {
                    double acc_u = 0.0;
                    double acc_g = 0.0;
                    for (Index q = 0; q < d; ++q) {
                        acc_u += av(r, p * d + q) * dv(i, q);
                        acc_g += av(r, p * d + q) * g(r, q);
                    }
                    u(p) = acc_u;
                    ag(p) = acc_g;
                }
                // y = -(A^T A d + eps . d)
                if (da) {
                    for (Index p = 0; p < d; ++p) {
                        for (Index q = 0; q < d; ++q) (*da)(r, p * d + q) -= u(p) * g(r, q) + ag(p) * dv(i, q);
                    }
                }
                if (dd) {
                    for (Index q = 0; q < d; ++q) {
                        double acc = 0.0;
                        for (Index p = 0; p < d; ++p) acc += av(r, p * d + q) * ag(p);
                        (*dd)(i, q) -= acc + eps_at(ev, r, q) * g(r, q);
                    }
                }
                if (de) {
                    const Index er = de->rows() == 1 ? 0 : r;
                    for (Index q = 0; q < d; ++q) (*de)(er, q) -= g(r, q) * dv(i, q);
                }
            }
        },
        "apply_jacobian");
}

Var apply_skew(Var comps, Var delta, int repeat) {
    if (comps.cols() != 3 || delta.cols() != 3) throw DimensionError("apply_skew: needs 3 components and D = 3");
    if (delta.rows() * repeat != comps.rows()) throw DimensionError("apply_skew: rows != delta rows * repeat");
    return comps.tape->record(
        {comps, delta},
        [repeat](const std::vector<const Mat*>& in) -> Mat {
            const Mat& c = *in[0];
            const Mat& dv = *in[1];
            Mat out(c.rows(), 3);
            for (Index r = 0; r < c.rows(); ++r) {
                const Index i = r / repeat;
                const double a = c(r, 0), b = c(r, 1), cc = c(r, 2);
                out(r, 0) = -a * dv(i, 1) + b * dv(i, 2);
                out(r, 1) = a * dv(i, 0) - cc * dv(i, 2);
                out(r, 2) = -b * dv(i, 0) + cc * dv(i, 1);
            }
            return out;
        },
        [repeat](const BackwardArgs& args) {
            const Mat& c = *args.inputs[0];
            const Mat& dv = *args.inputs[1];
            const Mat& g = args.grad;
            for (Index r = 0; r < c.rows(); ++r) {
                const Index i = r / repeat;
                if (args.input_grads[0]) {
                    Mat& dc = *args.input_grads[0];
                    dc(r, 0) += -g(r, 0) * dv(i, 1) + g(r, 1) * dv(i, 0);
                    dc(r, 1) += g(r, 0) * dv(i, 2) - g(r, 2) * dv(i, 0);
                    dc(r, 2) += -g(r, 1) * dv(i, 2) + g(r, 2) * dv(i, 1);
                }
                if (args.input_grads[1]) {
                    // S^T g = -S g
                    Mat& dd = *args.input_grads[1];
                    const double a = c(r, 0), b = c(r, 1), cc = c(r, 2);
                    dd(i, 0) += a * g(r, 1) - b * g(r, 2);
                    dd(i, 1) += -a * g(r, 0) + cc * g(r, 2);
                    dd(i, 2) += b * g(r, 0) - cc * g(r, 1);
                }
            }
        },
        "apply_skew");
}

Var spread_loss(Var eps, double beta) {
    return eps.tape->record(
        {eps},
        [beta](const std::vector<const Mat*>& in) -> Mat {
            const Mat& e = *in[0];
            double acc = 0.0;
            for (Index r = 0; r < e.rows(); ++r) {
                for (Index n = 1; n < e.cols(); ++n) acc += (e(r, 0) - e(r, n)) * (e(r, 0) - e(r, n));
            }
            return Mat::Constant(1, 1, -beta * acc / static_cast<double>(e.rows()));
        },
        [beta](const BackwardArgs& args) {
            if (!args.input_grads[0]) return;
            const Mat& e = *args.inputs[0];
            Mat& de = *args.input_grads[0];
            const double k = -2.0 * beta * args.grad(0, 0) / static_cast<double>(e.rows());
            for (Index r = 0; r < e.rows(); ++r) {
                for (Index n = 1; n < e.cols(); ++n) {
                    const double diff = e(r, 0) - e(r, n);
                    de(r, 0) += k * diff;
                    de(r, n) -= k * diff;
                }
            }
        },
        "spread_loss");
}

namespace {

Mat symmetric_from_row(const Mat& a, const Mat& eps, Index r, Index d, FieldMode mode) {
    const Vec flat = a.row(r).transpose();
    if (mode == FieldMode::Unconstrained) return sym_part(reshape_row_major(flat, d, d));
    Vec e(d);
    for (Index j = 0; j < d; ++j) e(j) = eps_at(eps, r, j);
    return negative_definite_from(flat, e, static_cast<int>(d));
}

}  // namespace

Var eigen_spread_loss(Var a, Var eps, double beta, FieldMode mode, EigenReference ref, int ref_index) {
    const Index d = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(a.cols()))));
    if (d * d != a.cols()) throw DimensionError("eigen_spread_loss: A width is not a square");
    auto ref_of = [ref, ref_index, d]() -> Index { return ref == EigenReference::Max ? d - 1 : ref_index; };
    return a.tape->record(
        {a, eps},
        [=](const std::vector<const Mat*>& in) -> Mat {
            double acc = 0.0;
            for (Index r = 0; r < in[0]->rows(); ++r) {
                const Vec lambda = eigvals_sym(symmetric_from_row(*in[0], *in[1], r, d, mode));
                const Index k = ref_of();
                for (Index n = 0; n < d; ++n) acc += (lambda(k) - lambda(n)) * (lambda(k) - lambda(n));
            }
            return Mat::Constant(1, 1, -beta * acc / static_cast<double>(in[0]->rows()));
        },
        [=](const BackwardArgs& args) {
            const Mat& av = *args.inputs[0];
            const Mat& ev = *args.inputs[1];
            const double scale = -beta * args.grad(0, 0) / static_cast<double>(av.rows());
            for (Index r = 0; r < av.rows(); ++r) {
                const SymEigen es = eig_sym(symmetric_from_row(av, ev, r, d, mode));
                const Index k = ref_of();
                Vec coeff = Vec::Zero(d);
                for (Index n = 0; n < d; ++n) {
                    if (n == k) continue;
                    const double diff = es.values(k) - es.values(n);
                    coeff(k) += 2.0 * diff;
                    coeff(n) -= 2.0 * diff;
                }
                coeff *= scale;
                // Repeated eigenvalues share the mean coefficient over their cluster.
                Mat ds = Mat::Zero(d, d);
                Index start = 0;
                while (start < d) {
                    Index end = start + 1;
                    while (end < d && es.values(end) - es.values(end - 1) < 1e-8) ++end;
                    const double c = coeff.segment(start, end - start).mean();
                    for (Index n = start; n < end; ++n) ds += c * es.vectors.col(n) * es.vectors.col(n).transpose();
                    start = end;
                }
                if (mode == FieldMode::Unconstrained) {
                    if (args.input_grads[0]) {
                        for (Index p = 0; p < d; ++p) {
                            for (Index q = 0; q < d; ++q) (*args.input_grads[0])(r, p * d + q) += ds(p, q);
                        }
                    }
                    continue;
                }
                // S = -(A^T A + diag eps): dA = -2 A dS, deps = -diag(dS)
                if (args.input_grads[0]) {
                    const Mat amat = reshape_row_major(av.row(r).transpose(), d, d);
                    const Mat da = -2.0 * amat * ds;
                    for (Index p = 0; p < d; ++p) {
                        for (Index q = 0; q < d; ++q) (*args.input_grads[0])(r, p * d + q) += da(p, q);
                    }
                }
                if (args.input_grads[1]) {
                    const Index er = args.input_grads[1]->rows() == 1 ? 0 : r;
                    for (Index q = 0; q < d; ++q) (*args.input_grads[1])(er, q) -= ds(q, q);
                }
            }
        },
        "eigen_spread_loss");
}

}  // namespace ad
}  // namespace contraflow
