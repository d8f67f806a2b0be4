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


#include "contraflow/flows.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "contraflow/errors.hpp"
#include "contraflow/lie_group.hpp"

namespace contraflow {

std::string to_string(CouplingKind kind) { return kind == CouplingKind::Affine ? "affine" : "spline"; }

CouplingKind coupling_from_string(std::string_view name) {
    if (name == "affine") return CouplingKind::Affine;
    if (name == "spline") return CouplingKind::Spline;
    throw ArgumentError("unknown coupling kind '" + std::string(name) + "'");
}

namespace {

// Forward-mode number over the seven local inputs of one spline bin:
// x, left knot x, bin width, left knot y, bin height, left and right derivatives.
struct Local {
    double v = 0.0;
    std::array<double, 7> g{};
};

Local seed(double v, int i) {
    Local out;
    out.v = v;
    out.g[static_cast<std::size_t>(i)] = 1.0;
    return out;
}
Local operator+(const Local& a, const Local& b) {
    Local out{a.v + b.v, {}};
    for (std::size_t i = 0; i < 7; ++i) out.g[i] = a.g[i] + b.g[i];
    return out;
}
Local operator-(const Local& a, const Local& b) {
    Local out{a.v - b.v, {}};
    for (std::size_t i = 0; i < 7; ++i) out.g[i] = a.g[i] - b.g[i];
    return out;
}
Local operator*(const Local& a, const Local& b) {
    Local out{a.v * b.v, {}};
    for (std::size_t i = 0; i < 7; ++i) out.g[i] = a.g[i] * b.v + a.v * b.g[i];
    return out;
}
Local operator/(const Local& a, const Local& b) {
    Local out{a.v / b.v, {}};
    const double inv = 1.0 / (b.v * b.v);
    for (std::size_t i = 0; i < 7; ++i) out.g[i] = (a.g[i] * b.v - a.v * b.g[i]) * inv;
    return out;
}
Local operator*(double s, const Local& a) {
    Local out{s * a.v, {}};
    for (std::size_t i = 0; i < 7; ++i) out.g[i] = s * a.g[i];
    return out;
}
Local operator-(double s, const Local& a) {
    Local out{s - a.v, {}};
    for (std::size_t i = 0; i < 7; ++i) out.g[i] = -a.g[i];
    return out;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Shift making zero raw derivatives map to exactly one.
const double kDerivShift = std::log(std::expm1(1.0 - kMinDerivative));

struct Knots {
    int bins = 0;
    std::vector<double> xs, ys, widths, heights, deriv, pw, ph;
};

void softmax(const double* raw, int n, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(n));
    const double mx = *std::max_element(raw, raw + n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = std::exp(raw[i] - mx);
        total += out[static_cast<std::size_t>(i)];
    }
    for (double& p : out) p /= total;
}

Knots make_knots(const double* raw, const SplineSpec& spec) {
    const int k = spec.bins;
    const double span = 2.0 * spec.bound;
    Knots kn;
    kn.bins = k;
    softmax(raw, k, kn.pw);
    softmax(raw + k, k, kn.ph);
    kn.widths.resize(static_cast<std::size_t>(k));
    kn.heights.resize(static_cast<std::size_t>(k));
    kn.xs.resize(static_cast<std::size_t>(k + 1));
    kn.ys.resize(static_cast<std::size_t>(k + 1));
    kn.deriv.assign(static_cast<std::size_t>(k + 1), 1.0);
    kn.xs[0] = kn.ys[0] = -spec.bound;
    for (int i = 0; i < k; ++i) {
        const auto u = static_cast<std::size_t>(i);
        kn.widths[u] = (kMinBinWidth + (1.0 - k * kMinBinWidth) * kn.pw[u]) * span;
        kn.heights[u] = (kMinBinHeight + (1.0 - k * kMinBinHeight) * kn.ph[u]) * span;
        kn.xs[u + 1] = kn.xs[u] + kn.widths[u];
        kn.ys[u + 1] = kn.ys[u] + kn.heights[u];
    }
    kn.xs[static_cast<std::size_t>(k)] = kn.ys[static_cast<std::size_t>(k)] = spec.bound;
    for (int i = 1; i < k; ++i) {
        kn.deriv[static_cast<std::size_t>(i)] = kMinDerivative + softplus(raw[2 * k + i - 1] + kDerivShift);
    }
    return kn;
}

std::size_t find_bin(const std::vector<double>& edges, double v) {
    const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, v);
    return static_cast<std::size_t>(it - edges.begin()) - 1;
}

void check_spec(const SplineSpec& spec) {
    if (spec.bins < 2) throw ArgumentError("spline: need at least two bins");
    if (!(spec.bound > 0.0)) throw ArgumentError("spline: bound must be positive");
}

}  // namespace

SplineEval rq_spline(double x, const double* raw, const SplineSpec& spec, double* draw) {
    check_spec(spec);
    const int k = spec.bins;
    if (draw) std::fill(draw, draw + spec.raw_size(), 0.0);
    if (x <= -spec.bound || x >= spec.bound) return {x, 1.0};

    const Knots kn = make_knots(raw, spec);
    const std::size_t b = find_bin(kn.xs, x);
    const Local lx = seed(x, 0), xk = seed(kn.xs[b], 1), w = seed(kn.widths[b], 2), yk = seed(kn.ys[b], 3),
                h = seed(kn.heights[b], 4), d0 = seed(kn.deriv[b], 5), d1 = seed(kn.deriv[b + 1], 6);
    const Local xi = (lx - xk) / w;
    const Local s = h / w;
    const Local q = xi * (1.0 - xi);
    const Local num = h * (s * xi * xi + d0 * q);
    const Local den = s + (d0 + d1 - 2.0 * s) * q;
    const Local y = yk + num / den;

    if (draw) {
        const double span = 2.0 * spec.bound;
        const double cw = (1.0 - k * kMinBinWidth) * span;
        const double ch = (1.0 - k * kMinBinHeight) * span;
        // Effective sensitivities to every width/height through the knot positions.
        std::vector<double> gw(static_cast<std::size_t>(k), 0.0), gh(static_cast<std::size_t>(k), 0.0);
        for (std::size_t i = 0; i < b; ++i) {
            gw[i] = y.g[1];
            gh[i] = y.g[3];
        }
        gw[b] = y.g[2];
        gh[b] = y.g[4];
        double mw = 0.0, mh = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
            mw += gw[i] * kn.pw[i];
            mh += gh[i] * kn.ph[i];
        }
        for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
            draw[j] = cw * kn.pw[j] * (gw[j] - mw);
            draw[static_cast<std::size_t>(k) + j] = ch * kn.ph[j] * (gh[j] - mh);
        }
        const auto bi = static_cast<int>(b);
        if (bi >= 1) draw[2 * k + bi - 1] += y.g[5] * sigmoid(raw[2 * k + bi - 1] + kDerivShift);
        if (bi + 1 <= k - 1) draw[2 * k + bi] += y.g[6] * sigmoid(raw[2 * k + bi] + kDerivShift);
    }
    return {y.v, y.g[0]};
}

double rq_spline_inverse(double y, const double* raw, const SplineSpec& spec) {
    check_spec(spec);
    if (y <= -spec.bound || y >= spec.bound) return y;
    const Knots kn = make_knots(raw, spec);
    const std::size_t b = find_bin(kn.ys, y);
    const double w = kn.widths[b], h = kn.heights[b];
    const double s = h / w;
    const double d0 = kn.deriv[b], d1 = kn.deriv[b + 1];
    const double dy = y - kn.ys[b];
    const double mix = d0 + d1 - 2.0 * s;
    const double a = h * (s - d0) + dy * mix;
    const double bb = h * d0 - dy * mix;
    const double c = -s * dy;
    const double disc = std::max(bb * bb - 4.0 * a * c, 0.0);
    const double xi = 2.0 * c / (-bb - std::sqrt(disc));
    return kn.xs[b] + xi * w;
}

ResidualNet::ResidualNet(ParamStore& store, const std::string& prefix, int in, int out, int hidden, int blocks,
                         Activation activation)
    : activation_(activation),
      input_(store, prefix + ".in", {in, hidden}, activation),
      output_(store, prefix + ".out", {hidden, out}, activation) {
    if (blocks < 0) throw ArgumentError("ResidualNet: negative block count");
    for (int b = 0; b < blocks; ++b) {
        const std::string name = prefix + ".block" + std::to_string(b);
        inner_.emplace_back(store, name + ".l0", std::vector<int>{hidden, hidden}, activation);
        inner_.emplace_back(store, name + ".l1", std::vector<int>{hidden, hidden}, activation);
    }
}

Vec ResidualNet::forward(const ParamStore& store, const Vec& x) const {
    const auto act = [this](Vec v) {
        for (Index i = 0; i < v.size(); ++i) v(i) = activate(activation_, v(i));
        return v;
    };
    Vec h = input_.forward(store, x);
    for (std::size_t b = 0; b + 1 < inner_.size(); b += 2) {
        h += inner_[b + 1].forward(store, act(inner_[b].forward(store, act(h))));
    }
    return output_.forward(store, act(h));
}

ad::Var ResidualNet::forward(ad::Tape& tape, ad::Var x) const {
    ad::Var h = input_.forward(tape, x);
    for (std::size_t b = 0; b + 1 < inner_.size(); b += 2) {
        ad::Var r = inner_[b].forward(tape, ad::activate(h, activation_));
        h = h + inner_[b + 1].forward(tape, ad::activate(r, activation_));
    }
    return output_.forward(tape, ad::activate(h, activation_));
}

void ResidualNet::init(ParamStore& store, Rng& rng, double output_gain) const {
    input_.init(store, rng);
    for (const Mlp& m : inner_) m.init(store, rng);
    output_.init(store, rng, output_gain);
}

CouplingLayer::CouplingLayer(ParamStore& store, const std::string& prefix, int dim, int parity,
                             const CouplingNetSpec& spec)
    : spec_(spec), dim_(dim) {
    if (dim < 2) throw ArgumentError("CouplingLayer: dimension must be at least 2");
    for (Index i = 0; i < dim; ++i) {
        (i % 2 == parity % 2 ? cond_ : trans_).push_back(i);
    }
    const int na = static_cast<int>(cond_.size());
    const int nb = static_cast<int>(trans_.size());
    if (spec.kind == CouplingKind::Affine) {
        std::vector<int> widths{na};
        widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
        widths.push_back(2 * nb);
        mlp_ = Mlp(store, prefix + ".cond", widths, spec.activation);
    } else {
        res_ = ResidualNet(store, prefix + ".cond", na, nb * spec.spline.raw_size(), spec.res_hidden,
                           spec.res_blocks, spec.activation);
    }
}

Vec CouplingLayer::conditioner(const ParamStore& store, const Vec& xa) const {
    return spec_.kind == CouplingKind::Affine ? mlp_.forward(store, xa) : res_.forward(store, xa);
}

ad::Var CouplingLayer::conditioner(ad::Tape& tape, ad::Var xa) const {
    return spec_.kind == CouplingKind::Affine ? mlp_.forward(tape, xa) : res_.forward(tape, xa);
}

Vec CouplingLayer::forward(const ParamStore& store, const Vec& x) const {
    if (x.size() != dim_) throw DimensionError("CouplingLayer: input dimension mismatch");
    const Vec xa = x(cond_);
    const Vec r = conditioner(store, xa);
    Vec y = x;
    const auto m = static_cast<Index>(trans_.size());
    for (Index j = 0; j < m; ++j) {
        const double xb = x(trans_[static_cast<std::size_t>(j)]);
        double out = 0.0;
        if (spec_.kind == CouplingKind::Affine) {
            out = xb * std::exp(std::tanh(r(j))) + r(m + j);
        } else {
            out = rq_spline(xb, r.data() + j * spec_.spline.raw_size(), spec_.spline).y;
        }
        y(trans_[static_cast<std::size_t>(j)]) = out;
    }
    return y;
}

Vec CouplingLayer::inverse(const ParamStore& store, const Vec& y) const {
    if (y.size() != dim_) throw DimensionError("CouplingLayer: input dimension mismatch");
    const Vec ya = y(cond_);
    const Vec r = conditioner(store, ya);
    Vec x = y;
    const auto m = static_cast<Index>(trans_.size());
    for (Index j = 0; j < m; ++j) {
        const double yb = y(trans_[static_cast<std::size_t>(j)]);
        double out = 0.0;
        if (spec_.kind == CouplingKind::Affine) {
            out = (yb - r(m + j)) * std::exp(-std::tanh(r(j)));
        } else {
            out = rq_spline_inverse(yb, r.data() + j * spec_.spline.raw_size(), spec_.spline);
        }
        x(trans_[static_cast<std::size_t>(j)]) = out;
    }
    return x;
}

namespace {
std::vector<Index> iota_cols(Index from, Index count) {
    std::vector<Index> out(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = from + i;
    return out;
}
}  // namespace

ad::Var CouplingLayer::forward(ad::Tape& tape, ad::Var x) const {
    ad::Var xa = ad::select_cols(x, cond_);
    ad::Var xb = ad::select_cols(x, trans_);
    ad::Var r = conditioner(tape, xa);
    ad::Var yb;
    if (spec_.kind == CouplingKind::Affine) {
        const auto m = static_cast<Index>(trans_.size());
        ad::Var s = ad::activate(ad::select_cols(r, iota_cols(0, m)), Activation::Tanh);
        ad::Var t = ad::select_cols(r, iota_cols(m, m));
        yb = xb * ad::exp(s) + t;
    } else {
        yb = ad::rq_spline(xb, r, spec_.spline);
    }
    return ad::merge_cols(xa, cond_, yb, trans_);
}

ad::Var CouplingLayer::inverse(ad::Tape& tape, ad::Var y) const {
    ad::Var ya = ad::select_cols(y, cond_);
    ad::Var yb = ad::select_cols(y, trans_);
    ad::Var r = conditioner(tape, ya);
    ad::Var xb;
    if (spec_.kind == CouplingKind::Affine) {
        const auto m = static_cast<Index>(trans_.size());
        ad::Var s = ad::activate(ad::select_cols(r, iota_cols(0, m)), Activation::Tanh);
        ad::Var t = ad::select_cols(r, iota_cols(m, m));
        xb = (yb - t) * ad::exp(-1.0 * s);
    } else {
        xb = ad::rq_spline_inverse(yb, r, spec_.spline);
    }
    return ad::merge_cols(ya, cond_, xb, trans_);
}

Mat CouplingLayer::forward_tangent(const ParamStore& store, const Vec& x, const Mat& tangent) const {
    if (spec_.kind != CouplingKind::Affine) {
        throw ArgumentError("CouplingLayer: exact tangents are only available for affine couplings");
    }
    if (x.size() != dim_ || tangent.rows() != dim_) throw DimensionError("CouplingLayer: tangent shape");
    const Vec xa = x(cond_);
    const Vec r = mlp_.forward(store, xa);
    const Mat jc = mlp_.input_jacobian(store, xa);
    const Mat dr = jc * tangent(cond_, Eigen::all);
    Mat out = tangent;
    const auto m = static_cast<Index>(trans_.size());
    for (Index j = 0; j < m; ++j) {
        const Index row = trans_[static_cast<std::size_t>(j)];
        const double s = std::tanh(r(j));
        const double es = std::exp(s);
        out.row(row) = es * tangent.row(row) + x(row) * es * (1.0 - s * s) * dr.row(j) + dr.row(m + j);
    }
    return out;
}

void CouplingLayer::init(ParamStore& store, Rng& rng) const {
    if (spec_.kind == CouplingKind::Affine) {
        mlp_.init(store, rng, 0.0);
    } else {
        res_.init(store, rng, 0.0);
    }
}

namespace ad {

namespace {
void check_spline_shapes(Var x, Var raw, const SplineSpec& spec) {
    if (x.rows() != raw.rows() || raw.cols() != x.cols() * spec.raw_size()) {
        throw DimensionError("rq_spline: raw parameter block has the wrong shape");
    }
}
}  // namespace

Var rq_spline(Var x, Var raw, const SplineSpec& spec) {
    check_spline_shapes(x, raw, spec);
    return x.tape->record(
        {x, raw},
        [spec](const std::vector<const Mat*>& in) -> Mat {
            const Mat& xs = *in[0];
            const Mat& rs = *in[1];
            Mat out(xs.rows(), xs.cols());
            std::vector<double> row(static_cast<std::size_t>(spec.raw_size()));
            for (Index i = 0; i < xs.rows(); ++i) {
                for (Index j = 0; j < xs.cols(); ++j) {
                    for (int p = 0; p < spec.raw_size(); ++p) row[static_cast<std::size_t>(p)] = rs(i, j * spec.raw_size() + p);
                    out(i, j) = contraflow::rq_spline(xs(i, j), row.data(), spec).y;
                }
            }
            return out;
        },
        [spec](const BackwardArgs& args) {
            const Mat& xs = *args.inputs[0];
            const Mat& rs = *args.inputs[1];
            const int r = spec.raw_size();
            std::vector<double> row(static_cast<std::size_t>(r)), draw(static_cast<std::size_t>(r));
            for (Index i = 0; i < xs.rows(); ++i) {
                for (Index j = 0; j < xs.cols(); ++j) {
                    for (int p = 0; p < r; ++p) row[static_cast<std::size_t>(p)] = rs(i, j * r + p);
                    const SplineEval e = contraflow::rq_spline(xs(i, j), row.data(), spec, draw.data());
                    const double g = args.grad(i, j);
                    if (args.input_grads[0]) (*args.input_grads[0])(i, j) += g * e.dydx;
                    if (args.input_grads[1]) {
                        for (int p = 0; p < r; ++p) (*args.input_grads[1])(i, j * r + p) += g * draw[static_cast<std::size_t>(p)];
                    }
                }
            }
        },
        "rq_spline");
}

Var rq_spline_inverse(Var y, Var raw, const SplineSpec& spec) {
    check_spline_shapes(y, raw, spec);
    return y.tape->record(
        {y, raw},
        [spec](const std::vector<const Mat*>& in) -> Mat {
            const Mat& ys = *in[0];
            const Mat& rs = *in[1];
            Mat out(ys.rows(), ys.cols());
            std::vector<double> row(static_cast<std::size_t>(spec.raw_size()));
            for (Index i = 0; i < ys.rows(); ++i) {
                for (Index j = 0; j < ys.cols(); ++j) {
                    for (int p = 0; p < spec.raw_size(); ++p) row[static_cast<std::size_t>(p)] = rs(i, j * spec.raw_size() + p);
                    out(i, j) = contraflow::rq_spline_inverse(ys(i, j), row.data(), spec);
                }
            }
            return out;
        },
        // Implicit differentiation of y = spline(x; raw) at the recovered x.
        [spec](const BackwardArgs& args) {
            const Mat& xs = args.output;
            const Mat& rs = *args.inputs[1];
            const int r = spec.raw_size();
            std::vector<double> row(static_cast<std::size_t>(r)), draw(static_cast<std::size_t>(r));
            for (Index i = 0; i < xs.rows(); ++i) {
                for (Index j = 0; j < xs.cols(); ++j) {
                    for (int p = 0; p < r; ++p) row[static_cast<std::size_t>(p)] = rs(i, j * r + p);
                    const SplineEval e = contraflow::rq_spline(xs(i, j), row.data(), spec, draw.data());
                    const double g = args.grad(i, j) / e.dydx;
                    if (args.input_grads[0]) (*args.input_grads[0])(i, j) += g;
                    if (args.input_grads[1]) {
                        for (int p = 0; p < r; ++p) (*args.input_grads[1])(i, j * r + p) -= g * draw[static_cast<std::size_t>(p)];
                    }
                }
            }
        },
        "rq_spline_inverse");
}

Var pi_ball(Var u) {
    return u.tape->record(
        {u},
        [](const std::vector<const Mat*>& in) -> Mat {
            Mat out(in[0]->rows(), in[0]->cols());
            for (Index i = 0; i < out.rows(); ++i) out.row(i) = lie::pi_ball_layer(in[0]->row(i).transpose()).transpose();
            return out;
        },
        [](const BackwardArgs& args) {
            if (!args.input_grads[0]) return;
            const Mat& us = *args.inputs[0];
            for (Index i = 0; i < us.rows(); ++i) {
                const Mat jac = pi_ball_jacobian(us.row(i).transpose());
                args.input_grads[0]->row(i) += args.grad.row(i) * jac;
            }
        },
        "pi_ball");
}

}  // namespace ad

Mat pi_ball_jacobian(const Vec& inner) {
    const Index n = inner.size();
    const Vec x = inner.array().tanh().matrix();
    const Vec dtanh = (1.0 - x.array().square()).matrix();
    const double norm = x.norm();
    Mat jb = Mat::Identity(n, n);
    if (norm > 0.0) {
        Index a = 0;
        x.cwiseAbs().maxCoeff(&a);
        const double m = std::abs(x(a));
        const double s = m / norm;
        Vec grad_s = -m / (norm * norm * norm) * x;
        grad_s(a) += (x(a) >= 0.0 ? 1.0 : -1.0) / norm;
        jb = s * Mat::Identity(n, n) + x * grad_s.transpose();
    }
    return std::numbers::pi * jb * dtanh.asDiagonal();
}

FlowStack::FlowStack(ParamStore& store, const FlowConfig& config) : config_(config) {
    if (config.dim < 2) throw ArgumentError("FlowStack: dimension must be at least 2");
    if (config.layers < 1) throw ArgumentError("FlowStack: need at least one coupling layer");
    for (Index h : config.ball_head) {
        if (h < 0 || h >= config.dim) throw ArgumentError("FlowStack: ball head coordinate out of range");
    }
    for (int l = 0; l < config.layers; ++l) {
        layers_.emplace_back(store, "flow" + std::to_string(l), config.dim, l % 2, config.net);
    }
}

Vec FlowStack::head_forward(const Vec& v) const {
    if (config_.ball_head.empty()) return v;
    Vec out = v;
    out(config_.ball_head) = lie::pi_ball_layer(v(config_.ball_head));
    return out;
}

Vec FlowStack::head_inverse(const Vec& x) const {
    if (config_.ball_head.empty()) return x;
    Vec out = x;
    out(config_.ball_head) = lie::pi_ball_layer_inverse(x(config_.ball_head));
    return out;
}

Vec FlowStack::forward(const ParamStore& store, const Vec& u) const {
    Vec v = u;
    for (const CouplingLayer& layer : layers_) v = layer.forward(store, v);
    return head_forward(v);
}

Vec FlowStack::inverse(const ParamStore& store, const Vec& x) const {
    Vec v = head_inverse(x);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) v = it->inverse(store, v);
    return v;
}

ad::Var FlowStack::forward(ad::Tape& tape, ad::Var u) const {
    ad::Var v = u;
    for (const CouplingLayer& layer : layers_) v = layer.forward(tape, v);
    if (config_.ball_head.empty()) return v;
    std::vector<Index> rest;
    for (Index i = 0; i < config_.dim; ++i) {
        if (std::find(config_.ball_head.begin(), config_.ball_head.end(), i) == config_.ball_head.end()) {
            rest.push_back(i);
        }
    }
    ad::Var head = ad::pi_ball(ad::select_cols(v, config_.ball_head));
    if (rest.empty()) {
        std::vector<Index> order(config_.ball_head.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[static_cast<std::size_t>(config_.ball_head[j])] = static_cast<Index>(j);
        return ad::select_cols(head, order);
    }
    return ad::merge_cols(ad::select_cols(v, rest), rest, head, config_.ball_head);
}

ad::Var FlowStack::inverse(ad::Tape& tape, const Mat& x) const {
    Mat pre = x;
    if (!config_.ball_head.empty()) {
        for (Index i = 0; i < pre.rows(); ++i) pre.row(i) = head_inverse(x.row(i).transpose()).transpose();
    }
    ad::Var v = tape.constant(std::move(pre));
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) v = it->inverse(tape, v);
    return v;
}

Mat FlowStack::forward_tangent(const ParamStore& store, const Vec& u, const Mat& tangent) const {
    Vec v = u;
    Mat t = tangent;
    for (const CouplingLayer& layer : layers_) {
        t = layer.forward_tangent(store, v, t);
        v = layer.forward(store, v);
    }
    if (!config_.ball_head.empty()) {
        const Mat jac = pi_ball_jacobian(v(config_.ball_head));
        const Mat rows = t(config_.ball_head, Eigen::all);
        t(config_.ball_head, Eigen::all) = jac * rows;
    }
    return t;
}

void FlowStack::init(ParamStore& store, Rng& rng) const {
    for (const CouplingLayer& layer : layers_) layer.init(store, rng);
}

}  // namespace contraflow
