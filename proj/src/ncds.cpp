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

#include "contraflow/ncds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "contraflow/errors.hpp"
#include "contraflow/kernels.hpp"
#include "contraflow/optim.hpp"

namespace contraflow {

Ncds::Ncds(FieldConfig cfg, QuadratureScheme scheme, int nodes) : Ncds(JacobianField(std::move(cfg)), scheme, nodes) {}

Ncds::Ncds(JacobianField field, QuadratureScheme scheme, int nodes)
    : field_(std::move(field)), quad_(quadrature_nodes(scheme, nodes)) {
    ParamStore& store = field_.params();
    const auto d = static_cast<std::size_t>(field_.state_dim());
    x0_ = store.has("x0") ? store.slice("x0") : store.add("x0", d);
    v0_ = store.has("v0") ? store.slice("v0") : store.add("v0", d);
    if (x0_.size != d || v0_.size != d) throw DimensionError("Ncds: stored anchor has the wrong dimension");
}

Vec Ncds::x0() const { return params().segment(x0_); }
Vec Ncds::v0() const { return params().segment(v0_); }

void Ncds::set_x0(const Vec& x0) {
    if (x0.size() != dim()) throw DimensionError("Ncds::set_x0: dimension mismatch");
    params().segment(x0_) = x0;
}

void Ncds::set_v0(const Vec& v0) {
    if (v0.size() != dim()) throw DimensionError("Ncds::set_v0: dimension mismatch");
    params().segment(v0_) = v0;
}

void Ncds::set_quadrature(QuadratureScheme scheme, int nodes) { quad_ = quadrature_nodes(scheme, nodes); }

Vec Ncds::velocity(const Vec& x, const Vec& cond) const {
    const int d = dim();
    const int c = cond_dim();
    if (x.size() != d) {
        throw DimensionError("velocity: state has dimension " + std::to_string(x.size()) + ", expected " +
                             std::to_string(d));
    }
    if (cond.size() != c) throw DimensionError("velocity: condition dimension mismatch");
    const Vec anchor = x0();
    const Vec delta = x - anchor;
    const Index q = quad_.nodes.size();
    Mat inputs(q, d + c);
    for (Index k = 0; k < q; ++k) {
        const double t = quad_.nodes(k);
        inputs.row(k).head(d) = ((1.0 - t) * anchor + t * x).transpose();
        if (c > 0) inputs.row(k).tail(c) = cond.transpose();
    }
    const ParamStore& store = params();
    const Mat a = field_.j_net().forward_batch(store, inputs);
    const bool contractive = field_.config().mode == FieldMode::Contractive;
    Mat eps;
    if (contractive) {
        if (field_.g_net()) {
            eps = (field_.g_net()->forward_batch(store, inputs.leftCols(d)).array().square() + kEpsFloor).matrix();
        } else {
            eps = field_.eps_vector(anchor).transpose();
        }
    }
    Mat skew;
    if (field_.skew_net()) skew = field_.skew_net()->forward_batch(store, inputs);

    Vec acc = Vec::Zero(d);
    Vec u(d);
    Vec y(d);
    for (Index k = 0; k < q; ++k) {
        for (Index p = 0; p < d; ++p) {
            double s = 0.0;
            for (Index j = 0; j < d; ++j) s += a(k, p * d + j) * delta(j);
            u(p) = s;
        }
        if (contractive) {
            const Index er = eps.rows() == 1 ? 0 : k;
            for (Index j = 0; j < d; ++j) {
                double s = 0.0;
                for (Index p = 0; p < d; ++p) s += a(k, p * d + j) * u(p);
                y(j) = -(s + eps(er, j) * delta(j));
            }
        } else {
            y = u;
        }
        if (field_.skew_net()) {
            const double sa = skew(k, 0), sb = skew(k, 1), sc = skew(k, 2);
            y(0) += -sa * delta(1) + sb * delta(2);
            y(1) += sa * delta(0) - sc * delta(2);
            y(2) += -sb * delta(0) + sc * delta(1);
        }
        acc += quad_.weights(k) * y;
    }
    Vec v = v0() + acc;
    if (!v.allFinite()) throw NumericError("velocity: field produced a non-finite value");
    return v;
}

namespace ad {

Var path_points(Var x0, Var states, const Mat& conds, const Vec& nodes) {
    const Index q = nodes.size();
    const Index d = states.cols();
    if (x0.rows() != 1 || x0.cols() != d) throw DimensionError("path_points: anchor shape");
    if (conds.size() > 0 && conds.rows() != states.rows()) throw DimensionError("path_points: condition rows");
    const Index c = conds.size() > 0 ? conds.cols() : 0;
    return x0.tape->record(
        {x0, states},
        [conds, nodes, q, d, c](const std::vector<const Mat*>& in) -> Mat {
            const Mat& a = *in[0];
            const Mat& x = *in[1];
            Mat out(x.rows() * q, d + c);
            for (Index i = 0; i < x.rows(); ++i) {
                for (Index k = 0; k < q; ++k) {
                    const Index r = i * q + k;
                    const double t = nodes(k);
                    out.row(r).head(d) = (1.0 - t) * a.row(0) + t * x.row(i);
                    if (c > 0) out.row(r).tail(c) = conds.row(i);
                }
            }
            return out;
        },
        [nodes, q, d](const BackwardArgs& args) {
            const Mat& g = args.grad;
            const Index n = args.inputs[1]->rows();
            for (Index i = 0; i < n; ++i) {
                for (Index k = 0; k < q; ++k) {
                    const Index r = i * q + k;
                    const double t = nodes(k);
                    if (args.input_grads[0]) args.input_grads[0]->row(0) += (1.0 - t) * g.row(r).head(d);
                    if (args.input_grads[1]) args.input_grads[1]->row(i) += t * g.row(r).head(d);
                }
            }
        },
        "path_points");
}

Var quad_reduce(Var y, const Vec& weights) {
    const Index q = weights.size();
    if (y.rows() % q != 0) throw DimensionError("quad_reduce: rows not divisible by node count");
    return y.tape->record(
        {y},
        [weights, q](const std::vector<const Mat*>& in) -> Mat {
            const Mat& yv = *in[0];
            Mat out = Mat::Zero(yv.rows() / q, yv.cols());
            for (Index i = 0; i < out.rows(); ++i) {
                for (Index k = 0; k < q; ++k) out.row(i) += weights(k) * yv.row(i * q + k);
            }
            return out;
        },
        [weights, q](const BackwardArgs& args) {
            if (!args.input_grads[0]) return;
            Mat& dy = *args.input_grads[0];
            for (Index i = 0; i < args.grad.rows(); ++i) {
                for (Index k = 0; k < q; ++k) dy.row(i * q + k) += weights(k) * args.grad.row(i);
            }
        },
        "quad_reduce");
}

}  // namespace ad

ad::Var Ncds::velocity_batch(ad::Tape& tape, const Mat& states, const Mat& conds) const {
    const int d = dim();
    if (states.cols() != d) throw DimensionError("velocity_batch: state width mismatch");
    if (cond_dim() > 0 && (conds.cols() != cond_dim() || conds.rows() != states.rows())) {
        throw DimensionError("velocity_batch: condition shape mismatch");
    }
    const int q = static_cast<int>(quad_.nodes.size());
    ad::Var x0 = tape.param(x0_, 1, d);
    ad::Var v0 = tape.param(v0_, 1, d);
    ad::Var xs = tape.constant(states);
    ad::Var inputs = ad::path_points(x0, xs, cond_dim() > 0 ? conds : Mat(), quad_.nodes);
    ad::Var a = field_.raw_batch(tape, inputs);
    ad::Var eps;
    if (field_.g_net()) {
        std::vector<Index> cols(static_cast<std::size_t>(d));
        std::iota(cols.begin(), cols.end(), Index{0});
        eps = field_.eps_batch(tape, cond_dim() > 0 ? ad::select_cols(inputs, cols) : inputs);
    } else {
        eps = field_.eps_batch(tape, xs);
    }
    ad::Var delta = ad::sub(xs, x0);
    ad::Var y = ad::apply_jacobian(a, eps, delta, q, field_.config().mode);
    if (field_.skew_net()) y = ad::add(y, ad::apply_skew(field_.skew_batch(tape, inputs), delta, q));
    return ad::add(ad::quad_reduce(y, quad_.weights), v0);
}

Rollout rk4_rollout(const VelocityFn& f, const Vec& x_init, double dt, int steps) {
    if (!(dt > 0.0)) throw ArgumentError("rollout: dt must be positive");
    if (steps < 0) throw ArgumentError("rollout: steps must be >= 0");
    Rollout out;
    out.states.reserve(static_cast<std::size_t>(steps) + 1);
    out.states.push_back(x_init);
    std::vector<double> times{0.0};
    Vec x = x_init;
    for (int s = 0; s < steps; ++s) {
        Vec next;
        try {
            const Vec k1 = f(x);
            const Vec k2 = f(x + 0.5 * dt * k1);
            const Vec k3 = f(x + 0.5 * dt * k2);
            const Vec k4 = f(x + dt * k3);
            next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        } catch (const NumericError&) {
            out.diverged = true;
            break;
        }
        if (!next.allFinite() || next.norm() > kDivergenceNorm) {
            out.diverged = true;
            break;
        }
        x = std::move(next);
        out.states.push_back(x);
        times.push_back((s + 1) * dt);
    }
    out.times = Eigen::Map<const Vec>(times.data(), static_cast<Index>(times.size()));
    return out;
}

Rollout rollout(const Ncds& model, const Vec& x_init, double dt, int steps, const Vec& cond,
                const VelocityModulation& modulation) {
    if (x_init.size() != model.dim()) throw DimensionError("rollout: start state dimension mismatch");
    VelocityFn f;
    if (modulation) {
        f = [&](const Vec& x) { return modulation(x, model.velocity(x, cond)); };
    } else {
        f = [&](const Vec& x) { return model.velocity(x, cond); };
    }
    Rollout r = rk4_rollout(f, x_init, dt, steps);
    r.modulated = static_cast<bool>(modulation);
    return r;
}

double velocity_loss(const Ncds& model, const TrainingSet& batch) {
    if (batch.states.rows() == 0) throw ArgumentError("velocity_loss: empty batch");
    double acc = 0.0;
    for (Index i = 0; i < batch.states.rows(); ++i) {
        const Vec cond = model.cond_dim() > 0 ? Vec(batch.conds.row(i).transpose()) : Vec();
        acc += (batch.velocities.row(i).transpose() - model.velocity(batch.states.row(i).transpose(), cond))
                   .squaredNorm();
    }
    return acc / static_cast<double>(batch.states.rows());
}

namespace {

Mat gather_rows(const Mat& m, const std::vector<Index>& idx, Index begin, Index end) {
    if (m.cols() == 0) return Mat(end - begin, 0);
    Mat out(end - begin, m.cols());
    for (Index r = begin; r < end; ++r) out.row(r - begin) = m.row(idx[static_cast<std::size_t>(r)]);
    return out;
}

}  // namespace

TrainResult train(Ncds& model, const TrainingSet& data, const TrainConfig& cfg) {
    const Index n = data.states.rows();
    if (data.states.cols() != model.dim() || data.velocities.cols() != model.dim() || data.velocities.rows() != n) {
        throw DimensionError("train: dataset dimension does not match the model");
    }
    if (model.cond_dim() > 0 && (data.conds.cols() != model.cond_dim() || data.conds.rows() != n)) {
        throw DimensionError("train: dataset conditions do not match the model's cond_dim");
    }
    if (!(cfg.lr > 0.0)) throw ArgumentError("train: lr must be positive");
    if (cfg.epochs < 0) throw ArgumentError("train: epochs must be >= 0");
    TrainResult result;
    if (cfg.epochs == 0 || n == 0) return result;

    if (cfg.quad_nodes > 0) model.set_quadrature(QuadratureScheme::GaussLegendre, cfg.quad_nodes);
    if (cfg.beta) model.field().set_reg_beta(*cfg.beta);
    if (cfg.init_anchor) {
        model.set_x0(data.states.colwise().mean().transpose());
        model.set_v0(Vec::Zero(model.dim()));
    }
    Rng rng = Rng(cfg.seed).split(0x7472616e);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const Index batch = (cfg.batch_size <= 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
    ParamStore& store = model.params();
    AdamState adam = AdamState::zeros(static_cast<Index>(store.size()), AdamHyper{cfg.lr});
    const JacobianField& field = model.field();
    const int d = model.dim();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < n) {
            for (Index i = n - 1; i > 0; --i) {
                const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
        }
        LossRecord rec{epoch, 0.0, 0.0, 0.0};
        Index batches = 0;
        for (Index begin = 0; begin < n; begin += batch) {
            const Index end = std::min(n, begin + batch);
            const Mat xs = gather_rows(data.states, order, begin, end);
            const Mat xd = gather_rows(data.velocities, order, begin, end);
            const Mat cs = model.cond_dim() > 0 ? gather_rows(data.conds, order, begin, end) : Mat();
            ad::Tape tape(store);
            ad::Var pred = model.velocity_batch(tape, xs, cs);
            ad::Var lvel = ad::mean_row_sqnorm(ad::sub(pred, tape.constant(xd)));
            ad::Var lreg;
            if (field.config().reg.kind == RegKind::Constant) {
                lreg = tape.constant(Mat::Zero(1, 1));
            } else {
                ad::Var st = tape.constant(xs);
                ad::Var in = model.cond_dim() > 0 ? tape.constant((Mat(xs.rows(), d + model.cond_dim()) << xs, cs).finished())
                                                  : st;
                lreg = field.reg_loss(tape, st, in);
            }
            ad::Var total = ad::add(lvel, lreg);
            const double value = tape.scalar(total);
            if (!std::isfinite(value)) {
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch), epoch);
            }
            Vec grad;
            try {
                grad = tape.gradient(total);
            } catch (const NumericError& e) {
                throw TrainingError(std::string("train: ") + e.what() + " at epoch " + std::to_string(epoch), epoch);
            }
            adam_update(store.values(), grad, adam);
            field.project(store);
            rec.total += value;
            rec.velocity += tape.scalar(lvel);
            rec.reg += tape.scalar(lreg);
            ++batches;
        }
        rec.total /= static_cast<double>(batches);
        rec.velocity /= static_cast<double>(batches);
        rec.reg /= static_cast<double>(batches);
        result.history.push_back(rec);
    }
    return result;
}

Vec pairwise_distance_curves(const Ncds& model, const std::vector<Vec>& starts, double dt, int steps,
                             const Vec& cond) {
    if (starts.size() < 2) throw ArgumentError("pairwise_distance_curves: need at least two starts");
    std::vector<Rollout> rolls(starts.size());
    kernels::for_each_parallel(starts.size(), [&](std::size_t i) { rolls[i] = rollout(model, starts[i], dt, steps, cond); });
    Vec curve = Vec::Zero(steps + 1);
    const double pairs = 0.5 * static_cast<double>(starts.size() * (starts.size() - 1));
    for (int t = 0; t <= steps; ++t) {
        double acc = 0.0;
        bool ok = true;
        for (std::size_t a = 0; a < rolls.size() && ok; ++a) {
            for (std::size_t b = a + 1; b < rolls.size(); ++b) {
                const auto ti = static_cast<std::size_t>(t);
                if (ti >= rolls[a].states.size() || ti >= rolls[b].states.size()) {
                    ok = false;
                    break;
                }
                acc += (rolls[a].states[ti] - rolls[b].states[ti]).norm();
            }
        }
        curve(t) = ok ? acc / pairs : std::numeric_limits<double>::infinity();
    }
    return curve;
}

std::vector<Vec> grid_points(const GridSpec& spec, int state_dim) {
    if (spec.res < 1) throw ArgumentError("grid: res must be >= 1");
    if (spec.dim0 < 0 || spec.dim1 < 0 || spec.dim0 >= state_dim || spec.dim1 >= state_dim || spec.dim0 == spec.dim1) {
        throw ArgumentError("grid: slice dimensions out of range");
    }
    if (state_dim != 2 && spec.base.size() != state_dim) {
        throw ArgumentError("grid: a base point is required for D != 2 slices");
    }
    const Vec base = spec.base.size() == state_dim ? spec.base : Vec::Zero(state_dim);
    std::vector<Vec> pts;
    pts.reserve(static_cast<std::size_t>(spec.res * spec.res));
    auto coord = [&](double lo, double hi, int i) {
        return spec.res == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (spec.res - 1);
    };
    for (int j = 0; j < spec.res; ++j) {
        for (int i = 0; i < spec.res; ++i) {
            Vec p = base;
            p(spec.dim0) = coord(spec.lo0, spec.hi0, i);
            p(spec.dim1) = coord(spec.lo1, spec.hi1, j);
            pts.push_back(std::move(p));
        }
    }
    return pts;
}

std::vector<GridSample> velocity_field_grid(const Ncds& model, const GridSpec& spec, const Vec& cond) {
    const std::vector<Vec> pts = grid_points(spec, model.dim());
    const std::vector<Vec> vel =
        kernels::map_points_parallel([&](const Vec& x) { return model.velocity(x, cond); }, pts);
    std::vector<GridSample> out;
    out.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out.push_back({pts[i], vel[i]});
    return out;
}

}  // namespace contraflow
