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


#include "contraflow/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "contraflow/errors.hpp"
#include "contraflow/optim.hpp"

namespace contraflow {

Vec pad(const Vec& z, int ambient_dim) {
    if (z.size() >= ambient_dim) throw ArgumentError("pad: latent dimension must be below the ambient dimension");
    Vec x = Vec::Zero(ambient_dim);
    x.head(z.size()) = z;
    return x;
}

Vec unpad(const Vec& x, int latent_dim) {
    if (latent_dim < 1 || latent_dim >= x.size()) throw ArgumentError("unpad: latent dimension must be in [1, D)");
    return x.head(latent_dim);
}

double gaussian_kl(const Vec& mu, const Vec& sigma) {
    if (mu.size() != sigma.size()) throw DimensionError("gaussian_kl: mean and scale lengths differ");
    double kl = 0.0;
    for (Index i = 0; i < mu.size(); ++i) {
        const double s2 = sigma(i) * sigma(i);
        kl += mu(i) * mu(i) + s2 - 1.0 - std::log(s2);
    }
    return 0.5 * kl;
}

namespace {

std::vector<Index> position_dims(const AmbientMetric& metric, Index dim) {
    if (!metric.position_dims.empty()) return metric.position_dims;
    std::vector<Index> dims(static_cast<std::size_t>(std::min<Index>(3, dim)));
    std::iota(dims.begin(), dims.end(), Index{0});
    return dims;
}

}  // namespace

Mat ambient_metric_at(const AmbientMetric& metric, const Vec& x) {
    const std::vector<Index> dims = position_dims(metric, x.size());
    for (Index d : dims) {
        if (d < 0 || d >= x.size()) throw DimensionError("ambient_metric_at: position column out of range");
    }
    const Vec p = x(dims);
    double scale = 1.0;
    for (const MetricBump& b : metric.bumps) {
        if (b.center.size() != p.size()) throw DimensionError("ambient_metric_at: bump center has the wrong dimension");
        if (!(b.radius > 0.0)) throw ArgumentError("ambient_metric_at: bump radius must be positive");
        if (b.weight < 0.0) throw ArgumentError("ambient_metric_at: bump weight must be non-negative");
        scale += b.weight * std::exp(-(p - b.center).squaredNorm() / (2.0 * b.radius * b.radius));
    }
    Mat m = Mat::Identity(x.size(), x.size());
    for (Index d : dims) m(d, d) = scale;
    return m;
}

namespace {

FlowStack make_flow(ParamStore& store, const VaeConfig& cfg) {
    if (cfg.latent_dim < 1 || cfg.latent_dim > cfg.ambient_dim) {
        throw ArgumentError("InjectiveVae: latent dimension must be in [1, D]");
    }
    FlowConfig fc;
    fc.dim = cfg.ambient_dim;
    fc.layers = cfg.layers;
    fc.net = cfg.net;
    fc.ball_head = cfg.ball_head;
    return FlowStack(store, fc);
}

Mlp make_sigma(ParamStore& store, const VaeConfig& cfg) {
    std::vector<int> widths{cfg.ambient_dim};
    widths.insert(widths.end(), cfg.sigma_hidden.begin(), cfg.sigma_hidden.end());
    widths.push_back(cfg.latent_dim);
    return Mlp(store, "sigma", widths, Activation::Tanh);
}

constexpr double kSigmaFloor = 1e-6;

std::vector<Index> first_cols(Index n) {
    std::vector<Index> cols(static_cast<std::size_t>(n));
    std::iota(cols.begin(), cols.end(), Index{0});
    return cols;
}

}  // namespace

InjectiveVae::InjectiveVae(VaeConfig cfg) : cfg_(std::move(cfg)) {
    flow_ = make_flow(params_, cfg_);
    sigma_net_ = make_sigma(params_, cfg_);
}

InjectiveVae::InjectiveVae(VaeConfig cfg, ParamStore params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    const std::size_t before = params_.size();
    flow_ = make_flow(params_, cfg_);
    sigma_net_ = make_sigma(params_, cfg_);
    if (params_.size() != before) throw DimensionError("InjectiveVae: parameter store does not match the configuration");
}

void InjectiveVae::init(Rng& rng) {
    flow_.init(params_, rng);
    sigma_net_.init(params_, rng, 0.1);
}

Vec InjectiveVae::embed(const Vec& z) const {
    if (z.size() != cfg_.latent_dim) throw DimensionError("InjectiveVae: latent vector has the wrong length");
    Vec u = Vec::Zero(cfg_.ambient_dim);
    u.head(cfg_.latent_dim) = z;
    return u;
}

Vec InjectiveVae::decode(const Vec& z) const { return flow_.forward(params_, embed(z)); }

Vec InjectiveVae::pre_flow(const Vec& x) const {
    if (x.size() != cfg_.ambient_dim) throw DimensionError("InjectiveVae: ambient vector has the wrong length");
    return flow_.inverse(params_, x);
}

Vec InjectiveVae::encode_mean(const Vec& x) const { return pre_flow(x).head(cfg_.latent_dim); }

Vec InjectiveVae::encode_sigma(const Vec& x) const {
    if (x.size() != cfg_.ambient_dim) throw DimensionError("InjectiveVae: ambient vector has the wrong length");
    Vec raw = sigma_net_.forward(params_, x);
    for (Index i = 0; i < raw.size(); ++i) raw(i) = activate(Activation::Softplus, raw(i)) + kSigmaFloor;
    return raw;
}

ElboTerms InjectiveVae::elbo_terms(const Vec& x, const Vec& eps) const {
    if (eps.size() != cfg_.latent_dim) throw DimensionError("elbo: noise vector has the wrong length");
    const Vec mu = encode_mean(x);
    const Vec sigma = encode_sigma(x);
    const Vec z = mu + sigma.cwiseProduct(eps);
    const Vec r = x - decode(z);
    ElboTerms t;
    t.recon = -0.5 * r.squaredNorm() - 0.5 * cfg_.ambient_dim * std::log(2.0 * std::numbers::pi);
    t.kl = gaussian_kl(mu, sigma);
    t.elbo = t.recon - t.kl;
    return t;
}

double InjectiveVae::elbo(const Vec& x, Rng& rng) const {
    Vec eps(cfg_.latent_dim);
    for (Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
    return elbo_terms(x, eps).elbo;
}

Mat InjectiveVae::decoder_jacobian(const Vec& z, JacobianMethod method, double h) const {
    if (method == JacobianMethod::Exact) {
        if (!flow_.has_exact_tangent()) throw ArgumentError("decoder_jacobian: exact sensitivities need affine couplings");
        Mat seed = Mat::Zero(cfg_.ambient_dim, cfg_.latent_dim);
        seed.topRows(cfg_.latent_dim).setIdentity();
        return flow_.forward_tangent(params_, embed(z), seed);
    }
    if (!(h > 0.0)) throw ArgumentError("decoder_jacobian: step must be positive");
    return finite_diff_jacobian([this](const Vec& v) { return decode(v); }, z, h);
}

Vec InjectiveVae::decode_velocity(const Vec& z, const Vec& zdot) const {
    if (zdot.size() != cfg_.latent_dim) throw DimensionError("decode_velocity: latent velocity has the wrong length");
    const JacobianMethod m = flow_.has_exact_tangent() ? JacobianMethod::Exact : JacobianMethod::FiniteDifference;
    return decoder_jacobian(z, m) * zdot;
}

Mat InjectiveVae::pullback_metric(const Vec& z, const AmbientMetric& metric, bool include_sigma) const {
    const Mat jac = decoder_jacobian(z);
    Mat m = jac.transpose() * ambient_metric_at(metric, decode(z)) * jac;
    if (include_sigma) {
        const Mat js = finite_diff_jacobian([this](const Vec& v) { return encode_sigma(decode(v)); }, z, kDecoderFdStep);
        m += js.transpose() * js;
    }
    return sym_part(m);
}

double InjectiveVae::off_manifold_residual(const Vec& x) const {
    if (cfg_.latent_dim == cfg_.ambient_dim) return 0.0;
    return pre_flow(x).tail(cfg_.ambient_dim - cfg_.latent_dim).norm();
}

std::vector<Vec> InjectiveVae::transition_to_manifold(const Vec& x, int steps) const {
    if (steps < 1) throw ArgumentError("transition_to_manifold: need at least one step");
    const Vec u = pre_flow(x);
    const Index extra = cfg_.ambient_dim - cfg_.latent_dim;
    std::vector<Vec> path;
    path.reserve(static_cast<std::size_t>(steps) + 1);
    for (int s = 0; s <= steps; ++s) {
        Vec us = u;
        const double keep = s == steps ? 0.0 : 1.0 - static_cast<double>(s) / steps;
        us.tail(extra) *= keep;
        path.push_back(flow_.forward(params_, us));
    }
    return path;
}

double InjectiveVae::reconstruction_mse(const Mat& data) const {
    if (data.cols() != cfg_.ambient_dim) throw DimensionError("reconstruction_mse: data width mismatch");
    if (data.rows() == 0) return 0.0;
    ad::Tape tape(params_);
    ad::Var u = flow_.inverse(tape, data);
    const Index extra = cfg_.ambient_dim - cfg_.latent_dim;
    if (extra > 0) {
        ad::Var z = ad::select_cols(u, first_cols(cfg_.latent_dim));
        u = ad::concat_cols(z, tape.constant(Mat::Zero(data.rows(), extra)));
    }
    const Mat recon = tape.value(flow_.forward(tape, u));
    return (data - recon).squaredNorm() / static_cast<double>(data.rows());
}

ad::Var InjectiveVae::negative_elbo(ad::Tape& tape, const Mat& x, const Mat& eps) const {
    const Index n = x.rows();
    const int d = cfg_.latent_dim;
    if (x.cols() != cfg_.ambient_dim || eps.rows() != n || eps.cols() != d) {
        throw DimensionError("negative_elbo: batch shapes disagree");
    }
    ad::Var xc = tape.constant(x);
    ad::Var mu = ad::select_cols(flow_.inverse(tape, x), first_cols(d));
    ad::Var sigma = ad::add_scalar(ad::activate(sigma_net_.forward(tape, xc), Activation::Softplus), kSigmaFloor);
    ad::Var z = mu + sigma * tape.constant(eps);
    ad::Var u = d == cfg_.ambient_dim ? z : ad::concat_cols(z, tape.constant(Mat::Zero(n, cfg_.ambient_dim - d)));
    ad::Var recon_sq = ad::mean_row_sqnorm(xc - flow_.forward(tape, u));
    const double nd = static_cast<double>(n);
    ad::Var kl_sum = ad::sum(ad::square(mu)) + ad::sum(ad::square(sigma)) - 2.0 * ad::sum(ad::log(sigma));
    ad::Var kl = ad::add_scalar(ad::scale(kl_sum, 0.5 / nd), -0.5 * d);
    const double log_norm = 0.5 * cfg_.ambient_dim * std::log(2.0 * std::numbers::pi);
    return ad::add_scalar(ad::scale(recon_sq, 0.5) + kl, log_norm);
}

double min_singular_value(const Mat& jac) {
    const Vec ev = eigvals_sym(jac.transpose() * jac);
    return std::sqrt(std::max(ev(0), 0.0));
}

VaeTrainResult train_vae(InjectiveVae& vae, const Mat& data, const VaeTrainConfig& cfg) {
    if (data.cols() != vae.ambient_dim()) throw DimensionError("train_vae: data width does not match the VAE");
    if (!(cfg.lr > 0.0)) throw ArgumentError("train_vae: lr must be positive");
    if (cfg.epochs < 0) throw ArgumentError("train_vae: epochs must be >= 0");
    const Index n = data.rows();
    VaeTrainResult result;
    Rng noise_rng = Rng(cfg.seed).split(0x656c626f);
    {
        Rng probe = noise_rng.split(0);
        double e = 0.0;
        for (Index i = 0; i < n; ++i) e += vae.elbo(data.row(i).transpose(), probe);
        result.history.push_back({0, n > 0 ? e / static_cast<double>(n) : 0.0, vae.reconstruction_mse(data)});
    }
    if (cfg.epochs == 0 || n == 0) return result;

    Rng order_rng = Rng(cfg.seed).split(0x73687566);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const Index batch = (cfg.batch_size <= 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
    ParamStore& store = vae.params();
    AdamState adam = AdamState::zeros(static_cast<Index>(store.size()), AdamHyper{cfg.lr});
    const int d = vae.latent_dim();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (batch < n) {
            for (Index i = n - 1; i > 0; --i) {
                const auto j = static_cast<Index>(order_rng.below(static_cast<std::uint64_t>(i + 1)));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
        }
        double total = 0.0;
        Index batches = 0;
        for (Index begin = 0; begin < n; begin += batch) {
            const Index end = std::min(n, begin + batch);
            Mat xs(end - begin, data.cols());
            for (Index i = begin; i < end; ++i) xs.row(i - begin) = data.row(order[static_cast<std::size_t>(i)]);
            Mat eps(end - begin, d);
            for (Index i = 0; i < eps.size(); ++i) eps.data()[i] = noise_rng.normal();
            ad::Tape tape(store);
            ad::Var loss = vae.negative_elbo(tape, xs, eps);
            const double value = tape.scalar(loss);
            if (!std::isfinite(value)) {
                throw TrainingError("train_vae: non-finite ELBO at epoch " + std::to_string(epoch), epoch);
            }
            Vec grad;
            try {
                grad = tape.gradient(loss);
            } catch (const NumericError& e) {
                throw TrainingError(std::string("train_vae: ") + e.what() + " at epoch " + std::to_string(epoch), epoch);
            }
            adam_update(store.values(), grad, adam);
            total += -value;
            ++batches;
        }
        result.history.push_back({epoch, total / static_cast<double>(batches), vae.reconstruction_mse(data)});
    }
    return result;
}

void check_first_cover(const TrajectoryDataset& data) {
    const std::vector<Index> cols = data.columns(ColumnKind::So3);
    std::string bad;
    int count = 0;
    for (std::size_t i = 0; i < data.demos.size(); ++i) {
        const Mat& s = data.demos[i].states;
        for (Index t = 0; t < s.rows(); ++t) {
            for (std::size_t b = 0; b + 2 < cols.size(); b += 3) {
                const double norm = std::sqrt(s(t, cols[b]) * s(t, cols[b]) + s(t, cols[b + 1]) * s(t, cols[b + 1]) +
                                              s(t, cols[b + 2]) * s(t, cols[b + 2]));
                if (!(norm < std::numbers::pi)) {
                    if (count < 20) bad += " (" + std::to_string(i) + "," + std::to_string(t) + ")";
                    ++count;
                }
            }
        }
    }
    if (count > 0) {
        throw FirstCoverError("orientation coefficients outside the first cover at " + std::to_string(count) +
                              " samples (demo,sample):" + bad + (count > 20 ? " ..." : ""));
    }
}

LatentPipelineResult latent_train_pipeline(const TrajectoryDataset& data, const LatentPipelineConfig& cfg) {
    data.validate();
    check_first_cover(data);
    VaeConfig vcfg = cfg.vae;
    vcfg.ambient_dim = data.dim;
    InjectiveVae vae(vcfg);
    Rng rng(cfg.vae_train.seed);
    vae.init(rng);

    Mat all(static_cast<Index>(data.total_points()), data.dim);
    Index row = 0;
    for (const Demo& d : data.demos) {
        all.middleRows(row, d.states.rows()) = d.states;
        row += d.states.rows();
    }
    VaeTrainResult vhist = train_vae(vae, all, cfg.vae_train);

    const int ld = vcfg.latent_dim;
    TrajectoryDataset latent;
    latent.dim = ld;
    latent.layout = {{ColumnKind::Plain, ld}};
    latent.provenance = data.provenance;
    latent.provenance.push_back("encode_mean(d=" + std::to_string(ld) + ")");
    const auto n = static_cast<Index>(data.total_points());
    const int c = data.cond_dim();
    TrainingSet set{Mat(n, ld), Mat(n, ld), Mat(n, c)};
    row = 0;
    for (const Demo& d : data.demos) {
        Demo ldemo;
        ldemo.dt = d.dt;
        ldemo.condition = d.condition;
        ldemo.states.resize(d.states.rows(), ld);
        for (Index t = 0; t < d.states.rows(); ++t) ldemo.states.row(t) = vae.encode_mean(d.states.row(t).transpose()).transpose();
        const Index len = ldemo.states.rows();
        Mat vel = Mat::Zero(len, ld);
        for (Index t = 0; t + 1 < len; ++t) vel.row(t) = (ldemo.states.row(t + 1) - ldemo.states.row(t)) / d.dt;
        set.states.middleRows(row, len) = ldemo.states;
        set.velocities.middleRows(row, len) = vel;
        if (c > 0) set.conds.middleRows(row, len).rowwise() = d.condition->transpose();
        row += len;
        latent.demos.push_back(std::move(ldemo));
    }

    FieldConfig fcfg = cfg.field;
    fcfg.state_dim = ld;
    fcfg.cond_dim = c;
    Ncds ncds(fcfg, QuadratureScheme::GaussLegendre, cfg.quad_nodes);
    Rng nrng(cfg.ncds_train.seed);
    ncds.init(nrng);
    TrainResult nhist = train(ncds, set, cfg.ncds_train);
    return LatentPipelineResult{std::move(vae), std::move(ncds), std::move(latent), std::move(set), std::move(vhist),
                                std::move(nhist)};
}

Vec control_step(const InjectiveVae& vae, const Ncds& ncds, const Vec& state, const Vec& cond) {
    if (ncds.dim() != vae.latent_dim()) throw DimensionError("control_step: NCDS and VAE latent dimensions differ");
    const Vec z = vae.encode_mean(state);
    const Vec zdot = ncds.velocity(z, cond);
    const Vec xdot = vae.decode_velocity(z, zdot);
    require_finite(xdot, "control_step");
    return xdot;
}

Vec control_step(const InjectiveVae& vae, const Ncds& ncds, const Pose& pose, const Vec& cond) {
    if (vae.ambient_dim() != 6) throw DimensionError("control_step: pose input needs a [position(3), so3(3)] model");
    Vec state(6);
    state.head(3) = pose.position;
    state.tail(3) = lie::so3_log(pose.rotation);
    return control_step(vae, ncds, state, cond);
}

}  // namespace contraflow
