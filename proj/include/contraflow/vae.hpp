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

#include <cstdint>
#include <vector>

#include "contraflow/autodiff.hpp"
#include "contraflow/dataset.hpp"
#include "contraflow/flows.hpp"
#include "contraflow/lie_group.hpp"
#include "contraflow/linalg.hpp"
#include "contraflow/mlp.hpp"
#include "contraflow/ncds.hpp"
#include "contraflow/rng.hpp"

namespace contraflow {

/// (z, 0, ..., 0) of length D; requires d < D.
Vec pad(const Vec& z, int ambient_dim);
/// First d coordinates; requires d < D.
Vec unpad(const Vec& x, int latent_dim);

/// KL(N(mu, diag sigma^2) || N(0, I)).
double gaussian_kl(const Vec& mu, const Vec& sigma);

struct MetricBump {
    double weight = 0.0;
    Vec center;
    double radius = 1.0;
};

// Block-diagonal ambient metric: the position block is a bump-scaled identity,
// every other coordinate keeps the Euclidean metric.
struct AmbientMetric {
    /// Empty means the first min(3, D) coordinates.
    std::vector<Index> position_dims;
    std::vector<MetricBump> bumps;
};

Mat ambient_metric_at(const AmbientMetric& metric, const Vec& x);

struct VaeConfig {
    int ambient_dim = 4;
    int latent_dim = 2;
    int layers = 3;
    CouplingNetSpec net;
    std::vector<int> sigma_hidden = {32};
    std::vector<Index> ball_head;
};

enum class JacobianMethod { FiniteDifference, Exact };
inline constexpr double kDecoderFdStep = 1e-6;
inline constexpr double kRankTolerance = 1e-10;

struct ElboTerms {
    double recon = 0.0;
    double kl = 0.0;
    double elbo = 0.0;
};

// Gaussian VAE whose decoder mean is an injective flow: Pad followed by
// invertible coupling layers. The encoder mean is the exact left inverse.
class InjectiveVae {
public:
    explicit InjectiveVae(VaeConfig cfg);
    InjectiveVae(VaeConfig cfg, ParamStore params);

    const VaeConfig& config() const { return cfg_; }
    int latent_dim() const { return cfg_.latent_dim; }
    int ambient_dim() const { return cfg_.ambient_dim; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const FlowStack& flow() const { return flow_; }

    /// Identity flows and a small random encoder-scale network.
    void init(Rng& rng);

    Vec decode(const Vec& z) const;
    Vec encode_mean(const Vec& x) const;
    Vec encode_sigma(const Vec& x) const;
    /// Inverse flow of x in pre-padding coordinates (length D).
    Vec pre_flow(const Vec& x) const;

    /// Terms at the latent sample mu + sigma * eps.
    ElboTerms elbo_terms(const Vec& x, const Vec& eps) const;
    double elbo(const Vec& x, Rng& rng) const;

    Mat decoder_jacobian(const Vec& z, JacobianMethod method = JacobianMethod::FiniteDifference,
                         double h = kDecoderFdStep) const;
    Vec decode_velocity(const Vec& z, const Vec& zdot) const;
    Mat pullback_metric(const Vec& z, const AmbientMetric& metric, bool include_sigma = false) const;

    double off_manifold_residual(const Vec& x) const;
    /// S + 1 ambient states; step s scales the off-manifold coordinates by 1 - s/S.
    std::vector<Vec> transition_to_manifold(const Vec& x, int steps) const;

    /// Mean squared norm of x - decode(encode_mean(x)) over the rows of `data`.
    double reconstruction_mse(const Mat& data) const;
    /// -mean ELBO over the rows of x with the reparameterization noise `eps` (N x d).
    ad::Var negative_elbo(ad::Tape& tape, const Mat& x, const Mat& eps) const;

private:
    Vec embed(const Vec& z) const;

    VaeConfig cfg_;
    ParamStore params_;
    FlowStack flow_;
    Mlp sigma_net_;
};

/// Smallest singular value; decoder Jacobians below kRankTolerance are rank deficient.
double min_singular_value(const Mat& jac);

struct VaeTrainConfig {
    double lr = 1e-3;
    int epochs = 500;
    int batch_size = 0;
    std::uint64_t seed = 0;
};

struct VaeRecord {
    int epoch = 0;
    double elbo = 0.0;
    double recon_mse = 0.0;
};

struct VaeTrainResult {
    /// Entry 0 is the untrained model; entry e follows epoch e.
    std::vector<VaeRecord> history;
};

/// Adam ascent on the mean ELBO. Throws TrainingError on a non-finite objective.
VaeTrainResult train_vae(InjectiveVae& vae, const Mat& data, const VaeTrainConfig& cfg);

struct LatentPipelineConfig {
    VaeConfig vae;
    VaeTrainConfig vae_train;
    FieldConfig field;  // state_dim is overwritten with the latent dimension
    TrainConfig ncds_train;
    int quad_nodes = 16;
};

struct LatentPipelineResult {
    InjectiveVae vae;
    Ncds ncds;
    TrajectoryDataset latent;
    TrainingSet latent_set;
    VaeTrainResult vae_history;
    TrainResult ncds_history;
};

/// Checks orientation columns, trains the VAE, encodes every demo, forms
/// latent velocities by forward differences and trains the latent NCDS.
LatentPipelineResult latent_train_pipeline(const TrajectoryDataset& data, const LatentPipelineConfig& cfg);

/// Throws FirstCoverError listing every (demo, sample) whose so3 block has norm >= pi.
void check_first_cover(const TrajectoryDataset& data);

/// x_dot = J_mu(z) f(z) with z = encode_mean(state).
Vec control_step(const InjectiveVae& vae, const Ncds& ncds, const Vec& state, const Vec& cond = Vec());

struct Pose {
    lie::Vec3 position = lie::Vec3::Zero();
    lie::Mat3 rotation = lie::Mat3::Identity();
};

/// Pose variant for the [position(3), so3(3)] layout.
Vec control_step(const InjectiveVae& vae, const Ncds& ncds, const Pose& pose, const Vec& cond = Vec());

}  // namespace contraflow
