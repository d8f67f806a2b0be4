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
#include <functional>
#include <optional>
#include <vector>

#include "contraflow/autodiff.hpp"
#include "contraflow/jacobian_field.hpp"
#include "contraflow/linalg.hpp"

namespace contraflow {

/// Neural contractive dynamical system.
///
/// f(x) = v0 + sum_k w_k * J_hat(c(t_k)) * (x - x0), with c(t) = (1 - t) x0 + t x
/// the straight path from the anchor. x0 and v0 are parameters stored next to
/// the Jacobian network weights so they train jointly.
class Ncds {
public:
    explicit Ncds(FieldConfig cfg, QuadratureScheme scheme = QuadratureScheme::GaussLegendre, int nodes = 16);
    Ncds(JacobianField field, QuadratureScheme scheme, int nodes);

    JacobianField& field() { return field_; }
    const JacobianField& field() const { return field_; }
    ParamStore& params() { return field_.params(); }
    const ParamStore& params() const { return field_.params(); }

    int dim() const { return field_.state_dim(); }
    int cond_dim() const { return field_.cond_dim(); }

    Vec x0() const;
    Vec v0() const;
    void set_x0(const Vec& x0);
    void set_v0(const Vec& v0);

    const Quadrature& quadrature() const { return quad_; }
    void set_quadrature(QuadratureScheme scheme, int nodes);

    void init(Rng& rng) { field_.init(rng); }

    Vec velocity(const Vec& x, const Vec& cond = Vec()) const;

    /// Batched velocities on a tape; rows of `states` are query points and
    /// rows of `conds` their conditions (empty when cond_dim == 0).
    ad::Var velocity_batch(ad::Tape& tape, const Mat& states, const Mat& conds) const;

private:
    JacobianField field_;
    Quadrature quad_;
    ParamStore::Slice x0_;
    ParamStore::Slice v0_;
};

struct Rollout {
    Vec times;
    std::vector<Vec> states;
    bool modulated = false;
    bool diverged = false;
};

using VelocityFn = std::function<Vec(const Vec&)>;
/// (x, v) -> reshaped velocity, e.g. an obstacle modulation G(x) v.
using VelocityModulation = std::function<Vec(const Vec& x, const Vec& v)>;

inline constexpr double kDivergenceNorm = 1e6;

/// Fixed-step classical RK4. Stops and flags divergence once the state is
/// non-finite or its norm exceeds 1e6.
Rollout rk4_rollout(const VelocityFn& f, const Vec& x_init, double dt, int steps);

Rollout rollout(const Ncds& model, const Vec& x_init, double dt, int steps, const Vec& cond = Vec(),
                const VelocityModulation& modulation = nullptr);

struct TrainingSet {
    Mat states;      // N x D
    Mat velocities;  // N x D
    Mat conds;       // N x c (0 columns when unconditioned)
};

/// (1 / N) * sum_i ||xdot_i - f(x_i)||^2.
double velocity_loss(const Ncds& model, const TrainingSet& batch);

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 1000;
    /// 0 or >= N means full batch.
    int batch_size = 0;
    /// Overrides the field's regularization weight when set.
    std::optional<double> beta;
    std::uint64_t seed = 0;
    /// Gauss-Legendre nodes used for training and stored on the model; 0 keeps the model's.
    int quad_nodes = 0;
    bool init_anchor = true;
};

struct LossRecord {
    int epoch = 0;
    double total = 0.0;
    double velocity = 0.0;
    double reg = 0.0;
};

struct TrainResult {
    std::vector<LossRecord> history;
};

/// Adam on L_vel + L_reg. With epochs > 0 and init_anchor, x0 starts at the
/// state mean and v0 at zero. Throws TrainingError on a non-finite loss.
TrainResult train(Ncds& model, const TrainingSet& data, const TrainConfig& cfg);

/// Mean pairwise distance between rollouts from `starts` at every step.
/// Entries after any rollout diverges are +inf.
Vec pairwise_distance_curves(const Ncds& model, const std::vector<Vec>& starts, double dt, int steps,
                             const Vec& cond = Vec());

struct GridSample {
    Vec x;
    Vec v;
};

struct GridSpec {
    double lo0 = -1.0, hi0 = 1.0;
    double lo1 = -1.0, hi1 = 1.0;
    int res = 20;
    /// State dimensions spanned by the grid; others come from `base`.
    int dim0 = 0, dim1 = 1;
    Vec base;
};

/// Equidistant res x res points (row-major over dim1 then dim0). res = 1 is the center.
std::vector<Vec> grid_points(const GridSpec& spec, int state_dim);

std::vector<GridSample> velocity_field_grid(const Ncds& model, const GridSpec& spec, const Vec& cond = Vec());

namespace ad {
/// Rows i*Q + k: [(1 - t_k) x0 + t_k x_i, cond_i].
Var path_points(Var x0, Var states, const Mat& conds, const Vec& nodes);
/// out_i = sum_k w_k y_{i*Q + k}.
Var quad_reduce(Var y, const Vec& weights);
}  // namespace ad

}  // namespace contraflow
