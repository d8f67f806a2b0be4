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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contraflow/autodiff.hpp"
#include "contraflow/linalg.hpp"
#include "contraflow/mlp.hpp"
#include "contraflow/rng.hpp"

namespace contraflow {

enum class CouplingKind { Affine, Spline };

std::string to_string(CouplingKind kind);
CouplingKind coupling_from_string(std::string_view name);

// Monotone rational-quadratic spline on [-bound, bound], identity outside.
// Each transformed coordinate consumes 3 * bins - 1 raw values: bin widths,
// bin heights, then interior knot derivatives.
struct SplineSpec {
    int bins = 10;
    double bound = 10.0;

    int raw_size() const { return 3 * bins - 1; }
};

inline constexpr double kMinBinWidth = 1e-3;
inline constexpr double kMinBinHeight = 1e-3;
inline constexpr double kMinDerivative = 1e-3;

struct SplineEval {
    double y = 0.0;
    double dydx = 1.0;
};

/// Evaluates the spline; when `draw` is non-null it receives dy/draw (raw_size entries).
SplineEval rq_spline(double x, const double* raw, const SplineSpec& spec, double* draw = nullptr);
double rq_spline_inverse(double y, const double* raw, const SplineSpec& spec);

// Linear -> blocks of (act, linear, act, linear) with skip connections -> act, linear.
class ResidualNet {
public:
    ResidualNet() = default;
    ResidualNet(ParamStore& store, const std::string& prefix, int in, int out, int hidden, int blocks,
                Activation activation);

    int in_dim() const { return input_.in_dim(); }
    int out_dim() const { return output_.out_dim(); }

    Vec forward(const ParamStore& store, const Vec& x) const;
    ad::Var forward(ad::Tape& tape, ad::Var x) const;
    void init(ParamStore& store, Rng& rng, double output_gain) const;

private:
    Activation activation_ = Activation::Tanh;
    Mlp input_;
    std::vector<Mlp> inner_;  // two linear maps per block
    Mlp output_;
};

struct CouplingNetSpec {
    CouplingKind kind = CouplingKind::Affine;
    std::vector<int> hidden = {30, 30};  // affine conditioner
    SplineSpec spline;
    int res_hidden = 30;  // spline conditioner
    int res_blocks = 2;
    Activation activation = Activation::Tanh;
};

// Splits coordinates by index parity. Layer `parity` 0 conditions on the even
// coordinates and transforms the odd ones; parity 1 swaps the roles.
class CouplingLayer {
public:
    CouplingLayer(ParamStore& store, const std::string& prefix, int dim, int parity, const CouplingNetSpec& spec);

    CouplingKind kind() const { return spec_.kind; }
    const std::vector<Index>& conditioned() const { return cond_; }
    const std::vector<Index>& transformed() const { return trans_; }

    Vec forward(const ParamStore& store, const Vec& x) const;
    Vec inverse(const ParamStore& store, const Vec& y) const;
    ad::Var forward(ad::Tape& tape, ad::Var x) const;
    ad::Var inverse(ad::Tape& tape, ad::Var y) const;

    /// Pushes `tangent` (dim x k) through the layer at x. Affine layers only.
    Mat forward_tangent(const ParamStore& store, const Vec& x, const Mat& tangent) const;

    /// Random hidden weights with a zero output layer, so the layer starts as the identity.
    void init(ParamStore& store, Rng& rng) const;

private:
    Vec conditioner(const ParamStore& store, const Vec& xa) const;
    ad::Var conditioner(ad::Tape& tape, ad::Var xa) const;

    CouplingNetSpec spec_;
    int dim_ = 0;
    std::vector<Index> cond_;
    std::vector<Index> trans_;
    Mlp mlp_;
    ResidualNet res_;
};

namespace ad {
/// Row-wise spline transform of x (N x m) with raw parameters (N x m * raw_size).
Var rq_spline(Var x, Var raw, const SplineSpec& spec);
Var rq_spline_inverse(Var y, Var raw, const SplineSpec& spec);
/// Row-wise pi * b(tanh(u)).
Var pi_ball(Var u);
}  // namespace ad

/// Jacobian of lie::pi_ball_layer at `inner`.
Mat pi_ball_jacobian(const Vec& inner);

struct FlowConfig {
    int dim = 2;
    int layers = 3;
    CouplingNetSpec net;
    // Coordinates squashed into the open pi-ball after the last coupling layer.
    std::vector<Index> ball_head;
};

// Bijection of R^dim: coupling layers followed by the optional pi-ball head.
class FlowStack {
public:
    FlowStack() = default;
    FlowStack(ParamStore& store, const FlowConfig& config);

    const FlowConfig& config() const { return config_; }
    const std::vector<CouplingLayer>& layers() const { return layers_; }

    Vec forward(const ParamStore& store, const Vec& u) const;
    Vec inverse(const ParamStore& store, const Vec& x) const;
    ad::Var forward(ad::Tape& tape, ad::Var u) const;
    /// Tape inverse; the head inverse is applied eagerly since it has no parameters.
    ad::Var inverse(ad::Tape& tape, const Mat& x) const;

    /// d forward / du at u, pushed along `tangent`. Affine stacks only.
    Mat forward_tangent(const ParamStore& store, const Vec& u, const Mat& tangent) const;
    bool has_exact_tangent() const { return config_.net.kind == CouplingKind::Affine; }

    void init(ParamStore& store, Rng& rng) const;

private:
    Vec head_forward(const Vec& v) const;
    Vec head_inverse(const Vec& x) const;

    FlowConfig config_;
    std::vector<CouplingLayer> layers_;
};

}  // namespace contraflow
