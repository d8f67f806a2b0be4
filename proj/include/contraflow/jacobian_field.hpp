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
#include <vector>

#include "contraflow/autodiff.hpp"
#include "contraflow/linalg.hpp"
#include "contraflow/mlp.hpp"
#include "contraflow/rng.hpp"

namespace contraflow {

enum class RegKind { Constant, StateIndependentVector, StateDependentVector, Eigenvalue };
enum class EigenReference { Max, Index };
enum class FieldMode { Contractive, Unconstrained };

std::string to_string(RegKind kind);
RegKind reg_kind_from_string(const std::string& name);
std::string to_string(FieldMode mode);
FieldMode field_mode_from_string(const std::string& name);

/// Floor added to squared regularization components so every eps_i > 0.
inline constexpr double kEpsFloor = 1e-10;

struct RegStrategy {
    RegKind kind = RegKind::Constant;
    /// Constant eps; also the fixed diagonal used by the eigenvalue strategy.
    double eps = 1e-4;
    double beta = 1e-3;
    /// |eps_hat_i| is clamped to this after every optimizer step.
    double eps_cap = 10.0;
    EigenReference reference = EigenReference::Max;
    int reference_index = 0;
    std::vector<int> g_hidden = {32};
};

struct FieldConfig {
    int state_dim = 2;
    int cond_dim = 0;
    std::vector<int> hidden = {64, 64};
    Activation activation = Activation::Tanh;
    FieldMode mode = FieldMode::Contractive;
    RegStrategy reg;
    bool skew = false;
    std::vector<int> skew_hidden = {32};
};

struct ContractionStats {
    double rate = 0.0;    // largest eigenvalue of the symmetric part
    double spread = 0.0;  // largest minus smallest eigenvalue
};

/// Rate and spread of the symmetric part of `jac`.
ContractionStats contraction_stats(const Mat& jac);

/// Matrix-valued network x -> J_hat(x).
///
/// In contractive mode J_hat(x) = -(A(x)^T A(x) + diag(eps(x))) (+ a 3x3 skew
/// term when configured), where A is the network output reshaped row-major to
/// D x D. The symmetric part is therefore bounded above by -min(eps).
class JacobianField {
public:
    explicit JacobianField(FieldConfig cfg);
    /// Rebinds to an existing parameter vector (deserialization).
    JacobianField(FieldConfig cfg, ParamStore store);

    void init(Rng& rng);
    void set_reg_beta(double beta) { cfg_.reg.beta = beta; }

    const FieldConfig& config() const { return cfg_; }
    int state_dim() const { return cfg_.state_dim; }
    int cond_dim() const { return cfg_.cond_dim; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const Mlp& j_net() const { return j_net_; }
    const std::optional<Mlp>& skew_net() const { return skew_net_; }
    const std::optional<Mlp>& g_net() const { return g_net_; }

    Mat raw_matrix(const Vec& x, const Vec& cond = Vec()) const;
    Vec eps_vector(const Vec& x) const;
    Mat nd_jacobian(const Vec& x, const Vec& cond = Vec()) const;
    Mat skew_matrix(const Vec& x, const Vec& cond = Vec()) const;
    Mat full_jacobian(const Vec& x, const Vec& cond = Vec()) const;
    ContractionStats contraction_stats(const Vec& x, const Vec& cond = Vec()) const;

    /// Regularization loss over a batch of states (rows). Zero for Constant.
    double reg_loss(const Mat& states, const Mat& conds = Mat()) const;

    /// J_hat for many inputs at once; rows of `inputs` are [state, cond].
    std::vector<Mat> full_jacobian_batch(const Mat& inputs) const;

    // Tape builders; `inputs` rows are [state, cond], `states` rows are states.
    ad::Var raw_batch(ad::Tape& tape, ad::Var inputs) const;
    /// 1 x D (state-independent strategies) or rows x D (state-dependent).
    ad::Var eps_batch(ad::Tape& tape, ad::Var states) const;
    ad::Var skew_batch(ad::Tape& tape, ad::Var inputs) const;
    ad::Var reg_loss(ad::Tape& tape, ad::Var states, ad::Var inputs) const;

    /// Keeps eps_hat inside its cap; called after each optimizer step.
    void project(ParamStore& store) const;

    Vec input_of(const Vec& x, const Vec& cond) const;

private:
    void build();

    FieldConfig cfg_;
    ParamStore store_;
    Mlp j_net_;
    std::optional<Mlp> skew_net_;
    std::optional<Mlp> g_net_;
    std::optional<ParamStore::Slice> eps_hat_;
};

/// Skew matrix [[0,-a,b],[a,0,-c],[-b,c,0]] from components (a, b, c).
Mat skew_from_components(double a, double b, double c);

/// -(A^T A + diag(eps)) for row-major A given as a flat vector of length D^2.
Mat negative_definite_from(const Vec& a_flat, const Vec& eps, int dim);

namespace ad {

/// Row r of the result is J_r * delta.row(r / repeat), where J_r is built from
/// row r of `a` (contractive: -(A^T A + diag eps), unconstrained: A).
Var apply_jacobian(Var a, Var eps, Var delta, int repeat, FieldMode mode);
/// Row r is S(comps.row(r)) * delta.row(r / repeat) for the 3x3 skew S.
Var apply_skew(Var comps, Var delta, int repeat);
/// -beta * mean_rows sum_{n>=1} (e_0 - e_n)^2.
Var spread_loss(Var eps, double beta);
/// -beta * mean_rows sum_n (lambda_ref - lambda_n)^2 over eigenvalues of the
/// symmetric Jacobian part built from `a` (and `eps` in contractive mode).
Var eigen_spread_loss(Var a, Var eps, double beta, FieldMode mode, EigenReference ref, int ref_index);

}  // namespace ad
}  // namespace contraflow
