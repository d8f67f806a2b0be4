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

#include <string>
#include <vector>

#include "contraflow/autodiff.hpp"
#include "contraflow/linalg.hpp"
#include "contraflow/rng.hpp"

namespace contraflow {

/// Fully connected network whose weights live in a ParamStore.
///
/// Hidden layers apply `activation`; the output layer is affine. Weights are
/// stored row-major as [out x in] followed by a bias of length out. Slices are
/// named `<prefix>.W<i>` / `<prefix>.b<i>`; constructing over a store that
/// already holds them reuses the existing values.
class Mlp {
public:
    struct Layer {
        ParamStore::Slice weight;
        ParamStore::Slice bias;
        int in = 0;
        int out = 0;
    };

    Mlp() = default;
    Mlp(ParamStore& store, std::string prefix, std::vector<int> widths, Activation activation);

    int in_dim() const { return widths_.front(); }
    int out_dim() const { return widths_.back(); }
    const std::vector<int>& widths() const { return widths_; }
    Activation activation() const { return activation_; }
    const std::string& prefix() const { return prefix_; }
    const std::vector<Layer>& layers() const { return layers_; }
    bool empty() const { return layers_.empty(); }

    Vec forward(const ParamStore& store, const Vec& x) const;
    /// Row-wise forward for a batch (one sample per row).
    Mat forward_batch(const ParamStore& store, const Mat& x) const;
    ad::Var forward(ad::Tape& tape, ad::Var x) const;
    /// d(output)/d(input) at x, out_dim x in_dim.
    Mat input_jacobian(const ParamStore& store, const Vec& x) const;

    /// Glorot-uniform weights, zero biases; the last layer is multiplied by `output_gain`.
    void init(ParamStore& store, Rng& rng, double output_gain = 1.0) const;
    void zero(ParamStore& store) const;

private:
    std::string prefix_;
    std::vector<int> widths_;
    Activation activation_ = Activation::Tanh;
    std::vector<Layer> layers_;
};

}  // namespace contraflow
