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

#include "contraflow/optim.hpp"

#include <cmath>

#include "contraflow/errors.hpp"

namespace contraflow {

AdamState AdamState::zeros(Index n, AdamHyper hyper) {
    AdamState s;
    s.hyper = hyper;
    s.m = Vec::Zero(n);
    s.v = Vec::Zero(n);
    return s;
}

void adam_update(Vec& params, const Vec& grads, AdamState& state) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError("adam_step: parameter, gradient and moment lengths differ");
    }
    if (!(state.hyper.lr > 0.0)) throw ArgumentError("adam_step: learning rate must be positive");
    const auto& h = state.hyper;
    ++state.step;
    state.m = h.beta1 * state.m + (1.0 - h.beta1) * grads;
    state.v = h.beta2 * state.v + (1.0 - h.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    for (Index i = 0; i < params.size(); ++i) {
        const double mhat = state.m(i) / bc1;
        const double vhat = state.v(i) / bc2;
        params(i) -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
}

AdamResult adam_step(const Vec& params, const Vec& grads, const AdamState& state) {
    AdamResult r{params, state};
    adam_update(r.params, grads, r.state);
    return r;
}

}  // namespace contraflow
