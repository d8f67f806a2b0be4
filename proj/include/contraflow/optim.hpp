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

#include "contraflow/linalg.hpp"

namespace contraflow {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamHyper hyper;
    Vec m;
    Vec v;
    long step = 0;

    static AdamState zeros(Index n, AdamHyper hyper = {});
};

struct AdamResult {
    Vec params;
    AdamState state;
};

/// One bias-corrected Adam update. Pure: inputs are not modified.
AdamResult adam_step(const Vec& params, const Vec& grads, const AdamState& state);

/// In-place variant used by the training loops.
void adam_update(Vec& params, const Vec& grads, AdamState& state);

}  // namespace contraflow
