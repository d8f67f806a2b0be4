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

#include <cmath>

#include "contraflow/linalg.hpp"
#include "contraflow/rng.hpp"

namespace contraflow::testing {

inline Mat random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

inline Vec random_vector(Rng& rng, Index n, double scale = 1.0) { return random_matrix(rng, n, 1, scale); }

inline Mat random_symmetric(Rng& rng, Index n) {
    const Mat a = random_matrix(rng, n, n);
    return 0.5 * (a + a.transpose());
}

inline double rel_error(const Mat& a, const Mat& b) {
    const double denom = std::max(1e-12, b.norm());
    return (a - b).norm() / denom;
}

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace contraflow::testing
