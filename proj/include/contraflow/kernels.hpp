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

#include <functional>
#include <vector>

#include "contraflow/linalg.hpp"

namespace contraflow::kernels {

/// Thread cap: CONTRAFLOW_THREADS when set to a positive integer, else the
/// OpenMP default.
int thread_limit();

using PointFn = std::function<Vec(const Vec&)>;
using ScalarFn = std::function<double(const Vec&)>;

// Each *_parallel kernel distributes independent points over OpenMP threads
// and writes results by index, so output is identical to the *_serial
// reference for any thread count.

std::vector<Vec> map_points_serial(const PointFn& f, const std::vector<Vec>& points);
std::vector<Vec> map_points_parallel(const PointFn& f, const std::vector<Vec>& points);

std::vector<double> map_scalar_serial(const ScalarFn& f, const std::vector<Vec>& points);
std::vector<double> map_scalar_parallel(const ScalarFn& f, const std::vector<Vec>& points);

/// Generic indexed loop: body(i) for i in [0, n).
void for_each_serial(std::size_t n, const std::function<void(std::size_t)>& body);
void for_each_parallel(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace contraflow::kernels
