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

#include "contraflow/kernels.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>

#include <omp.h>

namespace contraflow::kernels {

int thread_limit() {
    if (const char* env = std::getenv("CONTRAFLOW_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return omp_get_max_threads();
}

void for_each_serial(std::size_t n, const std::function<void(std::size_t)>& body) {
    for (std::size_t i = 0; i < n; ++i) body(i);
}

void for_each_parallel(std::size_t n, const std::function<void(std::size_t)>& body) {
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 4) num_threads(thread_limit())
    for (long long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

std::vector<Vec> map_points_serial(const PointFn& f, const std::vector<Vec>& points) {
    std::vector<Vec> out(points.size());
    for_each_serial(points.size(), [&](std::size_t i) { out[i] = f(points[i]); });
    return out;
}

std::vector<Vec> map_points_parallel(const PointFn& f, const std::vector<Vec>& points) {
    std::vector<Vec> out(points.size());
    for_each_parallel(points.size(), [&](std::size_t i) { out[i] = f(points[i]); });
    return out;
}

std::vector<double> map_scalar_serial(const ScalarFn& f, const std::vector<Vec>& points) {
    std::vector<double> out(points.size());
    for_each_serial(points.size(), [&](std::size_t i) { out[i] = f(points[i]); });
    return out;
}

std::vector<double> map_scalar_parallel(const ScalarFn& f, const std::vector<Vec>& points) {
    std::vector<double> out(points.size());
    for_each_parallel(points.size(), [&](std::size_t i) { out[i] = f(points[i]); });
    return out;
}

}  // namespace contraflow::kernels
