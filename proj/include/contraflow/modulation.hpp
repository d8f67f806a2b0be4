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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "contraflow/linalg.hpp"
#include "contraflow/ncds.hpp"

namespace contraflow {

struct SphereObstacle {
    Vec center;
    double radius = 1.0;
    /// Defaults to the center.
    std::optional<Vec> reference;
    double reactivity = 1.0;

    const Vec& reference_point() const { return reference ? *reference : center; }
};

/// ||x - o|| / r. Throws ArgumentError at the reference point.
double gamma(const SphereObstacle& obs, const Vec& x);

/// [n, e_1, ..., e_{D-1}] with orthonormal columns; n must be unit length.
Mat basis_E(const Vec& n);

struct ModulationEigen {
    double normal = 1.0;
    double tangent = 1.0;
};

/// lambda_n = 1 - (1/Gamma)^(1/rho), lambda_t = 1 + (1/Gamma)^(1/rho), unclamped.
ModulationEigen lambdas_classical(double gamma_value, double reactivity);

/// E diag(lambda_n, lambda_t, ..., lambda_t) E^T.
Mat modulation_matrix(const Vec& n, const ModulationEigen& lambdas);
Mat modulation_matrix(const SphereObstacle& obs, const Vec& x);
Vec modulate(const SphereObstacle& obs, const Vec& x, const Vec& v);

struct XiParams {
    double rho = 1.0;  // impenetrable level
    double nu = 10.0;  // inactive level
    double lambda_init = 0.0;
    double lambda_end = 1.0;
    double k = 2.0;

    void validate() const;
};

double xi(double s, const XiParams& p);

/// Normal (0 -> 1) and tangential (2 -> 1) eigenvalues from one distance value.
ModulationEigen lambdas_riemannian(double s, double rho, double nu, double k);

inline constexpr double kVolumeFloor = 1e-6;

// Metric-volume distance field S = alpha / (V_norm + 1e-6) sampled on a
// res x res latent grid; entry j * res + i sits at (x_i, y_j).
struct DistanceFieldGrid {
    double lo0 = -1.0, hi0 = 1.0, lo1 = -1.0, hi1 = 1.0;
    int res = 2;
    std::vector<double> values;       // S
    std::vector<double> volume_norm;  // normalized volumes
    double v_min = 0.0;
    double v_max = 1.0;
    double alpha = 1.0;
    double rho_imp = 1.0;

    void validate() const;
    double step0() const { return (hi0 - lo0) / (res - 1); }
    double step1() const { return (hi1 - lo1) / (res - 1); }
    bool contains(const Vec& z) const;
    /// Bilinear interpolation of S.
    double value_at(const Vec& z) const;
    /// Bilinear interpolation of nodal central-difference gradients of S.
    Vec gradient_at(const Vec& z) const;
    /// Normalized volume of a metric value with this grid's min-max record.
    double normalize_volume(double volume) const;
};

using MetricProvider = std::function<Mat(const Vec& z)>;

struct GridBounds {
    double lo0 = -1.0, hi0 = 1.0, lo1 = -1.0, hi1 = 1.0;
};

/// sqrt(|det M|).
double metric_volume(const Mat& m);

/// Samples volumes, min-max normalizes them and calibrates alpha so the median
/// of S over `boundary` equals rho_imp. Throws NumericError for a flat field.
DistanceFieldGrid build_distance_field(const MetricProvider& metric, const GridBounds& bounds, int res, double rho_imp,
                                       const std::vector<Vec>& boundary);

/// Recomputes alpha and S from the stored normalized volumes.
void calibrate_alpha(DistanceFieldGrid& grid, const std::vector<double>& boundary_volume_norm, double rho_imp);

struct AlphaCheck {
    bool inside_below = true;   // S < rho_imp at every inside sample
    bool outside_above = true;  // S >= rho_imp at every outside sample
};
AlphaCheck check_alpha(const DistanceFieldGrid& grid, const std::vector<Vec>& inside, const std::vector<Vec>& outside);

/// Unit gradient of S at z. Throws NumericError where the field is flat and
/// ArgumentError outside the grid interior.
Vec normal_from_field(const DistanceFieldGrid& grid, const Vec& z);

/// The 90-degree rotation of n closer to `target` (ties go counterclockwise).
Vec tangential_field(const Vec& n, const Vec& target);

struct RiemannianModulator {
    DistanceFieldGrid grid;
    double nu = 10.0;
    double k = 2.0;
    double sigma_beta = 0.05;
    /// Attractor used to orient the tangential escape when no target is given.
    Vec goal;
};

/// G v + beta * ||v|| * G g with beta = exp(-||G v||^2 / sigma_beta^2).
/// Outside the grid, or where S is flat, v is returned unchanged.
Vec modulate_riemannian(const RiemannianModulator& mod, const Vec& z, const Vec& v,
                        const std::optional<Vec>& target = std::nullopt);

VelocityModulation make_modulation(const SphereObstacle& obs);
VelocityModulation make_modulation(const RiemannianModulator& mod);

nlohmann::json grid_to_json(const DistanceFieldGrid& grid);
DistanceFieldGrid grid_from_json(const nlohmann::json& j);

}  // namespace contraflow
