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


#include "contraflow/modulation.hpp"

#include <algorithm>
#include <cmath>

#include "contraflow/errors.hpp"
#include "contraflow/kernels.hpp"

namespace contraflow {

double gamma(const SphereObstacle& obs, const Vec& x) {
    if (obs.center.size() != x.size()) throw DimensionError("gamma: obstacle and state dimensions differ");
    if (!(obs.radius > 0.0)) throw ArgumentError("gamma: obstacle radius must be positive");
    if ((x - obs.reference_point()).norm() == 0.0) throw ArgumentError("gamma: state coincides with the reference point");
    return (x - obs.center).norm() / obs.radius;
}

Mat basis_E(const Vec& n) {
    const Index d = n.size();
    if (d < 1) throw ArgumentError("basis_E: empty normal");
    const double norm = n.norm();
    if (norm == 0.0) throw ArgumentError("basis_E: zero normal");
    if (std::abs(norm - 1.0) > 1e-9) throw ArgumentError("basis_E: normal is not unit length");
    Index skip = 0;
    n.cwiseAbs().maxCoeff(&skip);
    Mat e(d, d);
    e.col(0) = n;
    Index col = 1;
    for (Index axis = 0; axis < d; ++axis) {
        if (axis == skip) continue;
        Vec c = Vec::Unit(d, axis);
        // Two passes keep the columns orthonormal to ~1e-16.
        for (int pass = 0; pass < 2; ++pass) {
            for (Index k = 0; k < col; ++k) c -= e.col(k).dot(c) * e.col(k);
        }
        e.col(col++) = c.normalized();
    }
    return e;
}

ModulationEigen lambdas_classical(double gamma_value, double reactivity) {
    if (!(gamma_value > 0.0)) throw ArgumentError("lambdas_classical: Gamma must be positive");
    if (!(reactivity > 0.0)) throw ArgumentError("lambdas_classical: reactivity must be positive");
    const double p = std::pow(1.0 / gamma_value, 1.0 / reactivity);
    return {1.0 - p, 1.0 + p};
}

Mat modulation_matrix(const Vec& n, const ModulationEigen& lambdas) {
    const Mat e = basis_E(n);
    Vec diag = Vec::Constant(n.size(), lambdas.tangent);
    diag(0) = lambdas.normal;
    return e * diag.asDiagonal() * e.transpose();
}

Mat modulation_matrix(const SphereObstacle& obs, const Vec& x) {
    const double g = gamma(obs, x);
    const Vec n = (x - obs.reference_point()).normalized();
    return modulation_matrix(n, lambdas_classical(g, obs.reactivity));
}

Vec modulate(const SphereObstacle& obs, const Vec& x, const Vec& v) {
    if (v.size() != x.size()) throw DimensionError("modulate: velocity and state dimensions differ");
    return modulation_matrix(obs, x) * v;
}

void XiParams::validate() const {
    if (!(rho < nu)) throw ArgumentError("XiParams: rho must be below nu");
    if (!(k > 0.0)) throw ArgumentError("XiParams: k must be positive");
}

double xi(double s, const XiParams& p) {
    p.validate();
    return p.lambda_init + (p.lambda_end - p.lambda_init) / (1.0 + std::exp(-p.k * (s - 0.5 * (p.rho + p.nu))));
}

ModulationEigen lambdas_riemannian(double s, double rho, double nu, double k) {
    return {xi(s, {rho, nu, 0.0, 1.0, k}), xi(s, {rho, nu, 2.0, 1.0, k})};
}

void DistanceFieldGrid::validate() const {
    if (res < 2) throw ArgumentError("DistanceFieldGrid: resolution must be at least 2");
    if (!(hi0 > lo0) || !(hi1 > lo1)) throw ArgumentError("DistanceFieldGrid: empty bounds");
    const auto cells = static_cast<std::size_t>(res) * static_cast<std::size_t>(res);
    if (values.size() != cells) throw DimensionError("DistanceFieldGrid: value count does not match res^2");
    if (!volume_norm.empty() && volume_norm.size() != cells) {
        throw DimensionError("DistanceFieldGrid: volume count does not match res^2");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("DistanceFieldGrid: non-finite field value");
    }
}

bool DistanceFieldGrid::contains(const Vec& z) const {
    return z.size() == 2 && z(0) >= lo0 && z(0) <= hi0 && z(1) >= lo1 && z(1) <= hi1;
}

namespace {

struct Cell {
    int i = 0, j = 0;
    double t0 = 0.0, t1 = 0.0;
};

Cell locate(const DistanceFieldGrid& g, const Vec& z) {
    if (z.size() != 2) throw DimensionError("DistanceFieldGrid: queries are 2-D");
    const auto axis = [&](double x, double lo, double h, int& idx, double& t) {
        const double u = std::clamp((x - lo) / h, 0.0, static_cast<double>(g.res - 1));
        idx = std::min(static_cast<int>(std::floor(u)), g.res - 2);
        t = u - idx;
    };
    Cell c;
    axis(z(0), g.lo0, g.step0(), c.i, c.t0);
    axis(z(1), g.lo1, g.step1(), c.j, c.t1);
    return c;
}

double at(const DistanceFieldGrid& g, int i, int j) {
    return g.values[static_cast<std::size_t>(j) * static_cast<std::size_t>(g.res) + static_cast<std::size_t>(i)];
}

Eigen::Vector2d node_gradient(const DistanceFieldGrid& g, int i, int j) {
    const auto diff = [&](int a0, int b0, int a1, int b1, double h) { return (at(g, b0, b1) - at(g, a0, a1)) / h; };
    const int im = std::max(i - 1, 0), ip = std::min(i + 1, g.res - 1);
    const int jm = std::max(j - 1, 0), jp = std::min(j + 1, g.res - 1);
    return {diff(im, ip, j, j, (ip - im) * g.step0()), diff(i, i, jm, jp, (jp - jm) * g.step1())};
}

}  // namespace

double DistanceFieldGrid::value_at(const Vec& z) const {
    const Cell c = locate(*this, z);
    const double a = (1.0 - c.t0) * at(*this, c.i, c.j) + c.t0 * at(*this, c.i + 1, c.j);
    const double b = (1.0 - c.t0) * at(*this, c.i, c.j + 1) + c.t0 * at(*this, c.i + 1, c.j + 1);
    return (1.0 - c.t1) * a + c.t1 * b;
}

Vec DistanceFieldGrid::gradient_at(const Vec& z) const {
    const Cell c = locate(*this, z);
    const Eigen::Vector2d a = (1.0 - c.t0) * node_gradient(*this, c.i, c.j) + c.t0 * node_gradient(*this, c.i + 1, c.j);
    const Eigen::Vector2d b =
        (1.0 - c.t0) * node_gradient(*this, c.i, c.j + 1) + c.t0 * node_gradient(*this, c.i + 1, c.j + 1);
    return (1.0 - c.t1) * a + c.t1 * b;
}

double DistanceFieldGrid::normalize_volume(double volume) const {
    return std::max(0.0, (volume - v_min) / (v_max - v_min));
}

double metric_volume(const Mat& m) {
    if (m.rows() != m.cols()) throw DimensionError("metric_volume: metric must be square");
    return std::sqrt(std::abs(m.determinant()));
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void calibrate_alpha(DistanceFieldGrid& grid, const std::vector<double>& boundary_volume_norm, double rho_imp) {
    if (!(rho_imp > 0.0)) throw ArgumentError("calibrate_alpha: rho_imp must be positive");
    if (grid.volume_norm.size() != static_cast<std::size_t>(grid.res) * static_cast<std::size_t>(grid.res)) {
        throw ArgumentError("calibrate_alpha: grid carries no normalized volumes");
    }
    std::vector<double> floored;
    for (double v : boundary_volume_norm) floored.push_back(v + kVolumeFloor);
    grid.rho_imp = rho_imp;
    grid.alpha = floored.empty() ? 1.0 : rho_imp * median(floored);
    grid.values.resize(grid.volume_norm.size());
    for (std::size_t i = 0; i < grid.values.size(); ++i) grid.values[i] = grid.alpha / (grid.volume_norm[i] + kVolumeFloor);
}

DistanceFieldGrid build_distance_field(const MetricProvider& metric, const GridBounds& bounds, int res, double rho_imp,
                                       const std::vector<Vec>& boundary) {
    if (res < 16) throw ArgumentError("build_distance_field: resolution must be at least 16 per axis");
    DistanceFieldGrid grid;
    grid.lo0 = bounds.lo0;
    grid.hi0 = bounds.hi0;
    grid.lo1 = bounds.lo1;
    grid.hi1 = bounds.hi1;
    grid.res = res;
    if (!(grid.hi0 > grid.lo0) || !(grid.hi1 > grid.lo1)) throw ArgumentError("build_distance_field: empty bounds");

    std::vector<Vec> points;
    points.reserve(static_cast<std::size_t>(res) * static_cast<std::size_t>(res));
    for (int j = 0; j < res; ++j) {
        for (int i = 0; i < res; ++i) {
            points.push_back(Eigen::Vector2d(grid.lo0 + i * grid.step0(), grid.lo1 + j * grid.step1()));
        }
    }
    const auto volume = [&metric](const Vec& z) { return metric_volume(metric(z)); };
    const std::vector<double> vols = kernels::map_scalar_parallel(volume, points);
    for (double v : vols) {
        if (!std::isfinite(v)) throw NumericError("build_distance_field: non-finite metric volume");
    }
    grid.v_min = *std::min_element(vols.begin(), vols.end());
    grid.v_max = *std::max_element(vols.begin(), vols.end());
    if (!(grid.v_max > grid.v_min)) {
        throw NumericError("build_distance_field: degenerate metric, volume is constant over the grid");
    }
    grid.volume_norm.resize(vols.size());
    for (std::size_t i = 0; i < vols.size(); ++i) grid.volume_norm[i] = (vols[i] - grid.v_min) / (grid.v_max - grid.v_min);

    std::vector<double> boundary_norm;
    for (const Vec& b : boundary) boundary_norm.push_back(grid.normalize_volume(volume(b)));
    calibrate_alpha(grid, boundary_norm, rho_imp);
    return grid;
}

AlphaCheck check_alpha(const DistanceFieldGrid& grid, const std::vector<Vec>& inside, const std::vector<Vec>& outside) {
    AlphaCheck c;
    for (const Vec& z : inside) c.inside_below = c.inside_below && grid.value_at(z) < grid.rho_imp;
    for (const Vec& z : outside) c.outside_above = c.outside_above && grid.value_at(z) >= grid.rho_imp;
    return c;
}

Vec normal_from_field(const DistanceFieldGrid& grid, const Vec& z) {
    if (!grid.contains(z)) throw ArgumentError("normal_from_field: point outside the grid");
    const Vec g = grid.gradient_at(z);
    const double n = g.norm();
    if (!(n >= 1e-12)) {
        throw NumericError("normal_from_field: flat field at (" + std::to_string(z(0)) + ", " + std::to_string(z(1)) + ")");
    }
    return g / n;
}

Vec tangential_field(const Vec& n, const Vec& target) {
    if (n.size() != 2 || target.size() != 2) throw UnsupportedDimension("tangential_field: only 2-D latent spaces");
    if (target.norm() == 0.0) throw ArgumentError("tangential_field: zero target direction");
    const Vec u = n.normalized();
    const Eigen::Vector2d ccw(-u(1), u(0));
    const Eigen::Vector2d cw(u(1), -u(0));
    return ccw.dot(target) >= cw.dot(target) ? Vec(ccw) : Vec(cw);
}

Vec modulate_riemannian(const RiemannianModulator& mod, const Vec& z, const Vec& v, const std::optional<Vec>& target) {
    if (v.size() != z.size()) throw DimensionError("modulate_riemannian: velocity and state dimensions differ");
    if (!(mod.sigma_beta > 0.0)) throw ArgumentError("modulate_riemannian: sigma_beta must be positive");
    if (!mod.grid.contains(z)) return v;
    const Vec grad = mod.grid.gradient_at(z);
    if (!(grad.norm() >= 1e-12)) return v;
    const Vec n = grad.normalized();
    const ModulationEigen lam = lambdas_riemannian(mod.grid.value_at(z), mod.grid.rho_imp, mod.nu, mod.k);
    const Mat g_mat = modulation_matrix(n, lam);
    const Vec gv = g_mat * v;

    Vec dir;
    if (target && target->norm() > 0.0) {
        dir = *target;
    } else if (mod.goal.size() == z.size() && (mod.goal - z).norm() > 0.0) {
        dir = mod.goal - z;
    } else if (v.norm() > 0.0) {
        dir = v;
    } else {
        dir = Eigen::Vector2d(-n(1), n(0));
    }
    const Vec g = tangential_field(n, dir);
    const double beta = std::exp(-gv.squaredNorm() / (mod.sigma_beta * mod.sigma_beta));
    return gv + beta * v.norm() * (g_mat * g);
}

VelocityModulation make_modulation(const SphereObstacle& obs) {
    return [obs](const Vec& x, const Vec& v) { return modulate(obs, x, v); };
}

VelocityModulation make_modulation(const RiemannianModulator& mod) {
    return [mod](const Vec& z, const Vec& v) { return modulate_riemannian(mod, z, v); };
}

nlohmann::json grid_to_json(const DistanceFieldGrid& grid) {
    nlohmann::json j;
    j["version"] = 1;
    j["bounds"] = {grid.lo0, grid.hi0, grid.lo1, grid.hi1};
    j["res"] = grid.res;
    j["values"] = grid.values;
    j["volume_norm"] = grid.volume_norm;
    j["normalization"] = {{"v_min", grid.v_min}, {"v_max", grid.v_max}, {"alpha", grid.alpha}, {"rho_imp", grid.rho_imp}};
    return j;
}

DistanceFieldGrid grid_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != 1) throw ParseError("/version: unsupported distance-field version");
        DistanceFieldGrid g;
        const auto b = j.at("bounds").get<std::vector<double>>();
        if (b.size() != 4) throw ParseError("/bounds: expected [lo0, hi0, lo1, hi1]");
        g.lo0 = b[0];
        g.hi0 = b[1];
        g.lo1 = b[2];
        g.hi1 = b[3];
        g.res = j.at("res").get<int>();
        g.values = j.at("values").get<std::vector<double>>();
        if (j.contains("volume_norm")) g.volume_norm = j.at("volume_norm").get<std::vector<double>>();
        const auto& n = j.at("normalization");
        g.v_min = n.at("v_min").get<double>();
        g.v_max = n.at("v_max").get<double>();
        g.alpha = n.at("alpha").get<double>();
        g.rho_imp = n.at("rho_imp").get<double>();
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("distance field: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("distance field: ") + e.what());
    }
}

}  // namespace contraflow
