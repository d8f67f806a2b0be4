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

#include <json.hpp>

#include "contraflow/jacobian_field.hpp"
#include "contraflow/linalg.hpp"
#include "contraflow/ncds.hpp"

namespace contraflow {

using Point2 = Eigen::Vector2d;
using Trajectory = std::vector<Vec>;

/// sum_j min_i d(a_i, b_j) + sum_i min_j d(a_i, b_j), Euclidean d.
double dtwd(const Trajectory& a, const Trajectory& b);
Trajectory rows_of(const Mat& states);

/// Same length as `demo`, linear from its first to its last state.
Trajectory straight_line_baseline(const Trajectory& demo);

struct Polygon2 {
    std::vector<Point2> vertices;  // counterclockwise
    double margin = 0.0;
};

/// Monotone-chain hull without collinear vertices. Throws ArgumentError when
/// fewer than three non-collinear points are given.
Polygon2 convex_hull(const std::vector<Point2>& points);
/// Hull of the 2-D points with every vertex pushed out by `margin` along its vertex normal.
Polygon2 hull_region(const std::vector<Point2>& points, double margin);
/// 5% of the bounding-box diagonal.
double default_hull_margin(const std::vector<Point2>& points);
/// Collects columns (dim0, dim1) of every state.
std::vector<Point2> project_points(const std::vector<Trajectory>& trajs, int dim0 = 0, int dim1 = 1);

/// Ray casting; points on an edge count as inside.
bool point_in_polygon(const Polygon2& poly, const Point2& p);
int steps_in_region(const Trajectory& traj, const Polygon2& poly, int dim0 = 0, int dim1 = 1);

struct ContractionMaps {
    GridSpec spec;
    std::vector<double> rate;    // row-major like grid_points
    std::vector<double> spread;
    double max_rate = 0.0;
    double max_spread = 0.0;
};

using JacobianFn = std::function<Mat(const Vec&)>;

ContractionMaps contraction_maps(const JacobianFn& jac, const GridSpec& spec, int state_dim, bool parallel = true);
ContractionMaps contraction_maps(const JacobianField& field, const GridSpec& spec, const Vec& cond = Vec());

struct MonotonicityReport {
    bool monotone = true;
    int first_violation = -1;  // index t + 1 of the first c(t+1) > c(t) (1 + tol)
};

MonotonicityReport monotonicity_report(const Vec& curve, double tol = 1e-6);

struct EvalReport {
    std::vector<double> dtwd;
    std::vector<double> dtwd_baseline;
    std::vector<int> steps_in_region;
    std::vector<int> total_steps;
    Polygon2 region;
    ContractionMaps maps;
    Vec distance_curve;
    MonotonicityReport monotonicity;
    nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json eval_report_to_json(const EvalReport& report);
/// demo, dtwd, dtwd_baseline, steps_in_region, total_steps.
std::string eval_report_to_csv(const EvalReport& report);

}  // namespace contraflow
