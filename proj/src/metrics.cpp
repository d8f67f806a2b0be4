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


#include "contraflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "contraflow/errors.hpp"
#include "contraflow/kernels.hpp"

namespace contraflow {

double dtwd(const Trajectory& a, const Trajectory& b) {
    if (a.empty() || b.empty()) throw ArgumentError("dtwd: empty trajectory");
    const Index d = a.front().size();
    for (const Vec& p : a) {
        if (p.size() != d) throw ArgumentError("dtwd: inconsistent state dimension");
    }
    for (const Vec& p : b) {
        if (p.size() != d) throw ArgumentError("dtwd: state dimensions differ");
    }
    std::vector<double> min_a(a.size(), std::numeric_limits<double>::infinity());
    std::vector<double> min_b(b.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double dist = (a[i] - b[j]).norm();
            min_a[i] = std::min(min_a[i], dist);
            min_b[j] = std::min(min_b[j], dist);
        }
    }
    // Two separate partial sums keep dtwd(a, b) == dtwd(b, a) bit-for-bit.
    double sum_a = 0.0;
    double sum_b = 0.0;
    for (double v : min_a) sum_a += v;
    for (double v : min_b) sum_b += v;
    return sum_a + sum_b;
}

Trajectory rows_of(const Mat& states) {
    Trajectory out;
    out.reserve(static_cast<std::size_t>(states.rows()));
    for (Index t = 0; t < states.rows(); ++t) out.push_back(states.row(t).transpose());
    return out;
}

Trajectory straight_line_baseline(const Trajectory& demo) {
    if (demo.empty()) throw ArgumentError("straight_line_baseline: empty demo");
    const std::size_t n = demo.size();
    Trajectory out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double s = n == 1 ? 1.0 : static_cast<double>(t) / static_cast<double>(n - 1);
        out.push_back((1.0 - s) * demo.front() + s * demo.back());
    }
    return out;
}

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

Polygon2 convex_hull(const std::vector<Point2>& points) {
    std::vector<Point2> p = points;
    std::sort(p.begin(), p.end(), [](const Point2& a, const Point2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    p.erase(std::unique(p.begin(), p.end()), p.end());
    if (p.size() < 3) throw ArgumentError("hull_region: need at least three distinct points");
    std::vector<Point2> hull(2 * p.size());
    std::size_t k = 0;
    for (const Point2& q : p) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], q) <= 0.0) --k;
        hull[k++] = q;
    }
    for (std::size_t i = p.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p[i]) <= 0.0) --k;
        hull[k++] = p[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) throw ArgumentError("hull_region: degenerate hull, points are collinear");
    return {hull, 0.0};
}

Polygon2 hull_region(const std::vector<Point2>& points, double margin) {
    if (margin < 0.0) throw ArgumentError("hull_region: margin must be non-negative");
    Polygon2 hull = convex_hull(points);
    if (margin == 0.0) return hull;
    const std::size_t n = hull.vertices.size();
    std::vector<Point2> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& prev = hull.vertices[(i + n - 1) % n];
        const Point2& cur = hull.vertices[i];
        const Point2& next = hull.vertices[(i + 1) % n];
        // Outward normals of a counterclockwise polygon point to the right of each edge.
        const Point2 e0 = (cur - prev).normalized();
        const Point2 e1 = (next - cur).normalized();
        const Point2 normal = (Point2(e0.y(), -e0.x()) + Point2(e1.y(), -e1.x())).normalized();
        out[i] = cur + margin * normal;
    }
    return {out, margin};
}

double default_hull_margin(const std::vector<Point2>& points) {
    if (points.empty()) return 0.0;
    Point2 lo = points.front(), hi = points.front();
    for (const Point2& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return 0.05 * (hi - lo).norm();
}

std::vector<Point2> project_points(const std::vector<Trajectory>& trajs, int dim0, int dim1) {
    std::vector<Point2> out;
    for (const Trajectory& t : trajs) {
        for (const Vec& s : t) {
            if (dim0 >= s.size() || dim1 >= s.size()) throw DimensionError("project_points: column out of range");
            out.emplace_back(s(dim0), s(dim1));
        }
    }
    return out;
}

bool point_in_polygon(const Polygon2& poly, const Point2& p) {
    const std::size_t n = poly.vertices.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& a = poly.vertices[i];
        const Point2& b = poly.vertices[(i + 1) % n];
        const double len = (b - a).norm();
        const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
        if (std::abs(cross(a, b, p)) <= 1e-12 * scale * len && (p - a).dot(b - a) >= 0.0 &&
            (p - b).dot(a - b) >= 0.0) {
            return true;
        }
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& a = poly.vertices[i];
        const Point2& b = poly.vertices[j];
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
            if (p.x() < x) inside = !inside;
        }
    }
    return inside;
}

int steps_in_region(const Trajectory& traj, const Polygon2& poly, int dim0, int dim1) {
    int count = 0;
    for (const Vec& s : traj) {
        if (dim0 >= s.size() || dim1 >= s.size()) throw DimensionError("steps_in_region: column out of range");
        if (point_in_polygon(poly, Point2(s(dim0), s(dim1)))) ++count;
    }
    return count;
}

ContractionMaps contraction_maps(const JacobianFn& jac, const GridSpec& spec, int state_dim, bool parallel) {
    const std::vector<Vec> points = grid_points(spec, state_dim);
    const kernels::PointFn stats = [&jac](const Vec& x) {
        const ContractionStats s = contraction_stats(jac(x));
        return Vec(Eigen::Vector2d(s.rate, s.spread));
    };
    const std::vector<Vec> out =
        parallel ? kernels::map_points_parallel(stats, points) : kernels::map_points_serial(stats, points);
    ContractionMaps maps;
    maps.spec = spec;
    maps.max_rate = -std::numeric_limits<double>::infinity();
    maps.max_spread = 0.0;
    for (const Vec& v : out) {
        maps.rate.push_back(v(0));
        maps.spread.push_back(v(1));
        maps.max_rate = std::max(maps.max_rate, v(0));
        maps.max_spread = std::max(maps.max_spread, v(1));
    }
    return maps;
}

ContractionMaps contraction_maps(const JacobianField& field, const GridSpec& spec, const Vec& cond) {
    return contraction_maps([&field, &cond](const Vec& x) { return field.full_jacobian(x, cond); }, spec,
                            field.state_dim());
}

MonotonicityReport monotonicity_report(const Vec& curve, double tol) {
    for (Index t = 0; t + 1 < curve.size(); ++t) {
        const double bound = curve(t) * (1.0 + tol);
        if (!(curve(t + 1) <= bound)) return {false, static_cast<int>(t + 1)};
    }
    return {true, -1};
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["dtwd"] = r.dtwd;
    j["dtwd_baseline"] = r.dtwd_baseline;
    j["steps_in_region"] = r.steps_in_region;
    j["total_steps"] = r.total_steps;
    nlohmann::json verts = nlohmann::json::array();
    for (const Point2& p : r.region.vertices) verts.push_back({p.x(), p.y()});
    j["region"] = {{"vertices", verts}, {"margin", r.region.margin}};
    const GridSpec& g = r.maps.spec;
    j["contraction"] = {{"bounds", {g.lo0, g.hi0, g.lo1, g.hi1}},
                        {"res", g.res},
                        {"rate", r.maps.rate},
                        {"spread", r.maps.spread},
                        {"max_rate", r.maps.max_rate},
                        {"max_spread", r.maps.max_spread}};
    // Non-finite entries (divergence) are written as null.
    nlohmann::json curve = nlohmann::json::array();
    for (Index i = 0; i < r.distance_curve.size(); ++i) {
        const double v = r.distance_curve(i);
        curve.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    }
    j["distance_curve"] = curve;
    j["monotonicity"] = {{"monotone", r.monotonicity.monotone}, {"first_violation", r.monotonicity.first_violation}};
    j["metadata"] = r.metadata;
    return j;
}

std::string eval_report_to_csv(const EvalReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "demo,dtwd,dtwd_baseline,steps_in_region,total_steps\n";
    for (std::size_t i = 0; i < r.dtwd.size(); ++i) {
        os << i << ',' << r.dtwd[i] << ',' << (i < r.dtwd_baseline.size() ? r.dtwd_baseline[i] : 0.0) << ','
           << (i < r.steps_in_region.size() ? r.steps_in_region[i] : 0) << ','
           << (i < r.total_steps.size() ? r.total_steps[i] : 0) << '\n';
    }
    return os.str();
}

}  // namespace contraflow
