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


#include <doctest.h>

#include <cmath>

#include "contraflow/errors.hpp"
#include "contraflow/metrics.hpp"
#include "helpers.hpp"

using namespace contraflow;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

// Brute-force dtwd written directly from the double sum.
double dtwd_oracle(const Trajectory& a, const Trajectory& b) {
    double total = 0.0;
    for (const Vec& q : b) {
        double best = 1e300;
        for (const Vec& p : a) best = std::min(best, (p - q).norm());
        total += best;
    }
    for (const Vec& p : a) {
        double best = 1e300;
        for (const Vec& q : b) best = std::min(best, (p - q).norm());
        total += best;
    }
    return total;
}

}  // namespace

TEST_CASE("dtwd hand cases") {
    const Trajectory a{v2(0, 0), v2(1, 0)};
    CHECK(dtwd(a, a) == 0.0);
    CHECK(std::abs(dtwd({v2(0, 0)}, {v2(3, 4)}) - 10.0) <= 1e-12);
    CHECK(std::abs(dtwd(a, {v2(0, 1)}) - (2.0 + std::sqrt(2.0))) <= 1e-12);
    CHECK_THROWS_AS(dtwd({}, a), ArgumentError);
}

TEST_CASE("dtwd properties") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        Trajectory a, b;
        const int na = 1 + i % 7, nb = 1 + (i * 3) % 11;
        for (int k = 0; k < na; ++k) a.push_back(contraflow::testing::random_vector(rng, 3));
        for (int k = 0; k < nb; ++k) b.push_back(contraflow::testing::random_vector(rng, 3));
        CHECK(dtwd(a, b) == dtwd(b, a));
        CHECK(dtwd(a, b) >= 0.0);
        CHECK(dtwd(a, b) == doctest::Approx(dtwd_oracle(a, b)).epsilon(1e-14));
        CHECK(dtwd(a, a) == 0.0);
    }
}

TEST_CASE("straight-line baseline") {
    const Trajectory demo{v2(0, 0), v2(5, 5), v2(1, 3), v2(3, 0)};
    const Trajectory line = straight_line_baseline(demo);
    REQUIRE(line.size() == 4);
    CHECK(line.front() == demo.front());
    CHECK(line.back() == demo.back());
    CHECK((line[1] - v2(1, 0)).norm() < 1e-15);
}

TEST_CASE("convex hull and region") {
    const std::vector<Point2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.5, 0.0}};
    const Polygon2 h = convex_hull(square);
    CHECK(h.vertices.size() == 4);
    const Polygon2 again = convex_hull(h.vertices);
    CHECK(again.vertices == h.vertices);

    const Polygon2 r0 = hull_region(square, 0.0);
    CHECK(r0.vertices == h.vertices);
    const Polygon2 r1 = hull_region(square, 0.1);
    for (const Point2& v : r0.vertices) CHECK(point_in_polygon(r1, v));
    CHECK(point_in_polygon(r1, Point2(-0.05, 0.5)));
    CHECK_FALSE(point_in_polygon(r0, Point2(-0.05, 0.5)));

    CHECK(default_hull_margin(square) == doctest::Approx(0.05 * std::sqrt(2.0)));
    CHECK_THROWS_AS(convex_hull({{0, 0}, {1, 1}, {2, 2}}), ArgumentError);

    Rng rng(2);
    std::vector<Point2> cloud;
    for (int i = 0; i < 300; ++i) cloud.emplace_back(rng.normal(), 0.3 * rng.normal());
    const Polygon2 hc = hull_region(cloud, default_hull_margin(cloud));
    for (const Point2& p : cloud) CHECK(point_in_polygon(hc, p));
}

TEST_CASE("point in polygon and steps in region") {
    Polygon2 sq;
    sq.vertices = {{0, 0}, {2, 0}, {2, 2}, {0, 2}};
    CHECK(point_in_polygon(sq, Point2(1, 1)));
    CHECK(point_in_polygon(sq, Point2(2, 1)));
    CHECK(point_in_polygon(sq, Point2(0, 0)));
    CHECK_FALSE(point_in_polygon(sq, Point2(3, 1)));

    const Trajectory inside{v2(0.5, 0.5), v2(1, 1), v2(1.5, 1.5)};
    CHECK(steps_in_region(inside, sq) == 3);
    const Trajectory outside{v2(5, 5), v2(-1, 1)};
    CHECK(steps_in_region(outside, sq) == 0);
    // crosses in, lingers, leaves: (-1,1) out, (0,1) edge, (1,1) in, (2,1.5) edge, (3,1) out
    const Trajectory crossing{v2(-1, 1), v2(0, 1), v2(1, 1), v2(2, 1.5), v2(3, 1)};
    CHECK(steps_in_region(crossing, sq) == 3);
}

TEST_CASE("contraction maps") {
    Mat d = Mat::Zero(2, 2);
    d.diagonal() << -1, -3;
    GridSpec spec;
    spec.res = 6;
    const ContractionMaps m = contraction_maps([&](const Vec&) { return d; }, spec, 2);
    REQUIRE(m.rate.size() == 36);
    for (std::size_t i = 0; i < 36; ++i) {
        CHECK(m.rate[i] == doctest::Approx(-1.0));
        CHECK(m.spread[i] == doctest::Approx(2.0));
    }
    CHECK(m.max_rate == doctest::Approx(-1.0));
    CHECK(m.max_spread == doctest::Approx(2.0));

    FieldConfig cfg;
    cfg.hidden = {8};
    JacobianField f(cfg);
    Rng rng(3);
    f.init(rng);
    const ContractionMaps a = contraction_maps(f, spec);
    const ContractionMaps b = contraction_maps(f, spec);
    CHECK(a.rate == b.rate);
    CHECK(a.spread == b.spread);
    const ContractionMaps serial =
        contraction_maps([&](const Vec& x) { return f.full_jacobian(x); }, spec, 2, false);
    CHECK(serial.rate == a.rate);
    CHECK(serial.spread == a.spread);
}

TEST_CASE("monotonicity report") {
    Vec dec(4);
    dec << 4, 3, 2, 1;
    CHECK(monotonicity_report(dec).monotone);
    Vec up(5);
    up << 4, 3, 3.5, 2, 1;
    const MonotonicityReport r = monotonicity_report(up);
    CHECK_FALSE(r.monotone);
    CHECK(r.first_violation == 2);
    CHECK(monotonicity_report(Vec::Zero(6)).monotone);
    Vec tiny(3);
    tiny << 1.0, 1.0 + 5e-7, 0.5;
    CHECK(monotonicity_report(tiny).monotone);
}

TEST_CASE("report serialization") {
    EvalReport rep;
    rep.dtwd = {1.0, 2.0};
    rep.dtwd_baseline = {3.0, 4.0};
    rep.steps_in_region = {10, 12};
    rep.total_steps = {12, 12};
    rep.region.vertices = {{0, 0}, {1, 0}, {0, 1}};
    rep.distance_curve = Vec(3);
    rep.distance_curve << 1.0, 0.5, std::numeric_limits<double>::infinity();
    const nlohmann::json j = eval_report_to_json(rep);
    CHECK(j.dump() == eval_report_to_json(rep).dump());
    CHECK(j.dump().find("null") != std::string::npos);
    const std::string csv = eval_report_to_csv(rep);
    CHECK(csv.rfind("demo,dtwd,dtwd_baseline,steps_in_region,total_steps\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
