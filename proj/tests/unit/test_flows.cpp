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
#include "contraflow/flows.hpp"
#include "contraflow/lie_group.hpp"
#include "helpers.hpp"

using namespace contraflow;
using contraflow::testing::max_abs;
using contraflow::testing::random_matrix;
using contraflow::testing::random_vector;

namespace {

FlowConfig small_flow(int dim, CouplingKind kind, int layers = 3) {
    FlowConfig cfg;
    cfg.dim = dim;
    cfg.layers = layers;
    cfg.net.kind = kind;
    cfg.net.hidden = {12, 12};
    cfg.net.res_hidden = 10;
    cfg.net.res_blocks = 2;
    cfg.net.spline.bins = 6;
    cfg.net.spline.bound = 4.0;
    return cfg;
}

// Scalar loss sum(W .* out) so gradients can be checked with one tape pass.
double weighted(const Mat& out, const Mat& w) { return (out.array() * w.array()).sum(); }

}  // namespace

TEST_CASE("spline is the identity at zero raw parameters") {
    SplineSpec spec;
    const std::vector<double> raw(static_cast<std::size_t>(spec.raw_size()), 0.0);
    for (double x : {-12.0, -10.0, -3.3, 0.0, 0.7, 9.99, 10.0, 25.0}) {
        const SplineEval e = rq_spline(x, raw.data(), spec);
        CHECK(e.y == doctest::Approx(x).epsilon(1e-12));
        CHECK(e.dydx == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("spline is monotone, invertible and differentiable") {
    Rng rng(1);
    SplineSpec spec;
    spec.bins = 5;
    spec.bound = 3.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Vec raw = random_vector(rng, spec.raw_size(), 2.0);
        double prev = -1e300;
        for (int i = 0; i <= 200; ++i) {
            const double x = -4.0 + 8.0 * i / 200.0;
            const SplineEval e = rq_spline(x, raw.data(), spec);
            CHECK(e.y > prev);
            CHECK(e.dydx > 0.0);
            prev = e.y;
            CHECK(rq_spline_inverse(e.y, raw.data(), spec) == doctest::Approx(x).epsilon(1e-10));
        }
        // endpoints map to themselves
        CHECK(rq_spline(-3.0, raw.data(), spec).y == doctest::Approx(-3.0).epsilon(1e-12));
        CHECK(rq_spline(3.0, raw.data(), spec).y == doctest::Approx(3.0).epsilon(1e-12));

        const double x = rng.uniform(-2.9, 2.9);
        const double h = 1e-6;
        const double fd = (rq_spline(x + h, raw.data(), spec).y - rq_spline(x - h, raw.data(), spec).y) / (2 * h);
        CHECK(rq_spline(x, raw.data(), spec).dydx == doctest::Approx(fd).epsilon(1e-6));

        std::vector<double> draw(static_cast<std::size_t>(spec.raw_size()));
        rq_spline(x, raw.data(), spec, draw.data());
        Vec r = raw;
        for (int k = 0; k < spec.raw_size(); ++k) {
            r(k) = raw(k) + h;
            const double up = rq_spline(x, r.data(), spec).y;
            r(k) = raw(k) - h;
            const double dn = rq_spline(x, r.data(), spec).y;
            r(k) = raw(k);
            CHECK(draw[static_cast<std::size_t>(k)] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("coupling masks alternate") {
    ParamStore store;
    CouplingNetSpec spec;
    const CouplingLayer even(store, "a", 5, 0, spec);
    const CouplingLayer odd(store, "b", 5, 1, spec);
    CHECK(even.conditioned() == std::vector<Index>{0, 2, 4});
    CHECK(even.transformed() == std::vector<Index>{1, 3});
    CHECK(odd.conditioned() == std::vector<Index>{1, 3});
    CHECK(odd.transformed() == std::vector<Index>{0, 2, 4});
}

TEST_CASE("initialized flows are the identity") {
    for (CouplingKind kind : {CouplingKind::Affine, CouplingKind::Spline}) {
        ParamStore store;
        const FlowStack flow(store, small_flow(4, kind));
        Rng rng(2);
        flow.init(store, rng);
        for (int i = 0; i < 20; ++i) {
            const Vec u = random_vector(rng, 4);
            CHECK(max_abs(flow.forward(store, u) - u) < 1e-12);
        }
    }
}

TEST_CASE("flows invert exactly for random parameters") {
    for (CouplingKind kind : {CouplingKind::Affine, CouplingKind::Spline}) {
        for (int dim : {2, 3, 4, 6}) {
            ParamStore store;
            const FlowStack flow(store, small_flow(dim, kind));
            Rng rng(static_cast<std::uint64_t>(dim) + 10);
            store.values() = random_vector(rng, static_cast<Index>(store.size()), 0.3);
            for (int i = 0; i < 100; ++i) {
                const Vec u = random_vector(rng, dim, 2.0);
                const Vec x = flow.forward(store, u);
                CHECK(max_abs(flow.inverse(store, x) - u) < 1e-10);
            }
        }
    }
}

TEST_CASE("tape forward and inverse match plain evaluation and gradients") {
    for (CouplingKind kind : {CouplingKind::Affine, CouplingKind::Spline}) {
        ParamStore store;
        FlowConfig cfg = small_flow(4, kind, 2);
        const FlowStack flow(store, cfg);
        Rng rng(3);
        store.values() = random_vector(rng, static_cast<Index>(store.size()), 0.3);
        const Mat u = random_matrix(rng, 5, 4);
        const Mat w = random_matrix(rng, 5, 4);

        auto plain = [&](bool inverse) {
            Mat out(5, 4);
            for (Index i = 0; i < 5; ++i) {
                const Vec r = u.row(i).transpose();
                out.row(i) = (inverse ? flow.inverse(store, r) : flow.forward(store, r)).transpose();
            }
            return out;
        };
        for (bool inverse : {false, true}) {
            ad::Tape tape(store);
            const ad::Var out = inverse ? flow.inverse(tape, u) : flow.forward(tape, tape.constant(u));
            CHECK(max_abs(tape.value(out) - plain(inverse)) < 1e-12);
            const ad::Var loss = ad::sum(ad::mul(out, tape.constant(w)));
            const Vec g = tape.gradient(loss);
            const double h = 1e-6;
            Vec fd(store.size());
            for (Index k = 0; k < fd.size(); ++k) {
                const double keep = store.values()(k);
                store.values()(k) = keep + h;
                const double up = weighted(plain(inverse), w);
                store.values()(k) = keep - h;
                const double dn = weighted(plain(inverse), w);
                store.values()(k) = keep;
                fd(k) = (up - dn) / (2 * h);
            }
            CHECK(max_abs(g - fd) <= 1e-5 * std::max(1.0, max_abs(fd)));
        }
    }
}

TEST_CASE("affine tangents match finite differences") {
    ParamStore store;
    const FlowStack flow(store, small_flow(4, CouplingKind::Affine));
    Rng rng(4);
    store.values() = random_vector(rng, static_cast<Index>(store.size()), 0.4);
    CHECK(flow.has_exact_tangent());
    for (int i = 0; i < 10; ++i) {
        const Vec u = random_vector(rng, 4);
        const Mat t = flow.forward_tangent(store, u, Mat::Identity(4, 4));
        const Mat fd = finite_diff_jacobian([&](const Vec& v) { return flow.forward(store, v); }, u);
        CHECK(max_abs(t - fd) < 1e-7);
    }
    ParamStore s2;
    const FlowStack spline(s2, small_flow(4, CouplingKind::Spline));
    CHECK_FALSE(spline.has_exact_tangent());
}

TEST_CASE("pi-ball head") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Vec inner = random_vector(rng, 3);
        const Mat fd = finite_diff_jacobian([](const Vec& v) { return lie::pi_ball_layer(v); }, inner);
        CHECK(max_abs(pi_ball_jacobian(inner) - fd) < 1e-7);
    }
    for (CouplingKind kind : {CouplingKind::Affine, CouplingKind::Spline}) {
        ParamStore store;
        FlowConfig cfg = small_flow(6, kind);
        cfg.ball_head = {3, 4, 5};
        const FlowStack flow(store, cfg);
        store.values() = random_vector(rng, static_cast<Index>(store.size()), 0.3);
        for (int i = 0; i < 50; ++i) {
            const Vec u = random_vector(rng, 6);
            const Vec x = flow.forward(store, u);
            CHECK(x.tail(3).norm() < M_PI);
            CHECK(max_abs(flow.inverse(store, x) - u) < 1e-8);
        }
        const Mat u = random_matrix(rng, 3, 6);
        ad::Tape tape(store);
        const ad::Var out = flow.forward(tape, tape.constant(u));
        for (Index i = 0; i < 3; ++i)
            CHECK(max_abs(tape.value(out).row(i).transpose() - flow.forward(store, u.row(i).transpose())) < 1e-12);
        if (kind == CouplingKind::Affine) {
            const Vec p = random_vector(rng, 6);
            const Mat t = flow.forward_tangent(store, p, Mat::Identity(6, 6));
            const Mat fd = finite_diff_jacobian([&](const Vec& v) { return flow.forward(store, v); }, p);
            CHECK(max_abs(t - fd) < 1e-6);
        }
    }
}

TEST_CASE("coupling kind names") {
    CHECK(coupling_from_string(to_string(CouplingKind::Spline)) == CouplingKind::Spline);
    CHECK(coupling_from_string(to_string(CouplingKind::Affine)) == CouplingKind::Affine);
    CHECK_THROWS_AS(coupling_from_string("glow"), ArgumentError);
}
