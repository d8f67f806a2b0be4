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
#include <cstring>
#include <limits>

#include "contraflow/errors.hpp"
#include "contraflow/serialization.hpp"
#include "helpers.hpp"

using namespace contraflow;
using contraflow::testing::random_vector;

TEST_CASE("hex doubles roundtrip exactly") {
    Rng rng(1);
    std::vector<double> values{0.0, -0.0, 1.0, 0.1, -2.5e300, 5e-324, std::numeric_limits<double>::min(),
                               std::numeric_limits<double>::max(), M_PI};
    for (int i = 0; i < 1000; ++i) values.push_back(rng.normal() * std::pow(10.0, rng.uniform(-30, 30)));
    for (double v : values) {
        const double back = parse_hex_double(hex_double(v));
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
    CHECK_THROWS_AS(parse_hex_double("0x1.8p+1junk"), ParseError);
    CHECK_THROWS_AS(parse_hex_double(""), ParseError);
}

TEST_CASE("NCDS roundtrip") {
    for (RegKind kind : {RegKind::Constant, RegKind::StateIndependentVector, RegKind::StateDependentVector,
                         RegKind::Eigenvalue}) {
        FieldConfig cfg;
        cfg.state_dim = 3;
        cfg.cond_dim = 1;
        cfg.hidden = {7, 5};
        cfg.activation = Activation::Softplus;
        cfg.reg.kind = kind;
        cfg.reg.beta = 0.25;
        cfg.reg.reference = EigenReference::Index;
        cfg.reg.reference_index = 1;
        cfg.skew = true;
        Ncds m(cfg, QuadratureScheme::GaussLegendre, 12);
        Rng rng(2);
        m.init(rng);
        m.params().values() = random_vector(rng, static_cast<Index>(m.params().size()));

        const nlohmann::json j = ncds_to_json(m);
        CHECK(j.at("format") == "contraflow.ncds");
        CHECK(j.at("version") == kModelFormatVersion);
        const Ncds back = ncds_from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.params().values() == m.params().values());
        CHECK(back.quadrature().nodes.size() == 12);
        CHECK(ncds_to_json(back).dump() == j.dump());
        const Vec x = random_vector(rng, 3);
        const Vec c = random_vector(rng, 1);
        CHECK(back.velocity(x, c) == m.velocity(x, c));
        CHECK(back.field().config().reg.kind == kind);
    }
}

TEST_CASE("VAE roundtrip") {
    for (CouplingKind kind : {CouplingKind::Affine, CouplingKind::Spline}) {
        VaeConfig cfg;
        cfg.ambient_dim = 6;
        cfg.latent_dim = 2;
        cfg.net.kind = kind;
        cfg.net.hidden = {6};
        cfg.net.res_hidden = 6;
        cfg.net.spline.bins = 4;
        cfg.ball_head = {3, 4, 5};
        InjectiveVae vae(cfg);
        Rng rng(3);
        vae.init(rng);
        vae.params().values() = random_vector(rng, static_cast<Index>(vae.params().size()), 0.2);
        const nlohmann::json j = vae_to_json(vae);
        CHECK(j.at("format") == "contraflow.vae");
        const InjectiveVae back = vae_from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.params().values() == vae.params().values());
        CHECK(vae_to_json(back).dump() == j.dump());
        const Vec z = random_vector(rng, 2);
        CHECK(back.decode(z) == vae.decode(z));

        nlohmann::json bad = j;
        bad["masks"][0] = nlohmann::json::array({0, 1});
        CHECK_THROWS_AS(vae_from_json(bad), ParseError);
    }
}

TEST_CASE("malformed model documents") {
    FieldConfig cfg;
    cfg.hidden = {4};
    const Ncds m(cfg);
    nlohmann::json j = ncds_to_json(m);
    j["version"] = 2;
    CHECK_THROWS_AS(ncds_from_json(j), ParseError);
    j = ncds_to_json(m);
    j["format"] = "contraflow.vae";
    CHECK_THROWS_AS(ncds_from_json(j), ParseError);
    j = ncds_to_json(m);
    j["params"]["values"].erase(0);
    CHECK_THROWS_AS(ncds_from_json(j), ParseError);
    j = ncds_to_json(m);
    j["config"].erase("state_dim");
    CHECK_THROWS_AS(ncds_from_json(j), ParseError);
    CHECK_THROWS_AS(read_json_file("/nonexistent/model.json"), IoError);
}
