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
#include <filesystem>
#include <fstream>
#include <sstream>

#include "contraflow/errors.hpp"
#include "contraflow/dataset.hpp"
#include "contraflow/lie_group.hpp"
#include "helpers.hpp"

using namespace contraflow;
using contraflow::testing::max_abs;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("contraflow_test_" + name)).string();
}

TrajectoryDataset tiny() {
    TrajectoryDataset ds;
    ds.dim = 2;
    ds.layout = {{ColumnKind::Position, 2}};
    Demo d;
    d.dt = 0.5;
    d.states.resize(4, 2);
    d.states << 1, 2, 3, 4, 5, 7, 2, 2;
    ds.demos = {d, d};
    return ds;
}

std::string expect_parse_error(const nlohmann::json& j) {
    try {
        dataset_from_json(j);
    } catch (const ParseError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("golden file roundtrip is byte-exact") {
    const std::string golden = std::string(CONTRAFLOW_TEST_DATA) + "/golden_dataset.json";
    const TrajectoryDataset ds = load_dataset(golden);
    CHECK(ds.dim == 2);
    REQUIRE(ds.demos.size() == 2);
    CHECK(ds.demos[0].states(0, 0) == 0.30000000000000004);
    CHECK(ds.demos[0].states(1, 0) == 1e-300);
    CHECK(ds.demos[1].condition->size() == 2);
    const std::string out = temp_path("golden.json");
    save_dataset(out, ds);
    CHECK(slurp(out) == slurp(golden));
    std::filesystem::remove(out);
}

TEST_CASE("random payloads roundtrip bit-exactly") {
    Rng rng(1);
    TrajectoryDataset ds = tiny();
    for (Demo& d : ds.demos) d.states = contraflow::testing::random_matrix(rng, 5, 2, 1e3);
    ds.demos[0].states(1, 1) = 5e-324;
    const TrajectoryDataset back = dataset_from_json(nlohmann::json::parse(dataset_to_json(ds).dump()));
    for (std::size_t i = 0; i < ds.demos.size(); ++i) CHECK(back.demos[i].states == ds.demos[i].states);
}

TEST_CASE("schema errors name the field") {
    nlohmann::json j = dataset_to_json(tiny());
    j["demos"][1].erase("dt");
    CHECK(expect_parse_error(j).find("/demos/1/dt") != std::string::npos);

    j = dataset_to_json(tiny());
    j["demos"][0]["states"][2] = {1.0, 2.0, 3.0};
    CHECK(expect_parse_error(j).find("/demos/0/states/2") != std::string::npos);

    j = dataset_to_json(tiny());
    j["layout"][0]["kind"] = "quaternion";
    CHECK(expect_parse_error(j).find("/layout/0/kind") != std::string::npos);

    j = dataset_to_json(tiny());
    j["version"] = 2;
    CHECK(expect_parse_error(j).find("/version") != std::string::npos);

    CHECK_THROWS_AS(load_dataset("/nonexistent/dir/file.json"), IoError);
}

TEST_CASE("validation") {
    TrajectoryDataset ds = tiny();
    ds.demos[1].states = Mat::Zero(4, 3);
    CHECK_THROWS_AS(ds.validate(), ArgumentError);
    ds = tiny();
    ds.layout = {{ColumnKind::Position, 3}};
    CHECK_THROWS_AS(ds.validate(), ArgumentError);
    ds = tiny();
    ds.demos[0].condition = Vec::Ones(1);
    CHECK_THROWS_AS(ds.validate(), ArgumentError);
}

TEST_CASE("velocity estimation") {
    const Vec u = (Vec(3) << 1.0, -2.0, 0.5).finished();
    Mat ramp(6, 3);
    for (Index t = 0; t < 6; ++t) ramp.row(t) = (0.1 * t * u).transpose();
    const Mat v = estimate_velocities(ramp, 0.1);
    for (Index t = 0; t < 5; ++t) CHECK(max_abs(v.row(t).transpose() - u) < 1e-12);
    CHECK(v.row(5).isZero(0.0));

    CHECK(estimate_velocities(Mat::Constant(5, 2, 3.0), 0.2).isZero(0.0));
    CHECK_THROWS_AS(estimate_velocities(Mat::Zero(2, 2), 0.1), ArgumentError);

    const double dt = 0.01;
    Mat s(200, 1);
    for (Index t = 0; t < 200; ++t) s(t, 0) = std::sin(dt * t);
    const Mat vs = estimate_velocities(s, dt);
    for (Index t = 1; t < 199; ++t) CHECK(std::abs(vs(t, 0) - std::cos(dt * t)) <= dt * dt / 6.0 + 1e-12);

    Rng rng(2);
    const Mat x = contraflow::testing::random_matrix(rng, 10, 2);
    const Mat shifted = x.rowwise() + Eigen::RowVector2d(3.0, -7.0);
    CHECK(max_abs(estimate_velocities(x, 0.1) - estimate_velocities(shifted, 0.1)) < 1e-12);
}

TEST_CASE("preprocess") {
    TrajectoryDataset ds = synth_shapes("sine", 3, 30, 0.1, 4);
    for (Demo& d : ds.demos) d.states.rowwise() += Eigen::RowVector2d(0.3, 0.1);
    PreprocessConfig cfg;
    cfg.trim_head = 2;
    cfg.resample_n = 20;
    const TrajectoryDataset p = preprocess(ds, cfg);
    for (const Demo& d : p.demos) {
        CHECK(d.states.rows() == 20);
        CHECK(d.states.row(19).isZero(0.0));
    }
    CHECK(p.provenance.size() > ds.provenance.size());
    const TrajectoryDataset again = preprocess(p, PreprocessConfig{0, true, 20});
    for (std::size_t i = 0; i < p.demos.size(); ++i) CHECK(max_abs(again.demos[i].states - p.demos[i].states) < 1e-12);

    const TrajectoryDataset aligned = synth_shapes("angle", 2, 25, 0.0, 1);
    const TrajectoryDataset same = preprocess(aligned, PreprocessConfig{0, true, 25});
    for (std::size_t i = 0; i < aligned.demos.size(); ++i)
        CHECK(max_abs(same.demos[i].states - aligned.demos[i].states) < 1e-12);

    const Mat states = ds.demos[0].states;
    const Mat r = resample_arc_length(states, 13);
    CHECK(r.row(0) == states.row(0));
    CHECK(r.row(12) == states.row(states.rows() - 1));
}

TEST_CASE("stacking") {
    const TrajectoryDataset a = synth_shapes("sine", 3, 20, 0.0, 1);
    const TrajectoryDataset b = synth_shapes("line", 3, 20, 0.0, 1);
    const TrajectoryDataset s = stack(a, b);
    CHECK(s.dim == 4);
    CHECK(s.layout.size() == 2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(s.demos[i].states.leftCols(2) == a.demos[i].states);
        CHECK(s.demos[i].states.rightCols(2) == b.demos[i].states);
    }
    const TrajectoryDataset c = synth_shapes("angle", 3, 20, 0.0, 1);
    CHECK(stack(stack(a, b), c).layout == stack(a, stack(b, c)).layout);
    CHECK_THROWS_AS(stack(a, synth_shapes("line", 2, 20, 0.0, 1)), ArgumentError);
    CHECK_THROWS_AS(stack(a, synth_shapes("line", 3, 21, 0.0, 1)), ArgumentError);
}

TEST_CASE("synthetic shapes") {
    for (const std::string& name : synth_shape_names()) {
        const TrajectoryDataset d0 = synth_shapes(name, 4, 50, 0.0, 1);
        const TrajectoryDataset d1 = synth_shapes(name, 4, 50, 0.2, 9);
        const TrajectoryDataset d2 = synth_shapes(name, 4, 50, 0.2, 9);
        for (std::size_t i = 0; i < 4; ++i) {
            if (name != "multimodal") CHECK(d0.demos[i].states == d0.demos[0].states);
            CHECK(d1.demos[i].states == d2.demos[i].states);
            CHECK(d1.demos[i].states.row(49).isZero(0.0));
            CHECK(d1.demos[i].dt == doctest::Approx(kSynthDuration / 49));
        }
        const TrainingSet ts = to_training_set(d1);
        CHECK(ts.velocities.row(49).isZero(0.0));
    }
    const TrajectoryDataset line = synth_shapes("line", 1, 30, 0.0, 1);
    const Eigen::RowVector2d dir = line.demos[0].states.row(0).normalized();
    for (Index t = 0; t < 30; ++t) {
        const Eigen::RowVector2d p = line.demos[0].states.row(t);
        CHECK(std::abs(p(0) * dir(1) - p(1) * dir(0)) < 1e-12);
    }
    CHECK_THROWS_AS(synth_shapes("spiral", 1, 30, 0.0, 1), ArgumentError);
    CHECK_THROWS_AS(synth_shapes("line", 1, 5, 0.0, 1), ArgumentError);
}

TEST_CASE("synthetic pose data") {
    const TrajectoryDataset base = synth_shapes("sine", 2, 40, 0.05, 3);
    const TrajectoryDataset pose = synth_pose_dataset(base, 1.0);
    CHECK(pose.dim == 6);
    CHECK(pose.columns(ColumnKind::So3) == std::vector<Index>{3, 4, 5});
    for (const Demo& d : pose.demos) {
        for (Index t = 0; t < d.states.rows(); ++t) {
            const lie::Vec3 r = d.states.row(t).tail(3).transpose();
            CHECK(r.norm() < M_PI);
            CHECK(lie::is_rotation(lie::so3_exp(r), 1e-9));
            CHECK(d.states(t, 2) == 0.0);
        }
    }
    TrajectoryDataset zero = base;
    for (Demo& d : zero.demos) d.states.setZero();
    for (const Demo& d : synth_pose_dataset(zero, 1.0).demos) CHECK(d.states.isZero(0.0));
    CHECK_THROWS_AS(synth_pose_dataset(base, 3.0), FirstCoverError);
}

TEST_CASE("csv export") {
    const std::string csv = dataset_to_csv(tiny());
    CHECK(csv.rfind("demo,t,s1,s2\n0,0,1,2\n0,0.5,3,4\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
}
