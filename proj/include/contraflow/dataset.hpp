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

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "contraflow/linalg.hpp"
#include "contraflow/ncds.hpp"

namespace contraflow {

enum class ColumnKind { Position, So3, Plain };

std::string to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view name);

struct LayoutBlock {
    ColumnKind kind = ColumnKind::Plain;
    int span = 1;

    bool operator==(const LayoutBlock&) const = default;
};

struct Demo {
    double dt = 0.01;
    Mat states;  // T x D
    std::optional<Vec> condition;
};

struct TrajectoryDataset {
    int dim = 0;
    std::vector<LayoutBlock> layout;
    std::vector<Demo> demos;
    std::vector<std::string> provenance;

    /// Throws ArgumentError when demos disagree with `dim`/layout or each other.
    void validate() const;
    int cond_dim() const;
    std::vector<Index> columns(ColumnKind kind) const;
    std::size_t total_points() const;
};

nlohmann::json dataset_to_json(const TrajectoryDataset& ds);
/// Throws ParseError naming the JSON pointer of the offending field.
TrajectoryDataset dataset_from_json(const nlohmann::json& j);
TrajectoryDataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const TrajectoryDataset& ds);
/// One row per sample: t, s1..sD.
std::string dataset_to_csv(const TrajectoryDataset& ds);

/// Central differences inside, one-sided at both ends, last sample set to zero.
std::vector<Mat> estimate_velocities(const TrajectoryDataset& ds);
Mat estimate_velocities(const Mat& states, double dt);

struct PreprocessConfig {
    int trim_head = 0;
    bool align_target = true;
    int resample_n = 0;  // 0 keeps the sample count; demos already at resample_n are untouched
};

TrajectoryDataset preprocess(const TrajectoryDataset& ds, const PreprocessConfig& cfg);
/// Linear interpolation at n arc-length-uniform stations; endpoints are kept exactly.
Mat resample_arc_length(const Mat& states, int n);

TrajectoryDataset stack(const TrajectoryDataset& a, const TrajectoryDataset& b);

/// Pools every demo sample with its estimated velocity and condition.
TrainingSet to_training_set(const TrajectoryDataset& ds);

inline constexpr double kSynthDuration = 4.0;

const std::vector<std::string>& synth_shape_names();
TrajectoryDataset synth_shapes(std::string_view name, int n_demos, int n_points, double noise, std::uint64_t seed);
/// Lifts a 2-D dataset to [position(3), so3(3)] with r = scale * (x, y, 0).
TrajectoryDataset synth_pose_dataset(const TrajectoryDataset& base2d, double scale);

}  // namespace contraflow
