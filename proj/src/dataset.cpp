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


#include "contraflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "contraflow/errors.hpp"
#include "contraflow/lie_group.hpp"
#include "contraflow/rng.hpp"

namespace contraflow {

using nlohmann::json;

std::string to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Position:
            return "position";
        case ColumnKind::So3:
            return "so3";
        case ColumnKind::Plain:
            return "plain";
    }
    return "plain";
}

ColumnKind column_kind_from_string(std::string_view name) {
    if (name == "position") return ColumnKind::Position;
    if (name == "so3") return ColumnKind::So3;
    if (name == "plain") return ColumnKind::Plain;
    throw ArgumentError("unknown column kind '" + std::string(name) + "'");
}

void TrajectoryDataset::validate() const {
    if (dim < 1) throw ArgumentError("dataset: dim must be positive");
    int span = 0;
    for (const LayoutBlock& b : layout) {
        if (b.span < 1) throw ArgumentError("dataset: layout spans must be positive");
        if (b.kind == ColumnKind::So3 && b.span != 3) throw ArgumentError("dataset: so3 blocks span 3 columns");
        span += b.span;
    }
    if (span != dim) throw ArgumentError("dataset: layout covers " + std::to_string(span) + " columns, dim is " + std::to_string(dim));
    if (demos.empty()) throw ArgumentError("dataset: no demonstrations");
    const int c = demos.front().condition ? static_cast<int>(demos.front().condition->size()) : -1;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const Demo& d = demos[i];
        const std::string tag = "dataset: demo " + std::to_string(i);
        if (d.states.cols() != dim) throw ArgumentError(tag + " has " + std::to_string(d.states.cols()) + " columns, expected " + std::to_string(dim));
        if (d.states.rows() < 1) throw ArgumentError(tag + " is empty");
        if (!(d.dt > 0.0) || !std::isfinite(d.dt)) throw ArgumentError(tag + " has a non-positive dt");
        if (!all_finite(d.states)) throw ArgumentError(tag + " contains non-finite states");
        const int ci = d.condition ? static_cast<int>(d.condition->size()) : -1;
        if (ci != c) throw ArgumentError(tag + " disagrees with demo 0 about the condition vector");
    }
}

int TrajectoryDataset::cond_dim() const {
    if (demos.empty() || !demos.front().condition) return 0;
    return static_cast<int>(demos.front().condition->size());
}

std::vector<Index> TrajectoryDataset::columns(ColumnKind kind) const {
    std::vector<Index> out;
    Index col = 0;
    for (const LayoutBlock& b : layout) {
        for (int k = 0; k < b.span; ++k, ++col) {
            if (b.kind == kind) out.push_back(col);
        }
    }
    return out;
}

std::size_t TrajectoryDataset::total_points() const {
    std::size_t n = 0;
    for (const Demo& d : demos) n += static_cast<std::size_t>(d.states.rows());
    return n;
}

json dataset_to_json(const TrajectoryDataset& ds) {
    json j;
    j["version"] = 1;
    j["dim"] = ds.dim;
    j["layout"] = json::array();
    for (const LayoutBlock& b : ds.layout) j["layout"].push_back({{"kind", to_string(b.kind)}, {"span", b.span}});
    j["demos"] = json::array();
    for (const Demo& d : ds.demos) {
        json jd;
        jd["dt"] = d.dt;
        json rows = json::array();
        for (Index t = 0; t < d.states.rows(); ++t) {
            json row = json::array();
            for (Index c = 0; c < d.states.cols(); ++c) row.push_back(d.states(t, c));
            rows.push_back(std::move(row));
        }
        jd["states"] = std::move(rows);
        if (d.condition) jd["condition"] = std::vector<double>(d.condition->data(), d.condition->data() + d.condition->size());
        j["demos"].push_back(std::move(jd));
    }
    if (!ds.provenance.empty()) j["provenance"] = ds.provenance;
    return j;
}

namespace {

const json& field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ParseError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + "/" + key + ": missing required field '" + key + "'");
    return *it;
}

double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ParseError(path + ": expected a number");
    return v.get<double>();
}

int integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ParseError(path + ": expected an integer");
    return v.get<int>();
}

const json& array(const json& v, const std::string& path) {
    if (!v.is_array()) throw ParseError(path + ": expected an array");
    return v;
}

}  // namespace

TrajectoryDataset dataset_from_json(const json& j) {
    TrajectoryDataset ds;
    const int version = integer(field(j, "version", ""), "/version");
    if (version != 1) throw ParseError("/version: unsupported version " + std::to_string(version));
    ds.dim = integer(field(j, "dim", ""), "/dim");
    if (ds.dim < 1) throw ParseError("/dim: must be positive");
    const json& layout = array(field(j, "layout", ""), "/layout");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const std::string p = "/layout/" + std::to_string(i);
        const json& kind = field(layout[i], "kind", p);
        if (!kind.is_string()) throw ParseError(p + "/kind: expected a string");
        LayoutBlock b;
        try {
            b.kind = column_kind_from_string(kind.get<std::string>());
        } catch (const ArgumentError& e) {
            throw ParseError(p + "/kind: " + e.what());
        }
        b.span = integer(field(layout[i], "span", p), p + "/span");
        ds.layout.push_back(b);
    }
    const json& demos = array(field(j, "demos", ""), "/demos");
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const std::string p = "/demos/" + std::to_string(i);
        Demo d;
        d.dt = number(field(demos[i], "dt", p), p + "/dt");
        const json& states = array(field(demos[i], "states", p), p + "/states");
        d.states.resize(static_cast<Index>(states.size()), ds.dim);
        for (std::size_t t = 0; t < states.size(); ++t) {
            const std::string pt = p + "/states/" + std::to_string(t);
            const json& row = array(states[t], pt);
            if (static_cast<int>(row.size()) != ds.dim) {
                throw ParseError(pt + ": state has " + std::to_string(row.size()) + " entries, dim is " + std::to_string(ds.dim));
            }
            for (std::size_t c = 0; c < row.size(); ++c) {
                d.states(static_cast<Index>(t), static_cast<Index>(c)) = number(row[c], pt + "/" + std::to_string(c));
            }
        }
        if (auto it = demos[i].find("condition"); it != demos[i].end()) {
            const json& cond = array(*it, p + "/condition");
            Vec c(static_cast<Index>(cond.size()));
            for (std::size_t k = 0; k < cond.size(); ++k) c(static_cast<Index>(k)) = number(cond[k], p + "/condition/" + std::to_string(k));
            d.condition = c;
        }
        ds.demos.push_back(std::move(d));
    }
    if (auto it = j.find("provenance"); it != j.end()) {
        for (std::size_t i = 0; i < array(*it, "/provenance").size(); ++i) {
            if (!(*it)[i].is_string()) throw ParseError("/provenance/" + std::to_string(i) + ": expected a string");
            ds.provenance.push_back((*it)[i].get<std::string>());
        }
    }
    try {
        ds.validate();
    } catch (const ArgumentError& e) {
        throw ParseError(std::string("/demos: ") + e.what());
    }
    return ds;
}

TrajectoryDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return dataset_from_json(j);
}

void save_dataset(const std::string& path, const TrajectoryDataset& ds) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset '" + path + "'");
    out << dataset_to_json(ds).dump() << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string dataset_to_csv(const TrajectoryDataset& ds) {
    std::ostringstream os;
    os.precision(17);
    os << "demo,t";
    for (int c = 0; c < ds.dim; ++c) os << ",s" << (c + 1);
    os << '\n';
    for (std::size_t i = 0; i < ds.demos.size(); ++i) {
        const Demo& d = ds.demos[i];
        for (Index t = 0; t < d.states.rows(); ++t) {
            os << i << ',' << static_cast<double>(t) * d.dt;
            for (Index c = 0; c < d.states.cols(); ++c) os << ',' << d.states(t, c);
            os << '\n';
        }
    }
    return os.str();
}

Mat estimate_velocities(const Mat& states, double dt) {
    const Index n = states.rows();
    if (n < 3) throw ArgumentError("estimate_velocities: trajectory too short (" + std::to_string(n) + " samples, need 3)");
    if (!(dt > 0.0)) throw ArgumentError("estimate_velocities: dt must be positive");
    Mat v(n, states.cols());
    v.row(0) = (states.row(1) - states.row(0)) / dt;
    for (Index t = 1; t + 1 < n; ++t) v.row(t) = (states.row(t + 1) - states.row(t - 1)) / (2.0 * dt);
    v.row(n - 1).setZero();
    return v;
}

std::vector<Mat> estimate_velocities(const TrajectoryDataset& ds) {
    std::vector<Mat> out;
    out.reserve(ds.demos.size());
    for (const Demo& d : ds.demos) out.push_back(estimate_velocities(d.states, d.dt));
    return out;
}

Mat resample_arc_length(const Mat& states, int n) {
    if (n < 2) throw ArgumentError("resample: need at least two stations");
    const Index t = states.rows();
    if (t < 2) throw ArgumentError("resample: trajectory too short");
    std::vector<double> cum(static_cast<std::size_t>(t), 0.0);
    for (Index i = 1; i < t; ++i) {
        cum[static_cast<std::size_t>(i)] = cum[static_cast<std::size_t>(i - 1)] + (states.row(i) - states.row(i - 1)).norm();
    }
    const double total = cum.back();
    Mat out(n, states.cols());
    out.row(0) = states.row(0);
    out.row(n - 1) = states.row(t - 1);
    if (total == 0.0) {
        for (int k = 1; k + 1 < n; ++k) out.row(k) = states.row(0);
        return out;
    }
    Index seg = 1;
    for (int k = 1; k + 1 < n; ++k) {
        const double s = total * k / (n - 1);
        while (seg < t - 1 && cum[static_cast<std::size_t>(seg)] < s) ++seg;
        const double a = cum[static_cast<std::size_t>(seg - 1)];
        const double b = cum[static_cast<std::size_t>(seg)];
        const double w = b > a ? (s - a) / (b - a) : 0.0;
        out.row(k) = (1.0 - w) * states.row(seg - 1) + w * states.row(seg);
    }
    return out;
}

TrajectoryDataset preprocess(const TrajectoryDataset& ds, const PreprocessConfig& cfg) {
    ds.validate();
    if (cfg.trim_head < 0) throw ArgumentError("preprocess: trim_head must be non-negative");
    if (cfg.resample_n < 0 || cfg.resample_n == 1) throw ArgumentError("preprocess: resample_n must be 0 or >= 2");
    TrajectoryDataset out = ds;
    for (Demo& d : out.demos) {
        if (cfg.trim_head >= d.states.rows()) throw ArgumentError("preprocess: trim_head exceeds a demo length");
        if (cfg.trim_head > 0) d.states = Mat(d.states.bottomRows(d.states.rows() - cfg.trim_head));
        if (cfg.align_target) {
            const Eigen::RowVectorXd target = d.states.row(d.states.rows() - 1);
            d.states.rowwise() -= target;
            d.states.row(d.states.rows() - 1).setZero();
        }
        // Demos already at the requested count are left as they are.
        if (cfg.resample_n > 0 && d.states.rows() != cfg.resample_n) {
            d.dt = d.dt * static_cast<double>(d.states.rows() - 1) / (cfg.resample_n - 1);
            d.states = resample_arc_length(d.states, cfg.resample_n);
        }
    }
    if (cfg.trim_head > 0) out.provenance.push_back("trim_head=" + std::to_string(cfg.trim_head));
    if (cfg.align_target) out.provenance.emplace_back("align_target");
    if (cfg.resample_n > 0) out.provenance.push_back("resample_n=" + std::to_string(cfg.resample_n));
    return out;
}

TrajectoryDataset stack(const TrajectoryDataset& a, const TrajectoryDataset& b) {
    a.validate();
    b.validate();
    if (a.demos.size() != b.demos.size()) throw ArgumentError("stack: demo counts differ");
    TrajectoryDataset out;
    out.dim = a.dim + b.dim;
    out.layout = a.layout;
    out.layout.insert(out.layout.end(), b.layout.begin(), b.layout.end());
    for (std::size_t i = 0; i < a.demos.size(); ++i) {
        const Demo& da = a.demos[i];
        const Demo& db = b.demos[i];
        if (da.states.rows() != db.states.rows()) throw ArgumentError("stack: demo " + std::to_string(i) + " lengths differ");
        if (std::abs(da.dt - db.dt) > 1e-12 * da.dt) throw ArgumentError("stack: demo " + std::to_string(i) + " sampling steps differ");
        Demo d;
        d.dt = da.dt;
        d.condition = da.condition;
        d.states.resize(da.states.rows(), out.dim);
        d.states << da.states, db.states;
        out.demos.push_back(std::move(d));
    }
    out.provenance = a.provenance;
    out.provenance.push_back("stack(" + std::to_string(a.dim) + "+" + std::to_string(b.dim) + ")");
    return out;
}

TrainingSet to_training_set(const TrajectoryDataset& ds) {
    ds.validate();
    const std::vector<Mat> vel = estimate_velocities(ds);
    const auto n = static_cast<Index>(ds.total_points());
    const int c = ds.cond_dim();
    TrainingSet set{Mat(n, ds.dim), Mat(n, ds.dim), Mat(n, c)};
    Index row = 0;
    for (std::size_t i = 0; i < ds.demos.size(); ++i) {
        const Demo& d = ds.demos[i];
        const Index t = d.states.rows();
        set.states.middleRows(row, t) = d.states;
        set.velocities.middleRows(row, t) = vel[i];
        if (c > 0) set.conds.middleRows(row, t).rowwise() = d.condition->transpose();
        row += t;
    }
    return set;
}

const std::vector<std::string>& synth_shape_names() {
    static const std::vector<std::string> names{"sine", "angle", "line", "sharpc", "multimodal"};
    return names;
}

namespace {

// Progress along the path: fast start, zero speed at the target.
double progress(double tau) { return 1.0 - (1.0 - tau) * (1.0 - tau); }

Eigen::Vector2d shape_point(std::string_view name, double s, int demo) {
    constexpr double pi = std::numbers::pi;
    if (name == "line") return (1.0 - s) * Eigen::Vector2d(-1.5, -0.6);
    if (name == "sine") return {-1.5 * (1.0 - s), 0.5 * std::sin(3.0 * pi * s)};
    if (name == "angle") {
        const auto soft_abs = [](double u) { return std::sqrt(u * u + 0.0025); };
        const double x = -1.5 * (1.0 - s);
        return {x, -1.2 * (soft_abs(x + 0.75) - soft_abs(0.75))};
    }
    if (name == "sharpc") {
        const double r = 0.75;
        const double th = pi - 1.5 * pi * s;
        return {r * std::cos(th), r + r * std::sin(th)};
    }
    // multimodal: two start regions on opposite sides of the target.
    if (demo % 2 == 0) return {-1.5 * (1.0 - s), 0.8 * (1.0 - s) + 0.3 * std::sin(2.0 * pi * s)};
    return {1.2 * (1.0 - s) - 0.3 * std::sin(pi * s), -0.9 * (1.0 - s)};
}

}  // namespace

TrajectoryDataset synth_shapes(std::string_view name, int n_demos, int n_points, double noise, std::uint64_t seed) {
    const auto& names = synth_shape_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::string list;
        for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
        throw ArgumentError("unknown shape '" + std::string(name) + "' (valid: " + list + ")");
    }
    if (n_points < 10) throw ArgumentError("synth_shapes: need at least 10 points per demo");
    if (n_demos < 1) throw ArgumentError("synth_shapes: need at least one demo");
    if (!(noise >= 0.0)) throw ArgumentError("synth_shapes: noise must be non-negative");

    TrajectoryDataset ds;
    ds.dim = 2;
    ds.layout = {{ColumnKind::Position, 2}};
    Rng rng(seed);
    for (int i = 0; i < n_demos; ++i) {
        Rng demo_rng = rng.split(static_cast<std::uint64_t>(i));
        const Eigen::Vector2d jitter(noise * demo_rng.normal(), noise * demo_rng.normal());
        Demo d;
        d.dt = kSynthDuration / (n_points - 1);
        d.states.resize(n_points, 2);
        for (int t = 0; t < n_points; ++t) {
            const double s = progress(static_cast<double>(t) / (n_points - 1));
            const Eigen::Vector2d p = shape_point(name, s, i) + (1.0 - s) * jitter;
            d.states.row(t) = p.transpose();
        }
        d.states.row(n_points - 1).setZero();
        ds.demos.push_back(std::move(d));
    }
    ds.provenance.push_back("synth_shapes(" + std::string(name) + ", seed=" + std::to_string(seed) + ")");
    return ds;
}

TrajectoryDataset synth_pose_dataset(const TrajectoryDataset& base2d, double scale) {
    base2d.validate();
    if (base2d.dim != 2) throw ArgumentError("synth_pose_dataset: base dataset must be 2-D");
    constexpr double limit = std::numbers::pi - 0.1;
    TrajectoryDataset out;
    out.dim = 6;
    out.layout = {{ColumnKind::Position, 3}, {ColumnKind::So3, 3}};
    out.provenance = base2d.provenance;
    out.provenance.push_back("synth_pose_dataset(scale=" + std::to_string(scale) + ")");
    for (std::size_t i = 0; i < base2d.demos.size(); ++i) {
        const Demo& b = base2d.demos[i];
        Demo d;
        d.dt = b.dt;
        d.condition = b.condition;
        d.states = Mat::Zero(b.states.rows(), 6);
        for (Index t = 0; t < b.states.rows(); ++t) {
            const lie::Vec3 r(scale * b.states(t, 0), scale * b.states(t, 1), 0.0);
            if (r.norm() > limit) {
                throw FirstCoverError("synth_pose_dataset: demo " + std::to_string(i) + " sample " + std::to_string(t) +
                                      " has |r| = " + std::to_string(r.norm()) + " > pi - 0.1; reduce the scale");
            }
            const lie::Mat3 rot = lie::so3_exp(r);
            const lie::Mat3 via_quat = lie::quat_exp(r).to_rotation();
            if (!lie::is_rotation(rot) || (rot - via_quat).cwiseAbs().maxCoeff() > 1e-9) {
                throw NumericError("synth_pose_dataset: inconsistent rotation at demo " + std::to_string(i));
            }
            d.states(t, 0) = b.states(t, 0);
            d.states(t, 1) = b.states(t, 1);
            d.states.block(t, 3, 1, 3) = r.transpose();
        }
        out.demos.push_back(std::move(d));
    }
    return out;
}

}  // namespace contraflow
