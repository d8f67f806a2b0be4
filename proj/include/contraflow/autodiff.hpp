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

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "contraflow/linalg.hpp"

namespace contraflow {

/// Flat parameter vector with named slices.
class ParamStore {
public:
    struct Slice {
        std::size_t offset = 0;
        std::size_t size = 0;
    };

    /// Appends a zero-initialized slice. Names must be unique.
    Slice add(const std::string& name, std::size_t size);
    bool has(std::string_view name) const;
    const Slice& slice(std::string_view name) const;
    const std::vector<std::pair<std::string, Slice>>& slices() const { return slices_; }

    Vec& values() { return values_; }
    const Vec& values() const { return values_; }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

    auto segment(const Slice& s) { return values_.segment(static_cast<Index>(s.offset), static_cast<Index>(s.size)); }
    auto segment(const Slice& s) const {
        return values_.segment(static_cast<Index>(s.offset), static_cast<Index>(s.size));
    }

private:
    std::vector<std::pair<std::string, Slice>> slices_;
    Vec values_;
};

enum class Activation { Tanh, Softplus, Sigmoid, Relu };

double activate(Activation act, double x);
double activate_grad(Activation act, double x);
std::string to_string(Activation act);
Activation activation_from_string(std::string_view name);

namespace ad {

class Tape;

/// Handle to a node in a Tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
};

using ForwardFn = std::function<Mat(const std::vector<const Mat*>&)>;

struct BackwardArgs {
    const std::vector<const Mat*>& inputs;
    const Mat& output;
    const Mat& grad;
    // Entry i is null when input i does not need a gradient.
    const std::vector<Mat*>& input_grads;
};
using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Recorded forward trace with matrix-valued nodes. Rebuilt for every forward
/// pass; gradient() runs the reverse sweep into a vector shaped like the store.
class Tape {
public:
    explicit Tape(const ParamStore& store) : store_(&store) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Parameter leaf viewed as a rows x cols matrix (row-major over the slice).
    Var param(const ParamStore::Slice& slice, Index rows, Index cols);
    Var param(std::string_view name, Index rows, Index cols);
    Var constant(Mat value);

    Var record(std::vector<Var> inputs, ForwardFn forward, BackwardFn backward, std::string name);

    const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    double scalar(Var v) const;

    /// d(loss)/d(params). `loss` must be 1x1. Throws NumericError naming the
    /// first node whose incoming gradient is non-finite.
    Vec gradient(Var loss);

    /// Re-evaluates every node from the current store contents.
    void replay();

    std::size_t size() const { return nodes_.size(); }
    const ParamStore& store() const { return *store_; }

private:
    enum class Kind { Param, Constant, Op };
    struct Node {
        Kind kind;
        Mat value;
        std::vector<int> inputs;
        ForwardFn forward;
        BackwardFn backward;
        ParamStore::Slice slice;
        bool needs_grad = false;
        std::string name;
    };

    Mat load_param(const ParamStore::Slice& slice, Index rows, Index cols) const;
    Var push(Node node);

    const ParamStore* store_;
    std::vector<Node> nodes_;
};

// Elementwise ops accept a 1-row second operand, broadcast over rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var activate(Var a, Activation act);

/// x * w^T (+ b as a row vector when given).
Var linear(Var x, Var w, Var b);
Var matmul_nt(Var x, Var w);

Var sum(Var a);
Var mean(Var a);
/// Per-row sum, rows x 1.
Var row_sum(Var a);
/// (1 / rows) * sum of all squared entries.
Var mean_row_sqnorm(Var a);

Var select_cols(Var a, std::vector<Index> cols);
/// Inverse of splitting a matrix into column groups: output column cols_a[j]
/// takes a.col(j) and cols_b[j] takes b.col(j).
Var merge_cols(Var a, const std::vector<Index>& cols_a, Var b, const std::vector<Index>& cols_b);
Var concat_cols(Var a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace ad
}  // namespace contraflow
