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

#include "contraflow/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "contraflow/errors.hpp"

namespace contraflow {

ParamStore::Slice ParamStore::add(const std::string& name, std::size_t size) {
    if (has(name)) throw ArgumentError("ParamStore: duplicate slice '" + name + "'");
    Slice s{static_cast<std::size_t>(values_.size()), size};
    Vec grown = Vec::Zero(values_.size() + static_cast<Index>(size));
    grown.head(values_.size()) = values_;
    values_ = std::move(grown);
    slices_.emplace_back(name, s);
    return s;
}

bool ParamStore::has(std::string_view name) const {
    return std::any_of(slices_.begin(), slices_.end(), [&](const auto& e) { return e.first == name; });
}

const ParamStore::Slice& ParamStore::slice(std::string_view name) const {
    for (const auto& [n, s] : slices_) {
        if (n == name) return s;
    }
    throw ArgumentError("ParamStore: no slice named '" + std::string(name) + "'");
}

double activate(Activation act, double x) {
    switch (act) {
        case Activation::Tanh:
            return std::tanh(x);
        case Activation::Softplus:
            return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        case Activation::Sigmoid:
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        case Activation::Relu:
            return x > 0.0 ? x : 0.0;
    }
    return x;
}

double activate_grad(Activation act, double x) {
    switch (act) {
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Softplus:
            return activate(Activation::Sigmoid, x);
        case Activation::Sigmoid: {
            const double s = activate(Activation::Sigmoid, x);
            return s * (1.0 - s);
        }
        case Activation::Relu:
            return x > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::Tanh:
            return "tanh";
        case Activation::Softplus:
            return "softplus";
        case Activation::Sigmoid:
            return "sigmoid";
        case Activation::Relu:
            return "relu";
    }
    return "tanh";
}

Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "softplus") return Activation::Softplus;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "relu") return Activation::Relu;
    throw ArgumentError("unknown activation '" + std::string(name) + "' (tanh|softplus|sigmoid|relu)");
}

namespace ad {

const Mat& Var::value() const { return tape->value(*this); }

Mat Tape::load_param(const ParamStore::Slice& slice, Index rows, Index cols) const {
    if (static_cast<std::size_t>(rows * cols) != slice.size) {
        throw DimensionError("Tape::param: slice of size " + std::to_string(slice.size) + " viewed as " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
    Mat m(rows, cols);
    const Vec& p = store_->values();
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = p(static_cast<Index>(slice.offset) + i * cols + j);
    }
    return m;
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const ParamStore::Slice& slice, Index rows, Index cols) {
    Node n{Kind::Param, load_param(slice, rows, cols), {}, {}, {}, slice, true, "param"};
    return push(std::move(n));
}

Var Tape::param(std::string_view name, Index rows, Index cols) { return param(store_->slice(name), rows, cols); }

Var Tape::constant(Mat value) {
    Node n{Kind::Constant, std::move(value), {}, {}, {}, {}, false, "const"};
    return push(std::move(n));
}

Var Tape::record(std::vector<Var> inputs, ForwardFn forward, BackwardFn backward, std::string name) {
    Node n{Kind::Op, Mat(), {}, std::move(forward), std::move(backward), {}, false, std::move(name)};
    std::vector<const Mat*> in;
    in.reserve(inputs.size());
    for (const Var& v : inputs) {
        if (v.tape != this) throw ArgumentError("Tape::record: input belongs to another tape");
        n.inputs.push_back(v.id);
        n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(v.id)].needs_grad;
        in.push_back(&nodes_[static_cast<std::size_t>(v.id)].value);
    }
    n.value = n.forward(in);
    return push(std::move(n));
}

double Tape::scalar(Var v) const {
    const Mat& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) throw DimensionError("Tape::scalar: node is not 1x1");
    return m(0, 0);
}

Vec Tape::gradient(Var loss) {
    const Mat& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) throw DimensionError("Tape::gradient: loss is not 1x1");
    Vec out = Vec::Zero(store_->values().size());
    std::vector<Mat> grads(nodes_.size());
    grads[static_cast<std::size_t>(loss.id)] = Mat::Ones(1, 1);
    std::vector<const Mat*> in_values;
    std::vector<Mat*> in_grads;
    for (int id = loss.id; id >= 0; --id) {
        Node& node = nodes_[static_cast<std::size_t>(id)];
        Mat& g = grads[static_cast<std::size_t>(id)];
        if (!node.needs_grad || g.size() == 0) continue;
        if (!g.allFinite()) {
            throw NumericError("non-finite gradient at node " + std::to_string(id) + " (" + node.name + ")");
        }
        if (node.kind == Kind::Param) {
            const Index cols = node.value.cols();
            for (Index i = 0; i < g.rows(); ++i) {
                for (Index j = 0; j < cols; ++j) out(static_cast<Index>(node.slice.offset) + i * cols + j) += g(i, j);
            }
            continue;
        }
        in_values.clear();
        in_grads.clear();
        for (int in : node.inputs) {
            Node& src = nodes_[static_cast<std::size_t>(in)];
            in_values.push_back(&src.value);
            if (src.needs_grad) {
                Mat& sg = grads[static_cast<std::size_t>(in)];
                if (sg.size() == 0) sg = Mat::Zero(src.value.rows(), src.value.cols());
                in_grads.push_back(&sg);
            } else {
                in_grads.push_back(nullptr);
            }
        }
        node.backward(BackwardArgs{in_values, node.value, g, in_grads});
        g.resize(0, 0);
    }
    return out;
}

void Tape::replay() {
    std::vector<const Mat*> in;
    for (Node& node : nodes_) {
        if (node.kind == Kind::Param) {
            node.value = load_param(node.slice, node.value.rows(), node.value.cols());
        } else if (node.kind == Kind::Op) {
            in.clear();
            for (int i : node.inputs) in.push_back(&nodes_[static_cast<std::size_t>(i)].value);
            node.value = node.forward(in);
        }
    }
}

namespace {

bool broadcast_rows(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols()) throw DimensionError("elementwise op: column count mismatch");
    if (a.rows() == b.rows()) return false;
    if (b.rows() == 1) return true;
    throw DimensionError("elementwise op: row count mismatch");
}

void accumulate(Mat* dst, const Mat& g, bool reduce_rows) {
    if (!dst) return;
    if (reduce_rows) {
        *dst += g.colwise().sum();
    } else {
        *dst += g;
    }
}

}  // namespace

Var add(Var a, Var b) {
    const bool bc = broadcast_rows(a.value(), b.value());
    return a.tape->record(
        {a, b},
        [bc](const std::vector<const Mat*>& in) -> Mat {
            if (bc) return in[0]->rowwise() + in[1]->row(0);
            return *in[0] + *in[1];
        },
        [bc](const BackwardArgs& args) {
            accumulate(args.input_grads[0], args.grad, false);
            accumulate(args.input_grads[1], args.grad, bc);
        },
        "add");
}

Var sub(Var a, Var b) {
    const bool bc = broadcast_rows(a.value(), b.value());
    return a.tape->record(
        {a, b},
        [bc](const std::vector<const Mat*>& in) -> Mat {
            if (bc) return in[0]->rowwise() - in[1]->row(0);
            return *in[0] - *in[1];
        },
        [bc](const BackwardArgs& args) {
            accumulate(args.input_grads[0], args.grad, false);
            if (args.input_grads[1]) {
                const Mat neg = -args.grad;
                accumulate(args.input_grads[1], neg, bc);
            }
        },
        "sub");
}

Var mul(Var a, Var b) {
    const bool bc = broadcast_rows(a.value(), b.value());
    return a.tape->record(
        {a, b},
        [bc](const std::vector<const Mat*>& in) -> Mat {
            if (bc) return in[0]->array().rowwise() * in[1]->row(0).array();
            return in[0]->cwiseProduct(*in[1]);
        },
        [bc](const BackwardArgs& args) {
            const Mat& av = *args.inputs[0];
            const Mat& bv = *args.inputs[1];
            if (args.input_grads[0]) {
                if (bc) {
                    *args.input_grads[0] += (args.grad.array().rowwise() * bv.row(0).array()).matrix();
                } else {
                    *args.input_grads[0] += args.grad.cwiseProduct(bv);
                }
            }
            if (args.input_grads[1]) accumulate(args.input_grads[1], args.grad.cwiseProduct(av), bc);
        },
        "mul");
}

Var scale(Var a, double s) {
    return a.tape->record(
        {a}, [s](const std::vector<const Mat*>& in) -> Mat { return s * *in[0]; },
        [s](const BackwardArgs& args) {
            if (args.input_grads[0]) *args.input_grads[0] += s * args.grad;
        },
        "scale");
}

Var add_scalar(Var a, double s) {
    return a.tape->record(
        {a}, [s](const std::vector<const Mat*>& in) -> Mat { return (in[0]->array() + s).matrix(); },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) *args.input_grads[0] += args.grad;
        },
        "add_scalar");
}

Var square(Var a) {
    return a.tape->record(
        {a}, [](const std::vector<const Mat*>& in) -> Mat { return in[0]->array().square().matrix(); },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) *args.input_grads[0] += 2.0 * args.grad.cwiseProduct(*args.inputs[0]);
        },
        "square");
}

Var exp(Var a) {
    return a.tape->record(
        {a}, [](const std::vector<const Mat*>& in) -> Mat { return in[0]->array().exp().matrix(); },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) *args.input_grads[0] += args.grad.cwiseProduct(args.output);
        },
        "exp");
}

Var log(Var a) {
    return a.tape->record(
        {a}, [](const std::vector<const Mat*>& in) -> Mat { return in[0]->array().log().matrix(); },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) *args.input_grads[0] += args.grad.cwiseQuotient(*args.inputs[0]);
        },
        "log");
}

Var activate(Var a, Activation act) {
    return a.tape->record(
        {a},
        [act](const std::vector<const Mat*>& in) -> Mat {
            return in[0]->unaryExpr([act](double x) { return contraflow::activate(act, x); });
        },
        [act](const BackwardArgs& args) {
            if (!args.input_grads[0]) return;
            const Mat& x = *args.inputs[0];
            Mat& dst = *args.input_grads[0];
            if (act == Activation::Tanh) {
                dst.array() += args.grad.array() * (1.0 - args.output.array().square());
            } else if (act == Activation::Sigmoid) {
                dst.array() += args.grad.array() * args.output.array() * (1.0 - args.output.array());
            } else {
                dst += args.grad.cwiseProduct(x.unaryExpr([act](double v) { return activate_grad(act, v); }));
            }
        },
        "activate:" + to_string(act));
}

Var matmul_nt(Var x, Var w) {
    if (x.cols() != w.cols()) throw DimensionError("matmul_nt: inner dimensions disagree");
    return x.tape->record(
        {x, w}, [](const std::vector<const Mat*>& in) -> Mat { return *in[0] * in[1]->transpose(); },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) args.input_grads[0]->noalias() += args.grad * *args.inputs[1];
            if (args.input_grads[1]) args.input_grads[1]->noalias() += args.grad.transpose() * *args.inputs[0];
        },
        "matmul_nt");
}

Var linear(Var x, Var w, Var b) {
    if (x.cols() != w.cols()) throw DimensionError("linear: input width disagrees with weight");
    if (b.rows() != 1 || b.cols() != w.rows()) throw DimensionError("linear: bias shape");
    return x.tape->record(
        {x, w, b},
        [](const std::vector<const Mat*>& in) -> Mat {
            Mat out = *in[0] * in[1]->transpose();
            out.rowwise() += in[2]->row(0);
            return out;
        },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) args.input_grads[0]->noalias() += args.grad * *args.inputs[1];
            if (args.input_grads[1]) args.input_grads[1]->noalias() += args.grad.transpose() * *args.inputs[0];
            if (args.input_grads[2]) *args.input_grads[2] += args.grad.colwise().sum();
        },
        "linear");
}

Var sum(Var a) {
    return a.tape->record(
        {a}, [](const std::vector<const Mat*>& in) -> Mat { return Mat::Constant(1, 1, in[0]->sum()); },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) args.input_grads[0]->array() += args.grad(0, 0);
        },
        "sum");
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    return a.tape->record(
        {a}, [n](const std::vector<const Mat*>& in) -> Mat { return Mat::Constant(1, 1, in[0]->sum() / n); },
        [n](const BackwardArgs& args) {
            if (args.input_grads[0]) args.input_grads[0]->array() += args.grad(0, 0) / n;
        },
        "mean");
}

Var row_sum(Var a) {
    return a.tape->record(
        {a}, [](const std::vector<const Mat*>& in) -> Mat { return in[0]->rowwise().sum(); },
        [](const BackwardArgs& args) {
            if (args.input_grads[0]) args.input_grads[0]->colwise() += args.grad.col(0);
        },
        "row_sum");
}

Var mean_row_sqnorm(Var a) {
    const double n = static_cast<double>(a.rows());
    return a.tape->record(
        {a},
        [n](const std::vector<const Mat*>& in) -> Mat { return Mat::Constant(1, 1, in[0]->squaredNorm() / n); },
        [n](const BackwardArgs& args) {
            if (args.input_grads[0]) *args.input_grads[0] += (2.0 * args.grad(0, 0) / n) * *args.inputs[0];
        },
        "mean_row_sqnorm");
}

Var select_cols(Var a, std::vector<Index> cols) {
    for (Index c : cols) {
        if (c < 0 || c >= a.cols()) throw DimensionError("select_cols: column out of range");
    }
    return a.tape->record(
        {a},
        [cols](const std::vector<const Mat*>& in) -> Mat {
            Mat out(in[0]->rows(), static_cast<Index>(cols.size()));
            for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = in[0]->col(cols[j]);
            return out;
        },
        [cols](const BackwardArgs& args) {
            if (!args.input_grads[0]) return;
            for (std::size_t j = 0; j < cols.size(); ++j) {
                args.input_grads[0]->col(cols[j]) += args.grad.col(static_cast<Index>(j));
            }
        },
        "select_cols");
}

Var merge_cols(Var a, const std::vector<Index>& cols_a, Var b, const std::vector<Index>& cols_b) {
    if (a.rows() != b.rows()) throw DimensionError("merge_cols: row count mismatch");
    if (static_cast<Index>(cols_a.size()) != a.cols() || static_cast<Index>(cols_b.size()) != b.cols()) {
        throw DimensionError("merge_cols: index lists disagree with operand widths");
    }
    const Index total = a.cols() + b.cols();
    return a.tape->record(
        {a, b},
        [cols_a, cols_b, total](const std::vector<const Mat*>& in) -> Mat {
            Mat out(in[0]->rows(), total);
            for (std::size_t j = 0; j < cols_a.size(); ++j) out.col(cols_a[j]) = in[0]->col(static_cast<Index>(j));
            for (std::size_t j = 0; j < cols_b.size(); ++j) out.col(cols_b[j]) = in[1]->col(static_cast<Index>(j));
            return out;
        },
        [cols_a, cols_b](const BackwardArgs& args) {
            if (args.input_grads[0]) {
                for (std::size_t j = 0; j < cols_a.size(); ++j) {
                    args.input_grads[0]->col(static_cast<Index>(j)) += args.grad.col(cols_a[j]);
                }
            }
            if (args.input_grads[1]) {
                for (std::size_t j = 0; j < cols_b.size(); ++j) {
                    args.input_grads[1]->col(static_cast<Index>(j)) += args.grad.col(cols_b[j]);
                }
            }
        },
        "merge_cols");
}

Var concat_cols(Var a, Var b) {
    std::vector<Index> ca(static_cast<std::size_t>(a.cols()));
    std::vector<Index> cb(static_cast<std::size_t>(b.cols()));
    for (Index j = 0; j < a.cols(); ++j) ca[static_cast<std::size_t>(j)] = j;
    for (Index j = 0; j < b.cols(); ++j) cb[static_cast<std::size_t>(j)] = a.cols() + j;
    return merge_cols(a, ca, b, cb);
}

}  // namespace ad
}  // namespace contraflow
