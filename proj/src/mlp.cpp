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

#include "contraflow/mlp.hpp"

#include <cmath>

#include "contraflow/errors.hpp"

namespace contraflow {

namespace {
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}

Mlp::Mlp(ParamStore& store, std::string prefix, std::vector<int> widths, Activation activation)
    : prefix_(std::move(prefix)), widths_(std::move(widths)), activation_(activation) {
    if (widths_.size() < 2) throw ArgumentError("Mlp: need at least input and output widths");
    for (int w : widths_) {
        if (w < 1) throw ArgumentError("Mlp: layer widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const std::string wn = prefix_ + ".W" + std::to_string(l);
        const std::string bn = prefix_ + ".b" + std::to_string(l);
        const auto wsize = static_cast<std::size_t>(widths_[l] * widths_[l + 1]);
        const auto bsize = static_cast<std::size_t>(widths_[l + 1]);
        Layer layer;
        layer.in = widths_[l];
        layer.out = widths_[l + 1];
        if (store.has(wn)) {
            layer.weight = store.slice(wn);
            layer.bias = store.slice(bn);
            if (layer.weight.size != wsize || layer.bias.size != bsize) {
                throw DimensionError("Mlp: stored slice '" + wn + "' has the wrong size");
            }
        } else {
            layer.weight = store.add(wn, wsize);
            layer.bias = store.add(bn, bsize);
        }
        layers_.push_back(layer);
    }
}

Vec Mlp::forward(const ParamStore& store, const Vec& x) const {
    if (x.size() != in_dim()) {
        throw DimensionError("Mlp '" + prefix_ + "': input width " + std::to_string(x.size()) + ", expected " +
                             std::to_string(in_dim()));
    }
    const double* p = store.values().data();
    Vec h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        RowMajorMap w(p + layer.weight.offset, layer.out, layer.in);
        Eigen::Map<const Vec> b(p + layer.bias.offset, layer.out);
        Vec next = w * h + b;
        if (l + 1 < layers_.size()) {
            for (Index i = 0; i < next.size(); ++i) next(i) = activate(activation_, next(i));
        }
        h = std::move(next);
    }
    return h;
}

Mat Mlp::forward_batch(const ParamStore& store, const Mat& x) const {
    if (x.cols() != in_dim()) throw DimensionError("Mlp '" + prefix_ + "': batch width mismatch");
    const double* p = store.values().data();
    Mat h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        RowMajorMap w(p + layer.weight.offset, layer.out, layer.in);
        Eigen::Map<const Eigen::RowVectorXd> b(p + layer.bias.offset, layer.out);
        Mat next = h * w.transpose();
        next.rowwise() += b;
        if (l + 1 < layers_.size()) {
            next = next.unaryExpr([this](double v) { return activate(activation_, v); });
        }
        h = std::move(next);
    }
    return h;
}

ad::Var Mlp::forward(ad::Tape& tape, ad::Var x) const {
    if (x.cols() != in_dim()) throw DimensionError("Mlp '" + prefix_ + "': batch width mismatch");
    ad::Var h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        ad::Var w = tape.param(layer.weight, layer.out, layer.in);
        ad::Var b = tape.param(layer.bias, 1, layer.out);
        h = ad::linear(h, w, b);
        if (l + 1 < layers_.size()) h = ad::activate(h, activation_);
    }
    return h;
}

Mat Mlp::input_jacobian(const ParamStore& store, const Vec& x) const {
    if (x.size() != in_dim()) throw DimensionError("Mlp '" + prefix_ + "': input width mismatch");
    const double* p = store.values().data();
    Vec h = x;
    Mat jac = Mat::Identity(in_dim(), in_dim());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        RowMajorMap w(p + layer.weight.offset, layer.out, layer.in);
        Eigen::Map<const Vec> b(p + layer.bias.offset, layer.out);
        Vec pre = w * h + b;
        jac = w * jac;
        if (l + 1 < layers_.size()) {
            for (Index i = 0; i < pre.size(); ++i) {
                jac.row(i) *= activate_grad(activation_, pre(i));
                pre(i) = activate(activation_, pre(i));
            }
        }
        h = std::move(pre);
    }
    return jac;
}

void Mlp::init(ParamStore& store, Rng& rng, double output_gain) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const double limit = std::sqrt(6.0 / (layer.in + layer.out));
        const double gain = (l + 1 == layers_.size()) ? output_gain : 1.0;
        auto w = store.segment(layer.weight);
        for (Index i = 0; i < w.size(); ++i) w(i) = gain * rng.uniform(-limit, limit);
        store.segment(layer.bias).setZero();
    }
}

void Mlp::zero(ParamStore& store) const {
    for (const Layer& layer : layers_) {
        store.segment(layer.weight).setZero();
        store.segment(layer.bias).setZero();
    }
}

}  // namespace contraflow
