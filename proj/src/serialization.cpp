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


#include "contraflow/serialization.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "contraflow/errors.hpp"

namespace contraflow {

using nlohmann::json;

std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_hex_double(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) throw ParseError("malformed number '" + s + "'");
    return v;
}

json params_to_json(const ParamStore& store) {
    json slices = json::array();
    for (const auto& [name, slice] : store.slices()) slices.push_back({{"name", name}, {"size", slice.size}});
    json values = json::array();
    for (Index i = 0; i < store.values().size(); ++i) values.push_back(hex_double(store.values()(i)));
    return {{"slices", slices}, {"values", values}};
}

ParamStore params_from_json(const json& j) {
    ParamStore store;
    for (const json& s : j.at("slices")) store.add(s.at("name").get<std::string>(), s.at("size").get<std::size_t>());
    const json& values = j.at("values");
    if (values.size() != store.size()) throw ParseError("params: value count does not match the slice table");
    for (std::size_t i = 0; i < values.size(); ++i) store.values()(static_cast<Index>(i)) = parse_hex_double(values[i].get<std::string>());
    return store;
}

namespace {

std::string scheme_name(QuadratureScheme s) { return s == QuadratureScheme::Midpoint ? "midpoint" : "gauss_legendre"; }

QuadratureScheme scheme_from(const std::string& s) {
    if (s == "midpoint") return QuadratureScheme::Midpoint;
    if (s == "gauss_legendre") return QuadratureScheme::GaussLegendre;
    throw ParseError("unknown quadrature scheme '" + s + "'");
}

template <class F>
auto wrap(const char* what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

void check_format(const json& j, const std::string& format) {
    if (j.at("format").get<std::string>() != format) throw ParseError("expected a '" + format + "' document");
    const int v = j.at("version").get<int>();
    if (v != kModelFormatVersion) throw ParseError(format + ": unsupported version " + std::to_string(v));
}

}  // namespace

json field_config_to_json(const FieldConfig& cfg) {
    json reg = {{"kind", to_string(cfg.reg.kind)},
                {"eps", cfg.reg.eps},
                {"beta", cfg.reg.beta},
                {"eps_cap", cfg.reg.eps_cap},
                {"reference", cfg.reg.reference == EigenReference::Max ? "max" : "index"},
                {"reference_index", cfg.reg.reference_index},
                {"g_hidden", cfg.reg.g_hidden}};
    return {{"state_dim", cfg.state_dim},     {"cond_dim", cfg.cond_dim}, {"hidden", cfg.hidden},
            {"activation", to_string(cfg.activation)}, {"mode", to_string(cfg.mode)},  {"reg", reg},
            {"skew", cfg.skew},               {"skew_hidden", cfg.skew_hidden}};
}

FieldConfig field_config_from_json(const json& j) {
    return wrap("field config", [&] {
        FieldConfig cfg;
        cfg.state_dim = j.at("state_dim").get<int>();
        cfg.cond_dim = j.at("cond_dim").get<int>();
        cfg.hidden = j.at("hidden").get<std::vector<int>>();
        cfg.activation = activation_from_string(j.at("activation").get<std::string>());
        cfg.mode = field_mode_from_string(j.at("mode").get<std::string>());
        const json& r = j.at("reg");
        cfg.reg.kind = reg_kind_from_string(r.at("kind").get<std::string>());
        cfg.reg.eps = r.at("eps").get<double>();
        cfg.reg.beta = r.at("beta").get<double>();
        cfg.reg.eps_cap = r.at("eps_cap").get<double>();
        cfg.reg.reference = r.at("reference").get<std::string>() == "index" ? EigenReference::Index : EigenReference::Max;
        cfg.reg.reference_index = r.at("reference_index").get<int>();
        cfg.reg.g_hidden = r.at("g_hidden").get<std::vector<int>>();
        cfg.skew = j.at("skew").get<bool>();
        cfg.skew_hidden = j.at("skew_hidden").get<std::vector<int>>();
        return cfg;
    });
}

json ncds_to_json(const Ncds& model) {
    return {{"format", "contraflow.ncds"},
            {"version", kModelFormatVersion},
            {"config", field_config_to_json(model.field().config())},
            {"quadrature", {{"scheme", scheme_name(model.quadrature().scheme)}, {"nodes", model.quadrature().nodes.size()}}},
            {"params", params_to_json(model.params())}};
}

Ncds ncds_from_json(const json& j) {
    return wrap("ncds", [&] {
        check_format(j, "contraflow.ncds");
        const FieldConfig cfg = field_config_from_json(j.at("config"));
        ParamStore store = params_from_json(j.at("params"));
        // The anchor slices are appended by Ncds; split them off so the field sees its own layout.
        ParamStore field_store;
        for (const auto& [name, slice] : store.slices()) {
            if (name == "x0" || name == "v0") continue;
            const auto s = field_store.add(name, slice.size);
            field_store.segment(s) = store.segment(slice);
        }
        JacobianField field(cfg, std::move(field_store));
        const json& q = j.at("quadrature");
        Ncds model(std::move(field), scheme_from(q.at("scheme").get<std::string>()), q.at("nodes").get<int>());
        model.set_x0(store.segment(store.slice("x0")));
        model.set_v0(store.segment(store.slice("v0")));
        return model;
    });
}

json vae_config_to_json(const VaeConfig& cfg) {
    return {{"ambient_dim", cfg.ambient_dim},
            {"latent_dim", cfg.latent_dim},
            {"layers", cfg.layers},
            {"coupling", to_string(cfg.net.kind)},
            {"hidden", cfg.net.hidden},
            {"spline", {{"bins", cfg.net.spline.bins}, {"bound", cfg.net.spline.bound}}},
            {"res_hidden", cfg.net.res_hidden},
            {"res_blocks", cfg.net.res_blocks},
            {"activation", to_string(cfg.net.activation)},
            {"sigma_hidden", cfg.sigma_hidden},
            {"ball_head", cfg.ball_head}};
}

VaeConfig vae_config_from_json(const json& j) {
    return wrap("vae config", [&] {
        VaeConfig cfg;
        cfg.ambient_dim = j.at("ambient_dim").get<int>();
        cfg.latent_dim = j.at("latent_dim").get<int>();
        cfg.layers = j.at("layers").get<int>();
        cfg.net.kind = coupling_from_string(j.at("coupling").get<std::string>());
        cfg.net.hidden = j.at("hidden").get<std::vector<int>>();
        cfg.net.spline.bins = j.at("spline").at("bins").get<int>();
        cfg.net.spline.bound = j.at("spline").at("bound").get<double>();
        cfg.net.res_hidden = j.at("res_hidden").get<int>();
        cfg.net.res_blocks = j.at("res_blocks").get<int>();
        cfg.net.activation = activation_from_string(j.at("activation").get<std::string>());
        cfg.sigma_hidden = j.at("sigma_hidden").get<std::vector<int>>();
        cfg.ball_head = j.at("ball_head").get<std::vector<Index>>();
        return cfg;
    });
}

json vae_to_json(const InjectiveVae& vae) {
    json layers = json::array();
    for (const CouplingLayer& l : vae.flow().layers()) {
        layers.push_back({{"conditioned", l.conditioned()}, {"transformed", l.transformed()}});
    }
    const SplineSpec& sp = vae.config().net.spline;
    json knots = json::array();
    for (int k = 0; k <= sp.bins; ++k) knots.push_back(-sp.bound + 2.0 * sp.bound * k / sp.bins);
    return {{"format", "contraflow.vae"},
            {"version", kModelFormatVersion},
            {"config", vae_config_to_json(vae.config())},
            {"masks", layers},
            {"spline_bins", {{"bins", sp.bins}, {"bound", sp.bound}, {"initial_knots", knots}}},
            {"params", params_to_json(vae.params())}};
}

InjectiveVae vae_from_json(const json& j) {
    return wrap("vae", [&] {
        check_format(j, "contraflow.vae");
        InjectiveVae vae(vae_config_from_json(j.at("config")), params_from_json(j.at("params")));
        const json& masks = j.at("masks");
        const auto& layers = vae.flow().layers();
        if (masks.size() != layers.size()) throw ParseError("vae: mask table does not match the layer count");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (masks[i].at("conditioned").get<std::vector<Index>>() != layers[i].conditioned()) {
                throw ParseError("vae: coupling mask " + std::to_string(i) + " disagrees with the configuration");
            }
        }
        return vae;
    });
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
}

void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump() + "\n"); }

}  // namespace contraflow
