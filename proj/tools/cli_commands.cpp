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


#include "cli_commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <openssl/evp.h>

#include "contraflow/dataset.hpp"
#include "contraflow/errors.hpp"
#include "contraflow/kernels.hpp"
#include "contraflow/metrics.hpp"
#include "contraflow/modulation.hpp"
#include "contraflow/ncds.hpp"
#include "contraflow/rng.hpp"
#include "contraflow/serialization.hpp"
#include "contraflow/vae.hpp"

namespace contraflow::cli {

using json = nlohmann::json;

json default_config() {
    return json{
        {"seed", 0},
        {"data",
         {{"path", ""},
          {"shape", "sine"},
          {"shapes", json::array()},
          {"combine", "stack"},
          {"demos", 5},
          {"points", 200},
          {"noise", 0.05},
          {"pose_scale", 0.0},
          {"trim_head", 0},
          {"align_target", true},
          {"resample_n", 0},
          {"scale", 1.0}}},
        {"model",
         {{"path", ""},
          {"hidden", {64, 64}},
          {"activation", "tanh"},
          {"mode", "contractive"},
          {"reg", "constant"},
          {"eps", 1e-4},
          {"beta", 1e-3},
          {"eps_cap", 10.0},
          {"eigen_reference", "max"},
          {"reference_index", 0},
          {"g_hidden", {32}},
          {"skew", false},
          {"skew_hidden", {32}},
          {"cond", false},
          {"quad_nodes", 16}}},
        {"train", {{"epochs", 1000}, {"lr", 1e-3}, {"batch_size", 0}}},
        {"vae",
         {{"path", ""},
          {"latent_dim", 0},
          {"layers", 3},
          {"coupling", "affine"},
          {"hidden", {30, 30}},
          {"res_hidden", 30},
          {"res_blocks", 2},
          {"bins", 10},
          {"bound", 10.0},
          {"sigma_hidden", {32}},
          {"ball_head", json::array()},
          {"epochs", 500},
          {"lr", 1e-3},
          {"batch_size", 0}}},
        {"modulation",
         {{"obstacle", json::array()},
          {"reactivity", 1.0},
          {"field", ""},
          {"nu", 10.0},
          {"k", 2.0},
          {"sigma_beta", 0.05},
          {"goal", json::array()},
          {"rho_imp", 1.0},
          {"bump_weight", 10.0},
          {"res", 50},
          {"bounds", json::array()},
          {"boundary", ""}}},
        {"eval",
         {{"start", json::array()},
          {"cond", json::array()},
          {"dt", 0.0},
          {"steps", 0},
          {"res", 20},
          {"bounds", json::array()},
          {"starts", 5},
          {"start_radius", 0.05},
          {"margin", -1.0}}},
        {"output", {{"path", ""}, {"history", ""}, {"vae", ""}, {"vae_history", ""}, {"csv", ""}, {"svg", ""}}},
    };
}

namespace {

std::string type_name(const json& v) {
    if (v.is_number_integer()) return "integer";
    return v.type_name();
}

bool compatible(const json& def, const json& v) {
    if (def.is_number_float()) return v.is_number();
    if (def.is_number_integer()) return v.is_number_integer();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) {
        if (!v.is_array()) return false;
        if (def.empty()) return std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_primitive(); });
        return std::all_of(v.begin(), v.end(), [&](const json& e) { return compatible(def.front(), e); });
    }
    return false;
}

}  // namespace

void merge_config(json& base, const json& overlay, const std::string& path) {
    if (!overlay.is_object()) throw UsageError("config" + (path.empty() ? std::string() : " " + path) + ": expected an object");
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        const std::string p = path + "/" + it.key();
        auto slot = base.find(it.key());
        if (slot == base.end()) throw UsageError("config: unknown key " + p);
        if (slot->is_object()) {
            merge_config(*slot, *it, p);
        } else if (!compatible(*slot, *it)) {
            throw UsageError("config " + p + ": expected " + type_name(*slot) + ", got " + type_name(*it));
        } else if (slot->is_number_float()) {
            *slot = it->get<double>();
        } else {
            *slot = *it;
        }
    }
}

std::string git_blob_sha1(const std::string& bytes) {
    const std::string head = "blob " + std::to_string(bytes.size()) + '\0';
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* c = EVP_MD_CTX_new();
    EVP_DigestInit_ex(c, EVP_sha1(), nullptr);
    EVP_DigestUpdate(c, head.data(), head.size());
    EVP_DigestUpdate(c, bytes.data(), bytes.size());
    EVP_DigestFinal_ex(c, md, &len);
    EVP_MD_CTX_free(c);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

namespace {

namespace fs = std::filesystem;

std::ostream& log(Context& ctx) { return ctx.log ? *ctx.log : std::cout; }

const json& section(const Context& ctx, const char* name) { return ctx.config.at(name); }

std::string read_input(Context& ctx, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ctx.inputs[path] = git_blob_sha1(bytes);
    return bytes;
}

json parse_input(Context& ctx, const std::string& path) {
    const std::string bytes = read_input(ctx, path);
    try {
        return json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

json meta(const Context& ctx) {
    return json{{"command", ctx.command}, {"config", ctx.config}, {"inputs", ctx.inputs}};
}

void write_json_artifact(Context& ctx, const std::string& path, json doc) {
    doc["meta"] = meta(ctx);
    write_json_file(path, doc);
}

void write_csv_artifact(Context& ctx, const std::string& path, const std::string& body) {
    std::string text = "# contraflow " + ctx.command + "\n";
    text += "# config " + ctx.config.dump() + "\n";
    text += "# inputs " + ctx.inputs.dump() + "\n";
    write_text_file(path, text + body);
}

std::string output_path(const Context& ctx, const char* fallback) {
    const std::string p = section(ctx, "output").at("path").get<std::string>();
    return p.empty() ? fallback : p;
}

std::string sibling(const std::string& of, const char* name) { return (fs::path(of).parent_path() / name).string(); }

std::string require_path(const json& sec, const char* key, const char* flag) {
    const std::string p = sec.at(key).get<std::string>();
    if (p.empty()) throw UsageError(std::string(flag) + " is required");
    return p;
}

Vec to_vec(const json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

std::uint64_t seed_of(const Context& ctx) { return ctx.config.at("seed").get<std::uint64_t>(); }

// ---- data ----

TrajectoryDataset load_data(Context& ctx, bool keep_conditions) {
    const json& d = section(ctx, "data");
    const std::string path = require_path(d, "path", "--data");
    TrajectoryDataset ds = dataset_from_json(parse_input(ctx, path));
    PreprocessConfig pc;
    pc.trim_head = d.at("trim_head").get<int>();
    pc.align_target = d.at("align_target").get<bool>();
    pc.resample_n = d.at("resample_n").get<int>();
    ds = preprocess(ds, pc);
    const double scale = d.at("scale").get<double>();
    if (!(scale > 0.0)) throw UsageError("--scale must be positive");
    if (scale != 1.0) {
        for (Demo& demo : ds.demos) demo.states *= scale;
    }
    if (!keep_conditions) {
        for (Demo& demo : ds.demos) demo.condition.reset();
    }
    return ds;
}

// ---- model construction ----

FieldConfig field_config(const Context& ctx, int dim, int cond_dim) {
    const json& m = section(ctx, "model");
    FieldConfig f;
    f.state_dim = dim;
    f.cond_dim = cond_dim;
    f.hidden = m.at("hidden").get<std::vector<int>>();
    f.activation = activation_from_string(m.at("activation").get<std::string>());
    f.mode = field_mode_from_string(m.at("mode").get<std::string>());
    f.reg.kind = reg_kind_from_string(m.at("reg").get<std::string>());
    f.reg.eps = m.at("eps").get<double>();
    f.reg.beta = m.at("beta").get<double>();
    f.reg.eps_cap = m.at("eps_cap").get<double>();
    const std::string ref = m.at("eigen_reference").get<std::string>();
    if (ref == "max") {
        f.reg.reference = EigenReference::Max;
    } else if (ref == "index") {
        f.reg.reference = EigenReference::Index;
    } else {
        throw UsageError("unknown eigen_reference '" + ref + "' (max|index)");
    }
    f.reg.reference_index = m.at("reference_index").get<int>();
    f.reg.g_hidden = m.at("g_hidden").get<std::vector<int>>();
    f.skew = m.at("skew").get<bool>();
    f.skew_hidden = m.at("skew_hidden").get<std::vector<int>>();
    return f;
}

TrainConfig train_config(const Context& ctx) {
    const json& t = section(ctx, "train");
    TrainConfig tc;
    tc.lr = t.at("lr").get<double>();
    tc.epochs = t.at("epochs").get<int>();
    tc.batch_size = t.at("batch_size").get<int>();
    tc.seed = seed_of(ctx);
    tc.quad_nodes = section(ctx, "model").at("quad_nodes").get<int>();
    if (tc.epochs < 0) throw UsageError("--epochs must be non-negative");
    if (!(tc.lr > 0.0)) throw UsageError("--lr must be positive");
    return tc;
}

VaeConfig vae_config(const Context& ctx, const TrajectoryDataset& ds) {
    const json& v = section(ctx, "vae");
    VaeConfig c;
    c.ambient_dim = ds.dim;
    c.latent_dim = v.at("latent_dim").get<int>();
    c.layers = v.at("layers").get<int>();
    c.net.kind = coupling_from_string(v.at("coupling").get<std::string>());
    c.net.hidden = v.at("hidden").get<std::vector<int>>();
    c.net.res_hidden = v.at("res_hidden").get<int>();
    c.net.res_blocks = v.at("res_blocks").get<int>();
    c.net.spline.bins = v.at("bins").get<int>();
    c.net.spline.bound = v.at("bound").get<double>();
    c.sigma_hidden = v.at("sigma_hidden").get<std::vector<int>>();
    const auto head = v.at("ball_head").get<std::vector<Index>>();
    // An empty head list falls back to the orientation columns of the layout.
    c.ball_head = head.empty() ? ds.columns(ColumnKind::So3) : head;
    return c;
}

struct LoadedModel {
    std::optional<Ncds> ncds;
    std::optional<InjectiveVae> vae;

    const Ncds& model() const { return *ncds; }
    int ambient_dim() const { return vae ? vae->ambient_dim() : ncds->dim(); }
    Vec to_model(const Vec& x) const { return vae ? vae->encode_mean(x) : x; }
    Vec to_ambient(const Vec& z) const { return vae ? vae->decode(z) : z; }
};

LoadedModel load_model(Context& ctx) {
    LoadedModel lm;
    lm.ncds = ncds_from_json(parse_input(ctx, require_path(section(ctx, "model"), "path", "--model")));
    const std::string vp = section(ctx, "vae").at("path").get<std::string>();
    if (!vp.empty()) {
        lm.vae = vae_from_json(parse_input(ctx, vp));
        if (lm.vae->latent_dim() != lm.ncds->dim()) {
            throw UsageError("VAE latent dimension " + std::to_string(lm.vae->latent_dim()) +
                             " does not match the model dimension " + std::to_string(lm.ncds->dim()));
        }
    }
    return lm;
}

// ---- rollout plumbing ----

struct StartSet {
    std::vector<Vec> states;  // ambient
    std::vector<Vec> conds;
    std::vector<double> dts;
    std::vector<int> steps;
};

StartSet collect_starts(Context& ctx, const LoadedModel& lm) {
    const json& e = section(ctx, "eval");
    const double dt_flag = e.at("dt").get<double>();
    const int steps_flag = e.at("steps").get<int>();
    const Vec cond_flag = to_vec(e.at("cond"));
    const int cd = lm.model().cond_dim();
    if (dt_flag < 0.0) throw UsageError("--dt must be positive");
    if (steps_flag < 0) throw UsageError("--steps must be non-negative");
    if (cond_flag.size() != 0 && cond_flag.size() != cd) {
        throw UsageError("--cond has " + std::to_string(cond_flag.size()) + " entries, the model expects " + std::to_string(cd));
    }

    StartSet s;
    const Vec start = to_vec(e.at("start"));
    if (start.size() > 0) {
        if (start.size() != lm.ambient_dim()) {
            throw UsageError("--start has " + std::to_string(start.size()) + " entries, expected " + std::to_string(lm.ambient_dim()));
        }
        if (dt_flag <= 0.0 || steps_flag <= 0) throw UsageError("--start needs --dt and --steps");
        if (cd > 0 && cond_flag.size() == 0) throw UsageError("--cond is required for a conditioned model");
        s.states.push_back(start);
        s.conds.push_back(cond_flag);
        s.dts.push_back(dt_flag);
        s.steps.push_back(steps_flag);
        return s;
    }
    if (section(ctx, "data").at("path").get<std::string>().empty()) throw UsageError("either --start or --data is required");
    const TrajectoryDataset ds = load_data(ctx, cd > 0);
    if (ds.dim != lm.ambient_dim()) {
        throw UsageError("dataset has dim " + std::to_string(ds.dim) + ", the model expects " + std::to_string(lm.ambient_dim()));
    }
    for (const Demo& d : ds.demos) {
        s.states.push_back(d.states.row(0).transpose());
        Vec c = cond_flag;
        if (c.size() == 0 && cd > 0) {
            if (!d.condition || d.condition->size() != cd) throw UsageError("dataset conditions do not match the model");
            c = *d.condition;
        }
        s.conds.push_back(c);
        s.dts.push_back(dt_flag > 0.0 ? dt_flag : d.dt);
        s.steps.push_back(steps_flag > 0 ? steps_flag : static_cast<int>(d.states.rows()) - 1);
    }
    return s;
}

struct AmbientRollout {
    Vec times;
    std::vector<Vec> states;
    bool diverged = false;
};

AmbientRollout run_one(const LoadedModel& lm, const Vec& start, const Vec& cond, double dt, int steps,
                       const VelocityModulation& mod = nullptr) {
    const Rollout r = rollout(lm.model(), lm.to_model(start), dt, steps, cond, mod);
    AmbientRollout out{r.times, {}, r.diverged};
    out.states.reserve(r.states.size());
    for (const Vec& z : r.states) out.states.push_back(lm.to_ambient(z));
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string rollouts_csv(const std::vector<AmbientRollout>& rs, int dim) {
    std::ostringstream os;
    os << "demo,t";
    for (int c = 0; c < dim; ++c) os << ",x" << (c + 1);
    os << '\n';
    for (std::size_t i = 0; i < rs.size(); ++i) {
        for (std::size_t k = 0; k < rs[i].states.size(); ++k) {
            os << i << ',' << fmt(rs[i].times[static_cast<Index>(k)]);
            for (Index c = 0; c < rs[i].states[k].size(); ++c) os << ',' << fmt(rs[i].states[k][c]);
            os << '\n';
        }
    }
    return os.str();
}

int diverged_count(const std::vector<AmbientRollout>& rs) {
    return static_cast<int>(std::count_if(rs.begin(), rs.end(), [](const AmbientRollout& r) { return r.diverged; }));
}

// ---- grid bounds ----

GridBounds bounds_from(const json& arr, const std::vector<Vec>& points, int dim0, int dim1) {
    const auto b = arr.get<std::vector<double>>();
    if (!b.empty()) {
        if (b.size() != 4 || !(b[0] < b[1]) || !(b[2] < b[3])) throw UsageError("bounds must be lo0,hi0,lo1,hi1 with lo < hi");
        return {b[0], b[1], b[2], b[3]};
    }
    if (points.empty()) return {};
    double lo0 = points[0][dim0], hi0 = lo0, lo1 = points[0][dim1], hi1 = lo1;
    for (const Vec& p : points) {
        lo0 = std::min(lo0, p[dim0]);
        hi0 = std::max(hi0, p[dim0]);
        lo1 = std::min(lo1, p[dim1]);
        hi1 = std::max(hi1, p[dim1]);
    }
    const double pad0 = std::max(0.1 * (hi0 - lo0), 0.1), pad1 = std::max(0.1 * (hi1 - lo1), 0.1);
    return {lo0 - pad0, hi0 + pad0, lo1 - pad1, hi1 + pad1};
}

std::vector<std::vector<Vec>> model_space_demos(const LoadedModel& lm, const TrajectoryDataset& ds) {
    std::vector<std::vector<Vec>> out;
    for (const Demo& d : ds.demos) {
        std::vector<Vec> traj;
        for (Index r = 0; r < d.states.rows(); ++r) traj.push_back(lm.to_model(d.states.row(r).transpose()));
        out.push_back(std::move(traj));
    }
    return out;
}

std::vector<Vec> flatten(const std::vector<std::vector<Vec>>& trajs) {
    std::vector<Vec> all;
    for (const auto& t : trajs) all.insert(all.end(), t.begin(), t.end());
    return all;
}

std::optional<TrajectoryDataset> optional_data(Context& ctx, bool keep_conditions) {
    if (section(ctx, "data").at("path").get<std::string>().empty()) return std::nullopt;
    return load_data(ctx, keep_conditions);
}

Vec grid_condition(const Context& ctx, const Ncds& model, const std::optional<TrajectoryDataset>& ds) {
    const Vec c = to_vec(section(ctx, "eval").at("cond"));
    if (model.cond_dim() == 0) {
        if (c.size() != 0) throw UsageError("--cond given for an unconditioned model");
        return Vec();
    }
    if (c.size() == model.cond_dim()) return c;
    if (c.size() == 0 && ds && ds->demos.front().condition) return *ds->demos.front().condition;
    throw UsageError("--cond with " + std::to_string(model.cond_dim()) + " entries is required for this model");
}

// ---- svg ----

struct SvgFrame {
    GridBounds b;
    double size = 600.0;

    double px(double x) const { return (x - b.lo0) / (b.hi0 - b.lo0) * size; }
    double py(double y) const { return size - (y - b.lo1) / (b.hi1 - b.lo1) * size; }
};

std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string field_svg(const std::vector<GridSample>& samples, const GridSpec& spec,
                      const std::vector<std::vector<Vec>>& demos, const std::optional<Polygon2>& hull) {
    const SvgFrame fr{{spec.lo0, spec.hi0, spec.lo1, spec.hi1}};
    double vmax = 0.0;
    for (const GridSample& s : samples) vmax = std::max(vmax, std::hypot(s.v[spec.dim0], s.v[spec.dim1]));
    const double cell = fr.size / std::max(spec.res, 2);
    const double gain = vmax > 0.0 ? 0.8 * cell / vmax : 0.0;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
    os << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
    if (hull) {
        os << "<polygon class=\"hull\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"4 3\" points=\"";
        for (const Point2& p : hull->vertices) os << svg_num(fr.px(p.x())) << ',' << svg_num(fr.py(p.y())) << ' ';
        os << "\"/>\n";
    }
    for (const GridSample& s : samples) {
        const double x0 = fr.px(s.x[spec.dim0]), y0 = fr.py(s.x[spec.dim1]);
        const double dx = gain * s.v[spec.dim0], dy = -gain * s.v[spec.dim1];
        const double x1 = x0 + dx, y1 = y0 + dy;
        const double len = std::hypot(dx, dy);
        os << "<path class=\"arrow\" stroke=\"#246\" fill=\"none\" d=\"M" << svg_num(x0) << ' ' << svg_num(y0) << " L"
           << svg_num(x1) << ' ' << svg_num(y1);
        if (len > 1e-9) {
            const double ux = dx / len, uy = dy / len, h = std::min(0.35 * len, 6.0);
            os << " M" << svg_num(x1 - h * (ux - 0.5 * uy)) << ' ' << svg_num(y1 - h * (uy + 0.5 * ux)) << " L"
               << svg_num(x1) << ' ' << svg_num(y1) << " L" << svg_num(x1 - h * (ux + 0.5 * uy)) << ' '
               << svg_num(y1 - h * (uy - 0.5 * ux));
        }
        os << "\"/>\n";
    }
    for (const auto& traj : demos) {
        os << "<polyline class=\"demo\" fill=\"none\" stroke=\"#c33\" points=\"";
        for (const Vec& p : traj) os << svg_num(fr.px(p[spec.dim0])) << ',' << svg_num(fr.py(p[spec.dim1])) << ' ';
        os << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::optional<Polygon2> try_hull(const std::vector<Point2>& pts) {
    try {
        return hull_region(pts, default_hull_margin(pts));
    } catch (const ArgumentError&) {
        return std::nullopt;
    }
}

// ---- obstacle helpers ----

std::optional<SphereObstacle> obstacle_from(const Context& ctx) {
    const json& m = section(ctx, "modulation");
    const auto o = m.at("obstacle").get<std::vector<double>>();
    if (o.empty()) return std::nullopt;
    if (o.size() != 3 && o.size() != 4) throw UsageError("--obstacle expects cx,cy[,cz],r");
    SphereObstacle obs;
    obs.center = Eigen::Map<const Vec>(o.data(), static_cast<Index>(o.size() - 1));
    obs.radius = o.back();
    obs.reactivity = m.at("reactivity").get<double>();
    if (!(obs.radius > 0.0)) throw UsageError("--obstacle radius must be positive");
    return obs;
}

double bilinear(const DistanceFieldGrid& g, const std::vector<double>& f, const Vec& z) {
    const double u = std::clamp((z[0] - g.lo0) / g.step0(), 0.0, static_cast<double>(g.res - 1));
    const double v = std::clamp((z[1] - g.lo1) / g.step1(), 0.0, static_cast<double>(g.res - 1));
    const int i = std::min(static_cast<int>(u), g.res - 2), j = std::min(static_cast<int>(v), g.res - 2);
    const double a = u - i, b = v - j;
    auto at = [&](int ii, int jj) { return f[static_cast<std::size_t>(jj) * g.res + ii]; };
    return (1 - a) * (1 - b) * at(i, j) + a * (1 - b) * at(i + 1, j) + (1 - a) * b * at(i, j + 1) + a * b * at(i + 1, j + 1);
}

// Zero crossings of `f` along the edges of an n x n lattice.
std::vector<Vec> contour(const std::function<double(const Vec&)>& f, const GridBounds& b, int n) {
    std::vector<Vec> pts;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            Vec p(2);
            p << b.lo0 + (b.hi0 - b.lo0) * i / (n - 1), b.lo1 + (b.hi1 - b.lo1) * j / (n - 1);
            pts.push_back(p);
        }
    }
    const std::vector<double> vals = kernels::map_scalar_parallel(f, pts);
    std::vector<Vec> out;
    auto edge = [&](std::size_t a, std::size_t c) {
        if ((vals[a] < 0.0) == (vals[c] < 0.0)) return;
        const double t = vals[a] / (vals[a] - vals[c]);
        out.push_back(pts[a] + t * (pts[c] - pts[a]));
    };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const std::size_t k = static_cast<std::size_t>(j) * n + i;
            if (i + 1 < n) edge(k, k + 1);
            if (j + 1 < n) edge(k, k + n);
        }
    }
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string history_csv(const TrainResult& r) {
    std::ostringstream os;
    os << "epoch,total,velocity,reg\n";
    for (const LossRecord& h : r.history) os << h.epoch << ',' << fmt(h.total) << ',' << fmt(h.velocity) << ',' << fmt(h.reg) << '\n';
    return os.str();
}

std::string vae_history_csv(const VaeTrainResult& r) {
    std::ostringstream os;
    os << "epoch,elbo,recon_mse\n";
    for (const VaeRecord& h : r.history) os << h.epoch << ',' << fmt(h.elbo) << ',' << fmt(h.recon_mse) << '\n';
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

int run_gen_data(Context& ctx) {
    const json& d = section(ctx, "data");
    auto shapes = d.at("shapes").get<std::vector<std::string>>();
    if (shapes.empty()) shapes.push_back(d.at("shape").get<std::string>());
    const std::string combine = d.at("combine").get<std::string>();
    if (combine != "stack" && combine != "label") throw UsageError("unknown combine mode '" + combine + "' (stack|label)");
    const int demos = d.at("demos").get<int>();
    const int points = d.at("points").get<int>();
    const double noise = d.at("noise").get<double>();
    const std::uint64_t seed = seed_of(ctx);

    TrajectoryDataset ds;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        TrajectoryDataset part = synth_shapes(shapes[i], demos, points, noise, seed + i);
        if (i == 0) {
            ds = part;
            if (combine == "label" && shapes.size() > 1) {
                for (Demo& demo : ds.demos) demo.condition = Vec::Zero(1);
            }
        } else if (combine == "stack") {
            ds = stack(ds, part);
        } else {
            for (Demo& demo : part.demos) {
                demo.condition = Vec::Constant(1, static_cast<double>(i));
                ds.demos.push_back(std::move(demo));
            }
            ds.provenance.insert(ds.provenance.end(), part.provenance.begin(), part.provenance.end());
        }
    }
    const double pose = d.at("pose_scale").get<double>();
    if (pose > 0.0) ds = synth_pose_dataset(ds, pose);
    ds.validate();

    const std::string out = output_path(ctx, "dataset.json");
    write_json_artifact(ctx, out, dataset_to_json(ds));
    log(ctx) << "wrote " << out << ": demos=" << ds.demos.size() << " points=" << ds.total_points() << " dim=" << ds.dim
             << '\n';
    return kExitOk;
}

int run_train(Context& ctx) {
    const bool cond = section(ctx, "model").at("cond").get<bool>();
    TrajectoryDataset ds = load_data(ctx, cond);
    const int cd = ds.cond_dim();
    if (cond && cd == 0) throw UsageError("--cond needs a dataset with condition vectors");
    const std::string out = output_path(ctx, "model.json");
    std::string history = section(ctx, "output").at("history").get<std::string>();
    if (history.empty()) history = sibling(out, "history.csv");
    const int latent = section(ctx, "vae").at("latent_dim").get<int>();

    if (latent > 0) {
        LatentPipelineConfig pc;
        pc.vae = vae_config(ctx, ds);
        const json& v = section(ctx, "vae");
        pc.vae_train.lr = v.at("lr").get<double>();
        pc.vae_train.epochs = v.at("epochs").get<int>();
        pc.vae_train.batch_size = v.at("batch_size").get<int>();
        pc.vae_train.seed = seed_of(ctx);
        pc.field = field_config(ctx, latent, cd);
        pc.ncds_train = train_config(ctx);
        pc.quad_nodes = section(ctx, "model").at("quad_nodes").get<int>();
        LatentPipelineResult r = latent_train_pipeline(ds, pc);

        std::string vae_out = section(ctx, "output").at("vae").get<std::string>();
        if (vae_out.empty()) vae_out = sibling(out, "vae.json");
        std::string vae_hist = section(ctx, "output").at("vae_history").get<std::string>();
        if (vae_hist.empty()) vae_hist = sibling(out, "vae_history.csv");
        write_json_artifact(ctx, vae_out, vae_to_json(r.vae));
        write_json_artifact(ctx, out, ncds_to_json(r.ncds));
        write_csv_artifact(ctx, history, history_csv(r.ncds_history));
        write_csv_artifact(ctx, vae_hist, vae_history_csv(r.vae_history));
        const auto& vh = r.vae_history.history;
        log(ctx) << "vae: recon_mse " << fmt(vh.front().recon_mse) << " -> " << fmt(vh.back().recon_mse) << " (" << vae_out
                 << ")\n";
        const double lvel = r.ncds_history.history.empty() ? velocity_loss(r.ncds, r.latent_set)
                                                           : r.ncds_history.history.back().velocity;
        log(ctx) << "latent ncds: L_vel " << fmt(lvel) << " (" << out << ")\n";
        return kExitOk;
    }

    const TrainingSet set = to_training_set(ds);
    Ncds model(field_config(ctx, ds.dim, cd), QuadratureScheme::GaussLegendre,
               section(ctx, "model").at("quad_nodes").get<int>());
    Rng rng(seed_of(ctx));
    model.init(rng);
    const TrainResult r = train(model, set, train_config(ctx));
    write_json_artifact(ctx, out, ncds_to_json(model));
    write_csv_artifact(ctx, history, history_csv(r));
    const double lvel = r.history.empty() ? velocity_loss(model, set) : r.history.back().velocity;
    log(ctx) << "wrote " << out << ", " << history << "; final L_vel " << fmt(lvel) << '\n';
    return kExitOk;
}

int run_rollout(Context& ctx) {
    const LoadedModel lm = load_model(ctx);
    const StartSet s = collect_starts(ctx, lm);
    std::vector<AmbientRollout> rs(s.states.size());
    kernels::for_each_parallel(rs.size(), [&](std::size_t i) { rs[i] = run_one(lm, s.states[i], s.conds[i], s.dts[i], s.steps[i]); });
    const std::string out = output_path(ctx, "rollout.csv");
    write_csv_artifact(ctx, out, rollouts_csv(rs, lm.ambient_dim()));
    const int div = diverged_count(rs);
    log(ctx) << "wrote " << out << ": " << rs.size() << " rollouts, " << div << " diverged\n";
    if (div > 0) throw DivergenceError(std::to_string(div) + " rollout(s) diverged");
    return kExitOk;
}

int run_field(Context& ctx) {
    const LoadedModel lm = load_model(ctx);
    const Ncds& model = lm.model();
    if (model.dim() < 2) throw UsageError("field export needs a model with at least two state dimensions");
    const std::optional<TrajectoryDataset> ds = optional_data(ctx, model.cond_dim() > 0);
    std::vector<std::vector<Vec>> demos;
    if (ds) demos = model_space_demos(lm, *ds);

    const json& e = section(ctx, "eval");
    const GridBounds b = bounds_from(e.at("bounds"), flatten(demos), 0, 1);
    GridSpec spec{b.lo0, b.hi0, b.lo1, b.hi1, e.at("res").get<int>(), 0, 1, model.x0()};
    if (spec.res < 1) throw UsageError("--res must be positive");
    const Vec cond = grid_condition(ctx, model, ds);
    const std::vector<GridSample> samples = velocity_field_grid(model, spec, cond);

    std::ostringstream os;
    for (int c = 0; c < model.dim(); ++c) os << (c ? "," : "") << 'x' << (c + 1);
    for (int c = 0; c < model.dim(); ++c) os << ",v" << (c + 1);
    os << '\n';
    for (const GridSample& s : samples) {
        for (Index c = 0; c < s.x.size(); ++c) os << (c ? "," : "") << fmt(s.x[c]);
        for (Index c = 0; c < s.v.size(); ++c) os << ',' << fmt(s.v[c]);
        os << '\n';
    }
    const std::string out = output_path(ctx, "field.csv");
    write_csv_artifact(ctx, out, os.str());

    const std::string svg = section(ctx, "output").at("svg").get<std::string>();
    if (!svg.empty()) {
        std::optional<Polygon2> hull;
        if (!demos.empty()) hull = try_hull(project_points(demos));
        write_text_file(svg, field_svg(samples, spec, demos, hull));
    }
    log(ctx) << "wrote " << out << (svg.empty() ? "" : ", " + svg) << ": " << samples.size() << " samples\n";
    return kExitOk;
}

int run_eval(Context& ctx) {
    const LoadedModel lm = load_model(ctx);
    const Ncds& model = lm.model();
    const int cd = model.cond_dim();
    const TrajectoryDataset ds = load_data(ctx, cd > 0);
    if (ds.dim != lm.ambient_dim()) throw UsageError("dataset dimension does not match the model");
    const json& e = section(ctx, "eval");

    const std::size_t n = ds.demos.size();
    std::vector<AmbientRollout> rs(n);
    std::vector<Vec> conds(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (cd > 0) {
            if (!ds.demos[i].condition) throw UsageError("dataset conditions do not match the model");
            conds[i] = *ds.demos[i].condition;
        }
    }
    kernels::for_each_parallel(n, [&](std::size_t i) {
        const Demo& d = ds.demos[i];
        rs[i] = run_one(lm, d.states.row(0).transpose(), conds[i], d.dt, static_cast<int>(d.states.rows()) - 1);
    });

    EvalReport rep;
    std::vector<Trajectory> demo_trajs;
    for (const Demo& d : ds.demos) demo_trajs.push_back(rows_of(d.states));
    const std::vector<Point2> pts = project_points(demo_trajs);
    const double margin = e.at("margin").get<double>();
    rep.region = hull_region(pts, margin >= 0.0 ? margin : default_hull_margin(pts));
    json diverged = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        rep.dtwd.push_back(dtwd(rs[i].states, demo_trajs[i]));
        rep.dtwd_baseline.push_back(dtwd(straight_line_baseline(demo_trajs[i]), demo_trajs[i]));
        rep.steps_in_region.push_back(steps_in_region(rs[i].states, rep.region));
        rep.total_steps.push_back(static_cast<int>(rs[i].states.size()));
        diverged.push_back(rs[i].diverged);
    }

    const std::vector<std::vector<Vec>> mdemos = model_space_demos(lm, ds);
    const std::vector<Vec> all = flatten(mdemos);
    Vec cond = cd > 0 ? conds.front() : Vec();
    const Vec ec = to_vec(e.at("cond"));
    if (ec.size() > 0) {
        if (ec.size() != cd) throw UsageError("--cond does not match the model");
        cond = ec;
    }
    if (model.dim() >= 2) {
        const GridBounds b = bounds_from(e.at("bounds"), all, 0, 1);
        GridSpec spec{b.lo0, b.hi0, b.lo1, b.hi1, e.at("res").get<int>(), 0, 1, model.x0()};
        rep.maps = contraction_maps(model.field(), spec, cond);
    }

    // Nearby starts around the mean initial state, in model coordinates.
    const int n_starts = e.at("starts").get<int>();
    if (n_starts >= 2) {
        Vec mean = Vec::Zero(model.dim());
        for (const auto& t : mdemos) mean += t.front();
        mean /= static_cast<double>(mdemos.size());
        Vec lo = all.front(), hi = all.front();
        for (const Vec& p : all) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double radius = e.at("start_radius").get<double>() * std::max((hi - lo).norm(), 1e-12);
        Rng rng(seed_of(ctx) ^ 0x5eedULL);
        std::vector<Vec> starts;
        for (int i = 0; i < n_starts; ++i) {
            Vec p(model.dim());
            for (Index c = 0; c < p.size(); ++c) p[c] = mean[c] + rng.uniform(-radius, radius);
            starts.push_back(p);
        }
        const Demo& d0 = ds.demos.front();
        rep.distance_curve = pairwise_distance_curves(model, starts, d0.dt, static_cast<int>(d0.states.rows()) - 1, cond);
        rep.monotonicity = monotonicity_report(rep.distance_curve);
    }
    rep.metadata = json{{"diverged", diverged}};

    const std::string out = output_path(ctx, "eval.json");
    write_json_artifact(ctx, out, eval_report_to_json(rep));
    const std::string csv = section(ctx, "output").at("csv").get<std::string>();
    if (!csv.empty()) write_csv_artifact(ctx, csv, eval_report_to_csv(rep));

    for (std::size_t i = 0; i < n; ++i) {
        log(ctx) << "demo " << i << ": dtwd " << fmt(rep.dtwd[i]) << " baseline " << fmt(rep.dtwd_baseline[i])
                 << " in-region " << rep.steps_in_region[i] << "/" << rep.total_steps[i] << '\n';
    }
    log(ctx) << "monotone distance curve: " << (rep.monotonicity.monotone ? "yes" : "no") << "; wrote " << out << '\n';
    const int div = diverged_count(rs);
    if (div > 0) throw DivergenceError(std::to_string(div) + " rollout(s) diverged");
    return kExitOk;
}

int run_modulate(Context& ctx) {
    const LoadedModel lm = load_model(ctx);
    const Ncds& model = lm.model();
    const json& m = section(ctx, "modulation");
    const std::optional<SphereObstacle> obs = obstacle_from(ctx);
    const std::string field = m.at("field").get<std::string>();
    if (obs.has_value() == !field.empty()) throw UsageError("exactly one of --obstacle and --field is required");

    VelocityModulation mod;
    std::function<double(const Vec&)> clearance;
    if (obs) {
        if (obs->center.size() != model.dim()) {
            throw UsageError("obstacle center has " + std::to_string(obs->center.size()) + " coordinates, the model state has " +
                             std::to_string(model.dim()));
        }
        mod = make_modulation(*obs);
        clearance = [o = *obs](const Vec& z) { return gamma(o, z); };
    } else {
        if (model.dim() != 2) throw UsageError("--field needs a two-dimensional model state");
        RiemannianModulator rm;
        rm.grid = grid_from_json(parse_input(ctx, field));
        rm.nu = m.at("nu").get<double>();
        rm.k = m.at("k").get<double>();
        rm.sigma_beta = m.at("sigma_beta").get<double>();
        const Vec goal = to_vec(m.at("goal"));
        if (goal.size() != 0 && goal.size() != 2) throw UsageError("--goal needs two coordinates");
        rm.goal = goal.size() ? goal : model.x0();
        XiParams{rm.grid.rho_imp, rm.nu, 0.0, 1.0, rm.k}.validate();
        mod = make_modulation(rm);
        clearance = [g = rm.grid](const Vec& z) {
            return g.contains(z) ? g.value_at(z) : std::numeric_limits<double>::infinity();
        };
    }

    const StartSet s = collect_starts(ctx, lm);
    std::vector<AmbientRollout> rs(s.states.size());
    std::vector<double> worst(s.states.size(), std::numeric_limits<double>::infinity());
    kernels::for_each_parallel(rs.size(), [&](std::size_t i) {
        const Rollout r = rollout(model, lm.to_model(s.states[i]), s.dts[i], s.steps[i], s.conds[i], mod);
        AmbientRollout a{r.times, {}, r.diverged};
        for (const Vec& z : r.states) {
            worst[i] = std::min(worst[i], clearance(z));
            a.states.push_back(lm.to_ambient(z));
        }
        rs[i] = std::move(a);
    });

    const std::string out = output_path(ctx, "modulated.csv");
    write_csv_artifact(ctx, out, rollouts_csv(rs, lm.ambient_dim()));
    log(ctx) << "wrote " << out << ": " << rs.size() << " rollouts, min " << (obs ? "Gamma " : "S ")
             << fmt(*std::min_element(worst.begin(), worst.end())) << '\n';
    const int div = diverged_count(rs);
    if (div > 0) throw DivergenceError(std::to_string(div) + " rollout(s) diverged");
    return kExitOk;
}

int run_calibrate_alpha(Context& ctx) {
    const json& m = section(ctx, "modulation");
    const double rho = m.at("rho_imp").get<double>();
    const std::string out = output_path(ctx, "grid.json");
    const std::string existing = m.at("field").get<std::string>();

    if (!existing.empty()) {
        DistanceFieldGrid grid = grid_from_json(parse_input(ctx, existing));
        const json bj = parse_input(ctx, require_path(m, "boundary", "--boundary"));
        std::vector<double> vn;
        for (const json& p : bj.at("points")) {
            const Vec z = to_vec(p);
            if (z.size() != 2) throw UsageError("boundary points need two coordinates");
            if (!grid.contains(z)) throw UsageError("boundary point outside the grid");
            vn.push_back(bilinear(grid, grid.volume_norm, z));
        }
        if (vn.empty()) throw UsageError("boundary file has no points");
        calibrate_alpha(grid, vn, rho);
        write_json_artifact(ctx, out, grid_to_json(grid));
        log(ctx) << "alpha " << fmt(grid.alpha) << " from " << vn.size() << " boundary points; wrote " << out << '\n';
        return kExitOk;
    }

    const std::optional<SphereObstacle> obs = obstacle_from(ctx);
    if (!obs) throw UsageError("--obstacle or --field is required");
    std::optional<InjectiveVae> vae;
    const std::string vp = section(ctx, "vae").at("path").get<std::string>();
    if (!vp.empty()) vae = vae_from_json(parse_input(ctx, vp));
    const int ambient = vae ? vae->ambient_dim() : 2;
    if (vae && vae->latent_dim() != 2) throw UsageError("distance fields need a two-dimensional latent space");

    AmbientMetric metric;
    const int pos = std::min(3, ambient);
    if (obs->center.size() != pos) {
        throw UsageError("obstacle center needs " + std::to_string(pos) + " coordinates for this ambient space");
    }
    metric.bumps.push_back({m.at("bump_weight").get<double>(), obs->center, obs->radius});

    MetricProvider provider;
    std::function<Vec(const Vec&)> decode;
    if (vae) {
        provider = [&](const Vec& z) { return vae->pullback_metric(z, metric); };
        decode = [&](const Vec& z) { return vae->decode(z); };
    } else {
        provider = [&](const Vec& z) { return ambient_metric_at(metric, z); };
        decode = [](const Vec& z) { return z; };
    }

    std::vector<Vec> latent_pts;
    if (const auto ds = optional_data(ctx, false)) {
        for (const Demo& d : ds->demos) {
            for (Index r = 0; r < d.states.rows(); ++r) {
                const Vec x = d.states.row(r).transpose();
                latent_pts.push_back(vae ? vae->encode_mean(x) : x);
            }
        }
    }
    const auto mb = m.at("bounds").get<std::vector<double>>();
    if (mb.empty() && latent_pts.empty()) throw UsageError("--bounds or --data is required");
    const GridBounds b = bounds_from(m.at("bounds"), latent_pts, 0, 1);
    const int res = m.at("res").get<int>();

    const std::vector<Vec> boundary = contour(
        [&](const Vec& z) { return (decode(z).head(pos) - obs->center).norm() - obs->radius; }, b, 2 * res);
    if (boundary.empty()) throw UsageError("the obstacle boundary does not cross the grid");

    DistanceFieldGrid grid = build_distance_field(provider, b, res, rho, boundary);
    std::vector<double> s;
    for (const Vec& z : boundary) s.push_back(grid.value_at(z));
    write_json_artifact(ctx, out, grid_to_json(grid));
    log(ctx) << "alpha " << fmt(grid.alpha) << "; median S on " << boundary.size() << " boundary samples " << fmt(median(s))
             << "; wrote " << out << '\n';
    return kExitOk;
}

}  // namespace contraflow::cli
