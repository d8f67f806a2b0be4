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


#include <cerrno>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli_commands.hpp"
#include "contraflow/errors.hpp"
#include "contraflow/serialization.hpp"

using nlohmann::json;
using namespace contraflow;

namespace {

enum class Kind { Value, List, StrList, Set };

// One flag writing one config entry. Set flags store `set` when present.
struct Binding {
    std::string pointer;
    Kind kind = Kind::Value;
    json set;
    std::string raw;
    CLI::Option* opt = nullptr;
};

struct Command {
    CLI::App* app = nullptr;
    int (*run)(cli::Context&) = nullptr;
    std::string config_file;
    std::vector<Binding> bindings;

    void bind(const std::string& flag, const std::string& pointer, const std::string& help, Kind kind = Kind::Value) {
        bindings.push_back({pointer, kind, nullptr, "", nullptr});
        Binding& b = bindings.back();
        b.opt = app->add_option(flag, b.raw, help + "  [" + pointer + "]");
    }
    void flag(const std::string& flag, const std::string& pointer, json value, const std::string& help) {
        bindings.push_back({pointer, Kind::Set, std::move(value), "", nullptr});
        bindings.back().opt = app->add_flag(flag)->description(help + "  [" + pointer + "]");
    }
};

json scalar_from(const std::string& s, const json& like, const std::string& flag) {
    auto bad = [&](const char* what) { return cli::UsageError(flag + ": '" + s + "' is not " + what); };
    if (like.is_number_integer()) {
        errno = 0;
        char* end = nullptr;
        const long long v = std::strtoll(s.c_str(), &end, 10);
        if (s.empty() || *end != '\0' || errno) throw bad("an integer");
        return v;
    }
    if (like.is_number()) {
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || *end != '\0' || errno) throw bad("a number");
        return v;
    }
    if (like.is_boolean()) {
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        throw bad("true or false");
    }
    return s;
}

void apply(json& config, const Binding& b) {
    const json::json_pointer ptr(b.pointer);
    json& slot = config.at(ptr);
    const std::string flag = b.opt->get_name();
    if (b.kind == Kind::Set) {
        slot = b.set;
        return;
    }
    if (b.kind == Kind::Value) {
        slot = scalar_from(b.raw, slot, flag);
        return;
    }
    const json like = b.kind == Kind::StrList ? json("") : slot.empty() ? json(0.0) : slot.front();
    json arr = json::array();
    std::size_t start = 0;
    while (start <= b.raw.size()) {
        const std::size_t comma = b.raw.find(',', start);
        const std::string item = b.raw.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) arr.push_back(scalar_from(item, like, flag));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    slot = arr;
}

void data_flags(Command& c) {
    c.bind("--data", "/data/path", "dataset JSON");
    c.bind("--trim-head", "/data/trim_head", "drop this many leading samples per demo");
    c.flag("--no-align", "/data/align_target", false, "keep demo endpoints where they are");
    c.bind("--resample", "/data/resample_n", "arc-length resample each demo to this many points");
    c.bind("--scale", "/data/scale", "multiply every state by this factor");
}

void model_flags(Command& c) {
    c.bind("--model", "/model/path", "model JSON");
    c.bind("--vae", "/vae/path", "VAE JSON for latent models");
}

void start_flags(Command& c) {
    c.bind("--start", "/eval/start", "single ambient start state (comma list)", Kind::List);
    c.bind("--cond", "/eval/cond", "condition vector (comma list)", Kind::List);
    c.bind("--dt", "/eval/dt", "integration step; defaults to the demo dt");
    c.bind("--steps", "/eval/steps", "RK4 steps; defaults to the demo length");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contraflow: contractive dynamical systems from demonstrations"};
    app.require_subcommand(1);
    std::vector<Command> cmds;
    cmds.reserve(8);

    auto add = [&](const char* name, const char* help, int (*run)(cli::Context&), const char* out_help) -> Command& {
        cmds.push_back({app.add_subcommand(name, help), run, "", {}});
        Command& c = cmds.back();
        c.bindings.reserve(64);
        c.app->add_option("--config", c.config_file, "JSON config; explicit flags override its values");
        c.bind("--seed", "/seed", "random seed");
        c.bind("--out", "/output/path", out_help);
        return c;
    };

    {
        Command& c = add("gen-data", "synthesize a demonstration dataset", cli::run_gen_data, "dataset JSON to write");
        c.bind("--shape", "/data/shape", "synthetic shape name");
        c.bind("--shapes", "/data/shapes", "several shapes (comma list), combined per --combine", Kind::StrList);
        c.bind("--combine", "/data/combine", "stack (side by side columns) or label (conditioned union)");
        c.bind("--demos", "/data/demos", "demos per shape");
        c.bind("--points", "/data/points", "samples per demo");
        c.bind("--noise", "/data/noise", "demo noise level");
        c.bind("--pose-scale", "/data/pose_scale", "lift 2-D demos to position+so3 poses with this scale");
    }
    {
        Command& c = add("train", "train an NCDS, a conditioned NCDS or the latent pipeline", cli::run_train,
                         "model JSON to write");
        data_flags(c);
        c.bind("--epochs", "/train/epochs", "training epochs");
        c.bind("--lr", "/train/lr", "Adam learning rate");
        c.bind("--batch-size", "/train/batch_size", "minibatch size, 0 for full batch");
        c.bind("--reg", "/model/reg", "constant|state-independent|state-dependent|eigenvalue");
        c.bind("--beta", "/model/beta", "regularization weight");
        c.bind("--eps", "/model/eps", "constant diagonal epsilon");
        c.bind("--eps-cap", "/model/eps_cap", "bound on learned epsilon magnitudes");
        c.bind("--eigen-reference", "/model/eigen_reference", "max|index");
        c.bind("--reference-index", "/model/reference_index", "eigenvalue index for --eigen-reference index");
        c.bind("--mode", "/model/mode", "contractive|unconstrained");
        c.bind("--hidden", "/model/hidden", "Jacobian network widths (comma list)", Kind::List);
        c.bind("--activation", "/model/activation", "tanh|softplus|sigmoid|relu");
        c.flag("--skew", "/model/skew", true, "add the learned skew term (3-D states)");
        c.flag("--cond", "/model/cond", true, "condition on the dataset's condition vectors");
        c.bind("--quad-nodes", "/model/quad_nodes", "Gauss-Legendre nodes");
        c.bind("--latent", "/vae/latent_dim", "train a VAE with this latent dimension first");
        c.bind("--coupling", "/vae/coupling", "affine|spline");
        c.bind("--vae-layers", "/vae/layers", "coupling layers");
        c.bind("--vae-hidden", "/vae/hidden", "affine conditioner widths (comma list)", Kind::List);
        c.bind("--vae-epochs", "/vae/epochs", "VAE training epochs");
        c.bind("--vae-lr", "/vae/lr", "VAE learning rate");
        c.bind("--history", "/output/history", "loss history CSV (default: history.csv next to --out)");
        c.bind("--vae-out", "/output/vae", "VAE JSON (default: vae.json next to --out)");
        c.bind("--vae-history", "/output/vae_history", "VAE history CSV (default: vae_history.csv next to --out)");
    }
    {
        Command& c = add("rollout", "integrate a trained model from demo or given starts", cli::run_rollout,
                         "trajectory CSV to write");
        model_flags(c);
        data_flags(c);
        start_flags(c);
    }
    {
        Command& c = add("field", "sample the velocity field on a grid", cli::run_field, "grid CSV to write");
        model_flags(c);
        data_flags(c);
        c.bind("--res", "/eval/res", "grid resolution per axis");
        c.bind("--bounds", "/eval/bounds", "lo0,hi0,lo1,hi1 (default: demo extent)", Kind::List);
        c.bind("--cond", "/eval/cond", "condition vector (comma list)", Kind::List);
        c.bind("--svg", "/output/svg", "also draw arrows, demos and hull to this SVG");
    }
    {
        Command& c = add("eval", "evaluate a model against its demos", cli::run_eval, "report JSON to write");
        model_flags(c);
        data_flags(c);
        c.bind("--res", "/eval/res", "contraction map resolution");
        c.bind("--bounds", "/eval/bounds", "lo0,hi0,lo1,hi1 (default: demo extent)", Kind::List);
        c.bind("--cond", "/eval/cond", "condition used for maps and distance curves", Kind::List);
        c.bind("--starts", "/eval/starts", "nearby starts for the distance curve");
        c.bind("--start-radius", "/eval/start_radius", "start spread relative to the demo extent");
        c.bind("--margin", "/eval/margin", "hull margin; negative picks 5% of the bounding-box diagonal");
        c.bind("--csv", "/output/csv", "also write the per-demo CSV summary");
    }
    {
        Command& c = add("modulate", "roll out with obstacle modulation", cli::run_modulate, "trajectory CSV to write");
        model_flags(c);
        data_flags(c);
        start_flags(c);
        c.bind("--obstacle", "/modulation/obstacle", "sphere cx,cy[,cz],r in model coordinates", Kind::List);
        c.bind("--reactivity", "/modulation/reactivity", "sphere reactivity");
        c.bind("--field", "/modulation/field", "distance-field grid JSON (Riemannian modulation)");
        c.bind("--nu", "/modulation/nu", "inactive level");
        c.bind("--k", "/modulation/k", "transition steepness");
        c.bind("--sigma-beta", "/modulation/sigma_beta", "stagnation blend width");
        c.bind("--goal", "/modulation/goal", "attractor for the tangential escape (default: model anchor)", Kind::List);
    }
    {
        Command& c = add("calibrate-alpha", "build or recalibrate a distance-field grid", cli::run_calibrate_alpha,
                         "grid JSON to write");
        data_flags(c);
        c.bind("--vae", "/vae/path", "VAE whose pullback metric defines the field");
        c.bind("--obstacle", "/modulation/obstacle", "ambient sphere cx,cy[,cz],r", Kind::List);
        c.bind("--field", "/modulation/field", "existing grid to recalibrate");
        c.bind("--boundary", "/modulation/boundary", "JSON {\"points\": [[z0, z1], ...]} for recalibration");
        c.bind("--rho-imp", "/modulation/rho_imp", "impenetrable level");
        c.bind("--bump-weight", "/modulation/bump_weight", "ambient metric bump weight");
        c.bind("--res", "/modulation/res", "grid resolution per axis");
        c.bind("--bounds", "/modulation/bounds", "latent lo0,hi0,lo1,hi1 (default: demo extent)", Kind::List);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kExitUsage;
    }

    for (Command& c : cmds) {
        if (!c.app->parsed()) continue;
        cli::Context ctx;
        ctx.command = c.app->get_name();
        ctx.log = &std::cout;
        try {
            ctx.config = cli::default_config();
            if (!c.config_file.empty()) {
                json file;
                try {
                    file = read_json_file(c.config_file);
                } catch (const ParseError& e) {
                    throw cli::UsageError(std::string("config: ") + e.what());
                }
                cli::merge_config(ctx.config, file);
            }
            for (const Binding& b : c.bindings) {
                if (b.opt->count() > 0) apply(ctx.config, b);
            }
            return c.run(ctx);
        } catch (const cli::UsageError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitUsage;
        } catch (const cli::DivergenceError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitDivergence;
        } catch (const TrainingError& e) {
            std::cerr << "error: training failed at epoch " << e.epoch() << ": " << e.what() << '\n';
            return cli::kExitTraining;
        } catch (const NumericError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitTraining;
        } catch (const IoError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitIo;
        } catch (const ParseError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitIo;
        } catch (const std::invalid_argument& e) {  // ArgumentError, DimensionError, UnsupportedDimension
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitUsage;
        } catch (const std::logic_error& e) {  // ContractViolation, FirstCoverError
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitUsage;
        } catch (const json::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return cli::kExitIo;
        }
    }
    return cli::kExitUsage;
}
