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

#include <iosfwd>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace contraflow::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitTraining = 3, kExitIo = 4, kExitDivergence = 5 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every knob the commands read, with its default. Sections: data, model,
/// train, vae, modulation, eval, output, plus the top-level seed.
nlohmann::json default_config();

/// Copies `overlay` into `base`. Keys missing from `base` and type mismatches
/// throw UsageError naming the JSON pointer.
void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& path = "");

/// Hash git assigns to a blob with these bytes (hex SHA-1 of "blob <n>\0" + bytes).
std::string git_blob_sha1(const std::string& bytes);

struct Context {
    std::string command;
    nlohmann::json config;
    nlohmann::json inputs = nlohmann::json::object();  // path -> blob hash
    std::ostream* log = nullptr;
};

int run_gen_data(Context& ctx);
int run_train(Context& ctx);
int run_rollout(Context& ctx);
int run_field(Context& ctx);
int run_eval(Context& ctx);
int run_modulate(Context& ctx);
int run_calibrate_alpha(Context& ctx);

}  // namespace contraflow::cli
