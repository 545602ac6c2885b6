#pragma once

#include <chainsmith/backend.hpp>
#include <chainsmith/prompts.hpp>
#include <chainsmith/schema.hpp>
#include <chainsmith/sim.hpp>

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

namespace testutil {

inline std::filesystem::path source_dir() { return CHAINSMITH_SOURCE_DIR; }
inline std::filesystem::path prompt_dir() { return source_dir() / "assets" / "prompts"; }
inline chainsmith::PromptSet prompts() { return chainsmith::PromptSet::load(prompt_dir()); }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    static std::mt19937_64 rng{std::random_device{}()};
    auto dir = std::filesystem::temp_directory_path() / ("chainsmith-" + name + "-" + std::to_string(rng()));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string step_json(const std::string& title, const std::string& detail, const std::string& action) {
    return nlohmann::json{{"summary", title}, {"reasoning", detail}, {"action", action}}.dump();
}

inline std::string final_json(const std::string& summary, const std::string& answer) {
    return nlohmann::json{{"summary", summary}, {"answer", answer}}.dump();
}

inline chainsmith::schema::QueryRecord query(const std::string& id, const std::string& question,
                                             const std::string& truth) {
    return {id, "file://images/" + id + ".png", question, truth};
}

/// Canned replies for one sample: one per step call plus the final call.
struct ScriptPlan {
    std::vector<std::string> steps;
    std::string final;
};

/// Generator model replying from plans[seed], or "" when the plan runs out.
inline chainsmith::backend::RecordingBackend::Responder plan_responder(std::map<std::int64_t, ScriptPlan> plans) {
    return [plans = std::move(plans)](const chainsmith::backend::Request& r) -> std::string {
        const auto it = plans.find(r.params.seed.value_or(-1));
        if (it == plans.end()) return "";
        if (chainsmith::sim::is_final_request(r)) return it->second.final;
        const auto k = static_cast<std::size_t>(chainsmith::sim::requested_step(r));
        return k >= 1 && k <= it->second.steps.size() ? it->second.steps[k - 1] : "";
    };
}

/// Records everything `run` asks of `responder` and returns the scripted table.
inline std::map<std::string, std::string> author_table(chainsmith::backend::RecordingBackend::Responder responder,
                                                       const std::function<void(chainsmith::backend::ChatBackend&)>& run,
                                                       int max_in_flight = 1) {
    chainsmith::backend::RecordingBackend rec(std::move(responder), max_in_flight);
    run(rec);
    return rec.table();
}

}  // namespace testutil
