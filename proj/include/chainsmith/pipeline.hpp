#pragma once

#include <chainsmith/backend.hpp>
#include <chainsmith/curator.hpp>
#include <chainsmith/dpo.hpp>
#include <chainsmith/generator.hpp>
#include <chainsmith/prompts.hpp>

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace chainsmith::pipeline {

namespace fs = std::filesystem;

struct Paths {
    fs::path queries;
    fs::path general_qa;  // optional input; empty means none
    fs::path traces;
    fs::path scored;
    fs::path sft_reasoning;
    fs::path sft_summary;
    fs::path pairs;
    fs::path pairs_chat;
    fs::path answers;
    fs::path eval_report;
    fs::path eval_csv;
    fs::path dpo_report;
};

struct ToyTaskConfig {
    int prompts = 8;
    int vocab = 6;
    int samples_per_prompt = 6;
};

struct PipelineConfig {
    std::int64_t seed = 0;
    fs::path prompt_dir;
    std::map<std::string, std::string> prompt_names;
    std::map<std::string, backend::BackendConfig> backends;  // generator, answer_judge, score_judge, reasoning_agent, summary_agent, trace_judge
    generator::GenConfig generation;
    curator::CurationConfig curation;
    dpo::DpoConfig dpo;
    ToyTaskConfig toy_task;
    backend::GenerationParams reasoning_params;
    backend::GenerationParams summary_params;
    backend::GenerationParams judge_params;
    int inference_max_steps = 12;
    Paths paths;

    /// Parses a config document; relative paths resolve against `base_dir`. Throws ConfigError.
    static PipelineConfig from_json(const nlohmann::json& doc, const fs::path& base_dir);
    /// Reads `path`, applies dotted `key=value` overrides, then parses.
    static PipelineConfig load(const fs::path& path, const std::vector<std::string>& overrides = {});
};

/// Sets doc[a][b]... = value for "a.b...=value"; the value is parsed as JSON when possible.
void apply_override(nlohmann::json& doc, const std::string& assignment);

inline const std::vector<std::string>& backend_roles() {
    static const std::vector<std::string> roles = {"generator", "answer_judge", "score_judge", "reasoning_agent",
                                                   "summary_agent", "trace_judge"};
    return roles;
}

/// Live backend handles keyed by role.
struct Backends {
    std::map<std::string, std::shared_ptr<backend::ChatBackend>> by_role;

    /// Builds handles for `roles` only, so a stage never touches unrelated endpoints or tables.
    static Backends from_config(const PipelineConfig& cfg, const std::vector<std::string>& roles = backend_roles());
    backend::ChatBackend& at(const std::string& role) const;
    std::shared_ptr<backend::ChatBackend> shared(const std::string& role) const;
};

/// Each stage reads only its inputs from disk and writes its outputs; progress goes to `log`.
void stage_generate(const PipelineConfig& cfg, const Backends& b, std::ostream& log);
void stage_assess(const PipelineConfig& cfg, const Backends& b, std::ostream& log);
void stage_curate(const PipelineConfig& cfg, std::ostream& log);
void stage_dpo_iterate(const PipelineConfig& cfg, std::ostream& log);
void stage_infer(const PipelineConfig& cfg, const Backends& b, std::ostream& log);
void stage_eval(const PipelineConfig& cfg, const Backends& b, std::ostream& log);
void run_all(const PipelineConfig& cfg, const Backends& b, std::ostream& log);

}  // namespace chainsmith::pipeline
