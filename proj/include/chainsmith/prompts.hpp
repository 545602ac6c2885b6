#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace chainsmith {

/// Substitutes every {{key}} in `tmpl`. Throws Error on a placeholder with no value.
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars);

/// The versioned prompt templates used by every agent role.
struct PromptSet {
    std::string reasoning_system;
    std::string reasoning_task;
    std::string reasoning_step;
    std::string reasoning_cap;
    std::string reasoning_final;
    std::string answer_judge;
    std::string verdict_reask;
    std::string score_judge;
    std::string score_reask;
    std::string summary_agent;
    std::string trace_judge;

    /// Loads `<role>.v1.txt` from `dir` for every role; `names` maps a role to a different asset stem.
    static PromptSet load(const std::filesystem::path& dir, const std::map<std::string, std::string>& names = {});
};

}  // namespace chainsmith
