#pragma once

#include <chainsmith/error.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chainsmith::schema {

enum class StepAction { Continue, Summary };

std::string to_string(StepAction a);

struct ReasoningStep {
    int index = 0;  // 1-based position within the trace
    std::string title;
    std::string detail;
    StepAction action = StepAction::Continue;
    bool repaired = false;  // lenient repair was needed to parse the model reply

    bool operator==(const ReasoningStep&) const = default;
};

struct ReasoningTrace {
    std::vector<ReasoningStep> steps;
    std::optional<std::string> final_summary;
    std::optional<std::string> final_answer;
    bool complete = false;
    bool forced_summary = false;  // the step cap forced the last step to Summary
    std::vector<std::string> diagnostics;

    bool operator==(const ReasoningTrace&) const = default;
};

struct QueryRecord {
    std::string id;
    std::string image_ref;
    std::string question;
    std::string ground_truth;

    bool operator==(const QueryRecord&) const = default;
};

class ParseError : public Error {
public:
    enum class Kind { MalformedJson, MissingField, UnknownAction, EmptyField };
    ParseError(Kind kind, std::string detail, const std::string& what)
        : Error(what), kind_(kind), detail_(std::move(detail)) {}
    Kind kind() const noexcept { return kind_; }
    /// Missing/empty field name, offending action value, or parser message.
    const std::string& detail() const noexcept { return detail_; }

private:
    Kind kind_;
    std::string detail_;
};

/// Strict parse of one step object with keys summary/reasoning/action.
/// The returned step has index 0; callers place it.
ReasoningStep parse_step(std::string_view text);

/// Strips code fences, surrounding prose and trailing commas.
/// Returns nullopt when the text was left unchanged.
std::optional<std::string> repair_json(std::string_view text);

/// parse_step, falling back to repair_json; sets `repaired` when the fallback was used.
ReasoningStep parse_step_lenient(std::string_view text);

struct FinalAnswer {
    std::string summary;
    std::string answer;
    bool repaired = false;
};

/// Parses {"summary": ..., "answer": ...}, leniently.
FinalAnswer parse_final(std::string_view text);

/// Canonical single-line JSON of a step in the on-disk/generation format.
std::string serialize_step(const ReasoningStep& step);
std::string serialize_final(const std::string& summary, const std::string& answer);

struct Violation {
    std::optional<int> step_index;
    std::string message;

    bool operator==(const Violation&) const = default;
};

/// Lists every broken invariant; empty means the trace is valid.
std::vector<Violation> validate_trace(const ReasoningTrace& trace);

/// Human-readable rendering used inside prompts: "Step k: title\ndetail".
std::string render_steps(const ReasoningTrace& trace);
/// Marker placed in summary prompts when the reasoning trace has no steps.
inline constexpr const char* kNoReasoningMarker = "(no reasoning provided)";

/// Steps plus final summary (never the final answer), as shown to the summary agent.
std::string render_supplement(const ReasoningTrace& trace);

/// Full generation-format text: one step JSON per line, then the final JSON.
std::string render_generation(const ReasoningTrace& trace);

// JSON conversion (ADL hooks for nlohmann::json).
void to_json(nlohmann::json& j, const ReasoningStep& s);
void from_json(const nlohmann::json& j, ReasoningStep& s);
void to_json(nlohmann::json& j, const ReasoningTrace& t);
void from_json(const nlohmann::json& j, ReasoningTrace& t);
void to_json(nlohmann::json& j, const QueryRecord& q);
void from_json(const nlohmann::json& j, QueryRecord& q);

}  // namespace chainsmith::schema
