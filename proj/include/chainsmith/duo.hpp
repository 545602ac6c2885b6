#pragma once

#include <chainsmith/backend.hpp>
#include <chainsmith/prompts.hpp>
#include <chainsmith/records.hpp>

#include <json.hpp>

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chainsmith::duo {

using backend::ChatBackend;
using backend::ChatMessage;
using backend::GenerationParams;
using records::AnswerRecord;
using schema::QueryRecord;
using schema::ReasoningTrace;

struct DuoConfig {
    backend::BackendConfig reasoning_backend;
    backend::BackendConfig summary_backend;
    GenerationParams reasoning_params;
    GenerationParams summary_params;
    int max_steps = 12;
};

/// Reasoning agent followed by summary agent. The two backends may be the same object.
class Duo {
public:
    Duo(std::shared_ptr<ChatBackend> reasoning, std::shared_ptr<ChatBackend> summary, PromptSet prompts,
        GenerationParams reasoning_params, GenerationParams summary_params, int max_steps);

    static Duo from_config(const DuoConfig& cfg, PromptSet prompts);

    /// generator::generate_trace on the reasoning backend.
    ReasoningTrace reason(const QueryRecord& query) const;
    /// One summary-backend call; the reply is returned verbatim.
    std::string summarize(const QueryRecord& query, const ReasoningTrace& trace) const;
    /// reason, then summarize. A reasoning backend failure yields an incomplete trace and
    /// the summary agent still answers.
    std::pair<ReasoningTrace, std::string> answer(const QueryRecord& query) const;
    /// answer() per query, results in input order.
    std::vector<AnswerRecord> answer_all(std::span<const QueryRecord> queries) const;

    std::vector<ChatMessage> summary_messages(const QueryRecord& query, const ReasoningTrace& trace) const;

private:
    std::shared_ptr<ChatBackend> reasoning_;
    std::shared_ptr<ChatBackend> summary_;
    PromptSet prompts_;
    GenerationParams reasoning_params_;
    GenerationParams summary_params_;
    int max_steps_;
};

std::vector<ChatMessage> trace_judge_messages(const PromptSet& prompts, const QueryRecord& query,
                                              const ReasoningTrace& trace);

/// Judge verdict on whether the reasoning path itself is correct. Throws assessor::VerdictError.
bool judge_trace(ChatBackend& judge, const PromptSet& prompts, const QueryRecord& query, const ReasoningTrace& trace,
                 const GenerationParams& params);

struct EvalOutcome {
    std::string query_id;
    bool trace_correct = false;
    bool answer_correct = false;
    std::string predicted_answer;
    ReasoningTrace trace;
};

/// 2x2 counts of (trace correct, answer correct).
struct ConfusionMatrix {
    std::size_t both_correct = 0;  // trace ✓ answer ✓
    std::size_t trace_only = 0;    // trace ✓ answer ✗
    std::size_t answer_only = 0;   // trace ✗ answer ✓
    std::size_t neither = 0;       // trace ✗ answer ✗

    std::size_t total() const noexcept { return both_correct + trace_only + answer_only + neither; }
    nlohmann::json to_json() const;
    std::string to_csv() const;

    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion_matrix(std::span<const EvalOutcome> outcomes);

struct EvalReport {
    std::vector<EvalOutcome> outcomes;
    ConfusionMatrix matrix;
    double accuracy = 0.0;
    std::vector<std::string> log;

    nlohmann::json to_json() const;
};

/// Judges every answer (answer_judge) and trace (trace_judge) against the queries' ground truth.
EvalReport evaluate(ChatBackend& answer_judge, ChatBackend& trace_judge, const PromptSet& prompts,
                    std::span<const QueryRecord> queries, std::span<const AnswerRecord> answers,
                    const GenerationParams& judge_params);

}  // namespace chainsmith::duo
