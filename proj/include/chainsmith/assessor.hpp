#pragma once

#include <chainsmith/backend.hpp>
#include <chainsmith/prompts.hpp>
#include <chainsmith/records.hpp>

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace chainsmith::assessor {

using backend::ChatBackend;
using backend::ChatMessage;
using backend::GenerationParams;
using records::ScoredRecord;
using records::TraceRecord;
using schema::QueryRecord;
using schema::ReasoningTrace;

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 100;

/// Greedy decoding with a fixed seed; judges are expected to be deterministic.
GenerationParams default_judge_params();

/// true for a leading "yes", false for a leading "no" (case-insensitive), nullopt otherwise.
std::optional<bool> parse_verdict(std::string_view reply);

class VerdictError : public Error {
public:
    using Error::Error;
};

class ScoreError : public Error {
public:
    enum class Kind { CountMismatch, OutOfRange };
    ScoreError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Parses "index: score" lines. Lines of any other shape are ignored.
/// CountMismatch unless the indices are exactly 1..expected; then OutOfRange if any
/// score falls outside [1, 100]. Scores are returned in index order, unmodified.
std::vector<int> parse_scores(std::string_view reply, std::size_t expected);

/// Asks for a yes/no verdict, re-asking once on an unparseable reply. Throws VerdictError.
bool ask_verdict(ChatBackend& judge, const PromptSet& prompts, std::vector<ChatMessage> messages,
                 const GenerationParams& params);

std::vector<ChatMessage> answer_judge_messages(const PromptSet& prompts, const QueryRecord& query,
                                               const std::string& answer);

/// Whether the judge accepts trace.final_answer against query.ground_truth.
bool filter_answer(ChatBackend& judge, const PromptSet& prompts, const QueryRecord& query,
                   const ReasoningTrace& trace, const GenerationParams& params = default_judge_params());

/// Numbered rendering of all paths, as placed in the scoring prompt.
std::string render_paths(std::span<const ReasoningTrace> traces);

std::vector<ChatMessage> score_messages(const PromptSet& prompts, const QueryRecord& query,
                                        std::span<const ReasoningTrace> traces);

/// One judge call over all paths; retried once on a ScoreError, which is rethrown on the second failure.
std::vector<int> score_paths(ChatBackend& judge, const PromptSet& prompts, const QueryRecord& query,
                             std::span<const ReasoningTrace> traces,
                             const GenerationParams& params = default_judge_params());

struct AssessResult {
    std::vector<ScoredRecord> records;
    std::vector<std::string> log;
};

/// Drops incomplete traces, filters answers, then scores survivors question by question.
AssessResult assess_all(ChatBackend& answer_judge, ChatBackend& score_judge, const PromptSet& prompts,
                        std::span<const QueryRecord> queries, std::span<const TraceRecord> traces,
                        const GenerationParams& params = default_judge_params());

}  // namespace chainsmith::assessor
