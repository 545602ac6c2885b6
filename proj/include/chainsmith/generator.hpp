#pragma once

#include <chainsmith/backend.hpp>
#include <chainsmith/prompts.hpp>
#include <chainsmith/records.hpp>
#include <chainsmith/schema.hpp>

#include <span>
#include <vector>

namespace chainsmith::generator {

using backend::ChatBackend;
using backend::ChatMessage;
using backend::GenerationParams;
using records::TraceRecord;
using schema::QueryRecord;
using schema::ReasoningTrace;

struct GenConfig {
    int samples_per_query = 16;
    int max_steps = 12;
    std::vector<GenerationParams> param_schedule;

    void validate() const;

    /// Temperatures linearly spaced over [0.2, 1.2], seeds base_seed + i.
    static std::vector<GenerationParams> default_schedule(int samples, std::int64_t base_seed,
                                                          const GenerationParams& base = {});
    static GenConfig with_default_schedule(int samples, int max_steps, std::int64_t base_seed);
};

inline constexpr double kScheduleMinTemperature = 0.2;
inline constexpr double kScheduleMaxTemperature = 1.2;

/// Rendered task text (question + instruction); the user turn of reasoning SFT records.
std::string render_task(const PromptSet& prompts, const QueryRecord& query);

/// Request for the next step given the steps so far. `at_cap` adds the forced-summary instruction.
std::vector<ChatMessage> step_messages(const PromptSet& prompts, const QueryRecord& query,
                                       const ReasoningTrace& so_far, bool at_cap);

/// Fresh-turn request for the final summary and answer over the full trace.
std::vector<ChatMessage> final_messages(const PromptSet& prompts, const QueryRecord& query,
                                        const ReasoningTrace& trace);

/// Runs the step recurrence until a Summary action (or the cap), then asks for the final answer.
/// Parse failures return an incomplete trace with diagnostics; backend errors propagate.
ReasoningTrace generate_trace(ChatBackend& backend, const PromptSet& prompts, const QueryRecord& query,
                              const GenerationParams& params, int max_steps);

/// Exactly cfg.samples_per_query traces, tagged with sample index and params. Never throws
/// for per-sample failures; those become incomplete traces.
std::vector<TraceRecord> sample_traces(ChatBackend& backend, const PromptSet& prompts, const QueryRecord& query,
                                       const GenConfig& cfg);

/// sample_traces over every query, in query order then sample order.
std::vector<TraceRecord> generate_all(ChatBackend& backend, const PromptSet& prompts,
                                      std::span<const QueryRecord> queries, const GenConfig& cfg);

}  // namespace chainsmith::generator
