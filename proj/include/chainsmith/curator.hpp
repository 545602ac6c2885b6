#pragma once

#include <chainsmith/prompts.hpp>
#include <chainsmith/records.hpp>

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace chainsmith::curator {

using records::GeneralQaRecord;
using records::PairRecord;
using records::ScoredRecord;
using records::SftRecord;
using records::TraceRecord;
using schema::QueryRecord;
using schema::ReasoningTrace;

/// Closed score interval [lo, hi] with a sampling weight.
struct ScoreBand {
    int lo = 1;
    int hi = 100;
    double weight = 1.0;

    bool contains(int score) const noexcept { return score >= lo && score <= hi; }
    std::string tag() const { return "band:" + std::to_string(lo) + "-" + std::to_string(hi); }
};

std::vector<ScoreBand> default_flawed_bands();

struct CurationConfig {
    int positive_threshold = 85;
    int rejected_target = 25;
    std::vector<ScoreBand> flawed_bands = default_flawed_bands();
    double general_qa_ratio = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

template <typename T>
struct Curated {
    std::vector<T> records;
    std::vector<std::string> log;
};

/// Highest score; ties go to fewer steps, then lower sample_index.
const ScoredRecord& select_best_path(std::span<const ScoredRecord> scored);

/// Nearest to cfg.rejected_target among traces scoring at most positive_threshold
/// (ties: lower score, fewer steps, lower sample_index). nullptr when none qualifies.
const ScoredRecord* select_rejected(std::span<const ScoredRecord> scored, const CurationConfig& cfg);

/// Only scored records (score present) take part in curation.
std::vector<std::vector<ScoredRecord>> group_scored(std::span<const QueryRecord> queries,
                                                    std::span<const ScoredRecord> scored);

SftRecord reasoning_sft_record(const PromptSet& prompts, const QueryRecord& query, const ScoredRecord& best);
/// Inverse of reasoning_sft_record's assistant turns.
ReasoningTrace trace_from_reasoning_sft(const SftRecord& record);

Curated<SftRecord> build_reasoning_sft(const PromptSet& prompts, std::span<const QueryRecord> queries,
                                       std::span<const ScoredRecord> scored);

/// Summary-agent records: optimal and band-sampled flawed paths per question, optional
/// agent-generated traces, then general QA at general_qa_ratio of the whole set (floor).
Curated<SftRecord> build_summary_sft(const PromptSet& prompts, std::span<const QueryRecord> queries,
                                     std::span<const ScoredRecord> scored,
                                     std::span<const GeneralQaRecord> general_qa, const CurationConfig& cfg,
                                     std::span<const TraceRecord> agent_traces = {});

/// Number of general QA records mixed into a summary set with `derived` reasoning-based records.
std::size_t general_qa_count(std::size_t derived, double ratio);

Curated<PairRecord> build_preference_pairs(const PromptSet& prompts, std::span<const QueryRecord> queries,
                                           std::span<const ScoredRecord> scored, const CurationConfig& cfg);

/// chosen/rejected conversation layout consumed by common preference trainers.
nlohmann::json chat_pair_layout(const PairRecord& pair);

}  // namespace chainsmith::curator
