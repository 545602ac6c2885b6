#include <chainsmith/assessor.hpp>
#include <chainsmith/parallel.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <regex>
#include <sstream>

namespace chainsmith::assessor {

using backend::Role;

GenerationParams default_judge_params() {
    GenerationParams p;
    p.temperature = 0.0;
    p.top_p = 1.0;
    p.max_tokens = 512;
    p.seed = 0;
    return p;
}

std::optional<bool> parse_verdict(std::string_view reply) {
    std::size_t i = 0;
    while (i < reply.size() && std::isspace(static_cast<unsigned char>(reply[i]))) ++i;
    std::string word;
    while (i < reply.size() && std::isalpha(static_cast<unsigned char>(reply[i])))
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(reply[i++]))));
    if (word == "yes") return true;
    if (word == "no") return false;
    return std::nullopt;
}

std::vector<int> parse_scores(std::string_view reply, std::size_t expected) {
    static const std::regex line_re(R"(^\s*(\d+)\s*:\s*([+-]?\d+)\s*$)");
    std::vector<std::pair<long long, std::string>> entries;
    std::istringstream in{std::string(reply)};
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, line_re)) continue;
        long long index = 0;
        const auto idx = m[1].str();
        if (std::from_chars(idx.data(), idx.data() + idx.size(), index).ec != std::errc{}) index = -1;
        entries.emplace_back(index, m[2].str());
    }
    if (entries.size() != expected)
        throw ScoreError(ScoreError::Kind::CountMismatch, "expected " + std::to_string(expected) + " scores, got " +
                                                              std::to_string(entries.size()));
    std::vector<std::optional<std::string>> by_index(expected);
    for (const auto& [index, text] : entries) {
        if (index < 1 || index > static_cast<long long>(expected) || by_index[index - 1])
            throw ScoreError(ScoreError::Kind::CountMismatch,
                             "score indices must be exactly 1.." + std::to_string(expected));
        by_index[index - 1] = text;
    }
    std::vector<int> scores;
    scores.reserve(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        auto text = *by_index[i];
        if (!text.empty() && text.front() == '+') text.erase(0, 1);
        long long value = 0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
        if (res.ec != std::errc{} || value < kMinScore || value > kMaxScore)
            throw ScoreError(ScoreError::Kind::OutOfRange,
                             "score " + *by_index[i] + " for path " + std::to_string(i + 1) + " outside [1, 100]");
        scores.push_back(static_cast<int>(value));
    }
    return scores;
}

bool ask_verdict(ChatBackend& judge, const PromptSet& prompts, std::vector<ChatMessage> messages,
                 const GenerationParams& params) {
    auto reply = judge.complete(messages, params);
    if (auto v = parse_verdict(reply)) return *v;
    messages.push_back(ChatMessage::text(Role::Assistant, reply));
    messages.push_back(ChatMessage::text(Role::User, prompts.verdict_reask));
    const auto second = judge.complete(messages, params);
    if (auto v = parse_verdict(second)) return *v;
    throw VerdictError("unparseable verdict after re-ask: '" + second.substr(0, 80) + "'");
}

std::vector<ChatMessage> answer_judge_messages(const PromptSet& prompts, const QueryRecord& query,
                                               const std::string& answer) {
    return {ChatMessage::text(Role::User, render_template(prompts.answer_judge, {{"question", query.question},
                                                                                  {"ground_truth", query.ground_truth},
                                                                                  {"answer", answer}}))};
}

bool filter_answer(ChatBackend& judge, const PromptSet& prompts, const QueryRecord& query,
                   const ReasoningTrace& trace, const GenerationParams& params) {
    if (!trace.complete || !trace.final_answer) throw Error("filter_answer: trace must be complete");
    return ask_verdict(judge, prompts, answer_judge_messages(prompts, query, *trace.final_answer), params);
}

std::string render_paths(std::span<const ReasoningTrace> traces) {
    std::ostringstream os;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (i) os << "\n\n";
        os << "=== Path " << (i + 1) << " ===\n" << schema::render_steps(traces[i]);
        if (traces[i].final_summary) os << "\nFinal summary: " << *traces[i].final_summary;
        if (traces[i].final_answer) os << "\nFinal answer: " << *traces[i].final_answer;
    }
    return os.str();
}

std::vector<ChatMessage> score_messages(const PromptSet& prompts, const QueryRecord& query,
                                        std::span<const ReasoningTrace> traces) {
    ChatMessage m{Role::User, {}};
    if (!query.image_ref.empty()) m.parts.push_back(backend::ContentPart::image(query.image_ref));
    m.parts.push_back(backend::ContentPart::text(render_template(prompts.score_judge,
                                                                 {{"image_ref", query.image_ref},
                                                                  {"question", query.question},
                                                                  {"ground_truth", query.ground_truth},
                                                                  {"paths", render_paths(traces)},
                                                                  {"count", std::to_string(traces.size())}})));
    return {std::move(m)};
}

std::vector<int> score_paths(ChatBackend& judge, const PromptSet& prompts, const QueryRecord& query,
                             std::span<const ReasoningTrace> traces, const GenerationParams& params) {
    if (traces.empty()) throw Error("score_paths: no traces to score");
    for (const auto& t : traces)
        if (!t.complete) throw Error("score_paths: every trace must be complete");
    auto messages = score_messages(prompts, query, traces);
    const auto reply = judge.complete(messages, params);
    try {
        return parse_scores(reply, traces.size());
    } catch (const ScoreError& e) {
        messages.push_back(ChatMessage::text(Role::Assistant, reply));
        messages.push_back(ChatMessage::text(
            Role::User, render_template(prompts.score_reask,
                                        {{"error", e.what()}, {"count", std::to_string(traces.size())}})));
    }
    return parse_scores(judge.complete(messages, params), traces.size());
}

AssessResult assess_all(ChatBackend& answer_judge, ChatBackend& score_judge, const PromptSet& prompts,
                        std::span<const QueryRecord> queries, std::span<const TraceRecord> traces,
                        const GenerationParams& params) {
    std::map<std::string, const QueryRecord*> by_id;
    for (const auto& q : queries) by_id[q.id] = &q;

    std::vector<std::string> order;
    std::map<std::string, std::vector<const TraceRecord*>> groups;
    for (const auto& t : traces) {
        auto& g = groups[t.query_id];
        if (g.empty()) order.push_back(t.query_id);
        g.push_back(&t);
    }

    struct QuestionResult {
        std::vector<ScoredRecord> records;
        std::vector<std::string> log;
    };
    std::vector<QuestionResult> results(order.size());
    const auto width = static_cast<std::size_t>(std::max(answer_judge.max_in_flight(), score_judge.max_in_flight()));
    parallel_for(order.size(), width, [&](std::size_t qi) {
        const auto& id = order[qi];
        auto& out = results[qi];
        const auto qit = by_id.find(id);
        if (qit == by_id.end()) {
            out.log.push_back(id + ": no query record; skipped");
            return;
        }
        const auto& query = *qit->second;
        auto group = groups.at(id);
        std::stable_sort(group.begin(), group.end(),
                         [](const auto* a, const auto* b) { return a->sample_index < b->sample_index; });

        std::vector<const TraceRecord*> survivors;
        std::size_t incomplete = 0;
        for (const auto* rec : group) {
            if (!rec->trace.complete) {
                ++incomplete;
                continue;
            }
            try {
                if (filter_answer(answer_judge, prompts, query, rec->trace, params)) survivors.push_back(rec);
            } catch (const std::exception& e) {
                out.log.push_back(id + "#" + std::to_string(rec->sample_index) + ": answer filter failed: " +
                                  e.what() + "; treated as filtered out");
            }
        }
        if (incomplete) out.log.push_back(id + ": dropped " + std::to_string(incomplete) + " incomplete traces");
        if (survivors.empty()) {
            out.log.push_back(id + ": no trace passed the answer filter");
            return;
        }
        std::vector<ReasoningTrace> paths;
        for (const auto* rec : survivors) paths.push_back(rec->trace);
        std::vector<int> scores;
        try {
            scores = score_paths(score_judge, prompts, query, paths, params);
        } catch (const std::exception& e) {
            out.log.push_back(id + ": scoring failed: " + e.what());
            return;
        }
        for (std::size_t i = 0; i < survivors.size(); ++i)
            out.records.push_back({id, survivors[i]->sample_index, survivors[i]->trace, true, scores[i]});
    });

    AssessResult all;
    for (auto& r : results) {
        std::move(r.records.begin(), r.records.end(), std::back_inserter(all.records));
        std::move(r.log.begin(), r.log.end(), std::back_inserter(all.log));
    }
    return all;
}

}  // namespace chainsmith::assessor
