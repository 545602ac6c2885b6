#include <chainsmith/assessor.hpp>
#include <chainsmith/duo.hpp>
#include <chainsmith/generator.hpp>
#include <chainsmith/parallel.hpp>

#include <map>
#include <sstream>

namespace chainsmith::duo {

using backend::ContentPart;
using backend::Role;
using nlohmann::json;

Duo::Duo(std::shared_ptr<ChatBackend> reasoning, std::shared_ptr<ChatBackend> summary, PromptSet prompts,
         GenerationParams reasoning_params, GenerationParams summary_params, int max_steps)
    : reasoning_(std::move(reasoning)),
      summary_(std::move(summary)),
      prompts_(std::move(prompts)),
      reasoning_params_(reasoning_params),
      summary_params_(summary_params),
      max_steps_(max_steps) {
    if (!reasoning_ || !summary_) throw Error("duo: both backends are required");
    reasoning_params_.validate();
    summary_params_.validate();
    if (max_steps_ < 1) throw ConfigError("inference.max_steps", "must be positive");
}

Duo Duo::from_config(const DuoConfig& cfg, PromptSet prompts) {
    return Duo(backend::make_backend(cfg.reasoning_backend), backend::make_backend(cfg.summary_backend),
               std::move(prompts), cfg.reasoning_params, cfg.summary_params, cfg.max_steps);
}

ReasoningTrace Duo::reason(const QueryRecord& query) const {
    return generator::generate_trace(*reasoning_, prompts_, query, reasoning_params_, max_steps_);
}

std::vector<ChatMessage> Duo::summary_messages(const QueryRecord& query, const ReasoningTrace& trace) const {
    ChatMessage m{Role::User, {}};
    if (!query.image_ref.empty()) m.parts.push_back(ContentPart::image(query.image_ref));
    m.parts.push_back(ContentPart::text(render_template(
        prompts_.summary_agent, {{"question", query.question}, {"trace", schema::render_supplement(trace)}})));
    return {std::move(m)};
}

std::string Duo::summarize(const QueryRecord& query, const ReasoningTrace& trace) const {
    return summary_->complete(summary_messages(query, trace), summary_params_);
}

std::pair<ReasoningTrace, std::string> Duo::answer(const QueryRecord& query) const {
    ReasoningTrace trace;
    try {
        trace = reason(query);
    } catch (const backend::BackendError& e) {
        trace = {};
        trace.diagnostics.push_back(std::string("reasoning backend error: ") + e.what());
    }
    auto predicted = summarize(query, trace);
    return {std::move(trace), std::move(predicted)};
}

std::vector<AnswerRecord> Duo::answer_all(std::span<const QueryRecord> queries) const {
    std::vector<AnswerRecord> out(queries.size());
    const auto width = static_cast<std::size_t>(std::min(reasoning_->max_in_flight(), summary_->max_in_flight()));
    parallel_for(queries.size(), width, [&](std::size_t i) {
        auto [trace, predicted] = answer(queries[i]);
        out[i] = {queries[i].id, std::move(trace), std::move(predicted)};
    });
    return out;
}

std::vector<ChatMessage> trace_judge_messages(const PromptSet& prompts, const QueryRecord& query,
                                              const ReasoningTrace& trace) {
    return {ChatMessage::text(Role::User, render_template(prompts.trace_judge, {{"question", query.question},
                                                                                 {"ground_truth", query.ground_truth},
                                                                                 {"trace", schema::render_steps(trace)}}))};
}

bool judge_trace(ChatBackend& judge, const PromptSet& prompts, const QueryRecord& query, const ReasoningTrace& trace,
                 const GenerationParams& params) {
    if (trace.steps.empty()) throw Error("judge_trace: trace has no steps");
    return assessor::ask_verdict(judge, prompts, trace_judge_messages(prompts, query, trace), params);
}

ConfusionMatrix confusion_matrix(std::span<const EvalOutcome> outcomes) {
    ConfusionMatrix m;
    for (const auto& o : outcomes) {
        if (o.trace_correct && o.answer_correct)
            ++m.both_correct;
        else if (o.trace_correct)
            ++m.trace_only;
        else if (o.answer_correct)
            ++m.answer_only;
        else
            ++m.neither;
    }
    return m;
}

namespace {

struct Cell {
    const char* name;
    const char* label;  // naming convention of the original analysis
    bool trace_correct;
    bool answer_correct;
    std::size_t ConfusionMatrix::*count;
};

constexpr Cell kCells[] = {
    {"both_correct", "True Positive", true, true, &ConfusionMatrix::both_correct},
    {"trace_only", "False Positive", true, false, &ConfusionMatrix::trace_only},
    {"answer_only", "False Negative", false, true, &ConfusionMatrix::answer_only},
    {"neither", "True Negative", false, false, &ConfusionMatrix::neither},
};

}  // namespace

json ConfusionMatrix::to_json() const {
    json cells = json::object();
    for (const auto& c : kCells)
        cells[c.name] = {{"label", c.label},
                         {"trace_correct", c.trace_correct},
                         {"answer_correct", c.answer_correct},
                         {"count", this->*c.count}};
    return {{"cells", std::move(cells)},
            {"total", total()},
            {"legend",
             "True Positive: both the reasoning path and the final answer are correct. "
             "False Negative: the reasoning path is incorrect but the final answer is correct. "
             "False Positive and True Negative follow the same convention (reasoning path as the prediction, "
             "final answer as the reference)."}};
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream os;
    os << "cell,label,trace_correct,answer_correct,count\n";
    for (const auto& c : kCells)
        os << c.name << ',' << c.label << ',' << (c.trace_correct ? "true" : "false") << ','
           << (c.answer_correct ? "true" : "false") << ',' << this->*c.count << '\n';
    return os.str();
}

json EvalReport::to_json() const {
    json per_query = json::array();
    for (const auto& o : outcomes)
        per_query.push_back({{"query_id", o.query_id},
                             {"trace_correct", o.trace_correct},
                             {"answer_correct", o.answer_correct},
                             {"predicted_answer", o.predicted_answer},
                             {"trace", o.trace}});
    return {{"outcomes", std::move(per_query)},
            {"count", outcomes.size()},
            {"accuracy", accuracy},
            {"confusion_matrix", matrix.to_json()},
            {"log", log}};
}

EvalReport evaluate(ChatBackend& answer_judge, ChatBackend& trace_judge, const PromptSet& prompts,
                    std::span<const QueryRecord> queries, std::span<const AnswerRecord> answers,
                    const GenerationParams& judge_params) {
    std::map<std::string, const QueryRecord*> by_id;
    for (const auto& q : queries) by_id[q.id] = &q;

    EvalReport rep;
    rep.outcomes.resize(answers.size());
    std::vector<std::vector<std::string>> logs(answers.size());
    std::vector<bool> known(answers.size(), false);
    const auto width = static_cast<std::size_t>(std::max(answer_judge.max_in_flight(), trace_judge.max_in_flight()));
    parallel_for(answers.size(), width, [&](std::size_t i) {
        const auto& a = answers[i];
        const auto it = by_id.find(a.query_id);
        if (it == by_id.end()) {
            logs[i].push_back(a.query_id + ": no query record; skipped");
            return;
        }
        known[i] = true;
        auto& o = rep.outcomes[i];
        o.query_id = a.query_id;
        o.predicted_answer = a.predicted_answer;
        o.trace = a.trace;
        try {
            o.answer_correct = assessor::ask_verdict(
                answer_judge, prompts, assessor::answer_judge_messages(prompts, *it->second, a.predicted_answer),
                judge_params);
        } catch (const std::exception& e) {
            logs[i].push_back(a.query_id + ": answer verdict failed: " + e.what() + "; counted incorrect");
        }
        if (a.trace.steps.empty()) {
            logs[i].push_back(a.query_id + ": empty trace; counted incorrect");
            return;
        }
        try {
            o.trace_correct = judge_trace(trace_judge, prompts, *it->second, a.trace, judge_params);
        } catch (const std::exception& e) {
            logs[i].push_back(a.query_id + ": trace verdict failed: " + e.what() + "; counted incorrect");
        }
    });
    std::vector<EvalOutcome> kept;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (known[i]) kept.push_back(std::move(rep.outcomes[i]));
        for (auto& l : logs[i]) rep.log.push_back(std::move(l));
    }
    rep.outcomes = std::move(kept);
    rep.matrix = confusion_matrix(rep.outcomes);
    std::size_t correct = 0;
    for (const auto& o : rep.outcomes) correct += o.answer_correct;
    rep.accuracy = rep.outcomes.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(rep.outcomes.size());
    return rep;
}

}  // namespace chainsmith::duo
