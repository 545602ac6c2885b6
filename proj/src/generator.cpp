#include <chainsmith/generator.hpp>
#include <chainsmith/parallel.hpp>

namespace chainsmith::generator {

using backend::ContentPart;
using backend::Role;

void GenConfig::validate() const {
    if (samples_per_query < 1) throw ConfigError("generation.samples_per_query", "must be positive");
    if (max_steps < 1) throw ConfigError("generation.max_steps", "must be positive");
    if (static_cast<int>(param_schedule.size()) != samples_per_query)
        throw ConfigError("generation.param_schedule", "length must equal samples_per_query");
    for (const auto& p : param_schedule) p.validate();
}

std::vector<GenerationParams> GenConfig::default_schedule(int samples, std::int64_t base_seed,
                                                          const GenerationParams& base) {
    std::vector<GenerationParams> out;
    out.reserve(samples);
    for (int i = 0; i < samples; ++i) {
        auto p = base;
        const double frac = samples > 1 ? static_cast<double>(i) / (samples - 1) : 0.0;
        p.temperature = kScheduleMinTemperature + frac * (kScheduleMaxTemperature - kScheduleMinTemperature);
        p.seed = base_seed + i;
        out.push_back(p);
    }
    return out;
}

GenConfig GenConfig::with_default_schedule(int samples, int max_steps, std::int64_t base_seed) {
    return {samples, max_steps, default_schedule(samples, base_seed)};
}

std::string render_task(const PromptSet& prompts, const QueryRecord& query) {
    return render_template(prompts.reasoning_task, {{"question", query.question}});
}

namespace {

ChatMessage user_turn(const QueryRecord& query, std::string text) {
    ChatMessage m{Role::User, {}};
    if (!query.image_ref.empty()) m.parts.push_back(ContentPart::image(query.image_ref));
    m.parts.push_back(ContentPart::text(std::move(text)));
    return m;
}

void generate_into(ReasoningTrace& trace, ChatBackend& backend, const PromptSet& prompts, const QueryRecord& query,
                   const GenerationParams& params, int max_steps) {
    if (max_steps < 1) throw Error("generate_trace: max_steps must be at least 1");
    for (int t = 1; t <= max_steps; ++t) {
        const bool at_cap = t == max_steps;
        const auto reply = backend.complete(step_messages(prompts, query, trace, at_cap), params);
        schema::ReasoningStep step;
        try {
            step = schema::parse_step_lenient(reply);
        } catch (const schema::ParseError& e) {
            trace.diagnostics.push_back("step " + std::to_string(t) + ": unparseable reply: " + e.what());
            return;
        }
        step.index = t;
        if (at_cap && step.action == schema::StepAction::Continue) {
            step.action = schema::StepAction::Summary;
            trace.forced_summary = true;
            trace.diagnostics.push_back("step " + std::to_string(t) + ": summary forced at step cap");
        }
        trace.steps.push_back(std::move(step));
        if (trace.steps.back().action == schema::StepAction::Summary) break;
    }
    const auto reply = backend.complete(final_messages(prompts, query, trace), params);
    try {
        auto final = schema::parse_final(reply);
        trace.final_summary = std::move(final.summary);
        trace.final_answer = std::move(final.answer);
        trace.complete = true;
        if (final.repaired) trace.diagnostics.push_back("final: lenient repair applied");
    } catch (const schema::ParseError& e) {
        trace.diagnostics.push_back(std::string("final: unparseable reply: ") + e.what());
    }
}

}  // namespace

std::vector<ChatMessage> step_messages(const PromptSet& prompts, const QueryRecord& query,
                                       const ReasoningTrace& so_far, bool at_cap) {
    const auto next = so_far.steps.size() + 1;
    const std::string pending = so_far.steps.empty() ? "start" : schema::to_string(so_far.steps.back().action);
    auto text = render_template(prompts.reasoning_step,
                                {{"task", render_task(prompts, query)},
                                 {"steps", so_far.steps.empty() ? "(no steps yet)" : schema::render_steps(so_far)},
                                 {"pending_action", pending},
                                 {"step_number", std::to_string(next)},
                                 {"cap_instruction", at_cap ? prompts.reasoning_cap : ""}});
    return {ChatMessage::text(Role::System, prompts.reasoning_system), user_turn(query, std::move(text))};
}

std::vector<ChatMessage> final_messages(const PromptSet& prompts, const QueryRecord& query,
                                        const ReasoningTrace& trace) {
    auto text = render_template(prompts.reasoning_final,
                                {{"task", render_task(prompts, query)}, {"steps", schema::render_steps(trace)}});
    return {ChatMessage::text(Role::System, prompts.reasoning_system), user_turn(query, std::move(text))};
}

ReasoningTrace generate_trace(ChatBackend& backend, const PromptSet& prompts, const QueryRecord& query,
                              const GenerationParams& params, int max_steps) {
    ReasoningTrace trace;
    generate_into(trace, backend, prompts, query, params, max_steps);
    return trace;
}

namespace {

TraceRecord run_sample(ChatBackend& backend, const PromptSet& prompts, const QueryRecord& query,
                       const GenConfig& cfg, int index) {
    TraceRecord rec{query.id, index, {}, cfg.param_schedule[index]};
    try {
        generate_into(rec.trace, backend, prompts, query, rec.params, cfg.max_steps);
    } catch (const std::exception& e) {
        rec.trace.complete = false;
        rec.trace.final_summary.reset();
        rec.trace.final_answer.reset();
        rec.trace.diagnostics.push_back(std::string("backend error: ") + e.what());
    }
    return rec;
}

}  // namespace

std::vector<TraceRecord> sample_traces(ChatBackend& backend, const PromptSet& prompts, const QueryRecord& query,
                                       const GenConfig& cfg) {
    cfg.validate();
    std::vector<TraceRecord> out(cfg.samples_per_query);
    parallel_for(out.size(), static_cast<std::size_t>(backend.max_in_flight()),
                 [&](std::size_t i) { out[i] = run_sample(backend, prompts, query, cfg, static_cast<int>(i)); });
    return out;
}

std::vector<TraceRecord> generate_all(ChatBackend& backend, const PromptSet& prompts,
                                      std::span<const QueryRecord> queries, const GenConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.samples_per_query;
    std::vector<TraceRecord> out(queries.size() * n);
    parallel_for(out.size(), static_cast<std::size_t>(backend.max_in_flight()), [&](std::size_t job) {
        out[job] = run_sample(backend, prompts, queries[job / n], cfg, static_cast<int>(job % n));
    });
    return out;
}

}  // namespace chainsmith::generator
