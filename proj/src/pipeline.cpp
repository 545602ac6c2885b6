#include <chainsmith/assessor.hpp>
#include <chainsmith/duo.hpp>
#include <chainsmith/pipeline.hpp>
#include <chainsmith/records.hpp>

#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace chainsmith::pipeline {

using nlohmann::json;

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
    const auto key = assignment.substr(0, eq);
    const auto raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError(key, "empty path component");
        if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
    *node = std::move(value);
}

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) throw ConfigError(path, "missing field");
    return obj.at(key);
}

template <typename T>
T get_or(const json& obj, const std::string& key, const T& fallback, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path, "wrong type");
    }
}

backend::GenerationParams params_or(const json& doc, const std::string& key, backend::GenerationParams fallback,
                                    const std::string& parent = "") {
    if (!doc.contains(key)) return fallback;
    const auto& j = doc.at(key);
    const auto path = parent.empty() ? key : parent + "." + key;
    fallback.temperature = get_or(j, "temperature", fallback.temperature, path + ".temperature");
    fallback.top_p = get_or(j, "top_p", fallback.top_p, path + ".top_p");
    fallback.max_tokens = get_or(j, "max_tokens", fallback.max_tokens, path + ".max_tokens");
    if (j.contains("seed")) fallback.seed = get_or<std::int64_t>(j, "seed", 0, path + ".seed");
    try {
        fallback.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(path + "." + e.field(), e.reason());
    }
    return fallback;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    PipelineConfig c;
    try {
        c.seed = require(doc, "seed", "seed").get<std::int64_t>();
    } catch (const json::exception&) {
        throw ConfigError("seed", "must be an integer");
    }
    c.prompt_dir = resolve(base_dir, get_or<std::string>(doc, "prompt_dir", "assets/prompts", "prompt_dir"));
    c.prompt_names = get_or(doc, "prompts", std::map<std::string, std::string>{}, "prompts");

    const auto& backends = require(doc, "backends", "backends");
    for (const auto& role : backend_roles()) {
        if (role == "trace_judge" && !backends.contains(role)) continue;
        auto bc = backend::backend_config_from_json(require(backends, role, "backends." + role), "backends." + role);
        if (bc.kind == backend::BackendKind::Scripted) bc.script_path = resolve(base_dir, bc.script_path).string();
        c.backends[role] = bc;
    }
    if (!c.backends.count("trace_judge")) c.backends["trace_judge"] = c.backends.at("score_judge");

    const json gen = doc.value("generation", json::object());
    const int samples = get_or(gen, "samples_per_query", 16, "generation.samples_per_query");
    const int max_steps = get_or(gen, "max_steps", 12, "generation.max_steps");
    if (samples < 1) throw ConfigError("generation.samples_per_query", "must be positive");
    const auto base = params_or(gen, "params", {}, "generation");
    c.generation = {samples, max_steps, generator::GenConfig::default_schedule(samples, c.seed, base)};
    c.generation.validate();

    const json cur = doc.value("curation", json::object());
    c.curation.positive_threshold = get_or(cur, "positive_threshold", 85, "curation.positive_threshold");
    c.curation.rejected_target = get_or(cur, "rejected_target", 25, "curation.rejected_target");
    c.curation.general_qa_ratio = get_or(cur, "general_qa_ratio", 0.0, "curation.general_qa_ratio");
    c.curation.seed = static_cast<std::uint64_t>(c.seed);
    if (cur.contains("flawed_bands")) {
        c.curation.flawed_bands.clear();
        for (const auto& b : cur["flawed_bands"])
            c.curation.flawed_bands.push_back({get_or(b, "lo", 1, "curation.flawed_bands.lo"),
                                               get_or(b, "hi", 100, "curation.flawed_bands.hi"),
                                               get_or(b, "weight", 0.0, "curation.flawed_bands.weight")});
    }
    c.curation.validate();

    const json d = doc.value("dpo", json::object());
    c.dpo.beta = get_or(d, "beta", c.dpo.beta, "dpo.beta");
    c.dpo.sft_weight = get_or(d, "sft_weight", c.dpo.sft_weight, "dpo.sft_weight");
    c.dpo.learning_rate = get_or(d, "learning_rate", c.dpo.learning_rate, "dpo.learning_rate");
    c.dpo.epochs = get_or(d, "epochs", c.dpo.epochs, "dpo.epochs");
    c.dpo.rounds = get_or(d, "rounds", c.dpo.rounds, "dpo.rounds");
    c.dpo.validate();
    c.toy_task.prompts = get_or(d, "prompts", c.toy_task.prompts, "dpo.prompts");
    c.toy_task.vocab = get_or(d, "vocab", c.toy_task.vocab, "dpo.vocab");
    c.toy_task.samples_per_prompt = get_or(d, "samples_per_prompt", c.toy_task.samples_per_prompt, "dpo.samples_per_prompt");
    if (c.toy_task.prompts < 1) throw ConfigError("dpo.prompts", "must be positive");
    if (c.toy_task.vocab < 2) throw ConfigError("dpo.vocab", "must be at least 2");
    if (c.toy_task.samples_per_prompt < 2) throw ConfigError("dpo.samples_per_prompt", "must be at least 2");

    const json inf = doc.value("inference", json::object());
    c.inference_max_steps = get_or(inf, "max_steps", c.inference_max_steps, "inference.max_steps");
    if (c.inference_max_steps < 1) throw ConfigError("inference.max_steps", "must be positive");
    backend::GenerationParams reasoning_default;
    reasoning_default.temperature = 0.2;
    reasoning_default.seed = c.seed;
    c.reasoning_params = params_or(inf, "reasoning_params", reasoning_default, "inference");
    backend::GenerationParams summary_default;
    summary_default.temperature = 0.0;
    summary_default.seed = c.seed;
    c.summary_params = params_or(inf, "summary_params", summary_default, "inference");
    c.judge_params = params_or(doc, "judge_params", assessor::default_judge_params());

    const auto& paths = require(doc, "paths", "paths");
    const fs::path out_dir = resolve(base_dir, get_or<std::string>(doc, "output_dir", "out", "output_dir"));
    c.paths.queries = resolve(base_dir, require(paths, "queries", "paths.queries").get<std::string>());
    if (paths.contains("general_qa"))
        c.paths.general_qa = resolve(base_dir, paths.at("general_qa").get<std::string>());
    auto out = [&](const char* key, const char* fallback) {
        return resolve(out_dir, get_or<std::string>(paths, key, fallback, std::string("paths.") + key));
    };
    c.paths.traces = out("traces", "traces.jsonl");
    c.paths.scored = out("scored", "scored.jsonl");
    c.paths.sft_reasoning = out("sft_reasoning", "sft_reasoning.jsonl");
    c.paths.sft_summary = out("sft_summary", "sft_summary.jsonl");
    c.paths.pairs = out("pairs", "pairs.jsonl");
    c.paths.pairs_chat = out("pairs_chat", "pairs_chat.jsonl");
    c.paths.answers = out("answers", "answers.jsonl");
    c.paths.eval_report = out("eval_report", "eval_report.json");
    c.paths.eval_csv = out("eval_csv", "eval_confusion.csv");
    c.paths.dpo_report = out("dpo_report", "dpo_report.json");

    std::set<fs::path> seen;
    for (const auto* p : {&c.paths.queries, &c.paths.general_qa, &c.paths.traces, &c.paths.scored,
                          &c.paths.sft_reasoning, &c.paths.sft_summary, &c.paths.pairs, &c.paths.pairs_chat,
                          &c.paths.answers, &c.paths.eval_report, &c.paths.eval_csv, &c.paths.dpo_report}) {
        if (p->empty()) continue;
        if (!seen.insert(p->lexically_normal()).second)
            throw ConfigError("paths", "artifact path '" + p->string() + "' is used twice");
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot read config '" + path.string() + "'");
    json doc = json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("<file>", "'" + path.string() + "' is not valid JSON");
    for (const auto& o : overrides) apply_override(doc, o);
    return from_json(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

Backends Backends::from_config(const PipelineConfig& cfg, const std::vector<std::string>& roles) {
    Backends b;
    for (const auto& role : roles) b.by_role[role] = backend::make_backend(cfg.backends.at(role));
    return b;
}

backend::ChatBackend& Backends::at(const std::string& role) const { return *shared(role); }

std::shared_ptr<backend::ChatBackend> Backends::shared(const std::string& role) const {
    const auto it = by_role.find(role);
    if (it == by_role.end() || !it->second) throw Error("no backend configured for role '" + role + "'");
    return it->second;
}

namespace {

PromptSet prompts_of(const PipelineConfig& cfg) { return PromptSet::load(cfg.prompt_dir, cfg.prompt_names); }

void emit_log(std::ostream& log, const std::string& stage, const std::vector<std::string>& lines) {
    for (const auto& l : lines) log << "[" << stage << "] " << l << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace

void stage_generate(const PipelineConfig& cfg, const Backends& b, std::ostream& log) {
    const auto queries = records::read_queries(cfg.paths.queries);
    const auto traces = generator::generate_all(b.at("generator"), prompts_of(cfg), queries, cfg.generation);
    std::size_t complete = 0;
    for (const auto& t : traces) {
        complete += t.trace.complete;
        for (const auto& d : t.trace.diagnostics)
            log << "[generate] " << t.query_id << "#" << t.sample_index << ": " << d << '\n';
    }
    records::write_records(cfg.paths.traces, traces);
    log << "[generate] " << traces.size() << " traces (" << complete << " complete) -> " << cfg.paths.traces.string()
        << '\n';
}

void stage_assess(const PipelineConfig& cfg, const Backends& b, std::ostream& log) {
    const auto queries = records::read_queries(cfg.paths.queries);
    const auto traces = records::read_records<records::TraceRecord>(cfg.paths.traces);
    const auto result = assessor::assess_all(b.at("answer_judge"), b.at("score_judge"), prompts_of(cfg), queries,
                                             traces, cfg.judge_params);
    emit_log(log, "assess", result.log);
    records::write_records(cfg.paths.scored, result.records);
    log << "[assess] " << result.records.size() << " scored of " << traces.size() << " -> "
        << cfg.paths.scored.string() << '\n';
}

void stage_curate(const PipelineConfig& cfg, std::ostream& log) {
    const auto prompts = prompts_of(cfg);
    const auto queries = records::read_queries(cfg.paths.queries);
    const auto scored = records::read_records<records::ScoredRecord>(cfg.paths.scored);
    std::vector<records::GeneralQaRecord> general;
    if (!cfg.paths.general_qa.empty()) general = records::read_records<records::GeneralQaRecord>(cfg.paths.general_qa);

    const auto reasoning = curator::build_reasoning_sft(prompts, queries, scored);
    emit_log(log, "curate", reasoning.log);
    records::write_records(cfg.paths.sft_reasoning, reasoning.records);

    const auto summary = curator::build_summary_sft(prompts, queries, scored, general, cfg.curation);
    emit_log(log, "curate", summary.log);
    records::write_records(cfg.paths.sft_summary, summary.records);

    const auto pairs = curator::build_preference_pairs(prompts, queries, scored, cfg.curation);
    emit_log(log, "curate", pairs.log);
    records::write_records(cfg.paths.pairs, pairs.records);
    std::string chat;
    for (const auto& p : pairs.records) chat += curator::chat_pair_layout(p).dump() + '\n';
    write_text(cfg.paths.pairs_chat, chat);

    log << "[curate] " << reasoning.records.size() << " reasoning SFT, " << summary.records.size()
        << " summary SFT, " << pairs.records.size() << " preference pairs\n";
}

void stage_dpo_iterate(const PipelineConfig& cfg, std::ostream& log) {
    const auto task = dpo::SyntheticTask::make(cfg.toy_task.prompts, cfg.toy_task.vocab,
                                               cfg.toy_task.samples_per_prompt, static_cast<std::uint64_t>(cfg.seed));
    const auto rounds = dpo::iterative_dpo(task.initial_policy(), task.sampler(), task.judge(), cfg.dpo, task.heldout);
    for (const auto& r : rounds)
        log << "[dpo-iterate] round " << r.round << ": " << r.pairs.size() << " pairs, loss " << r.loss_curve.front()
            << " -> " << r.loss_curve.back() << ", held-out margin " << r.heldout_margin << ", accuracy "
            << r.heldout_accuracy << '\n';
    write_text(cfg.paths.dpo_report, dpo::round_report(rounds, cfg.dpo).dump(2) + '\n');
}

void stage_infer(const PipelineConfig& cfg, const Backends& b, std::ostream& log) {
    const auto queries = records::read_queries(cfg.paths.queries);
    const duo::Duo agents(b.shared("reasoning_agent"), b.shared("summary_agent"), prompts_of(cfg),
                          cfg.reasoning_params, cfg.summary_params, cfg.inference_max_steps);
    const auto answers = agents.answer_all(queries);
    for (const auto& a : answers)
        for (const auto& d : a.trace.diagnostics) log << "[infer] " << a.query_id << ": " << d << '\n';
    records::write_records(cfg.paths.answers, answers);
    log << "[infer] " << answers.size() << " answers -> " << cfg.paths.answers.string() << '\n';
}

void stage_eval(const PipelineConfig& cfg, const Backends& b, std::ostream& log) {
    const auto queries = records::read_queries(cfg.paths.queries);
    const auto answers = records::read_records<records::AnswerRecord>(cfg.paths.answers);
    const auto report =
        duo::evaluate(b.at("answer_judge"), b.at("trace_judge"), prompts_of(cfg), queries, answers, cfg.judge_params);
    emit_log(log, "eval", report.log);
    write_text(cfg.paths.eval_report, report.to_json().dump(2) + '\n');
    write_text(cfg.paths.eval_csv, report.matrix.to_csv());
    log << "[eval] accuracy " << report.accuracy << " over " << report.outcomes.size() << " queries -> "
        << cfg.paths.eval_report.string() << '\n';
}

void run_all(const PipelineConfig& cfg, const Backends& b, std::ostream& log) {
    stage_generate(cfg, b, log);
    stage_assess(cfg, b, log);
    stage_curate(cfg, log);
    stage_dpo_iterate(cfg, log);
    stage_infer(cfg, b, log);
    stage_eval(cfg, b, log);
}

}  // namespace chainsmith::pipeline
