#include <chainsmith/schema.hpp>

#include <sstream>

namespace chainsmith::schema {

using nlohmann::json;

std::string to_string(StepAction a) { return a == StepAction::Continue ? "continue" : "summary"; }

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

json parse_object(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::MalformedJson, e.what(), std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object())
        throw ParseError(ParseError::Kind::MalformedJson, "not an object", "malformed JSON: expected an object");
    return j;
}

std::string required_string(const json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end() || !it->is_string())
        throw ParseError(ParseError::Kind::MissingField, field, std::string("missing field '") + field + "'");
    auto value = it->get<std::string>();
    if (trim(value).empty())
        throw ParseError(ParseError::Kind::EmptyField, field, std::string("empty field '") + field + "'");
    return value;
}

// Drops commas that directly precede a closing bracket, ignoring string contents.
std::string strip_trailing_commas(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            out.push_back(c);
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == ',') {
            auto k = s.find_first_not_of(" \t\r\n", i + 1);
            if (k != std::string_view::npos && (s[k] == '}' || s[k] == ']')) continue;
        }
        out.push_back(c);
    }
    return out;
}

}  // namespace

ReasoningStep parse_step(std::string_view text) {
    const auto j = parse_object(text);
    ReasoningStep step;
    step.title = required_string(j, "summary");
    step.detail = required_string(j, "reasoning");
    const auto it = j.find("action");
    if (it == j.end() || !it->is_string())
        throw ParseError(ParseError::Kind::MissingField, "action", "missing field 'action'");
    const auto action = it->get<std::string>();
    if (action == "continue")
        step.action = StepAction::Continue;
    else if (action == "summary")
        step.action = StepAction::Summary;
    else
        throw ParseError(ParseError::Kind::UnknownAction, action, "unknown action '" + action + "'");
    return step;
}

std::optional<std::string> repair_json(std::string_view text) {
    std::string_view body = trim(text);
    if (const auto fence = body.find("```"); fence != std::string_view::npos) {
        auto start = body.find('\n', fence);
        if (start != std::string_view::npos) {
            const auto close = body.find("```", start + 1);
            body = body.substr(start + 1, close == std::string_view::npos ? std::string_view::npos : close - start - 1);
        }
    }
    const auto open = body.find('{');
    const auto close = body.rfind('}');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open)
        body = body.substr(open, close - open + 1);
    auto repaired = strip_trailing_commas(body);
    if (repaired == text) return std::nullopt;
    return repaired;
}

ReasoningStep parse_step_lenient(std::string_view text) {
    try {
        return parse_step(text);
    } catch (const ParseError& strict) {
        const auto repaired = repair_json(text);
        if (!repaired) throw;
        auto step = parse_step(*repaired);
        step.repaired = true;
        return step;
    }
}

FinalAnswer parse_final(std::string_view text) {
    auto parse = [](std::string_view t) {
        const auto j = parse_object(t);
        FinalAnswer f;
        f.summary = required_string(j, "summary");
        f.answer = required_string(j, "answer");
        return f;
    };
    try {
        return parse(text);
    } catch (const ParseError&) {
        const auto repaired = repair_json(text);
        if (!repaired) throw;
        auto f = parse(*repaired);
        f.repaired = true;
        return f;
    }
}

std::string serialize_step(const ReasoningStep& step) {
    return json{{"summary", step.title}, {"reasoning", step.detail}, {"action", to_string(step.action)}}.dump();
}

std::string serialize_final(const std::string& summary, const std::string& answer) {
    return json{{"summary", summary}, {"answer", answer}}.dump();
}

std::vector<Violation> validate_trace(const ReasoningTrace& trace) {
    std::vector<Violation> out;
    const int n = static_cast<int>(trace.steps.size());
    for (int pos = 1; pos <= n; ++pos) {
        const auto& s = trace.steps[pos - 1];
        if (s.index != pos)
            out.push_back({pos, "step index " + std::to_string(s.index) + " at position " + std::to_string(pos)});
        if (trim(s.title).empty()) out.push_back({pos, "empty title at index " + std::to_string(pos)});
        if (trim(s.detail).empty()) out.push_back({pos, "empty detail at index " + std::to_string(pos)});
        if (pos < n && s.action == StepAction::Summary)
            out.push_back({pos, "Summary before final step at index " + std::to_string(pos)});
    }
    if (trace.complete) {
        if (n == 0) out.push_back({std::nullopt, "complete trace has no steps"});
        if (n > 0 && trace.steps.back().action != StepAction::Summary)
            out.push_back({n, "final step at index " + std::to_string(n) + " is not Summary"});
        if (!trace.final_answer) out.push_back({std::nullopt, "missing final answer"});
    } else if (trace.final_answer) {
        out.push_back({std::nullopt, "final answer present on incomplete trace"});
    }
    return out;
}

std::string render_steps(const ReasoningTrace& trace) {
    std::ostringstream os;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        if (i) os << "\n\n";
        os << "Step " << (i + 1) << ": " << trace.steps[i].title << '\n' << trace.steps[i].detail;
    }
    return os.str();
}

std::string render_supplement(const ReasoningTrace& trace) {
    if (trace.steps.empty()) return kNoReasoningMarker;
    auto text = render_steps(trace);
    if (trace.final_summary) text += "\n\nSummary: " + *trace.final_summary;
    return text;
}

std::string render_generation(const ReasoningTrace& trace) {
    std::string out;
    for (const auto& s : trace.steps) out += serialize_step(s) + '\n';
    if (trace.final_answer) out += serialize_final(trace.final_summary.value_or(""), *trace.final_answer) + '\n';
    return out;
}

void to_json(json& j, const ReasoningStep& s) {
    j = {{"summary", s.title}, {"reasoning", s.detail}, {"action", to_string(s.action)}};
    if (s.repaired) j["repaired"] = true;
}

void from_json(const json& j, ReasoningStep& s) {
    s.title = j.at("summary").get<std::string>();
    s.detail = j.at("reasoning").get<std::string>();
    const auto a = j.at("action").get<std::string>();
    if (a == "continue")
        s.action = StepAction::Continue;
    else if (a == "summary")
        s.action = StepAction::Summary;
    else
        throw ParseError(ParseError::Kind::UnknownAction, a, "unknown action '" + a + "'");
    s.repaired = j.value("repaired", false);
}

void to_json(json& j, const ReasoningTrace& t) {
    j = {{"steps", t.steps}, {"complete", t.complete}};
    if (t.final_summary) j["final_summary"] = *t.final_summary;
    if (t.final_answer) j["final_answer"] = *t.final_answer;
    if (t.forced_summary) j["forced_summary"] = true;
    if (!t.diagnostics.empty()) j["diagnostics"] = t.diagnostics;
}

void from_json(const json& j, ReasoningTrace& t) {
    t.steps = j.at("steps").get<std::vector<ReasoningStep>>();
    for (std::size_t i = 0; i < t.steps.size(); ++i) t.steps[i].index = static_cast<int>(i + 1);
    t.complete = j.at("complete").get<bool>();
    t.final_summary = j.contains("final_summary") ? std::optional(j["final_summary"].get<std::string>()) : std::nullopt;
    t.final_answer = j.contains("final_answer") ? std::optional(j["final_answer"].get<std::string>()) : std::nullopt;
    t.forced_summary = j.value("forced_summary", false);
    t.diagnostics = j.value("diagnostics", std::vector<std::string>{});
}

void to_json(json& j, const QueryRecord& q) {
    j = {{"id", q.id}, {"image_ref", q.image_ref}, {"question", q.question}, {"ground_truth", q.ground_truth}};
}

void from_json(const json& j, QueryRecord& q) {
    q.id = j.at("id").get<std::string>();
    q.image_ref = j.value("image_ref", "");
    q.question = j.at("question").get<std::string>();
    q.ground_truth = j.at("ground_truth").get<std::string>();
    if (q.question.empty()) throw std::invalid_argument("question must be non-empty");
}

}  // namespace chainsmith::schema
