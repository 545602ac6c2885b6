#include <chainsmith/digest.hpp>
#include <chainsmith/sim.hpp>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

namespace chainsmith::sim {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string last_text(const Request& r) { return r.messages.back().text_content(); }

struct Plan {
    int steps = 1;
    bool slip = false;
    bool wrong = false;
    bool malformed = false;
};

Plan plan_for(const std::string& question, const backend::GenerationParams& p) {
    const auto h = stable_hash64(question + "|" + std::to_string(p.seed.value_or(0)));
    Plan plan;
    plan.steps = 1 + static_cast<int>(h % 4);
    plan.slip = static_cast<double>((h >> 8) % 1000) < 250.0 * (0.4 + p.temperature);
    plan.wrong = plan.slip && (h >> 20) % 4 != 0;
    plan.malformed = (h >> 32) % 23 == 0;
    return plan;
}

std::optional<std::pair<long long, long long>> operands(const std::string& question) {
    static const std::regex re(R"(What is (-?\d+) \+ (-?\d+)\?)");
    std::smatch m;
    if (!std::regex_search(question, m, re)) return std::nullopt;
    return std::pair{std::stoll(m[1].str()), std::stoll(m[2].str())};
}

}  // namespace

std::optional<std::string> line_value(std::string_view text, std::string_view key) {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key, 0) == 0) return trim(std::string_view(line).substr(key.size()));
    return std::nullopt;
}

bool is_final_request(const Request& r) {
    return last_text(r).find("Complete reasoning process:") != std::string::npos;
}

int requested_step(const Request& r) {
    static const std::regex re(R"(Write step (\d+)\.)");
    std::smatch m;
    const auto text = last_text(r);
    if (!std::regex_search(text, m, re)) return 0;
    return std::stoi(m[1].str());
}

Responder generator() {
    return [](const Request& r) -> std::string {
        const auto text = last_text(r);
        const auto question = line_value(text, "Question:").value_or("");
        const auto ops = operands(question);
        if (!ops) return "I cannot read this question.";
        const auto [a, b] = *ops;
        const auto plan = plan_for(question, r.params);
        const auto answer = plan.wrong ? a + b + 1 : a + b;
        if (is_final_request(r))
            return nlohmann::json{{"summary", "The answer is " + std::to_string(answer) + "."},
                                  {"answer", std::to_string(answer)}}
                .dump();
        const int k = requested_step(r);
        if (plan.malformed && k == std::min(plan.steps, 2)) return "Let me think about " + question;
        const bool last = k >= plan.steps;
        std::string title, detail;
        if (k == 1) {
            title = "Read the operands";
            detail = "The question adds " + std::to_string(a) + " and " + std::to_string(b) + ".";
        } else if (plan.slip && k == 2) {
            title = "Count on";
            detail = "Counting on from " + std::to_string(a) + " by " + std::to_string(b) + " gives " +
                     std::to_string(a + b + 1) + " (slip: one count too many).";
        } else {
            title = "Check step " + std::to_string(k);
            detail = std::to_string(a) + " + " + std::to_string(b) + " = " + std::to_string(a + b) + ".";
        }
        if (last && plan.slip && plan.steps == 1) detail += " Rounding up gives " + std::to_string(answer) + " (slip).";
        return nlohmann::json{{"summary", title}, {"reasoning", detail}, {"action", last ? "summary" : "continue"}}
            .dump();
    };
}

Responder answer_judge() {
    return [](const Request& r) -> std::string {
        const auto text = last_text(r);
        const auto truth = line_value(text, "Ground truth answer:");
        const auto answer = line_value(text, "Model answer:");
        if (!truth || !answer) return "unsure";
        return lower(*truth) == lower(*answer) ? "yes" : "no";
    };
}

Responder score_judge() {
    return [](const Request& r) -> std::string {
        const auto text = last_text(r);
        static const std::regex header(R"(=== Path (\d+) ===)");
        std::vector<std::size_t> starts;
        for (std::sregex_iterator it(text.begin(), text.end(), header), end; it != end; ++it)
            starts.push_back(static_cast<std::size_t>(it->position()));
        std::ostringstream out;
        for (std::size_t i = 0; i < starts.size(); ++i) {
            const auto stop = i + 1 < starts.size() ? starts[i + 1] : text.find("\n\nReply with", starts[i]);
            const auto block = text.substr(starts[i], stop - starts[i]);
            int steps = 0;
            for (std::size_t p = block.find("\nStep "); p != std::string::npos; p = block.find("\nStep ", p + 1)) ++steps;
            int score = 20 + 18 * steps + static_cast<int>(stable_hash64(block) % 10);
            if (block.find("slip") != std::string::npos) score -= 30;
            out << (i + 1) << ": " << std::clamp(score, 1, 100) << "\n";
        }
        return out.str();
    };
}

Responder summary_agent() {
    return [](const Request& r) -> std::string {
        const auto text = last_text(r);
        static const std::regex named(R"(Summary: The answer is (-?\d+)\.)");
        std::smatch m;
        if (!std::regex_search(text, m, named)) return "unknown";
        if (stable_hash64(text) % 9 == 0) return std::to_string(std::stoll(m[1].str()) - 1);
        return m[1].str();
    };
}

Responder trace_judge() {
    return [](const Request& r) -> std::string {
        const auto text = last_text(r);
        if (text.find("Reasoning path:\nStep 1:") == std::string::npos) return "no";
        return text.find("slip") == std::string::npos ? "yes" : "no";
    };
}

Responder for_role(std::string_view role) {
    if (role == "generator" || role == "reasoning_agent") return generator();
    if (role == "answer_judge") return answer_judge();
    if (role == "score_judge") return score_judge();
    if (role == "summary_agent") return summary_agent();
    if (role == "trace_judge") return trace_judge();
    return nullptr;
}

}  // namespace chainsmith::sim
