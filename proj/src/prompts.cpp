#include <chainsmith/error.hpp>
#include <chainsmith/prompts.hpp>

#include <fstream>
#include <sstream>

namespace chainsmith {

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (true) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos);
            return out;
        }
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string::npos) throw Error("unterminated placeholder in prompt template");
        out.append(tmpl, pos, open - pos);
        const auto key = tmpl.substr(open + 2, close - open - 2);
        const auto it = vars.find(key);
        if (it == vars.end()) throw Error("prompt template placeholder '{{" + key + "}}' has no value");
        out += it->second;
        pos = close + 2;
    }
}

namespace {

std::string read_asset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read prompt asset '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto text = ss.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

}  // namespace

PromptSet PromptSet::load(const std::filesystem::path& dir, const std::map<std::string, std::string>& names) {
    auto get = [&](const std::string& role) {
        const auto it = names.find(role);
        const auto stem = it == names.end() ? role + ".v1" : it->second;
        return read_asset(dir / (stem + ".txt"));
    };
    PromptSet p;
    p.reasoning_system = get("reasoning_system");
    p.reasoning_task = get("reasoning_task");
    p.reasoning_step = get("reasoning_step");
    p.reasoning_cap = get("reasoning_cap");
    p.reasoning_final = get("reasoning_final");
    p.answer_judge = get("answer_judge");
    p.verdict_reask = get("verdict_reask");
    p.score_judge = get("score_judge");
    p.score_reask = get("score_reask");
    p.summary_agent = get("summary_agent");
    p.trace_judge = get("trace_judge");
    return p;
}

}  // namespace chainsmith
