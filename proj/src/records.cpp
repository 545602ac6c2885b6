#include <chainsmith/records.hpp>

#include <set>

namespace chainsmith::records {

using nlohmann::json;

void to_json(json& j, const TraceRecord& r) {
    j = {{"query_id", r.query_id},
         {"sample_index", r.sample_index},
         {"trace", r.trace},
         {"params", backend::to_json(r.params)}};
}

void from_json(const json& j, TraceRecord& r) {
    r.query_id = j.at("query_id").get<std::string>();
    r.sample_index = j.at("sample_index").get<int>();
    r.trace = j.at("trace").get<ReasoningTrace>();
    r.params = backend::params_from_json(j.at("params"));
}

void to_json(json& j, const ScoredRecord& r) {
    j = {{"query_id", r.query_id},
         {"sample_index", r.sample_index},
         {"trace", r.trace},
         {"answer_correct", r.answer_correct}};
    if (r.score) j["score"] = *r.score;
}

void from_json(const json& j, ScoredRecord& r) {
    r.query_id = j.at("query_id").get<std::string>();
    r.sample_index = j.at("sample_index").get<int>();
    r.trace = j.at("trace").get<ReasoningTrace>();
    r.answer_correct = j.at("answer_correct").get<bool>();
    r.score = j.contains("score") ? std::optional(j["score"].get<int>()) : std::nullopt;
    if (r.score && !r.answer_correct) throw std::invalid_argument("score present on a filtered-out trace");
    if (r.score && (*r.score < 1 || *r.score > 100)) throw std::invalid_argument("score outside [1, 100]");
}

void to_json(json& j, const Turn& r) { j = {{"role", r.role}, {"content", r.content}}; }

void from_json(const json& j, Turn& r) {
    r.role = j.at("role").get<std::string>();
    r.content = j.at("content").get<std::string>();
}

void to_json(json& j, const SftRecord& r) {
    j = {{"id", r.id},
         {"query_id", r.query_id},
         {"agent", r.agent},
         {"provenance", r.provenance},
         {"image_ref", r.image_ref},
         {"messages", r.turns}};
}

void from_json(const json& j, SftRecord& r) {
    r.id = j.at("id").get<std::string>();
    r.query_id = j.value("query_id", "");
    r.agent = j.at("agent").get<std::string>();
    r.provenance = j.at("provenance").get<std::string>();
    r.image_ref = j.value("image_ref", "");
    r.turns = j.at("messages").get<std::vector<Turn>>();
}

void to_json(json& j, const PairRecord& r) {
    j = {{"query_id", r.query_id},       {"prompt", r.prompt},
         {"chosen", r.chosen},           {"rejected", r.rejected},
         {"chosen_score", r.chosen_score}, {"rejected_score", r.rejected_score}};
}

void from_json(const json& j, PairRecord& r) {
    r.query_id = j.at("query_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.chosen = j.at("chosen").get<std::string>();
    r.rejected = j.at("rejected").get<std::string>();
    r.chosen_score = j.at("chosen_score").get<int>();
    r.rejected_score = j.at("rejected_score").get<int>();
}

void to_json(json& j, const AnswerRecord& r) {
    j = {{"query_id", r.query_id}, {"trace", r.trace}, {"predicted_answer", r.predicted_answer}};
}

void from_json(const json& j, AnswerRecord& r) {
    r.query_id = j.at("query_id").get<std::string>();
    r.trace = j.at("trace").get<ReasoningTrace>();
    r.predicted_answer = j.at("predicted_answer").get<std::string>();
}

void to_json(json& j, const GeneralQaRecord& r) {
    j = {{"id", r.id}, {"image_ref", r.image_ref}, {"question", r.question}, {"answer", r.answer}};
}

void from_json(const json& j, GeneralQaRecord& r) {
    r.id = j.at("id").get<std::string>();
    r.image_ref = j.value("image_ref", "");
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
}

std::vector<QueryRecord> read_queries(const std::filesystem::path& path) {
    auto queries = read_records<QueryRecord>(path);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < queries.size(); ++i)
        if (!seen.insert(queries[i].id).second)
            throw RecordError(path.string(), 0, "duplicate query id '" + queries[i].id + "'");
    return queries;
}

}  // namespace chainsmith::records
