#pragma once

#include <chainsmith/backend.hpp>
#include <chainsmith/schema.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace chainsmith::records {

using schema::QueryRecord;
using schema::ReasoningTrace;

/// traces.jsonl
struct TraceRecord {
    std::string query_id;
    int sample_index = 0;
    ReasoningTrace trace;
    backend::GenerationParams params;

    bool operator==(const TraceRecord&) const = default;
};

/// scored.jsonl
struct ScoredRecord {
    std::string query_id;
    int sample_index = 0;
    ReasoningTrace trace;
    bool answer_correct = false;
    std::optional<int> score;

    bool operator==(const ScoredRecord&) const = default;
};

struct Turn {
    std::string role;
    std::string content;

    bool operator==(const Turn&) const = default;
};

/// sft.jsonl: one conversation per record.
struct SftRecord {
    std::string id;
    std::string query_id;
    std::string agent;       // "reasoning" | "summary"
    std::string provenance;  // optimal | band:<lo>-<hi> | general | agent-generated
    std::string image_ref;
    std::vector<Turn> turns;

    bool operator==(const SftRecord&) const = default;
};

/// pairs.jsonl
struct PairRecord {
    std::string query_id;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    int chosen_score = 0;
    int rejected_score = 0;

    bool operator==(const PairRecord&) const = default;
};

/// answers.jsonl, written by the two-agent inference stage.
struct AnswerRecord {
    std::string query_id;
    ReasoningTrace trace;
    std::string predicted_answer;

    bool operator==(const AnswerRecord&) const = default;
};

/// general_qa.jsonl: plain question-answer data mixed into the summary set.
struct GeneralQaRecord {
    std::string id;
    std::string image_ref;
    std::string question;
    std::string answer;

    bool operator==(const GeneralQaRecord&) const = default;
};

void to_json(nlohmann::json& j, const TraceRecord& r);
void from_json(const nlohmann::json& j, TraceRecord& r);
void to_json(nlohmann::json& j, const ScoredRecord& r);
void from_json(const nlohmann::json& j, ScoredRecord& r);
void to_json(nlohmann::json& j, const Turn& r);
void from_json(const nlohmann::json& j, Turn& r);
void to_json(nlohmann::json& j, const SftRecord& r);
void from_json(const nlohmann::json& j, SftRecord& r);
void to_json(nlohmann::json& j, const PairRecord& r);
void from_json(const nlohmann::json& j, PairRecord& r);
void to_json(nlohmann::json& j, const AnswerRecord& r);
void from_json(const nlohmann::json& j, AnswerRecord& r);
void to_json(nlohmann::json& j, const GeneralQaRecord& r);
void from_json(const nlohmann::json& j, GeneralQaRecord& r);

/// Raised on unreadable files or a record that fails to parse; line() is 1-based (0 for I/O).
class RecordError : public Error {
public:
    RecordError(std::string path, std::size_t line, const std::string& what)
        : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          path_(std::move(path)), line_(line) {}
    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string path_;
    std::size_t line_;
};

/// Canonical one-line serialization of any record.
template <typename T>
std::string serialize(const T& record) {
    return nlohmann::json(record).dump();
}

template <typename T>
std::vector<T> read_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RecordError(path.string(), 0, "cannot open for reading");
    std::vector<T> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<T>());
        } catch (const std::exception& e) {
            throw RecordError(path.string(), lineno, std::string("schema violation: ") + e.what());
        }
    }
    return out;
}

template <typename T>
void write_records(const std::filesystem::path& path, const std::vector<T>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RecordError(path.string(), 0, "cannot open for writing");
    for (const auto& r : records) out << serialize(r) << '\n';
    if (!out) throw RecordError(path.string(), 0, "write failed");
}

/// Reads queries.jsonl and rejects duplicate ids.
std::vector<QueryRecord> read_queries(const std::filesystem::path& path);

}  // namespace chainsmith::records
