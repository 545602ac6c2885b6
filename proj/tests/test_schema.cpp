#include "test_helpers.hpp"

#include <chainsmith/records.hpp>
#include <chainsmith/schema.hpp>

#include <doctest.h>

#include <fstream>
#include <random>

using namespace chainsmith::schema;
using chainsmith::records::RecordError;

namespace {

ReasoningTrace make_trace(std::vector<StepAction> actions, std::optional<std::string> answer, bool complete) {
    ReasoningTrace t;
    for (std::size_t i = 0; i < actions.size(); ++i)
        t.steps.push_back({static_cast<int>(i + 1), "title " + std::to_string(i), "detail " + std::to_string(i),
                           actions[i]});
    t.final_answer = std::move(answer);
    if (t.final_answer) t.final_summary = "summary";
    t.complete = complete;
    return t;
}

bool has_violation(const std::vector<Violation>& v, const std::string& msg) {
    for (const auto& x : v)
        if (x.message == msg) return true;
    return false;
}

std::string random_text(std::mt19937_64& rng) {
    static const std::vector<std::string> glyphs = {"a", "b", "Z", "0", "9", " ", "\"", "\\", "\n", "\t",
                                                    "{", "}", "[", "]", ",", ":", "é", "→", "✓"};
    std::uniform_int_distribution<std::size_t> len(1, 24), pick(0, glyphs.size() - 1);
    std::string s = "x";
    for (auto n = len(rng); n > 0; --n) s += glyphs[pick(rng)];
    return s;
}

}  // namespace

TEST_CASE("parse_step maps on-disk keys") {
    const auto s = parse_step(R"({"summary":"Read axis","reasoning":"The x-axis shows years.","action":"continue"})");
    CHECK(s.title == "Read axis");
    CHECK(s.detail == "The x-axis shows years.");
    CHECK(s.action == StepAction::Continue);
    CHECK(parse_step(R"({"summary":"Done","reasoning":"r","action":"summary"})").action == StepAction::Summary);
}

TEST_CASE("parse_step errors name the problem") {
    try {
        parse_step(R"({"summary":"Done","reasoning":"...","action":"stop"})");
        FAIL("expected error");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseError::Kind::UnknownAction);
        CHECK(e.detail() == "stop");
        CHECK(std::string(e.what()).find("stop") != std::string::npos);
    }
    try {
        parse_step(R"({"summary":"Done","action":"continue"})");
        FAIL("expected error");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseError::Kind::MissingField);
        CHECK(e.detail() == "reasoning");
    }
    try {
        parse_step("not json");
        FAIL("expected error");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseError::Kind::MalformedJson);
    }
    CHECK_THROWS_AS(parse_step(R"({"summary":"  ","reasoning":"r","action":"continue"})"), ParseError);
    CHECK_THROWS_AS(parse_step(R"([1,2])"), ParseError);
}

TEST_CASE("lenient parsing repairs fences and trailing commas and flags it") {
    const std::string messy = "Sure!\n```json\n{\"summary\": \"A\", \"reasoning\": \"B\", \"action\": \"summary\",}\n```\n";
    CHECK_THROWS_AS(parse_step(messy), ParseError);
    const auto s = parse_step_lenient(messy);
    CHECK(s.repaired);
    CHECK(s.title == "A");
    CHECK(s.action == StepAction::Summary);
    CHECK_FALSE(parse_step_lenient(testutil::step_json("a", "b", "continue")).repaired);
    CHECK(parse_step_lenient("{\"summary\": \"a, b\", \"reasoning\": \"[x,]\", \"action\": \"continue\",}").detail == "[x,]");
    CHECK_THROWS_AS(parse_step_lenient("no json here"), ParseError);
}

TEST_CASE("step and trace serialization is canonical") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 200; ++i) {
        ReasoningStep step{0, random_text(rng), random_text(rng), (rng() & 1) ? StepAction::Continue : StepAction::Summary};
        const auto once = serialize_step(step);
        const auto back = parse_step(once);
        CHECK(back == step);
        CHECK(serialize_step(back) == once);

        ReasoningTrace t = make_trace({StepAction::Continue, StepAction::Summary}, random_text(rng), true);
        t.steps[0].title = random_text(rng);
        if (rng() & 1) t.diagnostics.push_back(random_text(rng));
        t.forced_summary = rng() & 1;
        t.steps[1].repaired = rng() & 1;
        const auto text = nlohmann::json(t).dump();
        const auto parsed = nlohmann::json::parse(text).get<ReasoningTrace>();
        CHECK(parsed == t);
        CHECK(nlohmann::json(parsed).dump() == text);
    }
}

TEST_CASE("validate_trace accepts well-formed traces") {
    CHECK(validate_trace(make_trace({StepAction::Continue, StepAction::Continue, StepAction::Summary}, "B", true)).empty());
    CHECK(validate_trace(make_trace({StepAction::Summary}, "B", true)).empty());
    CHECK(validate_trace(make_trace({StepAction::Continue}, std::nullopt, false)).empty());
    CHECK(validate_trace(make_trace({}, std::nullopt, false)).empty());
}

TEST_CASE("validate_trace reports each violation") {
    const auto v = validate_trace(make_trace({StepAction::Continue, StepAction::Summary, StepAction::Continue}, "B", true));
    CHECK(has_violation(v, "Summary before final step at index 2"));
    CHECK(v[0].step_index == 2);
    CHECK(has_violation(v, "final step at index 3 is not Summary"));

    CHECK(has_violation(validate_trace(make_trace({StepAction::Summary}, std::nullopt, true)), "missing final answer"));
    CHECK(has_violation(validate_trace(make_trace({StepAction::Continue}, "A", false)),
                        "final answer present on incomplete trace"));
    CHECK(has_violation(validate_trace(make_trace({}, "A", true)), "complete trace has no steps"));

    auto bad_index = make_trace({StepAction::Continue, StepAction::Summary}, "A", true);
    bad_index.steps[1].index = 5;
    CHECK(has_violation(validate_trace(bad_index), "step index 5 at position 2"));
    auto empty_title = make_trace({StepAction::Summary}, "A", true);
    empty_title.steps[0].title = "";
    CHECK(has_violation(validate_trace(empty_title), "empty title at index 1"));
}

TEST_CASE("records round-trip through JSONL") {
    const auto dir = testutil::scratch_dir("records");
    std::vector<QueryRecord> qs;
    for (int i = 0; i < 5; ++i) qs.push_back(testutil::query("q" + std::to_string(i), "What is " + std::to_string(i) + "?", std::to_string(i)));
    chainsmith::records::write_records(dir / "queries.jsonl", qs);
    CHECK(chainsmith::records::read_queries(dir / "queries.jsonl") == qs);

    std::vector<chainsmith::records::ScoredRecord> scored = {
        {"q0", 3, make_trace({StepAction::Summary}, "0", true), true, 77},
        {"q1", 0, make_trace({StepAction::Continue, StepAction::Summary}, "1", true), true, std::nullopt}};
    chainsmith::records::write_records(dir / "scored.jsonl", scored);
    CHECK(chainsmith::records::read_records<chainsmith::records::ScoredRecord>(dir / "scored.jsonl") == scored);
    std::filesystem::remove_all(dir);
}

TEST_CASE("record readers report the failing line") {
    const auto dir = testutil::scratch_dir("badline");
    {
        std::ofstream out(dir / "q.jsonl");
        out << nlohmann::json(testutil::query("a", "q?", "1")).dump() << "\n";
        out << nlohmann::json(testutil::query("b", "q?", "2")).dump() << "\n";
        out << "{\"id\": \"c\", \"question\": }\n";
    }
    try {
        chainsmith::records::read_records<QueryRecord>(dir / "q.jsonl");
        FAIL("expected RecordError");
    } catch (const RecordError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    { std::ofstream out(dir / "empty.jsonl"); }
    CHECK(chainsmith::records::read_records<QueryRecord>(dir / "empty.jsonl").empty());
    CHECK_THROWS_AS(chainsmith::records::read_records<QueryRecord>(dir / "missing.jsonl"), RecordError);

    {
        std::ofstream out(dir / "dup.jsonl");
        out << nlohmann::json(testutil::query("a", "q?", "1")).dump() << "\n";
        out << nlohmann::json(testutil::query("a", "q2?", "1")).dump() << "\n";
    }
    CHECK_THROWS_AS(chainsmith::records::read_queries(dir / "dup.jsonl"), RecordError);

    {
        std::ofstream out(dir / "s.jsonl");
        out << R"({"query_id":"a","sample_index":0,"trace":{"steps":[],"complete":false},"answer_correct":false,"score":50})" << "\n";
    }
    CHECK_THROWS_AS(chainsmith::records::read_records<chainsmith::records::ScoredRecord>(dir / "s.jsonl"), RecordError);
    std::filesystem::remove_all(dir);
}
