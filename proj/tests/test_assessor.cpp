#include "oracles.hpp"
#include "test_helpers.hpp"

#include <chainsmith/assessor.hpp>

#include <doctest.h>

using namespace chainsmith;
using namespace chainsmith::assessor;
using backend::RecordingBackend;
using backend::ScriptedBackend;
using records::TraceRecord;
using schema::ReasoningTrace;

namespace {

ReasoningTrace trace_with(int steps, const std::string& answer, bool complete = true) {
    ReasoningTrace t;
    for (int i = 0; i < steps; ++i)
        t.steps.push_back({i, "title " + std::to_string(i), "detail " + std::to_string(i),
                           i + 1 == steps ? schema::StepAction::Summary : schema::StepAction::Continue, false});
    t.complete = complete;
    if (complete) {
        t.final_summary = "The answer is " + answer + ".";
        t.final_answer = answer;
    }
    return t;
}

ScoreError::Kind score_error_kind(const std::string& reply, std::size_t n) {
    try {
        parse_scores(reply, n);
    } catch (const ScoreError& e) {
        return e.kind();
    }
    FAIL("expected ScoreError");
    return ScoreError::Kind::CountMismatch;
}

// Replies in call order regardless of content.
RecordingBackend::Responder sequence(std::vector<std::string> replies) {
    auto n = std::make_shared<std::size_t>(0);
    return [replies = std::move(replies), n](const backend::Request&) { return replies.at((*n)++); };
}

}  // namespace

TEST_CASE("parse_verdict reads the leading word only") {
    CHECK(parse_verdict("yes") == true);
    CHECK(parse_verdict("  YES, it matches") == true);
    CHECK(parse_verdict("No.") == false);
    CHECK(parse_verdict("no\nbecause") == false);
    CHECK_FALSE(parse_verdict("yesterday"));
    CHECK_FALSE(parse_verdict("nope"));
    CHECK_FALSE(parse_verdict("The answer is yes"));
    CHECK_FALSE(parse_verdict(""));
}

TEST_CASE("parse_scores examples") {
    CHECK(parse_scores("1: 73\n2: 90", 2) == std::vector<int>{73, 90});
    CHECK(parse_scores("2: 90\n1: 73\n", 2) == std::vector<int>{73, 90});
    CHECK(parse_scores("Scores:\n 1 : 1\n2:100\nthanks", 2) == std::vector<int>{1, 100});
    CHECK(parse_scores("1: 73\r\n2: +90\r\n", 2) == std::vector<int>{73, 90});
    CHECK(score_error_kind("1: 73\n2: 90", 3) == ScoreError::Kind::CountMismatch);
    CHECK(score_error_kind("1: 73\n1: 90", 2) == ScoreError::Kind::CountMismatch);
    CHECK(score_error_kind("1: 73\n3: 90", 2) == ScoreError::Kind::CountMismatch);
    CHECK(score_error_kind("1: 0", 1) == ScoreError::Kind::OutOfRange);
    CHECK(score_error_kind("1: 101", 1) == ScoreError::Kind::OutOfRange);
    CHECK(score_error_kind("1: -5", 1) == ScoreError::Kind::OutOfRange);
    CHECK(score_error_kind("1: 99999999999999999999999", 1) == ScoreError::Kind::OutOfRange);
    // A count problem is reported before a range problem.
    CHECK(score_error_kind("1: 500", 2) == ScoreError::Kind::CountMismatch);
    CHECK(score_error_kind("1: 7.5", 1) == ScoreError::Kind::CountMismatch);
}

TEST_CASE("parse_scores property: matches the constructed outcome") {
    std::mt19937_64 rng(7);
    int ok = 0, count = 0, range = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto r = oracle::random_score_reply(rng);
        CAPTURE(r.text);
        CAPTURE(r.expected);
        switch (r.outcome) {
            case oracle::ScoreOutcome::Ok:
                ++ok;
                CHECK(parse_scores(r.text, r.expected) == r.scores);
                break;
            case oracle::ScoreOutcome::CountMismatch:
                ++count;
                CHECK(score_error_kind(r.text, r.expected) == ScoreError::Kind::CountMismatch);
                break;
            case oracle::ScoreOutcome::OutOfRange:
                ++range;
                CHECK(score_error_kind(r.text, r.expected) == ScoreError::Kind::OutOfRange);
                break;
        }
    }
    CHECK(ok > 100);
    CHECK(count > 100);
    CHECK(range > 100);
}

TEST_CASE("ask_verdict re-asks once with the rejected reply in context") {
    const auto prompts = testutil::prompts();
    const auto msgs = answer_judge_messages(prompts, testutil::query("q", "Q?", "4"), "4");
    const auto params = default_judge_params();
    CHECK(params.temperature == 0.0);

    const auto table = testutil::author_table(sequence({"maybe", "Yes"}), [&](auto& b) { ask_verdict(b, prompts, msgs, params); });
    ScriptedBackend s(table);
    CHECK(ask_verdict(s, prompts, msgs, params));
    const auto log = s.log();
    REQUIRE(log.size() == 2);
    REQUIRE(log[1].request.messages.size() == 3);
    CHECK(log[1].request.messages[1].text_content() == "maybe");
    CHECK(log[1].request.messages[2].text_content() == prompts.verdict_reask);

    ScriptedBackend bad(testutil::author_table(sequence({"maybe", "perhaps"}),
                                               [&](auto& b) { CHECK_THROWS_AS(ask_verdict(b, prompts, msgs, params), VerdictError); }));
    CHECK_THROWS_AS(ask_verdict(bad, prompts, msgs, params), VerdictError);
}

TEST_CASE("answer judge prompt layout") {
    const auto prompts = testutil::prompts();
    const auto m = answer_judge_messages(prompts, testutil::query("q", "What is 2 + 2?", "4"), "5");
    REQUIRE(m.size() == 1);
    const auto text = m[0].text_content();
    CHECK(sim::line_value(text, "Question:") == "What is 2 + 2?");
    CHECK(sim::line_value(text, "Ground truth answer:") == "4");
    CHECK(sim::line_value(text, "Model answer:") == "5");
    CHECK_THROWS(filter_answer(*std::make_shared<ScriptedBackend>(std::map<std::string, std::string>{}), prompts,
                               testutil::query("q", "Q", "4"), trace_with(2, "4", false)));
}

TEST_CASE("score prompt holds all paths once and the ground truth once") {
    const auto prompts = testutil::prompts();
    const auto q = testutil::query("q", "What is 2 + 2?", "four");
    std::vector<ReasoningTrace> paths{trace_with(1, "4"), trace_with(3, "4"), trace_with(2, "4")};
    const auto m = score_messages(prompts, q, paths);
    REQUIRE(m.size() == 1);
    CHECK(m[0].parts.front().kind == backend::ContentPart::Kind::Image);
    const auto text = m[0].text_content();
    for (int k = 1; k <= 3; ++k) CHECK(text.find("=== Path " + std::to_string(k) + " ===") != std::string::npos);
    CHECK(text.find("=== Path 4 ===") == std::string::npos);
    const auto first = text.find("four");
    CHECK(first != std::string::npos);
    CHECK(text.find("four", first + 1) == std::string::npos);
    CHECK(text.find("exactly 3 lines") != std::string::npos);
}

TEST_CASE("score_paths retries once on a malformed reply") {
    const auto prompts = testutil::prompts();
    const auto q = testutil::query("q", "Q?", "4");
    std::vector<ReasoningTrace> paths{trace_with(1, "4"), trace_with(2, "4")};
    const auto p = default_judge_params();

    ScriptedBackend s(testutil::author_table(sequence({"1: 50", "1: 50\n2: 70"}),
                                             [&](auto& b) { score_paths(b, prompts, q, paths, p); }));
    CHECK(score_paths(s, prompts, q, paths, p) == std::vector<int>{50, 70});
    const auto log = s.log();
    REQUIRE(log.size() == 2);
    CHECK(log[1].request.messages.back().text_content().find("expected 2 scores, got 1") != std::string::npos);

    ScriptedBackend twice(testutil::author_table(sequence({"1: 50", "1: 0\n2: 70"}), [&](auto& b) {
        CHECK_THROWS_AS(score_paths(b, prompts, q, paths, p), ScoreError);
    }));
    CHECK_THROWS_AS(score_paths(twice, prompts, q, paths, p), ScoreError);
    CHECK_THROWS(score_paths(twice, prompts, q, std::vector<ReasoningTrace>{}, p));
}

TEST_CASE("assess_all drops incomplete and wrong traces then scores survivors") {
    const auto prompts = testutil::prompts();
    std::vector<schema::QueryRecord> qs{testutil::query("q1", "What is 2 + 2?", "4"),
                                        testutil::query("q2", "What is 1 + 1?", "2")};
    std::vector<TraceRecord> traces{
        {"q1", 0, trace_with(2, "4"), {}},        {"q1", 1, trace_with(1, "5"), {}},
        {"q1", 2, trace_with(2, "4", false), {}}, {"q1", 3, trace_with(4, "4"), {}},
        {"q2", 0, trace_with(1, "3"), {}},        {"q2", 1, trace_with(3, "2", false), {}},
    };
    auto run = [&](backend::ChatBackend& aj, backend::ChatBackend& sj) {
        return assess_all(aj, sj, prompts, qs, traces);
    };
    RecordingBackend aj(sim::answer_judge()), sj(sim::score_judge());
    run(aj, sj);
    ScriptedBackend saj(aj.table()), ssj(sj.table());
    const auto result = run(saj, ssj);

    REQUIRE(result.records.size() == 2);
    CHECK(result.records[0].query_id == "q1");
    CHECK(result.records[0].sample_index == 0);
    CHECK(result.records[1].sample_index == 3);
    for (const auto& r : result.records) {
        CHECK(r.answer_correct);
        REQUIRE(r.score);
        CHECK(*r.score >= 1);
        CHECK(*r.score <= 100);
    }
    CHECK(*result.records[1].score > *result.records[0].score);
    CHECK(ssj.log().size() == 1);  // q2 had no survivors, so only q1 was scored
    CHECK(saj.log().size() == 4);  // incomplete traces never reach the filter
    const auto joined = [&] {
        std::string s;
        for (const auto& l : result.log) s += l + "\n";
        return s;
    }();
    CHECK(joined.find("q1: dropped 1 incomplete") != std::string::npos);
    CHECK(joined.find("q2: no trace passed") != std::string::npos);
}

TEST_CASE("assess_all isolates a scoring failure to its question") {
    const auto prompts = testutil::prompts();
    std::vector<schema::QueryRecord> qs{testutil::query("q1", "A?", "4"), testutil::query("q2", "B?", "2")};
    std::vector<TraceRecord> traces{{"q1", 0, trace_with(2, "4"), {}}, {"q2", 0, trace_with(1, "2"), {}}};
    auto broken_scores = [](const backend::Request& r) -> std::string {
        return r.messages.front().text_content().find("Question: A?") != std::string::npos ? "1: 0" : "1: 64";
    };
    RecordingBackend aj(sim::answer_judge(), 2), sj(broken_scores, 2);
    const auto result = assess_all(aj, sj, prompts, qs, traces);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].query_id == "q2");
    CHECK(result.records[0].score == 64);
    CHECK(sj.requests().size() == 3);
}

TEST_CASE("assess_all is invariant to concurrency") {
    const auto prompts = testutil::prompts();
    std::vector<schema::QueryRecord> qs;
    std::vector<TraceRecord> traces;
    for (int i = 0; i < 8; ++i) {
        const auto id = "q" + std::to_string(i);
        qs.push_back(testutil::query(id, "Q" + std::to_string(i), std::to_string(i)));
        for (int s = 0; s < 4; ++s)
            traces.push_back({id, s, trace_with(1 + s, std::to_string((s + i) % 3 == 0 ? i + 1 : i)), {}});
    }
    RecordingBackend aj(sim::answer_judge()), sj(sim::score_judge());
    const auto reference = assess_all(aj, sj, prompts, qs, traces);
    ScriptedBackend a8(aj.table(), 8), s8(sj.table(), 8);
    const auto parallel = assess_all(a8, s8, prompts, qs, traces);
    CHECK(parallel.records == reference.records);
    CHECK(parallel.log == reference.log);
    CHECK(reference.records.size() > 10);
}
