#include <chainsmith/curator.hpp>
#include <chainsmith/digest.hpp>
#include <chainsmith/generator.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace chainsmith::curator {

std::vector<ScoreBand> default_flawed_bands() {
    return {{1, 33, 1.0 / 3.0}, {34, 66, 1.0 / 3.0}, {67, 84, 1.0 / 3.0}};
}

void CurationConfig::validate() const {
    if (!(1 <= rejected_target && rejected_target < positive_threshold && positive_threshold <= 100))
        throw ConfigError("curation", "requires 1 <= rejected_target < positive_threshold <= 100");
    double total = 0.0;
    for (std::size_t i = 0; i < flawed_bands.size(); ++i) {
        const auto& b = flawed_bands[i];
        const auto field = "curation.flawed_bands[" + std::to_string(i) + "]";
        if (b.lo < 1 || b.hi > 100 || b.lo > b.hi) throw ConfigError(field, "interval must lie within [1, 100]");
        if (!(b.weight >= 0.0)) throw ConfigError(field, "weight must be non-negative");
        total += b.weight;
    }
    if (!flawed_bands.empty() && std::abs(total - 1.0) > 1e-9)
        throw ConfigError("curation.flawed_bands", "weights must sum to 1");
    if (!(general_qa_ratio >= 0.0 && general_qa_ratio < 1.0))
        throw ConfigError("curation.general_qa_ratio", "must be in [0, 1)");
}

namespace {

bool better(const ScoredRecord& a, const ScoredRecord& b) {
    if (*a.score != *b.score) return *a.score > *b.score;
    if (a.trace.steps.size() != b.trace.steps.size()) return a.trace.steps.size() < b.trace.steps.size();
    return a.sample_index < b.sample_index;
}

std::mt19937_64 keyed_rng(const std::string& key, std::uint64_t seed) {
    return std::mt19937_64(stable_hash64(key + "#" + std::to_string(seed)));
}

SftRecord summary_record(const PromptSet& prompts, const QueryRecord& query, const ReasoningTrace& trace,
                         std::string provenance, std::string id) {
    SftRecord r;
    r.id = std::move(id);
    r.query_id = query.id;
    r.agent = "summary";
    r.provenance = std::move(provenance);
    r.image_ref = query.image_ref;
    r.turns = {{"user", render_template(prompts.summary_agent,
                                        {{"question", query.question}, {"trace", schema::render_supplement(trace)}})},
               {"assistant", query.ground_truth}};
    return r;
}

// Largest-remainder apportionment of `total` items by `weights` (which sum to 1).
std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t total) {
    std::vector<std::size_t> counts(weights.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = weights[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        assigned += counts[i];
        remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k, ++assigned)
        ++counts[remainders[k].second];
    return counts;
}

}  // namespace

const ScoredRecord& select_best_path(std::span<const ScoredRecord> scored) {
    if (scored.empty()) throw Error("select_best_path: empty list");
    const ScoredRecord* best = nullptr;
    for (const auto& s : scored) {
        if (!s.score) throw Error("select_best_path: unscored record");
        if (!best || better(s, *best)) best = &s;
    }
    return *best;
}

const ScoredRecord* select_rejected(std::span<const ScoredRecord> scored, const CurationConfig& cfg) {
    const ScoredRecord* pick = nullptr;
    auto key = [&](const ScoredRecord& r) {
        return std::tuple(std::abs(*r.score - cfg.rejected_target), *r.score, r.trace.steps.size(), r.sample_index);
    };
    for (const auto& s : scored) {
        if (!s.score || *s.score > cfg.positive_threshold) continue;
        if (!pick || key(s) < key(*pick)) pick = &s;
    }
    return pick;
}

std::vector<std::vector<ScoredRecord>> group_scored(std::span<const QueryRecord> queries,
                                                    std::span<const ScoredRecord> scored) {
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < queries.size(); ++i) slot[queries[i].id] = i;
    std::vector<std::vector<ScoredRecord>> groups(queries.size());
    for (const auto& s : scored) {
        const auto it = slot.find(s.query_id);
        if (it != slot.end() && s.answer_correct && s.score) groups[it->second].push_back(s);
    }
    return groups;
}

SftRecord reasoning_sft_record(const PromptSet& prompts, const QueryRecord& query, const ScoredRecord& best) {
    SftRecord r;
    r.id = query.id + ":reasoning";
    r.query_id = query.id;
    r.agent = "reasoning";
    r.provenance = "optimal";
    r.image_ref = query.image_ref;
    r.turns.push_back({"user", generator::render_task(prompts, query)});
    for (const auto& step : best.trace.steps) r.turns.push_back({"assistant", schema::serialize_step(step)});
    r.turns.push_back({"assistant", schema::serialize_final(best.trace.final_summary.value_or(""),
                                                            best.trace.final_answer.value_or(""))});
    return r;
}

ReasoningTrace trace_from_reasoning_sft(const SftRecord& record) {
    std::vector<const records::Turn*> assistant;
    for (const auto& t : record.turns)
        if (t.role == "assistant") assistant.push_back(&t);
    if (assistant.empty()) throw Error("reasoning SFT record has no assistant turns");
    ReasoningTrace trace;
    for (std::size_t i = 0; i + 1 < assistant.size(); ++i) {
        auto step = schema::parse_step(assistant[i]->content);
        step.index = static_cast<int>(i + 1);
        trace.steps.push_back(std::move(step));
    }
    auto final = schema::parse_final(assistant.back()->content);
    trace.final_summary = std::move(final.summary);
    trace.final_answer = std::move(final.answer);
    trace.complete = true;
    return trace;
}

Curated<SftRecord> build_reasoning_sft(const PromptSet& prompts, std::span<const QueryRecord> queries,
                                       std::span<const ScoredRecord> scored) {
    Curated<SftRecord> out;
    const auto groups = group_scored(queries, scored);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (groups[i].empty()) {
            out.log.push_back(queries[i].id + ": no scored trace; skipped for reasoning SFT");
            continue;
        }
        out.records.push_back(reasoning_sft_record(prompts, queries[i], select_best_path(groups[i])));
    }
    return out;
}

std::size_t general_qa_count(std::size_t derived, double ratio) {
    if (ratio <= 0.0) return 0;
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(derived) / (1.0 - ratio) + 1e-9));
}

Curated<SftRecord> build_summary_sft(const PromptSet& prompts, std::span<const QueryRecord> queries,
                                     std::span<const ScoredRecord> scored,
                                     std::span<const GeneralQaRecord> general_qa, const CurationConfig& cfg,
                                     std::span<const TraceRecord> agent_traces) {
    cfg.validate();
    Curated<SftRecord> out;
    const auto groups = group_scored(queries, scored);
    const auto nbands = cfg.flawed_bands.size();

    // Flawed candidates per question and band; the optimal path never doubles as a flawed one.
    std::vector<std::vector<std::vector<const ScoredRecord*>>> candidates(queries.size());
    std::vector<const ScoredRecord*> best(queries.size(), nullptr);
    std::vector<bool> band_used(nbands, false);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        candidates[q].resize(nbands);
        if (groups[q].empty()) continue;
        best[q] = &select_best_path(groups[q]);
        for (const auto& s : groups[q]) {
            if (&s == best[q]) continue;
            for (std::size_t b = 0; b < nbands; ++b)
                if (cfg.flawed_bands[b].contains(*s.score)) {
                    candidates[q][b].push_back(&s);
                    band_used[b] = true;
                }
        }
    }

    std::vector<double> weights(nbands, 0.0);
    double live = 0.0;
    for (std::size_t b = 0; b < nbands; ++b)
        if (band_used[b]) live += cfg.flawed_bands[b].weight;
    for (std::size_t b = 0; b < nbands; ++b) {
        if (band_used[b] && live > 0.0) {
            weights[b] = cfg.flawed_bands[b].weight / live;
        } else if (!band_used[b]) {
            out.log.push_back(cfg.flawed_bands[b].tag() + ": no available traces; weight redistributed");
        }
    }

    std::vector<std::size_t> eligible;
    for (std::size_t q = 0; q < queries.size(); ++q)
        if (std::any_of(candidates[q].begin(), candidates[q].end(), [](const auto& c) { return !c.empty(); }))
            eligible.push_back(q);
    // Process in an order keyed by (query_id, seed), not by input position.
    std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        const auto ka = stable_hash64(queries[a].id + "#order#" + std::to_string(cfg.seed));
        const auto kb = stable_hash64(queries[b].id + "#order#" + std::to_string(cfg.seed));
        return ka != kb ? ka < kb : queries[a].id < queries[b].id;
    });
    auto quota = apportion(weights, eligible.size());

    std::vector<const ScoredRecord*> flawed(queries.size(), nullptr);
    std::vector<std::size_t> flawed_band(queries.size(), 0);
    for (const auto q : eligible) {
        auto rng = keyed_rng(queries[q].id, cfg.seed);
        std::optional<std::size_t> band;
        for (std::size_t b = 0; b < nbands; ++b)
            if (!candidates[q][b].empty() && quota[b] > 0 && (!band || quota[b] > quota[*band])) band = b;
        if (!band) {
            std::vector<double> w(nbands, 0.0);
            for (std::size_t b = 0; b < nbands; ++b)
                if (!candidates[q][b].empty()) w[b] = std::max(weights[b], 1e-12);
            band = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
            out.log.push_back(queries[q].id + ": band quotas exhausted; drew " + cfg.flawed_bands[*band].tag() +
                              " by weight");
        } else {
            --quota[*band];
        }
        const auto& pool = candidates[q][*band];
        flawed[q] = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        flawed_band[q] = *band;
    }

    for (std::size_t q = 0; q < queries.size(); ++q) {
        if (!best[q]) {
            out.log.push_back(queries[q].id + ": no scored trace; skipped for summary SFT");
            continue;
        }
        out.records.push_back(summary_record(prompts, queries[q], best[q]->trace, "optimal", queries[q].id + ":optimal"));
        if (flawed[q]) {
            const auto tag = cfg.flawed_bands[flawed_band[q]].tag();
            out.records.push_back(summary_record(prompts, queries[q], flawed[q]->trace, tag,
                                                 queries[q].id + ":flawed:" + std::to_string(flawed[q]->sample_index)));
        }
    }

    std::map<std::string, const QueryRecord*> by_id;
    for (const auto& q : queries) by_id[q.id] = &q;
    for (const auto& t : agent_traces) {
        const auto it = by_id.find(t.query_id);
        if (it == by_id.end() || !t.trace.complete) continue;
        out.records.push_back(summary_record(prompts, *it->second, t.trace, "agent-generated",
                                             t.query_id + ":agent:" + std::to_string(t.sample_index)));
    }

    auto wanted = general_qa_count(out.records.size(), cfg.general_qa_ratio);
    if (wanted > general_qa.size()) {
        out.log.push_back("general QA: wanted " + std::to_string(wanted) + " records, only " +
                          std::to_string(general_qa.size()) + " available");
        wanted = general_qa.size();
    }
    std::vector<std::size_t> idx(general_qa.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = keyed_rng("general-qa", cfg.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < wanted; ++k) {
        const auto& g = general_qa[idx[k]];
        SftRecord r;
        r.id = g.id + ":general";
        r.agent = "summary";
        r.provenance = "general";
        r.image_ref = g.image_ref;
        r.turns = {{"user", g.question}, {"assistant", g.answer}};
        out.records.push_back(std::move(r));
    }
    return out;
}

Curated<PairRecord> build_preference_pairs(const PromptSet& prompts, std::span<const QueryRecord> queries,
                                           std::span<const ScoredRecord> scored, const CurationConfig& cfg) {
    cfg.validate();
    Curated<PairRecord> out;
    const auto groups = group_scored(queries, scored);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto& id = queries[q].id;
        if (groups[q].empty()) {
            out.log.push_back(id + ": no scored trace; no pair");
            continue;
        }
        const auto& chosen = select_best_path(groups[q]);
        if (*chosen.score <= cfg.positive_threshold) {
            out.log.push_back(id + ": best score " + std::to_string(*chosen.score) + " not above threshold; no pair");
            continue;
        }
        const auto* rejected = select_rejected(groups[q], cfg);
        if (!rejected) {
            out.log.push_back(id + ": no path at or below threshold; no pair");
            continue;
        }
        out.records.push_back({id, generator::render_task(prompts, queries[q]), schema::render_generation(chosen.trace),
                               schema::render_generation(rejected->trace), *chosen.score, *rejected->score});
    }
    return out;
}

nlohmann::json chat_pair_layout(const PairRecord& pair) {
    using nlohmann::json;
    return {{"query_id", pair.query_id},
            {"prompt", json::array({{{"role", "user"}, {"content", pair.prompt}}})},
            {"chosen", json::array({{{"role", "assistant"}, {"content", pair.chosen}}})},
            {"rejected", json::array({{{"role", "assistant"}, {"content", pair.rejected}}})},
            {"chosen_score", pair.chosen_score},
            {"rejected_score", pair.rejected_score}};
}

}  // namespace chainsmith::curator
