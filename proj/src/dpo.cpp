#include <chainsmith/digest.hpp>
#include <chainsmith/dpo.hpp>

#include <algorithm>
#include <numbers>
#include <numeric>
#include <random>

namespace chainsmith::dpo {

using nlohmann::json;

std::vector<Preference> label_pairs(const std::vector<std::vector<Index>>& samples, const PreferenceJudge& judge) {
    std::vector<Preference> pairs;
    for (std::size_t x = 0; x < samples.size(); ++x) {
        auto drawn = samples[x];
        std::sort(drawn.begin(), drawn.end());
        drawn.erase(std::unique(drawn.begin(), drawn.end()), drawn.end());
        for (std::size_t i = 0; i < drawn.size(); ++i)
            for (std::size_t j = i + 1; j < drawn.size(); ++j) {
                const auto prompt = static_cast<Index>(x);
                const auto verdict = judge(prompt, drawn[i], drawn[j]);
                if (!verdict) continue;
                if (*verdict)
                    pairs.push_back({prompt, drawn[i], drawn[j]});
                else
                    pairs.push_back({prompt, drawn[j], drawn[i]});
            }
    }
    return pairs;
}

double preference_accuracy(const ToyPolicy<double>& policy, std::span<const Preference> pairs) {
    if (pairs.empty()) return 0.0;
    const auto lp = policy.log_probs();
    std::size_t hits = 0;
    for (const auto& p : pairs)
        if (lp(p.prompt, p.chosen) > lp(p.prompt, p.rejected)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::vector<RoundState> iterative_dpo(const ToyPolicy<double>& initial, const CompletionSampler& sampler,
                                      const PreferenceJudge& judge, const DpoConfig& cfg,
                                      std::span<const Preference> heldout) {
    cfg.validate();
    initial.validate();
    std::vector<RoundState> states;
    ToyPolicy<double> current = initial;
    for (int t = 1; t <= cfg.rounds; ++t) {
        RoundState s;
        s.round = t;
        s.reference = current;
        s.reference_digest = policy_digest(current);
        s.pairs = label_pairs(sampler(current, t), judge);
        if (s.pairs.empty()) throw Error("round " + std::to_string(t) + ": sampler produced no preference pairs");
        auto trained = train_round(current, std::span<const Preference>(s.pairs), cfg);
        s.policy = std::move(trained.policy);
        s.policy_digest = policy_digest(s.policy);
        s.loss_curve = std::move(trained.loss_curve);
        s.train_margin_before = mean(implicit_margins(current, current, std::span<const Preference>(s.pairs), cfg.beta));
        s.train_margin_after = mean(implicit_margins(s.policy, current, std::span<const Preference>(s.pairs), cfg.beta));
        if (!heldout.empty()) {
            s.heldout_margin = mean(implicit_margins(s.policy, initial, heldout, cfg.beta));
            s.heldout_accuracy = preference_accuracy(s.policy, heldout);
        }
        current = s.policy;
        states.push_back(std::move(s));
    }
    return states;
}

SyntheticTask SyntheticTask::make(Index prompts, Index vocab, int samples_per_prompt, std::uint64_t seed) {
    if (prompts < 1 || vocab < 2) throw Error("synthetic task needs at least one prompt and two completions");
    SyntheticTask task;
    task.seed = seed;
    task.samples_per_prompt = samples_per_prompt;
    task.utility.resize(prompts, vocab);
    std::mt19937_64 rng(seed);
    std::vector<double> ranks(vocab);
    std::iota(ranks.begin(), ranks.end(), 0.0);
    for (Index x = 0; x < prompts; ++x) {
        std::shuffle(ranks.begin(), ranks.end(), rng);
        for (Index y = 0; y < vocab; ++y) task.utility(x, y) = ranks[y];
    }
    for (Index x = 0; x < prompts; ++x)
        for (Index a = 0; a < vocab; ++a)
            for (Index b = 0; b < vocab; ++b)
                if (task.utility(x, a) > task.utility(x, b)) task.heldout.push_back({x, a, b});
    return task;
}

ToyPolicy<double> SyntheticTask::initial_policy() const {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, 0.5);
    Matrix<double> logits(utility.rows(), utility.cols());
    for (Index i = 0; i < logits.size(); ++i) logits.data()[i] = noise(rng);
    return ToyPolicy<double>(std::move(logits));
}

PreferenceJudge SyntheticTask::judge() const {
    return [u = utility](Index x, Index a, Index b) -> std::optional<bool> {
        if (u(x, a) == u(x, b)) return std::nullopt;
        return u(x, a) > u(x, b);
    };
}

CompletionSampler SyntheticTask::sampler() const {
    return [k = samples_per_prompt, base = seed](const ToyPolicy<double>& policy, int round) {
        std::mt19937_64 rng(base * 1000003ULL + static_cast<std::uint64_t>(round));
        std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
        const auto lp = policy.log_probs();
        std::vector<std::vector<Index>> out(policy.prompts());
        for (Index x = 0; x < policy.prompts(); ++x) {
            std::vector<std::pair<double, Index>> keys;
            for (Index y = 0; y < policy.vocab(); ++y) keys.emplace_back(lp(x, y) - std::log(-std::log(unif(rng))), y);
            std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
            const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), keys.size());
            for (std::size_t i = 0; i < take; ++i) out[x].push_back(keys[i].second);
        }
        return out;
    };
}

json to_json(const ToyPolicy<double>& policy) {
    json rows = json::array();
    for (Index r = 0; r < policy.prompts(); ++r) {
        json row = json::array();
        for (Index c = 0; c < policy.vocab(); ++c) row.push_back(policy.logits(r, c));
        rows.push_back(std::move(row));
    }
    return {{"prompts", policy.prompts()}, {"vocab", policy.vocab()}, {"logits", std::move(rows)}};
}

ToyPolicy<double> policy_from_json(const json& j) {
    const auto prompts = j.at("prompts").get<Index>();
    const auto vocab = j.at("vocab").get<Index>();
    const auto& rows = j.at("logits");
    if (static_cast<Index>(rows.size()) != prompts) throw Error("policy JSON: row count mismatch");
    Matrix<double> logits(prompts, vocab);
    for (Index r = 0; r < prompts; ++r) {
        if (static_cast<Index>(rows[r].size()) != vocab) throw Error("policy JSON: column count mismatch");
        for (Index c = 0; c < vocab; ++c) logits(r, c) = rows[r][c].get<double>();
    }
    ToyPolicy<double> p(std::move(logits));
    p.validate();
    return p;
}

std::string policy_digest(const ToyPolicy<double>& policy) { return sha256_hex(to_json(policy).dump()); }

json round_report(std::span<const RoundState> rounds, const DpoConfig& cfg) {
    json out = {{"beta", cfg.beta},
                {"sft_weight", cfg.sft_weight},
                {"learning_rate", cfg.learning_rate},
                {"epochs", cfg.epochs},
                {"rounds", json::array()}};
    for (const auto& s : rounds) {
        out["rounds"].push_back({{"round", s.round},
                                 {"reference_digest", s.reference_digest},
                                 {"policy_digest", s.policy_digest},
                                 {"pairs", s.pairs.size()},
                                 {"loss_curve", s.loss_curve},
                                 {"margin",
                                  {{"train_before", s.train_margin_before},
                                   {"train_after", s.train_margin_after},
                                   {"heldout", s.heldout_margin}}},
                                 {"heldout_accuracy", s.heldout_accuracy},
                                 {"policy", to_json(s.policy)}});
    }
    return out;
}

bool VerificationReport::passed() const {
    return instances > 0 && max_gradient_relative_error < gradient_tolerance && max_ln2_residual <= ln2_tolerance &&
           std::abs(bt_value - 0.8807971) <= 1e-6;
}

json VerificationReport::to_json() const {
    return {{"instances", instances},
            {"max_gradient_relative_error", max_gradient_relative_error},
            {"gradient_tolerance", gradient_tolerance},
            {"max_ln2_residual", max_ln2_residual},
            {"ln2_tolerance", ln2_tolerance},
            {"bt_probability_2_0", bt_value},
            {"passed", passed()}};
}

VerificationReport run_verification(int instances, std::uint64_t seed) {
    VerificationReport rep;
    rep.instances = instances;
    rep.bt_value = bt_probability(2.0, 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<Index> prompt_dist(0, 2), vocab_dist(0, 3), count_dist(1, 8);
    std::uniform_real_distribution<double> weight_dist(0.0, 2.0);
    for (int i = 0; i < instances; ++i) {
        Matrix<double> a(3, 4), b(3, 4);
        for (Index k = 0; k < a.size(); ++k) a.data()[k] = normal(rng);
        for (Index k = 0; k < b.size(); ++k) b.data()[k] = normal(rng);
        const ToyPolicy<double> policy(a), reference(b);
        std::vector<Preference> pairs(count_dist(rng));
        for (auto& p : pairs) {
            p.prompt = prompt_dist(rng);
            p.chosen = vocab_dist(rng);
            do p.rejected = vocab_dist(rng);
            while (p.rejected == p.chosen);
        }
        DpoConfig cfg;
        cfg.sft_weight = weight_dist(rng);
        const auto analytic = dpo_gradient(policy, reference, std::span<const Preference>(pairs), cfg);
        const auto numeric = numeric_gradient(policy, reference, std::span<const Preference>(pairs), cfg, 1e-5);
        rep.max_gradient_relative_error = std::max(rep.max_gradient_relative_error, max_relative_error(analytic, numeric));

        DpoConfig no_sft = cfg;
        no_sft.sft_weight = 0.0;
        const double at_ref = dpo_loss(policy, policy, std::span<const Preference>(pairs), no_sft);
        rep.max_ln2_residual = std::max(rep.max_ln2_residual, std::abs(at_ref - std::numbers::ln2));
    }
    return rep;
}

}  // namespace chainsmith::dpo
