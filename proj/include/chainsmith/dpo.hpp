#pragma once

#include <chainsmith/error.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chainsmith::dpo {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class NumericError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Logistic helpers

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    using std::exp;
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
    const Scalar e = exp(x);
    return e / (Scalar(1) + e);
}

/// log σ(x) without overflow for large |x|.
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
    using std::exp;
    using std::log1p;
    if (x >= Scalar(0)) return -log1p(exp(-x));
    return x - log1p(exp(x));
}

template <typename Scalar>
void require_finite(Scalar x, const char* what) {
    using std::isfinite;
    if (!isfinite(x)) throw NumericError(std::string(what) + " is not finite");
}

/// Bradley-Terry probability that the completion with reward r1 beats the one with reward r2.
template <typename Scalar>
Scalar bt_probability(Scalar r1, Scalar r2) {
    require_finite(r1, "reward");
    require_finite(r2, "reward");
    return sigmoid(r1 - r2);
}

/// Mean of -log σ(r_w - r_l) over (r_w, r_l) pairs.
template <typename Scalar>
Scalar reward_nll(std::span<const std::pair<Scalar, Scalar>> rewards) {
    if (rewards.empty()) throw Error("reward_nll: empty pair list");
    Scalar sum(0);
    for (const auto& [w, l] : rewards) {
        require_finite(w, "reward");
        require_finite(l, "reward");
        sum -= log_sigmoid(w - l);
    }
    return sum / static_cast<Scalar>(rewards.size());
}

// ---------------------------------------------------------------------------
// Tabular softmax policy

/// Row-wise log-softmax of a logits matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) {
        const Scalar m = logits.row(r).maxCoeff();
        const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
        out.row(r) = logits.row(r).array() - lse;
    }
    return out;
}

/// π(y | x) = softmax(logits.row(x))[y], one row per prompt, one column per completion.
template <typename Scalar = double>
struct ToyPolicy {
    Matrix<Scalar> logits;

    ToyPolicy() = default;
    explicit ToyPolicy(Matrix<Scalar> l) : logits(std::move(l)) {}
    static ToyPolicy uniform(Index prompts, Index vocab) { return ToyPolicy(Matrix<Scalar>::Zero(prompts, vocab)); }

    Index prompts() const noexcept { return logits.rows(); }
    Index vocab() const noexcept { return logits.cols(); }

    Matrix<Scalar> log_probs() const { return log_softmax_rows(logits); }
    Matrix<Scalar> probs() const { return log_probs().array().exp().matrix(); }

    Scalar log_prob(Index prompt, Index completion) const {
        check_indices(prompt, completion);
        const auto row = logits.row(prompt);
        const Scalar m = row.maxCoeff();
        return row(completion) - (m + std::log((row.array() - m).exp().sum()));
    }

    void check_indices(Index prompt, Index completion) const {
        if (prompt < 0 || prompt >= prompts()) throw Error("prompt id out of range");
        if (completion < 0 || completion >= vocab()) throw Error("completion id not in vocabulary");
    }

    void validate() const {
        if (logits.size() == 0) throw Error("toy policy has no entries");
        if (!logits.allFinite()) throw NumericError("toy policy logits are not finite");
    }

    bool operator==(const ToyPolicy& o) const {
        return logits.rows() == o.logits.rows() && logits.cols() == o.logits.cols() && logits == o.logits;
    }
};

/// One preference triple (x, y_w, y_l) over policy indices.
struct Preference {
    Index prompt = 0;
    Index chosen = 0;
    Index rejected = 0;

    bool operator==(const Preference&) const = default;
};

struct DpoConfig {
    double beta = 0.1;
    double sft_weight = 1.0;
    double learning_rate = 1.0;
    int epochs = 100;
    int rounds = 3;

    void validate() const {
        if (!(beta > 0.0)) throw ConfigError("dpo.beta", "must be positive");
        if (!(sft_weight >= 0.0)) throw ConfigError("dpo.sft_weight", "must be non-negative");
        if (!(learning_rate >= 0.0)) throw ConfigError("dpo.learning_rate", "must be non-negative");
        if (epochs < 0) throw ConfigError("dpo.epochs", "must be non-negative");
        if (rounds < 1) throw ConfigError("dpo.rounds", "must be at least 1");
    }
};

/// β · (log π(y|x) − log π_ref(y|x)).
template <typename Scalar>
Scalar implicit_reward(const ToyPolicy<Scalar>& policy, const ToyPolicy<Scalar>& reference, Index prompt,
                       Index completion, Scalar beta) {
    using std::isinf;
    const Scalar ref = reference.log_prob(prompt, completion);
    if (isinf(ref)) throw NumericError("reference assigns zero probability to the completion");
    return beta * (policy.log_prob(prompt, completion) - ref);
}

namespace detail {

template <typename Scalar>
void check_pairs(const ToyPolicy<Scalar>& policy, const ToyPolicy<Scalar>& reference,
                 std::span<const Preference> pairs) {
    if (pairs.empty()) throw Error("preference pair list is empty");
    if (policy.prompts() != reference.prompts() || policy.vocab() != reference.vocab())
        throw Error("policy and reference shapes differ");
    for (const auto& p : pairs) {
        policy.check_indices(p.prompt, p.chosen);
        policy.check_indices(p.prompt, p.rejected);
    }
}

}  // namespace detail

/// Per-pair margin β[(log π − log π_ref)(y_w) − (log π − log π_ref)(y_l)].
template <typename Scalar>
std::vector<Scalar> implicit_margins(const ToyPolicy<Scalar>& policy, const ToyPolicy<Scalar>& reference,
                                     std::span<const Preference> pairs, Scalar beta) {
    detail::check_pairs(policy, reference, pairs);
    const auto lp = policy.log_probs();
    const auto lr = reference.log_probs();
    std::vector<Scalar> m;
    m.reserve(pairs.size());
    for (const auto& p : pairs) {
        const Scalar rw = beta * (lp(p.prompt, p.chosen) - lr(p.prompt, p.chosen));
        const Scalar rl = beta * (lp(p.prompt, p.rejected) - lr(p.prompt, p.rejected));
        require_finite(rw, "implicit reward");
        require_finite(rl, "implicit reward");
        m.push_back(rw - rl);
    }
    return m;
}

/// Bradley-Terry NLL over implicit rewards plus sft_weight · mean NLL of the chosen completions.
template <typename Scalar>
Scalar dpo_loss(const ToyPolicy<Scalar>& policy, const ToyPolicy<Scalar>& reference,
                std::span<const Preference> pairs, const DpoConfig& cfg) {
    const Scalar beta(cfg.beta);
    const auto margins = implicit_margins(policy, reference, pairs, beta);
    const auto lp = policy.log_probs();
    Scalar pref(0), sft(0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pref -= log_sigmoid(margins[i]);
        sft -= lp(pairs[i].prompt, pairs[i].chosen);
    }
    const auto n = static_cast<Scalar>(pairs.size());
    return pref / n + Scalar(cfg.sft_weight) * sft / n;
}

/// Analytic ∂dpo_loss/∂logits of the policy (reference held fixed).
template <typename Scalar>
Matrix<Scalar> dpo_gradient(const ToyPolicy<Scalar>& policy, const ToyPolicy<Scalar>& reference,
                            std::span<const Preference> pairs, const DpoConfig& cfg) {
    const Scalar beta(cfg.beta);
    const auto margins = implicit_margins(policy, reference, pairs, beta);
    const auto p = policy.probs();
    const auto n = static_cast<Scalar>(pairs.size());
    const Scalar w_sft = Scalar(cfg.sft_weight);
    Matrix<Scalar> g = Matrix<Scalar>::Zero(policy.prompts(), policy.vocab());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pr = pairs[i];
        // d(-log σ(m))/dm = -σ(-m); dm/dθ_x = β(e_w - e_l): the softmax normalizers cancel.
        const Scalar coeff = -sigmoid(-margins[i]) * beta / n;
        g(pr.prompt, pr.chosen) += coeff;
        g(pr.prompt, pr.rejected) -= coeff;
        // d(-log π(w|x))/dθ_x = π_x - e_w
        g.row(pr.prompt) += (w_sft / n) * p.row(pr.prompt);
        g(pr.prompt, pr.chosen) -= w_sft / n;
    }
    return g;
}

template <typename Scalar>
struct TrainResult {
    ToyPolicy<Scalar> policy;
    std::vector<Scalar> loss_curve;  // loss before each epoch, then the final loss
};

/// Full-batch gradient descent on dpo_loss with the reference frozen at the starting policy.
template <typename Scalar>
TrainResult<Scalar> train_round(const ToyPolicy<Scalar>& start, std::span<const Preference> pairs,
                                const DpoConfig& cfg) {
    cfg.validate();
    start.validate();
    const ToyPolicy<Scalar> reference = start;
    TrainResult<Scalar> out{start, {}};
    out.loss_curve.reserve(cfg.epochs + 1);
    for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
        const Scalar loss = dpo_loss(out.policy, reference, pairs, cfg);
        using std::isfinite;
        if (!isfinite(loss))
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (loss not finite)");
        out.loss_curve.push_back(loss);
        if (epoch == cfg.epochs) break;
        if (cfg.learning_rate == 0.0) continue;
        out.policy.logits -= Scalar(cfg.learning_rate) * dpo_gradient(out.policy, reference, pairs, cfg);
        if (!out.policy.logits.allFinite())
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (logits not finite)");
    }
    return out;
}

template <typename Scalar>
Scalar mean(const std::vector<Scalar>& v) {
    if (v.empty()) return Scalar(0);
    Scalar s(0);
    for (auto x : v) s += x;
    return s / static_cast<Scalar>(v.size());
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Central differences of dpo_loss with respect to each policy logit.
template <typename Scalar>
Matrix<Scalar> numeric_gradient(const ToyPolicy<Scalar>& policy, const ToyPolicy<Scalar>& reference,
                                std::span<const Preference> pairs, const DpoConfig& cfg, Scalar h) {
    Matrix<Scalar> g(policy.prompts(), policy.vocab());
    ToyPolicy<Scalar> probe = policy;
    for (Index r = 0; r < g.rows(); ++r)
        for (Index c = 0; c < g.cols(); ++c) {
            const Scalar orig = probe.logits(r, c);
            probe.logits(r, c) = orig + h;
            const Scalar up = dpo_loss(probe, reference, pairs, cfg);
            probe.logits(r, c) = orig - h;
            const Scalar down = dpo_loss(probe, reference, pairs, cfg);
            probe.logits(r, c) = orig;
            g(r, c) = (up - down) / (Scalar(2) * h);
        }
    return g;
}

/// max_ij |a-b| / max(|a|, |b|); entries where both are below `zero_floor` count as agreeing zeros.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar max_relative_error(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                                             typename DerivedA::Scalar zero_floor = 1e-10) {
    using Scalar = typename DerivedA::Scalar;
    Scalar worst(0);
    for (Index r = 0; r < a.rows(); ++r)
        for (Index c = 0; c < a.cols(); ++c) {
            const Scalar scale = std::max(std::abs(a(r, c)), std::abs(b(r, c)));
            if (scale < zero_floor) continue;
            worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / scale);
        }
    return worst;
}

// ---------------------------------------------------------------------------
// Iterative DPO

/// Completions sampled from the current policy, one list per prompt.
using CompletionSampler = std::function<std::vector<std::vector<Index>>(const ToyPolicy<double>& policy, int round)>;
/// true when completion a is preferred over b for the prompt; nullopt for no preference.
using PreferenceJudge = std::function<std::optional<bool>(Index prompt, Index a, Index b)>;

struct RoundState {
    int round = 1;  // 1-based
    ToyPolicy<double> reference;
    ToyPolicy<double> policy;
    std::string reference_digest;
    std::string policy_digest;
    std::vector<Preference> pairs;
    std::vector<double> loss_curve;
    double train_margin_before = 0.0;  // mean implicit margin on this round's pairs, vs this round's reference
    double train_margin_after = 0.0;
    double heldout_margin = 0.0;  // mean implicit margin on held-out pairs, vs the initial policy
    double heldout_accuracy = 0.0;
};

/// Labels every distinct sampled completion pair per prompt with the judge.
std::vector<Preference> label_pairs(const std::vector<std::vector<Index>>& samples, const PreferenceJudge& judge);

/// Fraction of pairs whose chosen completion has the higher policy log-probability.
double preference_accuracy(const ToyPolicy<double>& policy, std::span<const Preference> pairs);

/// Rounds t = 1..cfg.rounds: sample from M_t, label with the judge, train M_{t+1} with M_t as the reference.
std::vector<RoundState> iterative_dpo(const ToyPolicy<double>& initial, const CompletionSampler& sampler,
                                      const PreferenceJudge& judge, const DpoConfig& cfg,
                                      std::span<const Preference> heldout = {});

/// Fixed synthetic preference task: a utility per (prompt, completion), higher preferred.
struct SyntheticTask {
    Matrix<double> utility;
    std::vector<Preference> heldout;
    int samples_per_prompt = 4;
    std::uint64_t seed = 0;

    static SyntheticTask make(Index prompts, Index vocab, int samples_per_prompt, std::uint64_t seed);

    ToyPolicy<double> initial_policy() const;
    PreferenceJudge judge() const;
    /// Draws samples_per_prompt distinct completions per prompt from the policy (Gumbel top-k).
    CompletionSampler sampler() const;
};

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const ToyPolicy<double>& policy);
ToyPolicy<double> policy_from_json(const nlohmann::json& j);
std::string policy_digest(const ToyPolicy<double>& policy);
nlohmann::json round_report(std::span<const RoundState> rounds, const DpoConfig& cfg);

// ---------------------------------------------------------------------------
// Verification suite

struct VerificationReport {
    int instances = 0;
    double max_gradient_relative_error = 0.0;
    double max_ln2_residual = 0.0;
    double bt_value = 0.0;  // bt_probability(2, 0)
    double gradient_tolerance = 1e-5;
    double ln2_tolerance = 1e-12;

    bool passed() const;
    nlohmann::json to_json() const;
};

/// Random 3-prompt, 4-completion instances: analytic vs central-difference gradients (h = 1e-5)
/// and the ln 2 identity at policy == reference with no SFT term.
VerificationReport run_verification(int instances, std::uint64_t seed);

}  // namespace chainsmith::dpo
