#include <chainsmith/dpo.hpp>

#include <doctest.h>

#include <numbers>
#include <random>
#include <set>

using namespace chainsmith;
using namespace chainsmith::dpo;
using Policy = ToyPolicy<double>;

namespace {

Policy random_policy(std::mt19937_64& rng, Index p, Index v, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix<double> m(p, v);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return Policy(m);
}

std::vector<Preference> random_pairs(std::mt19937_64& rng, Index p, Index v, int n) {
    std::uniform_int_distribution<Index> pd(0, p - 1), vd(0, v - 1);
    std::vector<Preference> out(static_cast<std::size_t>(n));
    for (auto& x : out) {
        x.prompt = pd(rng);
        x.chosen = vd(rng);
        do x.rejected = vd(rng);
        while (x.rejected == x.chosen);
    }
    return out;
}

// Loss recomputed from probabilities, without log-softmax or the stable log σ.
double naive_loss(const Policy& pol, const Policy& ref, const std::vector<Preference>& pairs, const DpoConfig& cfg) {
    const Matrix<double> p = pol.probs(), r = ref.probs();
    double sum = 0.0;
    for (const auto& x : pairs) {
        const double m = cfg.beta * (std::log(p(x.prompt, x.chosen) / r(x.prompt, x.chosen)) -
                                     std::log(p(x.prompt, x.rejected) / r(x.prompt, x.rejected)));
        sum += std::log(1.0 + std::exp(-m)) - cfg.sft_weight * std::log(p(x.prompt, x.chosen));
    }
    return sum / static_cast<double>(pairs.size());
}

}  // namespace

TEST_CASE("bt_probability examples") {
    CHECK(bt_probability(1.0, 1.0) == 0.5);
    CHECK(std::abs(bt_probability(2.0, 0.0) - 0.8807971) < 1e-6);
    CHECK(std::abs(bt_probability(2.0, 0.0) - 1.0 / (1.0 + std::exp(-2.0))) < 1e-15);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng);
        CHECK(std::abs(bt_probability(a, b) + bt_probability(b, a) - 1.0) <= 1e-15);
    }
}

TEST_CASE("sigmoid is stable at extreme margins") {
    for (double x : {-1000.0, -700.0, -30.0, 0.0, 30.0, 700.0, 1000.0}) {
        const double p = bt_probability(x, 0.0);
        CHECK(std::isfinite(p));
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        CHECK(std::isfinite(log_sigmoid(x)));
    }
    CHECK(bt_probability(-700.0, 0.0) > 0.0);
    CHECK(log_sigmoid(-1000.0) == doctest::Approx(-1000.0));
    CHECK_THROWS_AS(bt_probability(std::numeric_limits<double>::infinity(), 0.0), NumericError);
    CHECK_THROWS_AS(bt_probability(0.0, std::nan("")), NumericError);
}

TEST_CASE("reward_nll examples") {
    const std::vector<std::pair<double, double>> equal{{1, 1}, {-3, -3}, {0.5, 0.5}};
    CHECK(std::abs(reward_nll<double>(equal) - std::numbers::ln2) < 1e-15);
    const std::vector<std::pair<double, double>> wide{{10, -10}};
    CHECK(reward_nll<double>(wide) == doctest::Approx(2.0611536e-9).epsilon(1e-6));
    CHECK(std::abs(reward_nll<double>(wide) - std::log1p(std::exp(-20.0))) < 1e-22);
    double prev = std::numeric_limits<double>::infinity();
    for (double m = -20; m <= 20; m += 0.5) {
        const std::vector<std::pair<double, double>> one{{m, 0.0}};
        const double loss = reward_nll<double>(one);
        CHECK(loss < prev);
        prev = loss;
    }
    CHECK_THROWS(reward_nll<double>(std::span<const std::pair<double, double>>{}));
    const std::vector<std::pair<double, double>> bad{{std::nan(""), 0.0}};
    CHECK_THROWS_AS(reward_nll<double>(bad), NumericError);
}

TEST_CASE("implicit_reward examples") {
    std::mt19937_64 rng(2);
    const auto pol = random_policy(rng, 3, 4);
    for (Index x = 0; x < 3; ++x)
        for (Index y = 0; y < 4; ++y) CHECK(implicit_reward(pol, pol, x, y, 0.1) == 0.0);

    // Reference uniform over 4 (π_ref = 1/4); policy gives y = 0 probability 1/2.
    const auto ref = Policy::uniform(1, 4);
    Matrix<double> l(1, 4);
    l << std::log(0.5), std::log(0.5 / 3), std::log(0.5 / 3), std::log(0.5 / 3);
    CHECK(std::abs(implicit_reward(Policy(l), ref, 0, 0, 0.1) - 0.0693147) < 1e-7);
    CHECK(std::abs(implicit_reward(Policy(l), ref, 0, 0, 0.1) - 0.1 * std::numbers::ln2) < 1e-15);

    // Shift invariance: per-prompt constants added to either policy.
    const auto other = random_policy(rng, 3, 4);
    auto shifted_pol = pol, shifted_ref = other;
    for (Index x = 0; x < 3; ++x) {
        shifted_pol.logits.row(x).array() += 3.0 * static_cast<double>(x) - 1.7;
        shifted_ref.logits.row(x).array() -= 11.0 * static_cast<double>(x + 1);
    }
    for (Index x = 0; x < 3; ++x)
        for (Index y = 0; y < 4; ++y)
            CHECK(implicit_reward(shifted_pol, shifted_ref, x, y, 0.1) ==
                  doctest::Approx(implicit_reward(pol, other, x, y, 0.1)).epsilon(1e-12));

    Matrix<double> zero(1, 2);
    zero << 0.0, -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(implicit_reward(Policy::uniform(1, 2), Policy(zero), 0, 1, 0.1), NumericError);
    CHECK_THROWS(implicit_reward(pol, pol, 0, 4, 0.1));
    CHECK_THROWS(implicit_reward(pol, pol, 3, 0, 0.1));
}

TEST_CASE("policy rows are distributions") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const auto p = random_policy(rng, 5, 7, 10.0);
        const Matrix<double> probs = p.probs();
        for (Index r = 0; r < 5; ++r) CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-12);
    }
    // Huge logits do not overflow the normalizer.
    Matrix<double> big(1, 3);
    big << 1000.0, 999.0, -1000.0;
    CHECK(Policy(big).probs().allFinite());
    CHECK_THROWS_AS(Policy(Matrix<double>::Constant(1, 2, std::nan(""))).validate(), NumericError);
}

TEST_CASE("dpo_loss examples") {
    std::mt19937_64 rng(4);
    DpoConfig no_sft;
    no_sft.sft_weight = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto p = random_policy(rng, 3, 4);
        const auto pairs = random_pairs(rng, 3, 4, 1 + i);
        CHECK(std::abs(dpo_loss(p, p, std::span<const Preference>(pairs), no_sft) - std::numbers::ln2) <= 1e-12);
    }

    // Two completions, reference uniform, policy puts 1 - eps on the chosen one.
    for (double eps : {0.1, 1e-3, 1e-6}) {
        Matrix<double> l(1, 2);
        l << std::log(1 - eps), std::log(eps);
        const std::vector<Preference> pairs{{0, 0, 1}};
        const double m = 0.1 * std::log((1 - eps) / eps);
        CHECK(dpo_loss(Policy(l), Policy::uniform(1, 2), std::span<const Preference>(pairs), no_sft) ==
              doctest::Approx(std::log1p(std::exp(-m))).epsilon(1e-12));
    }

    // Additivity of the SFT term and agreement with a naive recomputation.
    for (int i = 0; i < 20; ++i) {
        const auto p = random_policy(rng, 3, 4), r = random_policy(rng, 3, 4);
        const auto pairs = random_pairs(rng, 3, 4, 5);
        const auto sp = std::span<const Preference>(pairs);
        DpoConfig with;
        double nll = 0.0;
        for (const auto& x : pairs) nll -= p.log_prob(x.prompt, x.chosen);
        nll /= static_cast<double>(pairs.size());
        CHECK(dpo_loss(p, r, sp, with) == doctest::Approx(dpo_loss(p, r, sp, no_sft) + nll).epsilon(1e-12));
        CHECK(dpo_loss(p, r, sp, with) == doctest::Approx(naive_loss(p, r, pairs, with)).epsilon(1e-10));
    }
    const std::vector<Preference> bad{{0, 0, 9}};
    CHECK_THROWS(dpo_loss(Policy::uniform(1, 2), Policy::uniform(1, 2), std::span<const Preference>(bad), no_sft));
    CHECK_THROWS(dpo_loss(Policy::uniform(1, 2), Policy::uniform(2, 2), std::span<const Preference>{}, no_sft));
}

TEST_CASE("dpo_gradient matches central differences") {
    std::mt19937_64 rng(5);
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
        const auto p = random_policy(rng, 3, 4), r = random_policy(rng, 3, 4);
        const auto pairs = random_pairs(rng, 3, 4, 1 + i % 8);
        DpoConfig cfg;
        cfg.sft_weight = (i % 3) * 0.75;
        const auto g = dpo_gradient(p, r, std::span<const Preference>(pairs), cfg);
        // Central differences written out against the naive loss.
        Matrix<double> fd(3, 4);
        for (Index a = 0; a < 3; ++a)
            for (Index b = 0; b < 4; ++b) {
                auto up = p, down = p;
                up.logits(a, b) += h;
                down.logits(a, b) -= h;
                fd(a, b) = (naive_loss(up, r, pairs, cfg) - naive_loss(down, r, pairs, cfg)) / (2 * h);
            }
        CHECK(max_relative_error(g, fd) < 1e-5);
        CHECK(max_relative_error(g, numeric_gradient(p, r, std::span<const Preference>(pairs), cfg, h)) < 1e-5);
    }
    const auto report = run_verification(100, 20240601);
    CHECK(report.passed());
    CHECK(report.max_gradient_relative_error < 1e-5);
    CHECK(report.max_ln2_residual <= 1e-12);
}

TEST_CASE("dpo_gradient structural zeros") {
    std::mt19937_64 rng(6);
    const auto p = random_policy(rng, 3, 4);
    DpoConfig no_sft;
    no_sft.sft_weight = 0.0;
    std::vector<Preference> sym;
    for (auto x : random_pairs(rng, 3, 4, 6)) {
        sym.push_back(x);
        sym.push_back({x.prompt, x.rejected, x.chosen});
    }
    CHECK(dpo_gradient(p, p, std::span<const Preference>(sym), no_sft).cwiseAbs().maxCoeff() < 1e-17);

    const auto r = random_policy(rng, 3, 4);
    const std::vector<Preference> only_row1{{1, 0, 2}, {1, 3, 1}};
    const auto g = dpo_gradient(p, r, std::span<const Preference>(only_row1), DpoConfig{});
    CHECK(g.row(0).isZero(0.0));
    CHECK(g.row(2).isZero(0.0));
    CHECK_FALSE(g.row(1).isZero(0.0));
}

TEST_CASE("train_round descends and improves the margin") {
    const auto task = SyntheticTask::make(4, 5, 5, 9);
    const auto start = task.initial_policy();
    const auto pairs = label_pairs(task.sampler()(start, 1), task.judge());
    const auto sp = std::span<const Preference>(pairs);
    DpoConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 200;
    const auto out = train_round(start, sp, cfg);
    REQUIRE(out.loss_curve.size() == 201);
    for (std::size_t i = 1; i < out.loss_curve.size(); ++i) CHECK(out.loss_curve[i] <= out.loss_curve[i - 1]);
    CHECK(out.loss_curve.back() < out.loss_curve.front());
    CHECK(mean(implicit_margins(out.policy, start, sp, cfg.beta)) > mean(implicit_margins(start, start, sp, cfg.beta)));

    cfg.learning_rate = 0.0;
    CHECK(train_round(start, sp, cfg).policy == start);
    cfg.learning_rate = std::numeric_limits<double>::max();
    cfg.epochs = 5;
    CHECK_THROWS_AS(train_round(start, sp, cfg), NumericError);
    CHECK_THROWS(train_round(start, std::span<const Preference>{}, DpoConfig{}));
}

TEST_CASE("iterative_dpo threads the reference through rounds") {
    const auto task = SyntheticTask::make(8, 6, 6, 1);
    const auto initial = task.initial_policy();
    DpoConfig cfg;
    const auto rounds = iterative_dpo(initial, task.sampler(), task.judge(), cfg, task.heldout);
    REQUIRE(rounds.size() == 3);
    CHECK(rounds[0].reference == initial);
    CHECK(rounds[0].reference_digest == policy_digest(initial));
    for (std::size_t t = 1; t < rounds.size(); ++t) {
        CHECK(rounds[t].round == static_cast<int>(t + 1));
        CHECK(rounds[t].reference_digest == rounds[t - 1].policy_digest);
        CHECK(rounds[t].reference == rounds[t - 1].policy);
        CHECK(rounds[t].heldout_accuracy >= rounds[t - 1].heldout_accuracy);
        CHECK(rounds[t].heldout_margin > rounds[t - 1].heldout_margin);
    }
    CHECK(rounds.back().heldout_accuracy >= 0.95);
    for (const auto& r : rounds) CHECK(r.train_margin_after > r.train_margin_before);

    // T = 1 is one train_round on the first round's pairs.
    cfg.rounds = 1;
    const auto one = iterative_dpo(initial, task.sampler(), task.judge(), cfg);
    REQUIRE(one.size() == 1);
    CHECK(one[0].policy == train_round(initial, std::span<const Preference>(one[0].pairs), cfg).policy);
    CHECK(one[0].pairs == rounds[0].pairs);

    const PreferenceJudge indifferent = [](Index, Index, Index) { return std::optional<bool>{}; };
    CHECK_THROWS(iterative_dpo(initial, task.sampler(), indifferent, cfg));
}

TEST_CASE("synthetic task and sampling") {
    const auto task = SyntheticTask::make(3, 5, 3, 4);
    CHECK(task.heldout.size() == 3 * 10);
    for (const auto& p : task.heldout) CHECK(task.utility(p.prompt, p.chosen) > task.utility(p.prompt, p.rejected));
    const auto samples = task.sampler()(task.initial_policy(), 1);
    REQUIRE(samples.size() == 3);
    for (const auto& s : samples) {
        CHECK(s.size() == 3);
        CHECK(std::set<Index>(s.begin(), s.end()).size() == 3);
    }
    CHECK(samples == task.sampler()(task.initial_policy(), 1));
    CHECK(label_pairs(samples, task.judge()).size() == 9);
    CHECK(preference_accuracy(Policy(task.utility), task.heldout) == 1.0);
    CHECK(preference_accuracy(Policy(-task.utility), task.heldout) == 0.0);
}

TEST_CASE("policy serialization and config validation") {
    std::mt19937_64 rng(8);
    const auto p = random_policy(rng, 2, 3);
    CHECK(policy_from_json(nlohmann::json::parse(to_json(p).dump())) == p);
    CHECK(policy_digest(p) == policy_digest(policy_from_json(to_json(p))));
    auto j = to_json(p);
    j["logits"][0].erase(0);
    CHECK_THROWS(policy_from_json(j));

    DpoConfig c;
    CHECK(c.beta == 0.1);
    CHECK(c.sft_weight == 1.0);
    c.beta = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.rounds = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.sft_weight = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
