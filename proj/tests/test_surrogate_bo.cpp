#include <cmath>

#include "catch_amalgamated.hpp"
#include "metaopt/error.hpp"
#include "metaopt/random.hpp"
#include "metaopt/surrogate_bo.hpp"
#include "oracles.hpp"

using namespace metaopt;
using namespace metaopt::bo;
using namespace metaopt::space;
using Catch::Approx;

namespace {

SearchSpace lr_space() { return SearchSpace({ParamSpec::real("lr", 1e-5, 1e-2, Scale::log)}); }

SearchSpace unit_space() { return SearchSpace({ParamSpec::real("x", 0.0, 1.0)}); }

BoOptions options(std::size_t n_init, std::size_t n_total, std::uint64_t seed) {
    BoOptions o;
    o.n_init = n_init;
    o.n_total = n_total;
    o.seed = seed;
    return o;
}

Trial trial(const std::string& id, double x, std::optional<double> loss) {
    Trial t;
    t.trial_id = id;
    t.config.assignments["x"] = x;
    t.loss = loss;
    return t;
}

double matern_oracle(const std::vector<double>& a, const std::vector<double>& b, const KernelParams& k) {
    double r2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) r2 += std::pow((a[i] - b[i]) / k.length_scales[i], 2);
    const double r = std::sqrt(r2);
    return k.signal_variance * (1 + std::sqrt(5.0) * r + 5.0 * r2 / 3.0) * std::exp(-std::sqrt(5.0) * r);
}

}  // namespace

TEST_CASE("log-scale encoding") {
    HyperparamConfig c;
    c.assignments["lr"] = 1e-5;
    CHECK(encode(lr_space(), c)[0] == Approx(0.0).margin(1e-15));
    c.assignments["lr"] = std::pow(10.0, -3.5);
    CHECK(encode(lr_space(), c)[0] == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("categorical one-hot encoding") {
    const auto space = default_bilstm_space();
    const auto c = sample_uniform(space, 3);
    const auto x = encode(space, c);
    CHECK(x.size() == encoded_dimension(space));
    CHECK(encoded_dimension(space) == 6 + 5 + 5);
    // optimizer block is the last five coordinates
    int ones = 0;
    for (std::size_t i = x.size() - 5; i < x.size(); ++i) {
        CHECK((x[i] == 0.0 || x[i] == 1.0) == true);
        ones += x[i] == 1.0 ? 1 : 0;
    }
    CHECK(ones == 1);
}

TEST_CASE("property: decode inverts encode") {
    const auto space = default_bilstm_space();
    for (std::uint64_t s = 0; s < 500; ++s) {
        const auto c = sample_uniform(space, s);
        const auto back = decode(space, encode(space, c));
        REQUIRE(validate_config(space, back).ok());
        for (const auto& p : space.params()) {
            if (p.kind == ParamKind::real_range) {
                CHECK(back.number(p.name) == Approx(c.number(p.name)).epsilon(1e-9));
            } else {
                CHECK(back.at(p.name) == c.at(p.name));
            }
        }
    }
}

TEST_CASE("decode clamps and rounds arbitrary points") {
    const auto space = default_bilstm_space();
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> x(encoded_dimension(space));
        for (double& v : x) v = rng.uniform(-0.5, 1.5);
        CHECK(validate_config(space, decode(space, x)).ok());
    }
}

TEST_CASE("Matern 5/2 kernel matches the closed form") {
    KernelParams k{{0.3, 1.7}, 2.5, 1e-3};
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> a{rng.uniform(), rng.uniform()}, b{rng.uniform(), rng.uniform()};
        CHECK(matern52(a, b, k) == Approx(matern_oracle(a, b, k)).epsilon(1e-12));
    }
    std::vector<double> a{0.2, 0.4};
    CHECK(matern52(a, a, k) == Approx(2.5));
}

TEST_CASE("log marginal likelihood matches the dense formula") {
    Eigen::MatrixXd x(4, 1);
    x << 0.1, 0.35, 0.6, 0.9;
    Eigen::VectorXd y(4);
    y << 0.5, -1.0, 0.3, 1.2;
    KernelParams k{{0.4}, 1.3, 0.05};
    Eigen::MatrixXd kk(4, 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) kk(i, j) = matern_oracle({x(i, 0)}, {x(j, 0)}, k) + (i == j ? 0.05 : 0.0);
    }
    const double expected = -0.5 * y.dot(kk.inverse() * y) - 0.5 * std::log(kk.determinant()) - 2.0 * std::log(2 * M_PI);
    CHECK(log_marginal_likelihood(x, y, k) == Approx(expected).epsilon(1e-6));
}

TEST_CASE("equal losses are interpolated") {
    const TrialHistory h{trial("a", 0.2, 1.5), trial("b", 0.7, 1.5)};
    const auto s = fit_surrogate(h, unit_space(), 0);
    for (double x : {0.2, 0.7}) {
        const std::vector<double> p{x};
        CHECK(s.destandardize(s.predict(p).mean) == Approx(1.5).margin(1e-3));
    }
}

TEST_CASE("refitting is deterministic") {
    const TrialHistory h{trial("a", 0.1, 3.0), trial("b", 0.5, 1.0), trial("c", 0.8, 2.0)};
    const auto s1 = fit_surrogate(h, unit_space(), 11);
    const auto s2 = fit_surrogate(h, unit_space(), 11);
    CHECK(s1.kernel() == s2.kernel());
}

TEST_CASE("surrogate needs two successful trials") {
    const TrialHistory h{trial("a", 0.1, 3.0), trial("b", 0.5, std::nullopt)};
    CHECK_THROWS_AS(fit_surrogate(h, unit_space(), 0), Error);
}

TEST_CASE("expected improvement closed form") {
    CHECK(expected_improvement(1.0, 0.0, 1.0) == 0.0);
    CHECK(expected_improvement(0.0, 0.0, 1.0) == Approx(1.0));
    CHECK(expected_improvement(1.0, 1.0, 1.0) == Approx(0.39894).margin(1e-5));
    for (double mu = -2; mu <= 2; mu += 0.25) {
        for (double sigma : {0.01, 0.3, 1.0, 4.0}) {
            const double ei = expected_improvement(mu, sigma, 0.4);
            CHECK(ei >= 0.0);
            CHECK(ei == Approx(static_cast<double>(oracle::expected_improvement(mu, sigma, 0.4))).epsilon(1e-10).margin(1e-14));
        }
    }
    CHECK(expected_improvement(1.0, 1e-9, 0.5) == Approx(0.0).margin(1e-12));
}

TEST_CASE("suggestion moves toward the better region") {
    const TrialHistory h{trial("a", 0.2, 1.0), trial("b", 0.9, 5.0)};
    const auto s = fit_surrogate(h, unit_space(), 0);
    const auto next = suggest_next(s, unit_space(), 1.0, 0);
    const double x = next.number("x");
    CHECK(std::abs(x - 0.2) < std::abs(x - 0.9));
    CHECK(suggest_next(s, unit_space(), 1.0, 0) == next);

    // The suggestion sits near the EI maximum found on a dense grid.
    double best_ei = -1, best_x = 0;
    for (int i = 0; i <= 10000; ++i) {
        const std::vector<double> p{i / 10000.0};
        const double ei = expected_improvement(s, p, 1.0);
        if (ei > best_ei) {
            best_ei = ei;
            best_x = p[0];
        }
    }
    const std::vector<double> chosen{x};
    CHECK(expected_improvement(s, chosen, 1.0) >= 0.95 * best_ei);
    CHECK(std::abs(x - best_x) < 0.1);
}

TEST_CASE("incumbent selection") {
    const TrialHistory h{trial("trial_3", 0.1, 1.09), trial("trial_4", 0.2, 1.09), trial("trial_1", 0.3, 1.42)};
    const auto inc = incumbent(h);
    CHECK(inc.loss == 1.09);
    CHECK(inc.trial_id == "trial_3");
    CHECK(incumbent({trial("one", 0.5, 2.0)}).trial_id == "one");
    CHECK_THROWS_AS(incumbent({trial("x", 0.1, std::nullopt)}), Error);
}

TEST_CASE("BO finds the minimum of a quadratic in encoded lr") {
    const auto space = lr_space();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Objective f = [&](const HyperparamConfig& c) {
            const double u = encode(space, c)[0];
            return EvalResult{(u - 0.3) * (u - 0.3)};
        };
        const auto r = run_bo(f, space, options(4, 20, seed));
        INFO("seed " << seed);
        CHECK(r.incumbent.loss <= 0.01);
        CHECK(r.history.size() == 20);
    }
}

TEST_CASE("n_total equal to n_init is random search") {
    const auto space = unit_space();
    const Objective f = [](const HyperparamConfig& c) { return EvalResult{c.number("x")}; };
    const auto r = run_bo(f, space, options(6, 6, 3));
    REQUIRE(r.history.size() == 6);
    double best = 1e9;
    for (const auto& t : r.history) {
        CHECK(t.origin == TrialOrigin::bo_init);
        best = std::min(best, *t.loss);
    }
    CHECK(r.incumbent.loss == best);
}

TEST_CASE("BO runs are reproducible, monotone and report every trial") {
    const auto space = default_bilstm_space();
    const Objective f = [&](const HyperparamConfig& c) {
        const auto x = encode(space, c);
        double s = 0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - 0.4) * (x[i] - 0.4) * (1.0 + 0.1 * i);
        return EvalResult{s, 0.01, 0.001};
    };
    std::vector<std::string> seen;
    BoOptions opts = options(5, 12, 9);
    opts.on_trial = [&](const Trial& t) { seen.push_back(t.trial_id); };
    const auto a = run_bo(f, space, opts);
    const auto b = run_bo(f, space, options(5, 12, 9));
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].config == b.history[i].config);
        CHECK(a.history[i].loss == b.history[i].loss);
    }
    REQUIRE(seen.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(seen[i] == "trial_" + std::to_string(i + 1));
        CHECK(a.history[i].origin == (i < 5 ? TrialOrigin::bo_init : TrialOrigin::bo_acquired));
    }
    const auto running = running_incumbent(a.history);
    for (std::size_t i = 1; i < running.size(); ++i) CHECK(*running[i] <= *running[i - 1]);
    CHECK(a.incumbent.loss == *running.back());
}

TEST_CASE("objective failures become failed trials") {
    const auto space = unit_space();
    int calls = 0;
    const Objective f = [&](const HyperparamConfig& c) {
        ++calls;
        if (calls % 3 == 0) throw Error(ErrorCode::NonFiniteLoss, "diverged");
        return EvalResult{c.number("x")};
    };
    const auto r = run_bo(f, space, options(4, 10, 1));
    CHECK(r.history.size() == 10);
    int failed = 0;
    for (const auto& t : r.history) {
        if (t.failed()) {
            ++failed;
            CHECK(t.diagnostics.find("diverged") != std::string::npos);
        }
    }
    CHECK(failed == 3);
}

TEST_CASE("all initial trials failing aborts") {
    const Objective f = [](const HyperparamConfig&) -> EvalResult { throw Error(ErrorCode::NonFiniteLoss, "x"); };
    try {
        (void)run_bo(f, unit_space(), options(5, 5, 0));
        FAIL("expected NoSuccessfulTrials");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoSuccessfulTrials);
    }
}

TEST_CASE("BO beats random search on a 2-D quadratic") {
    const SearchSpace space({ParamSpec::real("a", -5.0, 5.0), ParamSpec::real("b", -5.0, 5.0)});
    const Objective f = [](const HyperparamConfig& c) {
        const double a = c.number("a") - 1.3, b = c.number("b") + 0.7;
        return EvalResult{a * a + 2.0 * b * b};
    };
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto bo = run_bo(f, space, options(5, 25, seed));
        const auto random = run_bo(f, space, options(25, 25, seed));
        wins += bo.incumbent.loss < random.incumbent.loss ? 1 : 0;
    }
    CHECK(wins >= 4);
}
