#include <random>

#include "catch_amalgamated.hpp"
#include "metaopt/error.hpp"
#include "metaopt/search_space.hpp"

using namespace metaopt;
using namespace metaopt::space;
using nlohmann::json;

namespace {

HyperparamConfig config(const json& j) { return j.get<HyperparamConfig>(); }

bool mentions(const ValidationVerdict& v, const std::string& param, const std::string& fragment) {
    for (const auto& x : v.violations) {
        if (x.param == param && x.reason.find(fragment) != std::string::npos) return true;
    }
    return false;
}

const json kBaseline = {{"hidden_size", 5}, {"num_layers", 6}, {"dropout", 0.5}, {"lag", 3},
                        {"batch_size", 128}, {"epochs", 10}, {"lr", 1e-9}, {"optimizer", "Adam"}};

}  // namespace

TEST_CASE("baseline configuration with lr 1e-9 is rejected on the learning rate") {
    const auto v = validate_config(default_bilstm_space(), config(kBaseline));
    REQUIRE_FALSE(v.ok());
    CHECK(mentions(v, "lr", "below the minimum"));
    CHECK(mentions(v, "hidden_size", "below the minimum"));
}

TEST_CASE("negative learning rate is rejected") {
    json j = kBaseline;
    j["lr"] = -0.001;
    const auto v = validate_config(default_bilstm_space(), config(j));
    CHECK(mentions(v, "lr", "negative"));
}

TEST_CASE("published BO and LLM configurations validate") {
    const std::vector<json> rows = {
        {{"lag", 57}, {"hidden_size", 56}, {"num_layers", 1}, {"dropout", 0.50}, {"lr", 9.84e-3}, {"batch_size", 32}, {"epochs", 12}, {"optimizer", "Adamax"}},
        {{"lag", 46}, {"hidden_size", 118}, {"num_layers", 1}, {"dropout", 0.43}, {"lr", 3.58e-3}, {"batch_size", 64}, {"epochs", 19}, {"optimizer", "AdamW"}},
        {{"lag", 36}, {"hidden_size", 39}, {"num_layers", 1}, {"dropout", 0.27}, {"lr", 8.44e-4}, {"batch_size", 128}, {"epochs", 10}, {"optimizer", "AdamW"}},
        {{"lag", 12}, {"hidden_size", 64}, {"num_layers", 2}, {"dropout", 0.15}, {"lr", 1e-3}, {"batch_size", 64}, {"epochs", 40}, {"optimizer", "Adam"}},
        {{"lag", 16}, {"hidden_size", 48}, {"num_layers", 2}, {"dropout", 0.10}, {"lr", 1e-3}, {"batch_size", 64}, {"epochs", 30}, {"optimizer", "Adam"}},
        {{"lag", 12}, {"hidden_size", 64}, {"num_layers", 1}, {"dropout", 0.10}, {"lr", 1e-3}, {"batch_size", 64}, {"epochs", 40}, {"optimizer", "Adam"}},
        {{"lag", 24}, {"hidden_size", 50}, {"num_layers", 3}, {"dropout", 0.20}, {"lr", 1e-3}, {"batch_size", 64}, {"epochs", 100}, {"optimizer", "Adam"}},
        {{"lag", 24}, {"hidden_size", 100}, {"num_layers", 5}, {"dropout", 0.30}, {"lr", 5e-3}, {"batch_size", 128}, {"epochs", 200}, {"optimizer", "RMSprop"}},
    };
    for (const auto& r : rows) {
        INFO(r.dump());
        CHECK(validate_config(default_bilstm_space(), config(r)).ok());
    }
}

TEST_CASE("missing, unknown and mistyped parameters") {
    json j = kBaseline;
    j["lr"] = 1e-3;
    j.erase("optimizer");
    j["momentum"] = 0.9;
    j["epochs"] = 10.5;
    const auto v = validate_config(default_bilstm_space(), config(j));
    CHECK(mentions(v, "optimizer", "missing"));
    CHECK(mentions(v, "momentum", "unknown"));
    CHECK(mentions(v, "epochs", "integer"));
}

TEST_CASE("categorical values match exactly") {
    json j = kBaseline;
    j["lr"] = 1e-3;
    j["optimizer"] = "adam";
    CHECK(mentions(validate_config(default_bilstm_space(), config(j)), "optimizer", "choices"));
    j["optimizer"] = "Adam";
    j["batch_size"] = 100;
    CHECK(mentions(validate_config(default_bilstm_space(), config(j)), "batch_size", "choices"));
}

TEST_CASE("invalid spaces are rejected at construction") {
    auto code = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    CHECK(code([] { SearchSpace({}); }) == ErrorCode::InvalidSpace);
    CHECK(code([] { SearchSpace({ParamSpec::real("a", 1.0, 0.0)}); }) == ErrorCode::InvalidSpace);
    CHECK(code([] { SearchSpace({ParamSpec::real("a", 0.0, 1.0, Scale::log)}); }) == ErrorCode::InvalidSpace);
    CHECK(code([] { SearchSpace({ParamSpec::categorical("c", {})}); }) == ErrorCode::InvalidSpace);
    CHECK(code([] { SearchSpace({ParamSpec::integer("a", 0, 1), ParamSpec::integer("a", 0, 2)}); }) ==
          ErrorCode::InvalidSpace);
}

TEST_CASE("sampling is seeded and always valid") {
    const auto space = default_bilstm_space();
    CHECK(sample_uniform(space, 42) == sample_uniform(space, 42));
    CHECK_FALSE(sample_uniform(space, 42) == sample_uniform(space, 43));
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto c = sample_uniform(space, s);
        REQUIRE(validate_config(space, c).ok());
    }
}

TEST_CASE("single categorical choice is always sampled") {
    const SearchSpace space({ParamSpec::categorical("opt", {std::string("Adam")})});
    for (std::uint64_t s = 0; s < 50; ++s) CHECK(sample_uniform(space, s).label("opt") == "Adam");
}

TEST_CASE("log-scale sampling is uniform in the exponent") {
    const SearchSpace space({ParamSpec::real("lr", 1e-5, 1e-1, Scale::log)});
    int below = 0;
    const int n = 4000;
    for (int s = 0; s < n; ++s) below += sample_uniform(space, static_cast<std::uint64_t>(s)).number("lr") < 1e-3 ? 1 : 0;
    CHECK(std::abs(below / static_cast<double>(n) - 0.5) < 0.03);
}

TEST_CASE("trust region on an integer range rounds inward") {
    const SearchSpace space({ParamSpec::integer("epochs", 5, 200)});
    HyperparamConfig center;
    center.assignments["epochs"] = std::int64_t{40};
    const auto shrunk = apply_trust_region(space, {center, 0.25, CategoricalPolicy::any});
    // 40 +- 0.25 * 195 = [-8.75, 88.75], clipped to [5, 200].
    CHECK(shrunk.at("epochs").low == 5.0);
    CHECK(shrunk.at("epochs").high == 88.0);
}

TEST_CASE("full-width trust region keeps the numeric bounds") {
    const auto space = default_bilstm_space();
    json j = kBaseline;
    j["lr"] = 1e-3;
    j["hidden_size"] = 64;
    j["num_layers"] = 2;
    const auto shrunk = apply_trust_region(space, {config(j), 1.0, CategoricalPolicy::any});
    for (const auto& p : space.params()) {
        CHECK(shrunk.at(p.name).low == p.low);
        CHECK(shrunk.at(p.name).high == p.high);
        CHECK(shrunk.at(p.name).choices == p.choices);
    }
}

TEST_CASE("center-only policy pins categoricals") {
    const auto space = default_bilstm_space();
    json j = kBaseline;
    j["lr"] = 1e-3;
    j["hidden_size"] = 64;
    const auto shrunk = apply_trust_region(space, {config(j), 0.25, CategoricalPolicy::center_only});
    REQUIRE(shrunk.at("optimizer").choices.size() == 1);
    CHECK(std::get<std::string>(shrunk.at("optimizer").choices[0]) == "Adam");
}

TEST_CASE("log-scale trust region is symmetric in the exponent") {
    const SearchSpace space({ParamSpec::real("lr", 1e-5, 1e-1, Scale::log)});
    HyperparamConfig c;
    c.assignments["lr"] = 1e-3;
    const auto shrunk = apply_trust_region(space, {c, 0.25, CategoricalPolicy::any});
    CHECK(shrunk.at("lr").low == Catch::Approx(1e-4));
    CHECK(shrunk.at("lr").high == Catch::Approx(1e-2));
}

TEST_CASE("property: trust region contains its center and lies inside the space") {
    const auto space = default_bilstm_space();
    for (std::uint64_t s = 0; s < 300; ++s) {
        const auto center = sample_uniform(space, s);
        const double r = 0.05 + 0.95 * static_cast<double>(s % 20) / 19.0;
        const auto shrunk = apply_trust_region(space, {center, r, CategoricalPolicy::any});
        REQUIRE(validate_config(shrunk, center).ok());
        for (const auto& p : shrunk.params()) {
            CHECK(p.low >= space.at(p.name).low);
            CHECK(p.high <= space.at(p.name).high);
        }
        const auto inner = sample_uniform(shrunk, s + 7);
        CHECK(validate_config(space, inner).ok());
    }
}

TEST_CASE("invalid trust-region center or radius") {
    HyperparamConfig c;
    c.assignments["epochs"] = std::int64_t{500};
    const SearchSpace space({ParamSpec::integer("epochs", 5, 200)});
    CHECK_THROWS_AS(apply_trust_region(space, {c, 0.25, CategoricalPolicy::any}), Error);
    c.assignments["epochs"] = std::int64_t{50};
    CHECK_THROWS_AS(apply_trust_region(space, {c, 0.0, CategoricalPolicy::any}), Error);
}

TEST_CASE("property: JSON round trip preserves validation on seeded configs") {
    const auto space = default_bilstm_space();
    const auto back = space_from_json(space_to_json(space));
    CHECK(back == space);
    const SearchSpace wide({ParamSpec::integer("lag", 0, 200), ParamSpec::integer("hidden_size", 0, 400),
                            ParamSpec::integer("num_layers", 0, 10), ParamSpec::real("dropout", -0.2, 1.0),
                            ParamSpec::real("lr", 1e-7, 1.0, Scale::log),
                            ParamSpec::categorical("batch_size", {std::int64_t{16}, std::int64_t{100}, std::int64_t{256}}),
                            ParamSpec::integer("epochs", 0, 300),
                            ParamSpec::categorical("optimizer", {std::string("Adam"), std::string("Lion")})});
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto c = sample_uniform(wide, s);
        const auto round = json(c).get<HyperparamConfig>();
        REQUIRE(round == c);
        CHECK(validate_config(space, c).ok() == validate_config(back, round).ok());
    }
}
