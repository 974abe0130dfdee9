// Exhaustive grid search with the built-in forecaster. Used offline to pick
// the configuration committed in tests/fixtures/oracle_config.json.
#include <cstdio>
#include <iostream>
#include <limits>

#include "CLI11.hpp"
#include "json.hpp"
#include "metaopt/dataset.hpp"
#include "metaopt/objective_runtime.hpp"

using namespace metaopt;
using nlohmann::json;

int main(int argc, char** argv) {
    CLI::App app{"Grid search over the compact forecaster space"};
    std::string data;
    std::string target = "target";
    double train_fraction = 0.7;
    int horizon = 4;
    std::uint64_t seed = 0;
    app.add_option("data", data)->required();
    app.add_option("--target", target);
    app.add_option("--train-fraction", train_fraction);
    app.add_option("--horizon", horizon);
    app.add_option("--seed", seed);
    CLI11_PARSE(app, argc, argv);

    const SeriesDataset ds = load_dataset(data);
    const auto split = objective::make_split(ds, train_fraction, horizon, target);
    const auto objective = objective::make_objective({}, ds, split, seed);

    double best = std::numeric_limits<double>::infinity();
    json best_config;
    std::size_t evaluated = 0;
    for (int lag : {4, 8, 12, 16, 24})
        for (int hidden : {8, 16, 32})
            for (int layers : {1, 2})
                for (double dropout : {0.0, 0.1})
                    for (double lr : {1e-3, 3e-3, 1e-2, 3e-2})
                        for (int batch : {32, 64})
                            for (int epochs : {10, 20})
                                for (const char* opt : {"Adam", "AdamW", "RMSprop"}) {
                                    const json j = {{"lag", lag},         {"hidden_size", hidden},
                                                    {"num_layers", layers}, {"dropout", dropout},
                                                    {"lr", lr},           {"batch_size", batch},
                                                    {"epochs", epochs},   {"optimizer", opt}};
                                    double loss = std::numeric_limits<double>::infinity();
                                    try {
                                        loss = objective(j.get<space::HyperparamConfig>()).loss;
                                    } catch (const std::exception& e) {
                                        std::fprintf(stderr, "skip %s: %s\n", j.dump().c_str(), e.what());
                                        continue;
                                    }
                                    ++evaluated;
                                    if (loss < best) {
                                        best = loss;
                                        best_config = j;
                                        std::fprintf(stderr, "%zu  %.6f  %s\n", evaluated, loss, j.dump().c_str());
                                    }
                                }
    std::cout << json({{"config", best_config}, {"loss", best}, {"evaluated", evaluated}}).dump(2) << "\n";
}
