#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "metaopt/dataset.hpp"
#include "metaopt/error.hpp"
#include "metaopt/experiment_store.hpp"
#include "metaopt/objective_runtime.hpp"
#include "metaopt/orchestrator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace metaopt;

namespace {

int cmd_meta(const fs::path& data, int period) {
    const SeriesDataset ds = load_dataset(data);
    json out = json::array();
    for (const auto& f : orch::extract_dataset_meta(ds, period)) {
        out.push_back({{"feature", f.name}, {"vector", f.vector}, {"summary", f.summary}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

void print_outcome(const orch::RunOutcome& out) {
    const auto& r = out.report;
    std::printf("label            %s\n", store::to_string(r.label).c_str());
    std::printf("bo incumbent     %.6g (%s)\n", r.incumbent_initial.loss, r.incumbent_initial.trial_id.c_str());
    std::printf("final incumbent  %.6g (%s)\n", r.incumbent_final.loss, r.incumbent_final.trial_id.c_str());
    std::printf("target loss      %.6g\n", r.target_loss);
    std::printf("reached target   %s\n", r.reached_target ? "yes" : "no");
    std::printf("llm iterations   %d (budget %d)\n", r.iterations_used, r.final_budget);
    std::printf("t_opt bo / llm   %.3f s / %.3f s\n", r.timing.t_opt_bo, r.timing.t_opt_llm);
    std::printf("run directory    %s\n", out.run_dir.string().c_str());
}

int cmd_optimize(const fs::path& config_path, bool no_meta, bool bo_only, const std::string& replay, bool lenient,
                 const std::string& output) {
    auto config = orch::load_run_config(config_path);
    if (no_meta) config.no_meta = true;
    if (bo_only) config.bo_only = true;
    if (!replay.empty()) {
        config.transcript = fs::absolute(replay);
        config.endpoint.reset();
    }
    if (lenient) config.replay_mode = llm::ReplayMode::lenient;
    if (!output.empty()) config.output_dir = output;
    const auto outcome = orch::run(config);
    print_outcome(outcome);
    return config.bo_only || outcome.report.reached_target ? 0 : 1;
}

int cmd_report(const fs::path& run_dir, bool csv) {
    const fs::path dir = fs::absolute(run_dir).lexically_normal();
    const fs::path root = dir.has_filename() ? dir.parent_path() : dir.parent_path().parent_path();
    const std::string id = dir.has_filename() ? dir.filename().string() : dir.parent_path().filename().string();
    store::ExperimentStore st(root);
    const auto record = st.load(id);
    const auto row = store::summarize_run(record);
    if (csv) {
        std::cout << store::summary_csv({row});
        return 0;
    }
    std::printf("run          %s\n", row.run_id.c_str());
    std::printf("method       %s\n", store::to_string(row.method).c_str());
    std::printf("trials       %zu\n", record.history.size());
    std::printf("mean loss    %.6g (+- %.6g over best %zu)\n", row.mean_loss, row.loss_std, row.selected);
    std::printf("mean t_train %.3f s\n", row.mean_t_train);
    std::printf("t_opt        %.3f s\n", row.t_opt);
    if (record.report.is_object()) {
        std::printf("status       %s\n", record.report.value("status", std::string("?")).c_str());
        if (record.report.contains("reached_target")) {
            std::printf("reached      %s\n", record.report["reached_target"].get<bool>() ? "yes" : "no");
        }
    } else {
        std::printf("status       unfinished\n");
    }
    return 0;
}

int cmd_trainer_check(const std::vector<std::string>& command, double timeout) {
    const fs::path work = fs::temp_directory_path() / ("metaopt-check-" + std::to_string(::getpid()));
    fs::create_directories(work);
    const auto checks = objective::trainer_check(command, work, std::chrono::duration<double>(timeout));
    fs::remove_all(work);
    bool all = true;
    for (const auto& c : checks) {
        std::printf("%-18s %s  %s\n", c.name.c_str(), c.passed ? "PASS" : "FAIL", c.detail.c_str());
        all = all && c.passed;
    }
    return all ? 0 : 1;
}

int cmd_builtin_trainer() {
    std::string line;
    std::getline(std::cin, line);
    const auto [reply, ok] = objective::handle_trainer_request(line);
    std::cout << reply.dump() << "\n" << std::flush;
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-guided hyperparameter optimization for time-series forecasters"};
    app.require_subcommand(1);

    auto* meta = app.add_subcommand("meta", "Print the meta-feature vector and summary of every feature");
    std::string meta_data;
    int period = 24;
    meta->add_option("data", meta_data, "CSV or JSON dataset")->required();
    meta->add_option("--period", period, "Seasonal period for the decomposition");

    auto* bo = app.add_subcommand("bo", "Run phase 1 (Bayesian optimization) only");
    std::string bo_config;
    std::string bo_output;
    bo->add_option("config", bo_config, "Run config JSON")->required();
    bo->add_option("--output", bo_output, "Override output_dir");

    auto* opt = app.add_subcommand("optimize", "Run BO followed by LLM refinement; exit 0 iff the target is reached");
    std::string opt_config, replay, opt_output;
    bool no_meta = false, bo_only = false, lenient = false;
    opt->add_option("config", opt_config, "Run config JSON")->required();
    opt->add_flag("--no-meta", no_meta, "Drop data meta-knowledge and model description from the prompt");
    opt->add_flag("--bo-only", bo_only, "Stop after phase 1");
    opt->add_option("--replay", replay, "Replay LLM replies from a transcript instead of calling the endpoint");
    opt->add_flag("--lenient", lenient, "Replay replies in order without checking prompt hashes");
    opt->add_option("--output", opt_output, "Override output_dir");

    auto* report = app.add_subcommand("report", "Summarize a finished run directory");
    std::string run_dir;
    bool csv = false;
    report->add_option("run_dir", run_dir, "Run directory")->required();
    report->add_flag("--csv", csv, "Print the summary row as CSV");

    auto* check = app.add_subcommand("trainer-check", "Protocol conformance checks for an external trainer");
    double check_timeout = 120.0;
    check->add_option("--timeout", check_timeout, "Seconds allowed per trainer invocation");
    check->prefix_command();

    app.add_subcommand("builtin-trainer", "Serve one request of the trainer protocol with the built-in forecaster")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*meta) return cmd_meta(meta_data, period);
        if (*bo) return cmd_optimize(bo_config, false, true, "", false, bo_output);
        if (*opt) return cmd_optimize(opt_config, no_meta, bo_only, replay, lenient, opt_output);
        if (*report) return cmd_report(run_dir, csv);
        if (*check) {
            const auto command = check->remaining();
            if (command.empty()) {
                std::cerr << "trainer-check needs a command\n";
                return 2;
            }
            return cmd_trainer_check(command, check_timeout);
        }
        return cmd_builtin_trainer();
    } catch (const std::exception& e) {
        std::cerr << "metaopt: " << e.what() << "\n";
        return 2;
    }
}
