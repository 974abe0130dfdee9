#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "metaopt/trial.hpp"

namespace metaopt::store {

enum class MethodLabel { baseline, bo, llm_autoopt, llm_autoopt_nometa };

[[nodiscard]] std::string to_string(MethodLabel label);
[[nodiscard]] MethodLabel label_from_string(const std::string& text);

struct RunRecord {
    std::string run_id;
    MethodLabel label = MethodLabel::bo;
    TrialHistory history;
    nlohmann::json report;  // null until the run finishes
    std::string created_at;
    nlohmann::json metadata = nlohmann::json::object();

    bool operator==(const RunRecord&) const = default;
};

/// A directory of runs, one sub-directory per run_id holding run.json,
/// history.jsonl and, once finished, report.json. Single writer per run.
class ExperimentStore {
public:
    explicit ExperimentStore(std::filesystem::path root);

    [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }
    [[nodiscard]] std::filesystem::path run_dir(const std::string& run_id) const { return root_ / run_id; }
    [[nodiscard]] bool has_run(const std::string& run_id) const;
    [[nodiscard]] std::vector<std::string> run_ids() const;

    /// Creates the run, or reopens it if it already exists with the same label.
    void open_run(const std::string& run_id, MethodLabel label, nlohmann::json metadata = nlohmann::json::object());

    /// Durable, idempotent append. Throws UnknownRun, or DuplicateTrialId when
    /// the id is stored with different content.
    void append_trial(const std::string& run_id, const Trial& trial);

    void write_report(const std::string& run_id, const nlohmann::json& report);

    /// Throws UnknownRun.
    [[nodiscard]] RunRecord load(const std::string& run_id) const;

    /// Replaces whatever is stored for record.run_id.
    void save(const RunRecord& record);

private:
    std::filesystem::path root_;
    std::map<std::string, std::map<std::string, std::string>> known_;  // run -> trial id -> serialized trial
};

struct SummaryRow {
    std::string run_id;
    MethodLabel method = MethodLabel::bo;
    double mean_loss = 0.0;    // over the (up to) 3 lowest-loss trials
    double loss_std = 0.0;     // population std over the same trials
    double mean_t_train = 0.0; // over every successful trial
    double t_opt = 0.0;        // sum of t_acq + t_train + t_eval over all trials
    std::size_t selected = 0;
};

inline constexpr std::size_t kSummaryTopK = 3;

/// Throws EmptyRun when the run has no successful trial.
[[nodiscard]] SummaryRow summarize_run(const RunRecord& record);
[[nodiscard]] std::vector<SummaryRow> summary_table(const ExperimentStore& store,
                                                    const std::vector<std::string>& run_ids);

struct ConvergenceRow {
    std::string run_id;
    std::size_t iteration = 0;  // 1-based execution order
    TrialOrigin origin = TrialOrigin::bo_init;
    std::optional<double> loss;
    std::optional<double> incumbent;
};

[[nodiscard]] std::vector<ConvergenceRow> convergence_rows(const RunRecord& record);
[[nodiscard]] std::vector<ConvergenceRow> export_convergence(const ExperimentStore& store,
                                                             const std::vector<std::string>& run_ids);

/// Columns: run,method,mean_loss,loss_std,mean_t_train,t_opt,selected
[[nodiscard]] std::string summary_csv(const std::vector<SummaryRow>& rows);
/// Columns: run,iteration,origin,loss,incumbent (empty cell for a failed trial)
[[nodiscard]] std::string convergence_csv(const std::vector<ConvergenceRow>& rows);

}  // namespace metaopt::store
