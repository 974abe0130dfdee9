#include "metaopt/experiment_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "metaopt/error.hpp"
#include "metaopt/jsonl.hpp"

namespace metaopt::store {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(MethodLabel label) {
    switch (label) {
        case MethodLabel::baseline: return "Baseline";
        case MethodLabel::bo: return "BO";
        case MethodLabel::llm_autoopt: return "LLM-AutoOpt";
        case MethodLabel::llm_autoopt_nometa: return "LLM-AutoOpt-NoMeta";
    }
    return "?";
}

MethodLabel label_from_string(const std::string& text) {
    for (auto l : {MethodLabel::baseline, MethodLabel::bo, MethodLabel::llm_autoopt, MethodLabel::llm_autoopt_nometa}) {
        if (to_string(l) == text) return l;
    }
    throw Error(ErrorCode::InvalidRunConfig, "unknown method label '" + text + "'");
}

namespace {

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return json::parse(in);
}

}  // namespace

ExperimentStore::ExperimentStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

bool ExperimentStore::has_run(const std::string& run_id) const { return fs::exists(run_dir(run_id) / "run.json"); }

std::vector<std::string> ExperimentStore::run_ids() const {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root_)) {
        if (entry.is_directory() && fs::exists(entry.path() / "run.json")) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void ExperimentStore::open_run(const std::string& run_id, MethodLabel label, json metadata) {
    if (run_id.empty() || run_id.find('/') != std::string::npos) {
        throw Error(ErrorCode::InvalidRunConfig, "invalid run id '" + run_id + "'");
    }
    const fs::path dir = run_dir(run_id);
    if (has_run(run_id)) {
        const json meta = read_json_file(dir / "run.json");
        if (meta.at("label").get<std::string>() != to_string(label)) {
            throw Error(ErrorCode::InvalidRunConfig, "run '" + run_id + "' exists with label " +
                                                         meta.at("label").get<std::string>());
        }
        return;
    }
    fs::create_directories(dir);
    const json meta = {{"run_id", run_id}, {"label", to_string(label)}, {"created_at", now_utc()},
                       {"metadata", std::move(metadata)}};
    jsonl::write_atomic(dir / "run.json", meta.dump(2) + "\n");
    known_[run_id].clear();
}

void ExperimentStore::append_trial(const std::string& run_id, const Trial& trial) {
    if (!has_run(run_id)) throw Error(ErrorCode::UnknownRun, "no run '" + run_id + "' in " + root_.string());
    auto it = known_.find(run_id);
    if (it == known_.end()) {
        it = known_.emplace(run_id, std::map<std::string, std::string>{}).first;
        for (const auto& line : jsonl::read_lines(run_dir(run_id) / "history.jsonl")) {
            const json j = json::parse(line);
            it->second[j.at("trial_id").get<std::string>()] = j.dump();
        }
    }
    const std::string serialized = json(trial).dump();
    if (const auto found = it->second.find(trial.trial_id); found != it->second.end()) {
        if (found->second == serialized) return;
        throw Error(ErrorCode::DuplicateTrialId,
                    "trial '" + trial.trial_id + "' already stored in run '" + run_id + "' with different content");
    }
    jsonl::append_line(run_dir(run_id) / "history.jsonl", serialized);
    it->second.emplace(trial.trial_id, serialized);
}

void ExperimentStore::write_report(const std::string& run_id, const json& report) {
    if (!has_run(run_id)) throw Error(ErrorCode::UnknownRun, "no run '" + run_id + "' in " + root_.string());
    jsonl::write_atomic(run_dir(run_id) / "report.json", report.dump(2) + "\n");
}

RunRecord ExperimentStore::load(const std::string& run_id) const {
    if (!has_run(run_id)) throw Error(ErrorCode::UnknownRun, "no run '" + run_id + "' in " + root_.string());
    const fs::path dir = run_dir(run_id);
    const json meta = read_json_file(dir / "run.json");
    RunRecord r;
    r.run_id = run_id;
    r.label = label_from_string(meta.at("label").get<std::string>());
    r.created_at = meta.value("created_at", std::string{});
    r.metadata = meta.value("metadata", json::object());
    for (const auto& line : jsonl::read_lines(dir / "history.jsonl")) r.history.push_back(json::parse(line).get<Trial>());
    if (fs::exists(dir / "report.json")) r.report = read_json_file(dir / "report.json");
    return r;
}

void ExperimentStore::save(const RunRecord& record) {
    const fs::path dir = run_dir(record.run_id);
    fs::create_directories(dir);
    const json meta = {{"run_id", record.run_id}, {"label", to_string(record.label)},
                       {"created_at", record.created_at}, {"metadata", record.metadata}};
    jsonl::write_atomic(dir / "run.json", meta.dump(2) + "\n");
    std::string lines;
    auto& cache = known_[record.run_id];
    cache.clear();
    for (const auto& t : record.history) {
        const std::string s = json(t).dump();
        lines += s + "\n";
        cache[t.trial_id] = s;
    }
    jsonl::write_atomic(dir / "history.jsonl", lines);
    if (record.report.is_null()) {
        fs::remove(dir / "report.json");
    } else {
        jsonl::write_atomic(dir / "report.json", record.report.dump(2) + "\n");
    }
}

SummaryRow summarize_run(const RunRecord& record) {
    std::vector<double> losses;
    double train_sum = 0.0;
    SummaryRow row;
    row.run_id = record.run_id;
    row.method = record.label;
    for (const auto& t : record.history) {
        row.t_opt += t.t_acq + t.t_train + t.t_eval;
        if (t.failed()) continue;
        losses.push_back(*t.loss);
        train_sum += t.t_train;
    }
    if (losses.empty()) throw Error(ErrorCode::EmptyRun, "run '" + record.run_id + "' has no successful trial");
    // A finished run's report also counts LLM rounds that produced no trial.
    if (record.report.is_object() && record.report.contains("timing")) {
        const auto& timing = record.report["timing"];
        row.t_opt = timing.value("t_opt_bo", 0.0) + timing.value("t_opt_llm", 0.0);
    }
    row.mean_t_train = train_sum / static_cast<double>(losses.size());
    std::sort(losses.begin(), losses.end());
    losses.resize(std::min(losses.size(), kSummaryTopK));
    row.selected = losses.size();
    const double n = static_cast<double>(losses.size());
    row.mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
    double ss = 0.0;
    for (double l : losses) ss += (l - row.mean_loss) * (l - row.mean_loss);
    row.loss_std = std::sqrt(ss / n);
    return row;
}

std::vector<SummaryRow> summary_table(const ExperimentStore& store, const std::vector<std::string>& run_ids) {
    std::vector<SummaryRow> rows;
    for (const auto& id : run_ids) rows.push_back(summarize_run(store.load(id)));
    return rows;
}

std::vector<ConvergenceRow> convergence_rows(const RunRecord& record) {
    std::vector<ConvergenceRow> rows;
    const auto running = running_incumbent(record.history);
    for (std::size_t i = 0; i < record.history.size(); ++i) {
        rows.push_back({record.run_id, i + 1, record.history[i].origin, record.history[i].loss, running[i]});
    }
    return rows;
}

std::vector<ConvergenceRow> export_convergence(const ExperimentStore& store, const std::vector<std::string>& run_ids) {
    std::vector<ConvergenceRow> rows;
    for (const auto& id : run_ids) {
        auto part = convergence_rows(store.load(id));
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

}  // namespace

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "run,method,mean_loss,loss_std,mean_t_train,t_opt,selected\n";
    for (const auto& r : rows) {
        out += r.run_id + "," + to_string(r.method) + "," + num(r.mean_loss) + "," + num(r.loss_std) + "," +
               num(r.mean_t_train) + "," + num(r.t_opt) + "," + std::to_string(r.selected) + "\n";
    }
    return out;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
    std::string out = "run,iteration,origin,loss,incumbent\n";
    for (const auto& r : rows) {
        out += r.run_id + "," + std::to_string(r.iteration) + "," + metaopt::to_string(r.origin) + "," +
               opt_num(r.loss) + "," + opt_num(r.incumbent) + "\n";
    }
    return out;
}

}  // namespace metaopt::store
