#include "metaopt/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "metaopt/clock.hpp"
#include "metaopt/error.hpp"
#include "metaopt/jsonl.hpp"
#include "metaopt/surrogate_bo.hpp"

namespace metaopt::orch {

using nlohmann::json;
namespace fs = std::filesystem;

space::SearchSpace OptimizationRunConfig::space() const {
    return search_space ? *search_space : space::default_bilstm_space();
}

store::MethodLabel OptimizationRunConfig::label() const {
    if (bo_only) return store::MethodLabel::bo;
    return no_meta ? store::MethodLabel::llm_autoopt_nometa : store::MethodLabel::llm_autoopt;
}

void OptimizationRunConfig::check() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw Error(ErrorCode::NonPositiveEpsilon, "epsilon must be a positive number");
    }
    if (max_llm_iterations < 1) throw Error(ErrorCode::InvalidRunConfig, "max_llm_iterations must be >= 1");
    if (llm_initial_budget < 1) throw Error(ErrorCode::InvalidRunConfig, "llm_initial_budget must be >= 1");
    if (budget_extension_step < 1) throw Error(ErrorCode::InvalidRunConfig, "budget_extension_step must be >= 1");
    if (validation_retries < 0) throw Error(ErrorCode::InvalidRunConfig, "validation_retries must be >= 0");
    if (bo_n_init < 2 || bo_n_total < bo_n_init) {
        throw Error(ErrorCode::InvalidRunConfig, "need 2 <= bo_n_init <= bo_n_total");
    }
    if (!(trust_region_radius > 0.0 && trust_region_radius <= 1.0)) {
        throw Error(ErrorCode::InvalidRunConfig, "trust_region_radius must lie in (0, 1]");
    }
    if (seasonal_period < 2) throw Error(ErrorCode::InvalidRunConfig, "seasonal_period must be >= 2");
    if (dataset.empty()) throw Error(ErrorCode::InvalidRunConfig, "dataset path is required");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidRunConfig, "train_fraction must lie in (0, 1)");
    }
    if (horizon < 1) throw Error(ErrorCode::InvalidRunConfig, "horizon must be >= 1");
    if (no_meta && bo_only) throw Error(ErrorCode::InvalidRunConfig, "no_meta and bo_only are exclusive");
    trainer.check();
    if (endpoint) endpoint->check();
}

void to_json(json& j, const OptimizationRunConfig& c) {
    j = {{"epsilon", c.epsilon},
         {"max_llm_iterations", c.max_llm_iterations},
         {"llm_initial_budget", c.llm_initial_budget},
         {"budget_extension_step", c.budget_extension_step},
         {"validation_retries", c.validation_retries},
         {"bo_n_init", c.bo_n_init},
         {"bo_n_total", c.bo_n_total},
         {"seed", c.seed},
         {"trust_region_radius", c.trust_region_radius},
         {"seasonal_period", c.seasonal_period},
         {"dataset", c.dataset.string()},
         {"target_feature", c.target_feature},
         {"train_fraction", c.train_fraction},
         {"horizon", c.horizon},
         {"trainer", c.trainer},
         {"llm", c.endpoint ? json(*c.endpoint) : json(nullptr)},
         {"transcript", c.transcript ? json(c.transcript->string()) : json(nullptr)},
         {"replay_mode", c.replay_mode == llm::ReplayMode::strict ? "strict" : "lenient"},
         {"search_space", c.search_space ? space::space_to_json(*c.search_space) : json(nullptr)},
         {"output_dir", c.output_dir.string()},
         {"few_shot_examples", c.few_shot_examples},
         {"model_description", c.model_description ? json(*c.model_description) : json(nullptr)},
         {"no_meta", c.no_meta},
         {"bo_only", c.bo_only}};
}

void from_json(const json& j, OptimizationRunConfig& c) {
    static const std::set<std::string> known{
        "epsilon",        "max_llm_iterations", "llm_initial_budget", "budget_extension_step", "validation_retries",
        "bo_n_init",      "bo_n_total",         "seed",               "trust_region_radius",   "seasonal_period",
        "dataset",        "target_feature",     "train_fraction",     "horizon",               "trainer",
        "llm",            "transcript",         "replay_mode",        "search_space",          "output_dir",
        "few_shot_examples", "model_description", "no_meta",          "bo_only"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw Error(ErrorCode::InvalidRunConfig, "unknown run config key '" + key + "'");
    }
    const OptimizationRunConfig d;
    c.epsilon = j.value("epsilon", d.epsilon);
    c.max_llm_iterations = j.value("max_llm_iterations", d.max_llm_iterations);
    c.llm_initial_budget = j.value("llm_initial_budget", d.llm_initial_budget);
    c.budget_extension_step = j.value("budget_extension_step", d.budget_extension_step);
    c.validation_retries = j.value("validation_retries", d.validation_retries);
    c.bo_n_init = j.value("bo_n_init", d.bo_n_init);
    c.bo_n_total = j.value("bo_n_total", d.bo_n_total);
    c.seed = j.value("seed", d.seed);
    c.trust_region_radius = j.value("trust_region_radius", d.trust_region_radius);
    c.seasonal_period = j.value("seasonal_period", d.seasonal_period);
    c.dataset = j.value("dataset", std::string{});
    c.target_feature = j.value("target_feature", d.target_feature);
    c.train_fraction = j.value("train_fraction", d.train_fraction);
    c.horizon = j.value("horizon", d.horizon);
    c.trainer = j.contains("trainer") && !j["trainer"].is_null() ? j["trainer"].get<objective::TrainerSpec>()
                                                                  : objective::TrainerSpec{};
    c.endpoint.reset();
    if (j.contains("llm") && !j["llm"].is_null()) c.endpoint = j["llm"].get<llm::LlmEndpointConfig>();
    c.transcript.reset();
    if (j.contains("transcript") && !j["transcript"].is_null()) c.transcript = j["transcript"].get<std::string>();
    const std::string mode = j.value("replay_mode", std::string("strict"));
    if (mode != "strict" && mode != "lenient") throw Error(ErrorCode::InvalidRunConfig, "replay_mode must be strict or lenient");
    c.replay_mode = mode == "strict" ? llm::ReplayMode::strict : llm::ReplayMode::lenient;
    c.search_space.reset();
    if (j.contains("search_space") && !j["search_space"].is_null()) c.search_space = space::space_from_json(j["search_space"]);
    c.output_dir = j.value("output_dir", d.output_dir.string());
    c.few_shot_examples = j.value("few_shot_examples", d.few_shot_examples);
    c.model_description.reset();
    if (j.contains("model_description") && !j["model_description"].is_null()) {
        c.model_description = j["model_description"].get<std::string>();
    }
    c.no_meta = j.value("no_meta", false);
    c.bo_only = j.value("bo_only", false);
}

OptimizationRunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open run config " + path.string());
    const json j = json::parse(in);
    auto c = j.get<OptimizationRunConfig>();
    const fs::path base = path.parent_path();
    auto resolve = [&](fs::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    resolve(c.dataset);
    resolve(c.output_dir);
    resolve(c.trainer.data_path);
    if (c.transcript) resolve(*c.transcript);
    return c;
}

double compute_target_loss(double bo_incumbent_loss, double epsilon) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::NonPositiveEpsilon, "epsilon must be > 0");
    if (!std::isfinite(bo_incumbent_loss) || !std::isfinite(epsilon)) {
        throw Error(ErrorCode::InvalidConfig, "target loss inputs must be finite");
    }
    return bo_incumbent_loss - epsilon;
}

void to_json(json& j, const TimingBreakdown& t) {
    auto steps = [](const std::vector<StepTiming>& v, const char* rec_key) {
        json a = json::array();
        for (const auto& s : v) {
            a.push_back({{"trial_id", s.trial_id.empty() ? json(nullptr) : json(s.trial_id)},
                         {rec_key, s.t_rec},
                         {"t_train", s.t_train},
                         {"t_eval", s.t_eval}});
        }
        return a;
    };
    j = {{"bo", steps(t.bo, "t_acq")}, {"llm", steps(t.llm, "t_llm")}, {"t_opt_bo", t.t_opt_bo}, {"t_opt_llm", t.t_opt_llm}};
}

TimingBreakdown aggregate_timing(const TrialHistory& history, const std::map<std::string, double>& llm_latency,
                                 const std::vector<double>& unevaluated_llm_latency) {
    TimingBreakdown out;
    for (const auto& t : history) {
        if (t.origin == TrialOrigin::bo_init || t.origin == TrialOrigin::bo_acquired) {
            out.bo.push_back({t.trial_id, t.t_acq, t.t_train, t.t_eval});
            out.t_opt_bo += t.t_acq + t.t_train + t.t_eval;
        } else if (t.origin == TrialOrigin::llm) {
            const auto it = llm_latency.find(t.trial_id);
            if (it == llm_latency.end()) {
                throw Error(ErrorCode::MissingLatency, "no LLM latency recorded for " + t.trial_id);
            }
            out.llm.push_back({t.trial_id, it->second, t.t_train, t.t_eval});
            out.t_opt_llm += it->second + t.t_train + t.t_eval;
        }
    }
    for (double latency : unevaluated_llm_latency) {
        out.llm.push_back({"", latency, 0.0, 0.0});
        out.t_opt_llm += latency;
    }
    return out;
}

void to_json(json& j, const IterationRecord& r) {
    j = {{"iteration", r.iteration},
         {"trial_id", r.trial_id ? json(*r.trial_id) : json(nullptr)},
         {"config", r.config ? json(*r.config) : json(nullptr)},
         {"loss", r.loss ? json(*r.loss) : json(nullptr)},
         {"reasoning", r.reasoning},
         {"expected_effect", r.expected_effect ? json(*r.expected_effect) : json(nullptr)},
         {"attempts", r.attempts},
         {"errors", r.errors},
         {"t_llm", r.t_llm},
         {"t_train", r.t_train},
         {"t_eval", r.t_eval},
         {"improved", r.improved},
         {"budget_after", r.budget_after},
         {"incumbent_after", r.incumbent_after}};
}

void to_json(json& j, const RunReport& r) {
    j = {{"status", "complete"},
         {"label", store::to_string(r.label)},
         {"incumbent_initial", r.incumbent_initial},
         {"incumbent_final", r.incumbent_final},
         {"epsilon", r.epsilon},
         {"target_loss", r.target_loss},
         {"reached_target", r.reached_target},
         {"iterations_used", r.iterations_used},
         {"final_budget", r.final_budget},
         {"timing", r.timing},
         {"iterations", r.iterations},
         {"bundle", r.bundle_snapshot},
         {"dropped_features", r.dropped_features}};
}

json strip_wall_clock(const json& report) {
    static const std::set<std::string> clock_keys{"t_acq",     "t_train",   "t_eval",     "t_llm",    "t_rec",
                                                  "t_opt_bo",  "t_opt_llm", "timestamp",  "created_at", "latency"};
    if (report.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : report.items()) {
            if (!clock_keys.count(k)) out[k] = strip_wall_clock(v);
        }
        return out;
    }
    if (report.is_array()) {
        json out = json::array();
        for (const auto& v : report) out.push_back(strip_wall_clock(v));
        return out;
    }
    return report;
}

namespace {

bool constant_on_training_segment(const std::vector<stats::Observation>& column, std::size_t boundary) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < boundary && i < column.size(); ++i) {
        if (column[i]) {
            lo = std::min(lo, *column[i]);
            hi = std::max(hi, *column[i]);
        }
    }
    return !(lo < hi);
}

std::vector<prompt::FewShotExample> few_shot_examples(const SeriesDataset& data, const objective::DataSplit& split,
                                                      std::size_t count) {
    constexpr std::size_t kWindow = 8;
    std::vector<prompt::FewShotExample> out;
    if (count == 0) return out;
    const auto& target = data.values[split.target_index];
    const auto h = static_cast<std::size_t>(split.horizon);
    if (split.boundary < kWindow + h + 1) return out;
    const std::size_t span = split.boundary - h - kWindow;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t e = kWindow - 1 + (span * i) / count;
        prompt::FewShotExample ex;
        bool complete = target[e + h].has_value();
        for (std::size_t k = e + 1 - kWindow; k <= e && complete; ++k) {
            if (!target[k]) {
                complete = false;
            } else {
                ex.input_window.push_back(*target[k]);
            }
        }
        if (!complete) continue;
        ex.output.push_back(*target[e + h]);
        out.push_back(std::move(ex));
    }
    return out;
}

json bundle_snapshot(const prompt::MetaKnowledgeBundle& b) {
    json meta = json::array();
    for (const auto& f : b.data_meta) meta.push_back({{"feature", f.name}, {"vector", f.vector}, {"summary", f.summary}});
    json shots = json::array();
    for (const auto& s : b.few_shot) shots.push_back({{"input_window", s.input_window}, {"output", s.output}});
    return {{"prompt_version", prompt::kPromptVersion},
            {"include_meta", b.include_meta},
            {"data_meta", b.include_meta ? meta : json::array()},
            {"model_description", b.include_meta ? json(b.model_description) : json(nullptr)},
            {"constrained_space", space::space_to_json(b.constrained_space)},
            {"target_loss", b.target_loss},
            {"few_shot", shots}};
}

std::string next_trial_id(const TrialHistory& history) { return "trial_" + std::to_string(history.size() + 1); }

std::string short_text(const std::string& s) { return s.size() > 200 ? s.substr(0, 200) + "..." : s; }

}  // namespace

std::string default_model_description(const OptimizationRunConfig& config) {
    if (config.model_description) return *config.model_description;
    const std::string target = "the target feature '" + config.target_feature + "' " + std::to_string(config.horizon) +
                               " steps ahead";
    if (config.trainer.kind == objective::TrainerSpec::Kind::subprocess) {
        return "Bidirectional LSTM forecaster: windows of the last `lag` min-max scaled observations of every feature "
               "feed `num_layers` stacked bidirectional LSTM layers of `hidden_size` units with dropout `dropout` "
               "between layers; the final time step's concatenated hidden state goes through a linear head predicting " +
               target + ". Training minimizes mean squared error on scaled targets with the chosen `optimizer`, `lr`, "
               "`batch_size` and `epochs`. The objective is the RMSE in original units on the chronological test "
               "segment (last " + prompt::format_number((1.0 - config.train_fraction) * 100.0) + "% of the series).";
    }
    return "Feed-forward window forecaster: the last `lag` min-max scaled observations of every feature are flattened "
           "into the input of `num_layers` fully connected tanh layers of `hidden_size` units, each followed by "
           "dropout with rate `dropout`; a linear head predicts " + target + ". Training minimizes mean squared error "
           "on scaled targets with the chosen `optimizer`, `lr`, `batch_size` and `epochs`. The objective is the RMSE "
           "in original units on the chronological test segment (last " +
           prompt::format_number((1.0 - config.train_fraction) * 100.0) + "% of the series).";
}

std::vector<prompt::FeatureMeta> extract_dataset_meta(const SeriesDataset& dataset, int seasonal_period) {
    std::vector<prompt::FeatureMeta> out;
    for (std::size_t f = 0; f < dataset.values.size(); ++f) {
        prompt::FeatureMeta m;
        m.name = dataset.feature_names[f];
        try {
            m.vector = stats::extract_meta_features(std::span<const stats::Observation>(dataset.values[f]), seasonal_period);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptySeries) throw;
            m.vector = stats::MetaFeatureVector{};
            m.vector.missing = dataset.values[f].size();
        }
        m.summary = stats::summarize(m.vector);
        out.push_back(std::move(m));
    }
    return out;
}

RunContext prepare(const OptimizationRunConfig& config) {
    config.check();
    RunContext ctx;
    ctx.config = config;
    const SeriesDataset source = load_dataset(config.dataset);
    const std::size_t boundary =
        static_cast<std::size_t>(std::floor(static_cast<double>(source.length()) * config.train_fraction));
    SeriesDataset used;
    used.timestamps = source.timestamps;
    used.sampling_period = source.sampling_period;
    for (std::size_t f = 0; f < source.values.size(); ++f) {
        if (source.feature_names[f] != config.target_feature &&
            constant_on_training_segment(source.values[f], boundary)) {
            ctx.dropped_features.push_back(source.feature_names[f]);
            continue;
        }
        used.feature_names.push_back(source.feature_names[f]);
        used.values.push_back(source.values[f]);
    }
    ctx.source = source;
    ctx.dataset = std::move(used);
    ctx.split = objective::make_split(ctx.dataset, config.train_fraction, config.horizon, config.target_feature);

    auto trainer = config.trainer;
    if (trainer.kind == objective::TrainerSpec::Kind::subprocess) {
        const bool is_csv = config.dataset.extension() == ".csv";
        if (trainer.data_path.empty() && is_csv && ctx.dropped_features.empty()) {
            trainer.data_path = config.dataset;
        } else if (trainer.data_path.empty()) {
            fs::create_directories(config.output_dir);
            trainer.data_path = fs::absolute(config.output_dir / "dataset.csv");
            write_csv(ctx.dataset, trainer.data_path);
        }
        ctx.config.trainer = trainer;
    }
    ctx.objective = objective::make_objective(trainer, ctx.dataset, ctx.split, config.seed);
    return ctx;
}

Phase1Result phase1(RunContext& ctx) {
    const auto& cfg = ctx.config;
    const space::SearchSpace space = cfg.space();
    Phase1Result p1;
    p1.dropped_features = ctx.dropped_features;
    p1.bundle.data_meta = extract_dataset_meta(ctx.source, cfg.seasonal_period);
    p1.bundle.model_description = default_model_description(cfg);
    p1.bundle.include_meta = !cfg.no_meta;

    bo::BoOptions options;
    options.n_init = cfg.bo_n_init;
    options.n_total = cfg.bo_n_total;
    options.seed = cfg.seed;
    options.on_trial = [&ctx](const Trial& t) {
        if (ctx.store) ctx.store->append_trial(ctx.run_id, t);
    };
    auto result = bo::run_bo(ctx.objective, space, options);
    p1.history = std::move(result.history);
    p1.incumbent = result.incumbent;

    p1.bundle.history = p1.history;
    p1.bundle.incumbent = p1.incumbent;
    p1.bundle.target_loss = compute_target_loss(p1.incumbent.loss, cfg.epsilon);
    p1.bundle.constrained_space = space::apply_trust_region(
        space, space::TrustRegion{p1.incumbent.config, cfg.trust_region_radius, space::CategoricalPolicy::any});
    p1.bundle.few_shot = few_shot_examples(ctx.dataset, ctx.split, cfg.few_shot_examples);
    return p1;
}

RunReport bo_only_report(const RunContext& ctx, const Phase1Result& p1) {
    RunReport r;
    r.label = ctx.config.label();
    r.incumbent_initial = p1.incumbent;
    r.incumbent_final = p1.incumbent;
    r.epsilon = ctx.config.epsilon;
    r.target_loss = p1.bundle.target_loss;
    r.reached_target = r.incumbent_final.loss <= r.target_loss;
    r.timing = aggregate_timing(p1.history, {});
    r.bundle_snapshot = bundle_snapshot(p1.bundle);
    r.dropped_features = p1.dropped_features;
    return r;
}

RunReport phase2(RunContext& ctx, Phase1Result& p1, llm::LlmClient& client) {
    const auto& cfg = ctx.config;
    const space::SearchSpace full_space = cfg.space();
    auto& bundle = p1.bundle;
    TrialHistory& history = p1.history;

    RunReport report;
    report.label = cfg.label();
    report.incumbent_initial = p1.incumbent;
    report.epsilon = cfg.epsilon;
    report.target_loss = bundle.target_loss;
    report.bundle_snapshot = bundle_snapshot(bundle);
    report.dropped_features = p1.dropped_features;

    Incumbent best = p1.incumbent;
    std::map<std::string, double> latency_by_trial;
    std::vector<double> unevaluated_latency;
    int budget = std::min(cfg.llm_initial_budget, cfg.max_llm_iterations);
    bool stop_requested = false;

    for (int iteration = 1; iteration <= budget && !stop_requested; ++iteration) {
        IterationRecord rec;
        rec.iteration = iteration;
        bundle.history = history;
        bundle.incumbent = best;
        bundle.corrective_feedback.clear();

        std::optional<prompt::LlmRecommendation> accepted;
        for (int attempt = 0; attempt <= cfg.validation_retries; ++attempt) {
            ++rec.attempts;
            const prompt::PromptDocument doc = prompt::build_prompt(bundle);
            llm::Completion reply;
            try {
                reply = client.complete(doc);
            } catch (const Error& e) {
                rec.errors.push_back(e.what());
                if (e.code() == ErrorCode::TranscriptExhausted || e.code() == ErrorCode::HashMismatch) {
                    stop_requested = true;
                }
                break;
            }
            rec.t_llm += reply.latency;
            const auto parsed = prompt::parse_response(reply.text);
            std::vector<std::string> problems;
            if (!parsed.ok()) {
                problems.push_back(std::string(to_string(parsed.error->code)) + ": " + parsed.error->detail);
            } else {
                const auto verdict = prompt::validate_recommendation(*parsed.value, bundle.constrained_space);
                if (verdict.ok() && space::validate_config(full_space, verdict.recommendation->config).ok()) {
                    accepted = verdict.recommendation;
                    break;
                }
                for (const auto& v : verdict.violations) problems.push_back(v.param + ": " + v.reason);
            }
            rec.errors.push_back("attempt " + std::to_string(attempt + 1) + " rejected: " + short_text(
                [&] {
                    std::string s;
                    for (const auto& p : problems) s += (s.empty() ? "" : "; ") + p;
                    return s;
                }()));
            bundle.corrective_feedback = problems;
        }
        bundle.corrective_feedback.clear();

        if (accepted) {
            Trial trial;
            trial.trial_id = next_trial_id(history);
            trial.config = accepted->config;
            trial.origin = TrialOrigin::llm;
            trial.t_acq = rec.t_llm;
            try {
                const EvalResult r = ctx.objective(trial.config);
                trial.t_train = r.t_train;
                trial.t_eval = r.t_eval;
                if (std::isfinite(r.loss)) {
                    trial.loss = r.loss;
                } else {
                    trial.diagnostics = "objective returned a non-finite loss";
                }
                if (r.diagnostics.is_object() && !r.diagnostics.empty()) {
                    trial.diagnostics += (trial.diagnostics.empty() ? "" : "; ") + r.diagnostics.dump();
                }
            } catch (const std::exception& e) {
                trial.diagnostics = e.what();
                rec.errors.push_back(std::string("evaluation failed: ") + short_text(e.what()));
            }
            history.push_back(trial);
            if (ctx.store) ctx.store->append_trial(ctx.run_id, trial);
            latency_by_trial[trial.trial_id] = rec.t_llm;

            rec.trial_id = trial.trial_id;
            rec.config = trial.config;
            rec.loss = trial.loss;
            rec.reasoning = accepted->reasoning;
            rec.expected_effect = accepted->expected_effect;
            rec.t_train = trial.t_train;
            rec.t_eval = trial.t_eval;
            if (trial.loss && *trial.loss < best.loss) {
                best = {trial.config, *trial.loss, trial.trial_id};
                rec.improved = true;
                budget = std::min(budget + cfg.budget_extension_step, cfg.max_llm_iterations);
            }
            bundle.last_feedback = prompt::Feedback{trial.config, trial.loss,
                                                    trial.loss ? std::string{} : short_text(trial.diagnostics)};
        } else {
            unevaluated_latency.push_back(rec.t_llm);
        }
        rec.budget_after = budget;
        rec.incumbent_after = best.loss;
        report.iterations.push_back(std::move(rec));
        if (best.loss <= bundle.target_loss) break;
    }

    report.incumbent_final = best;
    report.reached_target = best.loss <= report.target_loss;
    report.iterations_used = static_cast<int>(report.iterations.size());
    report.final_budget = budget;
    report.timing = aggregate_timing(history, latency_by_trial, unevaluated_latency);
    return report;
}

namespace {

void write_text(const fs::path& path, const std::string& text) { jsonl::write_atomic(path, text); }

}  // namespace

RunOutcome run(const OptimizationRunConfig& config, llm::LlmClient* client) {
    config.check();
    const fs::path out = config.output_dir;
    if (fs::exists(out / "history.jsonl") || fs::exists(out / "report.json")) {
        throw Error(ErrorCode::InvalidRunConfig, "output directory " + out.string() + " already holds a run");
    }
    const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
    store::ExperimentStore store(parent);
    const std::string run_id = out.filename().string();
    store.open_run(run_id, config.label(), json(config));
    const fs::path dir = store.run_dir(run_id);
    write_text(dir / "history.jsonl", "");
    write_text(dir / "transcript.jsonl", "");

    std::unique_ptr<llm::LlmClient> owned;
    auto fail = [&](const std::exception& e) {
        write_text(dir / "report.json",
                   json({{"status", "aborted"}, {"label", store::to_string(config.label())}, {"error", e.what()}}).dump(2) +
                       "\n");
        write_text(dir / "convergence.csv", store::convergence_csv(store::convergence_rows(store.load(run_id))));
    };
    try {
        if (!config.bo_only && client == nullptr) {
            if (config.transcript) {
                owned = std::make_unique<llm::Replayer>(llm::load_transcript(*config.transcript), config.replay_mode);
            } else if (config.endpoint) {
                owned = std::make_unique<llm::HttpGateway>(*config.endpoint);
            } else {
                throw Error(ErrorCode::InvalidRunConfig, "an LLM endpoint or a transcript is required unless bo_only");
            }
            client = owned.get();
        }
        RunContext ctx = prepare(config);
        ctx.store = &store;
        ctx.run_id = run_id;
        Phase1Result p1 = phase1(ctx);
        RunReport report;
        if (config.bo_only) {
            report = bo_only_report(ctx, p1);
        } else {
            llm::RecordingClient recorder(*client, dir / "transcript.jsonl");
            report = phase2(ctx, p1, recorder);
        }
        store.write_report(run_id, json(report));
        const auto record = store.load(run_id);
        write_text(dir / "convergence.csv", store::convergence_csv(store::convergence_rows(record)));
        return {std::move(report), record.history, dir};
    } catch (const std::exception& e) {
        fail(e);
        throw;
    }
}

}  // namespace metaopt::orch
