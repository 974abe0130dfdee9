#include "metaopt/meta_prompt.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace metaopt::prompt {

using nlohmann::json;
using space::HyperparamConfig;
using space::ParamKind;
using space::ParamSpec;
using space::ParamValue;
using space::SearchSpace;

std::string prompt_text(const PromptDocument& doc) { return doc.system_text + "\n\n" + doc.user_text; }

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string prompt_hash(const PromptDocument& doc) { return fnv1a_hex(prompt_text(doc)); }

std::string format_number(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "NaN" : (v > 0 ? "Infinity" : "-Infinity");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

void render_into(const json& j, std::string& out) {
    switch (j.type()) {
        case json::value_t::object: {
            out += '{';
            bool first = true;
            for (const auto& [k, v] : j.items()) {
                if (!first) out += ", ";
                first = false;
                out += json(k).dump();
                out += ": ";
                render_into(v, out);
            }
            out += '}';
            break;
        }
        case json::value_t::array: {
            out += '[';
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ", ";
                render_into(j[i], out);
            }
            out += ']';
            break;
        }
        case json::value_t::number_float:
            out += format_number(j.get<double>());
            break;
        default:
            out += j.dump();
    }
}

std::string render_ordered(const nlohmann::ordered_json& j) { return render_json(json::parse(j.dump())); }

}  // namespace

std::string render_json(const json& j) {
    std::string out;
    render_into(j, out);
    return out;
}

std::string reply_schema(const SearchSpace& space) {
    nlohmann::ordered_json properties = nlohmann::ordered_json::object();
    nlohmann::ordered_json required = nlohmann::ordered_json::array();
    for (const auto& p : space.params()) {
        nlohmann::ordered_json prop;
        switch (p.kind) {
            case ParamKind::integer_range:
                prop["type"] = "integer";
                prop["minimum"] = static_cast<std::int64_t>(p.low);
                prop["maximum"] = static_cast<std::int64_t>(p.high);
                break;
            case ParamKind::real_range:
                prop["type"] = "number";
                prop["minimum"] = p.low;
                prop["maximum"] = p.high;
                if (p.scale == space::Scale::log) prop["scale"] = "log";
                break;
            case ParamKind::categorical: {
                auto choices = nlohmann::ordered_json::array();
                for (const auto& c : p.choices) choices.push_back(nlohmann::ordered_json::parse(space::value_to_json(c).dump()));
                prop["enum"] = choices;
                break;
            }
        }
        properties[p.name] = prop;
        required.push_back(p.name);
    }
    properties["reasoning"] = {{"type", "object"}, {"additionalProperties", {{"type", "string"}}}};
    properties["expected_effect"] = {{"type", "string"}};
    required.push_back("reasoning");
    nlohmann::ordered_json schema;
    schema["type"] = "object";
    schema["additionalProperties"] = false;
    schema["required"] = required;
    schema["properties"] = properties;
    std::string out;
    // One property per line keeps the schema readable in transcripts.
    out += "{\"type\": \"object\", \"additionalProperties\": false,\n";
    out += " \"required\": " + render_ordered(required) + ",\n";
    out += " \"properties\": {\n";
    std::size_t i = 0;
    for (const auto& [k, v] : properties.items()) {
        out += "  " + json(k).dump() + ": " + render_ordered(v);
        out += (++i < properties.size()) ? ",\n" : "\n";
    }
    out += " }}";
    return out;
}

namespace {

std::string param_list(const SearchSpace& space) {
    std::string out;
    for (const auto& p : space.params()) {
        if (!out.empty()) out += ", ";
        out += p.name;
    }
    return out;
}

std::string config_line(const HyperparamConfig& config) { return render_json(json(config)); }

}  // namespace

PromptDocument build_prompt(const MetaKnowledgeBundle& bundle) {
    PromptDocument doc;
    doc.system_text =
        "You are an expert in hyperparameter optimization for deep time-series forecasting models. "
        "You reason about dataset characteristics, model behaviour and past trials, and you answer with "
        "exactly one JSON object and nothing else.";
    doc.schema_text = reply_schema(bundle.constrained_space);

    std::ostringstream u;
    u << kPromptVersion << "\n\n";

    u << "## 1. Task\n"
      << "Find the hyperparameter configuration lambda* = argmin over lambda in Lambda of L(M_lambda, D), "
         "where L is the RMSE of the trained forecaster on the chronological test segment and Lambda is "
         "the search space in section 5. Propose exactly one new configuration.\n\n";

    if (bundle.include_meta) {
        u << "## 2. Data meta-knowledge\n";
        for (const auto& f : bundle.data_meta) {
            const auto& s = f.summary;
            u << "### Feature: " << f.name << "\n"
              << "Summary: temporal dependence " << stats::to_string(s.temporal_dependence) << "; stationarity "
              << stats::to_string(s.stationarity) << "; trend " << stats::to_string(s.trend) << "; seasonality "
              << stats::to_string(s.seasonality) << "; noise level " << stats::to_string(s.noise_level) << ".\n";
            for (const auto& sentence : s.narrative) u << "- " << sentence << "\n";
            u << "Meta-features: " << render_json(json(f.vector)) << "\n";
        }
        if (bundle.data_meta.empty()) u << "No feature statistics available.\n";
        u << "\n";

        u << "## 3. Model description\n" << bundle.model_description << "\n\n";
    }

    std::vector<const Trial*> ranked;
    std::size_t failures = 0;
    for (const auto& t : bundle.history) {
        if (t.failed()) {
            ++failures;
        } else {
            ranked.push_back(&t);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Trial* a, const Trial* b) { return *a->loss < *b->loss; });
    if (ranked.size() > kHistoryLimit) ranked.resize(kHistoryLimit);
    u << "## 4. Optimization history (best first, at most " << kHistoryLimit << " trials)\n";
    if (ranked.empty()) u << "No successful trials yet.\n";
    for (const Trial* t : ranked) {
        u << "- " << t->trial_id << " [" << to_string(t->origin) << "] loss " << format_number(*t->loss) << ": "
          << config_line(t->config) << "\n";
    }
    if (failures > 0) u << "Failed evaluations so far: " << failures << ".\n";
    if (bundle.incumbent) {
        u << "Current best: " << bundle.incumbent->trial_id << " with loss " << format_number(bundle.incumbent->loss)
          << ".\n";
    }
    if (bundle.last_feedback) {
        const auto& fb = *bundle.last_feedback;
        u << "Previous recommendation: " << config_line(fb.config) << " -> "
          << (fb.loss ? "loss " + format_number(*fb.loss) : std::string("evaluation failed"));
        if (!fb.note.empty()) u << " (" << fb.note << ")";
        u << ".\n";
    }
    u << "\n";

    u << "## 5. Search space\n"
      << "Every value must lie inside these bounds (inclusive) or be one of the listed choices.\n"
      << render_json(space::space_to_json(bundle.constrained_space)) << "\n\n";

    u << "## 6. Target\n"
      << "Target loss: " << format_number(bundle.target_loss)
      << ". Recommend a configuration you expect to reach a loss at or below this target.\n\n";

    if (!bundle.few_shot.empty()) {
        u << "## 7. Examples\n";
        for (const auto& ex : bundle.few_shot) {
            u << "- input " << render_json(json(ex.input_window)) << " -> output " << render_json(json(ex.output)) << "\n";
        }
        u << "\n";
    }

    u << "## 8. Reply format\n"
      << "Reply with exactly one JSON object and no text before or after it. Use one key per hyperparameter ("
      << param_list(bundle.constrained_space)
      << "), each exactly once, plus a \"reasoning\" object that maps hyperparameter names to a short "
         "justification. An optional \"expected_effect\" string may be added. No other keys.\n"
      << "Schema:\n"
      << doc.schema_text << "\n";

    if (!bundle.corrective_feedback.empty()) {
        u << "\n## 9. Corrections\n"
          << "Your previous reply was rejected. Fix these problems:\n";
        for (const auto& c : bundle.corrective_feedback) u << "- " << c << "\n";
    }
    doc.user_text = u.str();
    return doc;
}

namespace {

class DuplicateKeySax : public json::json_sax_t {
public:
    std::optional<std::string> duplicate;

    bool null() override { return true; }
    bool boolean(bool) override { return true; }
    bool number_integer(number_integer_t) override { return true; }
    bool number_unsigned(number_unsigned_t) override { return true; }
    bool number_float(number_float_t, const string_t&) override { return true; }
    bool string(string_t&) override { return true; }
    bool binary(binary_t&) override { return true; }
    bool start_object(std::size_t) override {
        keys_.emplace_back();
        return true;
    }
    bool key(string_t& k) override {
        if (!keys_.back().insert(k).second) {
            duplicate = k;
            return false;
        }
        return true;
    }
    bool end_object() override {
        keys_.pop_back();
        return true;
    }
    bool start_array(std::size_t) override { return true; }
    bool end_array() override { return true; }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override {
        malformed = true;
        return false;
    }

    bool malformed = false;

private:
    std::vector<std::set<std::string>> keys_;
};

// End (one past the closing brace) of the balanced object starting at `open`.
std::optional<std::size_t> object_end(const std::string& text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::nullopt;
}

std::string strip_fences(const std::string& raw) {
    std::istringstream in(raw);
    std::string line, out;
    while (std::getline(in, line)) {
        std::string t = line;
        t.erase(0, t.find_first_not_of(" \t\r"));
        if (t.rfind("```", 0) == 0) {
            // Drop the fence line; text after a closing fence on the same line is kept.
            const std::string rest = t.substr(3);
            const bool is_language_tag =
                std::all_of(rest.begin(), rest.end(), [](unsigned char c) { return std::isalnum(c) || std::isspace(c); });
            if (!is_language_tag) out += rest + "\n";
            continue;
        }
        out += line + "\n";
    }
    return out;
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::optional<std::string> find_duplicate_key(const std::string& json_text) {
    DuplicateKeySax sax;
    json::sax_parse(json_text, &sax);
    if (sax.duplicate) return sax.duplicate;
    if (sax.malformed) throw Error(ErrorCode::NotJson, "text is not valid JSON");
    return std::nullopt;
}

ParseOutcome parse_response(const std::string& raw) {
    ParseOutcome out;
    const std::string text = strip_fences(raw);
    const auto open = text.find('{');
    if (open == std::string::npos) {
        out.error = ParseError{ErrorCode::NotJson, "no JSON object found"};
        return out;
    }
    const auto end = object_end(text, open);
    if (!end) {
        out.error = ParseError{ErrorCode::NotJson, "unterminated JSON object"};
        return out;
    }
    const std::string body = text.substr(open, *end - open);
    DuplicateKeySax sax;
    json::sax_parse(body, &sax);
    if (sax.duplicate) {
        out.error = ParseError{ErrorCode::DuplicateKey, *sax.duplicate};
        return out;
    }
    if (sax.malformed) {
        out.error = ParseError{ErrorCode::NotJson, "malformed JSON object"};
        return out;
    }
    const std::string rest = text.substr(*end);
    if (!is_blank(rest)) {
        const auto next = rest.find('{');
        if (next != std::string::npos) {
            if (const auto next_end = object_end(rest, next)) {
                if (json::accept(rest.substr(next, *next_end - next))) {
                    out.error = ParseError{ErrorCode::MultipleObjects, "more than one JSON object in reply"};
                    return out;
                }
            }
        }
        out.error = ParseError{ErrorCode::TrailingContent, "text after the JSON object"};
        return out;
    }
    out.value = json::parse(body);
    return out;
}

std::string RecommendationVerdict::describe() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += v.param + ": " + v.reason;
    }
    return out;
}

namespace {

std::string squash(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        if (c == '-' || c == '_' || std::isspace(c)) continue;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

// Numeric text, accepting the Unicode minus sign.
std::optional<double> numeric_text(std::string s) {
    const std::string minus = "\xE2\x88\x92";
    for (auto pos = s.find(minus); pos != std::string::npos; pos = s.find(minus)) s.replace(pos, minus.size(), "-");
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    if (!s.empty() && s.front() == '+') s.erase(0, 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<double> as_number(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return numeric_text(v.get<std::string>());
    return std::nullopt;
}

// Coerces a raw JSON value towards the parameter's type; nullopt + reason on failure.
std::optional<ParamValue> coerce(const ParamSpec& p, const json& v, std::string& reason) {
    if (p.kind == ParamKind::categorical) {
        if (v.is_string()) {
            if (auto r = resolve_alias(p, v.get<std::string>())) return r;
            reason = "value \"" + v.get<std::string>() + "\" is not among the allowed choices";
            return std::nullopt;
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            for (const auto& c : p.choices) {
                if (const auto* i = std::get_if<std::int64_t>(&c); i && static_cast<double>(*i) == x) return c;
                if (const auto* d = std::get_if<double>(&c); d && *d == x) return c;
            }
            reason = "value " + format_number(x) + " is not among the allowed choices";
            return std::nullopt;
        }
        reason = "expected one of the allowed choices";
        return std::nullopt;
    }
    if (p.kind == ParamKind::integer_range) {
        if (v.is_number_integer()) return ParamValue{v.get<std::int64_t>()};
        const auto x = as_number(v);
        if (!x) {
            reason = "expected an integer";
            return std::nullopt;
        }
        if (std::isfinite(*x) && std::floor(*x) == *x && std::abs(*x) < 9.0e15) return ParamValue{static_cast<std::int64_t>(*x)};
        reason = "expected an integer, got " + format_number(*x);
        return std::nullopt;
    }
    const auto x = as_number(v);
    if (!x) {
        reason = "expected a number";
        return std::nullopt;
    }
    return ParamValue{*x};
}

}  // namespace

std::optional<ParamValue> resolve_alias(const ParamSpec& spec, const std::string& label) {
    for (const auto& c : spec.choices) {
        if (const auto* s = std::get_if<std::string>(&c); s && *s == label) return c;
    }
    const std::string key = squash(label);
    for (const auto& c : spec.choices) {
        if (const auto* s = std::get_if<std::string>(&c); s && squash(*s) == key) return c;
    }
    return std::nullopt;
}

RecommendationVerdict validate_recommendation(const json& parsed, const SearchSpace& constrained_space) {
    RecommendationVerdict verdict;
    auto add = [&](const std::string& param, std::string reason) {
        verdict.violations.push_back({param, std::move(reason)});
    };
    if (!parsed.is_object()) {
        add("(reply)", "reply is not a JSON object");
        return verdict;
    }
    LlmRecommendation rec;
    for (const auto& [key, value] : parsed.items()) {
        if (key == "reasoning" || key == "expected_effect") continue;
        if (!constrained_space.find(key)) add(key, "unexpected key");
    }
    for (const auto& p : constrained_space.params()) {
        if (!parsed.contains(p.name)) {
            add(p.name, "missing parameter");
            continue;
        }
        std::string reason;
        if (auto v = coerce(p, parsed[p.name], reason)) {
            rec.config.assignments[p.name] = *v;
        } else {
            add(p.name, reason);
        }
    }
    if (!parsed.contains("reasoning")) {
        add("reasoning", "missing reasoning object");
    } else if (!parsed["reasoning"].is_object()) {
        add("reasoning", "reasoning must be an object");
    } else {
        for (const auto& [key, value] : parsed["reasoning"].items()) {
            if (!constrained_space.find(key)) {
                add("reasoning", "justification for unknown parameter '" + key + "'");
            } else if (!value.is_string()) {
                add("reasoning", "justification for '" + key + "' must be a string");
            } else {
                rec.reasoning[key] = value.get<std::string>();
            }
        }
    }
    if (parsed.contains("expected_effect")) {
        if (parsed["expected_effect"].is_string()) {
            rec.expected_effect = parsed["expected_effect"].get<std::string>();
        } else {
            add("expected_effect", "expected_effect must be a string");
        }
    }
    if (verdict.violations.empty()) {
        const auto bounds = space::validate_config(constrained_space, rec.config);
        verdict.violations = bounds.violations;
    } else {
        // Report bound problems of the coercible values too, so one retry can fix everything.
        for (const auto& v : space::validate_config(constrained_space, rec.config).violations) {
            if (v.reason != "missing parameter") verdict.violations.push_back(v);
        }
    }
    if (verdict.violations.empty()) verdict.recommendation = std::move(rec);
    return verdict;
}

json recommendation_to_json(const LlmRecommendation& rec) {
    json j = rec.config;
    j["reasoning"] = rec.reasoning;
    if (rec.expected_effect) j["expected_effect"] = *rec.expected_effect;
    return j;
}

}  // namespace metaopt::prompt
