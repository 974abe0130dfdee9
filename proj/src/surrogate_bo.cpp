#include "metaopt/surrogate_bo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "metaopt/clock.hpp"
#include "metaopt/error.hpp"
#include "metaopt/random.hpp"

namespace metaopt::bo {

using space::HyperparamConfig;
using space::ParamKind;
using space::ParamSpec;
using space::Scale;
using space::SearchSpace;

namespace {

double unit_coordinate(const ParamSpec& p, double value) {
    if (p.high == p.low) return 0.0;
    if (p.scale == Scale::log) {
        return (std::log(value) - std::log(p.low)) / (std::log(p.high) - std::log(p.low));
    }
    return (value - p.low) / (p.high - p.low);
}

double from_unit(const ParamSpec& p, double u) {
    u = std::clamp(u, 0.0, 1.0);
    double value = 0.0;
    if (p.scale == Scale::log) {
        value = std::exp(std::log(p.low) + u * (std::log(p.high) - std::log(p.low)));
    } else {
        value = p.low + u * (p.high - p.low);
    }
    return std::clamp(value, p.low, p.high);
}

}  // namespace

std::size_t encoded_dimension(const SearchSpace& space) {
    std::size_t d = 0;
    for (const auto& p : space.params()) d += p.kind == ParamKind::categorical ? p.choices.size() : 1;
    return d;
}

std::vector<double> encode(const SearchSpace& space, const HyperparamConfig& config) {
    const auto verdict = space::validate_config(space, config);
    if (!verdict.ok()) throw Error(ErrorCode::InvalidConfig, verdict.describe());
    std::vector<double> point;
    point.reserve(encoded_dimension(space));
    for (const auto& p : space.params()) {
        if (p.kind == ParamKind::categorical) {
            const auto& value = config.at(p.name);
            for (const auto& choice : p.choices) point.push_back(choice == value ? 1.0 : 0.0);
        } else {
            point.push_back(unit_coordinate(p, config.number(p.name)));
        }
    }
    return point;
}

HyperparamConfig decode(const SearchSpace& space, std::span<const double> point) {
    if (point.size() != encoded_dimension(space)) {
        throw Error(ErrorCode::InvalidConfig, "encoded point has the wrong dimension");
    }
    HyperparamConfig config;
    std::size_t offset = 0;
    for (const auto& p : space.params()) {
        if (p.kind == ParamKind::categorical) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < p.choices.size(); ++i) {
                if (point[offset + i] > point[offset + best]) best = i;
            }
            config.assignments[p.name] = p.choices[best];
            offset += p.choices.size();
            continue;
        }
        const double value = from_unit(p, point[offset++]);
        if (p.kind == ParamKind::integer_range) {
            config.assignments[p.name] =
                static_cast<std::int64_t>(std::clamp(std::round(value), p.low, p.high));
        } else {
            config.assignments[p.name] = value;
        }
    }
    return config;
}

double matern52(std::span<const double> a, std::span<const double> b, const KernelParams& kernel) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]) / kernel.length_scales[i];
        r2 += d * d;
    }
    const double sr = std::sqrt(5.0 * r2);
    return kernel.signal_variance * (1.0 + sr + 5.0 * r2 / 3.0) * std::exp(-sr);
}

namespace {

constexpr std::array<double, 7> kJitterLadder{0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5};
constexpr double kMaxJitter = 1e-4;

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x, const KernelParams& kernel) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const Eigen::RowVectorXd ri = x.row(i);
            const Eigen::RowVectorXd rj = x.row(j);
            k(i, j) = k(j, i) = matern52(std::span<const double>(ri.data(), static_cast<std::size_t>(ri.size())),
                                         std::span<const double>(rj.data(), static_cast<std::size_t>(rj.size())),
                                         kernel);
        }
    }
    k.diagonal().array() += kernel.noise_variance;
    return k;
}

// Cholesky with the jitter ladder; returns the jitter used or nullopt.
std::optional<double> factorize(const Eigen::MatrixXd& k, Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::Index n = k.rows();
    auto attempt = [&](double jitter) {
        llt.compute(k + jitter * Eigen::MatrixXd::Identity(n, n));
        return llt.info() == Eigen::Success;
    };
    for (double jitter : kJitterLadder) {
        if (attempt(jitter)) return jitter;
    }
    if (attempt(kMaxJitter)) return kMaxJitter;
    return std::nullopt;
}

double lml_from_factor(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& y) {
    const Eigen::VectorXd alpha = llt.solve(y);
    const Eigen::MatrixXd l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const double n = static_cast<double>(y.size());
    return -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

struct HyperBounds {
    double ls_low = std::log(0.01), ls_high = std::log(20.0);
    double sig_low = std::log(0.05), sig_high = std::log(20.0);
    double noise_low = std::log(1e-6), noise_high = std::log(0.2);
};

KernelParams unpack(const std::vector<double>& theta, std::size_t d) {
    KernelParams k;
    k.length_scales.resize(d);
    for (std::size_t i = 0; i < d; ++i) k.length_scales[i] = std::exp(theta[i]);
    k.signal_variance = std::exp(theta[d]);
    k.noise_variance = std::exp(theta[d + 1]);
    return k;
}

// Bounded Nelder-Mead (coordinates clamped into the box) minimizing f.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> start, const std::vector<double>& low,
                                const std::vector<double>& high, std::size_t max_evals) {
    const std::size_t m = start.size();
    auto clamp_point = [&](std::vector<double>& p) {
        for (std::size_t i = 0; i < m; ++i) p[i] = std::clamp(p[i], low[i], high[i]);
    };
    clamp_point(start);
    std::vector<std::vector<double>> simplex{start};
    for (std::size_t i = 0; i < m; ++i) {
        auto p = start;
        const double step = 0.25 * (high[i] - low[i]);
        p[i] = p[i] + step <= high[i] ? p[i] + step : p[i] - step;
        clamp_point(p);
        simplex.push_back(std::move(p));
    }
    std::vector<double> values;
    for (const auto& p : simplex) values.push_back(f(p));
    std::size_t evals = values.size();

    std::vector<std::size_t> order(m + 1);
    while (evals < max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[m - 1];
        if (std::isfinite(values[best]) && std::abs(values[worst] - values[best]) < 1e-9) break;

        std::vector<double> centroid(m, 0.0);
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t i = 0; i < m; ++i) centroid[i] += simplex[order[k]][i] / static_cast<double>(m);
        }
        auto along = [&](double t) {
            std::vector<double> p(m);
            for (std::size_t i = 0; i < m; ++i) p[i] = centroid[i] + t * (simplex[worst][i] - centroid[i]);
            clamp_point(p);
            return p;
        };
        auto reflected = along(-1.0);
        const double fr = f(reflected);
        ++evals;
        if (fr < values[best]) {
            auto expanded = along(-2.0);
            const double fe = f(expanded);
            ++evals;
            if (fe < fr) {
                simplex[worst] = std::move(expanded);
                values[worst] = fe;
            } else {
                simplex[worst] = std::move(reflected);
                values[worst] = fr;
            }
        } else if (fr < values[second]) {
            simplex[worst] = std::move(reflected);
            values[worst] = fr;
        } else {
            auto contracted = along(fr < values[worst] ? -0.5 : 0.5);
            const double fc = f(contracted);
            ++evals;
            if (fc < std::min(fr, values[worst])) {
                simplex[worst] = std::move(contracted);
                values[worst] = fc;
            } else {
                for (std::size_t k = 1; k <= m; ++k) {
                    auto& p = simplex[order[k]];
                    for (std::size_t i = 0; i < m; ++i) p[i] = simplex[best][i] + 0.5 * (p[i] - simplex[best][i]);
                    values[order[k]] = f(p);
                    ++evals;
                }
            }
        }
    }
    const auto best_it = std::min_element(values.begin(), values.end());
    return simplex[static_cast<std::size_t>(best_it - values.begin())];
}

}  // namespace

double log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               const KernelParams& kernel) {
    Eigen::LLT<Eigen::MatrixXd> llt;
    if (!factorize(kernel_matrix(inputs, kernel), llt)) return -std::numeric_limits<double>::infinity();
    const double lml = lml_from_factor(llt, targets);
    return std::isfinite(lml) ? lml : -std::numeric_limits<double>::infinity();
}

SurrogateState::SurrogateState(Eigen::MatrixXd inputs, Eigen::VectorXd targets, double target_mean,
                               double target_scale, KernelParams kernel)
    : inputs_(std::move(inputs)),
      targets_(std::move(targets)),
      target_mean_(target_mean),
      target_scale_(target_scale),
      kernel_(std::move(kernel)) {
    if (inputs_.rows() != targets_.size()) {
        throw Error(ErrorCode::InvalidConfig, "surrogate inputs and targets differ in count");
    }
    if (!(kernel_.noise_variance > 0.0)) {
        throw Error(ErrorCode::IllConditioned, "noise variance must be positive");
    }
    const auto jitter = factorize(kernel_matrix(inputs_, kernel_), cholesky_);
    if (!jitter) {
        throw Error(ErrorCode::IllConditioned, "kernel matrix is not positive definite after jitter 1e-4");
    }
    jitter_ = *jitter;
    alpha_ = cholesky_.solve(targets_);
    log_likelihood_ = lml_from_factor(cholesky_, targets_);
}

Prediction SurrogateState::predict(std::span<const double> point) const {
    const Eigen::Index n = inputs_.rows();
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd row = inputs_.row(i);
        k_star(i) = matern52(point, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                             kernel_);
    }
    Prediction out;
    out.mean = k_star.dot(alpha_);
    const Eigen::VectorXd v = cholesky_.matrixL().solve(k_star);
    out.variance = std::max(0.0, kernel_.signal_variance - v.squaredNorm());
    return out;
}

SurrogateState fit_surrogate(const TrialHistory& history, const SearchSpace& space, std::uint64_t seed) {
    std::vector<const Trial*> ok;
    for (const auto& t : history) {
        if (!t.failed()) ok.push_back(&t);
    }
    if (ok.size() < 2) {
        throw Error(ErrorCode::TooFewTrials, "surrogate needs at least 2 successful trials, got " +
                                                 std::to_string(ok.size()));
    }
    const std::size_t d = encoded_dimension(space);
    const auto n = static_cast<Eigen::Index>(ok.size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(d));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto point = encode(space, ok[static_cast<std::size_t>(i)]->config);
        for (std::size_t j = 0; j < d; ++j) x(i, static_cast<Eigen::Index>(j)) = point[j];
        y(i) = *ok[static_cast<std::size_t>(i)]->loss;
    }
    const double mean = y.mean();
    const double var = (y.array() - mean).square().mean();
    const double scale = var > 0.0 ? std::sqrt(var) : 1.0;
    const Eigen::VectorXd z = (y.array() - mean) / scale;

    const HyperBounds hb;
    std::vector<double> low(d + 2), high(d + 2);
    for (std::size_t i = 0; i < d; ++i) {
        low[i] = hb.ls_low;
        high[i] = hb.ls_high;
    }
    low[d] = hb.sig_low;
    high[d] = hb.sig_high;
    low[d + 1] = hb.noise_low;
    high[d + 1] = hb.noise_high;

    auto negative_lml = [&](const std::vector<double>& theta) {
        const double lml = log_marginal_likelihood(x, z, unpack(theta, d));
        return std::isfinite(lml) ? -lml : std::numeric_limits<double>::max();
    };

    std::vector<std::vector<double>> starts;
    std::vector<double> default_start(d + 2, std::log(0.5));
    default_start[d] = 0.0;
    default_start[d + 1] = std::log(1e-3);
    starts.push_back(default_start);
    Rng rng(seed);
    for (int s = 0; s < 4; ++s) {
        std::vector<double> theta(d + 2);
        for (std::size_t i = 0; i < d + 2; ++i) theta[i] = rng.uniform(low[i], high[i]);
        starts.push_back(std::move(theta));
    }
    const std::size_t budget = 40 * (d + 2) + 100;
    std::vector<double> best_theta = default_start;
    double best_value = negative_lml(default_start);
    for (const auto& start : starts) {
        auto theta = nelder_mead(negative_lml, start, low, high, budget);
        const double value = negative_lml(theta);
        if (value < best_value) {
            best_value = value;
            best_theta = std::move(theta);
        }
    }
    return SurrogateState(std::move(x), z, mean, scale, unpack(best_theta, d));
}

double expected_improvement(double mean, double sigma, double best) {
    const double gap = best - mean;
    if (!(sigma > 0.0)) return std::max(gap, 0.0);
    const double z = gap / sigma;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return std::max(0.0, gap * cdf + sigma * pdf);
}

double expected_improvement(const SurrogateState& state, std::span<const double> point, double best_loss) {
    const auto pred = state.predict(point);
    return expected_improvement(pred.mean, std::sqrt(pred.variance), state.standardize(best_loss));
}

namespace {

std::vector<int> first_primes(std::size_t count) {
    std::vector<int> primes;
    for (int candidate = 2; primes.size() < count; ++candidate) {
        const bool is_prime = std::none_of(primes.begin(), primes.end(),
                                           [&](int p) { return candidate % p == 0; });
        if (is_prime) primes.push_back(candidate);
    }
    return primes;
}

double radical_inverse(std::size_t index, int base) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * static_cast<double>(index % static_cast<std::size_t>(base));
        index /= static_cast<std::size_t>(base);
        f /= base;
    }
    return result;
}

// One coordinate per parameter in [0,1) -> configuration.
HyperparamConfig config_from_unit(const SearchSpace& space, std::span<const double> u) {
    HyperparamConfig config;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& p = space.params()[i];
        switch (p.kind) {
            case ParamKind::categorical: {
                auto idx = static_cast<std::size_t>(u[i] * static_cast<double>(p.choices.size()));
                config.assignments[p.name] = p.choices[std::min(idx, p.choices.size() - 1)];
                break;
            }
            case ParamKind::integer_range: {
                const double span = p.high - p.low + 1.0;
                const double v = std::min(p.low + std::floor(u[i] * span), p.high);
                config.assignments[p.name] = static_cast<std::int64_t>(v);
                break;
            }
            case ParamKind::real_range:
                config.assignments[p.name] = from_unit(p, u[i]);
                break;
        }
    }
    return config;
}

struct Scored {
    HyperparamConfig config;
    double ei;
};

}  // namespace

HyperparamConfig suggest_next(const SurrogateState& state, const SearchSpace& space, double best_loss,
                              std::uint64_t seed) {
    Rng rng(seed);
    const auto primes = first_primes(space.size());
    std::vector<double> shift(space.size());
    for (auto& s : shift) s = rng.uniform();

    auto score = [&](const HyperparamConfig& c) {
        const auto point = encode(space, c);
        return expected_improvement(state, point, best_loss);
    };

    std::vector<Scored> pool;
    pool.reserve(kCandidatePool);
    std::vector<double> u(space.size());
    for (std::size_t i = 1; i <= kCandidatePool; ++i) {
        for (std::size_t j = 0; j < space.size(); ++j) {
            const double h = radical_inverse(i, primes[j]) + shift[j];
            u[j] = h - std::floor(h);
        }
        auto config = config_from_unit(space, u);
        const double ei = score(config);
        pool.push_back({std::move(config), ei});
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Scored& a, const Scored& b) { return a.ei > b.ei; });

    Scored best = pool.front();
    const std::size_t starts = std::min(kRefinementStarts, pool.size());
    const double flip_probability = 1.0 / static_cast<double>(space.size());
    for (std::size_t s = 0; s < starts; ++s) {
        Scored current = pool[s];
        double step = 0.1;
        for (int iter = 0; iter < 40; ++iter) {
            auto point = encode(space, current.config);
            std::size_t offset = 0;
            for (const auto& p : space.params()) {
                if (p.kind == ParamKind::categorical) {
                    if (rng.uniform() < flip_probability) {
                        const auto pick = static_cast<std::size_t>(
                            rng.uniform_int(0, static_cast<std::int64_t>(p.choices.size()) - 1));
                        for (std::size_t c = 0; c < p.choices.size(); ++c) point[offset + c] = c == pick ? 1.0 : 0.0;
                    }
                    offset += p.choices.size();
                } else {
                    point[offset] = std::clamp(point[offset] + step * rng.normal(), 0.0, 1.0);
                    ++offset;
                }
            }
            auto candidate = decode(space, point);
            const double ei = score(candidate);
            if (ei > current.ei) {
                current = {std::move(candidate), ei};
            } else {
                step = std::max(step * 0.8, 1e-3);
            }
        }
        if (current.ei > best.ei) best = current;
    }
    return best.config;
}

BoResult run_bo(const Objective& objective, const SearchSpace& space, const BoOptions& options) {
    if (options.n_init < 2) throw Error(ErrorCode::InvalidRunConfig, "BO needs n_init >= 2");
    if (options.n_total < options.n_init) throw Error(ErrorCode::InvalidRunConfig, "BO needs n_total >= n_init");

    BoResult result;
    auto evaluate = [&](HyperparamConfig config, TrialOrigin origin, double t_acq, std::string note) {
        Trial trial;
        trial.trial_id = "trial_" + std::to_string(options.first_trial_index + result.history.size());
        trial.config = std::move(config);
        trial.origin = origin;
        trial.t_acq = t_acq;
        trial.diagnostics = std::move(note);
        try {
            const EvalResult r = objective(trial.config);
            trial.t_train = r.t_train;
            trial.t_eval = r.t_eval;
            if (r.diagnostics.is_object() && !r.diagnostics.empty()) {
                const std::string d = r.diagnostics.dump();
                trial.diagnostics = trial.diagnostics.empty() ? d : trial.diagnostics + "; " + d;
            }
            if (std::isfinite(r.loss)) {
                trial.loss = r.loss;
            } else if (trial.diagnostics.empty()) {
                trial.diagnostics = "objective returned a non-finite loss";
            }
        } catch (const std::exception& e) {
            trial.diagnostics = trial.diagnostics.empty() ? e.what() : trial.diagnostics + "; " + e.what();
        }
        result.history.push_back(trial);
        if (options.on_trial) options.on_trial(result.history.back());
    };

    Rng init_rng(options.seed);
    for (std::size_t i = 0; i < options.n_init; ++i) {
        evaluate(space::sample_uniform(space, init_rng), TrialOrigin::bo_init, 0.0, {});
    }
    const bool any_success = std::any_of(result.history.begin(), result.history.end(),
                                         [](const Trial& t) { return !t.failed(); });
    if (!any_success) {
        throw Error(ErrorCode::NoSuccessfulTrials, "every initial BO trial failed");
    }

    for (std::size_t i = options.n_init; i < options.n_total; ++i) {
        Stopwatch acquisition;
        const std::uint64_t fit_seed = derive_seed(options.seed, 2 * i);
        const std::uint64_t suggest_seed = derive_seed(options.seed, 2 * i + 1);
        HyperparamConfig next;
        std::string note;
        const auto successes = std::count_if(result.history.begin(), result.history.end(),
                                             [](const Trial& t) { return !t.failed(); });
        if (successes < 2) {
            next = space::sample_uniform(space, suggest_seed);
            note = "random fallback: fewer than 2 successful trials";
        } else {
            try {
                const auto state = fit_surrogate(result.history, space, fit_seed);
                next = suggest_next(state, space, incumbent(result.history).loss, suggest_seed);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::IllConditioned) throw;
                next = space::sample_uniform(space, suggest_seed);
                note = std::string("random fallback: ") + e.what();
            }
        }
        evaluate(std::move(next), TrialOrigin::bo_acquired, acquisition.seconds(), std::move(note));
    }
    result.incumbent = incumbent(result.history);
    return result;
}

}  // namespace metaopt::bo
