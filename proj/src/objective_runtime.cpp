#include "metaopt/objective_runtime.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "metaopt/clock.hpp"
#include "metaopt/error.hpp"
#include "metaopt/random.hpp"

namespace metaopt::objective {

using space::HyperparamConfig;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

DataSplit make_split(const SeriesDataset& dataset, double train_fraction, int horizon,
                     const std::string& target_feature) {
    dataset.check();
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "train_fraction must lie in (0, 1)");
    }
    if (horizon < 1) throw Error(ErrorCode::InvalidConfig, "horizon must be >= 1");
    const std::size_t t = dataset.length();
    if (t < 10) throw Error(ErrorCode::TooShort, "dataset needs at least 10 observations, has " + std::to_string(t));

    DataSplit split;
    split.train_fraction = train_fraction;
    split.horizon = horizon;
    split.target_feature = target_feature;
    split.target_index = dataset.feature_index(target_feature);
    split.length = t;
    split.boundary = static_cast<std::size_t>(std::floor(static_cast<double>(t) * train_fraction));
    if (split.boundary == 0 || split.boundary >= t) {
        throw Error(ErrorCode::TooShort, "split leaves an empty training or test segment");
    }
    for (std::size_t f = 0; f < dataset.values.size(); ++f) {
        double lo = INFINITY;
        double hi = -INFINITY;
        for (std::size_t i = 0; i < split.boundary; ++i) {
            if (const auto& v = dataset.values[f][i]) {
                lo = std::min(lo, *v);
                hi = std::max(hi, *v);
            }
        }
        if (!(lo < hi)) {
            throw Error(ErrorCode::ConstantFeature,
                        "feature '" + dataset.feature_names[f] + "' is constant or absent on the training segment");
        }
        split.scaling.push_back({lo, hi});
    }
    return split;
}

double rmse(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(actual.size()) + " actual vs " +
                                                   std::to_string(predicted.size()) + " predicted values");
    }
    if (actual.empty()) throw Error(ErrorCode::EmptyInput, "rmse of zero values");
    double sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!std::isfinite(actual[i]) || !std::isfinite(predicted[i])) {
            throw Error(ErrorCode::InvalidConfig, "rmse input is not finite");
        }
        const double r = actual[i] - predicted[i];
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(actual.size()));
}

WindowSet make_windows(const SeriesDataset& dataset, const DataSplit& split, int lag, bool test_segment) {
    if (lag < 1) throw Error(ErrorCode::InvalidConfig, "lag must be >= 1");
    const auto l = static_cast<std::size_t>(lag);
    const auto h = static_cast<std::size_t>(split.horizon);
    const std::size_t features = dataset.values.size();
    WindowSet out;
    const std::size_t first = l - 1 + h;
    const std::size_t begin = test_segment ? std::max(first, split.boundary) : first;
    const std::size_t end = test_segment ? split.length : split.boundary;
    for (std::size_t j = begin; j < end; ++j) {
        const auto& label = dataset.values[split.target_index][j];
        if (!label) continue;
        const std::size_t e = j - h;
        std::vector<double> input;
        input.reserve(l * features);
        bool complete = true;
        for (std::size_t i = e + 1 - l; i <= e && complete; ++i) {
            for (std::size_t f = 0; f < features; ++f) {
                const auto& v = dataset.values[f][i];
                if (!v) {
                    complete = false;
                    break;
                }
                input.push_back(split.scaling[f].scale(*v));
            }
        }
        if (!complete) continue;
        out.inputs.push_back(std::move(input));
        out.labels.push_back(split.scaling[split.target_index].scale(*label));
        out.label_index.push_back(j);
    }
    return out;
}

double persistence_rmse(const SeriesDataset& dataset, const DataSplit& split, int lag) {
    const WindowSet test = make_windows(dataset, split, lag, true);
    if (test.labels.empty()) throw Error(ErrorCode::TooShort, "no test windows");
    std::vector<double> actual, predicted;
    const auto& target = dataset.values[split.target_index];
    for (std::size_t j : test.label_index) {
        actual.push_back(*target[j]);
        predicted.push_back(*target[j - static_cast<std::size_t>(split.horizon)]);
    }
    return rmse(actual, predicted);
}

OptimizerKind optimizer_from_string(const std::string& name) {
    std::string n = name;
    std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
    if (n == "sgd") return OptimizerKind::sgd;
    if (n == "adam") return OptimizerKind::adam;
    if (n == "adamw") return OptimizerKind::adamw;
    if (n == "adamax") return OptimizerKind::adamax;
    if (n == "rmsprop") return OptimizerKind::rmsprop;
    throw Error(ErrorCode::InvalidConfig, "unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerKind kind, double lr, std::size_t n_params)
    : kind_(kind), lr_(lr), m_(n_params, 0.0), v_(n_params, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double t = static_cast<double>(t_);
    const double bc1 = 1.0 - std::pow(kBeta1, t);
    const double bc2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        switch (kind_) {
            case OptimizerKind::sgd:
                params[i] -= lr_ * g;
                break;
            case OptimizerKind::adamw:
                params[i] *= 1.0 - lr_ * kWeightDecay;
                [[fallthrough]];
            case OptimizerKind::adam: {
                m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
                v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
                const double m_hat = m_[i] / bc1;
                const double v_hat = v_[i] / bc2;
                params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kEps);
                break;
            }
            case OptimizerKind::adamax:
                m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
                v_[i] = std::max(kBeta2 * v_[i], std::abs(g) + kEps);
                params[i] -= lr_ / bc1 * m_[i] / v_[i];
                break;
            case OptimizerKind::rmsprop:
                v_[i] = kRmsAlpha * v_[i] + (1.0 - kRmsAlpha) * g * g;
                params[i] -= lr_ * g / (std::sqrt(v_[i]) + kEps);
                break;
        }
    }
}

namespace {

struct LayerView {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
};

std::vector<LayerView> layer_layout(std::size_t input_size, int hidden_size, int num_layers) {
    std::vector<LayerView> layers;
    std::size_t offset = 0;
    std::size_t in = input_size;
    for (int l = 0; l <= num_layers; ++l) {
        const std::size_t out = l == num_layers ? 1 : static_cast<std::size_t>(hidden_size);
        LayerView v{in, out, offset, offset + in * out};
        offset = v.b_offset + out;
        layers.push_back(v);
        in = out;
    }
    return layers;
}

Eigen::Map<const RowMatrix> weights(const std::vector<double>& p, const LayerView& v) {
    return {p.data() + v.w_offset, static_cast<Eigen::Index>(v.out), static_cast<Eigen::Index>(v.in)};
}

Eigen::Map<const Eigen::VectorXd> biases(const std::vector<double>& p, const LayerView& v) {
    return {p.data() + v.b_offset, static_cast<Eigen::Index>(v.out)};
}

std::int64_t int_param(const HyperparamConfig& config, const std::string& name) {
    const double x = config.number(name);
    if (!std::isfinite(x) || std::floor(x) != x) {
        throw Error(ErrorCode::InvalidConfig, name + " must be an integer");
    }
    return static_cast<std::int64_t>(x);
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::size_t ForecastModelState::parameter_count(std::size_t input_size, int hidden_size, int num_layers) {
    const auto layers = layer_layout(input_size, hidden_size, num_layers);
    return layers.back().b_offset + layers.back().out;
}

ForecastModelState ForecastModelState::initialize(int lag, std::size_t n_features, int hidden_size, int num_layers,
                                                  std::uint64_t seed) {
    ForecastModelState state;
    state.lag = lag;
    state.hidden_size = hidden_size;
    state.num_layers = num_layers;
    state.input_size = static_cast<std::size_t>(lag) * n_features;
    state.params.assign(parameter_count(state.input_size, hidden_size, num_layers), 0.0);
    Rng rng(seed);
    for (const auto& v : layer_layout(state.input_size, hidden_size, num_layers)) {
        const double bound = std::sqrt(6.0 / static_cast<double>(v.in + v.out));
        for (std::size_t i = 0; i < v.in * v.out; ++i) state.params[v.w_offset + i] = rng.uniform(-bound, bound);
    }
    return state;
}

double ForecastModelState::predict(std::span<const double> input) const {
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
    const auto layers = layer_layout(input_size, hidden_size, num_layers);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::VectorXd z = weights(params, layers[l]) * a + biases(params, layers[l]);
        a = l + 1 == layers.size() ? z : Eigen::VectorXd(z.array().tanh());
    }
    return a(0);
}

TrainingOutcome train_forecaster(const HyperparamConfig& config, const DataSplit& split, const SeriesDataset& dataset,
                                 std::uint64_t seed) {
    const auto lag = int_param(config, "lag");
    const auto hidden = int_param(config, "hidden_size");
    const auto layers_n = int_param(config, "num_layers");
    const auto batch_size = int_param(config, "batch_size");
    const auto epochs = int_param(config, "epochs");
    const double dropout = config.number("dropout");
    const double lr = config.number("lr");
    const OptimizerKind kind = optimizer_from_string(config.label("optimizer"));
    if (lag < 1 || hidden < 1 || layers_n < 1 || batch_size < 1 || epochs < 0) {
        throw Error(ErrorCode::InvalidConfig, "lag, hidden_size, num_layers, batch_size must be >= 1, epochs >= 0");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidConfig, "dropout must lie in [0, 1)");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::InvalidConfig, "lr must be finite and >= 0");

    const WindowSet train = make_windows(dataset, split, static_cast<int>(lag), false);
    const WindowSet test = make_windows(dataset, split, static_cast<int>(lag), true);
    if (train.labels.empty() || test.labels.empty()) {
        throw Error(ErrorCode::TooShort, "lag " + std::to_string(lag) + " leaves no training or test windows");
    }

    auto model = ForecastModelState::initialize(static_cast<int>(lag), dataset.values.size(), static_cast<int>(hidden),
                                                static_cast<int>(layers_n), derive_seed(seed, 0));
    TrainingOutcome outcome;
    outcome.initial_params = model.params;
    const auto layout = layer_layout(model.input_size, model.hidden_size, model.num_layers);
    const std::size_t n_layers = layout.size();
    Optimizer optimizer(kind, lr, model.params.size());
    Rng rng(derive_seed(seed, 1));

    const std::size_t n = train.labels.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> grad(model.params.size());
    const double keep_scale = 1.0 / (1.0 - dropout);

    Stopwatch train_clock;
    double epoch_mse = 0.0;
    for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
        }
        double sse = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
            const std::size_t b = std::min(static_cast<std::size_t>(batch_size), n - start);
            RowMatrix x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(model.input_size));
            Eigen::VectorXd y(static_cast<Eigen::Index>(b));
            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t idx = order[start + r];
                x.row(static_cast<Eigen::Index>(r)) =
                    Eigen::Map<const Eigen::RowVectorXd>(train.inputs[idx].data(), static_cast<Eigen::Index>(model.input_size));
                y(static_cast<Eigen::Index>(r)) = train.labels[idx];
            }

            // Forward pass, keeping post-dropout activations and masks.
            std::vector<RowMatrix> acts{x};
            std::vector<RowMatrix> tanhs;
            std::vector<RowMatrix> masks;
            for (std::size_t l = 0; l + 1 < n_layers; ++l) {
                RowMatrix z = acts.back() * weights(model.params, layout[l]).transpose();
                z.rowwise() += biases(model.params, layout[l]).transpose();
                RowMatrix a = z.array().tanh();
                RowMatrix mask = RowMatrix::Ones(a.rows(), a.cols());
                if (dropout > 0.0) {
                    for (Eigen::Index i = 0; i < mask.size(); ++i) {
                        mask.data()[i] = rng.uniform() < dropout ? 0.0 : keep_scale;
                    }
                }
                tanhs.push_back(a);
                acts.push_back(a.cwiseProduct(mask));
                masks.push_back(std::move(mask));
            }
            const auto& head = layout.back();
            Eigen::VectorXd out = acts.back() * weights(model.params, head).transpose();
            out.array() += model.params[head.b_offset];
            const Eigen::VectorXd resid = out - y;
            const double batch_sse = resid.squaredNorm();
            if (!std::isfinite(batch_sse)) {
                throw Error(ErrorCode::NonFiniteLoss, "training loss became non-finite in epoch " + std::to_string(epoch + 1));
            }
            sse += batch_sse;

            // Backward pass for the batch-mean squared error.
            Eigen::VectorXd d_out = resid * (2.0 / static_cast<double>(b));
            Eigen::Map<RowMatrix>(grad.data() + head.w_offset, 1, static_cast<Eigen::Index>(head.in)) =
                d_out.transpose() * acts.back();
            grad[head.b_offset] = d_out.sum();
            RowMatrix delta = d_out * weights(model.params, head);
            for (std::size_t l = n_layers - 1; l-- > 0;) {
                delta = delta.cwiseProduct(masks[l]);
                delta = delta.array() * (1.0 - tanhs[l].array().square());
                Eigen::Map<RowMatrix>(grad.data() + layout[l].w_offset, static_cast<Eigen::Index>(layout[l].out),
                                      static_cast<Eigen::Index>(layout[l].in)) = delta.transpose() * acts[l];
                Eigen::Map<Eigen::RowVectorXd>(grad.data() + layout[l].b_offset, static_cast<Eigen::Index>(layout[l].out)) =
                    delta.colwise().sum();
                if (l > 0) delta = delta * weights(model.params, layout[l]);
            }

            optimizer.step(model.params, grad);
            if (!all_finite(model.params)) {
                throw Error(ErrorCode::NonFiniteLoss, "weights became non-finite in epoch " + std::to_string(epoch + 1));
            }
        }
        epoch_mse = sse / static_cast<double>(n);
    }
    const double t_train = train_clock.seconds();

    Stopwatch eval_clock;
    const auto& target_scaling = split.scaling[split.target_index];
    std::vector<double> actual, predicted;
    actual.reserve(test.labels.size());
    predicted.reserve(test.labels.size());
    for (std::size_t i = 0; i < test.labels.size(); ++i) {
        actual.push_back(target_scaling.unscale(test.labels[i]));
        predicted.push_back(target_scaling.unscale(model.predict(test.inputs[i])));
    }
    if (!all_finite(predicted)) throw Error(ErrorCode::NonFiniteLoss, "test predictions are non-finite");
    const double loss = rmse(actual, predicted);
    const double t_eval = eval_clock.seconds();

    outcome.eval.loss = loss;
    outcome.eval.t_train = t_train;
    outcome.eval.t_eval = t_eval;
    outcome.eval.n_test = test.labels.size();
    outcome.eval.diagnostics = {{"train_windows", n},
                                {"n_params", model.params.size()},
                                {"final_train_mse", epoch_mse}};
    outcome.final_params = std::move(model.params);
    outcome.final_train_mse = epoch_mse;
    return outcome;
}

EvalResult train_builtin_forecaster(const HyperparamConfig& config, const DataSplit& split, const SeriesDataset& dataset,
                                    std::uint64_t seed) {
    return train_forecaster(config, split, dataset, seed).eval;
}

void TrainerSpec::check() const {
    if (!(timeout.count() > 0.0)) throw Error(ErrorCode::InvalidRunConfig, "trainer timeout must be positive");
    if (kind == Kind::subprocess && command.empty()) {
        throw Error(ErrorCode::InvalidRunConfig, "subprocess trainer needs a command");
    }
}

void to_json(nlohmann::json& j, const TrainerSpec& spec) {
    j = {{"kind", spec.kind == TrainerSpec::Kind::builtin ? "builtin" : "subprocess"},
         {"command", spec.command},
         {"timeout", spec.timeout.count()},
         {"data_path", spec.data_path.string()}};
}

void from_json(const nlohmann::json& j, TrainerSpec& spec) {
    const std::string kind = j.value("kind", std::string("builtin"));
    if (kind == "builtin") {
        spec.kind = TrainerSpec::Kind::builtin;
    } else if (kind == "subprocess") {
        spec.kind = TrainerSpec::Kind::subprocess;
    } else {
        throw Error(ErrorCode::InvalidRunConfig, "unknown trainer kind '" + kind + "'");
    }
    spec.command = j.value("command", std::vector<std::string>{});
    spec.timeout = std::chrono::duration<double>(j.value("timeout", 600.0));
    spec.data_path = j.value("data_path", std::string{});
    spec.check();
}

namespace {

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

std::string excerpt(const std::string& text, std::size_t limit = 2000) {
    if (text.size() <= limit) return text;
    return text.substr(0, limit) + "...[truncated]";
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& stdin_text,
                          std::chrono::duration<double> timeout) {
    if (argv.empty()) throw Error(ErrorCode::Io, "empty command");
    ignore_sigpipe();
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(ErrorCode::Io, std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error(ErrorCode::Io, std::string("pipe: ") + std::strerror(errno));
    }
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        throw Error(ErrorCode::Io, std::string("pipe: ") + std::strerror(errno));
    }

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
        throw Error(ErrorCode::Io, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::signal(SIGPIPE, SIG_DFL);
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::execvp(args[0], args.data());
        const std::string msg = std::string("exec ") + argv[0] + ": " + std::strerror(errno) + "\n";
        [[maybe_unused]] auto ignored = ::write(STDERR_FILENO, msg.data(), msg.size());
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    int fd_in = in_pipe[1], fd_out = out_pipe[0], fd_err = err_pipe[0];
    ::fcntl(fd_in, F_SETFL, O_NONBLOCK);
    ::fcntl(fd_out, F_SETFL, O_NONBLOCK);
    ::fcntl(fd_err, F_SETFL, O_NONBLOCK);

    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout);
    std::size_t written = 0;
    if (stdin_text.empty()) close_fd(fd_in);
    char buf[65536];
    while (fd_out >= 0 || fd_err >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            break;
        }
        std::vector<pollfd> fds;
        if (fd_in >= 0) fds.push_back({fd_in, POLLOUT, 0});
        if (fd_out >= 0) fds.push_back({fd_out, POLLIN, 0});
        if (fd_err >= 0) fds.push_back({fd_err, POLLIN, 0});
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
        const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(remaining, 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (const auto& p : fds) {
            if (p.revents == 0) continue;
            if (p.fd == fd_in) {
                const ssize_t w = ::write(fd_in, stdin_text.data() + written, stdin_text.size() - written);
                if (w > 0) written += static_cast<std::size_t>(w);
                if (w < 0 && errno != EAGAIN && errno != EINTR) close_fd(fd_in);
                if (written == stdin_text.size()) close_fd(fd_in);
            } else {
                const ssize_t r = ::read(p.fd, buf, sizeof buf);
                if (r > 0) {
                    (p.fd == fd_out ? result.stdout_text : result.stderr_text).append(buf, static_cast<std::size_t>(r));
                } else if (r == 0 || (errno != EAGAIN && errno != EINTR)) {
                    if (p.fd == fd_out) {
                        close_fd(fd_out);
                    } else {
                        close_fd(fd_err);
                    }
                }
            }
        }
    }
    close_fd(fd_in);
    close_fd(fd_out);
    close_fd(fd_err);

    int status = 0;
    if (!result.timed_out) {
        for (;;) {
            const pid_t w = ::waitpid(pid, &status, WNOHANG);
            if (w == pid) break;
            if (w < 0 && errno != EINTR) break;
            if (std::chrono::steady_clock::now() >= deadline) {
                result.timed_out = true;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    }
    if (result.timed_out) {
        ::kill(-pid, SIGKILL);
        ::kill(pid, SIGKILL);
        while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
        }
        result.exit_code = -1;
        return result;
    }
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

nlohmann::json make_trainer_request(const HyperparamConfig& config, const std::filesystem::path& data_path,
                                    const DataSplit& split, std::uint64_t seed) {
    return {{"protocol", kTrainerProtocol},
            {"config", config},
            {"data_path", data_path.string()},
            {"train_fraction", split.train_fraction},
            {"horizon", split.horizon},
            {"target_feature", split.target_feature},
            {"seed", seed}};
}

EvalResult parse_trainer_reply(const nlohmann::json& reply) {
    if (!reply.is_object()) throw Error(ErrorCode::ProtocolViolation, "reply is not a JSON object");
    if (reply.contains("error")) {
        const auto& e = reply["error"];
        throw Error(ErrorCode::TrainerError, e.is_string() ? e.get<std::string>() : e.dump());
    }
    auto number = [&](const char* key) {
        if (!reply.contains(key) || !reply[key].is_number()) {
            throw Error(ErrorCode::ProtocolViolation, std::string("reply field '") + key + "' missing or not a number");
        }
        const double v = reply[key].get<double>();
        if (!std::isfinite(v) || v < 0.0) {
            throw Error(ErrorCode::ProtocolViolation, std::string("reply field '") + key + "' must be finite and >= 0");
        }
        return v;
    };
    EvalResult r;
    r.loss = number("loss");
    r.t_train = number("t_train");
    r.t_eval = number("t_eval");
    if (!reply.contains("n_test") || !reply["n_test"].is_number_integer() || reply["n_test"].get<std::int64_t>() < 1) {
        throw Error(ErrorCode::ProtocolViolation, "reply field 'n_test' must be an integer >= 1");
    }
    r.n_test = reply["n_test"].get<std::size_t>();
    if (reply.contains("diagnostics") && !reply["diagnostics"].is_null()) {
        if (!reply["diagnostics"].is_object()) {
            throw Error(ErrorCode::ProtocolViolation, "reply field 'diagnostics' must be an object");
        }
        r.diagnostics = reply["diagnostics"];
    }
    for (const auto& [key, value] : reply.items()) {
        static const std::vector<std::string> known{"loss", "t_train", "t_eval", "n_test", "diagnostics"};
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw Error(ErrorCode::ProtocolViolation, "unexpected reply field '" + key + "'");
        }
    }
    return r;
}

namespace {

// Exactly one newline-terminated line, nothing else.
std::optional<std::string> single_line(const std::string& text) {
    if (text.empty() || text.back() != '\n') return std::nullopt;
    const std::string line = text.substr(0, text.size() - 1);
    if (line.find('\n') != std::string::npos) return std::nullopt;
    return line;
}

}  // namespace

EvalResult evaluate_subprocess(const TrainerSpec& spec, const HyperparamConfig& config, const DataSplit& split,
                               std::uint64_t seed) {
    spec.check();
    const std::string request = make_trainer_request(config, spec.data_path, split, seed).dump() + "\n";
    const ProcessResult p = run_process(spec.command, request, spec.timeout);
    const std::string context =
        "; stdout: " + excerpt(p.stdout_text) + (p.stderr_text.empty() ? "" : "; stderr: " + excerpt(p.stderr_text));
    if (p.timed_out) {
        throw Error(ErrorCode::TrainerTimeout,
                    "trainer exceeded " + std::to_string(spec.timeout.count()) + " s" + context);
    }
    const auto line = single_line(p.stdout_text);
    nlohmann::json reply;
    if (line) reply = nlohmann::json::parse(*line, nullptr, false);
    if (p.exit_code != 0) {
        std::string reason = "trainer exited with status " + std::to_string(p.exit_code);
        if (reply.is_object() && reply.contains("error")) reason += ": " + reply["error"].dump();
        throw Error(ErrorCode::NonZeroExit, reason + context);
    }
    if (!line) throw Error(ErrorCode::ProtocolViolation, "expected exactly one reply line" + context);
    if (reply.is_discarded()) throw Error(ErrorCode::ProtocolViolation, "reply is not JSON" + context);
    EvalResult r;
    try {
        r = parse_trainer_reply(reply);
    } catch (const Error& e) {
        throw Error(e.code(), std::string(e.what()) + context);
    }
    if (!p.stderr_text.empty()) r.diagnostics["stderr"] = excerpt(p.stderr_text);
    return r;
}

std::pair<nlohmann::json, bool> handle_trainer_request(const std::string& request_line) {
    try {
        const auto request = nlohmann::json::parse(request_line, nullptr, false);
        if (request.is_discarded() || !request.is_object()) return {{{"error", "malformed request"}}, false};
        if (request.value("protocol", std::string{}) != kTrainerProtocol) {
            return {{{"error", "unsupported protocol '" + request.value("protocol", std::string{}) + "'"}}, false};
        }
        for (const char* key : {"config", "data_path", "train_fraction", "horizon", "target_feature", "seed"}) {
            if (!request.contains(key)) return {{{"error", std::string("missing field '") + key + "'"}}, false};
        }
        const auto config = request["config"].get<HyperparamConfig>();
        const auto dataset = load_dataset(request["data_path"].get<std::string>());
        const auto split = make_split(dataset, request["train_fraction"].get<double>(),
                                      request["horizon"].get<int>(), request["target_feature"].get<std::string>());
        const auto r = train_builtin_forecaster(config, split, dataset, request["seed"].get<std::uint64_t>());
        return {{{"loss", r.loss}, {"t_train", r.t_train}, {"t_eval", r.t_eval}, {"n_test", r.n_test},
                 {"diagnostics", r.diagnostics}},
                true};
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFiniteLoss) return {{{"error", "non-finite loss"}}, true};
        return {{{"error", e.what()}}, false};
    } catch (const std::exception& e) {
        return {{{"error", e.what()}}, false};
    }
}

Objective make_objective(const TrainerSpec& spec, const SeriesDataset& dataset, const DataSplit& split,
                         std::uint64_t seed) {
    spec.check();
    if (spec.kind == TrainerSpec::Kind::subprocess) {
        return [spec, split, seed](const HyperparamConfig& config) {
            return evaluate_subprocess(spec, config, split, seed);
        };
    }
    auto data = std::make_shared<const SeriesDataset>(dataset);
    return [data, split, seed](const HyperparamConfig& config) {
        return train_builtin_forecaster(config, split, *data, seed);
    };
}

namespace {

HyperparamConfig check_config(std::int64_t lag, std::int64_t hidden, std::int64_t layers, double dropout, double lr,
                              std::int64_t batch, std::int64_t epochs, const std::string& optimizer) {
    HyperparamConfig c;
    c.assignments = {{"lag", lag},         {"hidden_size", hidden}, {"num_layers", layers},
                     {"dropout", dropout}, {"lr", lr},              {"batch_size", batch},
                     {"epochs", epochs},   {"optimizer", optimizer}};
    return c;
}

}  // namespace

std::vector<ConformanceCheck> trainer_check(const std::vector<std::string>& command,
                                            const std::filesystem::path& work_dir,
                                            std::chrono::duration<double> timeout) {
    std::filesystem::create_directories(work_dir);
    const auto csv = work_dir / "trainer_check.csv";
    const SeriesDataset data = synthetic_ar2(200, 7);
    write_csv(data, csv);
    const DataSplit split = make_split(data, 0.7, 4, "target");
    std::vector<ConformanceCheck> checks;

    auto call = [&](const nlohmann::json& request) { return run_process(command, request.dump() + "\n", timeout); };
    auto reply_of = [](const ProcessResult& p) -> std::optional<nlohmann::json> {
        const auto line = single_line(p.stdout_text);
        if (!line) return std::nullopt;
        auto j = nlohmann::json::parse(*line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) return std::nullopt;
        return j;
    };

    const auto config = check_config(8, 16, 1, 0.1, 1e-3, 32, 3, "Adam");
    const auto request = make_trainer_request(config, csv, split, 0);
    std::optional<double> first_loss;
    {
        ConformanceCheck c{"handshake", false, {}};
        const auto p = call(request);
        const auto reply = reply_of(p);
        if (p.timed_out) {
            c.detail = "timed out";
        } else if (p.exit_code != 0) {
            c.detail = "exit status " + std::to_string(p.exit_code) + "; stderr: " + excerpt(p.stderr_text, 400);
        } else if (!reply) {
            c.detail = "stdout is not exactly one JSON object line: " + excerpt(p.stdout_text, 400);
        } else {
            try {
                const auto r = parse_trainer_reply(*reply);
                first_loss = r.loss;
                c.passed = true;
                c.detail = "loss " + std::to_string(r.loss) + ", n_test " + std::to_string(r.n_test);
            } catch (const Error& e) {
                c.detail = e.what();
            }
        }
        checks.push_back(c);
    }
    {
        ConformanceCheck c{"determinism", false, {}};
        const auto reply = reply_of(call(request));
        if (!first_loss || !reply || !reply->contains("loss") || !(*reply)["loss"].is_number()) {
            c.detail = "no comparable pair of replies";
        } else {
            const double second = (*reply)["loss"].get<double>();
            c.passed = std::abs(second - *first_loss) <= 1e-9 * std::max(1.0, std::abs(*first_loss));
            c.detail = "losses " + std::to_string(*first_loss) + " and " + std::to_string(second);
        }
        checks.push_back(c);
    }
    auto expect_error = [&](const std::string& name, const std::string& payload) {
        ConformanceCheck c{name, false, {}};
        const auto p = run_process(command, payload, timeout);
        const auto reply = reply_of(p);
        if (p.timed_out) {
            c.detail = "timed out";
        } else if (!reply || !reply->contains("error") || !(*reply)["error"].is_string()) {
            c.detail = "expected one {\"error\": ...} line, got: " + excerpt(p.stdout_text, 400);
        } else if (p.exit_code == 0) {
            c.detail = "error reply but exit status 0";
        } else {
            c.passed = true;
            c.detail = (*reply)["error"].get<std::string>();
        }
        checks.push_back(c);
    };
    auto bad = request;
    bad["protocol"] = "metaopt-trainer/0";
    expect_error("unknown-protocol", bad.dump() + "\n");
    expect_error("malformed-request", "{not json\n");
    {
        ConformanceCheck c{"no-learning", false, {}};
        const auto frozen = check_config(3, 5, 6, 0.5, 1e-9, 128, 10, "Adam");
        auto untrained = frozen;
        untrained.assignments["epochs"] = std::int64_t{0};
        const auto a = reply_of(call(make_trainer_request(frozen, csv, split, 0)));
        const auto b = reply_of(call(make_trainer_request(untrained, csv, split, 0)));
        try {
            if (!a || !b) throw Error(ErrorCode::ProtocolViolation, "missing reply");
            const double la = parse_trainer_reply(*a).loss;
            const double lb = parse_trainer_reply(*b).loss;
            c.passed = std::abs(la - lb) <= 0.05 * lb;
            c.detail = "lr 1e-9 loss " + std::to_string(la) + " vs untrained " + std::to_string(lb);
        } catch (const Error& e) {
            c.detail = e.what();
        }
        checks.push_back(c);
    }
    return checks;
}

}  // namespace metaopt::objective
