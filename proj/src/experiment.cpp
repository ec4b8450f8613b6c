#include "caution/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "caution/theory.hpp"
#include "caution/tolerances.hpp"

namespace caution {

namespace {

using nlohmann::json;

constexpr double kZ95 = 1.959963984540054;
constexpr std::uint64_t kWorldStream = std::numeric_limits<std::uint64_t>::max();

enum TrialSubstream : std::uint64_t { kCandidates = 0, kRnd = 1, kMethods = 2 };

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
T get_field(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, std::string("invalid value (") + e.what() + ")");
    }
}

std::string get_choice(const json& j, const std::string& key, std::initializer_list<const char*> allowed) {
    const auto value = get_field<std::string>(j, key);
    for (const char* a : allowed) {
        if (value == a) {
            return value;
        }
    }
    std::string options;
    for (const char* a : allowed) {
        options += options.empty() ? a : std::string("|") + a;
    }
    throw ConfigError(key, "unknown value '" + value + "' (expected " + options + ")");
}

Matrix read_factor_file(const std::string& path, std::size_t d) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("sigma_factor_file", "cannot open '" + path + "'");
    }
    Matrix a(d, d);
    for (double& v : a.flat()) {
        if (!(in >> v)) {
            throw ConfigError("sigma_factor_file", "expected " + std::to_string(d * d) +
                                                       " numbers (a d x d factor, row-major)");
        }
    }
    double extra = 0.0;
    if (in >> extra) {
        throw ConfigError("sigma_factor_file", "more than d x d numbers in '" + path + "'");
    }
    return a;
}

CovarianceFactor make_cov(const ExperimentConfig& cfg) {
    switch (cfg.sigma) {
        case SigmaKind::identity: return CovarianceFactor::identity(cfg.d);
        case SigmaKind::diagonal: return CovarianceFactor::diagonal(cfg.sigma_diagonal);
        case SigmaKind::factor_file: return CovarianceFactor(read_factor_file(cfg.sigma_factor_file, cfg.d));
    }
    throw ConfigError("sigma", "unsupported kind");
}

RndModel make_rnd(const ExperimentConfig& cfg, const World& world, RngStream rng) {
    RndModel model = cfg.rnd_variant == RndVariant::linear
                         ? RndModel(init_linear_rnd(cfg.d, cfg.m, world.subspace, rng))
                         : RndModel(init_relu_rnd(cfg.d, cfg.m, cfg.ensemble, world.subspace, rng));
    if (cfg.rnd_training == RndTraining::idealized) {
        return train_idealized(std::move(model));
    }
    std::vector<Vector> training_set;
    training_set.reserve(cfg.train_samples);
    Vector y(cfg.d);
    for (std::size_t i = 0; i < cfg.train_samples; ++i) {
        world.cov.sample_into(rng, y);
        training_set.push_back(world.subspace->project_v(y));
    }
    GradientOptions options{cfg.train_learning_rate, cfg.train_epochs,
                            cfg.rnd_variant == RndVariant::relu ? kTolerances.training_convergence : 0.0};
    return std::visit(
        [&](auto m) -> RndModel { return train_gradient(std::move(m), training_set, options).model; },
        std::move(model));
}

// Fast uncertainty evaluation for one trial.
class UncertaintyEvaluator {
public:
    UncertaintyEvaluator(const RndModel& model, UncertaintyVariant variant)
        : model_(model), variant_(variant) {
        if (const auto* lin = std::get_if<LinearRnd>(&model)) {
            error_ = lin->w_hat - lin->w_star;
        }
    }

    double operator()(std::span<const double> y) const {
        if (!error_.empty()) {
            double sq = 0.0;
            for (std::size_t i = 0; i < error_.rows(); ++i) {
                const double e = dot(error_.row(i), y);
                sq += e * e;
            }
            return variant_ == UncertaintyVariant::squared ? sq : std::sqrt(sq);
        }
        return uncertainty(model_, y, variant_);
    }

private:
    const RndModel& model_;
    UncertaintyVariant variant_;
    Matrix error_;
};

// Candidates of one trial, generated on demand from the trial's candidate stream.
struct CandidatePool {
    const World& world;
    const UncertaintyEvaluator& alpha;
    RngStream rng;
    Vector y;
    std::vector<double> truth;
    std::vector<double> proxy;
    std::vector<double> uncertainty;
    std::vector<double> perp_norm;

    void ensure(std::size_t count) {
        while (truth.size() < count) {
            world.cov.sample_into(rng, y);
            truth.push_back(world.rewards.eval_true(y));
            proxy.push_back(world.rewards.eval_proxy(y));
            uncertainty.push_back(alpha(y));
            perp_norm.push_back(norm(world.subspace->project_perp(y)));
        }
    }
};

struct RowKey {
    std::size_t n;
    std::size_t method_index;
    std::size_t lambda_index;  // only meaningful for lcb
};

struct TrialOutput {
    std::vector<double> value;
    std::vector<double> uncertainty;
    std::vector<double> epsilon;
};

struct Plan {
    std::vector<RowKey> rows;
    std::vector<double> lambdas;
};

Plan make_plan(const ExperimentConfig& cfg, const World& world) {
    Plan plan;
    for (double l : cfg.lambdas) {
        plan.lambdas.push_back(cfg.lambda_units == LambdaUnits::corruption_norm ? l * world.corruption_norm : l);
    }
    for (std::size_t n : cfg.n_grid) {
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            if (cfg.methods[mi].method == Method::lcb) {
                for (std::size_t li = 0; li < plan.lambdas.size(); ++li) {
                    plan.rows.push_back({n, mi, li});
                }
            } else {
                plan.rows.push_back({n, mi, 0});
            }
        }
    }
    return plan;
}

TrialOutput run_trial(const ExperimentConfig& cfg, const World& world, const Plan& plan, std::size_t trial) {
    const RngStream stream = derive_stream(cfg.seed, trial);
    std::optional<RndModel> fresh;
    if (!world.shared_rnd) {
        fresh = make_rnd(cfg, world, stream.split(kRnd));
    }
    const RndModel& model = fresh ? *fresh : *world.shared_rnd;
    const UncertaintyEvaluator alpha(model, cfg.alpha_variant);
    CandidatePool pool{world, alpha, stream.split(kCandidates), Vector(cfg.d), {}, {}, {}, {}};
    RngStream method_rng = stream.split(kMethods);

    const std::size_t max_n = cfg.n_grid.back();
    pool.ensure(max_n);

    // Running argmax over growing prefixes; ties keep the earliest index.
    const std::size_t n_lambdas = plan.lambdas.size();
    std::size_t best_true = 0;
    std::size_t best_proxy = 0;
    std::vector<std::size_t> best_lcb(n_lambdas, 0);
    std::vector<double> best_lcb_score(n_lambdas);
    for (std::size_t li = 0; li < n_lambdas; ++li) {
        best_lcb_score[li] = pool.proxy[0] - plan.lambdas[li] * pool.uncertainty[0];
    }
    double eps = 0.0;

    TrialOutput out;
    out.value.resize(plan.rows.size());
    out.uncertainty.resize(plan.rows.size());
    out.epsilon.reserve(cfg.n_grid.size());

    std::vector<Candidate> slate;
    std::size_t row = 0;
    std::size_t scanned = 0;
    for (std::size_t n : cfg.n_grid) {
        for (; scanned < n; ++scanned) {
            const std::size_t i = scanned;
            if (pool.truth[i] > pool.truth[best_true]) {
                best_true = i;
            }
            if (pool.proxy[i] > pool.proxy[best_proxy]) {
                best_proxy = i;
            }
            for (std::size_t li = 0; li < n_lambdas; ++li) {
                const double s = pool.proxy[i] - plan.lambdas[li] * pool.uncertainty[i];
                if (s > best_lcb_score[li]) {
                    best_lcb_score[li] = s;
                    best_lcb[li] = i;
                }
            }
            const double a = pool.uncertainty[i];
            const double p = pool.perp_norm[i];
            eps = std::max({eps, a - p, (1.0 - cfg.epsilon_c) * p - a});
        }
        out.epsilon.push_back(eps);

        while (row < plan.rows.size() && plan.rows[row].n == n) {
            const RowKey& key = plan.rows[row];
            const MethodSpec& spec = cfg.methods[key.method_index];
            std::size_t chosen = 0;
            switch (spec.method) {
                case Method::oracle: chosen = best_true; break;
                case Method::bon: chosen = best_proxy; break;
                case Method::lcb: chosen = best_lcb[key.lambda_index]; break;
                case Method::softmax: {
                    slate.resize(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        slate[i].index = i;
                        slate[i].proxy_score = pool.proxy[i];
                        slate[i].uncertainty = pool.uncertainty[i];
                    }
                    chosen = select_softmax(slate, spec.temperature, method_rng).chosen_index;
                    break;
                }
                case Method::poisson: {
                    const std::size_t size = draw_poisson_slate_size(static_cast<double>(n), method_rng);
                    pool.ensure(size);
                    chosen = argmax_first(std::span<const double>(pool.proxy.data(), size));
                    break;
                }
            }
            out.value[row] = pool.truth[chosen];
            out.uncertainty[row] = pool.uncertainty[chosen];
            ++row;
        }
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

double parse_number(const std::string& s, std::size_t line, const char* column) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("results csv: line " + std::to_string(line) + ": bad " + column + " '" + s + "'");
    }
}

}  // namespace

MethodSpec parse_method_spec(const std::string& text) {
    MethodSpec spec;
    spec.label = text;
    const auto open = text.find('(');
    const std::string name = text.substr(0, open);
    spec.method = parse_method(name);
    if (open != std::string::npos) {
        if (text.back() != ')' || spec.method != Method::softmax) {
            throw std::invalid_argument("method '" + text + "': only softmax(<temperature>) takes a parameter");
        }
        const std::string arg = text.substr(open + 1, text.size() - open - 2);
        try {
            spec.temperature = std::stod(arg);
        } catch (const std::exception&) {
            throw std::invalid_argument("method '" + text + "': bad temperature");
        }
    }
    return spec;
}

void ExperimentConfig::validate() const {
    if (d == 0) throw ConfigError("d", "must be at least 1");
    if (k == 0 || k > d) throw ConfigError("k", "need 1 <= k <= d");
    if (rho > 0.0 && k == d) throw ConfigError("rho", "corruption needs k < d (V-perp is empty)");
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("rho", "must be finite and >= 0");
    if (m == 0) throw ConfigError("m", "must be at least 1");
    if (ensemble == 0) throw ConfigError("T", "must be at least 1");
    if (trials == 0) throw ConfigError("trials", "must be at least 1");
    if (workers == 0) throw ConfigError("workers", "must be at least 1");
    if (n_grid.empty()) throw ConfigError("n_grid", "must not be empty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        if (n_grid[i] == 0) throw ConfigError("n_grid", "entries must be >= 1");
        if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ConfigError("n_grid", "must be sorted strictly ascending");
    }
    if (methods.empty()) throw ConfigError("methods", "must not be empty");
    std::set<std::string> labels;
    for (const MethodSpec& spec : methods) {
        if (!labels.insert(spec.label).second) throw ConfigError("methods", "duplicate method '" + spec.label + "'");
        if (spec.method == Method::softmax && !(spec.temperature > 0.0)) {
            throw ConfigError("methods", "softmax temperature must be positive");
        }
        if (spec.method == Method::lcb && lambdas.empty()) throw ConfigError("lambda", "lcb needs at least one value");
    }
    for (double l : lambdas) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda", "values must be finite and >= 0");
    }
    if (sigma == SigmaKind::diagonal && sigma_diagonal.size() != d) {
        throw ConfigError("sigma_diagonal", "needs exactly d entries");
    }
    for (double v : sigma_diagonal) {
        if (!(v >= 0.0)) throw ConfigError("sigma_diagonal", "variances must be >= 0");
    }
    if (sigma == SigmaKind::factor_file && sigma_factor_file.empty()) {
        throw ConfigError("sigma_factor_file", "required when sigma is factor-file");
    }
    if (!(epsilon_c > 0.0 && epsilon_c < 1.0)) throw ConfigError("epsilon_c", "must lie in (0, 1)");
    if (rnd_training == RndTraining::gradient) {
        if (train_samples == 0) throw ConfigError("train_samples", "must be at least 1");
        if (!(train_learning_rate > 0.0)) throw ConfigError("train_learning_rate", "must be positive");
    }
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", e.what());
    }
    if (!j.is_object()) {
        throw ConfigError("<document>", "config must be a JSON object");
    }
    static const std::set<std::string> known = {
        "d", "k", "m", "T", "sigma", "sigma_diagonal", "sigma_factor_file", "subspace", "rho", "n_grid",
        "lambda", "lambda_units", "trials", "seed", "methods", "rnd_variant", "rnd_training", "alpha_variant",
        "fresh_rnd_per_trial", "train_samples", "train_learning_rate", "train_epochs", "epsilon_c", "workers"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError(key, "unknown field");
        }
    }
    ExperimentConfig cfg;
    if (j.contains("d")) cfg.d = get_field<std::size_t>(j, "d");
    if (j.contains("k")) cfg.k = get_field<std::size_t>(j, "k");
    if (j.contains("m")) cfg.m = get_field<std::size_t>(j, "m");
    if (j.contains("T")) cfg.ensemble = get_field<std::size_t>(j, "T");
    if (j.contains("sigma")) {
        const auto s = get_choice(j, "sigma", {"identity", "diagonal", "factor-file"});
        cfg.sigma = s == "identity" ? SigmaKind::identity : s == "diagonal" ? SigmaKind::diagonal : SigmaKind::factor_file;
    }
    if (j.contains("sigma_diagonal")) cfg.sigma_diagonal = get_field<std::vector<double>>(j, "sigma_diagonal");
    if (j.contains("sigma_factor_file")) cfg.sigma_factor_file = get_field<std::string>(j, "sigma_factor_file");
    if (j.contains("subspace")) {
        cfg.subspace = get_choice(j, "subspace", {"coordinate", "random"}) == "coordinate" ? SubspaceKind::coordinate
                                                                                          : SubspaceKind::random;
    }
    if (j.contains("rho")) cfg.rho = get_field<double>(j, "rho");
    if (j.contains("n_grid")) cfg.n_grid = get_field<std::vector<std::size_t>>(j, "n_grid");
    if (j.contains("lambda")) {
        cfg.lambdas = j.at("lambda").is_array() ? get_field<std::vector<double>>(j, "lambda")
                                                : std::vector<double>{get_field<double>(j, "lambda")};
    }
    if (j.contains("lambda_units")) {
        cfg.lambda_units = get_choice(j, "lambda_units", {"absolute", "corruption_norm"}) == "absolute"
                               ? LambdaUnits::absolute
                               : LambdaUnits::corruption_norm;
    }
    if (j.contains("trials")) cfg.trials = get_field<std::size_t>(j, "trials");
    if (j.contains("seed")) cfg.seed = get_field<std::uint64_t>(j, "seed");
    if (j.contains("methods")) {
        cfg.methods.clear();
        for (const auto& name : get_field<std::vector<std::string>>(j, "methods")) {
            try {
                cfg.methods.push_back(parse_method_spec(name));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("methods", e.what());
            }
        }
    }
    if (j.contains("rnd_variant")) {
        cfg.rnd_variant = get_choice(j, "rnd_variant", {"linear", "relu"}) == "linear" ? RndVariant::linear
                                                                                      : RndVariant::relu;
    }
    if (j.contains("rnd_training")) {
        cfg.rnd_training = get_choice(j, "rnd_training", {"idealized", "gradient"}) == "idealized"
                               ? RndTraining::idealized
                               : RndTraining::gradient;
    }
    if (j.contains("alpha_variant")) {
        cfg.alpha_variant = parse_uncertainty_variant(get_choice(j, "alpha_variant", {"norm", "squared"}));
    }
    if (j.contains("fresh_rnd_per_trial")) cfg.fresh_rnd_per_trial = get_field<bool>(j, "fresh_rnd_per_trial");
    if (j.contains("train_samples")) cfg.train_samples = get_field<std::size_t>(j, "train_samples");
    if (j.contains("train_learning_rate")) cfg.train_learning_rate = get_field<double>(j, "train_learning_rate");
    if (j.contains("train_epochs")) cfg.train_epochs = get_field<std::size_t>(j, "train_epochs");
    if (j.contains("epsilon_c")) cfg.epsilon_c = get_field<double>(j, "epsilon_c");
    if (j.contains("workers")) cfg.workers = get_field<std::size_t>(j, "workers");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("<document>", "cannot open '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return config_from_json(buffer.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["d"] = cfg.d;
    j["k"] = cfg.k;
    j["m"] = cfg.m;
    j["T"] = cfg.ensemble;
    j["sigma"] = cfg.sigma == SigmaKind::identity ? "identity" : cfg.sigma == SigmaKind::diagonal ? "diagonal" : "factor-file";
    if (cfg.sigma == SigmaKind::diagonal) j["sigma_diagonal"] = cfg.sigma_diagonal;
    if (cfg.sigma == SigmaKind::factor_file) j["sigma_factor_file"] = cfg.sigma_factor_file;
    j["subspace"] = cfg.subspace == SubspaceKind::coordinate ? "coordinate" : "random";
    j["rho"] = cfg.rho;
    j["n_grid"] = cfg.n_grid;
    j["lambda"] = cfg.lambdas;
    j["lambda_units"] = cfg.lambda_units == LambdaUnits::absolute ? "absolute" : "corruption_norm";
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    std::vector<std::string> methods;
    for (const MethodSpec& m : cfg.methods) methods.push_back(m.label);
    j["methods"] = methods;
    j["rnd_variant"] = cfg.rnd_variant == RndVariant::linear ? "linear" : "relu";
    j["rnd_training"] = cfg.rnd_training == RndTraining::idealized ? "idealized" : "gradient";
    j["alpha_variant"] = to_string(cfg.alpha_variant);
    j["fresh_rnd_per_trial"] = cfg.fresh_rnd_per_trial;
    j["train_samples"] = cfg.train_samples;
    j["train_learning_rate"] = cfg.train_learning_rate;
    j["train_epochs"] = cfg.train_epochs;
    j["epsilon_c"] = cfg.epsilon_c;
    j["workers"] = cfg.workers;
    return j.dump(2);
}

World build_world(const ExperimentConfig& cfg) {
    cfg.validate();
    RngStream rng = derive_stream(cfg.seed, kWorldStream);
    auto subspace = std::make_shared<const Subspace>(
        cfg.subspace == SubspaceKind::coordinate ? coordinate_subspace(cfg.d, cfg.k) : random_subspace(cfg.d, cfg.k, rng));
    CovarianceFactor cov = make_cov(cfg);
    Vector coords(cfg.k, 0.0);
    coords[0] = 1.0;
    Vector direction(cfg.d, 0.0);
    if (cfg.k < cfg.d) {
        direction = subspace->complement_basis().column(0);
    }
    RewardPair rewards = make_reward_pair_with_ratio(subspace, coords, direction, cfg.rho, cov);
    const double corruption_norm = rewards.corruption_norm();
    const double trace_perp = cov.trace_with(subspace->perp_projector());
    World world{subspace, std::move(cov), std::move(rewards), std::nullopt, corruption_norm, trace_perp};
    if (!cfg.fresh_rnd_per_trial) {
        world.shared_rnd = make_rnd(cfg, world, rng.split(kRnd));
    }
    return world;
}

std::optional<std::size_t> SimulationReport::find(std::size_t n, const std::string& method, double lambda) const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const ResultRow& r = rows[i];
        if (r.n == n && r.method == method && (method != "lcb" || r.lambda == lambda)) {
            return i;
        }
    }
    return std::nullopt;
}

SimulationReport run_simulation(const ExperimentConfig& cfg, SimulationOptions options) {
    const World world = build_world(cfg);
    const Plan plan = make_plan(cfg, world);

    std::vector<TrialOutput> outputs(cfg.trials);
    const std::size_t workers = std::min(cfg.workers, cfg.trials);
    if (workers <= 1) {
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            outputs[t] = run_trial(cfg, world, plan, t);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < cfg.trials; t = next++) {
                    try {
                        outputs[t] = run_trial(cfg, world, plan, t);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (std::thread& th : pool) {
            th.join();
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
    }

    SimulationReport report;
    report.lambdas = plan.lambdas;
    report.corruption_norm = world.corruption_norm;
    report.trace_sigma_perp = world.trace_sigma_perp;
    report.sigma_theta_star_norm = world.cov.sqrt_norm(world.rewards.theta_star());
    report.sigma_perp_theta_hat_norm = world.cov.sqrt_norm(world.rewards.corruption());
    const double count = static_cast<double>(cfg.trials);

    // Ordered reduction over trial index keeps results independent of scheduling.
    for (std::size_t r = 0; r < plan.rows.size(); ++r) {
        const RowKey& key = plan.rows[r];
        double sum = 0.0;
        double sum_u = 0.0;
        for (const TrialOutput& o : outputs) {
            sum += o.value[r];
            sum_u += o.uncertainty[r];
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (const TrialOutput& o : outputs) {
            ss += (o.value[r] - mean) * (o.value[r] - mean);
        }
        const double se = cfg.trials > 1 ? std::sqrt(ss / (count - 1.0) / count) : 0.0;
        const MethodSpec& spec = cfg.methods[key.method_index];
        ResultRow row;
        row.n = key.n;
        row.method = spec.label;
        row.lambda = spec.method == Method::lcb ? plan.lambdas[key.lambda_index] : 0.0;
        row.mean_true_reward = mean;
        row.std_error = se;
        row.ci_low = mean - kZ95 * se;
        row.ci_high = mean + kZ95 * se;
        row.trials = cfg.trials;
        row.mean_selected_uncertainty = sum_u / count;
        report.rows.push_back(std::move(row));
        if (options.keep_trial_values) {
            std::vector<double> values;
            values.reserve(cfg.trials);
            for (const TrialOutput& o : outputs) values.push_back(o.value[r]);
            report.trial_values.push_back(std::move(values));
        }
    }
    for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
        double sum = 0.0;
        for (const TrialOutput& o : outputs) sum += o.epsilon[g];
        report.mean_epsilon.push_back(sum / count);
    }
    return report;
}

ResultFormat parse_result_format(const std::string& name) {
    if (name == "csv") return ResultFormat::csv;
    if (name == "json") return ResultFormat::json;
    throw std::invalid_argument("unknown result format '" + name + "' (expected csv|json)");
}

std::string results_to_csv(const std::vector<ResultRow>& rows) {
    std::string out = kResultCsvHeader;
    out += '\n';
    for (const ResultRow& r : rows) {
        out += std::to_string(r.n) + ',' + r.method + ',' + format_double(r.lambda) + ',' +
               format_double(r.mean_true_reward) + ',' + format_double(r.std_error) + ',' + format_double(r.ci_low) +
               ',' + format_double(r.ci_high) + ',' + std::to_string(r.trials) + ',' +
               format_double(r.mean_selected_uncertainty) + '\n';
    }
    return out;
}

std::string results_to_json(const std::vector<ResultRow>& rows) {
    json arr = json::array();
    for (const ResultRow& r : rows) {
        arr.push_back({{"n", r.n},
                       {"method", r.method},
                       {"lambda", r.lambda},
                       {"mean_true_reward", r.mean_true_reward},
                       {"std_error", r.std_error},
                       {"ci_low", r.ci_low},
                       {"ci_high", r.ci_high},
                       {"trials", r.trials},
                       {"mean_selected_uncertainty", r.mean_selected_uncertainty}});
    }
    return arr.dump(2) + '\n';
}

std::vector<ResultRow> results_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kResultCsvHeader) {
        throw std::runtime_error(std::string("results csv: header must be exactly '") + kResultCsvHeader + "'");
    }
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 9) {
            throw std::runtime_error("results csv: line " + std::to_string(line_no) + " has " +
                                     std::to_string(f.size()) + " fields, expected 9");
        }
        ResultRow r;
        r.n = static_cast<std::size_t>(parse_number(f[0], line_no, "n"));
        r.method = f[1];
        r.lambda = parse_number(f[2], line_no, "lambda");
        r.mean_true_reward = parse_number(f[3], line_no, "mean_true_reward");
        r.std_error = parse_number(f[4], line_no, "std_error");
        r.ci_low = parse_number(f[5], line_no, "ci_low");
        r.ci_high = parse_number(f[6], line_no, "ci_high");
        r.trials = static_cast<std::size_t>(parse_number(f[7], line_no, "trials"));
        r.mean_selected_uncertainty = parse_number(f[8], line_no, "mean_selected_uncertainty");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path, ResultFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out << (format == ResultFormat::csv ? results_to_csv(rows) : results_to_json(rows));
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return results_from_csv(buffer.str());
}

std::string summarize(const std::vector<ResultRow>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("summarize: no rows");
    }
    std::ostringstream out;
    out << std::fixed;
    out << std::setw(6) << "n" << "  " << std::left << std::setw(14) << "method" << std::right << std::setw(10)
        << "lambda" << std::setw(12) << "mean" << std::setw(10) << "se" << std::setw(24) << "95% ci"
        << std::setw(12) << "mean_alpha" << '\n';
    for (const ResultRow& r : rows) {
        std::ostringstream ci;
        ci << std::fixed << std::setprecision(4) << '[' << r.ci_low << ", " << r.ci_high << ']';
        out << std::setw(6) << r.n << "  " << std::left << std::setw(14) << r.method << std::right
            << std::setprecision(3) << std::setw(10) << r.lambda << std::setprecision(4) << std::setw(12)
            << r.mean_true_reward << std::setw(10) << r.std_error << std::setw(24) << ci.str() << std::setw(12)
            << r.mean_selected_uncertainty << '\n';
    }

    // Series keyed by (method, lambda) in first-appearance order.
    std::vector<std::pair<std::string, double>> series;
    for (const ResultRow& r : rows) {
        const auto key = std::make_pair(r.method, r.lambda);
        if (std::find(series.begin(), series.end(), key) == series.end()) {
            series.push_back(key);
        }
    }
    out << "\npeak/final\n";
    for (const auto& [method, lambda] : series) {
        const ResultRow* peak = nullptr;
        const ResultRow* last = nullptr;
        for (const ResultRow& r : rows) {
            if (r.method != method || r.lambda != lambda) continue;
            if (!peak || r.mean_true_reward > peak->mean_true_reward) peak = &r;
            if (!last || r.n >= last->n) last = &r;
        }
        std::ostringstream name;
        name << method;
        if (method == "lcb") name << " (lambda=" << std::setprecision(3) << std::fixed << lambda << ')';
        out << "  " << std::left << std::setw(26) << name.str() << std::right << "peak " << std::setprecision(4)
            << peak->mean_true_reward << " at n=" << peak->n << "   final " << last->mean_true_reward
            << " at n=" << last->n << '\n';
    }
    return out.str();
}

}  // namespace caution
