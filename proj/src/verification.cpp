#include "caution/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "caution/experiment.hpp"
#include "caution/predictor.hpp"
#include "caution/random.hpp"
#include "caution/rnd.hpp"
#include "caution/subspace.hpp"
#include "caution/theory.hpp"
#include "caution/tolerances.hpp"

namespace caution {

namespace {

const std::vector<std::size_t> kGrid = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512};
constexpr double kSigmaBand = 3.0;
constexpr double kEpsilonC = 0.1;

constexpr std::size_t kTrials = 10'000;

// Only the Gaussian-max Monte Carlo is scaled down at the fast level; the
// simulation checks need the full trial count to resolve the crossover.
std::size_t max_draws_for(VerificationLevel level) {
    return level == VerificationLevel::full ? 1'000'000 : 100'000;
}

Check at_most(std::string name, double measured, double limit) {
    char target[64];
    std::snprintf(target, sizeof target, "<= %.6g", limit);
    return {std::move(name), measured, target, 0.0, measured <= limit};
}

Check at_least(std::string name, double measured, double limit) {
    char target[64];
    std::snprintf(target, sizeof target, ">= %.6g", limit);
    return {std::move(name), measured, target, 0.0, measured >= limit};
}

Check near(std::string name, double measured, double expected, double tolerance) {
    char target[64];
    std::snprintf(target, sizeof target, "%.6g", expected);
    return {std::move(name), measured, target, tolerance, std::abs(measured - expected) <= tolerance};
}

Check within(std::string name, double measured, double lo, double hi) {
    char target[64];
    std::snprintf(target, sizeof target, "in [%.6g, %.6g]", lo, hi);
    return {std::move(name), measured, target, 0.0, measured >= lo && measured <= hi};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double closed_form_max(std::size_t n, const VerificationOptions& opt) {
    return expected_max_std_normal(n) + opt.oracle_perturbation;
}

// Largest |estimate - expected| / se over the grid.
double worst_z(const std::vector<double>& means, const std::vector<double>& ses, const std::vector<double>& expected) {
    double worst = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) {
        const double diff = std::abs(means[i] - expected[i]);
        worst = std::max(worst, ses[i] > 0.0 ? diff / ses[i] : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
    }
    return worst;
}

void gaussian_max(CriterionReport& rep, const VerificationOptions& opt) {
    const std::size_t draws = max_draws_for(opt.level);
    const auto start = std::chrono::steady_clock::now();
    RngStream rng(opt.seed, 101);
    std::vector<double> sum(kGrid.size(), 0.0);
    std::vector<double> sum_sq(kGrid.size(), 0.0);
    for (std::size_t t = 0; t < draws; ++t) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t drawn = 0;
        for (std::size_t g = 0; g < kGrid.size(); ++g) {
            for (; drawn < kGrid[g]; ++drawn) {
                best = std::max(best, rng.normal());
            }
            sum[g] += best;
            sum_sq[g] += best * best;
        }
    }
    std::vector<double> means, ses, expected;
    const double count = static_cast<double>(draws);
    for (std::size_t g = 0; g < kGrid.size(); ++g) {
        const double mean = sum[g] / count;
        const double var = (sum_sq[g] - count * mean * mean) / (count - 1.0);
        means.push_back(mean);
        ses.push_back(std::sqrt(std::max(var, 0.0) / count));
        expected.push_back(closed_form_max(kGrid[g], opt));
    }
    rep.checks.push_back(at_most("gaussian_max.mc_vs_quadrature_max_z", worst_z(means, ses, expected), kSigmaBand));
    rep.checks.push_back(near("gaussian_max.m2", closed_form_max(2, opt), 0.56419, 0.001));
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t n : kGrid) {
        if (n >= 2) {
            worst_excess = std::max(worst_excess, closed_form_max(n, opt) - std::sqrt(2.0 * std::log(double(n))));
        }
    }
    rep.checks.push_back(at_most("gaussian_max.upper_envelope_excess", worst_excess, 0.0));
    rep.checks.push_back(at_most("gaussian_max.runtime_s", seconds_since(start), 30.0));
}

// One simulation feeds the oracle, BoN, crossover and bound checks.
struct SharedRun {
    SimulationReport report;
    double seconds = 0.0;
    std::vector<double> sweep;  // lambda multipliers of ||proj_perp theta_hat||
};

SharedRun shared_run(const VerificationOptions& opt) {
    ExperimentConfig cfg;
    cfg.d = 16;
    cfg.k = 4;
    cfg.m = 256;
    cfg.rho = 1.0;
    cfg.n_grid = kGrid;
    cfg.trials = kTrials;
    cfg.seed = opt.seed;
    cfg.workers = opt.workers;
    cfg.epsilon_c = kEpsilonC;
    cfg.methods = {parse_method_spec("oracle"), parse_method_spec("bon"), parse_method_spec("lcb")};
    SharedRun run;
    run.sweep = {1.0};
    for (double s : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        run.sweep.push_back(s / (1.0 - kEpsilonC));
    }
    cfg.lambdas = run.sweep;
    cfg.lambda_units = LambdaUnits::corruption_norm;
    const auto start = std::chrono::steady_clock::now();
    run.report = run_simulation(cfg, {.keep_trial_values = true});
    run.seconds = seconds_since(start);
    return run;
}

const ResultRow& row(const SimulationReport& r, std::size_t n, const std::string& method, double lambda = 0.0) {
    const auto i = r.find(n, method, lambda);
    if (!i) {
        throw std::logic_error("missing result row for n=" + std::to_string(n) + " " + method);
    }
    return r.rows[*i];
}

// Mean and standard error of (oracle - lcb) per trial.
std::pair<double, double> paired_regret(const SimulationReport& r, std::size_t n, double lambda) {
    const auto& oracle = r.trial_values[*r.find(n, "oracle")];
    const auto& lcb = r.trial_values[*r.find(n, "lcb", lambda)];
    const double count = static_cast<double>(oracle.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < oracle.size(); ++t) sum += oracle[t] - lcb[t];
    const double mean = sum / count;
    double ss = 0.0;
    for (std::size_t t = 0; t < oracle.size(); ++t) {
        const double d = oracle[t] - lcb[t] - mean;
        ss += d * d;
    }
    return {mean, oracle.size() > 1 ? std::sqrt(ss / (count - 1.0) / count) : 0.0};
}

void oracle_selection(CriterionReport& rep, const VerificationOptions& opt, const SharedRun& run) {
    std::vector<double> means, ses, expected;
    for (std::size_t n : kGrid) {
        const ResultRow& r = row(run.report, n, "oracle");
        means.push_back(r.mean_true_reward);
        ses.push_back(r.std_error);
        expected.push_back(run.report.sigma_theta_star_norm * closed_form_max(n, opt));
    }
    rep.checks.push_back(at_most("oracle_selection.max_z", worst_z(means, ses, expected), kSigmaBand));
    rep.checks.push_back(at_most("oracle_selection.runtime_s", run.seconds, 60.0));
}

void bon_shrinkage(CriterionReport& rep, const VerificationOptions& opt, const SharedRun& run) {
    const SimulationReport& r = run.report;
    std::vector<double> means, ses, expected;
    double worst_gap_dev = 0.0;
    const double flat_gap = 1.0 - 1.0 / std::sqrt(2.0);
    for (std::size_t n : kGrid) {
        const ResultRow& bon = row(r, n, "bon");
        TheoryInputs in;
        in.n = n;
        in.sigma_theta_star_norm = r.sigma_theta_star_norm;
        in.sigma_perp_theta_hat_norm = r.sigma_perp_theta_hat_norm;
        const double optimal = optimal_value(in) + r.sigma_theta_star_norm * opt.oracle_perturbation;
        means.push_back(bon.mean_true_reward);
        ses.push_back(bon.std_error);
        expected.push_back(optimal / std::sqrt(1.0 + corruption_ratio(in) * corruption_ratio(in)));
        if (n >= 8) {
            const double oracle = row(r, n, "oracle").mean_true_reward;
            worst_gap_dev = std::max(worst_gap_dev, std::abs((oracle - bon.mean_true_reward) / oracle - flat_gap));
        }
    }
    rep.checks.push_back(at_most("bon_shrinkage.max_z", worst_z(means, ses, expected), kSigmaBand));
    rep.checks.push_back(at_most("bon_shrinkage.relative_gap_max_deviation", worst_gap_dev, 0.02));
}

void conservation(CriterionReport& rep, const VerificationOptions& opt) {
    const std::size_t d = 16, k = 4, m = 64, samples = 64;
    RngStream rng(opt.seed, 401);
    auto s = std::make_shared<const Subspace>(random_subspace(d, k, rng));
    std::vector<Vector> train;
    for (std::size_t i = 0; i < samples; ++i) {
        Vector y(d);
        rng.fill_normal(y);
        train.push_back(s->project_v(y));
    }
    const GradientOptions options{0.1, 1000, 0.0};
    auto linear = train_gradient(init_linear_rnd(d, m, s, rng), train, options);
    rep.checks.push_back(at_most("conservation.linear_drift", orthogonal_drift(linear.model), 1e-8));
    auto relu = train_gradient(init_relu_rnd(d, m, 2, s, rng), train, options);
    rep.checks.push_back(at_most("conservation.relu_drift", orthogonal_drift(relu.model), 1e-8));
}

void linear_concentration(CriterionReport& rep, const VerificationOptions& opt) {
    const std::size_t d = 32, k = 8, m = 4096, probes = 10'000;
    RngStream rng(opt.seed, 501);
    auto s = std::make_shared<const Subspace>(random_subspace(d, k, rng));
    const LinearRnd model = train_idealized(init_linear_rnd(d, m, s, rng));
    std::size_t inside = 0;
    Vector y(d);
    for (std::size_t i = 0; i < probes; ++i) {
        rng.fill_normal(y);
        const double len = norm(y);
        for (double& v : y) v /= len;
        const double perp = norm(s->project_perp(y));
        const double ratio = uncertainty(model, y, UncertaintyVariant::norm) / (std::sqrt(2.0) * perp);
        if (ratio >= 0.85 && ratio <= 1.15) ++inside;
    }
    rep.checks.push_back(at_least("linear_concentration.fraction_in_band",
                                  static_cast<double>(inside) / static_cast<double>(probes), 0.99));
}

void relu_envelope(CriterionReport& rep, const VerificationOptions& opt) {
    const std::size_t d = 16, k = 4, m = 256, draws = 200;
    RngStream rng(opt.seed, 601);
    auto s = std::make_shared<const Subspace>(random_subspace(d, k, rng));
    const Vector y = s->complement_basis().column(0);
    const double perp_sq = squared_norm(s->project_perp(y));
    double sum = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        RngStream draw = rng.split(i);
        const ReluRnd model = train_idealized(init_relu_rnd(d, m, 1, s, draw));
        sum += uncertainty(model, y, UncertaintyVariant::squared);
    }
    rep.checks.push_back(within("relu_envelope.mean_ratio", sum / double(draws) / perp_sq, 0.25, 2.0));
}

void crossover(CriterionReport& rep, const SharedRun& run) {
    const SimulationReport& r = run.report;
    const double lambda = r.lambdas[0];
    const auto gap = [&](std::size_t n) {
        return row(r, n, "lcb", lambda).mean_true_reward - row(r, n, "bon").mean_true_reward;
    };
    const ResultRow& lcb512 = row(r, 512, "lcb", lambda);
    const ResultRow& bon512 = row(r, 512, "bon");
    const double pooled = std::sqrt(lcb512.std_error * lcb512.std_error + bon512.std_error * bon512.std_error);
    rep.checks.push_back(at_least("crossover.gap512_over_pooled_se", gap(512) / pooled, kSigmaBand));
    rep.checks.push_back(at_least("crossover.gap512_minus_gap8", gap(512) - gap(8), 0.0));
    TheoryInputs in;
    in.n = 512;
    in.trace_sigma_perp = r.trace_sigma_perp;
    in.lambda = lambda;
    in.epsilon = r.mean_epsilon.back();
    in.c = kEpsilonC;
    const double regret = row(r, 512, "oracle").mean_true_reward - lcb512.mean_true_reward;
    rep.checks.push_back(at_most("crossover.regret512_minus_bound", regret - pessimism_regret_bound(in), 0.0));
    rep.checks.push_back(at_most("crossover.runtime_s", run.seconds, 300.0));
}

void bound_validity(CriterionReport& rep, const SharedRun& run) {
    const SimulationReport& r = run.report;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t li = 1; li < r.lambdas.size(); ++li) {
        for (std::size_t g = 0; g < kGrid.size(); ++g) {
            const auto [regret, se] = paired_regret(r, kGrid[g], r.lambdas[li]);
            TheoryInputs in;
            in.n = kGrid[g];
            in.trace_sigma_perp = r.trace_sigma_perp;
            in.lambda = r.lambdas[li];
            in.epsilon = r.mean_epsilon[g];
            in.c = kEpsilonC;
            const double excess = regret - pessimism_regret_bound(in);
            // A zero-variance cell (n = 1) passes only with no excess.
            if (se > 0.0) {
                worst = std::max(worst, excess / se);
            } else if (excess > 0.0) {
                worst = std::numeric_limits<double>::infinity();
            }
        }
    }
    rep.checks.push_back(at_most("bound_validity.max_excess_in_se", worst, kSigmaBand));
}

std::vector<FeatureRecord> random_records(std::size_t count, std::size_t p, std::size_t q, RngStream& rng) {
    std::vector<FeatureRecord> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i].id = std::to_string(i);
        out[i].input_features.resize(p);
        out[i].target_features.resize(q);
        rng.fill_normal(out[i].input_features);
        rng.fill_normal(out[i].target_features);
        out[i].proxy_score = rng.normal();
    }
    return out;
}

void predictor_fixtures(CriterionReport& rep, const VerificationOptions& opt) {
    RngStream rng(opt.seed, 901);

    {
        MlpPredictor model(6, 10, 4, true, rng);
        const auto batch = random_records(5, 6, 4, rng);
        const Vector grad = model.gradient(batch);
        Vector params = model.flatten();
        double worst = 0.0;
        const double h = 1e-6;
        for (std::size_t trial = 0; trial < 20; ++trial) {
            const std::size_t i = rng.uniform_below(params.size());
            const double saved = params[i];
            params[i] = saved + h;
            model.unflatten(params);
            const double up = model.loss(batch);
            params[i] = saved - h;
            model.unflatten(params);
            const double down = model.loss(batch);
            params[i] = saved;
            model.unflatten(params);
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
        }
        rep.checks.push_back(at_most("predictor.finite_difference_rel_error", worst, 1e-4));
    }

    {
        Matrix m(4, 8);
        rng.fill_normal(m.flat(), 1.0 / std::sqrt(8.0));
        const auto data = make_linear_target_dataset(m, 512, rng);
        PredictorTrainOptions o;
        o.hidden = 64;
        o.learning_rate = 0.05;
        o.epochs = 1000;
        o.batch_size = 8;
        o.seed = opt.seed;
        o.use_projection = false;
        const auto trained = train_predictor(data, o);
        rep.checks.push_back(at_most("predictor.realizable_mse", trained.loss_trace.back(), 1e-4));
    }

    {
        const OodFixture fixture(OodFixtureParams{}, rng);
        const auto train = fixture.sample(2000, false, rng);
        PredictorTrainOptions o;
        o.hidden = 64;
        o.learning_rate = 0.01;
        o.epochs = 50;
        o.seed = opt.seed;
        const auto trained = train_predictor(train, o);
        std::vector<double> in_scores, ood_scores;
        for (const auto& rec : fixture.sample(500, false, rng)) in_scores.push_back(uncertainty_score(trained.model, rec));
        for (const auto& rec : fixture.sample(500, true, rng)) ood_scores.push_back(uncertainty_score(trained.model, rec));
        rep.checks.push_back(at_least("predictor.ood_auc", roc_auc(in_scores, ood_scores), 0.9));
    }

    {
        const std::size_t p = 6, q = 3;
        MlpPredictor model(p, 16, q, true, rng);
        const auto calibration = random_records(200, p, q, rng);
        const RerankerConfig cfg = calibrate_reranker(calibration, model, 0.0);
        std::size_t mismatches = 0;
        for (std::size_t s = 0; s < 1000; ++s) {
            const auto slate = random_records(1 + rng.uniform_below(16), p, q, rng);
            std::vector<double> proxy;
            for (const auto& rec : slate) proxy.push_back(*rec.proxy_score);
            if (rerank(slate, model, cfg).chosen_index != argmax_first(proxy)) ++mismatches;
        }
        rep.checks.push_back(at_most("predictor.lambda0_rerank_mismatches", double(mismatches), 0.0));
    }
}

void determinism(CriterionReport& rep, const VerificationOptions& opt) {
    ExperimentConfig cfg;
    cfg.d = 8;
    cfg.k = 2;
    cfg.m = 32;
    cfg.trials = 300;
    cfg.seed = opt.seed;
    cfg.n_grid = {1, 4, 16, 64};
    cfg.lambdas = {0.0, 0.5, 1.0};
    cfg.methods = {parse_method_spec("oracle"), parse_method_spec("bon"), parse_method_spec("lcb"),
                   parse_method_spec("softmax(0.5)"), parse_method_spec("poisson")};
    cfg.workers = 1;
    const std::string serial = results_to_csv(run_simulation(cfg).rows);
    cfg.workers = 4;
    const std::string parallel = results_to_csv(run_simulation(cfg).rows);
    rep.checks.push_back(at_most("determinism.csv_differs", serial == parallel ? 0.0 : 1.0, 0.0));
}

template <typename Fn>
void guarded(CriterionReport& rep, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
        fn();
    } catch (const std::exception& e) {
        rep.checks.push_back({rep.title + ".error (" + e.what() + ")", 1.0, "no exception", 0.0, false});
    }
    rep.seconds = seconds_since(start);
}

}  // namespace

VerificationLevel parse_verification_level(const std::string& name) {
    if (name == "fast") return VerificationLevel::fast;
    if (name == "full") return VerificationLevel::full;
    throw std::invalid_argument("unknown verification level '" + name + "' (expected fast|full)");
}

std::string to_string(VerificationLevel level) { return level == VerificationLevel::fast ? "fast" : "full"; }

bool CriterionReport::passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

bool VerificationReport::passed() const {
    return std::all_of(criteria.begin(), criteria.end(), [](const CriterionReport& c) { return c.passed(); });
}

VerificationReport run_verification(const VerificationOptions& options) {
    VerificationReport report;
    const auto emit = [&](CriterionReport rep) {
        if (options.on_criterion) options.on_criterion(rep);
        report.criteria.push_back(std::move(rep));
    };

    CriterionReport c1{1, "gaussian_max", {}, 0.0};
    guarded(c1, [&] { gaussian_max(c1, options); });
    emit(std::move(c1));

    SharedRun run;
    std::string run_error;
    const auto start = std::chrono::steady_clock::now();
    try {
        run = shared_run(options);
    } catch (const std::exception& e) {
        run_error = e.what();
    }
    const double run_seconds = seconds_since(start);
    const auto from_run = [&](int id, const char* title, auto&& fn) {
        CriterionReport rep{id, title, {}, 0.0};
        if (!run_error.empty()) {
            rep.checks.push_back({std::string(title) + ".error (" + run_error + ")", 1.0, "no exception", 0.0, false});
        } else {
            guarded(rep, [&] { fn(rep); });
        }
        rep.seconds += run_seconds;
        return rep;
    };

    emit(from_run(2, "oracle_selection", [&](CriterionReport& r) { oracle_selection(r, options, run); }));
    emit(from_run(3, "bon_shrinkage", [&](CriterionReport& r) { bon_shrinkage(r, options, run); }));

    CriterionReport c4{4, "conservation", {}, 0.0};
    guarded(c4, [&] { conservation(c4, options); });
    emit(std::move(c4));
    CriterionReport c5{5, "linear_concentration", {}, 0.0};
    guarded(c5, [&] { linear_concentration(c5, options); });
    emit(std::move(c5));
    CriterionReport c6{6, "relu_envelope", {}, 0.0};
    guarded(c6, [&] { relu_envelope(c6, options); });
    emit(std::move(c6));

    emit(from_run(7, "crossover", [&](CriterionReport& r) { crossover(r, run); }));
    emit(from_run(8, "bound_validity", [&](CriterionReport& r) { bound_validity(r, run); }));

    CriterionReport c9{9, "predictor", {}, 0.0};
    guarded(c9, [&] { predictor_fixtures(c9, options); });
    emit(std::move(c9));
    CriterionReport c10{10, "determinism", {}, 0.0};
    guarded(c10, [&] { determinism(c10, options); });
    emit(std::move(c10));
    return report;
}

std::string format_check(const Check& check) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "  %-4s %-44s measured=%-14.6g target %s", check.pass ? "ok" : "FAIL",
                  check.name.c_str(), check.measured, check.target.c_str());
    std::string line = buf;
    if (check.tolerance > 0.0) {
        std::snprintf(buf, sizeof buf, " +/- %.3g", check.tolerance);
        line += buf;
    }
    return line;
}

std::string format_criterion(const CriterionReport& report) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "[%s] %2d %-22s (%.1fs)", report.passed() ? "PASS" : "FAIL", report.id,
                  report.title.c_str(), report.seconds);
    std::string out = buf;
    for (const Check& c : report.checks) {
        out += '\n';
        out += format_check(c);
    }
    return out;
}

}  // namespace caution
