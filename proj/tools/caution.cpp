#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "caution/experiment.hpp"
#include "caution/predictor.hpp"
#include "caution/random.hpp"
#include "caution/verification.hpp"

namespace fs = std::filesystem;
using namespace caution;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

const char* kOutputDirEnv = "CAUTION_OUTPUT_DIR";
const char* kWorkersEnv = "CAUTION_WORKERS";

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') {
        return std::nullopt;
    }
    return std::string(v);
}

std::size_t workers_from_env(std::size_t fallback) {
    const auto v = env(kWorkersEnv);
    if (!v) {
        return fallback;
    }
    try {
        const unsigned long n = std::stoul(*v);
        if (n == 0) throw std::invalid_argument("zero");
        return n;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string(kWorkersEnv) + " must be a positive integer, got '" + *v + "'");
    }
}

struct SimulateArgs {
    std::string config;
    std::string out;
    std::string output_dir;
    std::string format = "csv";
    std::size_t workers = 0;
    std::optional<std::size_t> trials;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

int run_simulate(const SimulateArgs& a) {
    ExperimentConfig cfg = load_config(a.config);
    cfg.workers = a.workers > 0 ? a.workers : workers_from_env(cfg.workers);
    if (a.trials) cfg.trials = *a.trials;
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    const ResultFormat format = parse_result_format(a.format);

    const SimulationReport report = run_simulation(cfg);

    fs::path out = a.out;
    if (out.empty()) {
        const std::string dir = !a.output_dir.empty() ? a.output_dir : env(kOutputDirEnv).value_or("");
        if (!dir.empty()) {
            fs::create_directories(dir);
            out = fs::path(dir) / (format == ResultFormat::csv ? "results.csv" : "results.json");
        }
    }
    if (out.empty()) {
        std::cout << (format == ResultFormat::csv ? results_to_csv(report.rows) : results_to_json(report.rows));
    } else {
        write_results(report.rows, out, format);
        if (!a.quiet) {
            std::cerr << "wrote " << report.rows.size() << " rows to " << out.string() << '\n';
        }
    }
    return kExitOk;
}

struct VerifyArgs {
    std::string level = "fast";
    std::uint64_t seed = 1;
    std::size_t workers = 0;
    double corrupt_oracle = 0.0;
};

int run_verify(const VerifyArgs& a) {
    VerificationOptions opt;
    opt.level = parse_verification_level(a.level);
    opt.seed = a.seed;
    opt.workers = a.workers > 0 ? a.workers : workers_from_env(1);
    opt.oracle_perturbation = a.corrupt_oracle;
    opt.on_criterion = [](const CriterionReport& rep) { std::cout << format_criterion(rep) << std::endl; };
    const VerificationReport report = run_verification(opt);
    std::size_t failed = 0;
    for (const CriterionReport& c : report.criteria) {
        if (!c.passed()) {
            ++failed;
            for (const Check& check : c.checks) {
                if (!check.pass) std::cout << "failed check: " << check.name << '\n';
            }
        }
    }
    std::cout << (report.criteria.size() - failed) << "/" << report.criteria.size() << " criteria passed\n";
    return report.passed() ? kExitOk : kExitCheckFailed;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string calibration;
    double calibration_fraction = 0.2;
    PredictorTrainOptions options;
    bool no_projection = false;
};

int run_train(TrainArgs a) {
    std::vector<FeatureRecord> records = read_feature_records(a.data);
    a.options.use_projection = !a.no_projection;

    std::vector<FeatureRecord> calibration;
    if (!a.calibration.empty()) {
        calibration = read_feature_records(a.calibration);
    } else if (a.calibration_fraction > 0.0) {
        // Hold out a seeded random subset of the records for the normalizers.
        RngStream rng = derive_stream(a.options.seed, 0xca11b);
        shuffle_in_place(std::span<FeatureRecord>(records), rng);
        const auto held = static_cast<std::size_t>(a.calibration_fraction * static_cast<double>(records.size()));
        if (held >= 2 && held < records.size()) {
            calibration.assign(std::make_move_iterator(records.end() - static_cast<std::ptrdiff_t>(held)),
                               std::make_move_iterator(records.end()));
            records.resize(records.size() - held);
        }
    }

    const PredictorTrainResult trained = train_predictor(records, a.options);
    for (std::size_t e = 0; e < trained.loss_trace.size(); ++e) {
        std::cerr << "epoch " << e << " loss " << trained.loss_trace[e] << '\n';
    }

    PredictorBundle bundle{trained.model, std::nullopt, std::nullopt};
    const bool scored = !calibration.empty() &&
                        std::all_of(calibration.begin(), calibration.end(),
                                    [](const FeatureRecord& r) { return r.proxy_score.has_value(); });
    if (scored) {
        const RerankerConfig cfg = calibrate_reranker(calibration, trained.model, 0.0);
        bundle.reward_normalizer = cfg.reward_normalizer;
        bundle.uncertainty_normalizer = cfg.uncertainty_normalizer;
        std::cerr << "normalizers fitted on " << calibration.size() << " calibration records\n";
    } else {
        std::cerr << "no scored calibration records; pass --calibration to rerank\n";
    }
    save_predictor(bundle, a.out);
    std::cerr << "trained on " << records.size() << " records, " << trained.model.parameter_count()
              << " parameters, saved to " << a.out << '\n';
    return kExitOk;
}

struct RerankArgs {
    std::string slates;
    std::string model;
    std::string calibration;
    double lambda = 0.8;
};

int run_rerank(const RerankArgs& a) {
    const PredictorBundle bundle = load_predictor(a.model);
    RerankerConfig cfg;
    if (!a.calibration.empty()) {
        cfg = calibrate_reranker(read_feature_records(a.calibration), bundle.model, a.lambda);
    } else {
        cfg.lambda = a.lambda;
        cfg.reward_normalizer = bundle.reward_normalizer;
        cfg.uncertainty_normalizer = bundle.uncertainty_normalizer;
    }
    const std::vector<FeatureRecord> records = read_feature_records(a.slates);
    std::cout << "slate_id,chosen_id,chosen_position,slate_size,combined_score\n";
    for (const Slate& slate : group_slates(records)) {
        const SelectionOutcome outcome = rerank(slate.records, bundle.model, cfg);
        std::cout << slate.slate_id << ',' << slate.records[outcome.chosen_index].id << ','
                  << outcome.chosen_index << ',' << slate.records.size() << ','
                  << outcome.scores[outcome.chosen_index] << '\n';
    }
    return kExitOk;
}

int run_report(const std::string& in) {
    std::cout << summarize(read_results_csv(in));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pessimistic best-of-n selection: simulation, verification and reranking"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run a Monte-Carlo experiment from a config file");
    simulate->add_option("--config", sim.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", sim.out, "Result file (default: $CAUTION_OUTPUT_DIR/results.<fmt> or stdout)");
    simulate->add_option("--output-dir", sim.output_dir, "Directory for results.<fmt>; overrides $CAUTION_OUTPUT_DIR");
    simulate->add_option("--format", sim.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    simulate->add_option("--workers", sim.workers, "Worker threads; overrides $CAUTION_WORKERS and the config");
    simulate->add_option("--trials", sim.trials, "Override the config's trial count");
    simulate->add_option("--seed", sim.seed, "Override the config's seed");
    simulate->add_flag("--quiet", sim.quiet, "Do not report where results went");

    VerifyArgs ver;
    auto* verify = app.add_subcommand("verify", "Check the simulator against closed-form results");
    verify->add_option("--level", ver.level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
    verify->add_option("--seed", ver.seed, "Master seed for all checks");
    verify->add_option("--workers", ver.workers, "Worker threads; overrides $CAUTION_WORKERS");
    verify->add_option("--corrupt-oracle", ver.corrupt_oracle, "Shift every closed-form M_N (self-test of failure reporting)")
        ->group("");

    TrainArgs tr;
    auto* train = app.add_subcommand("train-predictor", "Fit a feature predictor on JSON-lines records");
    train->add_option("--data", tr.data, "Training records (JSONL)")->required()->check(CLI::ExistingFile);
    train->add_option("--out", tr.out, "Model file to write")->required();
    train->add_option("--calibration", tr.calibration, "Scored records for the z-score normalizers")
        ->check(CLI::ExistingFile);
    train->add_option("--calibration-fraction", tr.calibration_fraction,
                      "Share of --data held out for normalizers when --calibration is absent")
        ->check(CLI::Range(0.0, 0.9));
    train->add_option("--hidden", tr.options.hidden, "Hidden width");
    train->add_option("--lr", tr.options.learning_rate, "Learning rate");
    train->add_option("--epochs", tr.options.epochs, "Epochs");
    train->add_option("--batch", tr.options.batch_size, "Minibatch size");
    train->add_option("--seed", tr.options.seed, "Seed for initialization and shuffling");
    train->add_flag("--no-projection", tr.no_projection, "Drop the linear projection head");

    RerankArgs rr;
    auto* rerank_cmd = app.add_subcommand("rerank", "Pick one candidate per slate with the pessimistic score");
    rerank_cmd->add_option("--slates", rr.slates, "Candidate records with slate_id and proxy_score (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    rerank_cmd->add_option("--model", rr.model, "Model file from train-predictor")->required()->check(CLI::ExistingFile);
    rerank_cmd->add_option("--lambda", rr.lambda, "Pessimism strength")->check(CLI::NonNegativeNumber);
    rerank_cmd->add_option("--calibration", rr.calibration, "Refit normalizers on these scored records")
        ->check(CLI::ExistingFile);

    std::string report_in;
    auto* report = app.add_subcommand("report", "Summarize a results CSV");
    report->add_option("--in", report_in, "Results CSV")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*verify) return run_verify(ver);
        if (*train) return run_train(tr);
        if (*rerank_cmd) return run_rerank(rr);
        if (*report) return run_report(report_in);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
