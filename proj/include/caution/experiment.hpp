#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "caution/gaussian.hpp"
#include "caution/rewards.hpp"
#include "caution/rnd.hpp"
#include "caution/selection.hpp"

namespace caution {

class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& field, const std::string& message)
        : std::invalid_argument("config field '" + field + "': " + message), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class SigmaKind { identity, diagonal, factor_file };
enum class RndVariant { linear, relu };
enum class RndTraining { idealized, gradient };
enum class SubspaceKind { coordinate, random };
// How `lambdas` are interpreted: raw values, or multiples of ||proj_perp theta_hat||.
enum class LambdaUnits { absolute, corruption_norm };

struct MethodSpec {
    Method method = Method::bon;
    // softmax temperature; unused otherwise.
    double temperature = 1.0;
    // Label used in result rows ("bon", "softmax(0.5)", ...).
    std::string label;
};

MethodSpec parse_method_spec(const std::string& text);

struct ExperimentConfig {
    std::size_t d = 16;
    std::size_t k = 4;
    std::size_t m = 256;
    std::size_t ensemble = 1;  // T, ReLU only
    SigmaKind sigma = SigmaKind::identity;
    std::vector<double> sigma_diagonal;
    std::string sigma_factor_file;
    SubspaceKind subspace = SubspaceKind::coordinate;
    double rho = 1.0;
    std::vector<std::size_t> n_grid = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512};
    std::vector<double> lambdas = {1.0};
    LambdaUnits lambda_units = LambdaUnits::corruption_norm;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    std::vector<MethodSpec> methods = {parse_method_spec("oracle"), parse_method_spec("bon"),
                                       parse_method_spec("lcb")};
    RndVariant rnd_variant = RndVariant::linear;
    RndTraining rnd_training = RndTraining::idealized;
    UncertaintyVariant alpha_variant = UncertaintyVariant::norm;
    bool fresh_rnd_per_trial = true;
    // Gradient-mode training parameters.
    std::size_t train_samples = 64;
    double train_learning_rate = 0.1;
    std::size_t train_epochs = 500;
    // c used when estimating epsilon for the pessimism bound.
    double epsilon_c = 0.1;
    std::size_t workers = 1;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

struct ResultRow {
    std::size_t n = 0;
    std::string method;
    double lambda = 0.0;
    double mean_true_reward = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t trials = 0;
    double mean_selected_uncertainty = 0.0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// The fixed part of an experiment: geometry, rewards and (optionally) one RND model.
struct World {
    std::shared_ptr<const Subspace> subspace;
    CovarianceFactor cov;
    RewardPair rewards;
    std::optional<RndModel> shared_rnd;
    double corruption_norm = 0.0;
    double trace_sigma_perp = 0.0;
};

World build_world(const ExperimentConfig& cfg);

struct SimulationReport {
    std::vector<ResultRow> rows;
    // Effective lambda values (after unit conversion), in config order.
    std::vector<double> lambdas;
    // Mean over trials of the epsilon estimated on each trial's first n candidates, per n.
    std::vector<double> mean_epsilon;
    // Per-row, per-trial selected true reward; filled when requested.
    std::vector<std::vector<double>> trial_values;
    double corruption_norm = 0.0;
    double trace_sigma_perp = 0.0;
    double sigma_theta_star_norm = 0.0;
    double sigma_perp_theta_hat_norm = 0.0;

    /// Index of the row for (n, method label, lambda); lambda ignored for non-lcb.
    std::optional<std::size_t> find(std::size_t n, const std::string& method, double lambda = 0.0) const;
};

struct SimulationOptions {
    bool keep_trial_values = false;
};

SimulationReport run_simulation(const ExperimentConfig& cfg, SimulationOptions options = {});

enum class ResultFormat { csv, json };
ResultFormat parse_result_format(const std::string& name);

inline constexpr const char* kResultCsvHeader =
    "n,method,lambda,mean_true_reward,std_error,ci_low,ci_high,trials,mean_selected_uncertainty";

std::string results_to_csv(const std::vector<ResultRow>& rows);
std::string results_to_json(const std::vector<ResultRow>& rows);
std::vector<ResultRow> results_from_csv(const std::string& text);
void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path, ResultFormat format);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// Aligned table plus per-method peak and final values.
std::string summarize(const std::vector<ResultRow>& rows);

}  // namespace caution
