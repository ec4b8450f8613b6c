#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "caution/experiment.hpp"
#include "caution/theory.hpp"

using namespace caution;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.d = 8;
    cfg.k = 2;
    cfg.m = 64;
    cfg.n_grid = {1, 4, 16};
    cfg.trials = 400;
    cfg.seed = 3;
    return cfg;
}

std::string field_of(const std::string& json) {
    try {
        config_from_json(json).validate();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST_CASE("config parsing") {
    const ExperimentConfig cfg = config_from_json(
        R"j({"d": 12, "k": 3, "m": 32, "n_grid": [1, 2], "lambda": [0.5, 1.0], "trials": 50,
            "methods": ["oracle", "softmax(0.5)", "poisson"], "seed": 9})j");
    CHECK(cfg.d == 12);
    CHECK(cfg.lambdas == std::vector<double>{0.5, 1.0});
    REQUIRE(cfg.methods.size() == 3);
    CHECK(cfg.methods[1].temperature == 0.5);
    CHECK(cfg.methods[1].label == "softmax(0.5)");
    CHECK(config_from_json(R"({"lambda": 2})").lambdas == std::vector<double>{2.0});

    const ExperimentConfig back = config_from_json(config_to_json(cfg));
    CHECK(back.n_grid == cfg.n_grid);
    CHECK(back.seed == 9);
}

TEST_CASE("config errors name the field") {
    CHECK(field_of(R"({"k": 0})") == "k");
    CHECK(field_of(R"({"d": 4, "k": 5})") == "k");
    CHECK(field_of(R"({"n_grid": []})") == "n_grid");
    CHECK(field_of(R"({"trials": 0})") == "trials");
    CHECK(field_of(R"({"rho": -1})") == "rho");
    CHECK(field_of(R"({"methods": ["magic"]})") == "methods");
    CHECK(field_of(R"({"sigma": "diagonal", "sigma_diagonal": [1, 2]})") == "sigma_diagonal");
    CHECK(field_of(R"({"colour": 1})") == "colour");
    CHECK_THROWS(config_from_json("{"));
}

TEST_CASE("one row per grid point and method") {
    ExperimentConfig cfg = small_config();
    cfg.n_grid = {1, 8};
    const auto report = run_simulation(cfg);
    CHECK(report.rows.size() == 6);
    for (const auto& row : report.rows) {
        CHECK(row.trials == cfg.trials);
        CHECK(row.ci_low <= row.mean_true_reward);
        CHECK(row.mean_true_reward <= row.ci_high);
    }
}

TEST_CASE("result files round trip") {
    ExperimentConfig cfg = small_config();
    cfg.trials = 20;
    const auto rows = run_simulation(cfg).rows;
    const std::string csv = results_to_csv(rows);
    CHECK(csv.rfind(kResultCsvHeader, 0) == 0);
    CHECK(results_from_csv(csv) == rows);
    const auto json = nlohmann::json::parse(results_to_json(rows));
    REQUIRE(json.size() == rows.size());
    CHECK(json[0].contains("mean_true_reward"));
    CHECK(json[0].contains("mean_selected_uncertainty"));
    CHECK_THROWS(results_from_csv("n,method\n1,bon\n"));
}

TEST_CASE("summary peak for the oracle is at the largest n") {
    const auto rows = run_simulation(small_config()).rows;
    const std::string text = summarize(rows);
    CHECK(text.find("oracle") != std::string::npos);
    const auto at = run_simulation(small_config()).find(16, "oracle");
    REQUIRE(at);
    double best = -1e9;
    std::size_t best_n = 0;
    for (const auto& row : rows) {
        if (row.method == "oracle" && row.mean_true_reward > best) {
            best = row.mean_true_reward;
            best_n = row.n;
        }
    }
    CHECK(best_n == 16);
}

TEST_CASE("single-candidate selection has zero mean") {
    ExperimentConfig cfg = small_config();
    cfg.n_grid = {1};
    cfg.trials = 4000;
    const auto report = run_simulation(cfg);
    for (const auto& row : report.rows) {
        CHECK(std::abs(row.mean_true_reward) <= 3.0 * row.std_error);
    }
}

TEST_CASE("without corruption best-of-n is the oracle") {
    ExperimentConfig cfg = small_config();
    cfg.rho = 0.0;
    const auto report = run_simulation(cfg);
    for (std::size_t n : cfg.n_grid) {
        CHECK(report.rows[*report.find(n, "bon")].mean_true_reward ==
              report.rows[*report.find(n, "oracle")].mean_true_reward);
    }
}

TEST_CASE("lcb at lambda zero reproduces best-of-n") {
    ExperimentConfig cfg = small_config();
    cfg.lambdas = {0.0};
    const auto report = run_simulation(cfg);
    for (std::size_t n : cfg.n_grid) {
        const auto& lcb = report.rows[*report.find(n, "lcb", 0.0)];
        const auto& bon = report.rows[*report.find(n, "bon")];
        CHECK(lcb.mean_true_reward == bon.mean_true_reward);
        CHECK(lcb.std_error == bon.std_error);
    }
}

TEST_CASE("results do not depend on the worker count") {
    ExperimentConfig cfg = small_config();
    cfg.methods = {parse_method_spec("oracle"), parse_method_spec("bon"), parse_method_spec("lcb"),
                   parse_method_spec("softmax(0.5)"), parse_method_spec("poisson")};
    cfg.workers = 1;
    const std::string one = results_to_csv(run_simulation(cfg).rows);
    cfg.workers = 4;
    CHECK(results_to_csv(run_simulation(cfg).rows) == one);
    cfg.seed = 4;
    CHECK(results_to_csv(run_simulation(cfg).rows) != one);
}

TEST_CASE("best-of-n tracks the closed form") {
    ExperimentConfig cfg;
    cfg.d = 16;
    cfg.k = 4;
    cfg.m = 32;
    cfg.rho = 1.0;
    cfg.n_grid = {2, 16, 128};
    cfg.trials = 10000;
    cfg.methods = {parse_method_spec("oracle"), parse_method_spec("bon")};
    const auto report = run_simulation(cfg);
    for (std::size_t n : cfg.n_grid) {
        TheoryInputs in;
        in.n = n;
        in.sigma_theta_star_norm = report.sigma_theta_star_norm;
        in.sigma_perp_theta_hat_norm = report.sigma_perp_theta_hat_norm;
        const auto& bon = report.rows[*report.find(n, "bon")];
        const auto& oracle = report.rows[*report.find(n, "oracle")];
        CHECK(std::abs(bon.mean_true_reward - bon_value(in)) <= 3.0 * bon.std_error);
        CHECK(std::abs(oracle.mean_true_reward - optimal_value(in)) <= 3.0 * oracle.std_error);
    }
}

TEST_CASE("larger grids extend smaller ones") {
    ExperimentConfig cfg = small_config();
    const auto full = run_simulation(cfg);
    cfg.n_grid = {4};
    const auto part = run_simulation(cfg);
    for (const auto& row : part.rows) {
        CHECK(full.rows[*full.find(row.n, row.method, row.lambda)] == row);
    }
}
