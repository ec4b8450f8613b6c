#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace caution {

enum class VerificationLevel { fast, full };

VerificationLevel parse_verification_level(const std::string& name);
std::string to_string(VerificationLevel level);

struct Check {
    std::string name;
    double measured = 0.0;
    // Human-readable condition, e.g. "<= 3" or "in [0.25, 2]".
    std::string target;
    double tolerance = 0.0;
    bool pass = false;
};

struct CriterionReport {
    int id = 0;
    std::string title;
    std::vector<Check> checks;
    double seconds = 0.0;

    bool passed() const;
};

struct VerificationReport {
    std::vector<CriterionReport> criteria;

    bool passed() const;
};

struct VerificationOptions {
    VerificationLevel level = VerificationLevel::fast;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    // Test hook: added to every closed-form M_N the checks compare against.
    // Any visible value makes the Gaussian-max and oracle checks fail.
    double oracle_perturbation = 0.0;
    // Called after each criterion finishes, for streaming output.
    std::function<void(const CriterionReport&)> on_criterion;
};

/// Runs all ten checks. Never throws; an exception inside a criterion becomes
/// a failed check named "<criterion>.error".
VerificationReport run_verification(const VerificationOptions& options);

std::string format_check(const Check& check);
std::string format_criterion(const CriterionReport& report);

}  // namespace caution
