#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caution/linalg.hpp"
#include "caution/random.hpp"
#include "caution/rewards.hpp"

namespace caution {

struct Candidate {
    std::size_t index = 0;
    std::optional<Vector> vector;
    double proxy_score = 0.0;
    double uncertainty = 0.0;
};

enum class Method { oracle, bon, lcb, softmax, poisson };

std::string to_string(Method m);
Method parse_method(const std::string& name);

// chosen_index is a position in the slate that was passed in. Ties always go
// to the smallest position.
struct SelectionOutcome {
    std::size_t chosen_index = 0;
    Method method = Method::bon;
    std::optional<double> lcb_score;
    // Final per-candidate score the method maximized (or sampled from).
    std::vector<double> scores;
    // Number of candidates generated (differs from the input only for Poisson).
    std::size_t slate_size = 0;
};

// Position of the largest value; first one wins ties. Throws on empty input.
std::size_t argmax_first(std::span<const double> values);

SelectionOutcome select_bon(std::span<const Candidate> slate);
SelectionOutcome select_lcb(std::span<const Candidate> slate, double lambda);
SelectionOutcome select_oracle(std::span<const Candidate> slate, const RewardPair& pair);
SelectionOutcome select_softmax(std::span<const Candidate> slate, double temperature, RngStream& rng);

// Produces a slate of the requested size.
using CandidateSampler = std::function<std::vector<Candidate>(std::size_t count, RngStream& rng)>;

// Draws n ~ Poisson(mu), clamps to n >= 1, samples n candidates and applies BoN.
// The returned outcome carries the drawn slate size.
SelectionOutcome select_poisson(const CandidateSampler& sampler, double mu, RngStream& rng);
std::size_t draw_poisson_slate_size(double mu, RngStream& rng);

}  // namespace caution
