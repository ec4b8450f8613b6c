#include "caution/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace caution {

namespace {

void require_non_empty(std::span<const Candidate> slate, const char* what) {
    if (slate.empty()) {
        throw std::invalid_argument(std::string(what) + ": slate is empty");
    }
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::oracle: return "oracle";
        case Method::bon: return "bon";
        case Method::lcb: return "lcb";
        case Method::softmax: return "softmax";
        case Method::poisson: return "poisson";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::oracle, Method::bon, Method::lcb, Method::softmax, Method::poisson}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw std::invalid_argument("unknown selection method '" + name + "'");
}

std::size_t argmax_first(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("argmax_first: no values");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

SelectionOutcome select_bon(std::span<const Candidate> slate) {
    require_non_empty(slate, "select_bon");
    SelectionOutcome out;
    out.method = Method::bon;
    out.slate_size = slate.size();
    out.scores.reserve(slate.size());
    for (const Candidate& c : slate) {
        out.scores.push_back(c.proxy_score);
    }
    out.chosen_index = argmax_first(out.scores);
    return out;
}

SelectionOutcome select_lcb(std::span<const Candidate> slate, double lambda) {
    require_non_empty(slate, "select_lcb");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw std::invalid_argument("select_lcb: lambda must be finite and non-negative");
    }
    SelectionOutcome out;
    out.method = Method::lcb;
    out.slate_size = slate.size();
    out.scores.reserve(slate.size());
    for (const Candidate& c : slate) {
        out.scores.push_back(c.proxy_score - lambda * c.uncertainty);
    }
    out.chosen_index = argmax_first(out.scores);
    out.lcb_score = out.scores[out.chosen_index];
    return out;
}

SelectionOutcome select_oracle(std::span<const Candidate> slate, const RewardPair& pair) {
    require_non_empty(slate, "select_oracle");
    SelectionOutcome out;
    out.method = Method::oracle;
    out.slate_size = slate.size();
    out.scores.reserve(slate.size());
    for (std::size_t i = 0; i < slate.size(); ++i) {
        if (!slate[i].vector) {
            throw std::invalid_argument("select_oracle: candidate " + std::to_string(i) +
                                        " carries no response vector");
        }
        out.scores.push_back(pair.eval_true(*slate[i].vector));
    }
    out.chosen_index = argmax_first(out.scores);
    return out;
}

SelectionOutcome select_softmax(std::span<const Candidate> slate, double temperature, RngStream& rng) {
    require_non_empty(slate, "select_softmax");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw std::invalid_argument("select_softmax: temperature must be positive and finite");
    }
    double top = slate.front().proxy_score;
    for (const Candidate& c : slate) {
        if (!std::isfinite(c.proxy_score)) {
            throw std::invalid_argument("select_softmax: non-finite proxy score");
        }
        top = std::max(top, c.proxy_score);
    }
    SelectionOutcome out;
    out.method = Method::softmax;
    out.slate_size = slate.size();
    out.scores.reserve(slate.size());
    double total = 0.0;
    for (const Candidate& c : slate) {
        const double w = std::exp((c.proxy_score - top) / temperature);
        out.scores.push_back(w);
        total += w;
    }
    // The maximum contributes exp(0) = 1, so total >= 1.
    const double target = rng.uniform() * total;
    double running = 0.0;
    out.chosen_index = slate.size() - 1;
    for (std::size_t i = 0; i < slate.size(); ++i) {
        running += out.scores[i];
        if (target < running) {
            out.chosen_index = i;
            break;
        }
    }
    // Turn weights into probabilities for the diagnostics.
    for (double& s : out.scores) {
        s /= total;
    }
    return out;
}

std::size_t draw_poisson_slate_size(double mu, RngStream& rng) {
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        throw std::invalid_argument("select_poisson: mu must be positive and finite");
    }
    return std::max<std::size_t>(1, rng.poisson(mu));
}

SelectionOutcome select_poisson(const CandidateSampler& sampler, double mu, RngStream& rng) {
    const std::size_t n = draw_poisson_slate_size(mu, rng);
    const std::vector<Candidate> slate = sampler(n, rng);
    if (slate.size() != n) {
        throw std::runtime_error("select_poisson: sampler returned " + std::to_string(slate.size()) +
                                 " candidates, expected " + std::to_string(n));
    }
    SelectionOutcome out = select_bon(slate);
    out.method = Method::poisson;
    return out;
}

}  // namespace caution
