#pragma once

// Feature-space caution: a small trainable predictor learns to reproduce the
// features of a frozen target network on in-distribution data, and its squared
// prediction error is used as the uncertainty penalty when reranking slates.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caution/linalg.hpp"
#include "caution/random.hpp"
#include "caution/rewards.hpp"
#include "caution/selection.hpp"

namespace caution {

struct FeatureRecord {
    std::string id;
    Vector input_features;
    Vector target_features;
    std::optional<double> proxy_score;
    std::optional<std::string> slate_id;
};

/// input -> ReLU(W1 x + b1) -> W2 h + b2 [-> P (.) when the projection head is on].
class MlpPredictor {
public:
    MlpPredictor() = default;
    MlpPredictor(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                 bool use_projection, RngStream& rng);

    std::size_t input_dim() const { return w1_.cols(); }
    std::size_t hidden_dim() const { return w1_.rows(); }
    std::size_t output_dim() const { return w2_.rows(); }
    bool use_projection() const { return use_projection_; }
    std::size_t parameter_count() const;

    Vector forward(std::span<const double> x) const;

    /// Mean over the batch of ||forward(x) - target||^2.
    double loss(std::span<const FeatureRecord> batch) const;
    /// Gradient of loss() in the layout of flatten().
    Vector gradient(std::span<const FeatureRecord> batch) const;

    /// Parameters in the order W1, b1, W2, b2, [P].
    Vector flatten() const;
    void unflatten(std::span<const double> params);

    const Matrix& w1() const { return w1_; }
    const Vector& b1() const { return b1_; }
    const Matrix& w2() const { return w2_; }
    const Vector& b2() const { return b2_; }
    const Matrix& projection() const { return projection_; }

    static MlpPredictor from_parts(Matrix w1, Vector b1, Matrix w2, Vector b2, std::optional<Matrix> projection);

private:
    Matrix w1_;
    Vector b1_;
    Matrix w2_;
    Vector b2_;
    bool use_projection_ = false;
    Matrix projection_;
};

struct PredictorTrainOptions {
    std::size_t hidden = 64;
    double learning_rate = 1e-3;
    std::size_t epochs = 5;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    bool use_projection = true;
};

struct PredictorTrainResult {
    MlpPredictor model;
    // Full-dataset loss at initialization, then after each epoch.
    std::vector<double> loss_trace;
};

PredictorTrainResult train_predictor(std::span<const FeatureRecord> dataset,
                                     const PredictorTrainOptions& options);

/// Squared Euclidean prediction error ||P(x) - T(x)||^2.
double uncertainty_score(const MlpPredictor& model, const FeatureRecord& rec);

struct RerankerConfig {
    double lambda = 0.8;
    std::optional<ZScoreNormalizer> reward_normalizer;
    std::optional<ZScoreNormalizer> uncertainty_normalizer;
};

/// Fits both normalizers on a calibration set (every record needs a proxy score).
RerankerConfig calibrate_reranker(std::span<const FeatureRecord> calibration, const MlpPredictor& model,
                                  double lambda);

/// argmax_i z(proxy_i) - lambda * z(alpha_i); the outcome's scores are the combined values.
SelectionOutcome rerank(std::span<const FeatureRecord> slate, const MlpPredictor& model,
                        const RerankerConfig& cfg);

// --- Synthetic fixtures -------------------------------------------------------

/// In-distribution inputs are x = B z (B a random p x k orthonormal basis,
/// z ~ N(0, I_k)); OOD inputs add C w with C spanning the complement and
/// w ~ N(0, ood_scale^2 I). Targets are frozen random ReLU features
/// T(x) = ReLU(R x) / sqrt(q), R entries ~ N(0, 1), identical for both groups.
struct OodFixtureParams {
    std::size_t input_dim = 16;
    std::size_t subspace_dim = 4;
    std::size_t target_dim = 8;
    double ood_scale = 1.0;
};

class OodFixture {
public:
    OodFixture(const OodFixtureParams& params, RngStream& rng);

    FeatureRecord in_distribution(RngStream& rng, std::string id) const;
    FeatureRecord out_of_distribution(RngStream& rng, std::string id) const;
    std::vector<FeatureRecord> sample(std::size_t count, bool ood, RngStream& rng) const;
    Vector target(std::span<const double> x) const;

private:
    OodFixtureParams params_;
    Matrix basis_;
    Matrix complement_;
    Matrix features_;
};

/// Targets M x with M a fixed q x p matrix; inputs x ~ N(0, I_p).
std::vector<FeatureRecord> make_linear_target_dataset(const Matrix& m, std::size_t count, RngStream& rng);

/// Area under the ROC curve for scores where `positive` should score higher
/// (ties count one half).
double roc_auc(std::span<const double> negatives, std::span<const double> positives);

// --- Files ------------------------------------------------------------------

std::vector<FeatureRecord> read_feature_records(const std::filesystem::path& path);
std::vector<FeatureRecord> parse_feature_records(const std::string& jsonl);
void write_feature_records(std::span<const FeatureRecord> records, const std::filesystem::path& path);

struct Slate {
    std::string slate_id;
    std::vector<FeatureRecord> records;
};

/// Groups by slate_id in order of first appearance; every record needs a slate_id.
std::vector<Slate> group_slates(std::span<const FeatureRecord> records);

struct PredictorBundle {
    MlpPredictor model;
    std::optional<ZScoreNormalizer> reward_normalizer;
    std::optional<ZScoreNormalizer> uncertainty_normalizer;
};

std::string predictor_to_json(const PredictorBundle& bundle);
PredictorBundle predictor_from_json(const std::string& text);
void save_predictor(const PredictorBundle& bundle, const std::filesystem::path& path);
PredictorBundle load_predictor(const std::filesystem::path& path);

}  // namespace caution
