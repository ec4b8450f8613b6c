#include "caution/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "caution/subspace.hpp"

namespace caution {

namespace {

using nlohmann::json;

constexpr const char* kPredictorFormat = "caution-predictor";
constexpr int kPredictorVersion = 1;

void copy_into(std::span<const double> src, std::span<double> dst) {
    std::copy(src.begin(), src.end(), dst.begin());
}

void check_record(const MlpPredictor& model, const FeatureRecord& rec) {
    require_size(rec.input_features, model.input_dim(), "feature record input_features");
    require_size(rec.target_features, model.output_dim(), "feature record target_features");
}

std::vector<std::size_t> shuffled_order(std::size_t n, RngStream rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_in_place(std::span<std::size_t>(order), rng);
    return order;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return rows;
}

Matrix matrix_from(const json& j, std::size_t rows, std::size_t cols, const char* what) {
    if (!j.is_array() || j.size() != rows) {
        throw std::runtime_error(std::string("predictor model: '") + what + "' has the wrong row count");
    }
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = j[r].get<std::vector<double>>();
        if (row.size() != cols) {
            throw std::runtime_error(std::string("predictor model: '") + what + "' has the wrong column count");
        }
        copy_into(row, m.row(r));
    }
    return m;
}

std::optional<ZScoreNormalizer> normalizer_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    const json& n = j.at(key);
    return ZScoreNormalizer(n.at("mean").get<double>(), n.at("std").get<double>(),
                            n.at("sample_count").get<std::size_t>());
}

json normalizer_json(const std::optional<ZScoreNormalizer>& n) {
    if (!n) {
        return nullptr;
    }
    return json{{"mean", n->mean()}, {"std", n->std()}, {"sample_count", n->sample_count()}};
}

FeatureRecord record_from_json(const json& j, std::size_t line) {
    FeatureRecord rec;
    try {
        rec.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
        rec.input_features = j.at("input_features").get<Vector>();
        rec.target_features = j.at("target_features").get<Vector>();
        if (j.contains("proxy_score") && !j.at("proxy_score").is_null()) {
            rec.proxy_score = j.at("proxy_score").get<double>();
        }
        if (j.contains("slate_id") && !j.at("slate_id").is_null()) {
            const json& s = j.at("slate_id");
            rec.slate_id = s.is_string() ? s.get<std::string>() : s.dump();
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("feature records: line " + std::to_string(line) + ": " + e.what());
    }
    return rec;
}

}  // namespace

// --- MlpPredictor -------------------------------------------------------------

MlpPredictor::MlpPredictor(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                           bool use_projection, RngStream& rng)
    : w1_(hidden_dim, input_dim),
      b1_(hidden_dim, 0.0),
      w2_(output_dim, hidden_dim),
      b2_(output_dim, 0.0),
      use_projection_(use_projection) {
    if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) {
        throw std::invalid_argument("MlpPredictor: layer widths must be positive");
    }
    // He initialization for the ReLU layer, Xavier-style for the linear ones.
    rng.fill_normal(w1_.flat(), std::sqrt(2.0 / static_cast<double>(input_dim)));
    rng.fill_normal(w2_.flat(), std::sqrt(1.0 / static_cast<double>(hidden_dim)));
    if (use_projection_) {
        projection_ = Matrix(output_dim, output_dim);
        rng.fill_normal(projection_.flat(), std::sqrt(1.0 / static_cast<double>(output_dim)));
    }
}

MlpPredictor MlpPredictor::from_parts(Matrix w1, Vector b1, Matrix w2, Vector b2,
                                      std::optional<Matrix> projection) {
    if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
        throw DimensionError("MlpPredictor::from_parts: inconsistent layer shapes");
    }
    if (projection && (projection->rows() != w2.rows() || projection->cols() != w2.rows())) {
        throw DimensionError("MlpPredictor::from_parts: projection head must be q x q");
    }
    MlpPredictor p;
    p.w1_ = std::move(w1);
    p.b1_ = std::move(b1);
    p.w2_ = std::move(w2);
    p.b2_ = std::move(b2);
    p.use_projection_ = projection.has_value();
    if (projection) {
        p.projection_ = std::move(*projection);
    }
    return p;
}

std::size_t MlpPredictor::parameter_count() const {
    std::size_t count = w1_.rows() * w1_.cols() + b1_.size() + w2_.rows() * w2_.cols() + b2_.size();
    if (use_projection_) {
        count += projection_.rows() * projection_.cols();
    }
    return count;
}

Vector MlpPredictor::forward(std::span<const double> x) const {
    require_size(x, input_dim(), "MlpPredictor::forward");
    Vector hidden = matvec(w1_, x);
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        hidden[i] = std::max(0.0, hidden[i] + b1_[i]);
    }
    Vector out = add(matvec(w2_, hidden), b2_);
    if (use_projection_) {
        out = matvec(projection_, out);
    }
    return out;
}

double MlpPredictor::loss(std::span<const FeatureRecord> batch) const {
    if (batch.empty()) {
        throw std::invalid_argument("MlpPredictor::loss: empty batch");
    }
    double total = 0.0;
    for (const FeatureRecord& rec : batch) {
        check_record(*this, rec);
        total += squared_norm(subtract(forward(rec.input_features), rec.target_features));
    }
    return total / static_cast<double>(batch.size());
}

Vector MlpPredictor::gradient(std::span<const FeatureRecord> batch) const {
    if (batch.empty()) {
        throw std::invalid_argument("MlpPredictor::gradient: empty batch");
    }
    Matrix g_w1(w1_.rows(), w1_.cols());
    Vector g_b1(b1_.size(), 0.0);
    Matrix g_w2(w2_.rows(), w2_.cols());
    Vector g_b2(b2_.size(), 0.0);
    Matrix g_proj(projection_.rows(), projection_.cols());
    const double scale = 2.0 / static_cast<double>(batch.size());

    for (const FeatureRecord& rec : batch) {
        check_record(*this, rec);
        const Vector& x = rec.input_features;
        Vector pre = add(matvec(w1_, x), b1_);
        Vector hidden = pre;
        for (double& h : hidden) {
            h = std::max(0.0, h);
        }
        const Vector mid = add(matvec(w2_, hidden), b2_);
        const Vector out = use_projection_ ? matvec(projection_, mid) : mid;

        Vector d_out = scaled(subtract(out, rec.target_features), scale);
        Vector d_mid = d_out;
        if (use_projection_) {
            for (std::size_t i = 0; i < g_proj.rows(); ++i) {
                axpy(d_out[i], mid, g_proj.row(i));
            }
            d_mid = matvec_transposed(projection_, d_out);
        }
        for (std::size_t i = 0; i < g_w2.rows(); ++i) {
            axpy(d_mid[i], hidden, g_w2.row(i));
        }
        axpy(1.0, d_mid, g_b2);
        Vector d_hidden = matvec_transposed(w2_, d_mid);
        for (std::size_t i = 0; i < d_hidden.size(); ++i) {
            if (pre[i] <= 0.0) {
                continue;
            }
            axpy(d_hidden[i], x, g_w1.row(i));
            g_b1[i] += d_hidden[i];
        }
    }

    Vector flat;
    flat.reserve(parameter_count());
    flat.insert(flat.end(), g_w1.flat().begin(), g_w1.flat().end());
    flat.insert(flat.end(), g_b1.begin(), g_b1.end());
    flat.insert(flat.end(), g_w2.flat().begin(), g_w2.flat().end());
    flat.insert(flat.end(), g_b2.begin(), g_b2.end());
    if (use_projection_) {
        flat.insert(flat.end(), g_proj.flat().begin(), g_proj.flat().end());
    }
    return flat;
}

Vector MlpPredictor::flatten() const {
    Vector flat;
    flat.reserve(parameter_count());
    flat.insert(flat.end(), w1_.flat().begin(), w1_.flat().end());
    flat.insert(flat.end(), b1_.begin(), b1_.end());
    flat.insert(flat.end(), w2_.flat().begin(), w2_.flat().end());
    flat.insert(flat.end(), b2_.begin(), b2_.end());
    if (use_projection_) {
        flat.insert(flat.end(), projection_.flat().begin(), projection_.flat().end());
    }
    return flat;
}

void MlpPredictor::unflatten(std::span<const double> params) {
    require_size(params, parameter_count(), "MlpPredictor::unflatten");
    std::size_t offset = 0;
    auto take = [&](std::span<double> dst) {
        copy_into(params.subspan(offset, dst.size()), dst);
        offset += dst.size();
    };
    take(w1_.flat());
    take(b1_);
    take(w2_.flat());
    take(b2_);
    if (use_projection_) {
        take(projection_.flat());
    }
}

// --- Training and scoring -----------------------------------------------------

PredictorTrainResult train_predictor(std::span<const FeatureRecord> dataset,
                                     const PredictorTrainOptions& options) {
    if (dataset.empty()) {
        throw std::invalid_argument("train_predictor: dataset is empty");
    }
    if (options.batch_size == 0) {
        throw std::invalid_argument("train_predictor: batch size must be positive");
    }
    if (!(options.learning_rate > 0.0)) {
        throw std::invalid_argument("train_predictor: learning rate must be positive");
    }
    const std::size_t p = dataset.front().input_features.size();
    const std::size_t q = dataset.front().target_features.size();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const FeatureRecord& rec = dataset[i];
        if (rec.input_features.size() != p || rec.target_features.size() != q) {
            throw DimensionError("train_predictor: record " + std::to_string(i) + " ('" + rec.id +
                                 "') has inconsistent feature dimensions");
        }
        for (double v : rec.input_features) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("train_predictor: non-finite input feature in record " +
                                            std::to_string(i));
            }
        }
        for (double v : rec.target_features) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("train_predictor: non-finite target feature in record " +
                                            std::to_string(i));
            }
        }
    }

    RngStream init_rng = derive_stream(options.seed, 0);
    PredictorTrainResult result{MlpPredictor(p, options.hidden, q, options.use_projection, init_rng), {}};
    result.loss_trace.push_back(result.model.loss(dataset));

    std::vector<FeatureRecord> batch;
    batch.reserve(options.batch_size);
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        const auto order = shuffled_order(dataset.size(), derive_stream(options.seed, epoch));
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            batch.clear();
            const std::size_t stop = std::min(order.size(), start + options.batch_size);
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(dataset[order[i]]);
            }
            Vector params = result.model.flatten();
            axpy(-options.learning_rate, result.model.gradient(batch), params);
            result.model.unflatten(params);
        }
        const double loss = result.model.loss(dataset);
        if (!std::isfinite(loss)) {
            throw DivergenceError(epoch, "train_predictor: loss became non-finite at epoch " +
                                             std::to_string(epoch));
        }
        result.loss_trace.push_back(loss);
    }
    return result;
}

double uncertainty_score(const MlpPredictor& model, const FeatureRecord& rec) {
    check_record(model, rec);
    return squared_norm(subtract(model.forward(rec.input_features), rec.target_features));
}

RerankerConfig calibrate_reranker(std::span<const FeatureRecord> calibration, const MlpPredictor& model,
                                  double lambda) {
    std::vector<double> rewards;
    std::vector<double> alphas;
    for (std::size_t i = 0; i < calibration.size(); ++i) {
        if (!calibration[i].proxy_score) {
            throw std::invalid_argument("calibrate_reranker: calibration record " + std::to_string(i) +
                                        " has no proxy_score");
        }
        rewards.push_back(*calibration[i].proxy_score);
        alphas.push_back(uncertainty_score(model, calibration[i]));
    }
    return RerankerConfig{lambda, fit_normalizer(rewards), fit_normalizer(alphas)};
}

SelectionOutcome rerank(std::span<const FeatureRecord> slate, const MlpPredictor& model,
                        const RerankerConfig& cfg) {
    if (slate.empty()) {
        throw std::invalid_argument("rerank: slate is empty");
    }
    if (!cfg.reward_normalizer || !cfg.uncertainty_normalizer) {
        throw std::invalid_argument("rerank: normalizers have not been fitted");
    }
    if (!(cfg.lambda >= 0.0)) {
        throw std::invalid_argument("rerank: lambda must be non-negative");
    }
    SelectionOutcome out;
    out.method = Method::lcb;
    out.slate_size = slate.size();
    out.scores.reserve(slate.size());
    for (std::size_t i = 0; i < slate.size(); ++i) {
        if (!slate[i].proxy_score) {
            throw std::invalid_argument("rerank: candidate " + std::to_string(i) + " ('" + slate[i].id +
                                        "') has no proxy_score");
        }
        const double reward = (*cfg.reward_normalizer)(*slate[i].proxy_score);
        const double alpha = (*cfg.uncertainty_normalizer)(uncertainty_score(model, slate[i]));
        out.scores.push_back(reward - cfg.lambda * alpha);
    }
    out.chosen_index = argmax_first(out.scores);
    out.lcb_score = out.scores[out.chosen_index];
    return out;
}

// --- Fixtures -------------------------------------------------------------------

OodFixture::OodFixture(const OodFixtureParams& params, RngStream& rng) : params_(params) {
    if (params.subspace_dim == 0 || params.subspace_dim >= params.input_dim || params.target_dim == 0) {
        throw std::invalid_argument("OodFixture: need 1 <= subspace_dim < input_dim and target_dim >= 1");
    }
    const Subspace s = random_subspace(params.input_dim, params.subspace_dim, rng);
    basis_ = s.basis();
    complement_ = s.complement_basis();
    features_ = Matrix(params.target_dim, params.input_dim);
    rng.fill_normal(features_.flat());
}

Vector OodFixture::target(std::span<const double> x) const {
    Vector t = matvec(features_, x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(params_.target_dim));
    for (double& v : t) {
        v = std::max(0.0, v) * scale;
    }
    return t;
}

FeatureRecord OodFixture::in_distribution(RngStream& rng, std::string id) const {
    Vector z(params_.subspace_dim);
    rng.fill_normal(z);
    FeatureRecord rec;
    rec.id = std::move(id);
    rec.input_features = matvec(basis_, z);
    rec.target_features = target(rec.input_features);
    return rec;
}

FeatureRecord OodFixture::out_of_distribution(RngStream& rng, std::string id) const {
    FeatureRecord rec = in_distribution(rng, std::move(id));
    Vector w(complement_.cols());
    rng.fill_normal(w, params_.ood_scale);
    axpy(1.0, matvec(complement_, w), rec.input_features);
    rec.target_features = target(rec.input_features);
    return rec;
}

std::vector<FeatureRecord> OodFixture::sample(std::size_t count, bool ood, RngStream& rng) const {
    std::vector<FeatureRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string id = (ood ? "ood-" : "id-") + std::to_string(i);
        out.push_back(ood ? out_of_distribution(rng, std::move(id)) : in_distribution(rng, std::move(id)));
    }
    return out;
}

std::vector<FeatureRecord> make_linear_target_dataset(const Matrix& m, std::size_t count, RngStream& rng) {
    std::vector<FeatureRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        rec.id = "lin-" + std::to_string(i);
        rec.input_features.resize(m.cols());
        rng.fill_normal(rec.input_features);
        rec.target_features = matvec(m, rec.input_features);
        out.push_back(std::move(rec));
    }
    return out;
}

double roc_auc(std::span<const double> negatives, std::span<const double> positives) {
    if (negatives.empty() || positives.empty()) {
        throw std::invalid_argument("roc_auc: both groups need at least one score");
    }
    // Mann-Whitney U via sorting: O((n + m) log(n + m)).
    std::vector<std::pair<double, int>> all;
    all.reserve(negatives.size() + positives.size());
    for (double v : negatives) {
        all.emplace_back(v, 0);
    }
    for (double v : positives) {
        all.emplace_back(v, 1);
    }
    std::sort(all.begin(), all.end());
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        std::size_t pos_in_group = 0;
        while (j < all.size() && all[j].first == all[i].first) {
            pos_in_group += static_cast<std::size_t>(all[j].second);
            ++j;
        }
        // Average 1-based rank of the tied block.
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        rank_sum += avg_rank * static_cast<double>(pos_in_group);
        i = j;
    }
    const double np = static_cast<double>(positives.size());
    const double nn = static_cast<double>(negatives.size());
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// --- Files ------------------------------------------------------------------------

std::vector<FeatureRecord> parse_feature_records(const std::string& jsonl) {
    std::vector<FeatureRecord> out;
    std::istringstream in(jsonl);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("feature records: line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(record_from_json(j, line_no));
    }
    return out;
}

std::vector<FeatureRecord> read_feature_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_feature_records(buffer.str());
}

void write_feature_records(std::span<const FeatureRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    for (const FeatureRecord& rec : records) {
        json j{{"id", rec.id}, {"input_features", rec.input_features}, {"target_features", rec.target_features}};
        if (rec.proxy_score) {
            j["proxy_score"] = *rec.proxy_score;
        }
        if (rec.slate_id) {
            j["slate_id"] = *rec.slate_id;
        }
        out << j.dump() << '\n';
    }
}

std::vector<Slate> group_slates(std::span<const FeatureRecord> records) {
    std::vector<Slate> slates;
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].slate_id) {
            throw std::invalid_argument("group_slates: record " + std::to_string(i) + " ('" + records[i].id +
                                        "') has no slate_id");
        }
        const std::string& sid = *records[i].slate_id;
        auto [it, inserted] = position.emplace(sid, slates.size());
        if (inserted) {
            slates.push_back(Slate{sid, {}});
        }
        slates[it->second].records.push_back(records[i]);
    }
    return slates;
}

std::string predictor_to_json(const PredictorBundle& bundle) {
    const MlpPredictor& m = bundle.model;
    json j{{"format", kPredictorFormat},
           {"version", kPredictorVersion},
           {"input_dim", m.input_dim()},
           {"hidden_dim", m.hidden_dim()},
           {"output_dim", m.output_dim()},
           {"use_projection", m.use_projection()},
           {"w1", matrix_json(m.w1())},
           {"b1", m.b1()},
           {"w2", matrix_json(m.w2())},
           {"b2", m.b2()},
           {"projection", m.use_projection() ? matrix_json(m.projection()) : json(nullptr)},
           {"reward_normalizer", normalizer_json(bundle.reward_normalizer)},
           {"uncertainty_normalizer", normalizer_json(bundle.uncertainty_normalizer)}};
    return j.dump(1);
}

PredictorBundle predictor_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != kPredictorFormat) {
        throw std::runtime_error("predictor model: missing or wrong format tag");
    }
    if (j.at("version").get<int>() != kPredictorVersion) {
        throw std::runtime_error("predictor model: unsupported version " + j.at("version").dump());
    }
    const auto p = j.at("input_dim").get<std::size_t>();
    const auto h = j.at("hidden_dim").get<std::size_t>();
    const auto q = j.at("output_dim").get<std::size_t>();
    std::optional<Matrix> projection;
    if (j.at("use_projection").get<bool>()) {
        projection = matrix_from(j.at("projection"), q, q, "projection");
    }
    PredictorBundle bundle{
        MlpPredictor::from_parts(matrix_from(j.at("w1"), h, p, "w1"), j.at("b1").get<Vector>(),
                                 matrix_from(j.at("w2"), q, h, "w2"), j.at("b2").get<Vector>(),
                                 std::move(projection)),
        normalizer_from(j, "reward_normalizer"), normalizer_from(j, "uncertainty_normalizer")};
    return bundle;
}

void save_predictor(const PredictorBundle& bundle, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out << predictor_to_json(bundle) << '\n';
}

PredictorBundle load_predictor(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return predictor_from_json(buffer.str());
}

}  // namespace caution
