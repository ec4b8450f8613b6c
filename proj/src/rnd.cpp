#include "caution/rnd.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "caution/tolerances.hpp"

namespace caution {

namespace {

using nlohmann::json;

constexpr const char* kModelFormat = "caution-rnd";
constexpr int kModelVersion = 1;

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, RngStream& rng) {
    Matrix m(rows, cols);
    rng.fill_normal(m.flat(), stddev);
    return m;
}

void require_subspace(const std::shared_ptr<const Subspace>& s, std::size_t d, const char* what) {
    if (!s) {
        throw std::invalid_argument(std::string(what) + ": subspace is required");
    }
    if (s->ambient_dim() != d) {
        throw DimensionError(std::string(what) + ": subspace ambient dimension " +
                             std::to_string(s->ambient_dim()) + " does not match d=" + std::to_string(d));
    }
}

void check_training_set(const Subspace& s, std::span<const Vector> training_set) {
    if (training_set.empty()) {
        throw std::invalid_argument("train_gradient: training set is empty");
    }
    for (std::size_t i = 0; i < training_set.size(); ++i) {
        require_size(training_set[i], s.ambient_dim(), "train_gradient training vector");
        const double off = norm(s.project_perp(training_set[i]));
        if (!(off < kTolerances.subspace_membership)) {
            throw std::invalid_argument("train_gradient: training vector " + std::to_string(i) +
                                        " lies outside V (||proj_perp|| = " + std::to_string(off) + ")");
        }
    }
}

void check_options(const GradientOptions& options) {
    if (!(options.learning_rate > 0.0) || !std::isfinite(options.learning_rate)) {
        throw std::invalid_argument("train_gradient: learning rate must be positive");
    }
}

Matrix idealized_weights(const Matrix& w_star, const Matrix& w_init, const Subspace& s) {
    return matmul(w_star, s.projector()) + matmul(w_init, s.perp_projector());
}

double finish(double squared, UncertaintyVariant variant) {
    return variant == UncertaintyVariant::squared ? squared : std::sqrt(squared);
}

void check_loss(double loss, std::size_t epoch) {
    if (!std::isfinite(loss)) {
        throw DivergenceError(epoch, "train_gradient: loss became non-finite at epoch " +
                                         std::to_string(epoch));
    }
}

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()},
                {"data", std::vector<double>(m.flat().begin(), m.flat().end())}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.rows() * m.cols()) {
        throw std::runtime_error("rnd model: matrix data length does not match its shape");
    }
    std::copy(data.begin(), data.end(), m.flat().begin());
    return m;
}

}  // namespace

UncertaintyVariant parse_uncertainty_variant(const std::string& name) {
    if (name == "norm") {
        return UncertaintyVariant::norm;
    }
    if (name == "squared") {
        return UncertaintyVariant::squared;
    }
    throw std::invalid_argument("unknown uncertainty variant '" + name + "' (expected norm|squared)");
}

std::string to_string(UncertaintyVariant v) {
    return v == UncertaintyVariant::norm ? "norm" : "squared";
}

Vector relu_forward(const Matrix& w, const Matrix& u, std::span<const double> y) {
    Vector hidden = matvec(w, y);
    for (double& h : hidden) {
        h = h > 0.0 ? h : 0.0;
    }
    Vector out = matvec(u, hidden);
    const double inv_m = 1.0 / static_cast<double>(w.rows());
    for (double& o : out) {
        o *= inv_m;
    }
    return out;
}

Vector ReluRnd::target_output(std::span<const double> y) const {
    Vector out(width, 0.0);
    for (const ReluMember& member : members) {
        axpy(1.0 / static_cast<double>(members.size()), relu_forward(member.w_star, member.u, y), out);
    }
    return out;
}

Vector ReluRnd::predictor_output(std::span<const double> y) const {
    Vector out(width, 0.0);
    for (const ReluMember& member : members) {
        axpy(1.0 / static_cast<double>(members.size()), relu_forward(member.w_hat, member.u, y), out);
    }
    return out;
}

LinearRnd init_linear_rnd(std::size_t d, std::size_t m, std::shared_ptr<const Subspace> s,
                          RngStream& rng) {
    if (m == 0 || d == 0) {
        throw std::invalid_argument("init_linear_rnd: d and m must be positive");
    }
    require_subspace(s, d, "init_linear_rnd");
    const double stddev = 1.0 / std::sqrt(static_cast<double>(m));
    LinearRnd model;
    model.dim = d;
    model.width = m;
    model.subspace = std::move(s);
    model.w_star = gaussian_matrix(m, d, stddev, rng);
    model.w_init = gaussian_matrix(m, d, stddev, rng);
    model.w_hat = model.w_init;
    return model;
}

ReluRnd init_relu_rnd(std::size_t d, std::size_t m, std::size_t ensemble_count,
                      std::shared_ptr<const Subspace> s, RngStream& rng) {
    if (m == 0 || d == 0 || ensemble_count == 0) {
        throw std::invalid_argument("init_relu_rnd: d, m and T must be positive");
    }
    require_subspace(s, d, "init_relu_rnd");
    ReluRnd model;
    model.dim = d;
    model.width = m;
    model.subspace = std::move(s);
    model.members.reserve(ensemble_count);
    for (std::size_t l = 0; l < ensemble_count; ++l) {
        ReluMember member;
        member.w_star = gaussian_matrix(m, d, 1.0, rng);
        member.w_init = gaussian_matrix(m, d, 1.0, rng);
        member.u = gaussian_matrix(m, m, 1.0, rng);
        member.w_hat = member.w_init;
        model.members.push_back(std::move(member));
    }
    return model;
}

LinearRnd train_idealized(LinearRnd model) {
    model.w_hat = idealized_weights(model.w_star, model.w_init, *model.subspace);
    return model;
}

ReluRnd train_idealized(ReluRnd model) {
    for (ReluMember& member : model.members) {
        member.w_hat = idealized_weights(member.w_star, member.w_init, *model.subspace);
    }
    return model;
}

RndModel train_idealized(RndModel model) {
    return std::visit([](auto m) -> RndModel { return train_idealized(std::move(m)); }, std::move(model));
}

double distillation_loss(const LinearRnd& model, std::span<const Vector> training_set) {
    const Matrix diff = model.w_hat - model.w_star;
    double total = 0.0;
    for (const Vector& y : training_set) {
        total += squared_norm(matvec(diff, y));
    }
    return total / static_cast<double>(training_set.size());
}

Matrix distillation_gradient(const LinearRnd& model, std::span<const Vector> training_set) {
    // d/dW mean ||(W - W*) y||^2 = (2/n) sum (W - W*) y y^T
    const Matrix diff = model.w_hat - model.w_star;
    Matrix grad(model.width, model.dim);
    const double scale = 2.0 / static_cast<double>(training_set.size());
    for (const Vector& y : training_set) {
        const Vector e = matvec(diff, y);
        for (std::size_t i = 0; i < grad.rows(); ++i) {
            axpy(scale * e[i], y, grad.row(i));
        }
    }
    return grad;
}

double distillation_loss(const ReluMember& member, std::span<const Vector> training_set) {
    double total = 0.0;
    for (const Vector& y : training_set) {
        total += squared_norm(subtract(relu_forward(member.w_hat, member.u, y),
                                       relu_forward(member.w_star, member.u, y)));
    }
    return total / static_cast<double>(training_set.size());
}

Matrix distillation_gradient(const ReluMember& member, std::span<const Vector> training_set) {
    const std::size_t m = member.w_hat.rows();
    const double inv_m = 1.0 / static_cast<double>(m);
    const double scale = 2.0 / static_cast<double>(training_set.size());
    Matrix grad(m, member.w_hat.cols());
    for (const Vector& y : training_set) {
        const Vector pre = matvec(member.w_hat, y);
        Vector err = subtract(relu_forward(member.w_hat, member.u, y), relu_forward(member.w_star, member.u, y));
        // dL/dReLU = (1/m) U^T (scale * err), gated by the active units.
        Vector back = matvec_transposed(member.u, err);
        for (std::size_t i = 0; i < m; ++i) {
            if (pre[i] > 0.0) {
                axpy(scale * inv_m * back[i], y, grad.row(i));
            }
        }
    }
    return grad;
}

TrainingResult<LinearRnd> train_gradient(LinearRnd model, std::span<const Vector> training_set,
                                         GradientOptions options) {
    check_options(options);
    check_training_set(*model.subspace, training_set);
    TrainingResult<LinearRnd> result{std::move(model), {}, false};
    double loss = distillation_loss(result.model, training_set);
    check_loss(loss, 0);
    result.loss_trace.push_back(loss);
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        if (loss < options.stop_below) {
            result.converged = true;
            break;
        }
        Matrix grad = distillation_gradient(result.model, training_set);
        grad *= options.learning_rate;
        result.model.w_hat -= grad;
        loss = distillation_loss(result.model, training_set);
        check_loss(loss, epoch);
        result.loss_trace.push_back(loss);
    }
    result.converged = result.converged || loss < options.stop_below;
    return result;
}

TrainingResult<ReluRnd> train_gradient(ReluRnd model, std::span<const Vector> training_set,
                                       GradientOptions options) {
    check_options(options);
    check_training_set(*model.subspace, training_set);
    TrainingResult<ReluRnd> result{std::move(model), {}, false};
    auto mean_loss = [&] {
        double total = 0.0;
        for (const ReluMember& member : result.model.members) {
            total += distillation_loss(member, training_set);
        }
        return total / static_cast<double>(result.model.members.size());
    };
    double loss = mean_loss();
    check_loss(loss, 0);
    result.loss_trace.push_back(loss);
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        if (loss < options.stop_below) {
            result.converged = true;
            break;
        }
        for (ReluMember& member : result.model.members) {
            Matrix grad = distillation_gradient(member, training_set);
            grad *= options.learning_rate;
            member.w_hat -= grad;
        }
        loss = mean_loss();
        check_loss(loss, epoch);
        result.loss_trace.push_back(loss);
    }
    result.converged = result.converged || loss < options.stop_below;
    return result;
}

double uncertainty(const LinearRnd& model, std::span<const double> y, UncertaintyVariant variant) {
    require_size(y, model.dim, "uncertainty");
    const Vector err = subtract(model.predictor_output(y), model.target_output(y));
    return finish(squared_norm(err), variant);
}

double uncertainty(const ReluRnd& model, std::span<const double> y, UncertaintyVariant variant) {
    require_size(y, model.dim, "uncertainty");
    const Vector err = subtract(model.predictor_output(y), model.target_output(y));
    return finish(squared_norm(err), variant);
}

double uncertainty(const RndModel& model, std::span<const double> y, UncertaintyVariant variant) {
    return std::visit([&](const auto& m) { return uncertainty(m, y, variant); }, model);
}

double orthogonal_drift(const LinearRnd& model) {
    return frobenius_norm(matmul(model.w_hat - model.w_init, model.subspace->perp_projector()));
}

double orthogonal_drift(const ReluRnd& model) {
    const Matrix perp = model.subspace->perp_projector();
    double total = 0.0;
    for (const ReluMember& member : model.members) {
        total += squared_norm(matmul(member.w_hat - member.w_init, perp).flat());
    }
    return std::sqrt(total);
}

double in_subspace_error(const LinearRnd& model) {
    return frobenius_norm(matmul(model.w_hat - model.w_star, model.subspace->projector()));
}

std::string rnd_model_to_json(const RndModel& model) {
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            j["dim"] = m.dim;
            j["width"] = m.width;
            j["subspace_basis"] = matrix_to_json(m.subspace->basis());
            json members = json::array();
            if constexpr (std::is_same_v<T, LinearRnd>) {
                j["kind"] = "linear";
                members.push_back({{"w_star", matrix_to_json(m.w_star)},
                                   {"w_init", matrix_to_json(m.w_init)},
                                   {"w_hat", matrix_to_json(m.w_hat)}});
            } else {
                j["kind"] = "relu";
                for (const ReluMember& member : m.members) {
                    members.push_back({{"w_star", matrix_to_json(member.w_star)},
                                       {"w_init", matrix_to_json(member.w_init)},
                                       {"w_hat", matrix_to_json(member.w_hat)},
                                       {"u", matrix_to_json(member.u)}});
                }
            }
            j["members"] = std::move(members);
        },
        model);
    return j.dump();
}

RndModel rnd_model_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != kModelFormat) {
        throw std::runtime_error("rnd model: missing or wrong format tag");
    }
    if (j.at("version").get<int>() != kModelVersion) {
        throw std::runtime_error("rnd model: unsupported version " + j.at("version").dump());
    }
    auto subspace = std::make_shared<const Subspace>(matrix_from_json(j.at("subspace_basis")));
    const auto dim = j.at("dim").get<std::size_t>();
    const auto width = j.at("width").get<std::size_t>();
    const std::string kind = j.at("kind").get<std::string>();
    const json& members = j.at("members");
    if (kind == "linear") {
        if (members.size() != 1) {
            throw std::runtime_error("rnd model: linear model must have exactly one member");
        }
        LinearRnd m{dim, width, subspace, matrix_from_json(members[0].at("w_star")),
                    matrix_from_json(members[0].at("w_init")), matrix_from_json(members[0].at("w_hat"))};
        return m;
    }
    if (kind == "relu") {
        ReluRnd m{dim, width, subspace, {}};
        for (const json& member : members) {
            m.members.push_back(ReluMember{matrix_from_json(member.at("w_star")),
                                           matrix_from_json(member.at("w_init")),
                                           matrix_from_json(member.at("w_hat")),
                                           matrix_from_json(member.at("u"))});
        }
        if (m.members.empty()) {
            throw std::runtime_error("rnd model: relu model has no members");
        }
        return m;
    }
    throw std::runtime_error("rnd model: unknown kind '" + kind + "'");
}

void save_rnd_model(const RndModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out << rnd_model_to_json(model) << '\n';
}

RndModel load_rnd_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return rnd_model_from_json(buffer.str());
}

}  // namespace caution
