#pragma once

// Random-network-distillation uncertainty models used by the theory harness.
//
// A frozen random target f_{W*} is distilled into a predictor f_{W} that starts
// at an independent random W0 and is trained only on inputs from V. The
// prediction error then measures how far an input leaves V.
//
//   linear:  f_W(y) = W y,                W*, W0 entries ~ N(0, 1/m)
//   relu:    f_W(y) = (1/m) U ReLU(W y),   W*, W0, U entries ~ N(0, 1)
//
// For the ReLU model U is shared by target and predictor of a member and never
// trained; the ensemble output is the mean over T independent members.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "caution/linalg.hpp"
#include "caution/random.hpp"
#include "caution/subspace.hpp"

namespace caution {

enum class UncertaintyVariant { norm, squared };

UncertaintyVariant parse_uncertainty_variant(const std::string& name);
std::string to_string(UncertaintyVariant v);

struct LinearRnd {
    std::size_t dim = 0;
    std::size_t width = 0;
    std::shared_ptr<const Subspace> subspace;
    Matrix w_star;
    Matrix w_init;
    Matrix w_hat;

    Vector target_output(std::span<const double> y) const { return matvec(w_star, y); }
    Vector predictor_output(std::span<const double> y) const { return matvec(w_hat, y); }
};

struct ReluMember {
    Matrix w_star;
    Matrix w_init;
    Matrix w_hat;
    Matrix u;
};

struct ReluRnd {
    std::size_t dim = 0;
    std::size_t width = 0;
    std::shared_ptr<const Subspace> subspace;
    std::vector<ReluMember> members;

    std::size_t ensemble_count() const { return members.size(); }
    Vector target_output(std::span<const double> y) const;
    Vector predictor_output(std::span<const double> y) const;
};

/// (1/m) U ReLU(W y) for one member.
Vector relu_forward(const Matrix& w, const Matrix& u, std::span<const double> y);

using RndModel = std::variant<LinearRnd, ReluRnd>;

LinearRnd init_linear_rnd(std::size_t d, std::size_t m, std::shared_ptr<const Subspace> s,
                          RngStream& rng);
ReluRnd init_relu_rnd(std::size_t d, std::size_t m, std::size_t ensemble_count,
                      std::shared_ptr<const Subspace> s, RngStream& rng);

/// The fixed point of training on V: w_hat = w_star proj_V + w_init proj_perp.
LinearRnd train_idealized(LinearRnd model);
ReluRnd train_idealized(ReluRnd model);
RndModel train_idealized(RndModel model);

template <typename Model>
struct TrainingResult {
    Model model;
    // loss_trace[0] is the loss at the starting weights; one entry per completed epoch after.
    std::vector<double> loss_trace;
    bool converged = false;
};

struct GradientOptions {
    double learning_rate = 0.1;
    std::size_t epochs = 1000;
    // Stop once the loss drops below this; 0 disables early stopping.
    double stop_below = 0.0;
};

/// Full-batch gradient descent on the mean squared distillation loss, first
/// layer only. Every training vector must lie in V.
TrainingResult<LinearRnd> train_gradient(LinearRnd model, std::span<const Vector> training_set,
                                         GradientOptions options);
TrainingResult<ReluRnd> train_gradient(ReluRnd model, std::span<const Vector> training_set,
                                       GradientOptions options);

// Loss and gradient at the current w_hat; exposed for finite-difference checks.
double distillation_loss(const LinearRnd& model, std::span<const Vector> training_set);
Matrix distillation_gradient(const LinearRnd& model, std::span<const Vector> training_set);
double distillation_loss(const ReluMember& member, std::span<const Vector> training_set);
Matrix distillation_gradient(const ReluMember& member, std::span<const Vector> training_set);

double uncertainty(const LinearRnd& model, std::span<const double> y, UncertaintyVariant variant);
double uncertainty(const ReluRnd& model, std::span<const double> y, UncertaintyVariant variant);
double uncertainty(const RndModel& model, std::span<const double> y, UncertaintyVariant variant);

// ||(w_hat - w_init) proj_perp||_F; zero when training never touched V-perp.
double orthogonal_drift(const LinearRnd& model);
double orthogonal_drift(const ReluRnd& model);
// ||(w_hat - w_star) proj_V||_F.
double in_subspace_error(const LinearRnd& model);

/// JSON record with a format tag and version; see README for the layout.
void save_rnd_model(const RndModel& model, const std::filesystem::path& path);
RndModel load_rnd_model(const std::filesystem::path& path);
std::string rnd_model_to_json(const RndModel& model);
RndModel rnd_model_from_json(const std::string& text);

}  // namespace caution
