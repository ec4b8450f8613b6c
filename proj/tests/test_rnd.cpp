#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>

#include "caution/rnd.hpp"
#include "caution/subspace.hpp"

using namespace caution;

namespace {

std::shared_ptr<const Subspace> share(Subspace s) { return std::make_shared<const Subspace>(std::move(s)); }

std::vector<Vector> data_in_v(const Subspace& s, std::size_t count, RngStream& rng) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < count; ++i) {
        Vector y(s.ambient_dim());
        rng.fill_normal(y);
        out.push_back(s.project_v(y));
    }
    return out;
}

Vector unit_perp(const Subspace& s, RngStream& rng) {
    Vector y(s.ambient_dim());
    rng.fill_normal(y);
    Vector p = s.project_perp(y);
    return scaled(p, 1.0 / norm(p));
}

double variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / double(v.size() - 1);
}

}  // namespace

TEST_CASE("linear init entry variance is 1/m") {
    RngStream rng(1, 0);
    auto s = share(coordinate_subspace(8, 2));
    const LinearRnd model = init_linear_rnd(8, 1024, s, rng);
    double sq = 0.0;
    for (double v : model.w_star.flat()) sq += v * v;
    const double var = sq / double(model.w_star.flat().size());
    CHECK(std::abs(var * 1024.0 - 1.0) < 0.05);
    CHECK(model.w_hat == model.w_init);
}

TEST_CASE("init is deterministic in the stream") {
    auto s = share(coordinate_subspace(6, 2));
    RngStream a(5, 1), b(5, 1);
    const ReluRnd x = init_relu_rnd(6, 16, 3, s, a);
    const ReluRnd y = init_relu_rnd(6, 16, 3, s, b);
    REQUIRE(x.members.size() == 3);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(x.members[l].w_star == y.members[l].w_star);
        CHECK(x.members[l].w_init == y.members[l].w_init);
        CHECK(x.members[l].u == y.members[l].u);
    }
}

TEST_CASE("relu ensemble of one equals the member") {
    RngStream rng(2, 0);
    auto s = share(coordinate_subspace(5, 2));
    const ReluRnd model = init_relu_rnd(5, 12, 1, s, rng);
    const Vector y{0.3, -1.0, 2.0, 0.5, -0.2};
    CHECK(model.target_output(y) == relu_forward(model.members[0].w_star, model.members[0].u, y));
    CHECK(model.predictor_output(y) == relu_forward(model.members[0].w_hat, model.members[0].u, y));
}

TEST_CASE("relu member is positively homogeneous") {
    RngStream rng(3, 0);
    auto s = share(coordinate_subspace(5, 2));
    const ReluRnd model = init_relu_rnd(5, 20, 2, s, rng);
    Vector y(5);
    rng.fill_normal(y);
    for (double r : {0.1, 2.0, 17.5}) {
        const Vector a = model.target_output(scaled(y, r));
        const Vector b = scaled(model.target_output(y), r);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10 * std::max(1.0, std::abs(b[i])));
    }
}

TEST_CASE("idealized training on a coordinate subspace is exact") {
    RngStream rng(4, 0);
    auto s = share(coordinate_subspace(6, 3));
    const LinearRnd lin = train_idealized(init_linear_rnd(6, 32, s, rng));
    const ReluRnd relu = train_idealized(init_relu_rnd(6, 32, 2, s, rng));
    const Vector in_v{1.5, -2.0, 0.25, 0, 0, 0};
    CHECK(uncertainty(lin, in_v, UncertaintyVariant::norm) == 0.0);
    CHECK(uncertainty(relu, in_v, UncertaintyVariant::squared) == 0.0);
    CHECK(orthogonal_drift(lin) == 0.0);
    CHECK(orthogonal_drift(relu) == 0.0);
}

TEST_CASE("idealized training on a random subspace") {
    RngStream rng(5, 0);
    auto s = share(random_subspace(10, 4, rng));
    const LinearRnd lin = train_idealized(init_linear_rnd(10, 64, s, rng));
    const ReluRnd relu = train_idealized(init_relu_rnd(10, 64, 3, s, rng));
    CHECK(orthogonal_drift(lin) < 1e-12);
    CHECK(orthogonal_drift(relu) < 1e-12);
    CHECK(in_subspace_error(lin) < 1e-12);
    for (const Vector& y : data_in_v(*s, 20, rng)) {
        CHECK(uncertainty(lin, y, UncertaintyVariant::norm) < 1e-12);
        CHECK(uncertainty(relu, y, UncertaintyVariant::norm) < 1e-12);
    }
    Vector y(10);
    rng.fill_normal(y);
    // Error vector is (w_init - w_star) proj_perp(y).
    const Vector want = matvec(lin.w_init - lin.w_star, s->project_perp(y));
    const Vector got = subtract(lin.predictor_output(y), lin.target_output(y));
    CHECK(norm(subtract(want, got)) < 1e-12);
    CHECK(std::abs(uncertainty(lin, y, UncertaintyVariant::norm) - norm(want)) < 1e-12);
    const double n = uncertainty(relu, y, UncertaintyVariant::norm);
    CHECK(uncertainty(relu, y, UncertaintyVariant::squared) == doctest::Approx(n * n).epsilon(1e-12));
}

TEST_CASE("linear idealized ratio concentrates near sqrt(2)") {
    const std::size_t d = 32, k = 8, m = 4096;
    RngStream rng(6, 0);
    auto s = share(random_subspace(d, k, rng));
    const Vector y = unit_perp(*s, rng);
    const int draws = 100;
    int inside = 0;
    for (int i = 0; i < draws; ++i) {
        RngStream draw = rng.split(i);
        const LinearRnd model = train_idealized(init_linear_rnd(d, m, s, draw));
        const double ratio = uncertainty(model, y, UncertaintyVariant::norm) / norm(s->project_perp(y));
        if (ratio >= 1.30 && ratio <= 1.53) ++inside;
    }
    CHECK(inside >= 99);
}

TEST_CASE("linear sandwich around sqrt(2) at m = 4096") {
    const std::size_t d = 32, k = 8, m = 4096;
    RngStream rng(7, 0);
    auto s = share(random_subspace(d, k, rng));
    const LinearRnd model = train_idealized(init_linear_rnd(d, m, s, rng));
    const double half_width = 3.0 * std::sqrt(double(d) / double(m));
    for (int i = 0; i < 2000; ++i) {
        Vector y(d);
        rng.fill_normal(y);
        y = scaled(y, 1.0 / norm(y));
        const double ratio = uncertainty(model, y, UncertaintyVariant::norm) / (std::sqrt(2.0) * norm(s->project_perp(y)));
        REQUIRE(ratio >= 1.0 - half_width);
        REQUIRE(ratio <= 1.0 + half_width);
    }
}

TEST_CASE("relu mean squared uncertainty lies in the envelope") {
    const std::size_t d = 16, k = 4, m = 128;
    RngStream rng(8, 0);
    auto s = share(random_subspace(d, k, rng));
    const Vector y = unit_perp(*s, rng);
    double sum = 0.0;
    for (int i = 0; i < 200; ++i) {
        RngStream draw = rng.split(i);
        sum += uncertainty(train_idealized(init_relu_rnd(d, m, 1, s, draw)), y, UncertaintyVariant::squared);
    }
    const double ratio = sum / 200.0;
    CHECK(ratio >= 0.25);
    CHECK(ratio <= 2.0);
    // The exact mean for a unit vector in V-perp is 1 - 1/pi.
    CHECK(std::abs(ratio - (1.0 - 1.0 / M_PI)) < 0.1);
}

TEST_CASE("ensemble averaging reduces uncertainty variance across seeds") {
    const std::size_t d = 8, k = 2, m = 32;
    RngStream rng(9, 0);
    auto s = share(random_subspace(d, k, rng));
    const Vector y = unit_perp(*s, rng);
    std::vector<double> var;
    for (std::size_t t : {1, 4, 16}) {
        std::vector<double> values;
        for (int i = 0; i < 400; ++i) {
            RngStream draw = rng.split(1000 * t + i);
            values.push_back(uncertainty(train_idealized(init_relu_rnd(d, m, t, s, draw)), y, UncertaintyVariant::squared));
        }
        var.push_back(variance(values));
    }
    CHECK(var[1] < var[0] / 4.0 * 1.5);
    CHECK(var[2] < var[1] / 4.0 * 1.5);
}

TEST_CASE("linear gradient training converges and leaves V-perp alone") {
    RngStream rng(10, 0);
    auto s = share(random_subspace(4, 2, rng));
    const auto data = data_in_v(*s, 16, rng);
    const auto result = train_gradient(init_linear_rnd(4, 32, s, rng), data, GradientOptions{0.1, 2000, 0.0});
    CHECK(in_subspace_error(result.model) < 1e-4);
    CHECK(orthogonal_drift(result.model) < 1e-10);
    REQUIRE(result.loss_trace.size() == 2001);
    for (std::size_t i = 1; i < result.loss_trace.size(); ++i) {
        // Once the loss reaches rounding level it may jitter by an ulp or so.
        REQUIRE(result.loss_trace[i] <= result.loss_trace[i - 1] + 1e-20);
    }
}

TEST_CASE("relu gradient training leaves V-perp alone and lowers the loss") {
    RngStream rng(11, 0);
    auto s = share(random_subspace(8, 3, rng));
    const auto data = data_in_v(*s, 32, rng);
    const auto result = train_gradient(init_relu_rnd(8, 32, 2, s, rng), data, GradientOptions{0.1, 500, 0.0});
    CHECK(orthogonal_drift(result.model) < 1e-8);
    CHECK(result.loss_trace.back() < result.loss_trace.front());
}

TEST_CASE("zero epochs keep the initial weights") {
    RngStream rng(12, 0);
    auto s = share(coordinate_subspace(4, 2));
    const auto data = data_in_v(*s, 4, rng);
    const LinearRnd init = init_linear_rnd(4, 8, s, rng);
    const auto result = train_gradient(init, data, GradientOptions{0.1, 0, 0.0});
    CHECK(result.model.w_hat == init.w_init);
}

TEST_CASE("training rejects vectors outside V and reports divergence") {
    RngStream rng(13, 0);
    auto s = share(coordinate_subspace(4, 2));
    const std::vector<Vector> outside{{1, 0, 1e-3, 0}};
    CHECK_THROWS_AS(train_gradient(init_linear_rnd(4, 8, s, rng), outside, GradientOptions{}), std::invalid_argument);
    const std::vector<Vector> inside{{100, 50, 0, 0}, {-80, 30, 0, 0}};
    try {
        train_gradient(init_linear_rnd(4, 8, s, rng), inside, GradientOptions{10.0, 1000, 0.0});
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch() > 0);
    }
}

TEST_CASE("distillation gradients match finite differences") {
    RngStream rng(14, 0);
    auto s = share(random_subspace(6, 3, rng));
    const auto data = data_in_v(*s, 8, rng);
    const double h = 1e-6;

    SUBCASE("linear") {
        LinearRnd model = init_linear_rnd(6, 10, s, rng);
        const Matrix grad = distillation_gradient(model, data);
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng.uniform_below(model.w_hat.flat().size());
            const double saved = model.w_hat.flat()[i];
            model.w_hat.flat()[i] = saved + h;
            const double up = distillation_loss(model, data);
            model.w_hat.flat()[i] = saved - h;
            const double down = distillation_loss(model, data);
            model.w_hat.flat()[i] = saved;
            const double fd = (up - down) / (2 * h);
            CHECK(std::abs(fd - grad.flat()[i]) / std::max({std::abs(fd), std::abs(grad.flat()[i]), 1e-8}) < 1e-5);
        }
    }
    SUBCASE("relu member") {
        ReluMember member = init_relu_rnd(6, 10, 1, s, rng).members[0];
        const Matrix grad = distillation_gradient(member, data);
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng.uniform_below(member.w_hat.flat().size());
            const double saved = member.w_hat.flat()[i];
            member.w_hat.flat()[i] = saved + h;
            const double up = distillation_loss(member, data);
            member.w_hat.flat()[i] = saved - h;
            const double down = distillation_loss(member, data);
            member.w_hat.flat()[i] = saved;
            const double fd = (up - down) / (2 * h);
            CHECK(std::abs(fd - grad.flat()[i]) / std::max({std::abs(fd), std::abs(grad.flat()[i]), 1e-8}) < 1e-5);
        }
    }
}

TEST_CASE("uncertainty variant parsing") {
    CHECK(parse_uncertainty_variant("norm") == UncertaintyVariant::norm);
    CHECK(parse_uncertainty_variant("squared") == UncertaintyVariant::squared);
    CHECK(to_string(UncertaintyVariant::squared) == "squared");
    CHECK_THROWS(parse_uncertainty_variant("cubed"));
}

TEST_CASE("model files round trip") {
    RngStream rng(15, 0);
    auto s = share(random_subspace(5, 2, rng));
    const auto dir = std::filesystem::temp_directory_path();
    const RndModel lin = train_idealized(RndModel(init_linear_rnd(5, 7, s, rng)));
    const RndModel relu = train_idealized(RndModel(init_relu_rnd(5, 7, 2, s, rng)));
    for (const RndModel& model : {lin, relu}) {
        const auto path = dir / "caution_rnd_roundtrip.json";
        save_rnd_model(model, path);
        const RndModel back = load_rnd_model(path);
        std::filesystem::remove(path);
        REQUIRE(back.index() == model.index());
        Vector y(5);
        rng.fill_normal(y);
        CHECK(uncertainty(back, y, UncertaintyVariant::norm) == uncertainty(model, y, UncertaintyVariant::norm));
    }
    CHECK_THROWS(rnd_model_from_json(R"({"format":"something-else","version":1})"));
}
