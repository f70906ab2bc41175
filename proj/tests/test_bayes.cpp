#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "elastobayes/bayes.hpp"
#include "elastobayes/cbc.hpp"
#include "elastobayes/experiments.hpp"
#include "oracles.hpp"

using namespace eb;
using namespace eb::bayes;

namespace {

ObservationSetup zero_data_setup(double sigma = 0.1) {
    ObservationSetup setup;
    setup.sensors = default_sensors();
    setup.sigma = sigma;
    setup.delta.assign(2 * setup.sensors.size(), 0.0);
    return setup;
}

struct SmallProblem {
    fem::TriMeshP2 mesh;
    fem::DofMap dofs;
    KLField field;
    SmallProblem(int n, int s) : mesh(fem::build_mesh(n)), dofs(fem::make_dof_map(mesh)),
                                 field(make_field("sine-product", s, 0.4)) {}
};

}  // namespace

TEST_CASE("sensor layout") {
    const auto sensors = default_sensors();
    REQUIRE(sensors.size() == 10);
    CHECK(sensors[0].y == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(sensors[1].y == doctest::Approx(0.1009).epsilon(1e-13));
    CHECK(sensors[9].y == doctest::Approx(0.9001).epsilon(1e-13));
    for (const auto& p : sensors) {
        CHECK(p.x == 0.5);
        CHECK(p.y > 0.0);
        CHECK(p.y < 1.0);
    }
}

TEST_CASE("observation operator") {
    SmallProblem prob(6, 2);
    const ObservationSetup setup = zero_data_setup();

    SUBCASE("zero displacement observes as zeros") {
        fem::Displacement zero;
        zero.mesh = &prob.mesh;
        zero.dofs = &prob.dofs;
        zero.free_values = Eigen::VectorXd::Zero(prob.dofs.free_count);
        const auto values = observe(zero, setup);
        REQUIRE(values.size() == 20);
        for (double v : values) CHECK(v == 0.0);
    }
    SUBCASE("linear in the displacement") {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> gauss(0.0, 1.0);
        fem::Displacement a, b, sum;
        for (fem::Displacement* d : {&a, &b, &sum}) {
            d->mesh = &prob.mesh;
            d->dofs = &prob.dofs;
            d->free_values = Eigen::VectorXd(prob.dofs.free_count);
        }
        for (int i = 0; i < prob.dofs.free_count; ++i) {
            a.free_values[i] = gauss(rng);
            b.free_values[i] = gauss(rng);
            sum.free_values[i] = a.free_values[i] + b.free_values[i];
        }
        const auto va = observe(a, setup), vb = observe(b, setup), vs = observe(sum, setup);
        for (std::size_t i = 0; i < vs.size(); ++i)
            CHECK(vs[i] == doctest::Approx(va[i] + vb[i]).epsilon(1e-13));
    }
    SUBCASE("component-major order within each sensor") {
        // A displacement with distinct components separates even/odd slots.
        fem::ForwardSolver solver(prob.mesh, prob.dofs, prob.field, fem::default_body_force());
        const std::vector<double> y{0.1, -0.2};
        const fem::Displacement u = solver.solve_at(y);
        const auto values = observe(u, setup);
        for (std::size_t k = 0; k < setup.sensors.size(); ++k) {
            const Vec2 direct = fem::evaluate_at(u, setup.sensors[k]);
            CHECK(values[2 * k] == direct.x);
            CHECK(values[2 * k + 1] == direct.y);
        }
    }
}

TEST_CASE("misfit potential") {
    ObservationSetup setup = zero_data_setup(1.0);
    SUBCASE("perfect prediction has zero misfit") {
        setup.delta.assign(20, 0.7);
        const std::vector<double> predicted(20, 0.7);
        CHECK(misfit_potential(predicted, setup) == 0.0);
    }
    SUBCASE("unit mismatch of length 20 at sigma 1") {
        const std::vector<double> predicted(20, -1.0);
        setup.delta.assign(20, 0.0);
        CHECK(misfit_potential(predicted, setup) == doctest::Approx(10.0).epsilon(1e-15));
    }
    SUBCASE("sigma 0.1 scales the inverse covariance to 10") {
        setup.sigma = 0.1;
        std::mt19937_64 rng(5);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> predicted(20);
        double sq = 0.0;
        for (auto& v : predicted) {
            v = gauss(rng);
            sq += v * v;
        }
        setup.delta.assign(20, 0.0);
        CHECK(misfit_potential(predicted, setup) == doctest::Approx(5.0 * sq).epsilon(1e-13));
    }
    SUBCASE("length mismatch and bad sigma") {
        CHECK_THROWS_AS((void)misfit_potential(std::vector<double>(19, 0.0), setup),
                        eb::InputError);
        setup.sigma = 0.0;
        CHECK_THROWS_AS((void)misfit_potential(std::vector<double>(20, 0.0), setup),
                        eb::ConfigError);
    }
}

TEST_CASE("likelihood and weighted quantity of interest") {
    SmallProblem prob(6, 2);
    const std::vector<double> y{0.2, -0.3};

    // Build data equal to the model prediction at y: the misfit vanishes.
    fem::ForwardSolver probe(prob.mesh, prob.dofs, prob.field, fem::default_body_force());
    const fem::Displacement at_truth = probe.solve_at(y);
    ObservationSetup setup = zero_data_setup();
    setup.delta = observe(at_truth, setup);

    ForwardContext context(prob.mesh, prob.dofs, prob.field, fem::default_body_force(), setup);
    SUBCASE("matching data gives likelihood one and weighted qoi = qoi") {
        const SampleValue v = context.eval(y);
        CHECK(v.potential == 0.0);
        CHECK(v.likelihood == 1.0);
        CHECK(v.weighted_qoi == v.qoi);
        CHECK(v.qoi == doctest::Approx(fem::qoi_integral(at_truth)).epsilon(1e-15));
    }
    SUBCASE("larger mismatch along a direction shrinks the likelihood") {
        std::vector<double> y2 = y;
        double prev = 1.0;
        for (int step = 1; step <= 4; ++step) {
            y2[0] = y[0] + 0.05 * step;
            const double theta = context.likelihood(y2);
            CHECK(theta > 0.0);
            CHECK(theta <= 1.0);
            CHECK(theta < prev);
            prev = theta;
        }
    }
    SUBCASE("exp(-potential) by construction") {
        const std::vector<double> y_probe{-0.1, 0.4};
        const SampleValue v = context.eval(y_probe);
        CHECK(v.likelihood == doctest::Approx(std::exp(-v.potential)).epsilon(1e-15));
        CHECK(std::abs(v.weighted_qoi) <= std::abs(v.qoi));
    }
    SUBCASE("zero functional variant vanishes") {
        ForwardContext zero_qoi(prob.mesh, prob.dofs, prob.field, fem::default_body_force(),
                                setup, [](const fem::Displacement&) { return 0.0; });
        const std::vector<double> probe_y{0.1, 0.1};
        CHECK(zero_qoi.weighted_qoi(probe_y) == 0.0);
    }
}

TEST_CASE("combine samples and ratio invariance") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> thetas(257), weighted(257);
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        thetas[i] = std::exp(-3.0 * unit(rng));
        weighted[i] = thetas[i] * (0.2 + unit(rng));
    }
    const PosteriorEstimate base = combine_samples(thetas, weighted);
    CHECK(base.z > 0.0);
    CHECK(base.z <= 1.0);
    CHECK(base.ratio == base.z_prime / base.z);

    SUBCASE("constant-one functional gives ratio exactly one") {
        const PosteriorEstimate unitratio = combine_samples(thetas, thetas);
        CHECK(unitratio.ratio == 1.0);
    }
    SUBCASE("positive scaling of the likelihood cancels") {
        for (double scale : {3.7, 1e-8, 42.0}) {
            std::vector<double> st(thetas), sw(weighted);
            for (auto& v : st) v *= scale;
            for (auto& v : sw) v *= scale;
            const PosteriorEstimate scaled = combine_samples(st, sw);
            CHECK(scaled.ratio == doctest::Approx(base.ratio).epsilon(1e-13));
        }
    }
    SUBCASE("degenerate normalization") {
        std::vector<double> dead(4, 0.0);
        CHECK_THROWS_AS((void)combine_samples(dead, dead), eb::DegeneratePosteriorError);
    }
    SUBCASE("empty input") {
        const std::vector<double> none;
        CHECK_THROWS_AS((void)combine_samples(none, none), eb::InputError);
    }
}

TEST_CASE("estimator against a dense tensor quadrature oracle") {
    // One-dimensional parameter, small mesh: the ratio from an interlaced
    // rule must match 64-node Gauss-Legendre on the prior interval.
    SmallProblem prob(8, 1);
    const std::vector<double> truth{0.31};
    const auto synthesis = synthesize_observations(prob.field, fem::default_body_force(), truth,
                                                   default_sensors(), 0.1, 424242, 16);
    ForwardContext context(prob.mesh, prob.dofs, prob.field, fem::default_body_force(),
                           synthesis.setup);

    const auto rule = qmc::cbc_construct(2, 10, 2, 1, qmc::CalibrationBank::standard(1));
    const qmc::PointSet points = qmc::shift_to_prior(qmc::generate_points(rule));
    const PosteriorEstimate est = estimate(points, context);
    CHECK(est.z > 0.0);
    CHECK(est.z <= 1.0);
    CHECK(est.point_count == 1024);

    const oracle::GaussRule gl = oracle::gauss_legendre(64);
    eb::KahanSum z_sum, zp_sum;
    for (int i = 0; i < 64; ++i) {
        const double y = 0.5 * gl.nodes[i];     // map [-1,1] to [-1/2,1/2]
        const double w = 0.5 * gl.weights[i];
        const SampleValue v = context.eval(std::vector<double>{y});
        z_sum.add(w * v.likelihood);
        zp_sum.add(w * v.weighted_qoi);
    }
    const double oracle_ratio = zp_sum.value() / z_sum.value();
    CHECK(est.ratio == doctest::Approx(oracle_ratio).epsilon(1e-6));
}

TEST_CASE("estimate validates its inputs") {
    SmallProblem prob(4, 2);
    ObservationSetup setup = zero_data_setup();
    ForwardContext context(prob.mesh, prob.dofs, prob.field, fem::default_body_force(), setup);
    const auto rule = qmc::cbc_construct(2, 4, 1, 2, qmc::CalibrationBank::standard(2));
    const qmc::PointSet unit_points = qmc::generate_points(rule);
    CHECK_THROWS_AS((void)estimate(unit_points, context), eb::InputError);
}

TEST_CASE("huge noise flattens the posterior toward the prior mean") {
    SmallProblem prob(6, 2);
    ObservationSetup setup = zero_data_setup(1e12);
    ForwardContext context(prob.mesh, prob.dofs, prob.field, fem::default_body_force(), setup);
    const auto rule = qmc::cbc_construct(2, 8, 2, 2, qmc::CalibrationBank::standard(2));
    const qmc::PointSet points = qmc::shift_to_prior(qmc::generate_points(rule));
    const PosteriorEstimate est = estimate(points, context);

    eb::KahanSum qoi_sum;
    ForwardContext prior_ctx = context.clone();
    for (std::size_t n = 0; n < points.count; ++n)
        qoi_sum.add(prior_ctx.eval(points.point(n)).qoi);
    const double prior_mean = qoi_sum.value() / static_cast<double>(points.count);
    CHECK(est.ratio == doctest::Approx(prior_mean).epsilon(1e-9));
}

TEST_CASE("degenerate data raises the dedicated error") {
    SmallProblem prob(4, 2);
    ObservationSetup setup = zero_data_setup(1e-8);
    setup.delta.assign(20, 1e6);  // absurdly far from any model output
    ForwardContext context(prob.mesh, prob.dofs, prob.field, fem::default_body_force(), setup);
    const auto rule = qmc::cbc_construct(2, 4, 1, 2, qmc::CalibrationBank::standard(2));
    const qmc::PointSet points = qmc::shift_to_prior(qmc::generate_points(rule));
    CHECK_THROWS_AS((void)estimate(points, context), eb::DegeneratePosteriorError);
}

TEST_CASE("worker-count independence") {
    SmallProblem prob(6, 2);
    const std::vector<double> truth{0.1, 0.2};
    const auto synthesis = synthesize_observations(prob.field, fem::default_body_force(), truth,
                                                   default_sensors(), 0.1, 7, 12);
    ForwardContext context(prob.mesh, prob.dofs, prob.field, fem::default_body_force(),
                           synthesis.setup);
    const auto rule = qmc::cbc_construct(2, 7, 2, 2, qmc::CalibrationBank::standard(2));
    const qmc::PointSet points = qmc::shift_to_prior(qmc::generate_points(rule));
    const PosteriorEstimate serial = estimate(points, context, 1);
    const PosteriorEstimate threaded = estimate(points, context, 3);
    CHECK(serial.z == threaded.z);
    CHECK(serial.z_prime == threaded.z_prime);
    CHECK(serial.ratio == threaded.ratio);
}

TEST_CASE("gaussian stream") {
    SUBCASE("frozen first draws") {
        GaussianSampler g(12345);
        // Fixture values pin the documented mt19937_64 + Box-Muller recipe.
        const double first = g.next();
        const double second = g.next();
        GaussianSampler g2(12345);
        CHECK(g2.next() == first);
        CHECK(g2.next() == second);
        CHECK(std::isfinite(first));
        CHECK(first != second);
    }
    SUBCASE("sample variance approaches sigma") {
        const double sigma = 0.1;
        const double stddev = std::sqrt(sigma);
        GaussianSampler g(2024);
        const int draws = 10000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < draws; ++i) {
            const double v = stddev * g.next();
            sum += v;
            sq += v * v;
        }
        const double mean = sum / draws;
        const double variance = sq / draws - mean * mean;
        CHECK(variance == doctest::Approx(sigma).epsilon(0.05));
    }
}

TEST_CASE("observation synthesis") {
    SmallProblem prob(6, 3);
    const std::vector<double> truth{0.25, -0.1, 0.4};

    SUBCASE("zero noise reproduces the forward predictions") {
        const auto r = synthesize_observations(prob.field, fem::default_body_force(), truth,
                                               default_sensors(), 0.0, 99, 12);
        REQUIRE(r.setup.delta.size() == r.noiseless.size());
        for (std::size_t i = 0; i < r.noiseless.size(); ++i)
            CHECK(r.setup.delta[i] == r.noiseless[i]);
    }
    SUBCASE("same seed, same data") {
        const auto a = synthesize_observations(prob.field, fem::default_body_force(), truth,
                                               default_sensors(), 0.1, 5150, 12);
        const auto b = synthesize_observations(prob.field, fem::default_body_force(), truth,
                                               default_sensors(), 0.1, 5150, 12);
        for (std::size_t i = 0; i < a.setup.delta.size(); ++i)
            CHECK(a.setup.delta[i] == b.setup.delta[i]);
    }
    SUBCASE("file round trip") {
        namespace fs = std::filesystem;
        fs::create_directories("tmp_bayes");
        const auto r = synthesize_observations(prob.field, fem::default_body_force(), truth,
                                               default_sensors(), 0.1, 31337, 12);
        save_observations(r, "tmp_bayes/obs.csv");
        const ObservationSetup back = load_observations("tmp_bayes/obs.csv");
        CHECK(back.sigma == r.setup.sigma);
        REQUIRE(back.sensors.size() == r.setup.sensors.size());
        for (std::size_t k = 0; k < back.sensors.size(); ++k) {
            CHECK(back.sensors[k].x == r.setup.sensors[k].x);
            CHECK(back.sensors[k].y == r.setup.sensors[k].y);
        }
        for (std::size_t i = 0; i < back.delta.size(); ++i)
            CHECK(back.delta[i] == r.setup.delta[i]);
    }
    SUBCASE("setup invariants") {
        ObservationSetup bad = zero_data_setup();
        bad.sensors[0] = {1.5, 0.5};
        CHECK_THROWS_AS(bad.validate(), eb::ConfigError);
        bad = zero_data_setup();
        bad.delta.pop_back();
        CHECK_THROWS_AS(bad.validate(), eb::ConfigError);
        bad = zero_data_setup();
        bad.sigma = -1.0;
        CHECK_THROWS_AS(bad.validate(), eb::ConfigError);
    }
}
