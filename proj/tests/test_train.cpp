#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "ugmm/data.hpp"
#include "ugmm/gradcheck.hpp"
#include "ugmm/train.hpp"

using namespace ugmm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

NetworkSpec spec_of(ModelKind kind, TrainMode mode, std::vector<std::size_t> widths,
                    std::uint64_t seed) {
    NetworkSpec spec;
    spec.kind = kind;
    spec.mode = mode;
    spec.layer_widths = std::move(widths);
    spec.seed = seed;
    return spec;
}

/// Deterministic 20-sample class-stratified Iris subset (7/7/6), z-scored.
Dataset iris_subset_20() {
    const Dataset full = load_iris(testutil::data_dir() + "/iris.csv");
    Dataset sub;
    sub.class_count = full.class_count;
    std::vector<std::size_t> take;
    std::vector<std::size_t> want{7, 7, 6};
    std::vector<std::size_t> got(3, 0);
    for (std::size_t i = 0; i < full.size(); ++i) {
        const auto c = static_cast<std::size_t>(full.y[i]);
        if (got[c] < want[c]) {
            take.push_back(i);
            ++got[c];
        }
    }
    sub.x = Matrix(take.size(), full.x.cols);
    sub.y.resize(take.size());
    for (std::size_t i = 0; i < take.size(); ++i) {
        std::copy(full.x.row(take[i]).begin(), full.x.row(take[i]).end(), sub.x.row(i).begin());
        sub.y[i] = full.y[take[i]];
    }
    const FeatureStats stats = compute_stats(sub.x);
    apply_stats(sub.x, stats);
    sub.stats = stats;
    return sub;
}

}  // namespace

TEST_CASE("cross_entropy: uniform outputs give ln C") {
    Matrix out(4, 10);  // all zeros
    const std::vector<int> labels{0, 3, 7, 9};
    const LossResult res = cross_entropy(out, labels);
    REQUIRE_THAT(res.loss, WithinAbs(2.302585092994046, 1e-12));
}

TEST_CASE("cross_entropy: confident correct prediction drives loss to zero") {
    Matrix out(1, 3);
    out(0, 0) = 50.0;
    const std::vector<int> labels{0};
    const LossResult res = cross_entropy(out, labels);
    REQUIRE(res.loss >= 0.0);
    REQUIRE(res.loss < 1e-15);
}

TEST_CASE("cross_entropy: oracle agreement, gradient rows sum to zero, FD check") {
    Rng rng(61);
    Matrix out(4, 3);
    for (auto& v : out.data) v = 4.0 * rng.uniform() - 2.0;
    std::vector<int> labels{2, 0, 1, 1};
    LossResult res = cross_entropy(out, labels);

    // Extended-precision direct computation.
    long double total = 0.0L;
    for (std::size_t b = 0; b < 4; ++b) {
        long double z = 0.0L;
        for (std::size_t c = 0; c < 3; ++c) z += expl(static_cast<long double>(out(b, c)));
        total += logl(z) - static_cast<long double>(out(b, std::size_t(labels[b])));
    }
    REQUIRE_THAT(res.loss, WithinRel(static_cast<double>(total / 4.0L), 1e-12));

    for (std::size_t b = 0; b < 4; ++b) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += res.d_out(b, c);
        REQUIRE_THAT(s, WithinAbs(0.0, 1e-12));
    }

    const auto objective = [&]() { return cross_entropy(out, labels).loss; };
    const Matrix fd = gradcheck::central_diff(out, objective);
    REQUIRE(gradcheck::max_grad_err(res.d_out, fd) <= gradcheck::kTolerance);

    labels[0] = 5;
    REQUIRE_THROWS_AS(cross_entropy(out, labels), std::invalid_argument);
}

TEST_CASE("generative_nll") {
    Matrix out(1, 2);
    out(0, 0) = -1.0;
    out(0, 1) = -2.0;
    const std::vector<int> label0{0};
    const LossResult res = generative_nll(out, label0);
    REQUIRE(res.loss == 1.0);
    REQUIRE(res.d_out(0, 0) == -1.0);
    REQUIRE(res.d_out(0, 1) == 0.0);  // non-label roots get no gradient

    Rng rng(62);
    Matrix batch(3, 4);
    for (auto& v : batch.data) v = rng.normal();
    const std::vector<int> labels{1, 3, 0};
    const LossResult r2 = generative_nll(batch, labels);
    const double direct =
        -(batch(0, 1) + batch(1, 3) + batch(2, 0)) / 3.0;
    REQUIRE_THAT(r2.loss, WithinRel(direct, 1e-14));
}

TEST_CASE("lr_at_epoch follows the step-decay schedule bit-exactly") {
    ScheduleConfig sched;
    sched.milestones = {20, 45, 60};
    sched.gamma = 0.1;
    REQUIRE(lr_at_epoch(sched, 1e-2, 0) == 1e-2);
    REQUIRE(lr_at_epoch(sched, 1e-2, 19) == 1e-2);
    REQUIRE(lr_at_epoch(sched, 1e-2, 20) == 1e-3);
    REQUIRE(lr_at_epoch(sched, 1e-2, 44) == 1e-3);
    REQUIRE(lr_at_epoch(sched, 1e-2, 45) == 1e-4);
    REQUIRE(lr_at_epoch(sched, 1e-2, 60) == 1e-5);
    REQUIRE(lr_at_epoch(sched, 1e-2, 99) == 1e-5);

    ScheduleConfig empty;
    REQUIRE(lr_at_epoch(empty, 0.5, 0) == 0.5);
    REQUIRE(lr_at_epoch(empty, 0.5, 1000) == 0.5);

    double prev = lr_at_epoch(sched, 1e-2, 0);
    for (std::size_t e = 1; e < 100; ++e) {
        const double cur = lr_at_epoch(sched, 1e-2, e);
        REQUIRE(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("adam_step") {
    SECTION("first step moves by about lr in the gradient direction") {
        Rng rng(1);
        NetworkParams p = net_init(spec_of(ModelKind::ffnn, TrainMode::discriminative, {1, 1}, 0),
                                   rng);
        const double before = p.dense_layers[0].w(0, 0);
        NetworkGrads g = NetworkGrads::zeros_like(p);
        g.tensors[0](0, 0) = 0.3;
        AdamState state = AdamState::init(p);
        OptimConfig cfg;
        adam_step(p, g, state, cfg, 0.01);
        REQUIRE(state.t == 1);
        REQUIRE_THAT(p.dense_layers[0].w(0, 0) - before, WithinAbs(-0.01, 1e-8));
    }
    SECTION("zero gradient is a parameter no-op") {
        Rng rng(2);
        NetworkParams p = net_init(spec_of(ModelKind::ugmm, TrainMode::discriminative, {2, 3}, 0),
                                   rng);
        const Matrix mu_before = p.ugmm_layers[0].mu;
        NetworkGrads g = NetworkGrads::zeros_like(p);
        AdamState state = AdamState::init(p);
        OptimConfig cfg;
        adam_step(p, g, state, cfg, 0.01);
        REQUIRE(state.t == 1);
        REQUIRE(p.ugmm_layers[0].mu.data == mu_before.data);
    }
    SECTION("three-step trace matches the scalar recurrence") {
        Rng rng(3);
        NetworkParams p = net_init(spec_of(ModelKind::ffnn, TrainMode::discriminative, {1, 1}, 0),
                                   rng);
        AdamState state = AdamState::init(p);
        OptimConfig cfg;
        const double lr = 0.05;
        const std::vector<double> grads{0.3, -0.2, 0.05};

        double ref = p.dense_layers[0].w(0, 0);
        double m = 0.0, v = 0.0;
        for (std::size_t t = 1; t <= grads.size(); ++t) {
            const double gt = grads[t - 1];
            NetworkGrads g = NetworkGrads::zeros_like(p);
            g.tensors[0](0, 0) = gt;
            adam_step(p, g, state, cfg, lr);

            m = cfg.beta1 * m + (1.0 - cfg.beta1) * gt;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * gt * gt;
            const double m_hat = m / (1.0 - std::pow(cfg.beta1, double(t)));
            const double v_hat = v / (1.0 - std::pow(cfg.beta2, double(t)));
            ref -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
            REQUIRE_THAT(p.dense_layers[0].w(0, 0), WithinAbs(ref, 1e-12));
        }
    }
    SECTION("uGMM log_sigma is clamped to [-10, 10]") {
        Rng rng(4);
        NetworkParams p = net_init(spec_of(ModelKind::ugmm, TrainMode::discriminative, {1, 1}, 0),
                                   rng);
        NetworkGrads g = NetworkGrads::zeros_like(p);
        g.tensors[1](0, 0) = -1.0;  // push log_sigma up
        AdamState state = AdamState::init(p);
        OptimConfig cfg;
        adam_step(p, g, state, cfg, 1000.0);
        REQUIRE(p.ugmm_layers[0].log_sigma(0, 0) == 10.0);
    }
}

TEST_CASE("clip_gradients caps the global norm") {
    Rng rng(5);
    NetworkParams p = net_init(spec_of(ModelKind::ffnn, TrainMode::discriminative, {2, 2}, 0),
                               rng);
    NetworkGrads g = NetworkGrads::zeros_like(p);
    for (Matrix& t : g.tensors) {
        for (double& v : t.data) v = 5.0;
    }
    const double before = global_grad_norm(g);
    REQUIRE(before > 10.0);
    clip_gradients(g, 10.0);
    REQUIRE_THAT(global_grad_norm(g), WithinRel(10.0, 1e-12));
    clip_gradients(g, 20.0);  // already below: no-op
    REQUIRE_THAT(global_grad_norm(g), WithinRel(10.0, 1e-12));
}

TEST_CASE("evaluate") {
    SECTION("perfect predictor scores 1") {
        NetworkParams p;
        p.spec = spec_of(ModelKind::ffnn, TrainMode::discriminative, {3, 3}, 0);
        DenseLayerParams layer;
        layer.n_in = 3;
        layer.n_out = 3;
        layer.w = Matrix(3, 3);
        for (std::size_t i = 0; i < 3; ++i) layer.w(i, i) = 1.0;
        layer.b = Matrix(1, 3);
        p.dense_layers.push_back(layer);
        Matrix x(6, 3);
        std::vector<int> y;
        for (std::size_t i = 0; i < 6; ++i) {
            x(i, i % 3) = 1.0;
            y.push_back(int(i % 3));
        }
        REQUIRE(evaluate(p, x, y) == 1.0);
    }
    SECTION("constant predictor on balanced 3-class data scores 1/3") {
        NetworkParams p;
        p.spec = spec_of(ModelKind::ffnn, TrainMode::discriminative, {3, 3}, 0);
        DenseLayerParams layer;
        layer.n_in = 3;
        layer.n_out = 3;
        layer.w = Matrix(3, 3);
        layer.b = Matrix(1, 3);
        p.dense_layers.push_back(layer);
        Matrix x(9, 3);
        std::vector<int> y;
        Rng rng(6);
        for (auto& v : x.data) v = rng.normal();
        for (std::size_t i = 0; i < 9; ++i) y.push_back(int(i % 3));
        REQUIRE_THAT(evaluate(p, x, y), WithinAbs(1.0 / 3.0, 1e-12));
    }
    SECTION("untrained uGMM on iris sits near chance") {
        const Dataset full = load_iris(testutil::data_dir() + "/iris.csv");
        auto [train, test] = stratified_split(full, 0.2, 5);
        Rng rng(3);
        const NetworkParams p =
            net_init(spec_of(ModelKind::ugmm, TrainMode::generative, {4, 16, 8, 3}, 3), rng);
        const double acc = evaluate(p, test.x, test.y);
        REQUIRE(acc >= 0.1);
        REQUIRE(acc <= 0.6);
    }
}

TEST_CASE("train_run: zero epochs returns the initial parameters and an empty report") {
    const Dataset sub = iris_subset_20();
    const NetworkSpec spec = spec_of(ModelKind::ugmm, TrainMode::generative, {4, 8, 3}, 7);
    Rng rng(7);
    const TrainResult res = train_run(spec, sub, sub, OptimConfig{}, ScheduleConfig{}, 0, 20, rng);
    REQUIRE(res.report.empty());
    Rng rng2(7);
    const NetworkParams fresh = net_init(spec, rng2);
    REQUIRE(res.params.ugmm_layers[0].mu.data == fresh.ugmm_layers[0].mu.data);
    REQUIRE(res.adam.t == 0);
}

TEST_CASE("train_run: loss decreases on a small iris subset (frozen regression trace)") {
    const Dataset sub = iris_subset_20();
    const NetworkSpec spec = spec_of(ModelKind::ugmm, TrainMode::generative, {4, 16, 8, 3}, 7);
    OptimConfig optim;
    optim.lr0 = 1e-2;
    optim.grad_clip = 10.0;
    Rng rng(7);
    const TrainResult res = train_run(spec, sub, sub, optim, ScheduleConfig{}, 5, 20, rng);
    REQUIRE(res.report.size() == 5);
    for (std::size_t e = 1; e < 5; ++e) {
        REQUIRE(res.report[e].train_loss < res.report[e - 1].train_loss);
    }
    // Trace recorded from the run itself and frozen as a regression oracle.
    const std::vector<double> frozen{};  // to be frozen
    for (std::size_t e = 0; e < frozen.size(); ++e) {
        REQUIRE_THAT(res.report[e].train_loss, WithinRel(frozen[e], 1e-9));
    }
}

TEST_CASE("train_run is bit-deterministic given seed and config") {
    const Dataset sub = iris_subset_20();
    const NetworkSpec spec = spec_of(ModelKind::ugmm, TrainMode::generative, {4, 8, 3}, 11);
    OptimConfig optim;
    optim.lr0 = 1e-2;
    optim.grad_clip = 10.0;
    Rng r1(11), r2(11);
    const TrainResult a = train_run(spec, sub, sub, optim, ScheduleConfig{}, 6, 5, r1);
    const TrainResult b = train_run(spec, sub, sub, optim, ScheduleConfig{}, 6, 5, r2);
    REQUIRE(a.report.size() == b.report.size());
    for (std::size_t e = 0; e < a.report.size(); ++e) {
        REQUIRE(a.report[e].train_loss == b.report[e].train_loss);
        REQUIRE(a.report[e].test_accuracy == b.report[e].test_accuracy);
        REQUIRE(a.report[e].lr == b.report[e].lr);
    }
    REQUIRE(a.params.ugmm_layers[0].mu.data == b.params.ugmm_layers[0].mu.data);
    REQUIRE(a.params.ugmm_layers[1].pi_logit.data == b.params.ugmm_layers[1].pi_logit.data);
}
