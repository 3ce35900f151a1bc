#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "minusformer/data.hpp"
#include "minusformer/errors.hpp"
#include "minusformer/train.hpp"

using namespace minusformer;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

MinusformerConfig tiny_model(std::uint64_t seed) {
    MinusformerConfig c;
    c.input_len = 24;
    c.pred_len = 6;
    c.n_variates = 2;
    c.embed_dim = 16;
    c.n_blocks = 2;
    c.heads = 2;
    c.dropout_rate = 0.1;
    c.seed = seed;
    return c;
}

DataSplits tiny_data(std::uint64_t seed) {
    const auto table = synth_series(SynthKind::sine_mix, 600, 2, 0.1, seed);
    return prepare_splits(table, {24, 6, 1}, {});
}

TrainConfig tiny_train(std::uint64_t seed) {
    TrainConfig t;
    t.learning_rate = 1e-3;
    t.batch_size = 16;
    t.max_epochs = 3;
    t.patience = 2;
    t.seed = seed;
    return t;
}

}  // namespace

TEST(MseLoss, Examples) {
    const Tensor a({3}, {1, 2, 3});
    EXPECT_EQ(mse_loss(a, a).item(), 0.0);
    EXPECT_NEAR(mse_loss(a, Tensor({3}, {1, 2, 4})).item(), 1.0 / 3.0, 1e-15);
    EXPECT_THROW(mse_loss(a, Tensor::zeros({2})), ShapeMismatch);
}

TEST(MseLoss, GradientIsScaledError) {
    SeededRng rng(4);
    Tensor pred = Tensor::uniform({4, 5}, -1, 1, rng, true);
    const Tensor target = Tensor::uniform({4, 5}, -1, 1, rng);
    backward(mse_loss(pred, target));
    for (std::size_t i = 0; i < 20; ++i)
        EXPECT_NEAR(pred.grad()[i], 2.0 * (pred.values()[i] - target.values()[i]) / 20.0, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Tensor p({3}, {1, -2, 3}, true);
    const NamedParameters params{{"p", p}};
    AdamState s;
    adam_step(s, params, 1e-3);
    EXPECT_EQ(vals(p), (std::vector<double>{1, -2, 3}));
    EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepClosedForm) {
    Tensor p({2}, {0.5, -0.5}, true);
    for (auto& g : p.mutable_grad()) g = 1.0;
    AdamState s;
    adam_step(s, {{"p", p}}, 1e-3);
    const double delta = -1e-3 * (1.0 / (1.0 + 1e-8));
    EXPECT_NEAR(p.values()[0] - 0.5, delta, 1e-15);
    EXPECT_NEAR(p.values()[1] + 0.5, delta, 1e-15);
}

TEST(Adam, ConstantGradientStepsDoNotGrow) {
    Tensor p({1}, {0.0}, true);
    AdamState s;
    double prev = 0.0, prev_step = 0.0;
    for (int k = 0; k < 20; ++k) {
        p.mutable_grad()[0] = 0.3;
        adam_step(s, {{"p", p}}, 1e-2);
        const double step = std::abs(p.values()[0] - prev);
        if (k > 0) EXPECT_LE(step, prev_step * (1.0 + 1e-6));
        prev_step = step;
        prev = p.values()[0];
    }
}

TEST(Adam, MatchesPlainLoopOracle) {
    SeededRng rng(10);
    Tensor p = Tensor::uniform({6}, -1, 1, rng, true);
    std::vector<double> ref = vals(p), m(6, 0.0), v(6, 0.0);
    AdamState s;
    for (int t = 1; t <= 10; ++t) {
        for (std::size_t i = 0; i < 6; ++i) p.mutable_grad()[i] = rng.uniform(-2, 2);
        for (std::size_t i = 0; i < 6; ++i) {
            const double g = p.grad()[i];
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            const double mh = m[i] / (1.0 - std::pow(0.9, t));
            const double vh = v[i] / (1.0 - std::pow(0.999, t));
            ref[i] -= 5e-3 * mh / (std::sqrt(vh) + 1e-8);
        }
        adam_step(s, {{"p", p}}, 5e-3);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(p.values()[i], ref[i], 1e-14);
    }
}

TEST(Adam, ZeroLearningRateIsBitIdentical) {
    Minusformer m(tiny_model(1));
    const auto params = m.parameters();
    const auto before = snapshot(params);
    for (const auto& [name, t] : params)
        for (auto& g : Tensor(t).mutable_grad()) g = 0.7;
    AdamState s;
    adam_step(s, params, 0.0);
    EXPECT_EQ(snapshot(params), before);
}

TEST(EarlyStopping, IncreasingLossStopsAfterPatience) {
    for (std::size_t patience : {1, 2, 3, 5}) {
        EarlyStopping es(patience);
        std::size_t epochs = 0;
        for (double loss = 1.0; !es.should_stop(); loss += 0.5) {
            es.update(loss);
            ++epochs;
        }
        EXPECT_EQ(epochs, 1 + patience);
        EXPECT_EQ(es.best_epoch(), 1u);
        EXPECT_EQ(es.best(), 1.0);
    }
}

TEST(EarlyStopping, ImprovementResetsCounter) {
    EarlyStopping es(2);
    const std::vector<double> losses{1.0, 1.1, 0.9, 1.0, 0.95, 0.95};
    std::size_t stopped_at = 0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        es.update(losses[i]);
        if (es.should_stop()) {
            stopped_at = i + 1;
            break;
        }
    }
    EXPECT_EQ(stopped_at, 5u);
    EXPECT_EQ(es.best_epoch(), 3u);
}

TEST(Splits, ScalerFittedOnTrainOnly) {
    const auto table = synth_series(SynthKind::trend_sine, 500, 2, 0.1, 3);
    const auto d = prepare_splits(table, {24, 6, 1}, {});
    EXPECT_EQ(d.scaler.fitted_on, d.ranges.train);
    const auto direct = fit_scaler(table, d.ranges.train);
    EXPECT_EQ(d.scaler.mean, direct.mean);
    // targets of the first test window start at the split boundary
    EXPECT_EQ(d.test.start_row(0) + 24, d.ranges.test.begin);
    EXPECT_EQ(d.val.start_row(0) + 24, d.ranges.val.begin);
}

TEST(Evaluate, BatchingInvariance) {
    const auto data = tiny_data(2);
    Minusformer m(tiny_model(2));
    const auto a = evaluate_split(m, data.val, 1);
    const auto b = evaluate_split(m, data.val, 64);
    EXPECT_NEAR(a.mse, b.mse, 1e-10);
    EXPECT_NEAR(a.mae, b.mae, 1e-10);
    EXPECT_NEAR(*a.smape, *b.smape, 1e-10);
    EXPECT_NEAR(*a.mase, *b.mase, 1e-10);
}

TEST(Evaluate, PerfectModelScoresZero) {
    auto cfg = tiny_model(3);
    Minusformer m(cfg);
    for (auto& [name, t] : m.parameters())
        for (auto& v : Tensor(t).mutable_values()) v = 0.0;
    // zero network predicts zeros; an all-zero series is forecast perfectly
    WindowSet w(std::vector<double>(40 * 2, 0.0), 2, {24, 6, 1}, 0);
    const auto r = evaluate_split(m, w, 8);
    EXPECT_EQ(r.mse, 0.0);
    EXPECT_EQ(r.mae, 0.0);
    EXPECT_FALSE(r.mape.has_value());
}

TEST(Evaluate, EmptySplitThrows) {
    Minusformer m(tiny_model(1));
    EXPECT_THROW(evaluate_split(m, WindowSet{}, 8), EmptySplit);
}

TEST(Evaluate, NaiveBaselineHandOracle) {
    // rows 0..5 of one variate; I = 2, O = 2 -> windows at 0, 1, 2
    const std::vector<double> rows{0, 1, 3, 6, 10, 15};
    WindowSet w(rows, 1, {2, 2, 1}, 0);
    // last input 1 vs (3, 6); 3 vs (6, 10); 6 vs (10, 15)
    const double expect = (4 + 25 + 9 + 49 + 16 + 81) / 6.0;
    EXPECT_NEAR(naive_last_value_mse(w), expect, 1e-12);
}

TEST(TrainLoop, ZeroEpochsEvaluatesInitialWeights) {
    const auto data = tiny_data(4);
    Minusformer m(tiny_model(4));
    const auto before = snapshot(m.parameters());
    auto tc = tiny_train(4);
    tc.max_epochs = 0;
    const auto r = train_loop(m, data, tc);
    EXPECT_TRUE(r.epochs.empty());
    EXPECT_EQ(r.best_epoch, 0u);
    EXPECT_EQ(snapshot(m.parameters()), before);
    EXPECT_NEAR(r.test.mse, evaluate_split(m, data.test, 16).mse, 1e-12);
}

TEST(TrainLoop, DeterministicAndRestoresBestEpoch) {
    const auto data = tiny_data(5);
    Minusformer a(tiny_model(5)), b(tiny_model(5));
    const auto ra = train_loop(a, data, tiny_train(5));
    const auto rb = train_loop(b, data, tiny_train(5));
    ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
        EXPECT_EQ(ra.epochs[i].train_loss, rb.epochs[i].train_loss);
        EXPECT_EQ(ra.epochs[i].val_loss, rb.epochs[i].val_loss);
    }
    EXPECT_EQ(ra.test.mse, rb.test.mse);
    EXPECT_EQ(snapshot(a.parameters()), snapshot(b.parameters()));

    double min_val = 1e300;
    for (const auto& e : ra.epochs) min_val = std::min(min_val, e.val_loss);
    EXPECT_EQ(ra.best_val_loss, min_val);
    EXPECT_EQ(ra.epochs[ra.best_epoch - 1].val_loss, min_val);
    // restored parameters reproduce the best validation loss
    EXPECT_NEAR(evaluate_split(a, data.val, 16).mse, min_val, 1e-12);
}

TEST(TrainLoop, LearningHappensOnSineMix) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto data = tiny_data(seed);
        Minusformer m(tiny_model(seed));
        const double initial = evaluate_split(m, data.train, 64).mse;
        auto tc = tiny_train(seed);
        tc.max_epochs = 2;
        train_loop(m, data, tc);
        EXPECT_LT(evaluate_split(m, data.train, 64).mse, initial) << "seed " << seed;
    }
}

TEST(TrainLoop, ReportSerializes) {
    const auto data = tiny_data(6);
    Minusformer m(tiny_model(6));
    auto tc = tiny_train(6);
    tc.max_epochs = 1;
    const auto r = train_loop(m, data, tc);
    std::ostringstream os;
    write_run_report(os, r);
    const std::string s = os.str();
    EXPECT_NE(s.find("best_epoch=1"), std::string::npos) << s;
    EXPECT_NE(s.find("learning_rate="), std::string::npos);
}

TEST(TrainConfig, KeysAndValidation) {
    TrainConfig t;
    EXPECT_TRUE(t.set("learning_rate", "5e-4"));
    EXPECT_EQ(t.learning_rate, 5e-4);
    EXPECT_FALSE(t.set("momentum", "0.9"));
    EXPECT_THROW(t.set("batch_size", "0"), InvalidConfig);
    t.split = {0.5, 0.5, 0.5};
    EXPECT_THROW(t.validate(), InvalidConfig);
}
