#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "flowcast/binary_io.hpp"
#include "flowcast/training.hpp"
#include "oracles.hpp"

using namespace flowcast;

namespace {

const fixture::Bench& tiny_bench() {
    static const fixture::Bench b = fixture::make_bench(fixture::small_config(300), 3, 6, 4);
    return b;
}

std::unique_ptr<Forecaster> tiny_model(std::uint64_t seed = 11) {
    const auto& b = tiny_bench();
    return create_model(ModelKind::StreamGConvGru, {{"hidden", 4}}, b.data.graph, 6, 4, seed);
}

std::vector<Snapshot> head(const std::vector<Snapshot>& v, std::size_t n) {
    return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
             [](TrainConfig& x) { x.learning_rate = 0; }, [](TrainConfig& x) { x.alpha = 1; },
             [](TrainConfig& x) { x.alpha = 0; }, [](TrainConfig& x) { x.epsilon = 0; },
             [](TrainConfig& x) { x.batch_size = 0; }, [](TrainConfig& x) { x.clip_norm = -1.0; }}) {
        TrainConfig bad;
        mutate(bad);
        CHECK_THROWS(bad.validate());
    }
}

TEST_CASE("rmsprop hand example") {
    std::vector<NamedParameter> params{{"p", Tensor({1}, {0.0}, true)}};
    auto state = OptimizerState::for_parameters(params);
    TrainConfig c;
    c.learning_rate = 0.1;
    rmsprop_step(params, std::vector<std::vector<double>>{{2.0}}, state, c);
    CHECK(state.mean_square[0][0] == doctest::Approx(0.04).epsilon(1e-15));
    const double expect = -0.1 * 2.0 / (std::sqrt(0.04) + 1e-8);
    CHECK(params[0].tensor.values()[0] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(std::abs(params[0].tensor.values()[0] + 0.99999995) < 1e-9);
    CHECK(state.step == 1);

    const double before = params[0].tensor.values()[0];
    rmsprop_step(params, std::vector<std::vector<double>>{{0.0}}, state, c);
    CHECK(params[0].tensor.values()[0] == before);
    CHECK(state.mean_square[0][0] == doctest::Approx(0.04 * 0.99).epsilon(1e-15));

    CHECK_THROWS(rmsprop_step(params, std::vector<std::vector<double>>{{1.0, 2.0}}, state, c));
    CHECK_THROWS(rmsprop_step(params, std::vector<std::vector<double>>{}, state, c));
}

TEST_CASE("masked outlet loss") {
    Tensor pred({3, 2}, {5, 5, 1, 3, -7, 2}, true);
    const Tensor target({3, 2}, {0, 0, 0, 0, 0, 0});
    Tape tape;
    {
        Tape::Scope scope(tape);
        const Tensor loss = masked_outlet_loss(pred, target, 1);
        CHECK(loss.item() == 2.0);
        tape.backward(loss);
    }
    const auto g = pred.grad_span();
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.5);
    CHECK(g[3] == 0.5);
    CHECK(g[4] == 0.0);
    CHECK(g[5] == 0.0);

    Tensor moved({3, 2}, {99, -4, 1, 3, 0, 0});
    CHECK(masked_outlet_loss(moved, target, 1).item() == 2.0);
    CHECK_THROWS(masked_outlet_loss(pred, target, 3));
    CHECK_THROWS(masked_outlet_loss(pred, Tensor::zeros({2, 2}), 0));

    Rng rng(4);
    const double err = oracle::gradient_check(
        [target = oracle::random_tensor({4, 3}, rng, -1.0, 1.0, false)](const std::vector<Tensor>& in) {
            return masked_outlet_loss(in[0], target, 2);
        },
        {oracle::random_tensor({4, 3}, rng)});
    CHECK(err < 1e-4);
}

TEST_CASE("batch gradient equals the mean of single-snapshot gradients") {
    const auto& b = tiny_bench();
    const auto model = tiny_model();
    const auto snaps = head(b.splits.train.snapshots, 5);
    std::vector<const Snapshot*> ptrs;
    for (const auto& s : snaps) ptrs.push_back(&s);
    const auto batch = batch_gradient(*model, ptrs, b.laplacian, b.outlet);

    std::vector<std::vector<double>> acc;
    double loss = 0.0;
    for (const auto* s : ptrs) {
        const auto single = batch_gradient(*model, std::span<const Snapshot* const>(&s, 1), b.laplacian, b.outlet);
        loss += single.loss;
        if (acc.empty()) acc.assign(single.grads.size(), {});
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i].resize(single.grads[i].size());
            for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += single.grads[i][j];
        }
    }
    CHECK(std::abs(batch.loss - loss / 5) < 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i)
        for (std::size_t j = 0; j < acc[i].size(); ++j) worst = std::max(worst, std::abs(batch.grads[i][j] - acc[i][j] / 5));
    CHECK(worst < 1e-10);
}

TEST_CASE("validation does not touch parameters") {
    const auto& b = tiny_bench();
    const auto model = tiny_model();
    std::vector<std::vector<double>> before;
    for (const auto& p : model->parameters()) before.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    const double l1 = evaluate_loss(*model, b.splits.validation.snapshots, b.laplacian, b.outlet);
    const double l2 = evaluate_loss(*model, b.splits.validation.snapshots, b.laplacian, b.outlet);
    CHECK(l1 == l2);
    const auto params = model->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(std::equal(before[i].begin(), before[i].end(), params[i].tensor.values().begin()));
    }
}

TEST_CASE("epoch permutation is a pure function of seed and epoch") {
    const auto a = epoch_permutation(50, 9, 3);
    CHECK(a == epoch_permutation(50, 9, 3));
    CHECK(a != epoch_permutation(50, 9, 4));
    CHECK(a != epoch_permutation(50, 10, 3));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("train: logging, best checkpoint and determinism") {
    const auto& b = tiny_bench();
    fixture::TempDir dir("train");
    const auto train_set = head(b.splits.train.snapshots, 24);
    const auto val_set = head(b.splits.validation.snapshots, 8);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 4;
    cfg.seed = 5;
    cfg.learning_rate = 1e-2;

    auto run = [&](const std::string& name, std::string& log_text) {
        auto model = tiny_model();
        cfg.checkpoint_path = dir / name;
        std::ostringstream log;
        auto r = train(*model, train_set, val_set, b.laplacian, b.outlet, b.normalization, cfg, &log);
        log_text = log.str();
        return r;
    };
    std::string log_a, log_b;
    const auto a = run("a.ckpt", log_a);
    const auto r2 = run("b.ckpt", log_b);
    CHECK(log_a == log_b);
    CHECK(a.best_epoch == r2.best_epoch);
    CHECK(read_file_bytes(dir / "a.ckpt") == read_file_bytes(dir / "b.ckpt"));
    CHECK(encode_checkpoint(a.best) == encode_checkpoint(r2.best));

    REQUIRE(a.history.size() == 4);
    std::istringstream lines(log_a);
    std::string line;
    std::size_t n = 0;
    std::optional<double> best;
    while (std::getline(lines, line)) {
        ++n;
        CHECK(line.rfind("epoch," + std::to_string(n) + ",train_loss,", 0) == 0);
        CHECK(line.find(",val_loss,") != std::string::npos);
        const auto& rec = a.history[n - 1];
        CHECK(rec.saved == (!best || rec.validation_loss < *best));
        CHECK(line.ends_with(rec.saved ? "saved,true" : "saved,false"));
        if (rec.saved) best = rec.validation_loss;
    }
    CHECK(n == 4);
    CHECK(a.best.training.validation_loss == *best);
    CHECK(a.best.training.epoch == a.best_epoch);
    CHECK(a.history[0].saved);

    // The stored checkpoint reproduces its validation loss.
    const auto restored = restore_model(load_checkpoint(dir / "a.ckpt"));
    CHECK(std::abs(evaluate_loss(*restored, val_set, b.laplacian, b.outlet) - *best) < 1e-12);
}

TEST_CASE("train: loss decreases on a few snapshots") {
    const auto& b = tiny_bench();
    const auto snaps = head(b.splits.train.snapshots, 4);
    auto model = tiny_model(2);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 60;
    cfg.learning_rate = 1e-2;
    const auto r = train(*model, snaps, snaps, b.laplacian, b.outlet, b.normalization, cfg);
    CHECK(r.history.back().train_loss < 0.5 * r.history.front().train_loss);
}

TEST_CASE("train: errors") {
    const auto& b = tiny_bench();
    const auto snaps = head(b.splits.train.snapshots, 3);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    auto model = tiny_model();
    CHECK_THROWS_AS(train(*model, {}, snaps, b.laplacian, b.outlet, b.normalization, cfg), TrainingError);
    CHECK_THROWS_AS(train(*model, snaps, {}, b.laplacian, b.outlet, b.normalization, cfg), TrainingError);
    PersistenceModel persistence(b.outlet, 4, b.data.graph.fingerprint());
    CHECK_THROWS_AS(train(persistence, snaps, snaps, b.laplacian, b.outlet, b.normalization, cfg), TrainingError);

    auto poisoned = snaps;
    poisoned[1].target[b.outlet * 4] = std::nan("");
    try {
        train(*model, poisoned, snaps, b.laplacian, b.outlet, b.normalization, cfg);
        FAIL("expected a TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
    }
}

TEST_CASE("clip norm bounds the update") {
    const auto& b = tiny_bench();
    const auto snaps = head(b.splits.train.snapshots, 2);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.clip_norm = 1e-12;  // far below epsilon, so each step is about lr * g / eps
    auto model = tiny_model();
    std::vector<std::vector<double>> before;
    for (const auto& p : model->parameters()) before.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    train(*model, snaps, snaps, b.laplacian, b.outlet, b.normalization, cfg);
    double moved = 0.0;
    const auto params = model->parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < before[i].size(); ++j) moved += std::abs(params[i].tensor.values()[j] - before[i][j]);
    CHECK(moved < 1e-6);
}

TEST_CASE("create_model honours hyperparameters") {
    const auto& b = tiny_bench();
    const auto m = create_model(ModelKind::StreamGConvGru, {{"hidden", 3}, {"cheb_order", 3}}, b.data.graph, 6, 4, 1);
    CHECK(m->hyperparameters()["hidden"] == 3);
    CHECK(m->hyperparameters()["cheb_order"] == 3);
    const auto c = create_model(ModelKind::ConvBiGru, {{"hidden", 5}}, b.data.graph, 6, 4, 1);
    CHECK(c->hyperparameters()["channels_in"] == 24);
    CHECK(c->horizon() == 4);
    CHECK(create_model(ModelKind::Persistence, {}, b.data.graph, 6, 4, 1)->parameters().empty());
}

}  // TEST_SUITE
