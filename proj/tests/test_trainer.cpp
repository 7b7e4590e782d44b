#include "abrforge/trainer.hpp"
#include "abrforge/util/error.hpp"
#include "abrforge/util/files.hpp"
#include "abrforge/util/hash.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace abrforge;

namespace {

TraceDataset constant_dataset(double mbps, std::size_t n_train = 2, std::size_t n_test = 2) {
    TraceDataset ds;
    ds.name = "const";
    for (std::size_t i = 0; i < n_train; ++i) {
        ds.train.emplace_back("train" + std::to_string(i),
                              std::vector<TraceSample>{{0.0, mbps}, {1.0, mbps}}, SourceTag::custom);
    }
    for (std::size_t i = 0; i < n_test; ++i) {
        ds.test.emplace_back("test" + std::to_string(i),
                             std::vector<TraceSample>{{0.0, mbps}, {1.0, mbps}}, SourceTag::custom);
    }
    return ds;
}

TrainConfig small_config(std::size_t epochs, std::size_t interval) {
    TrainConfig cfg;
    cfg.n_epochs = epochs;
    cfg.ckpt_interval = interval;
    cfg.n_seeds = 1;
    cfg.sim.n_chunks = 16;
    return cfg;
}

CandidateDesign small_network() {
    CandidateDesign c;
    c.id = "small_dense";
    c.kind = CandidateKind::network;
    c.source_text =
        "import nn;\nfn network(channels, width, n_actions) {\n"
        "  return nn.actor_critic(nn.flatten(), [32], \"relu\", n_actions);\n}\n";
    return c;
}

TrainingRun fake_run(std::uint64_t seed, std::vector<double> evals) {
    TrainingRun run;
    run.run_id = "r" + std::to_string(seed);
    run.seed = seed;
    for (std::size_t i = 0; i < evals.size(); ++i) run.test_evals.emplace_back((i + 1) * 100, evals[i]);
    return run;
}

}  // namespace

TEST(Trainer, CheckpointRoundTrip) {
    const std::vector<double> params = {1.5, -0.0, 1e-300, std::nan(""), -7.25};
    const std::string bytes = serialize_checkpoint(1234, params);
    EXPECT_EQ(bytes.size(), 8u + 4u + 8u + 8u + 5u * 8u);
    const auto [epoch, back] = deserialize_checkpoint(bytes);
    EXPECT_EQ(epoch, 1234u);
    ASSERT_EQ(back.size(), params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (std::isnan(params[i])) {
            EXPECT_TRUE(std::isnan(back[i]));
        } else {
            EXPECT_EQ(back[i], params[i]);
            EXPECT_EQ(std::signbit(back[i]), std::signbit(params[i]));
        }
    }
    EXPECT_THROW(deserialize_checkpoint("garbage"), Error);
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), Error);
}

TEST(Trainer, EntropyScheduleEndpoints) {
    TrainConfig cfg;
    cfg.n_epochs = 101;
    EXPECT_DOUBLE_EQ(cfg.entropy_weight(0), 1.0);
    EXPECT_DOUBLE_EQ(cfg.entropy_weight(50), 0.55);
    EXPECT_DOUBLE_EQ(cfg.entropy_weight(100), 0.1);
    EXPECT_DOUBLE_EQ(cfg.entropy_weight(500), 0.1);
    cfg.entropy_decay_epochs = 11;
    EXPECT_DOUBLE_EQ(cfg.entropy_weight(10), 0.1);
}

TEST(Trainer, ConfigValidation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.ckpt_interval = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.early_stop = EarlyStopHook{0, [](const std::vector<double>&) { return true; }};
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(Trainer, FixedPolicyClosedForm) {
    // Always the lowest level on a constant 5 Mbps link with exact chunk sizes:
    // every chunk downloads in 1.2 Mbit / 5 Mbps = 0.24 s. Only the first chunk
    // stalls (empty buffer) and switches down from the default 750 kbps level.
    const TraceDataset ds = constant_dataset(5.0, 1, 1);
    const BitrateLadder ladder = BitrateLadder::low();
    SimConfig sim;
    const VideoManifest manifest = synth_manifest(ladder, sim.n_chunks, 4.0, 0.0, 1);
    const double first = 0.3 - 0.45 - 4.3 * 0.24;
    const double expected = (first + 47 * 0.3) / 48.0;
    const double got = evaluate_fixed_policy([](const StreamObservation&) { return std::size_t{0}; }, ds.test,
                                             manifest, ladder, sim);
    EXPECT_NEAR(got, expected, 1e-12);
}

TEST(Trainer, LowerMedian) {
    EXPECT_EQ(lower_median({5.0}), 5.0);
    EXPECT_EQ(lower_median({3.0, 1.0, 2.0, 4.0}), 2.0);
    EXPECT_EQ(lower_median({9.0, 1.0, 5.0, 7.0, 3.0}), 5.0);
    EXPECT_THROW(lower_median({}), Error);
}

TEST(Trainer, FinalScoreUsesLastTenEvals) {
    std::vector<double> a(12, 0.0), b(10, 0.0), c(10, 0.0);
    a[0] = 100.0;  // outside the window
    a[1] = 100.0;
    for (std::size_t i = 2; i < 12; ++i) a[i] = 1.0;
    for (auto& v : b) v = 2.0;
    for (auto& v : c) v = 3.0;
    const ScoreReport r = final_score({fake_run(0, a), fake_run(1, b), fake_run(2, c)}, "x");
    EXPECT_DOUBLE_EQ(r.final_score, 2.0);
    EXPECT_DOUBLE_EQ(r.best_seed, 3.0);
    ASSERT_EQ(r.per_seed.size(), 3u);
    EXPECT_DOUBLE_EQ(r.per_seed[0].second, 1.0);
}

TEST(Trainer, FinalScoreRejectsPartialRuns) {
    TrainingRun stopped = fake_run(0, std::vector<double>(10, 1.0));
    stopped.stopped_early = true;
    try {
        final_score({stopped});
        FAIL() << "expected throw";
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "score requires full runs");
    }
    EXPECT_THROW(final_score({fake_run(0, std::vector<double>(9, 1.0))}), Error);
}

TEST(Trainer, DeterministicPerSeed) {
    const TraceDataset ds = constant_dataset(3.0);
    const TrainConfig cfg = small_config(30, 10);
    const auto& state = builtin(kOriginalStateId);
    const TrainingRun a = train(state, small_network(), ds, cfg, 7);
    const TrainingRun b = train(state, small_network(), ds, cfg, 7);
    const TrainingRun c = train(state, small_network(), ds, cfg, 8);
    ASSERT_FALSE(a.failure) << *a.failure;
    EXPECT_EQ(a.reward_curve, b.reward_curve);
    ASSERT_EQ(a.checkpoints.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.checkpoints[i].sha256, b.checkpoints[i].sha256);
    EXPECT_NE(a.checkpoints.back().sha256, c.checkpoints.back().sha256);
    EXPECT_EQ(a.test_evals.size(), 3u);
    EXPECT_EQ(a.test_evals.front().first, 10u);
}

TEST(Trainer, EarlyStopHookTruncatesCurve) {
    const TraceDataset ds = constant_dataset(3.0);
    TrainConfig cfg = small_config(40, 10);
    std::size_t seen = 0;
    cfg.early_stop = EarlyStopHook{20, [&](const std::vector<double>& curve) {
                                       seen = curve.size();
                                       return true;
                                   }};
    const TrainingRun run = train(builtin(kOriginalStateId), small_network(), ds, cfg, 1);
    EXPECT_EQ(seen, 20u);
    EXPECT_TRUE(run.stopped_early);
    EXPECT_EQ(run.stop_epoch, 20u);
    EXPECT_EQ(run.reward_curve.size(), 20u);
    EXPECT_FALSE(run.completed());

    cfg.early_stop->should_stop = [](const std::vector<double>&) { return false; };
    const TrainingRun full = train(builtin(kOriginalStateId), small_network(), ds, cfg, 1);
    EXPECT_TRUE(full.completed());
    EXPECT_EQ(full.reward_curve.size(), 40u);
}

TEST(Trainer, CandidateFaultIsReportedWithEpoch) {
    CandidateDesign bad;
    bad.id = "late_fault";
    bad.kind = CandidateKind::state;
    bad.source_text =
        "fn state(tput, dl, sizes, buffer, remaining, last, bhist) {\n"
        "  if remaining < 10 { return [[1, 2], [3]]; }\n"
        "  return [[buffer / 60, remaining / 48]];\n}\n";
    const TrainingRun run = train(bad, small_network(), constant_dataset(3.0), small_config(5, 5), 1);
    ASSERT_TRUE(run.failure.has_value());
    EXPECT_EQ(run.failure->rfind("epoch 0: ", 0), 0u) << *run.failure;
    EXPECT_TRUE(run.reward_curve.empty());
}

TEST(Trainer, CheckpointsWrittenToDisk) {
    const auto dir = std::filesystem::temp_directory_path() / "abrforge_ckpt_test";
    std::filesystem::remove_all(dir);
    TrainConfig cfg = small_config(10, 5);
    cfg.checkpoint_dir = dir;
    const TrainingRun run = train(builtin(kOriginalStateId), small_network(), constant_dataset(3.0), cfg, 3);
    ASSERT_EQ(run.checkpoints.size(), 2u);
    for (const auto& c : run.checkpoints) {
        ASSERT_TRUE(std::filesystem::exists(c.path));
        EXPECT_EQ(sha256_hex(read_file(c.path)), c.sha256);
    }
    std::filesystem::remove_all(dir);
}

TEST(Trainer, LearnsToBeatLowestLevel) {
    // On a steady 5 Mbps link the top level (4.3 Mbps) streams without stalls,
    // so a trained policy should clearly beat always picking 300 kbps.
    const TraceDataset ds = constant_dataset(5.0);
    TrainConfig cfg = small_config(400, 50);
    cfg.sim.n_chunks = 48;
    cfg.actor_lr = 1e-3;
    const TrainingRun run = train(builtin(kOriginalStateId), builtin(kOriginalNetworkId), ds, cfg, 0);
    ASSERT_FALSE(run.failure) << *run.failure;
    const BitrateLadder ladder = BitrateLadder::low();
    const double lowest = evaluate_fixed_policy([](const StreamObservation&) { return std::size_t{0}; }, ds.test,
                                                training_manifest(ladder, cfg), ladder, cfg.sim);
    EXPECT_GT(run.test_evals.back().second, lowest + 0.5);
}
