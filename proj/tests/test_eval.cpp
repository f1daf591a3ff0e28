#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "uwbg/error.hpp"
#include "uwbg/eval.hpp"
#include "uwbg/rng.hpp"

using namespace uwbg;
using namespace uwbg::eval;

namespace {

synth::DatasetManifest fake_manifest(int per_class)
{
    synth::DatasetManifest m;
    for (int s = 0; s < 16; ++s) {
        for (int i = 0; i < per_class; ++i) {
            m.entries.push_back({"s" + std::to_string(s) + "_" + std::to_string(i), s, 0});
        }
    }
    return m;
}

std::map<int, int> per_class(const synth::DatasetManifest& m)
{
    std::map<int, int> c;
    for (const auto& e : m.entries) ++c[e.subclass];
    return c;
}

struct SmallData {
    test::TempDir dir{"evaldata"};
    synth::DatasetManifest manifest;

    explicit SmallData(int samples)
    {
        synth::SynthConfig cfg;
        cfg.samples_per_subclass = samples;
        cfg.seed = 5;
        manifest = synth::generate_dataset(cfg, dir.path());
    }
};

} // namespace

TEST_CASE("split counts follow the floor rule")
{
    const SplitSpec spec;
    CHECK(split_counts(100, spec) == SplitCounts{70, 15, 15});
    CHECK(split_counts(10, spec) == SplitCounts{7, 1, 2});
    CHECK(split_counts(30, spec) == SplitCounts{21, 4, 5});
    CHECK(split_counts(1, spec) == SplitCounts{0, 0, 1});
    CHECK(split_counts(0, spec) == SplitCounts{0, 0, 0});

    SplitSpec bad;
    bad.val_frac = 0.5;
    CHECK_THROWS_AS(split_counts(10, bad), InvalidArgument);
}

TEST_CASE("split_dataset is a seeded stratified partition")
{
    const auto m = fake_manifest(10);
    SplitSpec spec;
    spec.seed = 3;
    const auto s = split_dataset(m, spec);
    for (int c = 0; c < 16; ++c) {
        CHECK(per_class(s.train)[c] == 7);
        CHECK(per_class(s.val)[c] == 1);
        CHECK(per_class(s.test)[c] == 2);
    }
    std::multiset<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        for (const auto& e : part->entries) all.insert(e.path);
    }
    CHECK(all.size() == m.entries.size());
    CHECK(std::set<std::string>(all.begin(), all.end()).size() == m.entries.size());

    const auto again = split_dataset(m, spec);
    CHECK(again.train.entries == s.train.entries);
    CHECK(again.test.entries == s.test.entries);
    spec.seed = 4;
    CHECK(split_dataset(m, spec).train.entries != s.train.entries);

    CHECK_THROWS_AS(split_dataset(synth::DatasetManifest{}, spec), InvalidArgument);
}

TEST_CASE("score_predictions")
{
    std::vector<int> truth;
    for (int s = 0; s < 16; ++s) {
        for (int k = 0; k < 5; ++k) truth.push_back(s);
    }
    const auto zero = score_predictions(truth, std::vector<int>(truth.size(), 0));
    CHECK(zero.subclass_accuracy == doctest::Approx(6.25));
    // all of OK's 15 samples map to superclass 0
    CHECK(zero.superclass_accuracy == doctest::Approx(100.0 * 15 / 80));

    const auto perfect = score_predictions(truth, truth);
    CHECK(perfect.subclass_accuracy == 100.0);
    CHECK(perfect.superclass_accuracy == 100.0);
    for (int i = 0; i < 16; ++i) {
        for (int j = 0; j < 16; ++j) {
            CHECK(perfect.confusion_subclass[i][j] == (i == j ? 5 : 0));
        }
    }

    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> t, p;
        const auto n = 1 + rng.below(100);
        for (std::uint64_t i = 0; i < n; ++i) {
            t.push_back(static_cast<int>(rng.below(16)));
            p.push_back(rng.uniform() < 0.5 ? t.back() : static_cast<int>(rng.below(16)));
        }
        const auto a = score_predictions(t, p);
        REQUIRE(a.superclass_accuracy >= a.subclass_accuracy);
        int total = 0;
        for (int i = 0; i < 16; ++i) {
            const int row = std::accumulate(a.confusion_subclass[i].begin(), a.confusion_subclass[i].end(), 0);
            CHECK(row == std::count(t.begin(), t.end(), i));
            total += row;
        }
        CHECK(total == static_cast<int>(n));
    }
    CHECK_THROWS_AS(score_predictions({1, 2}, {1}), InvalidArgument);
}

TEST_CASE("timing summary")
{
    const auto s = summarize_timings({4, 1, 3, 2, 5});
    CHECK(s.mean == doctest::Approx(3.0));
    CHECK(s.p50 == doctest::Approx(3.0));
    CHECK(s.p95 == doctest::Approx(4.8));
    CHECK(summarize_timings({}).mean == 0.0);
}

TEST_CASE("train with zero epochs returns the initial model")
{
    SmallData d(2);
    const auto cfg = models::cnn_mini();
    TrainParams p;
    p.epochs = 0;
    p.seed = 3;
    const auto r = train(cfg, d.manifest, d.manifest, p);
    CHECK(r.log.epochs.empty());
    CHECK(r.log.best_epoch == 0);
    const auto again = train(cfg, d.manifest, d.manifest, p);
    CHECK(r.model.params() == again.model.params());
}

TEST_CASE("training is deterministic and logs every epoch")
{
    SmallData d(3);
    const auto pre = preprocess::PreprocessConfig{};
    const auto images = load_images(d.manifest, pre);
    CHECK(images.size() == 48);
    TrainParams p;
    p.epochs = 2;
    p.batch_size = 16;
    p.seed = 1;
    std::vector<int> seen;
    const auto a = train(models::cnn_mini(), images, images, p, [&](const EpochLog& e) { seen.push_back(e.epoch); });
    const auto b = train(models::cnn_mini(), images, images, p);
    CHECK(seen == std::vector<int>{1, 2});
    REQUIRE(a.log.epochs.size() == 2);
    CHECK(a.model.params() == b.model.params());
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(a.log.epochs[i].train_loss == b.log.epochs[i].train_loss);
        CHECK(a.log.epochs[i].val_accuracy == b.log.epochs[i].val_accuracy);
    }
    const auto best = std::max_element(a.log.epochs.begin(), a.log.epochs.end(),
                                       [](const EpochLog& x, const EpochLog& y) { return x.val_accuracy < y.val_accuracy; });
    CHECK(a.log.best_epoch == best->epoch);

    auto wrong = models::cnn_mini();
    wrong.input.width = 100;
    CHECK_THROWS_AS(train(wrong, images, images, p), ShapeError);
}

TEST_CASE("evaluate, benchmark and stream")
{
    SmallData d(2);
    const auto model = models::build_model(models::cnn_mini(), 2);

    const auto r = evaluate(model, d.manifest);
    CHECK(r.accuracy.samples == 32);
    CHECK(r.accuracy.superclass_accuracy >= r.accuracy.subclass_accuracy);
    CHECK(r.dataset_fingerprint == dataset_fingerprint(d.manifest));
    CHECK(r.dataset_fingerprint.size() == 16);
    CHECK(r.inference_time.mean > 0.0);
    CHECK(r.inference_time.mean <= r.process_time.mean);
    CHECK(r.memory == models::estimate_memory(models::cnn_mini()));
    const nlohmann::json j = r;
    CHECK(j.at("confusion_subclass").size() == 16);
    CHECK(j.at("confusion_superclass").size() == 6);
    CHECK_THROWS_AS(evaluate(model, synth::DatasetManifest{}), InvalidArgument);

    const auto b = benchmark(model, d.manifest, 10, {}, 3);
    REQUIRE(b.samples.size() == 3);
    for (const auto& s : b.samples) {
        CHECK(s.process_s.size() == 7);
        for (std::size_t i = 0; i < s.process_s.size(); ++i) {
            CHECK(s.inference_s[i] > 0.0);
            CHECK(s.inference_s[i] <= s.process_s[i]);
        }
    }
    CHECK(b.realtime_ok);
    CHECK_THROWS_AS(benchmark(model, d.manifest, 9), InvalidArgument);
    CHECK_NOTHROW(require_clock_resolution(1e-9));
    CHECK_THROWS_AS(require_clock_resolution(2e-3), BenchmarkError);

    std::vector<StreamEvent> events;
    const auto summary = stream_simulate(model, d.manifest, StreamParams{}, [&](const StreamEvent& e) {
        events.push_back(e);
    });
    CHECK(summary.emitted == 32);
    CHECK(summary.dropped_frames == 0);
    REQUIRE(events.size() == 32);
    CHECK(events[1].timestamp_s == doctest::Approx(240.0 / 60.0));
    std::vector<StreamEvent> again;
    stream_simulate(model, d.manifest, StreamParams{}, [&](const StreamEvent& e) { again.push_back(e); });
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(events[i].subclass == again[i].subclass);
        CHECK(events[i].confidence == again[i].confidence);
        const auto p = models::predict(model, preprocess::preprocess_pipeline(
                                                  synth::load_rtm(d.manifest.resolve(d.manifest.entries[i])), {}));
        CHECK(events[i].confidence == *std::max_element(p.probs.begin(), p.probs.end()));
    }

    // A frame rate so high that every window completes while the first is
    // still being processed.
    StreamParams fast;
    fast.frame_rate = 1e12;
    const auto dropped = stream_simulate(model, d.manifest, fast, [](const StreamEvent&) {});
    CHECK(dropped.emitted + dropped.dropped_windows == 32);
    CHECK(dropped.dropped_frames == dropped.dropped_windows * 120);
    CHECK(dropped.dropped_windows > 0);

    std::ostringstream lines;
    stream_simulate(model, d.manifest, StreamParams{}, json_lines_sink(lines));
    std::istringstream in(lines.str());
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("timestamp"));
        CHECK(j.contains("process_time"));
        ++n;
    }
    CHECK(n == 32);

    std::ostringstream broken;
    broken.setstate(std::ios::badbit);
    CHECK_THROWS_AS(stream_simulate(model, d.manifest, StreamParams{}, json_lines_sink(broken)), IoError);
    StreamParams zero;
    zero.frame_rate = 0.0;
    CHECK_THROWS_AS(stream_simulate(model, d.manifest, zero, [](const StreamEvent&) {}), InvalidArgument);
}
