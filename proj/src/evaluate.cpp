#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "uwbg/error.hpp"
#include "uwbg/eval.hpp"

namespace uwbg::eval {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b)
{
    return std::chrono::duration<double>(b - a).count();
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

void fnv(std::uint64_t& h, const std::uint8_t* p, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) {
        h = (h ^ p[i]) * kFnvPrime;
    }
}

std::string hex64(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace

TimingStats summarize_timings(std::vector<double> seconds)
{
    TimingStats s;
    if (seconds.empty()) {
        return s;
    }
    std::sort(seconds.begin(), seconds.end());
    s.mean = std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(seconds.size());
    const auto pct = [&](double p) {
        const double pos = p * static_cast<double>(seconds.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, seconds.size() - 1);
        return seconds[lo] + (pos - static_cast<double>(lo)) * (seconds[hi] - seconds[lo]);
    };
    s.p50 = pct(0.50);
    s.p95 = pct(0.95);
    return s;
}

AccuracySummary score_predictions(const std::vector<int>& truth, const std::vector<int>& predicted)
{
    if (truth.size() != predicted.size()) {
        throw InvalidArgument("score_predictions: " + std::to_string(truth.size()) + " labels but " +
                              std::to_string(predicted.size()) + " predictions");
    }
    AccuracySummary a;
    a.samples = truth.size();
    a.confusion_subclass.assign(synth::kNumSubclasses, std::vector<int>(synth::kNumSubclasses, 0));
    a.confusion_superclass.assign(models::kNumSuperclasses, std::vector<int>(models::kNumSuperclasses, 0));
    std::size_t sub_hits = 0;
    std::size_t super_hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int ts = models::subclass_to_superclass(truth[i]);
        const int ps = models::subclass_to_superclass(predicted[i]);
        ++a.confusion_subclass[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
        ++a.confusion_superclass[static_cast<std::size_t>(ts)][static_cast<std::size_t>(ps)];
        sub_hits += truth[i] == predicted[i];
        super_hits += ts == ps;
    }
    if (a.samples > 0) {
        a.subclass_accuracy = 100.0 * static_cast<double>(sub_hits) / static_cast<double>(a.samples);
        a.superclass_accuracy = 100.0 * static_cast<double>(super_hits) / static_cast<double>(a.samples);
    }
    return a;
}

void to_json(nlohmann::json& j, const TimingStats& t)
{
    j = nlohmann::json{{"mean", t.mean}, {"p50", t.p50}, {"p95", t.p95}};
}

void to_json(nlohmann::json& j, const EvalReport& r)
{
    j = nlohmann::json{{"model", r.model_name},
                       {"dataset_fingerprint", r.dataset_fingerprint},
                       {"samples", r.accuracy.samples},
                       {"subclass_accuracy", r.accuracy.subclass_accuracy},
                       {"superclass_accuracy", r.accuracy.superclass_accuracy},
                       {"confusion_subclass", r.accuracy.confusion_subclass},
                       {"confusion_superclass", r.accuracy.confusion_superclass},
                       {"inference_time", r.inference_time},
                       {"process_time", r.process_time},
                       {"memory", r.memory}};
}

std::string dataset_fingerprint(const DatasetManifest& manifest)
{
    std::uint64_t h = kFnvOffset;
    for (const auto& e : manifest.entries) {
        const auto sub = static_cast<std::uint8_t>(e.subclass);
        fnv(h, &sub, 1);
        const auto bytes = read_bytes(manifest.resolve(e));
        fnv(h, bytes.data(), bytes.size());
    }
    return hex64(h);
}

EvalReport evaluate(const models::Model& model, const DatasetManifest& test, const preprocess::PreprocessConfig& pre)
{
    if (test.entries.empty()) {
        throw InvalidArgument("cannot evaluate on an empty manifest");
    }
    pre.validate();
    EvalReport r;
    r.model_name = model.config().name;
    r.memory = models::estimate_memory(model.config());

    std::uint64_t h = kFnvOffset;
    std::vector<int> truth, predicted;
    std::vector<double> inference, process;
    for (const auto& e : test.entries) {
        const auto path = test.resolve(e);
        const auto bytes = read_bytes(path);
        const auto sub = static_cast<std::uint8_t>(e.subclass);
        fnv(h, &sub, 1);
        fnv(h, bytes.data(), bytes.size());
        synth::RangeTimeMap map;
        try {
            map = synth::decode_rtm(bytes);
        } catch (const FormatError& ex) {
            throw FormatError(ex.field(), path.string() + ": " + ex.what());
        }

        const auto t0 = Clock::now();
        const auto image = preprocess::preprocess_pipeline(map, pre);
        const auto t1 = Clock::now();
        const auto p = models::predict(model, image);
        const auto t2 = Clock::now();

        truth.push_back(e.subclass);
        predicted.push_back(p.subclass);
        inference.push_back(seconds_between(t1, t2));
        process.push_back(seconds_between(t0, t2));
    }
    r.dataset_fingerprint = hex64(h);
    r.accuracy = score_predictions(truth, predicted);
    r.inference_time = summarize_timings(inference);
    r.process_time = summarize_timings(process);
    return r;
}

void to_json(nlohmann::json& j, const BenchmarkReport& r)
{
    j = nlohmann::json{{"model", r.model_name},
                       {"repetitions", r.repetitions},
                       {"warmup", r.warmup},
                       {"samples", r.samples.size()},
                       {"timed_runs_per_sample", r.repetitions - r.warmup},
                       {"inference_time", r.inference_time},
                       {"process_time", r.process_time},
                       {"clock_resolution_s", r.clock_resolution_s},
                       {"process_budget_s", r.process_budget_s},
                       {"realtime_ok", r.realtime_ok},
                       {"memory", r.memory}};
}

double measure_clock_resolution()
{
    double best = 1.0;
    for (int i = 0; i < 50; ++i) {
        const auto a = Clock::now();
        auto b = Clock::now();
        while (b == a) {
            b = Clock::now();
        }
        best = std::min(best, seconds_between(a, b));
    }
    // The nominal tick bounds what the clock can represent.
    const double tick = static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);
    return std::max(best, tick);
}

void require_clock_resolution(double resolution_s)
{
    if (!(resolution_s <= 1e-3)) {
        throw BenchmarkError("monotonic clock resolution " + std::to_string(resolution_s * 1e3) +
                             " ms is coarser than 1 ms");
    }
}

BenchmarkReport benchmark(const models::Model& model, const DatasetManifest& manifest, int repetitions,
                          const preprocess::PreprocessConfig& pre, std::size_t max_samples)
{
    if (repetitions < 10) {
        throw InvalidArgument("benchmark needs at least 10 repetitions");
    }
    if (manifest.entries.empty()) {
        throw InvalidArgument("cannot benchmark on an empty manifest");
    }
    pre.validate();
    BenchmarkReport r;
    r.clock_resolution_s = measure_clock_resolution();
    require_clock_resolution(r.clock_resolution_s);
    r.model_name = model.config().name;
    r.repetitions = repetitions;
    r.memory = models::estimate_memory(model.config());

    const std::size_t n = max_samples == 0 ? manifest.entries.size() : std::min(max_samples, manifest.entries.size());
    std::vector<double> all_inference, all_process;
    for (std::size_t i = 0; i < n; ++i) {
        const auto path = manifest.resolve(manifest.entries[i]);
        const auto map = synth::load_rtm(path);
        SampleTiming st;
        st.source = path.string();
        for (int rep = 0; rep < repetitions; ++rep) {
            const auto t0 = Clock::now();
            const auto image = preprocess::preprocess_pipeline(map, pre);
            const auto t1 = Clock::now();
            const auto p = models::predict(model, image);
            const auto t2 = Clock::now();
            (void)p;
            if (rep < r.warmup) {
                continue;
            }
            st.inference_s.push_back(seconds_between(t1, t2));
            st.process_s.push_back(seconds_between(t0, t2));
        }
        all_inference.insert(all_inference.end(), st.inference_s.begin(), st.inference_s.end());
        all_process.insert(all_process.end(), st.process_s.begin(), st.process_s.end());
        r.samples.push_back(std::move(st));
    }
    r.inference_time = summarize_timings(all_inference);
    r.process_time = summarize_timings(all_process);
    r.realtime_ok = r.process_time.p95 < r.process_budget_s;
    return r;
}

} // namespace uwbg::eval
