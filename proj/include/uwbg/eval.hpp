#pragma once

// Dataset splitting, training, accuracy/confusion metrics, latency
// benchmarking and the replay stream monitor.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwbg/models.hpp"
#include "uwbg/nn/adam.hpp"
#include "uwbg/preprocess.hpp"
#include "uwbg/synth.hpp"

namespace uwbg::eval {

using synth::DatasetManifest;

// ---------------------------------------------------------------- splitting

struct SplitSpec {
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;
    std::uint64_t seed = 0;

    /// Fractions in [0, 1] summing to 1 (within 1e-9).
    void validate() const;
    friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

void to_json(nlohmann::json& j, const SplitSpec& s);
void from_json(const nlohmann::json& j, SplitSpec& s);

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;

    friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

/// floor(train_frac * n), floor(val_frac * n), remainder.
SplitCounts split_counts(std::size_t n, const SplitSpec& spec);

struct DatasetSplit {
    DatasetManifest train;
    DatasetManifest val;
    DatasetManifest test;
};

/// Per-subclass seeded shuffle, then split_counts per subclass. Entries keep
/// manifest order within each part.
DatasetSplit split_dataset(const DatasetManifest& manifest, const SplitSpec& spec);

// ---------------------------------------------------------------- training

/// Preprocessed images held as 8-bit CHW planes (alpha dropped).
struct ImageSet {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> chw;
    std::vector<int> labels;
    std::vector<std::string> sources;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t sample_size() const noexcept { return static_cast<std::size_t>(channels) * height * width; }
    /// Samples `idx` as a float NCHW batch in [0, 1].
    nn::Tensor batch(const std::vector<std::size_t>& idx) const;
};

/// Loads and preprocesses every manifest entry. Errors carry the file path.
ImageSet load_images(const DatasetManifest& manifest, const preprocess::PreprocessConfig& cfg);

struct TrainParams {
    int epochs = 30;
    int batch_size = 32;
    nn::AdamConfig adam;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

void to_json(nlohmann::json& j, const TrainParams& p);
void from_json(const nlohmann::json& j, TrainParams& p);

struct EpochLog {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_accuracy = 0.0; // percent
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    int best_epoch = 0; // 0: no epoch ran
    double best_val_accuracy = 0.0;
};

void to_json(nlohmann::json& j, const EpochLog& e);
void to_json(nlohmann::json& j, const TrainLog& l);

struct TrainResult {
    models::Model model;
    TrainLog log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Shuffled mini-batch Adam. Returns the weights of the epoch with the best
/// validation subclass accuracy (earliest on ties).
TrainResult train(const models::ModelConfig& cfg, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainParams& params, const EpochCallback& on_epoch = {});

TrainResult train(const models::ModelConfig& cfg, const DatasetManifest& train_manifest,
                  const DatasetManifest& val_manifest, const TrainParams& params,
                  const preprocess::PreprocessConfig& pre = {}, const EpochCallback& on_epoch = {});

/// Subclass predictions for every sample, in batches.
std::vector<int> predict_all(const models::Model& model, const ImageSet& set, std::size_t batch_size = 32);

// -------------------------------------------------------------- evaluation

struct TimingStats {
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
};

/// Percentiles by linear interpolation between order statistics.
TimingStats summarize_timings(std::vector<double> seconds);

struct AccuracySummary {
    std::size_t samples = 0;
    double subclass_accuracy = 0.0;   // percent
    double superclass_accuracy = 0.0; // percent
    /// [true][predicted]
    std::vector<std::vector<int>> confusion_subclass;
    std::vector<std::vector<int>> confusion_superclass;
};

/// Confusion matrices and accuracies for subclass labels; superclass values
/// are derived through subclass_to_superclass.
AccuracySummary score_predictions(const std::vector<int>& truth, const std::vector<int>& predicted);

struct EvalReport {
    std::string model_name;
    std::string dataset_fingerprint;
    AccuracySummary accuracy;
    TimingStats inference_time;
    TimingStats process_time;
    models::MemoryEstimate memory;
};

void to_json(nlohmann::json& j, const TimingStats& t);
void to_json(nlohmann::json& j, const EvalReport& r);

/// FNV-1a over each entry's subclass and RTM file bytes, hex encoded.
std::string dataset_fingerprint(const DatasetManifest& manifest);

/// Runs load -> preprocess -> predict per sample. Inference time covers
/// predict; process time covers preprocess + predict.
EvalReport evaluate(const models::Model& model, const DatasetManifest& test,
                    const preprocess::PreprocessConfig& pre = {});

// ------------------------------------------------------------ benchmarking

inline constexpr int kWarmupRuns = 3;

struct SampleTiming {
    std::string source;
    std::vector<double> inference_s;
    std::vector<double> process_s;
};

struct BenchmarkReport {
    std::string model_name;
    int repetitions = 0;
    int warmup = kWarmupRuns;
    std::vector<SampleTiming> samples;
    TimingStats inference_time;
    TimingStats process_time;
    double clock_resolution_s = 0.0;
    double process_budget_s = 1.0;
    /// process_time.p95 < process_budget_s
    bool realtime_ok = false;
    models::MemoryEstimate memory;
};

void to_json(nlohmann::json& j, const BenchmarkReport& r);

/// Smallest observable step of the monotonic clock, in seconds.
double measure_clock_resolution();

/// Throws BenchmarkError when `resolution_s` is coarser than 1 ms.
void require_clock_resolution(double resolution_s);

/// Per sample: `repetitions` runs of preprocess + predict on the loaded
/// recording, the first kWarmupRuns discarded. At most `max_samples` entries
/// are used (0 = all).
BenchmarkReport benchmark(const models::Model& model, const DatasetManifest& manifest, int repetitions,
                          const preprocess::PreprocessConfig& pre = {}, std::size_t max_samples = 0);

// --------------------------------------------------------------- streaming

struct StreamParams {
    double frame_rate = 60.0; // frames per second
    /// Sleep so frames arrive in wall-clock time; otherwise a virtual clock.
    bool realtime = false;
};

struct StreamEvent {
    std::size_t window = 0;
    std::string source;
    double timestamp_s = 0.0; // window completion on the stream clock
    int subclass = 0;
    int superclass = 0;
    float confidence = 0.0f;
    double process_time_s = 0.0;
};

void to_json(nlohmann::json& j, const StreamEvent& e);

struct StreamSummary {
    std::size_t windows = 0;
    std::size_t emitted = 0;
    std::size_t dropped_windows = 0;
    std::size_t dropped_frames = 0;
};

void to_json(nlohmann::json& j, const StreamSummary& s);

using StreamSink = std::function<void(const StreamEvent&)>;

/// Replays the manifest's recordings back to back as one frame stream; each
/// recording is one window. A window that completes while the previous one
/// is still being processed is dropped whole, so no result is emitted late.
StreamSummary stream_simulate(const models::Model& model, const DatasetManifest& manifest,
                              const StreamParams& params, const StreamSink& sink,
                              const preprocess::PreprocessConfig& pre = {});

/// One JSON object per line. Throws IoError when the stream goes bad.
StreamSink json_lines_sink(std::ostream& out);
/// Fixed-width table with a header before the first row.
StreamSink table_sink(std::ostream& out);

} // namespace uwbg::eval
