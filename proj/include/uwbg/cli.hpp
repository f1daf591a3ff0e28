#pragma once

// Subcommand driver behind the `uwbg` binary.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwbg/eval.hpp"
#include "uwbg/preprocess.hpp"
#include "uwbg/synth.hpp"

namespace uwbg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

struct GradCheckSettings {
    double h = 1e-3;
    double tol = 1e-4;
    int samples = 4;
    std::size_t params_per_layer = 200;

    friend bool operator==(const GradCheckSettings&, const GradCheckSettings&) = default;
};

struct BenchSettings {
    int repetitions = 10;
    std::size_t max_samples = 16; // 0 = all

    friend bool operator==(const BenchSettings&, const BenchSettings&) = default;
};

/// Every tunable value a subcommand can read. Loaded from --config (unknown
/// keys rejected), then overridden by flags.
struct CliConfig {
    synth::SynthConfig synth;
    preprocess::PreprocessConfig preprocess;
    eval::SplitSpec split;
    eval::TrainParams train;
    /// Reference model name or path to a ModelConfig JSON file.
    std::string model = "cnn-ref";
    BenchSettings bench;
    double frame_rate = 60.0;
    GradCheckSettings gradcheck;

    friend bool operator==(const CliConfig&, const CliConfig&) = default;
};

void to_json(nlohmann::json& j, const CliConfig& c);
void from_json(const nlohmann::json& j, CliConfig& c);

/// argv[0] is the program name. Returns 0 on success, 1 when validation
/// fails (bad data, failed checks), 2 on usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace uwbg::cli
