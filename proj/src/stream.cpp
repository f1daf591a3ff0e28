#include <chrono>
#include <iomanip>
#include <ostream>
#include <thread>

#include "uwbg/error.hpp"
#include "uwbg/eval.hpp"

namespace uwbg::eval {

void to_json(nlohmann::json& j, const StreamEvent& e)
{
    j = nlohmann::json{{"window", e.window},
                       {"source", e.source},
                       {"timestamp", e.timestamp_s},
                       {"subclass", e.subclass},
                       {"subclass_name", synth::SubclassLabel::from_index(e.subclass).name()},
                       {"superclass", e.superclass},
                       {"superclass_name", synth::gesture_name(static_cast<synth::GestureClass>(e.superclass))},
                       {"confidence", e.confidence},
                       {"process_time", e.process_time_s}};
}

void to_json(nlohmann::json& j, const StreamSummary& s)
{
    j = nlohmann::json{{"windows", s.windows},
                       {"emitted", s.emitted},
                       {"dropped_windows", s.dropped_windows},
                       {"dropped_frames", s.dropped_frames}};
}

StreamSummary stream_simulate(const models::Model& model, const DatasetManifest& manifest,
                              const StreamParams& params, const StreamSink& sink,
                              const preprocess::PreprocessConfig& pre)
{
    if (!(params.frame_rate > 0.0)) {
        throw InvalidArgument("frame_rate must be > 0");
    }
    pre.validate();
    using Clock = std::chrono::steady_clock;
    const auto wall_start = Clock::now();

    StreamSummary summary;
    std::size_t frames_seen = 0;
    // Stream-clock time at which the worker finishes its current window.
    double busy_until = 0.0;
    for (const auto& e : manifest.entries) {
        const auto path = manifest.resolve(e);
        const auto map = synth::load_rtm(path);
        frames_seen += static_cast<std::size_t>(map.frames);
        const double complete = static_cast<double>(frames_seen) / params.frame_rate;
        ++summary.windows;

        if (params.realtime) {
            std::this_thread::sleep_until(wall_start + std::chrono::duration<double>(complete));
        }
        if (busy_until > complete) {
            ++summary.dropped_windows;
            summary.dropped_frames += static_cast<std::size_t>(map.frames);
            continue;
        }

        const auto t0 = Clock::now();
        const auto p = models::predict(model, preprocess::preprocess_pipeline(map, pre));
        const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        busy_until = complete + elapsed;

        StreamEvent ev;
        ev.window = summary.windows - 1;
        ev.source = e.path;
        ev.timestamp_s = complete;
        ev.subclass = p.subclass;
        ev.superclass = p.superclass;
        ev.confidence = p.confidence;
        ev.process_time_s = elapsed;
        sink(ev);
        ++summary.emitted;
    }
    return summary;
}

StreamSink json_lines_sink(std::ostream& out)
{
    return [&out](const StreamEvent& e) {
        out << nlohmann::json(e).dump() << '\n';
        out.flush();
        if (!out) {
            throw IoError("stream sink write failed");
        }
    };
}

StreamSink table_sink(std::ostream& out)
{
    return [&out, header = true](const StreamEvent& e) mutable {
        if (header) {
            out << std::left << std::setw(8) << "window" << std::setw(11) << "time_s" << std::setw(16) << "subclass"
                << std::setw(12) << "gesture" << std::setw(12) << "confidence" << "process_ms\n";
            header = false;
        }
        out << std::left << std::setw(8) << e.window << std::setw(11) << std::fixed << std::setprecision(3)
            << e.timestamp_s << std::setw(16) << synth::SubclassLabel::from_index(e.subclass).name() << std::setw(12)
            << synth::gesture_name(static_cast<synth::GestureClass>(e.superclass)) << std::setw(12)
            << std::setprecision(3) << e.confidence << std::setprecision(2) << e.process_time_s * 1e3 << '\n';
        out.flush();
        if (!out) {
            throw IoError("stream sink write failed");
        }
    };
}

} // namespace uwbg::eval
