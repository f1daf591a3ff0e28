#include "uwbg/cli.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include <unistd.h>

#include <CLI11.hpp>

#include "uwbg/error.hpp"
#include "uwbg/models.hpp"
#include "uwbg/nn/gradcheck.hpp"
#include "uwbg/rng.hpp"

namespace uwbg::cli {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const CliConfig& c)
{
    j = nlohmann::json{{"synth", c.synth},
                       {"preprocess", c.preprocess},
                       {"split", c.split},
                       {"train", c.train},
                       {"model", c.model},
                       {"bench", {{"repetitions", c.bench.repetitions}, {"max_samples", c.bench.max_samples}}},
                       {"stream", {{"frame_rate", c.frame_rate}}},
                       {"gradcheck",
                        {{"h", c.gradcheck.h},
                         {"tol", c.gradcheck.tol},
                         {"samples", c.gradcheck.samples},
                         {"params_per_layer", c.gradcheck.params_per_layer}}}};
}

namespace {

template <typename F>
void for_keys(const nlohmann::json& j, const std::string& section, F&& f)
{
    if (!j.is_object()) {
        throw InvalidArgument("config section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!f(key, value)) {
            throw InvalidArgument("unknown config key '" + section + "." + key + "'");
        }
    }
}

} // namespace

void from_json(const nlohmann::json& j, CliConfig& c)
{
    for_keys(j, "<root>", [&](const std::string& key, const nlohmann::json& v) {
        if (key == "synth") {
            c.synth = v.get<synth::SynthConfig>();
        } else if (key == "preprocess") {
            c.preprocess = v.get<preprocess::PreprocessConfig>();
        } else if (key == "split") {
            c.split = v.get<eval::SplitSpec>();
        } else if (key == "train") {
            c.train = v.get<eval::TrainParams>();
        } else if (key == "model") {
            c.model = v.get<std::string>();
        } else if (key == "bench") {
            for_keys(v, key, [&](const std::string& k, const nlohmann::json& x) {
                if (k == "repetitions") c.bench.repetitions = x.get<int>();
                else if (k == "max_samples") c.bench.max_samples = x.get<std::size_t>();
                else return false;
                return true;
            });
        } else if (key == "stream") {
            for_keys(v, key, [&](const std::string& k, const nlohmann::json& x) {
                if (k != "frame_rate") return false;
                c.frame_rate = x.get<double>();
                return true;
            });
        } else if (key == "gradcheck") {
            for_keys(v, key, [&](const std::string& k, const nlohmann::json& x) {
                if (k == "h") c.gradcheck.h = x.get<double>();
                else if (k == "tol") c.gradcheck.tol = x.get<double>();
                else if (k == "samples") c.gradcheck.samples = x.get<int>();
                else if (k == "params_per_layer") c.gradcheck.params_per_layer = x.get<std::size_t>();
                else return false;
                return true;
            });
        } else {
            return false;
        }
        return true;
    });
}

namespace {

/// Flags parsed into a staging CliConfig. Only flags actually given are
/// copied onto the effective config, after the --config file is applied.
class FlagSet {
public:
    explicit FlagSet(CLI::App* app) : app_(app) {}

    template <typename Access>
    CLI::Option* add(const std::string& name, Access access, const std::string& help)
    {
        CLI::Option* opt = app_->add_option(name, access(staged_), help);
        appliers_.emplace_back(opt, [access](CliConfig& eff, CliConfig& staged) { access(eff) = access(staged); });
        return opt;
    }

    void apply(CliConfig& eff)
    {
        for (auto& [opt, fn] : appliers_) {
            if (opt->count() > 0) {
                fn(eff, staged_);
            }
        }
    }

private:
    CLI::App* app_;
    CliConfig staged_;
    std::vector<std::pair<CLI::Option*, std::function<void(CliConfig&, CliConfig&)>>> appliers_;
};

struct Common {
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out;
    bool print_config = false;
    std::string data;
    std::string checkpoint;
    std::string part = "test";
    std::string format = "auto";
    bool realtime = false;
    bool ops = false;
};

struct Command {
    CLI::App* app = nullptr;
    std::unique_ptr<FlagSet> flags;
};

void add_synth_flags(FlagSet& f)
{
    f.add("--samples", [](CliConfig& c) -> int& { return c.synth.samples_per_subclass; }, "Recordings per subclass");
    f.add("--bins", [](CliConfig& c) -> int& { return c.synth.bins; }, "Range bins per recording");
    f.add("--frames", [](CliConfig& c) -> int& { return c.synth.frames; }, "Slow-time frames per recording");
    f.add("--noise-sigma", [](CliConfig& c) -> double& { return c.synth.noise_sigma; }, "Gaussian noise std");
    f.add("--outlier-rate", [](CliConfig& c) -> double& { return c.synth.outlier_rate; }, "Fraction of cells hit");
    f.add("--outlier-magnitude", [](CliConfig& c) -> double& { return c.synth.outlier_magnitude; },
          "Outlier size as a multiple of the signal peak");
}

void add_preprocess_flags(FlagSet& f)
{
    f.add("--median-window", [](CliConfig& c) -> int& { return c.preprocess.median_window; }, "Rolling median window");
    f.add("--z-threshold", [](CliConfig& c) -> double& { return c.preprocess.z_threshold; }, "Outlier |z| threshold");
}

void add_split_flags(FlagSet& f)
{
    f.add("--split-seed", [](CliConfig& c) -> std::uint64_t& { return c.split.seed; }, "Split seed (default --seed)");
}

void add_model_flag(FlagSet& f)
{
    f.add("--model", [](CliConfig& c) -> std::string& { return c.model; },
          "cnn-mini, cnn-ref, mbn-ref or a ModelConfig JSON path");
}

std::ostream& open_out(const std::string& path, std::ofstream& file, std::ostream& fallback)
{
    if (path.empty()) {
        return fallback;
    }
    const fs::path p(path);
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    file.open(p, std::ios::trunc);
    if (!file) {
        throw IoError("cannot open " + path + " for writing");
    }
    return file;
}

const synth::DatasetManifest& pick_part(const eval::DatasetSplit& split, const std::string& part)
{
    if (part == "train") return split.train;
    if (part == "val") return split.val;
    return split.test;
}

synth::DatasetManifest load_part(const CliConfig& cfg, const Common& c)
{
    const auto manifest = synth::load_manifest(fs::path(c.data) / synth::kManifestFileName);
    if (c.part == "all") {
        return manifest;
    }
    return pick_part(eval::split_dataset(manifest, cfg.split), c.part);
}

int cmd_gen(const CliConfig& cfg, const Common& c, std::ostream& out)
{
    const fs::path dir = c.out.empty() ? fs::path("data") : fs::path(c.out);
    const auto m = synth::generate_dataset(cfg.synth, dir);
    out << nlohmann::json{{"manifest", (dir / synth::kManifestFileName).string()}, {"entries", m.entries.size()}}.dump()
        << '\n';
    return kExitOk;
}

int cmd_preprocess(const CliConfig& cfg, const Common& c, std::ostream& out)
{
    const auto manifest = synth::load_manifest(fs::path(c.data) / synth::kManifestFileName);
    const fs::path dir = c.out.empty() ? fs::path("images") : fs::path(c.out);
    fs::create_directories(dir);
    std::map<int, int> next_index;
    for (const auto& e : manifest.entries) {
        const auto map = synth::load_rtm(manifest.resolve(e));
        const auto image = preprocess::preprocess_pipeline(map, cfg.preprocess);
        char name[32];
        std::snprintf(name, sizeof name, "%02d_%04d.png", e.subclass, next_index[e.subclass]++);
        preprocess::write_png(image.raster, dir / name);
    }
    out << nlohmann::json{{"images", manifest.entries.size()}, {"out", dir.string()}}.dump() << '\n';
    return kExitOk;
}

int cmd_train(const CliConfig& cfg, const Common& c, std::ostream& out, std::ostream& err)
{
    const auto model_cfg = models::resolve_model_config(cfg.model);
    const auto manifest = synth::load_manifest(fs::path(c.data) / synth::kManifestFileName);
    const auto split = eval::split_dataset(manifest, cfg.split);
    const fs::path dir = c.out.empty() ? fs::path("run") : fs::path(c.out);
    fs::create_directories(dir);

    const auto result = eval::train(model_cfg, split.train, split.val, cfg.train, cfg.preprocess,
                                    [&err](const eval::EpochLog& e) {
                                        err << "epoch " << e.epoch << "  loss " << e.train_loss << "  val_acc "
                                            << e.val_accuracy << "%\n";
                                    });
    nn::save_checkpoint(result.model, dir / "model.uwbm");
    nlohmann::json log{{"config", cfg}, {"log", result.log}};
    std::ofstream(dir / "train_log.json") << log.dump(2) << '\n';
    out << nlohmann::json{{"checkpoint", (dir / "model.uwbm").string()},
                          {"best_epoch", result.log.best_epoch},
                          {"best_val_accuracy", result.log.best_val_accuracy}}
               .dump()
        << '\n';
    return kExitOk;
}

int cmd_eval(const CliConfig& cfg, const Common& c, std::ostream& out)
{
    const auto model = nn::load_checkpoint(c.checkpoint);
    const auto report = eval::evaluate(model, load_part(cfg, c), cfg.preprocess);
    std::ofstream file;
    open_out(c.out, file, out) << nlohmann::json(report).dump(2) << '\n';
    return kExitOk;
}

int cmd_bench(const CliConfig& cfg, const Common& c, std::ostream& out, std::ostream& err)
{
    const auto model = c.checkpoint.empty() ? models::build_model(models::resolve_model_config(cfg.model), cfg.train.seed)
                                            : nn::load_checkpoint(c.checkpoint);
    const auto report =
        eval::benchmark(model, load_part(cfg, c), cfg.bench.repetitions, cfg.preprocess, cfg.bench.max_samples);
    std::ofstream file;
    open_out(c.out, file, out) << nlohmann::json(report).dump(2) << '\n';
    if (!report.realtime_ok) {
        err << "p95 process time " << report.process_time.p95 << " s exceeds the " << report.process_budget_s
            << " s budget\n";
        return kExitValidation;
    }
    return kExitOk;
}

int cmd_stream(const CliConfig& cfg, const Common& c, std::ostream& out, std::ostream& err)
{
    const auto model = nn::load_checkpoint(c.checkpoint);
    std::ofstream file;
    std::ostream& sink_out = open_out(c.out, file, out);
    bool table = c.format == "table";
    if (c.format == "auto") {
        table = c.out.empty() && &out == &std::cout && ::isatty(STDOUT_FILENO);
    }
    eval::StreamParams params;
    params.frame_rate = cfg.frame_rate;
    params.realtime = c.realtime;
    const auto summary = eval::stream_simulate(model, load_part(cfg, c), params,
                                               table ? eval::table_sink(sink_out) : eval::json_lines_sink(sink_out),
                                               cfg.preprocess);
    err << nlohmann::json(summary).dump() << '\n';
    return kExitOk;
}

int cmd_gradcheck(const CliConfig& cfg, const Common& c, std::ostream& out)
{
    const auto model_cfg = models::resolve_model_config(cfg.model);
    const auto model = models::build_model(model_cfg, cfg.train.seed);
    const auto& in = model_cfg.input;
    nn::Tensor x({static_cast<std::size_t>(cfg.gradcheck.samples), static_cast<std::size_t>(in.channels),
                  static_cast<std::size_t>(in.height), static_cast<std::size_t>(in.width)});
    Rng rng(derive_seed(cfg.train.seed, 0x6772616463686BULL, 0));
    for (auto& v : x.values()) {
        v = static_cast<float>(rng.uniform());
    }
    std::vector<int> targets;
    for (int i = 0; i < cfg.gradcheck.samples; ++i) {
        targets.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(model_cfg.num_classes))));
    }
    nn::GradCheckOptions opts;
    opts.h = cfg.gradcheck.h;
    opts.tol = cfg.gradcheck.tol;
    opts.params_per_layer = cfg.gradcheck.params_per_layer;
    opts.seed = cfg.train.seed;
    const auto report = nn::grad_check(model, x, targets, opts);

    char line[160];
    for (const auto& l : report.layers) {
        std::snprintf(line, sizeof line, "%-28s checked %4zu  skipped %3zu  max_rel %.3e  %s\n", l.name.c_str(),
                      l.checked, l.skipped_nonsmooth, l.max_rel_error, l.passed ? "ok" : "FAIL");
        out << line;
    }
    bool passed = report.passed;
    if (c.ops) {
        for (const auto& op : nn::check_all_op_gradients(cfg.train.seed, cfg.gradcheck.h)) {
            const bool ok = op.max_rel_error < cfg.gradcheck.tol;
            passed = passed && ok;
            std::snprintf(line, sizeof line, "op %-25s checked %4zu  max_rel %.3e  %s\n", op.op.c_str(), op.checked,
                          op.max_rel_error, ok ? "ok" : "FAIL");
            out << line;
        }
    }
    std::snprintf(line, sizeof line, "max_rel %.3e tol %.1e %s\n", report.max_rel_error, opts.tol,
                  passed ? "PASS" : "FAIL");
    out << line;
    return passed ? kExitOk : kExitValidation;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"UWB static-gesture pipeline: synthesis, preprocessing, training, evaluation", "uwbg"};
    app.require_subcommand(1);
    app.fallthrough(false);

    Common c;
    std::map<std::string, Command> commands;
    const auto add_command = [&](const std::string& name, const std::string& help) -> Command& {
        Command& cmd = commands[name];
        cmd.app = app.add_subcommand(name, help);
        cmd.flags = std::make_unique<FlagSet>(cmd.app);
        cmd.app->add_option("--seed", c.seed, "Seed for synthesis, split and training");
        cmd.app->add_option("--config", c.config_path, "JSON config file; flags override it")->check(CLI::ExistingFile);
        cmd.app->add_option("--out", c.out, "Output path");
        cmd.app->add_flag("--print-config", c.print_config, "Print the effective config as JSON and exit");
        return cmd;
    };

    auto& gen = add_command("gen", "Generate a synthetic RTM dataset and manifest");
    add_synth_flags(*gen.flags);

    auto& pre = add_command("preprocess", "Render a dataset to letterboxed false-color PNGs");
    pre.app->add_option("--data", c.data, "Dataset directory")->required();
    add_preprocess_flags(*pre.flags);

    auto& trn = add_command("train", "Train a model on the train/val split of a dataset");
    trn.app->add_option("--data", c.data, "Dataset directory")->required();
    add_model_flag(*trn.flags);
    add_preprocess_flags(*trn.flags);
    add_split_flags(*trn.flags);
    trn.flags->add("--epochs", [](CliConfig& x) -> int& { return x.train.epochs; }, "Training epochs");
    trn.flags->add("--batch-size", [](CliConfig& x) -> int& { return x.train.batch_size; }, "Mini-batch size");
    trn.flags->add("--lr", [](CliConfig& x) -> double& { return x.train.adam.lr; }, "Adam learning rate");
    trn.flags->add("--train-seed", [](CliConfig& x) -> std::uint64_t& { return x.train.seed; },
                   "Init/shuffle seed (default --seed)");

    const auto add_eval_inputs = [&](Command& cmd, bool checkpoint_required, const std::string& default_part) {
        cmd.app->add_option("--data", c.data, "Dataset directory")->required();
        auto* ck = cmd.app->add_option("--checkpoint", c.checkpoint, "Model checkpoint (.uwbm)");
        if (checkpoint_required) {
            ck->required();
        }
        cmd.app->add_option("--split", c.part, "Which part of the dataset: train, val, test or all")
            ->check(CLI::IsMember({"train", "val", "test", "all"}))
            ->default_str(default_part);
        add_preprocess_flags(*cmd.flags);
        add_split_flags(*cmd.flags);
    };

    auto& ev = add_command("eval", "Evaluate a checkpoint; writes an EvalReport JSON");
    add_eval_inputs(ev, true, "test");

    auto& bench = add_command("bench", "Time preprocess + inference per sample");
    add_eval_inputs(bench, false, "test");
    add_model_flag(*bench.flags);
    bench.flags->add("--repetitions", [](CliConfig& x) -> int& { return x.bench.repetitions; },
                     "Runs per sample, first 3 are warm-up");
    bench.flags->add("--max-samples", [](CliConfig& x) -> std::size_t& { return x.bench.max_samples; },
                     "Samples to time (0 = all)");

    auto& stream = add_command("stream", "Replay recordings as a live frame stream and print predictions");
    add_eval_inputs(stream, true, "test");
    stream.flags->add("--frame-rate", [](CliConfig& x) -> double& { return x.frame_rate; }, "Frames per second");
    stream.app->add_flag("--realtime", c.realtime, "Pace the replay in wall-clock time");
    stream.app->add_option("--format", c.format, "auto (table on a terminal, else JSON lines), json or table")
        ->check(CLI::IsMember({"auto", "json", "table"}));

    auto& gc = add_command("gradcheck", "Finite-difference check of a model's gradients");
    add_model_flag(*gc.flags);
    gc.flags->add("--samples", [](CliConfig& x) -> int& { return x.gradcheck.samples; }, "Random input samples");
    gc.flags->add("--step", [](CliConfig& x) -> double& { return x.gradcheck.h; }, "Central difference step");
    gc.flags->add("--tol", [](CliConfig& x) -> double& { return x.gradcheck.tol; }, "Max relative error");
    gc.flags->add("--params-per-layer", [](CliConfig& x) -> std::size_t& { return x.gradcheck.params_per_layer; },
                  "Parameters sampled per layer");
    gc.app->add_flag("--ops", c.ops, "Also check every layer kind in isolation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "uwbg: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    const auto subs = app.get_subcommands();
    const std::string name = subs.front()->get_name();
    Command& cmd = commands.at(name);
    try {
        CliConfig cfg;
        if (name == "gradcheck") {
            cfg.model = "cnn-mini";
        }
        if (!c.config_path.empty()) {
            std::ifstream f(c.config_path);
            if (!f) {
                throw IoError("cannot open config " + c.config_path);
            }
            cfg = nlohmann::json::parse(f).get<CliConfig>();
        }
        if (cmd.app->get_option("--seed")->count() > 0) {
            cfg.synth.seed = c.seed;
            cfg.split.seed = c.seed;
            cfg.train.seed = c.seed;
        }
        cmd.flags->apply(cfg);
        cfg.synth.validate();
        cfg.preprocess.validate();
        cfg.split.validate();
        cfg.train.validate();

        if (c.print_config) {
            out << nlohmann::json(cfg).dump(2) << '\n';
            return kExitOk;
        }
        if (name == "gen") return cmd_gen(cfg, c, out);
        if (name == "preprocess") return cmd_preprocess(cfg, c, out);
        if (name == "train") return cmd_train(cfg, c, out, err);
        if (name == "eval") return cmd_eval(cfg, c, out);
        if (name == "bench") return cmd_bench(cfg, c, out, err);
        if (name == "stream") return cmd_stream(cfg, c, out, err);
        return cmd_gradcheck(cfg, c, out);
    } catch (const ConfigError& e) {
        err << "uwbg " << name << ": config error";
        if (e.layer_index() >= 0) {
            err << " at layer " << e.layer_index();
        }
        err << ": " << e.what() << '\n';
    } catch (const FormatError& e) {
        err << "uwbg " << name << ": format error in " << e.field() << ": " << e.what() << '\n';
    } catch (const nlohmann::json::exception& e) {
        err << "uwbg " << name << ": bad JSON: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "uwbg " << name << ": " << e.what() << '\n';
    }
    return kExitValidation;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv{"uwbg"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace uwbg::cli
