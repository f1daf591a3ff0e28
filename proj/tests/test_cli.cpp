#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "uwbg/cli.hpp"
#include "uwbg/eval.hpp"
#include "uwbg/synth.hpp"

using namespace uwbg;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t count_ext(const fs::path& dir, const std::string& ext)
{
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
    return n;
}

} // namespace

TEST_CASE("usage errors exit 2")
{
    CHECK(run({}).code == 2);
    CHECK(run({"fly"}).code == 2);
    CHECK(run({"gen", "--bogus"}).code == 2);
    CHECK(run({"eval"}).code == 2); // --data and --checkpoint missing
    CHECK(run({"gen", "--samples", "ten"}).code == 2);
    const auto help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("gradcheck") != std::string::npos);
}

TEST_CASE("gen writes 16 x samples recordings")
{
    test::TempDir dir("cli_gen");
    const auto r = run({"gen", "--samples", "10", "--seed", "7", "--out", (dir / "d").string()});
    CHECK(r.code == 0);
    CHECK(count_ext(dir / "d", ".rtm") == 160);
    CHECK(fs::exists(dir / "d" / "manifest.json"));
    const auto m = synth::load_manifest(dir / "d" / "manifest.json");
    CHECK(m.config.seed == 7);
    CHECK(m.config.samples_per_subclass == 10);
}

TEST_CASE("config files: print, feed back, override, reject unknown keys")
{
    test::TempDir dir("cli_cfg");
    const auto printed = run({"train", "--data", "x", "--seed", "9", "--epochs", "4", "--print-config"});
    REQUIRE(printed.code == 0);
    const auto j = nlohmann::json::parse(printed.out);
    CHECK(j["train"]["epochs"] == 4);
    CHECK(j["train"]["seed"] == 9);
    CHECK(j["split"]["seed"] == 9);
    CHECK(j["synth"]["seed"] == 9);

    std::ofstream(dir / "c.json") << printed.out;
    const auto again = run({"train", "--data", "x", "--config", (dir / "c.json").string(), "--print-config"});
    REQUIRE(again.code == 0);
    CHECK(nlohmann::json::parse(again.out) == j);

    const auto over = run({"train", "--data", "x", "--config", (dir / "c.json").string(), "--epochs", "2",
                           "--print-config"});
    CHECK(nlohmann::json::parse(over.out)["train"]["epochs"] == 2);

    std::ofstream(dir / "gen.json") << R"({"synth": {"samples_per_subclass": 3, "seed": 4}})";
    CHECK(run({"gen", "--config", (dir / "gen.json").string(), "--samples", "2", "--out", (dir / "g").string()})
              .code == 0);
    CHECK(count_ext(dir / "g", ".rtm") == 32);

    std::ofstream(dir / "bad.json") << R"({"synth": {"samples": 3}})";
    const auto bad = run({"gen", "--config", (dir / "bad.json").string(), "--out", (dir / "b").string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("samples") != std::string::npos);

    std::ofstream(dir / "top.json") << R"({"optimizer": "sgd"})";
    CHECK(run({"gen", "--config", (dir / "top.json").string()}).code == 1);

    CHECK(run({"gen", "--noise-sigma", "-1", "--out", (dir / "n").string()}).code == 1);
}

TEST_CASE("gradcheck")
{
    const auto ok = run({"gradcheck", "--model", "cnn-mini", "--samples", "2", "--params-per-layer", "30"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("layer 0 (conv2d)") != std::string::npos);
    CHECK(ok.out.find("PASS") != std::string::npos);

    const auto strict = run({"gradcheck", "--model", "cnn-mini", "--samples", "2", "--params-per-layer", "5",
                             "--tol", "1e-30"});
    CHECK(strict.code == 1);
    CHECK(strict.out.find("FAIL") != std::string::npos);
}

TEST_CASE("train, eval, bench, stream and preprocess")
{
    test::TempDir dir("cli_run");
    const auto data = (dir / "data").string();
    REQUIRE(run({"gen", "--samples", "4", "--seed", "3", "--out", data}).code == 0);

    const auto png = run({"preprocess", "--data", data, "--out", (dir / "png").string()});
    CHECK(png.code == 0);
    CHECK(count_ext(dir / "png", ".png") == 64);
    CHECK(fs::exists(dir / "png" / "15_0003.png"));

    for (const char* run_dir : {"r1", "r2"}) {
        const auto t = run({"train", "--data", data, "--model", "cnn-mini", "--epochs", "1", "--seed", "5", "--out",
                            (dir / run_dir).string()});
        REQUIRE(t.code == 0);
    }
    CHECK(test::read_file(dir / "r1" / "model.uwbm") == test::read_file(dir / "r2" / "model.uwbm"));

    const auto ck = (dir / "r1" / "model.uwbm").string();
    const auto e1 = run({"eval", "--data", data, "--checkpoint", ck, "--seed", "5"});
    const auto e2 = run({"eval", "--data", data, "--checkpoint", ck, "--seed", "5", "--out",
                         (dir / "rep" / "eval.json").string()});
    REQUIRE(e1.code == 0);
    REQUIRE(e2.code == 0);
    const auto j1 = nlohmann::json::parse(e1.out);
    std::ifstream f(dir / "rep" / "eval.json");
    const auto j2 = nlohmann::json::parse(f);
    for (const char* k : {"subclass_accuracy", "superclass_accuracy", "confusion_subclass", "dataset_fingerprint"}) {
        CHECK(j1[k] == j2[k]);
    }
    CHECK(j1["samples"] == 16 * eval::split_counts(4, eval::SplitSpec{}).test);
    CHECK(j1["superclass_accuracy"].get<double>() >= j1["subclass_accuracy"].get<double>());

    const auto b = run({"bench", "--data", data, "--checkpoint", ck, "--repetitions", "10", "--max-samples", "2"});
    CHECK(b.code == 0);
    const auto bj = nlohmann::json::parse(b.out);
    CHECK(bj["timed_runs_per_sample"] == 7);
    CHECK(bj["realtime_ok"] == true);

    const auto s = run({"stream", "--data", data, "--checkpoint", ck, "--split", "all", "--format", "json"});
    CHECK(s.code == 0);
    std::istringstream lines(s.out);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        CHECK(nlohmann::json::parse(line).contains("confidence"));
        ++n;
    }
    CHECK(n == 64);
    const auto table = run({"stream", "--data", data, "--checkpoint", ck, "--format", "table"});
    CHECK(table.code == 0);
    CHECK(table.out.find("confidence") != std::string::npos);

    CHECK(run({"eval", "--data", data, "--checkpoint", (dir / "nope.uwbm").string()}).code == 1);
    CHECK(run({"eval", "--data", (dir / "nodata").string(), "--checkpoint", ck}).code == 1);
}
