#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fuse/dataset.hpp"
#include "fuse/io.hpp"
#include "fuse/metrics.hpp"

using namespace fuse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

#ifndef FUSE_CLI_PATH
#define FUSE_CLI_PATH "fuse"
#endif

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const fs::path& work) {
    const auto out_file = work / "cli_output.txt";
    const std::string cmd = std::string(FUSE_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    result.output = buf.str();
    return result;
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() /
              ("fuse_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(dir);
    }
    ~Workspace() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string file(const std::string& name, const std::string& content) const {
        const auto p = dir / name;
        std::ofstream out(p);
        out << content;
        return p.string();
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

const char* kTinySpec = R"({
  "n_users": 12, "n_items": 160, "n_channels": 3,
  "depth": 12, "truth_size": 6, "dim": 4,
  "channels": [{"quality": 0.8}, {"quality": 0.3}, {"quality": 0.05}],
  "master_seed": 5
})";

json read_json(const std::string& path) {
    return json::parse(io::read_text(path));
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("synth then eval round-trips through the binary") {
    Workspace ws;
    const auto spec = ws.file("spec.json", kTinySpec);
    const auto synth = run_cli("synth --spec " + spec + " --out " + ws.path("data"), ws.dir);
    CHECK(synth.exit_code == 0);
    CHECK(fs::exists(ws.path("data/manifest.json")));
    CHECK(fs::exists(ws.path("data/truth.jsonl")));
    CHECK(fs::exists(ws.path("data/embeddings.jsonl")));

    const auto weights = ws.file("w.json", R"({"weights": [0.5, 0.3, 0.2]})");
    const auto eval = run_cli("eval --data " + ws.path("data/manifest.json") + " --weights " +
                                  weights + " --L 10 --out " + ws.path("out"),
                              ws.dir);
    CHECK(eval.exit_code == 0);

    // CLI report must equal the library evaluation exactly
    const auto loaded = load_dataset_manifest(ws.path("data/manifest.json"));
    WeightVector w;
    w.w = {0.5, 0.3, 0.2};
    const auto report = read_json(ws.path("out/eval_report.json"));
    CHECK(report["mean"]["recall"].get<double>() ==
          evaluate_objective(loaded.dataset, w, 10, Metric::recall));
    CHECK(report["mean"]["precision"].get<double>() ==
          evaluate_objective(loaded.dataset, w, 10, Metric::precision));
    CHECK(report["config"]["seed"].is_number());
}

TEST_CASE("unnormalized weights are rejected with exit code 1") {
    Workspace ws;
    const auto spec = ws.file("spec.json", kTinySpec);
    REQUIRE(run_cli("synth --spec " + spec + " --out " + ws.path("data"), ws.dir).exit_code == 0);
    const auto weights = ws.file("bad.json", R"({"weights": [0.5, 0.2, 0.1]})");
    const auto eval = run_cli("eval --data " + ws.path("data/manifest.json") + " --weights " +
                                  weights + " --L 10 --out " + ws.path("out"),
                              ws.dir);
    CHECK(eval.exit_code == 1);
    CHECK(eval.output.find("sum") != std::string::npos);
}

TEST_CASE("unknown flags exit with usage") {
    Workspace ws;
    const auto r = run_cli("eval --no-such-flag", ws.dir);
    CHECK(r.exit_code == 1);
}

TEST_CASE("optimize cem writes weights, history, and checkpoint") {
    Workspace ws;
    const auto spec = ws.file("spec.json", kTinySpec);
    REQUIRE(run_cli("synth --spec " + spec + " --out " + ws.path("data"), ws.dir).exit_code == 0);
    const auto cfg = ws.file("cfg.json", R"({
        "L": 10, "seed": 3,
        "cem": {"samples": 16, "elite_fraction": 0.25, "max_iters": 5, "patience": 5}
    })");
    const auto r = run_cli("optimize cem --data " + ws.path("data/manifest.json") + " --config " +
                               cfg + " --out " + ws.path("cem"),
                           ws.dir);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(ws.path("cem/weights.json")));
    CHECK(fs::exists(ws.path("cem/cem_history.csv")));
    CHECK(fs::exists(ws.path("cem/cem_checkpoint.json")));

    const auto doc = io::parse_weights_json(io::read_text(ws.path("cem/weights.json")));
    CHECK(doc.weights.size() == 3);
    CHECK(doc.source == "cem");

    SUBCASE("bayes refines from the checkpoint") {
        const auto bcfg = ws.file("bcfg.json", R"({
            "L": 10, "seed": 4,
            "bayes": {"iterations": 3, "n_init": 3, "n_candidates": 64}
        })");
        const auto b = run_cli("optimize bayes --data " + ws.path("data/manifest.json") +
                                   " --config " + bcfg + " --cem-checkpoint " +
                                   ws.path("cem/cem_checkpoint.json") + " --out " + ws.path("bo"),
                               ws.dir);
        CHECK(b.exit_code == 0);
        CHECK(fs::exists(ws.path("bo/weights.json")));
        CHECK(fs::exists(ws.path("bo/bo_trace.json")));
        const auto breport = read_json(ws.path("bo/bayes_report.json"));
        const auto creport = read_json(ws.path("cem/cem_report.json"));
        CHECK(breport["best_score"].get<double>() >= 0.0);
        CHECK(creport["weights_score"].get<double>() <= 1.0);
    }
}

TEST_CASE("optimize pg trains and exports personalized weights") {
    Workspace ws;
    const auto spec = ws.file("spec.json", kTinySpec);
    REQUIRE(run_cli("synth --spec " + spec + " --out " + ws.path("data"), ws.dir).exit_code == 0);
    const auto cfg = ws.file("cfg.json", R"({
        "L": 10, "seed": 6,
        "pg": {"epochs": 2, "batch_size": 6, "lambda": 0.5, "top_m": 3, "hidden": 6,
               "w_global": [0.4, 0.35, 0.25]}
    })");
    const auto r = run_cli("optimize pg --data " + ws.path("data/manifest.json") + " --config " +
                               cfg + " --out " + ws.path("pg"),
                           ws.dir);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(ws.path("pg/theta.json")));
    CHECK(fs::exists(ws.path("pg/personalized_weights.jsonl")));

    SUBCASE("personalized file evaluates through the CLI") {
        const auto e = run_cli("eval --data " + ws.path("data/manifest.json") +
                                   " --personalized " + ws.path("pg/personalized_weights.jsonl") +
                                   " --L 10 --out " + ws.path("peval"),
                               ws.dir);
        CHECK(e.exit_code == 0);
        const auto loaded = load_dataset_manifest(ws.path("data/manifest.json"));
        const auto pw = io::parse_personalized_jsonl(
            io::read_text(ws.path("pg/personalized_weights.jsonl")), loaded.dataset);
        const auto report = read_json(ws.path("peval/eval_report.json"));
        CHECK(report["mean"]["recall"].get<double>() ==
              evaluate_objective(loaded.dataset, pw, 10, Metric::recall));
    }
}

TEST_CASE("config with two optimizer sections is rejected") {
    Workspace ws;
    const auto spec = ws.file("spec.json", kTinySpec);
    REQUIRE(run_cli("synth --spec " + spec + " --out " + ws.path("data"), ws.dir).exit_code == 0);
    const auto cfg = ws.file("cfg.json", R"({
        "L": 10,
        "cem": {"samples": 16}, "pg": {"epochs": 1}
    })");
    const auto r = run_cli("optimize cem --data " + ws.path("data/manifest.json") + " --config " +
                               cfg + " --out " + ws.path("x"),
                           ws.dir);
    CHECK(r.exit_code == 1);
}

TEST_CASE("analyze reports symmetric diagnostics") {
    Workspace ws;
    const auto spec = ws.file("spec.json", kTinySpec);
    REQUIRE(run_cli("synth --spec " + spec + " --out " + ws.path("data"), ws.dir).exit_code == 0);
    const auto r = run_cli("analyze --data " + ws.path("data/manifest.json") + " --L 10 --csv" +
                               " --out " + ws.path("an"),
                           ws.dir);
    CHECK(r.exit_code == 0);
    const auto report = read_json(ws.path("an/analyze_report.json"));
    const auto jaccard = report["jaccard"];
    REQUIRE(jaccard.size() == 3);
    for (std::size_t a = 0; a < 3; ++a) {
        CHECK(jaccard[a][a].get<double>() == 1.0);
        for (std::size_t b = 0; b < 3; ++b) {
            CHECK(jaccard[a][b].get<double>() == jaccard[b][a].get<double>());
        }
    }
    CHECK(report["item_coverage"]["merged"].get<double>() > 0.0);
    CHECK(fs::exists(ws.path("an/jaccard.csv")));
    CHECK(fs::exists(ws.path("an/rbo.csv")));
}

TEST_CASE("thread count does not change results") {
    Workspace ws;
    const auto spec = ws.file("spec.json", kTinySpec);
    REQUIRE(run_cli("synth --spec " + spec + " --out " + ws.path("data"), ws.dir).exit_code == 0);
    const auto weights = ws.file("w.json", R"({"weights": [0.4, 0.35, 0.25]})");
    REQUIRE(run_cli("eval --data " + ws.path("data/manifest.json") + " --weights " + weights +
                        " --L 10 --threads 1 --out " + ws.path("t1"),
                    ws.dir)
                .exit_code == 0);
    REQUIRE(run_cli("eval --data " + ws.path("data/manifest.json") + " --weights " + weights +
                        " --L 10 --threads 8 --out " + ws.path("t8"),
                    ws.dir)
                .exit_code == 0);
    CHECK(io::read_text(ws.path("t1/eval_report.json")) ==
          io::read_text(ws.path("t8/eval_report.json")));
}

} // TEST_SUITE
