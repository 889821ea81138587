// fuse: merge ranked item lists from multiple retrieval channels and
// optimize the per-channel merge weights (CEM, BayesOpt refinement, or a
// personalized policy-gradient model).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fuse/bayesopt.hpp"
#include "fuse/cem.hpp"
#include "fuse/dataset.hpp"
#include "fuse/dirichlet.hpp"
#include "fuse/fusion.hpp"
#include "fuse/io.hpp"
#include "fuse/metrics.hpp"
#include "fuse/policy.hpp"
#include "fuse/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataArgs {
    std::string manifest;
    std::vector<std::string> channels;
    std::string truth;
    std::string embeddings;
    bool strict = false;
    bool pad = false;
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "fuse_out";
    int budget = 0;           // L
    std::string metric = "";  // empty = config/default
    std::int64_t seed = -1;   // -1 = config/default
    int threads = 0;          // 0 = config/env/1
    DataArgs data;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    json cfg;
    try {
        cfg = json::parse(fuse::io::read_text(path));
    } catch (const json::exception& e) {
        throw fuse::ValidationError(std::string("config file: invalid JSON: ") + e.what());
    }
    if (!cfg.is_object()) throw fuse::ValidationError("config file must hold a JSON object");
    return cfg;
}

int env_threads() {
    if (const char* env = std::getenv("FUSE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

/// Resolution order: flag > config > default.
struct Resolved {
    json config;       // raw config file contents
    json effective;    // what reports embed
    std::int32_t budget = 200;
    fuse::Metric metric = fuse::Metric::recall;
    std::uint64_t seed = 0;
    int threads = 1;
    std::optional<fuse::WeightBounds> bounds;
};

Resolved resolve_common(const CommonArgs& args) {
    Resolved r;
    r.config = load_config(args.config_path);

    r.budget = args.budget > 0 ? args.budget : r.config.value("L", 200);
    if (r.budget < 1) throw fuse::ValidationError("L must be >= 1");

    std::string metric = !args.metric.empty() ? args.metric
                                              : r.config.value("metric", std::string("recall"));
    r.metric = fuse::metric_from_string(metric);

    r.seed = args.seed >= 0 ? static_cast<std::uint64_t>(args.seed)
                            : r.config.value("seed", std::uint64_t{0});

    if (args.threads > 0) {
        r.threads = args.threads;
    } else if (r.config.contains("threads")) {
        r.threads = r.config["threads"].get<int>();
    } else {
        r.threads = env_threads();
    }
    if (r.threads < 1) throw fuse::ValidationError("threads must be >= 1");

    if (r.config.contains("bounds") && !r.config["bounds"].is_null()) {
        r.bounds = fuse::WeightBounds{r.config["bounds"].value("w_min", 0.0),
                                      r.config["bounds"].value("w_max", 1.0)};
    }

    r.effective["L"] = r.budget;
    r.effective["metric"] = fuse::metric_name(r.metric);
    r.effective["seed"] = r.seed;
    if (r.bounds) {
        r.effective["bounds"] = {{"w_min", r.bounds->w_min}, {"w_max", r.bounds->w_max}};
    }
    return r;
}

fuse::LoadedDataset load_data(const CommonArgs& args, const json& config, json& effective) {
    DataArgs d = args.data;
    if (d.manifest.empty() && d.channels.empty() && config.contains("data")) {
        const auto& dc = config["data"];
        d.manifest = dc.value("manifest", std::string{});
        if (dc.contains("channels")) d.channels = dc["channels"].get<std::vector<std::string>>();
        d.truth = dc.value("truth", std::string{});
        d.embeddings = dc.value("embeddings", std::string{});
        d.strict = dc.value("strict", d.strict);
        d.pad = dc.value("pad", d.pad);
    }

    fuse::LoadOptions opts;
    opts.strict_users = d.strict;

    fuse::LoadedDataset loaded;
    json data_desc;
    if (!d.manifest.empty()) {
        loaded = fuse::load_dataset_manifest(d.manifest, opts);
        data_desc["manifest"] = d.manifest;
    } else if (!d.channels.empty()) {
        if (d.truth.empty()) throw fuse::ValidationError("--truth is required with --channel");
        std::optional<std::string> emb;
        if (!d.embeddings.empty()) emb = d.embeddings;
        loaded = fuse::load_dataset(d.channels, d.truth, emb, opts);
        data_desc["channels"] = d.channels;
        data_desc["truth"] = d.truth;
        if (!d.embeddings.empty()) data_desc["embeddings"] = d.embeddings;
    } else {
        throw fuse::ValidationError("no dataset given: pass --data manifest.json or --channel files");
    }
    data_desc["strict"] = d.strict;
    data_desc["pad"] = d.pad;
    effective["data"] = std::move(data_desc);

    if (d.pad) {
        loaded.dataset = fuse::pad_channels(std::move(loaded.dataset),
                                            fuse::popularity_fallback(loaded.dataset));
    }
    for (const auto& warning : loaded.report.warnings) {
        std::cerr << "warning: " << warning << '\n';
    }
    return loaded;
}

std::vector<std::string> channel_names(const fuse::Dataset& ds) {
    std::vector<std::string> names;
    names.reserve(ds.num_channels());
    for (const auto& ch : ds.channels) names.push_back(ch.channel_name);
    return names;
}

json weight_table(const fuse::Dataset& ds, const fuse::WeightVector& w) {
    json table = json::array();
    for (std::size_t k = 0; k < w.size(); ++k) {
        table.push_back({{"channel", ds.channels[k].channel_name}, {"weight", w[k]}});
    }
    return table;
}

/// Fixed evaluation subsample: the first `count` users with ground truth
/// after a seeded shuffle. Empty when count covers everyone.
std::vector<fuse::UserIndex> eval_subsample(const fuse::Dataset& ds, int count,
                                            std::uint64_t seed) {
    std::vector<fuse::UserIndex> pool;
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        if (!ds.truth.relevant[u].empty()) pool.push_back(static_cast<fuse::UserIndex>(u));
    }
    if (count <= 0 || static_cast<std::size_t>(count) >= pool.size()) return {};
    fuse::RngStream rng(fuse::derive_seed(seed, 0x5AB5u));
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(count));
    std::sort(pool.begin(), pool.end());
    return pool;
}

void write_report(const std::string& out_dir, const std::string& name, const json& report) {
    fs::create_directories(out_dir);
    fuse::io::save_text((fs::path(out_dir) / name).string(), report.dump(2) + "\n");
}

json eval_report_json(const fuse::Dataset& ds, const fuse::EvalReport& report, bool per_user) {
    json j;
    j["L"] = report.budget;
    j["user_count"] = report.user_count;
    j["mean"] = {{"precision", report.mean_precision},
                 {"recall", report.mean_recall},
                 {"f1", report.mean_f1}};
    if (per_user) {
        json rows = json::array();
        for (std::size_t u = 0; u < report.per_user.size(); ++u) {
            if (!report.per_user[u]) continue;
            rows.push_back({{"user", ds.users[u]},
                            {"precision", report.per_user[u]->precision},
                            {"recall", report.per_user[u]->recall},
                            {"f1", report.per_user[u]->f1}});
        }
        j["per_user"] = std::move(rows);
    }
    return j;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const std::string& spec_path, const std::string& out_dir, std::int64_t seed,
              int threads) {
    auto spec = fuse::synth::spec_from_json_file(spec_path);
    if (seed >= 0) spec.master_seed = static_cast<std::uint64_t>(seed);
    const int n_threads = threads > 0 ? threads : env_threads();
    const auto ds = fuse::synth::generate_benchmark(spec, n_threads);
    fuse::save_dataset(ds, out_dir);

    json report;
    report["config"] = json::parse(fuse::synth::spec_to_json(spec));
    report["users"] = ds.num_users();
    report["items"] = ds.item_universe_size();
    report["channels"] = channel_names(ds);
    report["depth"] = ds.depth();
    write_report(out_dir, "synth_report.json", report);
    std::cout << "wrote dataset (" << ds.num_users() << " users, " << ds.item_universe_size()
              << " items, " << ds.num_channels() << " channels) to " << out_dir << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& weights_path,
             const std::string& personalized_path, bool per_user, const std::string& export_merged) {
    auto resolved = resolve_common(args);
    auto loaded = load_data(args, resolved.config, resolved.effective);
    const auto& ds = loaded.dataset;

    fuse::EvalReport report;
    json source;
    if (!personalized_path.empty()) {
        const auto pw = fuse::io::parse_personalized_jsonl(fuse::io::read_text(personalized_path), ds);
        report = fuse::evaluate(ds, pw, resolved.budget, resolved.threads);
        source = {{"personalized", personalized_path}};
        if (!export_merged.empty()) {
            fuse::io::save_text(export_merged,
                                fuse::io::merged_jsonl(fuse::merge_all(ds, pw, resolved.budget,
                                                                       resolved.threads),
                                                       ds));
        }
    } else if (!weights_path.empty()) {
        auto doc = fuse::io::parse_weights_json(fuse::io::read_text(weights_path));
        if (doc.weights.size() != ds.num_channels()) {
            throw fuse::ValidationError("weights file has " + std::to_string(doc.weights.size()) +
                                        " entries for " + std::to_string(ds.num_channels()) +
                                        " channels");
        }
        if (resolved.bounds) {
            doc.weights.bounds = resolved.bounds;
            doc.weights.validate();
        }
        report = fuse::evaluate(ds, doc.weights, resolved.budget, resolved.threads);
        source = {{"weights", weights_path}, {"optimizer", doc.source}};
        if (!export_merged.empty()) {
            fuse::io::save_text(export_merged,
                                fuse::io::merged_jsonl(fuse::merge_all(ds, doc.weights,
                                                                       resolved.budget,
                                                                       resolved.threads),
                                                       ds));
        }
    } else {
        throw fuse::ValidationError("eval needs --weights or --personalized");
    }

    json j = eval_report_json(ds, report, per_user);
    j["config"] = resolved.effective;
    j["source"] = std::move(source);
    write_report(args.out_dir, "eval_report.json", j);
    std::cout << "P@" << resolved.budget << " = " << report.mean_precision << "  R@"
              << resolved.budget << " = " << report.mean_recall << "  F1@" << resolved.budget
              << " = " << report.mean_f1 << "  (" << report.user_count << " users)\n";
    return 0;
}

void require_single_optimizer_section(const json& config, const std::string& which) {
    int present = 0;
    for (const char* key : {"cem", "bayes", "pg"}) present += config.contains(key);
    if (present > 1) {
        throw fuse::ValidationError("config must hold exactly one optimizer section, found " +
                                    std::to_string(present));
    }
    if (present == 1 && !config.contains(which)) {
        throw fuse::ValidationError("config has an optimizer section that does not match \"" +
                                    which + "\"");
    }
}

int cmd_optimize_cem(const CommonArgs& args, const std::string& resume_path) {
    auto resolved = resolve_common(args);
    require_single_optimizer_section(resolved.config, "cem");
    auto loaded = load_data(args, resolved.config, resolved.effective);
    const auto& ds = loaded.dataset;

    fuse::cem::CemConfig cfg;
    const json section = resolved.config.value("cem", json::object());
    cfg.samples_per_iter = section.value("samples", 60);
    cfg.elite_fraction = section.value("elite_fraction", 0.1);
    cfg.eta1 = section.value("eta1", 0.1);
    cfg.eta1_decay = section.value("eta1_decay", 0.95);
    cfg.patience = section.value("patience", 5);
    cfg.max_iters = section.value("max_iters", 100);
    if (section.contains("alpha0")) {
        cfg.alpha0 = fuse::dirichlet::DirichletParams::clamped(
            section["alpha0"].get<std::vector<double>>());
    }
    cfg.metric = resolved.metric;
    cfg.master_seed = resolved.seed;
    cfg.bounds = resolved.bounds;
    cfg.eval_users = eval_subsample(ds, section.value("eval_sample", 0), resolved.seed);

    fuse::cem::CemState state;
    if (!resume_path.empty()) state = fuse::cem::load_checkpoint(resume_path);

    const auto result = fuse::cem::run_cem(ds, cfg, resolved.budget, std::move(state),
                                           resolved.threads);

    fs::create_directories(args.out_dir);
    fuse::io::save_text((fs::path(args.out_dir) / "weights.json").string(),
                        fuse::io::weights_json({result.weights, channel_names(ds), "cem"}));
    fuse::io::save_text((fs::path(args.out_dir) / "cem_history.csv").string(),
                        fuse::cem::history_csv(result.state));
    fuse::cem::save_checkpoint(result.state,
                               (fs::path(args.out_dir) / "cem_checkpoint.json").string());

    json report;
    report["config"] = resolved.effective;
    report["config"]["cem"] = {{"samples", cfg.samples_per_iter},
                               {"elite_fraction", cfg.elite_fraction},
                               {"eta1", cfg.eta1},
                               {"eta1_decay", cfg.eta1_decay},
                               {"patience", cfg.patience},
                               {"max_iters", cfg.max_iters}};
    report["iterations"] = result.state.iter;
    report["best_sample_score"] = result.state.best_score;
    report["weights_score"] = result.state.best_alpha_score;
    report["best_alpha"] = result.state.best_alpha.alpha;
    report["weights"] = result.weights.w;
    report["weight_table"] = weight_table(ds, result.weights);
    write_report(args.out_dir, "cem_report.json", report);
    std::cout << "cem: " << fuse::metric_name(resolved.metric) << " = "
              << result.state.best_alpha_score << " (best sampled "
              << result.state.best_score << ") after " << result.state.iter << " iterations\n";
    return 0;
}

int cmd_optimize_bayes(const CommonArgs& args, const std::string& cem_checkpoint) {
    auto resolved = resolve_common(args);
    require_single_optimizer_section(resolved.config, "bayes");
    auto loaded = load_data(args, resolved.config, resolved.effective);
    const auto& ds = loaded.dataset;

    const json section = resolved.config.value("bayes", json::object());
    fuse::bayesopt::BoConfig cfg;
    cfg.iterations = section.value("iterations", 10);
    cfg.n_init = section.value("n_init", 5);
    cfg.n_candidates = section.value("n_candidates", 2048);
    cfg.metric = resolved.metric;
    cfg.master_seed = resolved.seed;
    cfg.eval_users = eval_subsample(ds, section.value("eval_sample", 0), resolved.seed);

    fuse::dirichlet::DirichletParams start;
    if (!cem_checkpoint.empty()) {
        start = fuse::cem::load_checkpoint(cem_checkpoint).best_alpha;
    } else if (section.contains("start_alpha")) {
        start = fuse::dirichlet::DirichletParams::clamped(
            section["start_alpha"].get<std::vector<double>>());
    } else {
        throw fuse::ValidationError(
            "bayes needs a starting concentration: --cem-checkpoint or bayes.start_alpha");
    }
    if (start.size() != ds.num_channels()) {
        throw fuse::ValidationError("starting concentration does not match channel count");
    }

    const auto result = fuse::bayesopt::run_bayesopt(ds, start, cfg, resolved.budget,
                                                     resolved.threads);

    fs::create_directories(args.out_dir);
    fuse::io::save_text((fs::path(args.out_dir) / "weights.json").string(),
                        fuse::io::weights_json({result.weights, channel_names(ds), "bayesopt"}));
    fuse::io::save_text((fs::path(args.out_dir) / "bo_trace.json").string(),
                        fuse::io::bo_trace_json(result));

    json report;
    report["config"] = resolved.effective;
    report["config"]["bayes"] = {{"iterations", cfg.iterations},
                                 {"n_init", cfg.n_init},
                                 {"n_candidates", cfg.n_candidates},
                                 {"start_alpha", start.alpha}};
    report["best_score"] = result.best_score;
    report["beta"] = result.beta.alpha;
    report["weights"] = result.weights.w;
    report["weight_table"] = weight_table(ds, result.weights);
    write_report(args.out_dir, "bayes_report.json", report);
    std::cout << "bayesopt: best " << fuse::metric_name(resolved.metric) << " = "
              << result.best_score << " over " << result.trace.size() << " evaluations\n";
    return 0;
}

int cmd_optimize_pg(const CommonArgs& args, const std::string& global_weights_path) {
    auto resolved = resolve_common(args);
    require_single_optimizer_section(resolved.config, "pg");
    auto loaded = load_data(args, resolved.config, resolved.effective);
    const auto& ds = loaded.dataset;

    const json section = resolved.config.value("pg", json::object());
    fuse::policy::PgConfig cfg;
    cfg.eta2 = section.value("eta2", 1e-4);
    cfg.momentum = section.value("momentum", 0.9);
    cfg.lambda = section.value("lambda", 1.0);
    cfg.samples_per_user = section.value("samples_per_user", 1);
    cfg.batch_size = section.value("batch_size", 64);
    cfg.epochs = section.value("epochs", 20);
    cfg.baseline_enabled = section.value("baseline", true);
    cfg.top_m = section.value("top_m", 10);
    cfg.hidden = section.value("hidden", 64);
    cfg.delta_max = section.value("delta_max", 10.0);
    cfg.epsilon = section.value("epsilon", 1e-6);
    cfg.reward_metric = resolved.metric;
    cfg.master_seed = resolved.seed;

    if (!global_weights_path.empty()) {
        cfg.w_global = fuse::io::parse_weights_json(fuse::io::read_text(global_weights_path)).weights;
    } else if (section.contains("w_global")) {
        cfg.w_global = fuse::WeightVector::normalized(section["w_global"].get<std::vector<double>>());
    } else if (section.contains("weights_file")) {
        cfg.w_global = fuse::io::parse_weights_json(
                           fuse::io::read_text(section["weights_file"].get<std::string>()))
                           .weights;
    }

    std::vector<fuse::policy::EpochStats> log;
    const auto theta = fuse::policy::train_pg(ds, cfg, resolved.budget, resolved.threads, nullptr,
                                              &log);
    const auto pw = fuse::policy::infer_weights(theta, ds, resolved.threads);
    const auto eval = fuse::evaluate(ds, pw, resolved.budget, resolved.threads);

    fs::create_directories(args.out_dir);
    fuse::policy::save_params(theta, (fs::path(args.out_dir) / "theta.json").string());
    fuse::io::save_text((fs::path(args.out_dir) / "personalized_weights.jsonl").string(),
                        fuse::io::personalized_jsonl(pw, ds));

    json report;
    report["config"] = resolved.effective;
    report["config"]["pg"] = {{"eta2", cfg.eta2},
                              {"momentum", cfg.momentum},
                              {"lambda", cfg.lambda},
                              {"samples_per_user", cfg.samples_per_user},
                              {"batch_size", cfg.batch_size},
                              {"epochs", cfg.epochs},
                              {"baseline", cfg.baseline_enabled},
                              {"top_m", cfg.top_m},
                              {"hidden", cfg.hidden},
                              {"delta_max", cfg.delta_max},
                              {"epsilon", cfg.epsilon},
                              {"w_global", cfg.w_global.w}};
    json epochs = json::array();
    for (const auto& e : log) {
        epochs.push_back({{"epoch", e.epoch},
                          {"loss", e.mean_loss},
                          {"mean_reward", e.mean_reward},
                          {"validation", e.validation_score}});
    }
    report["epochs"] = std::move(epochs);
    report["validation"] = {{"precision", eval.mean_precision},
                            {"recall", eval.mean_recall},
                            {"f1", eval.mean_f1}};
    {
        // mean personalized weight per channel
        std::vector<double> mean_w(ds.num_channels(), 0.0);
        for (const auto& w : pw.per_user) {
            for (std::size_t k = 0; k < w.size(); ++k) mean_w[k] += w[k];
        }
        for (double& x : mean_w) x /= static_cast<double>(pw.per_user.size());
        fuse::WeightVector mw;
        mw.w = std::move(mean_w);
        report["mean_weight_table"] = weight_table(ds, mw);
    }
    write_report(args.out_dir, "pg_report.json", report);
    std::cout << "pg: validation recall = " << eval.mean_recall << " over " << eval.user_count
              << " users\n";
    return 0;
}

int cmd_analyze(const CommonArgs& args, double rbo_p, std::int64_t rbo_depth,
                const std::string& weights_path, bool write_csv) {
    auto resolved = resolve_common(args);
    auto loaded = load_data(args, resolved.config, resolved.effective);
    const auto& ds = loaded.dataset;

    const auto validation = fuse::validate_dataset(ds);
    for (const auto& issue : validation.issues) {
        if (issue.severity == fuse::ValidationIssue::Severity::warning) {
            std::cerr << "warning: " << issue.message << '\n';
        }
    }

    const auto jaccard = fuse::jaccard_matrix(ds, resolved.threads);
    const std::size_t depth = rbo_depth > 0 ? static_cast<std::size_t>(rbo_depth) : 0;
    const auto rbo = fuse::rbo_matrix(ds, rbo_p, depth);

    fuse::WeightVector coverage_weights = fuse::WeightVector::uniform(ds.num_channels());
    std::string coverage_source = "equal";
    if (!weights_path.empty()) {
        coverage_weights = fuse::io::parse_weights_json(fuse::io::read_text(weights_path)).weights;
        coverage_source = weights_path;
    }
    const auto merged = fuse::merge_all(ds, coverage_weights, resolved.budget, resolved.threads);
    const double coverage = fuse::item_coverage(merged, ds.item_universe_size());

    json per_channel = json::array();
    for (std::size_t k = 0; k < ds.num_channels(); ++k) {
        std::vector<double> one_hot(ds.num_channels(), 0.0);
        one_hot[k] = 1.0;
        fuse::WeightVector w;
        w.w = std::move(one_hot);
        const auto single = fuse::merge_all(ds, w, resolved.budget, resolved.threads);
        per_channel.push_back({{"channel", ds.channels[k].channel_name},
                               {"coverage", fuse::item_coverage(single, ds.item_universe_size())}});
    }

    json report;
    report["config"] = resolved.effective;
    report["channel_names"] = channel_names(ds);
    report["jaccard"] = jaccard;
    report["rbo"] = rbo;
    report["rbo_p"] = rbo_p;
    report["rbo_depth"] = depth == 0 ? json(nullptr) : json(depth);
    report["item_coverage"] = {{"merged", coverage},
                               {"weights", coverage_source},
                               {"per_channel", per_channel}};
    write_report(args.out_dir, "analyze_report.json", report);

    if (write_csv) {
        fuse::io::save_text((fs::path(args.out_dir) / "jaccard.csv").string(),
                            fuse::io::matrix_csv(jaccard, channel_names(ds)));
        fuse::io::save_text((fs::path(args.out_dir) / "rbo.csv").string(),
                            fuse::io::matrix_csv(rbo, channel_names(ds)));
    }
    std::cout << "analyze: item coverage " << coverage << " across "
              << ds.num_channels() << " channels\n";
    return 0;
}

void add_data_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--data", args.data.manifest, "dataset manifest.json");
    cmd->add_option("--channel", args.data.channels, "channel ranking JSONL (repeatable)");
    cmd->add_option("--truth", args.data.truth, "ground-truth JSONL");
    cmd->add_option("--embeddings", args.data.embeddings, "embeddings JSONL");
    cmd->add_flag("--strict", args.data.strict, "error on channel user-set mismatch");
    cmd->add_flag("--pad", args.data.pad, "pad channels with the popularity fallback");
    cmd->add_option("--config", args.config_path, "run config JSON");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--L", args.budget, "merged set size");
    cmd->add_option("--metric", args.metric, "objective metric: precision|recall|f1");
    cmd->add_option("--seed", args.seed, "master seed");
    cmd->add_option("--threads", args.threads, "worker threads (default: FUSE_THREADS or 1)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-channel retrieval fusion and weight optimization"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_spec, synth_out = "fuse_data";
    std::int64_t synth_seed = -1;
    int synth_threads = 0;
    synth_cmd->add_option("--spec", synth_spec, "synthetic spec JSON (or preset reference)")
        ->required();
    synth_cmd->add_option("--out", synth_out, "output directory");
    synth_cmd->add_option("--seed", synth_seed, "master seed override");
    synth_cmd->add_option("--threads", synth_threads, "worker threads");

    // eval
    CommonArgs eval_args;
    std::string eval_weights, eval_personalized, eval_export;
    bool eval_per_user = false;
    auto* eval_cmd = app.add_subcommand("eval", "merge and score a weight assignment");
    add_data_flags(eval_cmd, eval_args);
    eval_cmd->add_option("--weights", eval_weights, "global weights JSON");
    eval_cmd->add_option("--personalized", eval_personalized, "personalized weights JSONL");
    eval_cmd->add_flag("--per-user", eval_per_user, "include per-user rows in the report");
    eval_cmd->add_option("--export-merged", eval_export, "write merged sets JSONL here");

    // optimize cem|bayes|pg
    auto* opt_cmd = app.add_subcommand("optimize", "optimize channel weights");
    opt_cmd->require_subcommand(1);

    CommonArgs cem_args;
    std::string cem_resume;
    auto* cem_cmd = opt_cmd->add_subcommand("cem", "cross-entropy global weights");
    add_data_flags(cem_cmd, cem_args);
    cem_cmd->add_option("--resume", cem_resume, "resume from a CEM checkpoint");

    CommonArgs bayes_args;
    std::string bayes_ckpt;
    auto* bayes_cmd = opt_cmd->add_subcommand("bayes", "Bayesian refinement of CEM output");
    add_data_flags(bayes_cmd, bayes_args);
    bayes_cmd->add_option("--cem-checkpoint", bayes_ckpt, "CEM checkpoint to start from");

    CommonArgs pg_args;
    std::string pg_weights;
    auto* pg_cmd = opt_cmd->add_subcommand("pg", "personalized policy-gradient weights");
    add_data_flags(pg_cmd, pg_args);
    pg_cmd->add_option("--weights", pg_weights, "stage-1 global weights JSON (regularizer target)");

    // analyze
    CommonArgs analyze_args;
    double rbo_p = 0.9;
    std::int64_t rbo_depth = 0;
    std::string analyze_weights;
    bool analyze_csv = false;
    auto* analyze_cmd = app.add_subcommand("analyze", "channel diversity diagnostics");
    add_data_flags(analyze_cmd, analyze_args);
    analyze_cmd->add_option("--rbo-p", rbo_p, "RBO persistence parameter");
    analyze_cmd->add_option("--rbo-depth", rbo_depth, "RBO truncation depth (default: all users)");
    analyze_cmd->add_option("--weights", analyze_weights, "weights for the coverage computation");
    analyze_cmd->add_flag("--csv", analyze_csv, "also write jaccard.csv / rbo.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth_spec, synth_out, synth_seed, synth_threads);
        if (*eval_cmd) {
            return cmd_eval(eval_args, eval_weights, eval_personalized, eval_per_user, eval_export);
        }
        if (*cem_cmd) return cmd_optimize_cem(cem_args, cem_resume);
        if (*bayes_cmd) return cmd_optimize_bayes(bayes_args, bayes_ckpt);
        if (*pg_cmd) return cmd_optimize_pg(pg_args, pg_weights);
        if (*analyze_cmd) {
            return cmd_analyze(analyze_args, rbo_p, rbo_depth, analyze_weights, analyze_csv);
        }
    } catch (const fuse::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
