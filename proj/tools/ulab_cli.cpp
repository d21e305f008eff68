// Experiment runner: seeded end-to-end pipelines plus stage-by-stage
// subcommands over the same on-disk artifacts.
//
// Exit codes: 0 success, 2 config error, 3 stage failure,
// 4 verification failure (lemma-verify found a falsified instance).

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ulab/config.hpp"
#include "ulab/evaluation.hpp"
#include "ulab/oracle.hpp"
#include "ulab/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitVerify = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string mode;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON");
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
    cmd->add_option("--mode", opts.mode, "reward mode: composite | penalty-only")
        ->check(CLI::IsMember({"composite", "penalty-only"}));
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&opts](std::uint64_t s) { opts.seed = s; opts.seed_set = true; },
        "master seed (overrides config)");
    cmd->add_option("--threads", opts.threads, "worker threads (overrides config)");
}

ulab::ExperimentConfig resolve_config(const CommonOpts& opts) {
    ulab::ExperimentConfig cfg;
    if (!opts.config_path.empty())
        cfg = ulab::config_from_json(ulab::load_json_file(opts.config_path));
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (!opts.mode.empty())
        cfg.train.mode = opts.mode == "composite" ? ulab::TrainMode::Composite
                                                  : ulab::TrainMode::PenaltyOnly;
    if (opts.threads > 0) {
        cfg.threads = opts.threads;
        cfg.train.threads = opts.threads;
        cfg.evaluation.threads = opts.threads;
    }
    return cfg;
}

void print_lemma_summary(const std::vector<ulab::LemmaReport>& reports) {
    const auto s = ulab::summarize_lemma_reports(reports);
    std::printf("lemma instances: %d (preconditions satisfied: %d)\n", s.instances,
                s.precondition_ok);
    std::printf("verdicts: %d/%d hold\n", s.verdicts_true, s.instances);
    if (s.instances > 0)
        std::printf("min margin P_pen - P_comp: %.6g   min margin Z_comp - Z_pen: %.6g\n",
                    s.min_margin_p, s.min_margin_z);
}

int lemma_exit_code(const std::vector<ulab::LemmaReport>& reports) {
    for (const auto& r : reports)
        if (r.precondition_ok && !r.verdict) return kExitVerify;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale reinforcement-unlearning laboratory"};
    app.require_subcommand(1);

    CommonOpts opts;
    int sweep_instances = -1;
    bool sweep_only = false;

    auto* cmd_pipeline = app.add_subcommand("pipeline", "run every stage end to end");
    add_common(cmd_pipeline, opts);
    auto* cmd_gen_env = app.add_subcommand("gen-env", "generate lexicon.json and env.json");
    add_common(cmd_gen_env, opts);
    auto* cmd_coldstart =
        app.add_subcommand("coldstart", "build corpora and fit the cold-start policy");
    add_common(cmd_coldstart, opts);
    auto* cmd_train = app.add_subcommand("train", "run GRPO from policy_cold.ckpt");
    add_common(cmd_train, opts);
    auto* cmd_eval = app.add_subcommand("eval", "sample the final policy and write metrics.json");
    add_common(cmd_eval, opts);
    auto* cmd_lemma = app.add_subcommand("lemma-verify", "verify the hallucination lemma");
    add_common(cmd_lemma, opts);
    cmd_lemma->add_option("--instances", sweep_instances, "random sweep size");
    cmd_lemma->add_flag("--sweep-only", sweep_only,
                        "skip the run's own conditions; random instances only");
    auto* cmd_report = app.add_subcommand("report", "render metrics.json and lemma.json");
    add_common(cmd_report, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        ulab::ExperimentConfig cfg = resolve_config(opts);
        if (sweep_instances >= 0) cfg.lemma.instances = sweep_instances;
        const ulab::ArtifactPaths out{std::filesystem::path(cfg.output_dir)};

        if (cmd_pipeline->parsed()) {
            ulab::run_pipeline(cfg);
            std::printf("pipeline complete: %s\n", out.dir.string().c_str());
            return kExitOk;
        }
        if (cmd_gen_env->parsed()) {
            std::filesystem::create_directories(out.dir);
            ulab::stage_gen_env(cfg, out);
            return kExitOk;
        }
        if (cmd_coldstart->parsed()) {
            ulab::stage_coldstart(cfg, out);
            return kExitOk;
        }
        if (cmd_train->parsed()) {
            ulab::stage_train(cfg, out);
            return kExitOk;
        }
        if (cmd_eval->parsed()) {
            ulab::stage_eval(cfg, out);
            return kExitOk;
        }
        if (cmd_lemma->parsed()) {
            std::filesystem::create_directories(out.dir);
            std::vector<ulab::LemmaReport> reports;
            if (sweep_only) {
                reports.resize(static_cast<std::size_t>(cfg.lemma.instances));
                ulab::parallel_for(reports.size(), cfg.threads, [&](std::size_t i) {
                    const std::uint64_t seed = ulab::derive_seed(cfg.seed, "lemma-sweep", i);
                    const auto inst = ulab::make_random_lemma_instance(seed);
                    auto r = ulab::verify_lemma1(inst.ref, {0, 0}, inst.lexicon, inst.spec,
                                                 inst.lambda1, inst.lambda2, inst.beta);
                    r.seed = seed;
                    reports[i] = r;
                });
                ulab::json arr = ulab::json::array();
                for (const auto& r : reports) arr.push_back(ulab::lemma_report_to_json(r));
                ulab::write_json_file(out.lemma(), arr);
            } else {
                reports = ulab::run_lemma_stage(cfg, out);
                ulab::json arr = ulab::json::array();
                for (const auto& r : reports) arr.push_back(ulab::lemma_report_to_json(r));
                ulab::write_json_file(out.lemma(), arr);
            }
            print_lemma_summary(reports);
            return lemma_exit_code(reports);
        }
        if (cmd_report->parsed()) {
            const auto metrics = ulab::metrics_from_json(ulab::load_json_file(out.metrics()));
            std::printf("%s", ulab::render_metrics_table(metrics).c_str());
            if (std::filesystem::exists(out.lemma())) {
                std::vector<ulab::LemmaReport> reports;
                for (const auto& j : ulab::load_json_file(out.lemma())) {
                    ulab::LemmaReport r;
                    r.precondition_ok = j.at("precondition_ok").get<bool>();
                    r.verdict = j.at("verdict").get<bool>();
                    r.p_hallu_pen = j.at("p_hallu_pen").get<double>();
                    r.p_hallu_comp = j.at("p_hallu_comp").get<double>();
                    r.z_pen = j.at("z_pen").get<double>();
                    r.z_comp = j.at("z_comp").get<double>();
                    reports.push_back(r);
                }
                print_lemma_summary(reports);
            }
            return kExitOk;
        }
    } catch (const ulab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const ulab::StageError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitStage;
    } catch (const ulab::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStage;
    }
    return kExitOk;
}
