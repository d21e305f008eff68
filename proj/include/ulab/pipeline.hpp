#pragma once

#include <chrono>
#include <filesystem>
#include <string>

#include "ulab/config.hpp"
#include "ulab/environment.hpp"
#include "ulab/evaluation.hpp"
#include "ulab/grpo.hpp"
#include "ulab/oracle.hpp"
#include "ulab/policy.hpp"

namespace ulab {

namespace fs = std::filesystem;

struct ArtifactPaths {
    fs::path dir;
    fs::path lexicon() const { return dir / "lexicon.json"; }
    fs::path env() const { return dir / "env.json"; }
    fs::path reference_corpus() const { return dir / "reference.jsonl"; }
    fs::path coldstart_corpus() const { return dir / "coldstart.jsonl"; }
    fs::path coldstart_log() const { return dir / "coldstart_log.json"; }
    fs::path policy_init() const { return dir / "policy_init.ckpt"; }
    fs::path policy_cold() const { return dir / "policy_cold.ckpt"; }
    fs::path trainlog() const { return dir / "trainlog.jsonl"; }
    fs::path policy_final() const { return dir / "policy_final.ckpt"; }
    fs::path generations() const { return dir / "generations.jsonl"; }
    fs::path metrics() const { return dir / "metrics.json"; }
    fs::path lemma() const { return dir / "lemma.json"; }
    fs::path run_meta() const { return dir / "run_meta.json"; }  // timings; not deterministic
};

namespace detail {

inline void require_artifact(const fs::path& p) {
    if (!fs::exists(p)) throw MissingArtifactError("missing artifact: " + p.string());
}

inline TokenSet retain_replacement_pool(const ConceptLexicon& lex) {
    if (lex.retain_keywords().empty())
        throw EmptyReplacementPoolError("lexicon declares no retain keywords");
    return lex.retain_keywords();
}

}  // namespace detail

inline ConceptLexicon load_run_lexicon(const ExperimentConfig& cfg) {
    if (cfg.lexicon_path.empty()) return build_lexicon(default_lexicon_spec());
    return lexicon_from_json(load_json_file(cfg.lexicon_path));
}

// gen-env: lexicon.json + env.json
inline void stage_gen_env(const ExperimentConfig& cfg, const ArtifactPaths& out) {
    const ConceptLexicon lexicon = load_run_lexicon(cfg);
    Rng rng(derive_seed(cfg.seed, "gen-env"));
    const Environment env = generate_environment(lexicon, cfg.environment, rng);
    write_json_file(out.lexicon(), lexicon_to_json(lexicon));
    write_json_file(out.env(), environment_to_json(env));
}

inline Environment load_env_artifacts(const ArtifactPaths& out) {
    detail::require_artifact(out.lexicon());
    detail::require_artifact(out.env());
    const ConceptLexicon lexicon = lexicon_from_json(load_json_file(out.lexicon()));
    return environment_from_json(load_json_file(out.env()), lexicon);
}

// coldstart: reference corpus -> replacement corpus -> MLE fit
inline void stage_coldstart(const ExperimentConfig& cfg, const ArtifactPaths& out) {
    const Environment env = load_env_artifacts(out);
    const auto& vocab = env.lexicon.vocab();

    Rng corpus_rng(derive_seed(cfg.seed, "reference-corpus"));
    const Corpus reference = generate_reference_corpus(env, cfg.environment.templates,
                                                       corpus_rng, cfg.policy.sequence_length);
    write_jsonl_file(out.reference_corpus(), corpus_to_jsonl(reference, vocab));

    Rng rp_rng(derive_seed(cfg.seed, "coldstart-corpus"));
    const TokenSet pool = detail::retain_replacement_pool(env.lexicon);
    const Corpus coldstart = build_coldstart_corpus(env, reference, pool.ids(), rp_rng);
    write_jsonl_file(out.coldstart_corpus(), corpus_to_jsonl(coldstart, vocab));

    Rng init_rng(derive_seed(cfg.seed, "policy-init"));
    TabularPolicy policy =
        init_policy(vocab, make_conditions(env, cfg.policy.granularity),
                    cfg.policy.sequence_length, cfg.policy.init_scale, init_rng,
                    cfg.policy.granularity, cfg.policy.history);
    save_policy(policy, out.policy_init());

    std::vector<std::pair<Condition, Sequence>> records;
    for (const auto& rec : coldstart.records)
        records.push_back({condition_for(env.context(rec.context_id), rec.prompt_id,
                                         cfg.policy.granularity),
                           rec.tokens});
    auto [fitted, trace] =
        fit_mle(std::move(policy), records, cfg.cold_start.learning_rate, cfg.cold_start.epochs);
    save_policy(fitted, out.policy_cold());
    json log;
    log["nll_trace"] = trace;
    write_json_file(out.coldstart_log(), log);
}

// train: GRPO from policy_cold.ckpt
inline void stage_train(const ExperimentConfig& cfg, const ArtifactPaths& out) {
    const Environment env = load_env_artifacts(out);
    detail::require_artifact(out.policy_cold());
    TabularPolicy cold = load_policy(out.policy_cold(), env.lexicon.vocab());

    TabularPolicy reference = cold;
    if (cfg.reference == ExperimentConfig::Reference::Initial) {
        detail::require_artifact(out.policy_init());
        reference = load_policy(out.policy_init(), env.lexicon.vocab());
    }

    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = derive_seed(cfg.seed, "train");
    auto [final_policy, log] = train(env, std::move(cold), reference, cfg.reward, train_cfg);
    save_policy(final_policy, out.policy_final());
    write_jsonl_file(out.trainlog(), trainlog_to_jsonl(log));
}

// eval: metrics.json + generations.jsonl from policy_final.ckpt
inline void stage_eval(const ExperimentConfig& cfg, const ArtifactPaths& out) {
    const Environment env = load_env_artifacts(out);
    detail::require_artifact(out.policy_final());
    const TabularPolicy policy = load_policy(out.policy_final(), env.lexicon.vocab());
    auto [report, records] =
        evaluate(policy, env, cfg.evaluation, derive_seed(cfg.seed, "eval"));
    report.config_digest = config_digest(cfg);
    write_jsonl_file(out.generations(), generations_to_jsonl(records, env.lexicon.vocab()));
    write_json_file(out.metrics(), metrics_to_json(report));
}

// lemma-verify: per-forget-condition reports on the run's reference policy,
// then the randomized instance sweep. One JSON array.
inline std::vector<LemmaReport> run_lemma_stage(const ExperimentConfig& cfg,
                                                const ArtifactPaths& out) {
    std::vector<LemmaReport> reports;

    const Environment env = load_env_artifacts(out);
    detail::require_artifact(out.policy_cold());
    const TabularPolicy ref = load_policy(out.policy_cold(), env.lexicon.vocab());
    const double lambda1 = cfg.reward.lambda1 > 0 ? cfg.reward.lambda1 : 0.3;
    const double lambda2 = cfg.reward.lambda2 > 0 ? cfg.reward.lambda2 : 0.5;

    std::vector<Condition> seen;
    for (int ctx_id : env.train_ids) {
        const Context& ctx = env.context(ctx_id);
        if (ctx.split != Split::Forget) continue;
        const HallucinationSpec spec =
            build_hallucination_spec(env.lexicon, ctx.grounded_objects);
        for (int p : ctx.prompt_ids) {
            const Condition c = condition_for(ctx, p, ref.granularity());
            bool dup = false;
            for (const auto& s : seen) dup = dup || s == c;
            if (dup) continue;
            seen.push_back(c);
            reports.push_back(verify_lemma1(ref, c, env.lexicon, spec, lambda1, lambda2,
                                            cfg.lemma.beta, cfg.policy.enumeration_cap));
        }
    }

    std::vector<LemmaReport> sweep(static_cast<std::size_t>(cfg.lemma.instances));
    parallel_for(sweep.size(), cfg.threads, [&](std::size_t i) {
        const std::uint64_t seed = derive_seed(cfg.seed, "lemma-sweep", i);
        const LemmaInstance inst = make_random_lemma_instance(seed);
        LemmaReport r = verify_lemma1(inst.ref, {0, 0}, inst.lexicon, inst.spec, inst.lambda1,
                                      inst.lambda2, inst.beta);
        r.seed = seed;
        sweep[i] = r;
    });
    reports.insert(reports.end(), sweep.begin(), sweep.end());
    return reports;
}

inline void stage_lemma(const ExperimentConfig& cfg, const ArtifactPaths& out) {
    const auto reports = run_lemma_stage(cfg, out);
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(lemma_report_to_json(r));
    write_json_file(out.lemma(), arr);
}

// Whole pipeline; stage failures are rethrown with the stage name attached
// and partial artifacts stay on disk for debugging.
inline void run_pipeline(const ExperimentConfig& cfg) {
    const ArtifactPaths out{fs::path(cfg.output_dir)};
    fs::create_directories(out.dir);
    json meta;
    const auto t0 = std::chrono::steady_clock::now();
    auto timed = [&](const char* name, auto&& fn) {
        const auto start = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const Error& e) {
            throw StageError(name, e.what());
        }
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        meta["stage_ms"][name] = ms;
    };
    timed("gen-env", [&] { stage_gen_env(cfg, out); });
    timed("coldstart", [&] { stage_coldstart(cfg, out); });
    timed("train", [&] { stage_train(cfg, out); });
    timed("eval", [&] { stage_eval(cfg, out); });
    if (cfg.lemma.enabled) timed("lemma-verify", [&] { stage_lemma(cfg, out); });
    meta["total_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    meta["config_digest"] = config_digest(cfg);
    write_json_file(out.run_meta(), meta);
}

}  // namespace ulab
