// Acceptance suite: executes every acceptance criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exits non-zero if
// any criterion fails.

#include <array>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ulab/config.hpp"
#include "ulab/evaluation.hpp"
#include "ulab/grpo.hpp"
#include "ulab/oracle.hpp"
#include "ulab/pipeline.hpp"

#include "../support/brute.hpp"

namespace fs = std::filesystem;
using namespace ulab;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// ---- criterion 1: randomized lemma sweep, strict, < 10 s ----
void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const int n = 200;
    std::vector<LemmaReport> reports(n);
    for (int i = 0; i < n; ++i) {
        const std::uint64_t seed = derive_seed(1, "acceptance-sweep", static_cast<std::uint64_t>(i));
        const LemmaInstance inst = make_random_lemma_instance(seed);
        reports[static_cast<std::size_t>(i)] =
            verify_lemma1(inst.ref, {0, 0}, inst.lexicon, inst.spec, inst.lambda1, inst.lambda2,
                          inst.beta);
    }
    const auto s = summarize_lemma_reports(reports);
    const double secs = seconds_since(t0);
    const bool pass = s.instances == n && s.precondition_ok == n && s.verdicts_true == n &&
                      s.min_margin_p > 0.0 && s.min_margin_z > 0.0 && secs < 10.0;
    report(1, pass,
           fmt("lemma sweep %d/%d verdicts, min P margin %.3g, min Z margin %.3g, %.2f s",
               s.verdicts_true, s.instances, s.min_margin_p, s.min_margin_z, secs));
}

// ---- criterion 2: minimal oracle instance to 1e-12 ----
void criterion_2() {
    LexiconSpec ls;
    ls.vocabulary = {"dog", "animal", "cat"};
    ls.forget = {"dog"};
    ls.hypernyms["dog"] = {"animal"};
    const ConceptLexicon lex = build_lexicon(ls);
    Rng rng(1);
    const TabularPolicy ref = init_policy(lex.vocab(), {{0, 0}}, 1, 0.0, rng);
    const HallucinationSpec spec{TokenSet({lex.vocab().id_of("cat")}), TokenSet{}};
    const LemmaReport r = verify_lemma1(ref, {0, 0}, lex, spec, 1.0, 1.0, 1.0);

    const double p_pen = 1.0 / (std::exp(-1.0) + 2.0);
    const double p_comp = 1.0 / (std::exp(-1.0) + std::exp(1.0) + 1.0);
    const double err = std::max(std::fabs(r.p_hallu_pen - p_pen),
                                std::fabs(r.p_hallu_comp - p_comp));
    const bool pass = err < 1e-12 && r.verdict;
    report(2, pass,
           fmt("minimal instance P_pen %.15f P_comp %.15f (max err %.2e)", r.p_hallu_pen,
               r.p_hallu_comp, err));
}

// ---- criterion 3: analytic vs finite-difference surrogate gradient ----
void criterion_3() {
    Rng meta(777001);
    double worst = 0.0;
    int count = 0;
    for (int inst = 0; inst < 50; ++inst) {
        const int emittable = 3 + meta.uniform_int(2);
        const int L = 1 + meta.uniform_int(3);
        const History history = meta.uniform() < 0.3 ? History::Full : History::Markov1;
        const double beta =
            std::vector<double>{0.0, 0.05, 0.5, 1.0}[static_cast<std::size_t>(
                meta.uniform_int(4))];
        std::vector<std::string> tokens;
        for (int i = 0; i < emittable; ++i) tokens.push_back("w" + std::to_string(i));
        const Vocabulary vocab(tokens);
        Rng rng_b(40000 + static_cast<std::uint64_t>(inst));
        const TabularPolicy behavior = init_policy(vocab, {{0, 0}, {1, 0}}, L, 1.2, rng_b,
                                                   Granularity::PerClass, history);
        TabularPolicy current = behavior;
        Rng perturb(50000 + static_cast<std::uint64_t>(inst));
        for (auto& v : current.logits()) v += perturb.uniform(-0.4, 0.4);
        Rng rng_r(60000 + static_cast<std::uint64_t>(inst));
        const TabularPolicy reference = init_policy(vocab, {{0, 0}, {1, 0}}, L, 1.0, rng_r,
                                                    Granularity::PerClass, history);
        // groups with random rewards
        Rng roll(70000 + static_cast<std::uint64_t>(inst));
        std::vector<Group> groups;
        const int J = 2 + meta.uniform_int(4);
        for (int g = 0; g < 4; ++g) {
            Group grp;
            grp.condition = {g % 2, 0};
            for (int j = 0; j < J; ++j) {
                Sequence seq = behavior.sample(grp.condition, roll);
                grp.behavior_log_probs.push_back(
                    per_token_log_probs(behavior, grp.condition, seq));
                grp.sequences.push_back(std::move(seq));
                grp.rewards.push_back(static_cast<double>(roll.uniform_int(3)) * 0.5);
            }
            grp.advantages = compute_advantages(grp.rewards, 1e-6);
            groups.push_back(std::move(grp));
        }
        TrainConfig cfg;
        cfg.beta = beta;
        const auto res = surrogate_and_gradient(current, reference, groups, cfg);
        auto objective = [&](const std::vector<double>& logits) {
            TabularPolicy probe = current;
            probe.logits() = logits;
            return surrogate_and_gradient(probe, reference, groups, cfg).objective;
        };
        const auto fd = brute::finite_difference_gradient(current.logits(), objective, 1e-5);
        worst = std::max(worst, brute::max_relative_error(res.grad, fd));
        ++count;
    }
    report(3, worst < 1e-5 && count == 50,
           fmt("gradient check on %d instances, max relative error %.3g", count, worst));
}

// ---- criterion 4: advantage properties ----
void criterion_4() {
    bool pass = true;
    std::string note;
    Rng rng(424242);
    double worst_mean = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int J = 2 + rng.uniform_int(7);
        std::vector<double> rewards;
        for (int j = 0; j < J; ++j) rewards.push_back(rng.uniform(-3.0, 3.0));
        const auto adv = compute_advantages(rewards, 1e-6);
        double mean = 0.0;
        for (double a : adv) mean += a;
        mean /= static_cast<double>(J);
        worst_mean = std::max(worst_mean, std::fabs(mean));
    }
    pass = pass && worst_mean <= 1e-9;

    for (double v : {0.0, 0.3, -1.0}) {
        const auto adv = compute_advantages({v, v, v, v, v}, 1e-6);
        for (double a : adv) pass = pass && a == 0.0;
    }

    const auto spike = compute_advantages({1, 0, 0, 0, 0}, 1e-6);
    const double expected = 0.8 / (0.4 + 1e-6);
    pass = pass && std::fabs(spike[0] - expected) < 1e-9;

    report(4, pass,
           fmt("1000 groups: worst |mean A| %.2e; spike group A1 err %.2e", worst_mean,
               std::fabs(spike[0] - expected)));
}

// ---- criteria 5-7, 9: pipeline-level checks ----
struct PipelineRuns {
    fs::path base;
    ExperimentConfig composite_a;
    ExperimentConfig composite_b;  // same seed, different thread count
    ExperimentConfig penalty;
    double composite_seconds = 0.0;
};

PipelineRuns execute_pipelines() {
    PipelineRuns runs;
    runs.base = fs::temp_directory_path() / "ulab_acceptance";
    fs::remove_all(runs.base);

    runs.composite_a = ExperimentConfig{};
    runs.composite_a.output_dir = (runs.base / "composite_a").string();
    const auto t0 = std::chrono::steady_clock::now();
    run_pipeline(runs.composite_a);
    runs.composite_seconds = seconds_since(t0);

    runs.composite_b = ExperimentConfig{};
    runs.composite_b.output_dir = (runs.base / "composite_b").string();
    runs.composite_b.threads = 4;
    runs.composite_b.train.threads = 4;
    runs.composite_b.evaluation.threads = 4;
    run_pipeline(runs.composite_b);

    runs.penalty = ExperimentConfig{};
    runs.penalty.output_dir = (runs.base / "penalty").string();
    runs.penalty.train.mode = TrainMode::PenaltyOnly;
    run_pipeline(runs.penalty);
    return runs;
}

void criterion_5(const PipelineRuns& runs) {
    const ArtifactPaths out{fs::path(runs.composite_a.output_dir)};
    const MetricsReport m = metrics_from_json(load_json_file(out.metrics()));
    bool pass = runs.composite_a.train.iterations <= 500 && runs.composite_seconds < 300.0;
    double min_forget = 1.0, min_retain = 1.0;
    for (const auto& [prompt, pm] : m.prompts) {
        min_forget = std::min(min_forget, pm.forget_rate);
        min_retain = std::min(min_retain, pm.retain_rate);
    }
    pass = pass && min_forget >= 0.95 && min_retain >= 0.95 && !m.prompts.empty();
    report(5, pass,
           fmt("default run: min For. %.4f, min Ret. %.4f over %zu prompts, %d iterations, "
               "%.1f s",
               min_forget, min_retain, m.prompts.size(), runs.composite_a.train.iterations,
               runs.composite_seconds));
}

void criterion_6(const PipelineRuns& runs) {
    const MetricsReport comp = metrics_from_json(
        load_json_file(ArtifactPaths{fs::path(runs.composite_a.output_dir)}.metrics()));
    const MetricsReport pen = metrics_from_json(
        load_json_file(ArtifactPaths{fs::path(runs.penalty.output_dir)}.metrics()));
    bool pass = comp.hallu_overall <= 0.02;
    if (pen.hallu_overall > 0.02) pass = pass && comp.hallu_overall < pen.hallu_overall;
    report(6, pass,
           fmt("Hallu. composite %.4f vs penalty-only %.4f", comp.hallu_overall,
               pen.hallu_overall));
}

void criterion_7(const PipelineRuns& runs) {
    const ArtifactPaths out{fs::path(runs.composite_a.output_dir)};
    const Environment env = load_env_artifacts(out);
    const TabularPolicy initial = load_policy(out.policy_init(), env.lexicon.vocab());
    const TabularPolicy cold = load_policy(out.policy_cold(), env.lexicon.vocab());
    const TokenSet penalized = env.lexicon.penalized_tokens();

    double mass_init = 0.0, mass_cold = 0.0;
    int conds = 0;
    for (const auto& ctx : env.contexts) {
        if (ctx.split != Split::Forget) continue;
        for (int p : ctx.prompt_ids) {
            const Condition c = condition_for(ctx, p, cold.granularity());
            mass_init += emission_mass(initial, c, penalized);
            mass_cold += emission_mass(cold, c, penalized);
            ++conds;
        }
        if (cold.granularity() == Granularity::PerClass) break;  // one class row
    }
    mass_init /= conds;
    mass_cold /= conds;
    report(7, mass_cold <= 0.5 * mass_init,
           fmt("forget emission mass: initial %.4f -> cold-start %.4f (ratio %.3f)", mass_init,
               mass_cold, mass_cold / mass_init));
}

// ---- criterion 8: metric-oracle equivalence over the written logs ----
void criterion_8() {
    bool pass = true;
    const ConceptLexicon lex = build_lexicon(default_lexicon_spec());
    const TokenSet penalized = lex.penalized_tokens();
    for (std::uint64_t run = 0; run < 10 && pass; ++run) {
        EnvConfig env_cfg;
        Rng env_rng(derive_seed(run, "c8-env"));
        const Environment env = generate_environment(lex, env_cfg, env_rng);
        Rng init_rng(derive_seed(run, "c8-init"));
        const TabularPolicy policy =
            init_policy(lex.vocab(), make_conditions(env, Granularity::PerClass), 4,
                        0.3 + 0.2 * static_cast<double>(run), init_rng);
        EvalConfig cfg;
        cfg.samples_per_context = 40;
        auto [metrics, records] = evaluate(policy, env, cfg, derive_seed(run, "c8-eval"));

        // write the log, read it back, recount from token strings
        const fs::path log_path =
            fs::temp_directory_path() / ("ulab_c8_" + std::to_string(run) + ".jsonl");
        write_jsonl_file(log_path, generations_to_jsonl(records, lex.vocab()));
        const auto lines = load_jsonl_file(log_path);
        fs::remove(log_path);

        std::map<int, std::array<int, 5>> t;  // fgt_hits, fgt_n, ret_hits, ret_n, hallu
        for (const auto& line : lines) {
            const int ctx_id = line.at("context_id").get<int>();
            const int prompt = line.at("prompt_id").get<int>();
            const Context& ctx = env.context(ctx_id);
            Sequence seq;
            for (const auto& w : line.at("tokens"))
                seq.push_back(lex.vocab().id_of(w.get<std::string>()));
            auto& row = t[prompt];
            if (ctx.split == Split::Forget) {
                row[0] += brute::count_in_set(seq, penalized) > 0 ? 1 : 0;
                row[1] += 1;
            } else {
                bool hit = false;
                for (TokenId id : seq)
                    hit = hit ||
                          (ctx.grounded_objects.contains(id) && lex.retain_keywords().contains(id));
                row[2] += hit ? 1 : 0;
                row[3] += 1;
            }
            row[4] += judge(seq, ctx, lex).hallucinated ? 1 : 0;
        }
        for (const auto& [prompt, row] : t) {
            const auto& pm = metrics.prompts.at(prompt);
            pass = pass && pm.forget_rate == 1.0 - static_cast<double>(row[0]) / row[1];
            pass = pass && pm.retain_rate == static_cast<double>(row[2]) / row[3];
            pass = pass && pm.hallu_rate == static_cast<double>(row[4]) / (row[1] + row[3]);
        }
    }
    report(8, pass, "For./Ret./Hallu. equal the brute-force log recount on 10 random runs");
}

void criterion_9(const PipelineRuns& runs) {
    const ArtifactPaths a{fs::path(runs.composite_a.output_dir)};
    const ArtifactPaths b{fs::path(runs.composite_b.output_dir)};
    const bool metrics_eq = read_text_file(a.metrics()) == read_text_file(b.metrics());
    const bool lemma_eq = read_text_file(a.lemma()) == read_text_file(b.lemma());
    const bool trainlog_eq = read_text_file(a.trainlog()) == read_text_file(b.trainlog());
    report(9, metrics_eq && lemma_eq && trainlog_eq,
           fmt("byte-identical across runs and thread counts: metrics %s, lemma %s, trainlog %s",
               metrics_eq ? "yes" : "no", lemma_eq ? "yes" : "no", trainlog_eq ? "yes" : "no"));
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();

    PipelineRuns runs;
    try {
        runs = execute_pipelines();
    } catch (const std::exception& e) {
        std::printf("[FAIL] pipeline execution: %s\n", e.what());
        return 1;
    }
    criterion_5(runs);
    criterion_6(runs);
    criterion_7(runs);
    criterion_8();
    criterion_9(runs);

    fs::remove_all(runs.base);
    std::printf("%s\n", failures == 0 ? "all criteria passed" : "CRITERIA FAILED");
    return failures == 0 ? 0 : 1;
}
