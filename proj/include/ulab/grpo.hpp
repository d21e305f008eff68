#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ulab/environment.hpp"
#include "ulab/parallel.hpp"
#include "ulab/policy.hpp"
#include "ulab/rewards.hpp"

namespace ulab {

// J rollouts for one (context, prompt), with the behavior policy's per-token
// log-probabilities and the group-relative advantages.
struct Group {
    int context_id = 0;
    int prompt_id = 0;
    Condition condition;
    Split split = Split::Forget;
    std::vector<Sequence> sequences;
    std::vector<std::vector<double>> behavior_log_probs;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

enum class TrainMode { Composite, PenaltyOnly };

inline const char* to_string(TrainMode m) {
    return m == TrainMode::Composite ? "composite" : "penalty-only";
}

struct TrainConfig {
    int group_size = 5;       // J
    double clip_eps = 0.2;    // epsilon in the clipped surrogate
    double beta = 0.01;       // KL weight
    double adv_eps = 1e-6;    // advantage denominator epsilon
    double lr = 0.1;
    int iterations = 500;
    int inner_epochs = 1;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Composite;
    bool sample_stddev = false;    // population sigma by default
    int contexts_per_class = 0;    // 0 = every train context of each class
    int groups_per_pair = 4;       // groups per (context, prompt) per iteration
    std::vector<int> train_prompts;  // empty = all prompt ids
    int threads = 1;
    std::size_t enumeration_cap = kDefaultEnumerationCap;

    void validate() const {
        if (group_size < 2) throw GroupTooSmallError("group size must be >= 2");
        if (clip_eps <= 0.0 || clip_eps >= 1.0)
            throw PreconditionError("clip_eps must be in (0, 1)");
        if (beta < 0.0) throw PreconditionError("beta must be >= 0");
        if (lr <= 0.0) throw PreconditionError("learning rate must be > 0");
        if (iterations < 0 || inner_epochs < 1)
            throw PreconditionError("invalid iteration counts");
        if (groups_per_pair < 1) throw PreconditionError("groups_per_pair must be >= 1");
    }
};

// A_j = (r_j - mean) / (stddev + eps); all-equal rewards give exactly zero.
inline std::vector<double> compute_advantages(const std::vector<double>& rewards, double adv_eps,
                                              bool sample_stddev = false) {
    const auto J = rewards.size();
    if (J < 2) throw GroupTooSmallError("advantage normalization needs J >= 2");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(J);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(sample_stddev ? J - 1 : J);
    const double denom = std::sqrt(var) + adv_eps;
    std::vector<double> adv(J);
    for (std::size_t j = 0; j < J; ++j) adv[j] = (rewards[j] - mean) / denom;
    return adv;
}

// min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)
inline double clipped_term(double ratio, double advantage, double clip_eps) {
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    return std::min(ratio * advantage, clipped * advantage);
}

inline std::vector<double> per_token_log_probs(const TabularPolicy& policy, const Condition& c,
                                               const Sequence& seq) {
    policy.check_sequence(seq);
    const int cond = policy.condition_index(c);
    const auto emit = static_cast<std::size_t>(policy.vocab().emittable_count());
    std::vector<double> lsm(emit), out;
    out.reserve(seq.size());
    std::size_t state = policy.state_index({});
    for (int i = 0; i < policy.seq_len(); ++i) {
        const TokenId w = seq[static_cast<std::size_t>(i)];
        policy.log_softmax_row(cond, state, lsm);
        out.push_back(lsm[static_cast<std::size_t>(w - 1)]);
        state = policy.next_state(state, i, w);
    }
    return out;
}

inline Group rollout_group(const TabularPolicy& behavior, const Context& ctx, int prompt,
                           const ConceptLexicon& lex, const RewardConfig& reward_cfg, int J,
                           double adv_eps, bool sample_stddev, Rng& rng) {
    if (J < 2) throw GroupTooSmallError("group size must be >= 2");
    Group g;
    g.context_id = ctx.id;
    g.prompt_id = prompt;
    g.condition = condition_for(ctx, prompt, behavior.granularity());
    g.split = ctx.split;
    for (int j = 0; j < J; ++j) {
        Sequence seq = behavior.sample(g.condition, rng);
        g.behavior_log_probs.push_back(per_token_log_probs(behavior, g.condition, seq));
        g.rewards.push_back(assign_reward(ctx.split, seq, lex, reward_cfg));
        g.sequences.push_back(std::move(seq));
    }
    g.advantages = compute_advantages(g.rewards, adv_eps, sample_stddev);
    return g;
}

namespace detail {

// Exact KL(p || q) for one condition via full enumeration, accumulating
// weight * d/dlogits KL into grad. Uses the identity
//   grad KL = sum_y p(y) (log p(y) - log q(y)) grad log p(y);
// the +1 term drops because sum_y p(y) grad log p(y) == 0.
inline double kl_exact_with_grad(const TabularPolicy& p, const TabularPolicy& q,
                                 const Condition& c, double weight, std::vector<double>& grad,
                                 std::size_t cap) {
    check_same_space(p, q);
    if (p.history() != q.history())
        throw PreconditionError("policies must share the history parameterization");
    enumeration_size(p, cap);
    const int cp = p.condition_index(c);
    const int cq = q.condition_index(c);
    const auto emit = static_cast<std::size_t>(p.vocab().emittable_count());
    const int L = p.seq_len();

    std::vector<double> probs_p(p.n_states() * emit), lsm_p(p.n_states() * emit),
        lsm_q(q.n_states() * emit);
    for (std::size_t s = 0; s < p.n_states(); ++s) {
        p.softmax_row(cp, s, {probs_p.data() + s * emit, emit});
        p.log_softmax_row(cp, s, {lsm_p.data() + s * emit, emit});
        q.log_softmax_row(cq, s, {lsm_q.data() + s * emit, emit});
    }

    std::vector<std::size_t> states(static_cast<std::size_t>(L) + 1);
    std::vector<double> lp(static_cast<std::size_t>(L) + 1, 0.0),
        lq(static_cast<std::size_t>(L) + 1, 0.0);
    std::vector<std::size_t> digit(static_cast<std::size_t>(L), 0);
    states[0] = p.state_index({});
    double kl = 0.0;
    int depth = 0;
    while (true) {
        if (depth == L) {
            const double diff = lp[static_cast<std::size_t>(L)] - lq[static_cast<std::size_t>(L)];
            const double mass = std::exp(lp[static_cast<std::size_t>(L)]);
            kl += mass * diff;
            if (weight != 0.0) {
                const double w = weight * mass * diff;
                for (int i = 0; i < L; ++i) {
                    const std::size_t s = states[static_cast<std::size_t>(i)];
                    const std::size_t base = p.row_offset(cp, s);
                    const double* row = probs_p.data() + s * emit;
                    for (std::size_t k = 0; k < emit; ++k) grad[base + k] -= w * row[k];
                    grad[base + digit[static_cast<std::size_t>(i)]] += w;
                }
            }
            --depth;
            while (depth >= 0 && ++digit[static_cast<std::size_t>(depth)] == emit) {
                digit[static_cast<std::size_t>(depth)] = 0;
                --depth;
            }
            if (depth < 0) break;
        }
        const auto d = static_cast<std::size_t>(depth);
        const auto k = digit[d];
        const auto token = static_cast<TokenId>(k + 1);
        states[d + 1] = p.next_state(states[d], depth, token);
        lp[d + 1] = lp[d] + lsm_p[states[d] * emit + k];
        lq[d + 1] = lq[d] + lsm_q[states[d] * emit + k];
        ++depth;
    }
    return kl;
}

// Importance-weighted fallback when the sequence space is too large to
// enumerate: KL(p||q) ≈ mean over behavior samples of (p/b)(log p - log q),
// with gradient mean of (p/b)(log p - log q + 1) grad log p. Unbiased under
// y ~ behavior.
inline double kl_estimator_with_grad(const TabularPolicy& p, const TabularPolicy& q,
                                     const std::vector<const Group*>& groups, double weight,
                                     std::vector<double>& grad) {
    const auto emit = static_cast<std::size_t>(p.vocab().emittable_count());
    std::vector<double> probs(emit);
    double kl = 0.0;
    std::size_t n = 0;
    for (const Group* g : groups) n += g->sequences.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (const Group* g : groups) {
        const int cond = p.condition_index(g->condition);
        const int cond_q = q.condition_index(g->condition);
        for (std::size_t j = 0; j < g->sequences.size(); ++j) {
            const Sequence& seq = g->sequences[j];
            double lp = 0.0, lq = 0.0, lb = 0.0;
            for (double v : g->behavior_log_probs[j]) lb += v;
            const auto lp_tokens = per_token_log_probs(p, g->condition, seq);
            (void)cond_q;
            for (double v : lp_tokens) lp += v;
            lq = q.log_prob(g->condition, seq);
            const double iw = std::exp(lp - lb);
            kl += inv_n * iw * (lp - lq);
            const double w = weight * inv_n * iw * (lp - lq + 1.0);
            std::size_t state = p.state_index({});
            for (int i = 0; i < p.seq_len(); ++i) {
                const TokenId tok = seq[static_cast<std::size_t>(i)];
                p.softmax_row(cond, state, probs);
                const std::size_t base = p.row_offset(cond, state);
                for (std::size_t k = 0; k < emit; ++k) grad[base + k] -= w * probs[k];
                grad[base + static_cast<std::size_t>(tok - 1)] += w;
                state = p.next_state(state, i, tok);
            }
        }
    }
    return kl;
}

}  // namespace detail

struct SurrogateResult {
    double objective = 0.0;
    std::vector<double> grad;
    bool kl_exact = true;  // false when the sample estimator was used
};

// Token-level clipped surrogate with KL regularization:
//   (1/G) sum_groups [ (1/J) sum_y (1/|y|) sum_i min(ratio*A, clip(ratio)*A) ]
//   - beta * (1/G) sum_groups KL(current || reference)
// Ratios come from the stored behavior log-probs. Tokens whose min selects
// the saturated clipped branch contribute no gradient through the ratio.
inline SurrogateResult surrogate_and_gradient(const TabularPolicy& current,
                                              const TabularPolicy& reference,
                                              const std::vector<Group>& groups,
                                              const TrainConfig& cfg) {
    if (groups.empty()) throw PreconditionError("empty group batch");
    SurrogateResult res;
    res.grad.assign(current.param_count(), 0.0);
    const auto emit = static_cast<std::size_t>(current.vocab().emittable_count());
    const double inv_groups = 1.0 / static_cast<double>(groups.size());
    std::vector<double> probs(emit);

    for (const Group& g : groups) {
        const int cond = current.condition_index(g.condition);
        const auto J = g.sequences.size();
        const double inv = inv_groups / static_cast<double>(J) /
                           static_cast<double>(current.seq_len());
        for (std::size_t j = 0; j < J; ++j) {
            const Sequence& seq = g.sequences[j];
            const double A = g.advantages[j];
            std::size_t state = current.state_index({});
            for (int i = 0; i < current.seq_len(); ++i) {
                const TokenId w = seq[static_cast<std::size_t>(i)];
                current.softmax_row(cond, state, probs);
                const double lp = std::log(probs[static_cast<std::size_t>(w - 1)]);
                const double ratio =
                    std::exp(lp - g.behavior_log_probs[j][static_cast<std::size_t>(i)]);
                const double unclipped = ratio * A;
                const double clipped =
                    std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * A;
                res.objective += inv * std::min(unclipped, clipped);
                if (unclipped <= clipped) {
                    const double coef = inv * A * ratio;
                    const std::size_t base = current.row_offset(cond, state);
                    for (std::size_t k = 0; k < emit; ++k) res.grad[base + k] -= coef * probs[k];
                    res.grad[base + static_cast<std::size_t>(w - 1)] += coef;
                }
                state = current.next_state(state, i, w);
            }
        }
    }

    if (cfg.beta > 0.0) {
        // One KL per group per Eq.-style expectation; identical conditions
        // share a single enumeration.
        std::vector<std::pair<Condition, int>> cond_counts;
        for (const Group& g : groups) {
            bool found = false;
            for (auto& [c, n] : cond_counts)
                if (c == g.condition) {
                    ++n;
                    found = true;
                }
            if (!found) cond_counts.push_back({g.condition, 1});
        }
        bool can_enumerate = true;
        try {
            enumeration_size(current, cfg.enumeration_cap);
        } catch (const EnumerationTooLargeError&) {
            can_enumerate = false;
        }
        res.kl_exact = can_enumerate;
        for (const auto& [c, count] : cond_counts) {
            const double weight = -cfg.beta * static_cast<double>(count) * inv_groups;
            double kl;
            if (can_enumerate) {
                kl = detail::kl_exact_with_grad(current, reference, c, weight, res.grad,
                                                cfg.enumeration_cap);
            } else {
                std::vector<const Group*> cond_groups;
                for (const Group& g : groups)
                    if (g.condition == c) cond_groups.push_back(&g);
                kl = detail::kl_estimator_with_grad(current, reference, cond_groups, weight,
                                                    res.grad);
            }
            res.objective -= cfg.beta * static_cast<double>(count) * inv_groups * kl;
        }
    }
    return res;
}

struct TrainIterRecord {
    int iteration = 0;
    double mean_reward_forget = 0.0;
    double mean_reward_retain = 0.0;
    double kl_to_reference = 0.0;
    double forget_emission_mass = 0.0;
};

struct TrainLog {
    std::string mode;
    std::string kl_path = "exact_enumeration";
    int group_size = 0;
    std::uint64_t seed = 0;
    std::vector<TrainIterRecord> records;
};

inline std::vector<json> trainlog_to_jsonl(const TrainLog& log) {
    std::vector<json> lines;
    json meta;
    meta["type"] = "meta";
    meta["mode"] = log.mode;
    meta["kl_path"] = log.kl_path;
    meta["group_size"] = log.group_size;
    meta["seed"] = log.seed;
    lines.push_back(meta);
    for (const auto& r : log.records) {
        json j;
        j["type"] = "iteration";
        j["iteration"] = r.iteration;
        j["mean_reward_forget"] = r.mean_reward_forget;
        j["mean_reward_retain"] = r.mean_reward_retain;
        j["kl_to_reference"] = r.kl_to_reference;
        j["forget_emission_mass"] = r.forget_emission_mass;
        lines.push_back(j);
    }
    return lines;
}

// Outer loop: snapshot the behavior policy, roll out groups over an equal
// number of forget and retain train contexts, take inner_epochs ascent steps
// on the clipped surrogate, and log per-iteration diagnostics.
inline std::pair<TabularPolicy, TrainLog> train(const Environment& env, TabularPolicy policy,
                                                const TabularPolicy& reference,
                                                const RewardConfig& reward_cfg,
                                                const TrainConfig& cfg) {
    cfg.validate();
    check_same_space(policy, reference);

    RewardConfig effective = reward_cfg;
    if (cfg.mode == TrainMode::PenaltyOnly) effective.lambda2 = 0.0;

    std::vector<int> forget_ids, retain_ids;
    for (int id : env.train_ids) {
        (env.context(id).split == Split::Forget ? forget_ids : retain_ids).push_back(id);
    }
    if (forget_ids.empty() || retain_ids.empty())
        throw PreconditionError("training needs at least one context of each split");
    const int per_class =
        cfg.contexts_per_class > 0
            ? std::min<int>(cfg.contexts_per_class,
                            static_cast<int>(std::min(forget_ids.size(), retain_ids.size())))
            : static_cast<int>(std::min(forget_ids.size(), retain_ids.size()));

    TrainLog log;
    log.mode = to_string(cfg.mode);
    log.group_size = cfg.group_size;
    log.seed = cfg.seed;

    // Forget-class conditions tracked for the emission-mass diagnostic.
    std::vector<Condition> forget_conditions, all_conditions;
    for (const auto& ctx : env.contexts) {
        for (int p : ctx.prompt_ids) {
            const Condition c = condition_for(ctx, p, policy.granularity());
            if (!policy.has_condition(c)) continue;
            bool seen = false;
            for (const auto& e : all_conditions) seen = seen || e == c;
            if (!seen) {
                all_conditions.push_back(c);
                if (ctx.split == Split::Forget) forget_conditions.push_back(c);
            }
        }
    }
    const TokenSet penalized = env.lexicon.penalized_tokens();

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const TabularPolicy behavior = policy;  // snapshot refreshed every iteration

        struct Slot {
            int context_id;
            int prompt;
            int replica;
        };
        std::vector<Slot> slots;
        auto pick = [&](const std::vector<int>& ids) {
            for (int k = 0; k < per_class; ++k) {
                const int ctx_id = ids[(static_cast<std::size_t>(iter) * per_class + k) %
                                       ids.size()];
                const auto& ctx = env.context(ctx_id);
                const std::vector<int>& prompts =
                    cfg.train_prompts.empty() ? ctx.prompt_ids : cfg.train_prompts;
                for (int p : prompts)
                    for (int r = 0; r < cfg.groups_per_pair; ++r)
                        slots.push_back({ctx_id, p, r});
            }
        };
        pick(forget_ids);
        pick(retain_ids);

        std::vector<Group> groups(slots.size());
        parallel_for(slots.size(), cfg.threads, [&](std::size_t i) {
            const auto& ctx = env.context(slots[i].context_id);
            Rng rng(derive_seed(cfg.seed, "rollout", static_cast<std::uint64_t>(iter),
                                (static_cast<std::uint64_t>(slots[i].replica) << 24) |
                                    (static_cast<std::uint64_t>(slots[i].context_id) * 256 +
                                     static_cast<std::uint64_t>(slots[i].prompt))));
            groups[i] = rollout_group(behavior, ctx, slots[i].prompt, env.lexicon, effective,
                                      cfg.group_size, cfg.adv_eps, cfg.sample_stddev, rng);
        });

        bool kl_exact = true;
        for (int e = 0; e < cfg.inner_epochs; ++e) {
            const SurrogateResult res = surrogate_and_gradient(policy, reference, groups, cfg);
            kl_exact = res.kl_exact;
            auto& logits = policy.logits();
            for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += cfg.lr * res.grad[i];
        }
        if (!kl_exact) log.kl_path = "importance_weighted_estimator";

        TrainIterRecord rec;
        rec.iteration = iter;
        double sum_f = 0.0, sum_r = 0.0;
        std::size_t n_f = 0, n_r = 0;
        for (const auto& g : groups) {
            for (double r : g.rewards) {
                if (g.split == Split::Forget) {
                    sum_f += r;
                    ++n_f;
                } else {
                    sum_r += r;
                    ++n_r;
                }
            }
        }
        rec.mean_reward_forget = n_f ? sum_f / static_cast<double>(n_f) : 0.0;
        rec.mean_reward_retain = n_r ? sum_r / static_cast<double>(n_r) : 0.0;
        double kl_sum = 0.0;
        for (const auto& c : all_conditions)
            kl_sum += kl_divergence_markov(policy, reference, c);
        rec.kl_to_reference = kl_sum / static_cast<double>(all_conditions.size());
        double mass = 0.0;
        for (const auto& c : forget_conditions) mass += emission_mass(policy, c, penalized);
        rec.forget_emission_mass =
            forget_conditions.empty() ? 0.0 : mass / static_cast<double>(forget_conditions.size());
        log.records.push_back(rec);
    }
    return {std::move(policy), std::move(log)};
}

}  // namespace ulab
