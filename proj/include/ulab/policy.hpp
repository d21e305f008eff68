#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "ulab/json_io.hpp"
#include "ulab/rng.hpp"
#include "ulab/vocab.hpp"

namespace ulab {

// A conditional distribution is selected by (group, prompt). Under per-class
// granularity the group is the split (0 = forget, 1 = retain); under
// per-context granularity it is the context id.
struct Condition {
    std::int32_t group = 0;
    std::int32_t prompt = 0;
    auto operator<=>(const Condition&) const = default;
};

enum class Granularity { PerClass, PerContext };
enum class History { Markov1, Full };

inline const char* to_string(Granularity g) {
    return g == Granularity::PerClass ? "class" : "context";
}
inline const char* to_string(History h) { return h == History::Markov1 ? "markov1" : "full"; }

// Exhaustive distribution over all length-L sequences of emittable tokens,
// rank-indexed (position 0 is the most significant digit).
struct EnumeratedDistribution {
    int seq_len = 0;
    TokenId vocab_size = 0;  // includes the marker; emittable = vocab_size - 1
    std::vector<double> log_probs;

    TokenId emittable() const { return vocab_size - 1; }
    std::size_t size() const { return log_probs.size(); }

    Sequence sequence_at(std::size_t rank) const {
        Sequence seq(static_cast<std::size_t>(seq_len));
        const auto base = static_cast<std::size_t>(emittable());
        for (int i = seq_len - 1; i >= 0; --i) {
            seq[static_cast<std::size_t>(i)] = static_cast<TokenId>(rank % base + 1);
            rank /= base;
        }
        return seq;
    }

    std::size_t index_of(const Sequence& seq) const {
        if (static_cast<int>(seq.size()) != seq_len)
            throw InvalidSequenceError("sequence length mismatch");
        std::size_t rank = 0;
        for (TokenId id : seq) {
            if (id <= 0 || id >= vocab_size)
                throw InvalidSequenceError("token id outside emittable range");
            rank = rank * static_cast<std::size_t>(emittable()) +
                   static_cast<std::size_t>(id - 1);
        }
        return rank;
    }

    double log_prob_at(std::size_t rank) const { return log_probs[rank]; }
    double prob_at(std::size_t rank) const { return std::exp(log_probs[rank]); }
    double prob_of(const Sequence& seq) const { return prob_at(index_of(seq)); }
};

// Context- and prompt-conditioned autoregressive softmax over the vocabulary.
// Logits are indexed [condition][state][emittable token]; the marker has no
// emission column, which is what masks it. First-order conditionals by
// default; full-history states are available for short sequences.
class TabularPolicy {
  public:
    TabularPolicy() = default;

    TabularPolicy(Vocabulary vocab, std::vector<Condition> conditions, int seq_len,
                  Granularity granularity, History history)
        : vocab_(std::move(vocab)),
          conditions_(std::move(conditions)),
          seq_len_(seq_len),
          granularity_(granularity),
          history_(history) {
        if (seq_len_ <= 0) throw PreconditionError("sequence length must be positive");
        if (vocab_.emittable_count() < 1) throw PreconditionError("empty vocabulary");
        if (conditions_.empty()) throw PreconditionError("no conditions");
        if (history_ == History::Full && seq_len_ > 3)
            throw PreconditionError("full-history states are limited to L <= 3");
        for (std::size_t i = 0; i < conditions_.size(); ++i) {
            auto [it, inserted] = cond_index_.emplace(conditions_[i], static_cast<int>(i));
            if (!inserted) throw PreconditionError("duplicate condition");
        }
        const auto emit = static_cast<std::size_t>(vocab_.emittable_count());
        if (history_ == History::Markov1) {
            n_states_ = static_cast<std::size_t>(vocab_.size());
        } else {
            state_offsets_.assign(static_cast<std::size_t>(seq_len_), 0);
            std::size_t count = 0, block = 1;
            for (int t = 0; t < seq_len_; ++t) {
                state_offsets_[static_cast<std::size_t>(t)] = count;
                count += block;
                block *= emit;
            }
            n_states_ = count;
        }
        logits_.assign(conditions_.size() * n_states_ * emit, 0.0);
    }

    const Vocabulary& vocab() const { return vocab_; }
    int seq_len() const { return seq_len_; }
    Granularity granularity() const { return granularity_; }
    History history() const { return history_; }
    const std::vector<Condition>& conditions() const { return conditions_; }
    std::size_t n_states() const { return n_states_; }
    std::size_t param_count() const { return logits_.size(); }
    std::vector<double>& logits() { return logits_; }
    const std::vector<double>& logits() const { return logits_; }

    int condition_index(const Condition& c) const {
        auto it = cond_index_.find(c);
        if (it == cond_index_.end())
            throw PreconditionError("unknown condition (group " + std::to_string(c.group) +
                                    ", prompt " + std::to_string(c.prompt) + ")");
        return it->second;
    }

    bool has_condition(const Condition& c) const { return cond_index_.count(c) > 0; }

    // State before emitting position `pos` (0-based), given the prefix so far.
    std::size_t state_index(std::span<const TokenId> prefix) const {
        if (history_ == History::Markov1)
            return prefix.empty() ? static_cast<std::size_t>(Vocabulary::kBos)
                                  : static_cast<std::size_t>(prefix.back());
        const auto emit = static_cast<std::size_t>(vocab_.emittable_count());
        std::size_t rank = 0;
        for (TokenId id : prefix) rank = rank * emit + static_cast<std::size_t>(id - 1);
        return state_offsets_[prefix.size()] + rank;
    }

    // Child state after emitting `token` from `state` at depth `depth`
    // (depth = number of tokens emitted so far, before this one).
    std::size_t next_state(std::size_t state, int depth, TokenId token) const {
        if (history_ == History::Markov1) return static_cast<std::size_t>(token);
        const auto emit = static_cast<std::size_t>(vocab_.emittable_count());
        std::size_t rank = state - state_offsets_[static_cast<std::size_t>(depth)];
        return state_offsets_[static_cast<std::size_t>(depth) + 1] + rank * emit +
               static_cast<std::size_t>(token - 1);
    }

    std::size_t row_offset(int cond, std::size_t state) const {
        const auto emit = static_cast<std::size_t>(vocab_.emittable_count());
        return (static_cast<std::size_t>(cond) * n_states_ + state) * emit;
    }

    std::span<const double> row(int cond, std::size_t state) const {
        return {logits_.data() + row_offset(cond, state),
                static_cast<std::size_t>(vocab_.emittable_count())};
    }

    // Probabilities over emittable tokens for one row; out[k] is token id k+1.
    void softmax_row(int cond, std::size_t state, std::span<double> out,
                     double temperature = 1.0) const {
        auto r = row(cond, state);
        double mx = r[0];
        for (double v : r) mx = std::max(mx, v);
        double sum = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            out[k] = std::exp((r[k] - mx) / temperature);
            sum += out[k];
        }
        for (auto& v : out) v /= sum;
    }

    void log_softmax_row(int cond, std::size_t state, std::span<double> out) const {
        auto r = row(cond, state);
        double mx = r[0];
        for (double v : r) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : r) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t k = 0; k < r.size(); ++k) out[k] = r[k] - lse;
    }

    void check_sequence(const Sequence& seq) const {
        if (static_cast<int>(seq.size()) != seq_len_)
            throw InvalidSequenceError("sequence length != L");
        for (TokenId id : seq) {
            if (id == Vocabulary::kBos)
                throw InvalidSequenceError(
                    "begin-of-sequence marker inside a sequence has probability 0");
            if (!vocab_.valid_id(id)) throw InvalidSequenceError("token id out of range");
        }
    }

    double log_prob(const Condition& c, const Sequence& seq) const {
        check_sequence(seq);
        const int cond = condition_index(c);
        std::vector<double> lsm(static_cast<std::size_t>(vocab_.emittable_count()));
        double total = 0.0;
        for (int i = 0; i < seq_len_; ++i) {
            const auto state =
                state_index({seq.data(), static_cast<std::size_t>(i)});
            log_softmax_row(cond, state, lsm);
            total += lsm[static_cast<std::size_t>(seq[static_cast<std::size_t>(i)] - 1)];
        }
        return total;
    }

    Sequence sample(const Condition& c, Rng& rng, double temperature = 1.0) const {
        if (temperature <= 0.0) throw PreconditionError("temperature must be > 0");
        const int cond = condition_index(c);
        const auto emit = static_cast<std::size_t>(vocab_.emittable_count());
        std::vector<double> probs(emit);
        Sequence seq;
        seq.reserve(static_cast<std::size_t>(seq_len_));
        std::size_t state = state_index({});
        for (int i = 0; i < seq_len_; ++i) {
            softmax_row(cond, state, probs, temperature);
            const double u = rng.uniform();
            double acc = 0.0;
            TokenId chosen = static_cast<TokenId>(emit);  // last token absorbs roundoff
            for (std::size_t k = 0; k < emit; ++k) {
                acc += probs[k];
                if (u < acc) {
                    chosen = static_cast<TokenId>(k + 1);
                    break;
                }
            }
            seq.push_back(chosen);
            state = next_state(state, i, chosen);
        }
        return seq;
    }

  private:
    Vocabulary vocab_;
    std::vector<Condition> conditions_;
    std::map<Condition, int> cond_index_;
    int seq_len_ = 0;
    Granularity granularity_ = Granularity::PerClass;
    History history_ = History::Markov1;
    std::size_t n_states_ = 0;
    std::vector<std::size_t> state_offsets_;  // full-history only
    std::vector<double> logits_;
};

inline TabularPolicy init_policy(const Vocabulary& vocab, std::vector<Condition> conditions,
                                 int seq_len, double init_scale, Rng& rng,
                                 Granularity granularity = Granularity::PerClass,
                                 History history = History::Markov1) {
    if (init_scale < 0.0) throw PreconditionError("init_scale must be >= 0");
    TabularPolicy policy(vocab, std::move(conditions), seq_len, granularity, history);
    if (init_scale > 0.0) {
        for (auto& v : policy.logits()) v = rng.uniform(-init_scale, init_scale);
    }
    return policy;
}

constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

inline std::size_t enumeration_size(const TabularPolicy& policy,
                                    std::size_t cap = kDefaultEnumerationCap) {
    std::size_t total = 1;
    const auto emit = static_cast<std::size_t>(policy.vocab().emittable_count());
    for (int i = 0; i < policy.seq_len(); ++i) {
        if (total > cap / emit)
            throw EnumerationTooLargeError("sequence space exceeds enumeration cap");
        total *= emit;
    }
    if (total > cap) throw EnumerationTooLargeError("sequence space exceeds enumeration cap");
    return total;
}

// Exact distribution over all |V_emittable|^L sequences.
inline EnumeratedDistribution enumerate_distribution(const TabularPolicy& policy,
                                                     const Condition& c,
                                                     std::size_t cap = kDefaultEnumerationCap) {
    const std::size_t total = enumeration_size(policy, cap);
    const int cond = policy.condition_index(c);
    const auto emit = static_cast<std::size_t>(policy.vocab().emittable_count());
    const int L = policy.seq_len();

    // Log-softmax every reachable row once; leaves then cost O(1).
    std::vector<double> lsm(policy.n_states() * emit);
    for (std::size_t s = 0; s < policy.n_states(); ++s)
        policy.log_softmax_row(cond, s, {lsm.data() + s * emit, emit});

    EnumeratedDistribution dist;
    dist.seq_len = L;
    dist.vocab_size = policy.vocab().size();
    dist.log_probs.assign(total, 0.0);

    struct Frame {
        std::size_t state;
        double logp;
    };
    std::vector<Frame> stack(static_cast<std::size_t>(L) + 1);
    stack[0] = {policy.state_index({}), 0.0};
    std::vector<std::size_t> digit(static_cast<std::size_t>(L), 0);
    std::size_t rank = 0;
    int depth = 0;
    while (true) {
        if (depth == L) {
            dist.log_probs[rank++] = stack[static_cast<std::size_t>(depth)].logp;
            --depth;
            while (depth >= 0 && ++digit[static_cast<std::size_t>(depth)] == emit) {
                digit[static_cast<std::size_t>(depth)] = 0;
                --depth;
            }
            if (depth < 0) break;
        }
        const auto& f = stack[static_cast<std::size_t>(depth)];
        const auto k = digit[static_cast<std::size_t>(depth)];
        const auto token = static_cast<TokenId>(k + 1);
        stack[static_cast<std::size_t>(depth) + 1] = {
            policy.next_state(f.state, depth, token), f.logp + lsm[f.state * emit + k]};
        ++depth;
    }
    return dist;
}

inline void check_same_space(const TabularPolicy& p, const TabularPolicy& q) {
    if (!(p.vocab() == q.vocab())) throw PreconditionError("vocabulary mismatch");
    if (p.seq_len() != q.seq_len()) throw PreconditionError("sequence length mismatch");
}

// Exact sequence-level KL(p || q) between two enumerated distributions.
inline double kl_divergence(const EnumeratedDistribution& p, const EnumeratedDistribution& q) {
    if (p.size() != q.size() || p.seq_len != q.seq_len)
        throw PreconditionError("enumerations are not over the same space");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double lp = p.log_probs[i];
        const double lq = q.log_probs[i];
        if (!std::isfinite(lq) && std::isfinite(lp))
            throw SupportMismatchError("q assigns zero probability where p does not");
        kl += std::exp(lp) * (lp - lq);
    }
    return kl;
}

inline double kl_divergence(const TabularPolicy& p, const TabularPolicy& q, const Condition& c,
                            std::size_t cap = kDefaultEnumerationCap) {
    check_same_space(p, q);
    return kl_divergence(enumerate_distribution(p, c, cap), enumerate_distribution(q, c, cap));
}

// Same KL through the chain rule: sum over positions of the expected
// per-row KL under p's state-occupancy. O(L * V^2) for first-order policies;
// falls back to enumeration for full-history ones. Used as a cross-check and
// as the cheap path in training logs.
inline double kl_divergence_markov(const TabularPolicy& p, const TabularPolicy& q,
                                   const Condition& c) {
    check_same_space(p, q);
    if (p.history() != History::Markov1 || q.history() != History::Markov1)
        return kl_divergence(p, q, c);
    const int cp = p.condition_index(c);
    const int cq = q.condition_index(c);
    const auto emit = static_cast<std::size_t>(p.vocab().emittable_count());
    const auto V = static_cast<std::size_t>(p.vocab().size());
    std::vector<double> occ(V, 0.0), next(V, 0.0);
    occ[Vocabulary::kBos] = 1.0;
    std::vector<double> pp(emit), pq(emit);
    double kl = 0.0;
    for (int t = 0; t < p.seq_len(); ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t s = 0; s < V; ++s) {
            if (occ[s] == 0.0) continue;
            p.softmax_row(cp, s, pp);
            q.softmax_row(cq, s, pq);
            double row_kl = 0.0;
            for (std::size_t k = 0; k < emit; ++k) row_kl += pp[k] * std::log(pp[k] / pq[k]);
            kl += occ[s] * row_kl;
            for (std::size_t k = 0; k < emit; ++k) next[k + 1] += occ[s] * pp[k];
        }
        std::swap(occ, next);
    }
    return kl;
}

// Probability that a sampled sequence contains at least one token of `set`.
// Exact: complement of the avoid-mass computed by dynamic programming.
inline double emission_mass(const TabularPolicy& policy, const Condition& c, const TokenSet& set,
                            std::size_t cap = kDefaultEnumerationCap) {
    if (policy.history() != History::Markov1) {
        const auto dist = enumerate_distribution(policy, c, cap);
        double mass = 0.0;
        for (std::size_t i = 0; i < dist.size(); ++i) {
            const Sequence seq = dist.sequence_at(i);
            if (contains_any(seq, set)) mass += dist.prob_at(i);
        }
        return mass;
    }
    const int cond = policy.condition_index(c);
    const auto emit = static_cast<std::size_t>(policy.vocab().emittable_count());
    const auto V = static_cast<std::size_t>(policy.vocab().size());
    std::vector<double> occ(V, 0.0), next(V, 0.0), probs(emit);
    occ[Vocabulary::kBos] = 1.0;
    for (int t = 0; t < policy.seq_len(); ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t s = 0; s < V; ++s) {
            if (occ[s] == 0.0) continue;
            policy.softmax_row(cond, s, probs);
            for (std::size_t k = 0; k < emit; ++k) {
                const auto token = static_cast<TokenId>(k + 1);
                if (!set.contains(token)) next[static_cast<std::size_t>(token)] += occ[s] * probs[k];
            }
        }
        std::swap(occ, next);
    }
    double avoid = 0.0;
    for (double v : occ) avoid += v;
    return 1.0 - avoid;
}

// Full-batch gradient ascent on the mean log-likelihood of the records.
// Returns the refitted policy plus the NLL trace (entry 0 is the NLL before
// any update, entry k the NLL after k epochs).
inline std::pair<TabularPolicy, std::vector<double>> fit_mle(
    TabularPolicy policy, const std::vector<std::pair<Condition, Sequence>>& records, double lr,
    int epochs) {
    if (records.empty()) throw EmptyCorpusError("cannot fit on an empty corpus");
    if (lr <= 0.0) throw PreconditionError("learning rate must be > 0");
    if (epochs < 0) throw PreconditionError("epochs must be >= 0");
    for (const auto& [c, seq] : records) {
        policy.condition_index(c);
        policy.check_sequence(seq);
    }
    const auto emit = static_cast<std::size_t>(policy.vocab().emittable_count());
    const double inv_n = 1.0 / static_cast<double>(records.size());
    std::vector<double> grad(policy.param_count());
    std::vector<double> probs(emit);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(epochs) + 1);

    auto nll = [&]() {
        double total = 0.0;
        for (const auto& [c, seq] : records) total += policy.log_prob(c, seq);
        return -total * inv_n;
    };
    trace.push_back(nll());

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& [c, seq] : records) {
            const int cond = policy.condition_index(c);
            std::size_t state = policy.state_index({});
            for (int i = 0; i < policy.seq_len(); ++i) {
                const TokenId w = seq[static_cast<std::size_t>(i)];
                policy.softmax_row(cond, state, probs);
                const std::size_t base = policy.row_offset(cond, state);
                for (std::size_t k = 0; k < emit; ++k) grad[base + k] -= inv_n * probs[k];
                grad[base + static_cast<std::size_t>(w - 1)] += inv_n;
                state = policy.next_state(state, i, w);
            }
        }
        auto& logits = policy.logits();
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += lr * grad[i];
        trace.push_back(nll());
    }
    return {std::move(policy), std::move(trace)};
}

// --- checkpoint: JSON with vocabulary hash, L, condition index map and ---
// --- row-major logits; loading validates the hash. ---

inline void save_policy(const TabularPolicy& policy, const std::filesystem::path& path) {
    json j;
    char hash_buf[32];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(policy.vocab().hash()));
    j["format"] = "ulab-policy-v1";
    j["vocab_hash"] = std::string(hash_buf);
    j["sequence_length"] = policy.seq_len();
    j["granularity"] = to_string(policy.granularity());
    j["history"] = to_string(policy.history());
    json conds = json::array();
    for (const auto& c : policy.conditions()) conds.push_back(json::array({c.group, c.prompt}));
    j["conditions"] = conds;
    j["logits"] = policy.logits();
    write_json_file(path, j);
}

inline TabularPolicy load_policy(const std::filesystem::path& path, const Vocabulary& vocab) {
    const json j = load_json_file(path);
    if (j.value("format", "") != "ulab-policy-v1")
        throw Error("unrecognized checkpoint format in " + path.string());
    char hash_buf[32];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(vocab.hash()));
    if (j.at("vocab_hash").get<std::string>() != hash_buf)
        throw Error("checkpoint vocabulary hash mismatch: " + path.string());
    const int L = j.at("sequence_length").get<int>();
    const Granularity gran = j.at("granularity").get<std::string>() == "class"
                                 ? Granularity::PerClass
                                 : Granularity::PerContext;
    const History hist =
        j.at("history").get<std::string>() == "markov1" ? History::Markov1 : History::Full;
    std::vector<Condition> conds;
    for (const auto& c : j.at("conditions"))
        conds.push_back({c.at(0).get<std::int32_t>(), c.at(1).get<std::int32_t>()});
    TabularPolicy policy(vocab, std::move(conds), L, gran, hist);
    auto logits = j.at("logits").get<std::vector<double>>();
    if (logits.size() != policy.param_count())
        throw Error("checkpoint logit count mismatch: " + path.string());
    policy.logits() = std::move(logits);
    return policy;
}

}  // namespace ulab
