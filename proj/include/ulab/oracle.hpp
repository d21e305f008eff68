#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ulab/lexicon.hpp"
#include "ulab/policy.hpp"
#include "ulab/rewards.hpp"

namespace ulab {

// Hallucinated-token set for one condition; must be disjoint from the
// grounded objects it was built against.
struct HallucinationSpec {
    TokenSet hallucinated;  // D_Hallu
    TokenSet grounded;      // O(x)

    void validate() const {
        const TokenId common = hallucinated.first_common(grounded);
        if (common >= 0)
            throw DisjointnessViolationError("hallucinated set intersects grounded objects");
    }
};

// All object-class tokens that are neither grounded in the context nor valid
// hypernyms of the grounded objects or of the forget concepts.
inline HallucinationSpec build_hallucination_spec(const ConceptLexicon& lex,
                                                  const TokenSet& grounded) {
    TokenSet allowed = grounded.unioned(lex.hypernyms_of(grounded))
                           .unioned(lex.hypernyms_of(lex.forget_keywords()));
    std::vector<TokenId> hallu;
    for (TokenId id : lex.object_class_tokens())
        if (!allowed.contains(id)) hallu.push_back(id);
    HallucinationSpec spec{TokenSet(std::move(hallu)), grounded};
    spec.validate();
    return spec;
}

using SequenceReward = std::function<double(const Sequence&)>;

namespace detail {

// log sum exp with max subtraction; -inf on an empty or all--inf input.
inline double log_sum_exp(const std::vector<double>& xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double x : xs) sum += std::exp(x - mx);
    return mx + std::log(sum);
}

}  // namespace detail

// log Z = log sum_y pi_ref(y) exp(R(y) / beta), accumulated in log domain.
inline double log_partition_function(const EnumeratedDistribution& ref,
                                     const SequenceReward& reward, double beta) {
    if (beta <= 0.0) throw PreconditionError("beta must be > 0");
    std::vector<double> terms(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
        terms[i] = ref.log_probs[i] + reward(ref.sequence_at(i)) / beta;
    return detail::log_sum_exp(terms);
}

inline double partition_function(const EnumeratedDistribution& ref, const SequenceReward& reward,
                                 double beta) {
    return std::exp(log_partition_function(ref, reward, beta));
}

// The KL-regularized optimum: pi*(y) = pi_ref(y) exp(R(y)/beta) / Z.
inline EnumeratedDistribution optimal_policy(const EnumeratedDistribution& ref,
                                             const SequenceReward& reward, double beta) {
    const double log_z = log_partition_function(ref, reward, beta);
    EnumeratedDistribution out = ref;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.log_probs[i] = ref.log_probs[i] + reward(ref.sequence_at(i)) / beta - log_z;
    return out;
}

// P_hallu(pi): probability of generating at least one hallucinated token.
inline double hallucination_prob(const EnumeratedDistribution& dist,
                                 const HallucinationSpec& spec) {
    spec.validate();
    std::vector<double> terms;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (contains_any(dist.sequence_at(i), spec.hallucinated))
            terms.push_back(dist.log_probs[i]);
    const double lse = detail::log_sum_exp(terms);
    return std::isfinite(lse) ? std::exp(lse) : 0.0;
}

struct LemmaReport {
    // instance descriptor
    int vocab_size = 0;
    int seq_len = 0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    Condition condition;

    double log_z_pen = 0.0;
    double log_z_comp = 0.0;
    double z_pen = 0.0;
    double z_comp = 0.0;
    double p_hallu_pen = 0.0;
    double p_hallu_comp = 0.0;
    bool precondition_ok = false;  // pi_ref puts mass on hypernym sequences
    bool verdict = false;          // Z_comp > Z_pen and P_pen > P_comp, strictly
};

inline json lemma_report_to_json(const LemmaReport& r) {
    json j;
    j["vocab_size"] = r.vocab_size;
    j["seq_len"] = r.seq_len;
    j["lambda1"] = r.lambda1;
    j["lambda2"] = r.lambda2;
    j["beta"] = r.beta;
    j["seed"] = r.seed;
    j["condition"] = json::array({r.condition.group, r.condition.prompt});
    j["log_z_pen"] = r.log_z_pen;
    j["log_z_comp"] = r.log_z_comp;
    j["z_pen"] = r.z_pen;
    j["z_comp"] = r.z_comp;
    j["p_hallu_pen"] = r.p_hallu_pen;
    j["p_hallu_comp"] = r.p_hallu_comp;
    j["precondition_ok"] = r.precondition_ok;
    j["verdict"] = r.verdict;
    return j;
}

// Numerical verification of the hallucination-reduction lemma on one
// enumerable instance.
//
// The proof's hallucinated-sequence event is "contains a token of D_Hallu
// and no hypernym": that is the construction under which the numerators of
// hallucinated sequences are untouched by the abstraction bonus, making the
// strict reduction a theorem whenever the reference policy puts mass on
// hypernym-bearing sequences. P_hallu here is computed over exactly that
// event. (hallucination_prob above keeps the unrestricted any-token
// definition for measurement purposes.)
inline LemmaReport verify_lemma1(const TabularPolicy& ref, const Condition& condition,
                                 const ConceptLexicon& lex, const HallucinationSpec& spec,
                                 double lambda1, double lambda2, double beta,
                                 std::size_t cap = kDefaultEnumerationCap) {
    if (lambda1 <= 0.0 || lambda2 <= 0.0) throw PreconditionError("lambda1, lambda2 must be > 0");
    if (beta <= 0.0) throw PreconditionError("beta must be > 0");
    spec.validate();
    if (spec.hallucinated.intersects(lex.hypernym_tokens()))
        throw DisjointnessViolationError("hallucinated set must exclude hypernym tokens");

    const EnumeratedDistribution dist = enumerate_distribution(ref, condition, cap);

    LemmaReport report;
    report.vocab_size = ref.vocab().size();
    report.seq_len = ref.seq_len();
    report.lambda1 = lambda1;
    report.lambda2 = lambda2;
    report.beta = beta;
    report.condition = condition;

    std::vector<double> pen_terms(dist.size()), comp_terms(dist.size());
    std::vector<double> pen_event, comp_event;
    bool hyper_mass = false;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const Sequence seq = dist.sequence_at(i);
        const double r_pen = reward_pen(seq, lex, lambda1) / beta;
        const bool has_hyper = contains_any(seq, lex.hypernym_tokens());
        const double r_comp = r_pen + (has_hyper ? lambda2 / beta : 0.0);
        pen_terms[i] = dist.log_probs[i] + r_pen;
        comp_terms[i] = dist.log_probs[i] + r_comp;
        hyper_mass = hyper_mass || (has_hyper && std::isfinite(dist.log_probs[i]));
        if (!has_hyper && contains_any(seq, spec.hallucinated)) {
            pen_event.push_back(pen_terms[i]);
            comp_event.push_back(comp_terms[i]);
        }
    }
    report.precondition_ok = hyper_mass;
    report.log_z_pen = detail::log_sum_exp(pen_terms);
    report.log_z_comp = detail::log_sum_exp(comp_terms);
    report.z_pen = std::exp(report.log_z_pen);
    report.z_comp = std::exp(report.log_z_comp);
    const double lse_pen = detail::log_sum_exp(pen_event);
    const double lse_comp = detail::log_sum_exp(comp_event);
    report.p_hallu_pen = std::isfinite(lse_pen) ? std::exp(lse_pen - report.log_z_pen) : 0.0;
    report.p_hallu_comp = std::isfinite(lse_comp) ? std::exp(lse_comp - report.log_z_comp) : 0.0;
    report.verdict = report.precondition_ok && report.log_z_comp > report.log_z_pen &&
                     report.p_hallu_pen > report.p_hallu_comp;
    return report;
}

// --- randomized instances for the property sweep ---

struct LemmaInstance {
    TabularPolicy ref;
    ConceptLexicon lexicon;
    HallucinationSpec spec;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double beta = 0.0;
};

// Small random enumerable instance: |V| <= 10, L <= 3, full-support random
// reference logits, disjoint forget/hypernym/hallucinated sets.
inline LemmaInstance make_random_lemma_instance(std::uint64_t seed) {
    Rng rng(seed);
    const int emittable = 3 + rng.uniform_int(7);  // 3..9 (vocab size 4..10)
    const int seq_len = 1 + rng.uniform_int(3);    // 1..3

    std::vector<std::string> tokens;
    for (int i = 0; i < emittable; ++i) tokens.push_back("t" + std::to_string(i));

    // First three tokens take the structural roles; leftovers are free
    // filler and occasionally extra members of one of the sets.
    LexiconSpec spec;
    spec.vocabulary = tokens;
    spec.forget = {tokens[0]};
    spec.hypernyms["t0"] = {tokens[1]};
    std::vector<std::string> hallu_names = {tokens[2]};
    for (int i = 3; i < emittable; ++i) {
        switch (rng.uniform_int(4)) {
            case 0: spec.hypernyms["t0"].push_back(tokens[static_cast<std::size_t>(i)]); break;
            case 1: hallu_names.push_back(tokens[static_cast<std::size_t>(i)]); break;
            case 2: spec.retain.push_back(tokens[static_cast<std::size_t>(i)]); break;
            default: break;  // plain filler token
        }
    }

    LemmaInstance inst;
    inst.lexicon = build_lexicon(spec);
    std::vector<TokenId> hallu_ids;
    for (const auto& name : hallu_names) hallu_ids.push_back(inst.lexicon.vocab().id_of(name));
    inst.spec = HallucinationSpec{TokenSet(std::move(hallu_ids)), TokenSet{}};
    inst.lambda1 = rng.uniform(0.1, 2.0);
    inst.lambda2 = rng.uniform(0.1, 2.0);
    inst.beta = std::exp(rng.uniform(std::log(0.25), std::log(4.0)));
    const double scale = rng.uniform(0.5, 3.0);
    inst.ref = init_policy(inst.lexicon.vocab(), {{0, 0}}, seq_len, scale, rng,
                           Granularity::PerClass, History::Markov1);
    return inst;
}

struct LemmaSweepSummary {
    int instances = 0;
    int verdicts_true = 0;
    int precondition_ok = 0;
    double min_margin_p = std::numeric_limits<double>::infinity();
    double min_margin_z = std::numeric_limits<double>::infinity();
};

inline LemmaSweepSummary summarize_lemma_reports(const std::vector<LemmaReport>& reports) {
    LemmaSweepSummary s;
    s.instances = static_cast<int>(reports.size());
    for (const auto& r : reports) {
        s.verdicts_true += r.verdict ? 1 : 0;
        s.precondition_ok += r.precondition_ok ? 1 : 0;
        s.min_margin_p = std::min(s.min_margin_p, r.p_hallu_pen - r.p_hallu_comp);
        s.min_margin_z = std::min(s.min_margin_z, r.z_comp - r.z_pen);
    }
    return s;
}

}  // namespace ulab
