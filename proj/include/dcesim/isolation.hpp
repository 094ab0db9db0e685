#pragma once

// The isolation-pair construction: P_e and N_e strategies interleaved in
// substages, disagreement pairs, restoration and initialization.
//
//   P_e : Phi_e^{L(D)} != D
//   N_e : Psi_{e0}^D = W_{e1}  ->  Gamma^{L(D)} = W_{e1},   e = <e0, e1>
//
// Priority P_0 > N_0 > P_1 > N_1 > ...; combined index 2e for P_e and
// 2e + 1 for N_e.

#include "engine_base.hpp"
#include "functional.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dcesim
{

struct PState
{
    std::optional<Element> witness;
    bool has_disagreement = false;
};

struct DisagreementPair
{
    Element n = 0;
    Segment sigma; // a past D-segment
    Segment tau;   // a past L(D)-segment, |tau| = Gamma-use
    Stage s_sigma = 0;
    Stage created_at = 0;
    bool superseded = false;
};

struct NState
{
    GammaGraph gamma;
    std::map<Element, std::vector<DisagreementPair>> pairs; // each list ordered by s_sigma
    bool has_disagreement = false;
    ExpansionTracker ell;
    std::uint64_t last_ell = 0;

    // set when the disagreement came from restoring a pair
    struct Received
    {
        Element n = 0;
        Segment sigma;
        Stage stage = 0;
    };
    std::optional<Received> received;
};

class IsolationEngine;

/// Hooks the verifier uses to inspect live state.
struct IsolationProbe
{
    virtual ~IsolationProbe() = default;
    virtual void ell_measured(const IsolationEngine&, std::uint64_t /*e*/, std::uint64_t /*ell*/) {}
    /// After an expansionary N-substage that did not receive disagreement.
    virtual void n_step_done(const IsolationEngine&, std::uint64_t /*e*/) {}
    virtual void stage_end(const IsolationEngine&) {}
};

class IsolationEngine : public EngineBase
{
public:
    explicit IsolationEngine(AdversaryScript script, EngineOptions options = {})
        : EngineBase(std::move(script), options)
        , p_(script_.depth)
        , n_(script_.depth)
        , inits_(2 * script_.depth, 0)
        , last_init_stage_(2 * script_.depth)
        , disagreements_(2 * script_.depth, 0)
    {
        if (script_.construction != Construction::Isolation)
            throw SimError(ErrorKind::ValidationError, "script is not an isolation script");
    }

    void set_probe(IsolationProbe* probe) { probe_ = probe; }

    static std::string actor(std::uint64_t index)
    {
        return (index % 2 == 0 ? "P" : "N") + std::to_string(index / 2);
    }

    const RunOutcome& run()
    {
        trace_.header(header_json());
        const std::uint64_t strategies = 2 * script_.depth;
        bool last_stage_changed = true;
        try
        {
            for (Stage s = 0;; ++s)
            {
                clock_.current = s;
                const auto before = fingerprint();
                const std::size_t applied = begin_stage(s);
                const bool saturated = s > strategies;
                if (applied == 0 && !last_stage_changed && saturated && options_.skip_quiescent)
                {
                    // identical to stage s - 1: every strategy repeats its no-op
                }
                else
                {
                    const std::uint64_t substages = std::min<std::uint64_t>(s, strategies);
                    for (std::uint64_t t = 0; t < substages; ++t)
                    {
                        if (t % 2 == 0) p_step(t / 2, s);
                        else n_step(t / 2, s);
                    }
                    if (probe_) probe_->stage_end(*this);
                }
                last_stage_changed = !(fingerprint() == before);
                if (applied != 0 || last_stage_changed) trace_.stage_hash(s, state_hash());
                if (s == clock_.horizon) break;
            }
        }
        catch (const SimError& e)
        {
            abort_run(e);
        }
        finish_trace(summary());
        return outcome_;
    }

    // ---- per-strategy steps (public for unit tests) ----------------------

    void p_step(std::uint64_t e, Stage s)
    {
        PState& st = p_[e];
        const std::string who = actor(2 * e);
        if (st.has_disagreement) return;
        if (!st.witness)
        {
            st.witness = fresh();
            trace_.emit(s, who, EventKind::WitnessPicked, {{"x", *st.witness}});
            return;
        }
        auto c = world_.phi(e).evaluate(history_.lachlan(), *st.witness);
        if (!c) return;
        alloc_.observe(c->use);
        if (c->value != 0) return;
        record_enter(*st.witness, who);
        st.has_disagreement = true;
        ++disagreements_[2 * e];
        trace_.emit(s, who, EventKind::Disagreement, {{"x", *st.witness}, {"use", c->use}});
        initialize_below(2 * e);
    }

    void n_step(std::uint64_t e, Stage s)
    {
        NState& st = n_[e];
        const std::string who = actor(2 * e + 1);
        const auto [e0, e1] = unpair(e);
        const AxiomFunctional& psi = world_.psi(e0);
        const std::set<Element>& W = world_.W(e1);
        const std::set<Element>& D = history_.members();

        const std::uint64_t ell = length_of_agreement(psi, SetView{&D}, [&](Element x) { return W.count(x) != 0; });
        st.last_ell = ell;
        const bool expansionary = st.ell.observe(ell);
        if (probe_) probe_->ell_measured(*this, e, ell);
        if (expansionary) trace_.emit(s, who, EventKind::Expansionary, {{"ell", ell}});
        if (st.has_disagreement || !expansionary) return;

        const std::set<Stage>& L = history_.lachlan();
        Element n = 0;
        bool incorrect = false;
        for (;; ++n)
        {
            auto v = st.gamma.lookup(L, n);
            if (!v)
            {
                if (st.gamma.entries().count(n))
                {
                    st.gamma.erase(n);
                    trace_.emit(s, who, EventKind::GammaInvalidated, {{"n", n}});
                }
                break;
            }
            if (*v != (W.count(n) != 0))
            {
                incorrect = true;
                break;
            }
        }

        if (incorrect)
        {
            receive_disagreement(e, n, s);
            return;
        }

        // Psi(n) must converge for the pair's sigma to be a computation
        if (n < ell) define_gamma(e, n, s);
        if (probe_) probe_->n_step_done(*this, e);
    }

    /// Resets every strategy strictly below combined index k.
    void initialize_below(std::uint64_t k)
    {
        const Stage s = clock_.current;
        for (std::uint64_t j = k + 1; j < 2 * script_.depth; ++j)
        {
            if (last_init_stage_[j] == s && pristine(j)) continue;
            if (j % 2 == 0) p_[j / 2] = PState{};
            else
            {
                NState& st = n_[j / 2];
                ExpansionTracker keep = st.ell;
                const auto last = st.last_ell;
                st = NState{};
                st.ell = keep; // l(e, s) is a global function of the stage
                st.last_ell = last;
            }
            ++inits_[j];
            last_init_stage_[j] = s;
            trace_.emit(s, actor(j), EventKind::Initialized, {{"by", actor(k)}, {"index", j}});
        }
    }

    const PState& p(std::uint64_t e) const { return p_.at(e); }
    const NState& n(std::uint64_t e) const { return n_.at(e); }
    std::uint64_t initializations(std::uint64_t index) const { return inits_.at(index); }

    nlohmann::ordered_json summary() const
    {
        nlohmann::ordered_json j;
        std::vector<std::uint64_t> maxell;
        for (const auto& st : n_) maxell.push_back(st.ell.max());
        j["disagreements"] = disagreements_;
        j["initializations"] = inits_;
        j["max_ell"] = maxell;
        j["d_size"] = history_.members().size();
        j["lachlan_size"] = history_.lachlan().size();
        j["aborted"] = outcome_.aborted;
        return j;
    }

    std::string state_hash() const
    {
        std::string out;
        hash_core(out);
        for (const auto& st : p_)
        {
            out += "|P" + (st.witness ? std::to_string(*st.witness) : std::string("-")) + (st.has_disagreement ? "!" : ".");
        }
        for (const auto& st : n_)
        {
            out += "|N" + std::string(st.has_disagreement ? "!" : ".") + std::to_string(st.ell.max()) + "g";
            for (const auto& [x, en] : st.gamma.entries())
            {
                out += std::to_string(x) + "=" + (en.value ? "1" : "0") + "@";
                hash_segment(out, en.snapshot);
            }
            out += "p";
            for (const auto& [x, list] : st.pairs)
            {
                for (const auto& pr : list)
                {
                    out += std::to_string(x) + (pr.superseded ? "x" : "o") + std::to_string(pr.s_sigma) + "/";
                    hash_segment(out, pr.sigma);
                    hash_segment(out, pr.tau);
                }
            }
        }
        Fnv128 h;
        h.update(out);
        return h.hex();
    }

private:
    bool pristine(std::uint64_t j) const
    {
        if (j % 2 == 0)
        {
            const auto& st = p_[j / 2];
            return !st.witness && !st.has_disagreement;
        }
        const auto& st = n_[j / 2];
        return st.gamma.entries().empty() && st.pairs.empty() && !st.has_disagreement;
    }

    static nlohmann::ordered_json segment_json(const Segment& s)
    {
        return {{"len", s.length}, {"ones", s.ones}};
    }

    void define_gamma(std::uint64_t e, Element n, Stage s)
    {
        NState& st = n_[e];
        const std::string who = actor(2 * e + 1);
        const auto [e0, e1] = unpair(e);
        const std::set<Stage>& L = history_.lachlan();
        const bool value = world_.W(e1).count(n) != 0;
        auto& list = st.pairs[n];

        // (a1): an old computation is restorable; keep its use
        DisagreementPair* old = nullptr;
        for (auto& pr : list)
        {
            if (history_.is_restorable(s, pr.sigma))
            {
                old = &pr;
                break;
            }
        }

        DisagreementPair fresh_pair;
        fresh_pair.n = n;
        fresh_pair.created_at = s;
        std::uint64_t k = 0;
        const char* which = nullptr;
        if (old)
        {
            k = old->tau.length;
            old->superseded = true;
            trace_.emit(s, who, EventKind::PairSuperseded, {{"n", n}, {"s_sigma", old->s_sigma}, {"created_at", old->created_at}});
            fresh_pair.sigma = old->sigma;
            fresh_pair.s_sigma = old->s_sigma;
            which = "a1";
        }
        else
        {
            auto c = world_.psi(e0).evaluate(history_.members(), n);
            if (!c) throw std::logic_error("Psi(n) diverges below the length of agreement");
            alloc_.observe(c->use);
            fresh_pair.sigma = Segment::of(history_.members(), c->use);
            fresh_pair.s_sigma = s;
            k = fresh();
            which = "a2";
        }
        fresh_pair.tau = Segment::of(L, k);
        st.gamma.define(n, value, k, L, s);

        nlohmann::ordered_json pd;
        pd["n"] = n;
        pd["case"] = which;
        pd["s_sigma"] = fresh_pair.s_sigma;
        pd["sigma"] = segment_json(fresh_pair.sigma);
        pd["tau"] = segment_json(fresh_pair.tau);
        trace_.emit(s, who, EventKind::PairCreated, std::move(pd));
        trace_.emit(s, who, EventKind::GammaDefined, {{"n", n}, {"value", value ? 1 : 0}, {"use", k}});

        auto pos = std::upper_bound(list.begin(), list.end(), fresh_pair.s_sigma,
                                    [](Stage v, const DisagreementPair& p) { return v < p.s_sigma; });
        list.insert(pos, std::move(fresh_pair));
    }

    void receive_disagreement(std::uint64_t e, Element n, Stage s)
    {
        NState& st = n_[e];
        const std::string who = actor(2 * e + 1);
        const std::set<Stage>& L = history_.lachlan();

        const DisagreementPair* chosen = nullptr;
        std::size_t qualifying = 0;
        for (const auto& pr : st.pairs[n])
        {
            if (!pr.tau.is_prefix_of(L)) continue;
            ++qualifying;
            if (!chosen) chosen = &pr; // oldest by s_sigma
        }
        if (!chosen)
        {
            throw SimError(ErrorKind::NoRestorablePair,
                           who + " at stage " + std::to_string(s) + ": no pair for n=" + std::to_string(n) + " has tau below L(D)");
        }
        if (!history_.is_restorable(s, chosen->sigma))
        {
            throw SimError(ErrorKind::NotRestorable,
                           who + " at stage " + std::to_string(s) + " cannot restore D to sigma " + chosen->sigma.to_bits());
        }
        const Segment sigma = chosen->sigma;
        const Stage s_sigma = chosen->s_sigma;

        std::vector<Element> extract;
        for (auto it = history_.members().begin(); it != history_.members().end() && *it < sigma.length; ++it)
        {
            if (!sigma.at(*it)) extract.push_back(*it);
        }
        for (Element z : extract) record_exit(z, who);

        st.has_disagreement = true;
        st.received = NState::Received{n, sigma, s};
        ++disagreements_[2 * e + 1];
        nlohmann::ordered_json d;
        d["n"] = n;
        d["s_sigma"] = s_sigma;
        d["sigma"] = segment_json(sigma);
        d["restorable"] = true;
        d["qualifying_pairs"] = qualifying;
        trace_.emit(s, who, EventKind::Disagreement, std::move(d));
        initialize_below(2 * e + 1);
    }

    std::vector<PState> p_;
    std::vector<NState> n_;
    std::vector<std::uint64_t> inits_;
    std::vector<std::optional<Stage>> last_init_stage_;
    std::vector<std::uint64_t> disagreements_;
    IsolationProbe* probe_ = nullptr;
};

} // namespace dcesim
