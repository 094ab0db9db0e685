#pragma once

// The upper-isolation construction on the priority tree {0}^{<omega}:
//
//   L_e : D'(e) = lim_s Delta(e, s)              (node of length 2e)
//   R_e : D = Phi_e^{W_e}  ->  K = Gamma^{W_e}   (node of length 2e + 1)
//
// K is a subset of the odd numbers. R-nodes keep agitators d_{e,x}; an L_e
// node takes control of d_{i,2(e-i)} for i < e and is initialized whenever
// some d_{i,j} with j < 2(e-i) changes D-membership.

#include "engine_base.hpp"
#include "functional.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dcesim
{

enum class AgitatorState : std::uint8_t
{
    Undefined,
    Defined,
    Active,
    Enumerated,
    Obsolete,
};

inline const char* to_string(AgitatorState a)
{
    switch (a)
    {
    case AgitatorState::Undefined: return "undefined";
    case AgitatorState::Defined: return "defined";
    case AgitatorState::Active: return "active";
    case AgitatorState::Enumerated: return "enumerated";
    case AgitatorState::Obsolete: return "obsolete";
    }
    return "?";
}

inline std::optional<AgitatorState> parse_agitator_state(const std::string& s)
{
    for (auto a : {AgitatorState::Undefined, AgitatorState::Defined, AgitatorState::Active,
                   AgitatorState::Enumerated, AgitatorState::Obsolete})
    {
        if (s == to_string(a)) return a;
    }
    return std::nullopt;
}

/// The agitator lifecycle, with active -> obsolete admitted.
inline bool legal_transition(AgitatorState from, AgitatorState to)
{
    using A = AgitatorState;
    if (to == A::Undefined) return from != A::Undefined;
    switch (from)
    {
    case A::Undefined: return to == A::Defined || to == A::Obsolete;
    case A::Defined: return to == A::Active || to == A::Obsolete;
    case A::Active: return to == A::Enumerated || to == A::Obsolete;
    default: return false;
    }
}

struct Agitator
{
    AgitatorState state = AgitatorState::Undefined;
    Element value = 0;
    Stage defined_at = 0;

    bool has_value() const
    {
        return state == AgitatorState::Defined || state == AgitatorState::Active || state == AgitatorState::Enumerated;
    }
};

struct RNodeState
{
    GammaGraph gamma; // oracle W_e
    std::map<Element, Agitator> agitators;
    ExpansionTracker ell; // over alpha-stages since the last initialization
    std::uint64_t last_ell = 0;

    AgitatorState state_of(Element x) const
    {
        auto it = agitators.find(x);
        return it == agitators.end() ? AgitatorState::Undefined : it->second.state;
    }
};

struct UpsilonEntry
{
    Segment sigma;
    Stage s_sigma = 0;
    std::map<std::uint64_t, Element> starred; // i -> d*_{sigma,i}
    bool restorable = true;
};

struct LNodeState
{
    std::vector<UpsilonEntry> upsilon; // in recording order
    std::optional<Stage> last_stage;
    std::size_t max_dom = 0; // largest |dom Upsilon| since the last initialization
};

class UpperIsolationEngine;

struct UpperProbe
{
    virtual ~UpperProbe() = default;
    virtual void ell_measured(const UpperIsolationEngine&, std::uint64_t /*e*/, std::uint64_t /*ell*/) {}
    /// R_e finished its Gamma sweep and lets its child act.
    virtual void sweep_done(const UpperIsolationEngine&, std::uint64_t /*e*/) {}
    /// L_e finished marking unrestorable records at this stage.
    virtual void marking_done(const UpperIsolationEngine&, std::uint64_t /*e*/) {}
    /// L_e recorded a new computation; it is upsilon.back().
    virtual void upsilon_recorded(const UpperIsolationEngine&, std::uint64_t /*e*/) {}
    virtual void stage_end(const UpperIsolationEngine&) {}
};

class UpperIsolationEngine : public EngineBase
{
public:
    explicit UpperIsolationEngine(AdversaryScript script, EngineOptions options = {})
        : EngineBase(std::move(script), options)
        , r_(script_.depth)
        , l_(script_.depth)
        , inits_(2 * script_.depth, 0)
        , last_init_stage_(2 * script_.depth)
        , delta_(script_.depth, false)
    {
        if (script_.construction != Construction::UpperIsolation)
            throw SimError(ErrorKind::ValidationError, "script is not an upper-isolation script");
        fresh_above_stage_ = false;
    }

    void set_probe(UpperProbe* probe) { probe_ = probe; }

    std::uint64_t nodes() const { return 2 * script_.depth; }

    static std::string actor(std::uint64_t node_depth)
    {
        return (node_depth % 2 == 0 ? "L" : "R") + std::to_string(node_depth / 2);
    }

    const RunOutcome& run()
    {
        trace_.header(header_json());
        bool last_stage_changed = true;
        std::uint64_t last_reach = 0;
        try
        {
            for (Stage s = 0;; ++s)
            {
                clock_.current = s;
                const auto before = fingerprint();
                const std::size_t applied = begin_stage(s);
                if (applied == 0 && !last_stage_changed && s >= nodes() && options_.skip_quiescent)
                {
                    // identical to stage s - 1; only the beta-stage bookkeeping moves
                    for (std::uint64_t d = 0; d < last_reach; d += 2) l_[d / 2].last_stage = s;
                }
                else
                {
                    last_reach = walk(s);
                    delta_update(s);
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

    /// Nodes of length <= s act from the root until one stops the stage.
    /// Returns how many nodes acted.
    std::uint64_t walk(Stage s)
    {
        std::uint64_t reach = 0;
        for (std::uint64_t d = 0; d < nodes() && d <= s; ++d)
        {
            reach = d + 1;
            const bool go_on = d % 2 == 0 ? l_step(d / 2, s) : r_step(d / 2, s);
            if (!go_on)
            {
                trace_.emit(s, actor(d), EventKind::StageStopped);
                break;
            }
        }
        return reach;
    }

    // ---- R_e ---------------------------------------------------------------

    bool r_step(std::uint64_t e, Stage s)
    {
        RNodeState& st = r_[e];
        const std::string who = actor(2 * e + 1);
        const std::set<Element>& W = world_.W(e);
        const std::set<Element>& D = history_.members();
        const std::set<Element>& K = world_.K();
        const AxiomFunctional& phi = world_.phi(e);

        const std::uint64_t ell = length_of_agreement(phi, SetView{&W}, [&](Element x) { return D.count(x) != 0; });
        st.last_ell = ell;
        const bool expansionary = st.ell.observe(ell);
        if (probe_) probe_->ell_measured(*this, e, ell);
        if (expansionary) trace_.emit(s, who, EventKind::Expansionary, {{"ell", ell}});

        // wait until every agitator with a value lies below ell
        if (!expansionary) return true;
        for (const auto& [x, a] : st.agitators)
        {
            if (a.has_value() && ell <= a.value) return true;
        }

        // extraction
        for (const auto& [x, a] : st.agitators)
        {
            if (!a.has_value() || !D.count(a.value)) continue;
            const Element x0 = x;
            const Element z = a.value;
            transition(e, x0, AgitatorState::Undefined, "extract");
            agitator_changed_D(e, x0, z, false, who);
            undefine_tail(e, x0, "extract");
            break; // everything above x0 is now undefined
        }

        // least incorrect Gamma(x): enumerate its agitator and stop
        for (const auto& [x, entry] : st.gamma.entries())
        {
            auto v = st.gamma.lookup(W, x);
            if (!v || *v == (K.count(x) != 0)) continue;
            const Element x0 = x;
            auto it = st.agitators.find(x0);
            if (it == st.agitators.end() || it->second.state != AgitatorState::Active)
            {
                throw SimError(ErrorKind::AgitatorViolation,
                               who + ": Gamma(" + std::to_string(x0) + ") is wrong but its agitator is not active");
            }
            const Element z = it->second.value;
            transition(e, x0, AgitatorState::Enumerated, "enumerate");
            agitator_changed_D(e, x0, z, true, who);
            undefine_tail(e, x0 + 1, "enumerate");
            return false;
        }

        // sweep
        const Element y = st.gamma.least_undefined(W);
        for (Element x = y; x < ell; ++x)
        {
            if (st.gamma.lookup(W, x)) continue;
            if (st.gamma.entries().count(x))
            {
                st.gamma.erase(x);
                trace_.emit(s, who, EventKind::GammaInvalidated, {{"x", x}});
            }
            const AgitatorState cur = st.state_of(x);
            if (K.count(x))
            {
                st.gamma.define(x, true, 0, W, s);
                trace_.emit(s, who, EventKind::GammaDefined, {{"x", x}, {"value", 1}, {"use", 0}});
                if (cur != AgitatorState::Obsolete) transition(e, x, AgitatorState::Obsolete, "4a");
            }
            else if (cur == AgitatorState::Undefined)
            {
                const Element v = fresh();
                st.agitators[x] = Agitator{AgitatorState::Undefined, v, s};
                transition(e, x, AgitatorState::Defined, "4b");
            }
            else if (cur == AgitatorState::Defined || cur == AgitatorState::Active)
            {
                const Element d = st.agitators[x].value;
                auto c = phi.evaluate(W, d);
                if (!c) throw std::logic_error("Phi^W(d) diverges below the length of agreement");
                alloc_.observe(c->use);
                st.gamma.define(x, false, c->use, W, s);
                trace_.emit(s, who, EventKind::GammaDefined, {{"x", x}, {"value", 0}, {"use", c->use}});
                if (cur == AgitatorState::Defined) transition(e, x, AgitatorState::Active, "4c");
            }
            else
            {
                throw SimError(ErrorKind::AgitatorViolation,
                               who + ": agitator for " + std::to_string(x) + " is " + to_string(cur) + " during the sweep");
            }
        }
        if (probe_) probe_->sweep_done(*this, e);
        return true;
    }

    // ---- L_e ---------------------------------------------------------------

    /// Upsilon(sigma)(t) = { i < e : D_t(d*_{sigma,i}) = 1 }.
    std::set<std::uint64_t> upsilon_at(const UpsilonEntry& entry, Stage t) const
    {
        std::set<std::uint64_t> out;
        for (const auto& [i, z] : entry.starred)
        {
            if (history_.membership_at(z, t)) out.insert(i);
        }
        return out;
    }

    bool l_step(std::uint64_t e, Stage s)
    {
        LNodeState& st = l_[e];
        const std::string who = actor(2 * e);

        // unrestorability marking
        if (st.last_stage)
        {
            const Stage prev = *st.last_stage;
            for (std::size_t a = 0; a < st.upsilon.size(); ++a)
            {
                const UpsilonEntry& sig = st.upsilon[a];
                if (sig.s_sigma > prev) continue;
                if (upsilon_at(sig, prev) == upsilon_at(sig, s)) continue;
                for (auto& tau : st.upsilon)
                {
                    if (tau.s_sigma > sig.s_sigma && tau.restorable)
                    {
                        tau.restorable = false;
                        trace_.emit(s, who, EventKind::UpsilonUnrestorable,
                                    {{"s_tau", tau.s_sigma}, {"because", sig.s_sigma}});
                    }
                }
            }
        }
        st.last_stage = s;
        if (probe_) probe_->marking_done(*this, e);

        // divergence
        const std::set<Element>& D = history_.members();
        const AxiomFunctional& phi = world_.phi(e);
        auto c = phi.evaluate(D, e);
        if (!c) return true;
        alloc_.observe(c->use);
        Segment sigma = Segment::of(D, c->use);

        // a recorded computation holds again
        for (const auto& entry : st.upsilon)
        {
            if (entry.sigma == sigma) return true;
            if (entry.sigma.is_prefix_of(D) && phi.evaluate_on(entry.sigma, e)) return true;
        }

        // new computation
        initialize_from(2 * e + 1, who, "record");
        UpsilonEntry entry;
        entry.sigma = std::move(sigma);
        entry.s_sigma = s;
        for (std::uint64_t i = 0; i < e; ++i)
        {
            const Element x = 2 * (e - i);
            RNodeState& ri = r_[i];
            const AgitatorState cur = ri.state_of(x);
            if (cur == AgitatorState::Active)
            {
                const Element z = ri.agitators[x].value;
                entry.starred[i] = z;
                transition(i, x, AgitatorState::Enumerated, "upsilon");
                agitator_changed_D(i, x, z, true, who);
                undefine_tail(i, x + 1, "upsilon");
            }
            else if (cur == AgitatorState::Defined)
            {
                transition(i, x, AgitatorState::Undefined, "upsilon");
                undefine_tail(i, x + 1, "upsilon");
            }
        }
        st.upsilon.push_back(std::move(entry));
        st.max_dom = std::max(st.max_dom, st.upsilon.size());

        const UpsilonEntry& rec = st.upsilon.back();
        nlohmann::ordered_json d;
        d["s_sigma"] = rec.s_sigma;
        d["sigma"] = {{"len", rec.sigma.length}, {"ones", rec.sigma.ones}};
        nlohmann::ordered_json starred = nlohmann::ordered_json::object();
        for (const auto& [i, z] : rec.starred) starred[std::to_string(i)] = z;
        d["starred"] = starred;
        d["dom"] = st.upsilon.size();
        trace_.emit(s, who, EventKind::UpsilonRecord, std::move(d));
        if (probe_) probe_->upsilon_recorded(*this, e);
        return true;
    }

    // ---- Delta ---------------------------------------------------------------

    void delta_update(Stage s)
    {
        for (std::uint64_t e = 0; e < script_.depth; ++e)
        {
            const bool v = e < s && world_.phi(e).evaluate(history_.members(), e).has_value();
            if (v != delta_[e])
            {
                delta_[e] = v;
                trace_.emit(s, "engine", EventKind::DeltaFlip, {{"e", e}, {"value", v ? 1 : 0}});
            }
        }
    }

    // ---- initialization ------------------------------------------------------

    /// Initializes every node of length >= from.
    void initialize_from(std::uint64_t from, const std::string& by, const char* reason)
    {
        const Stage s = clock_.current;
        for (std::uint64_t d = from; d < nodes(); ++d)
        {
            if (last_init_stage_[d] == s && pristine(d)) continue;
            if (d % 2 == 0) l_[d / 2] = LNodeState{};
            else
            {
                const auto last = r_[d / 2].last_ell;
                r_[d / 2] = RNodeState{};
                r_[d / 2].last_ell = last;
            }
            ++inits_[d];
            last_init_stage_[d] = s;
            trace_.emit(s, actor(d), EventKind::Initialized, {{"by", by}, {"reason", reason}, {"index", d}});
        }
    }

    /// L_e is initialized when d_{i,j}, j < 2(e - i), changes; the least
    /// such e is i + floor(j/2) + 1 and initializing it covers all below.
    static std::uint64_t least_triggered_l(std::uint64_t i, Element j) { return i + j / 2 + 1; }

    // ---- accessors -------------------------------------------------------------

    const RNodeState& r(std::uint64_t e) const { return r_.at(e); }
    const LNodeState& l(std::uint64_t e) const { return l_.at(e); }
    bool delta(std::uint64_t e) const { return delta_.at(e); }
    std::uint64_t initializations(std::uint64_t node_depth) const { return inits_.at(node_depth); }

    nlohmann::ordered_json summary() const
    {
        nlohmann::ordered_json j;
        std::vector<std::uint64_t> maxell, dom;
        for (const auto& st : r_) maxell.push_back(st.ell.max());
        for (const auto& st : l_) dom.push_back(st.upsilon.size());
        j["initializations"] = inits_;
        j["max_ell"] = maxell;
        j["dom_upsilon"] = dom;
        j["d_size"] = history_.members().size();
        j["aborted"] = outcome_.aborted;
        return j;
    }

    std::string state_hash() const
    {
        std::string out;
        hash_core(out);
        for (const auto& st : r_)
        {
            out += "|R";
            put(out, st.ell.max());
            out += 'g';
            for (const auto& [x, en] : st.gamma.entries())
            {
                put(out, x);
                out += en.value ? "=1@" : "=0@";
                hash_segment(out, en.snapshot);
            }
            out += 'a';
            for (const auto& [x, a] : st.agitators)
            {
                put(out, x);
                out += ':';
                put(out, static_cast<int>(a.state));
                out += ':';
                put(out, a.value);
                out += ',';
            }
        }
        for (const auto& st : l_)
        {
            out += "|L";
            if (st.last_stage) put(out, *st.last_stage);
            else out += '-';
            for (const auto& en : st.upsilon)
            {
                hash_segment(out, en.sigma);
                put(out, en.s_sigma);
                out += en.restorable ? 'r' : 'u';
                for (const auto& [i, z] : en.starred)
                {
                    put(out, i);
                    out += '*';
                    put(out, z);
                    out += ',';
                }
            }
        }
        out += "|Delta";
        for (bool v : delta_) out += v ? '1' : '0';
        Fnv128 h;
        h.update(out);
        return h.hex();
    }

private:
    bool pristine(std::uint64_t d) const
    {
        if (d % 2 == 0)
        {
            const auto& st = l_[d / 2];
            return st.upsilon.empty() && !st.last_stage;
        }
        const auto& st = r_[d / 2];
        if (!st.gamma.entries().empty() || st.ell.max() != 0) return false;
        for (const auto& [x, a] : st.agitators)
        {
            if (a.state != AgitatorState::Undefined) return false;
        }
        return true;
    }

    void transition(std::uint64_t e, Element x, AgitatorState to, const char* item)
    {
        RNodeState& st = r_[e];
        Agitator& a = st.agitators[x];
        if (!legal_transition(a.state, to))
        {
            throw SimError(ErrorKind::AgitatorViolation,
                           actor(2 * e + 1) + ": illegal agitator transition " + to_string(a.state) + " -> " +
                               to_string(to) + " for x=" + std::to_string(x));
        }
        nlohmann::ordered_json d;
        d["x"] = x;
        d["from"] = to_string(a.state);
        d["to"] = to_string(to);
        d["item"] = item;
        if (to == AgitatorState::Defined || a.has_value()) d["value"] = a.value;
        a.state = to;
        trace_.emit(clock_.current, actor(2 * e + 1), EventKind::AgitatorTransition, std::move(d));
        if (to == AgitatorState::Undefined) st.agitators.erase(x);
    }

    /// Agitators d_{e,y} for y >= from become undefined (obsolete ones stay),
    /// and so does Gamma(y).
    void undefine_tail(std::uint64_t e, Element from, const char* item)
    {
        RNodeState& st = r_[e];
        std::vector<Element> xs;
        for (auto it = st.agitators.lower_bound(from); it != st.agitators.end(); ++it)
        {
            if (it->second.state != AgitatorState::Obsolete) xs.push_back(it->first);
        }
        for (Element x : xs)
        {
            transition(e, x, AgitatorState::Undefined, item);
            if (st.gamma.entries().count(x))
            {
                st.gamma.erase(x);
                trace_.emit(clock_.current, actor(2 * e + 1), EventKind::GammaInvalidated, {{"x", x}, {"item", item}});
            }
        }
    }

    void agitator_changed_D(std::uint64_t i, Element j, Element z, bool enter, const std::string& who)
    {
        nlohmann::ordered_json extra;
        extra["node"] = actor(2 * i + 1);
        extra["x"] = j;
        if (enter) record_enter(z, who, extra);
        else record_exit(z, who, extra);
        const std::uint64_t e = least_triggered_l(i, j);
        if (e < script_.depth) initialize_from(2 * e, actor(2 * i + 1), "agitator");
    }

    std::vector<RNodeState> r_;
    std::vector<LNodeState> l_;
    std::vector<std::uint64_t> inits_;
    std::vector<std::optional<Stage>> last_init_stage_;
    std::vector<bool> delta_;
    UpperProbe* probe_ = nullptr;
};

} // namespace dcesim
