#pragma once

// Seeded adversaries. Each reacts to the construction's current state at the
// start of every stage; the events it produces are recorded into the run's
// script, so the recorded script alone replays the run.

#include "isolation.hpp"
#include "upper_isolation.hpp"

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace dcesim
{

/// Per-stage event probabilities in parts per thousand, halving every
/// half_life stages.
struct Profile
{
    std::string name;
    std::uint32_t w = 0;
    std::uint32_t k = 0;
    std::uint32_t phi = 0;
    std::uint32_t psi = 0;
    Stage half_life = 1;
    std::uint32_t max_oracle = 1; // cap on the number of oracle positions an axiom reads
};

inline Profile profile_by_name(const std::string& name)
{
    if (name == "empty") return {"empty", 0, 0, 0, 0, 1, 1};
    if (name == "sparse") return {"sparse", 20, 15, 60, 60, 200, 3};
    if (name == "default") return {"default", 60, 40, 200, 200, 300, 5};
    if (name == "dense") return {"dense", 150, 100, 400, 400, 400, 7};
    throw SimError(ErrorKind::ValidationError, "unknown profile '" + name + "' (empty, sparse, default, dense)");
}

class Rng
{
public:
    explicit Rng(std::uint64_t seed)
        : gen_(seed)
    {
    }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }
    bool per_mille(std::uint64_t p) { return below(1000) < p; }

    /// 1 + geometric(1/2), capped.
    std::uint64_t geometric(std::uint64_t cap)
    {
        std::uint64_t n = 1;
        while (n < cap && below(2)) ++n;
        return n;
    }

    template <class C>
    auto pick(const C& c)
    {
        auto it = c.begin();
        std::advance(it, static_cast<std::ptrdiff_t>(below(c.size())));
        return *it;
    }

private:
    std::mt19937_64 gen_;
};

namespace detail
{

inline Axiom make_axiom(std::set<Element> X, std::uint8_t y, const std::set<Element>& P, const std::set<Element>& N)
{
    Axiom a;
    a.X.assign(X.begin(), X.end());
    a.y = y;
    a.P.assign(P.begin(), P.end());
    a.N.assign(N.begin(), N.end());
    return a;
}

/// Adds `a` to the stage's batch when it is consistent with everything
/// inserted so far, including earlier events of the same batch.
inline bool offer_axiom(const World& world, std::vector<ScriptEvent>& out, FunctionalId id, const Axiom& a)
{
    const AxiomFunctional& f = world.functional(id);
    if (!f.conflict(a).empty()) return false;
    for (const auto& ev : out)
    {
        const auto* ia = std::get_if<InsertAxiom>(&ev.body);
        if (!ia || !(ia->functional == id)) continue;
        if (!axiom_conflict(a, {&ia->axiom}).empty() || !axiom_conflict(ia->axiom, {&a}).empty()) return false;
    }
    out.push_back(ScriptEvent{0, InsertAxiom{id, a}});
    return true;
}

inline std::uint64_t decayed(std::uint32_t rate, Stage half_life, Stage s)
{
    const Stage halvings = s / half_life;
    if (halvings >= 32) return 0;
    const std::uint64_t r = static_cast<std::uint64_t>(rate) >> halvings;
    // linear between consecutive halvings
    return r * (2 * half_life - s % half_life) / (2 * half_life);
}

} // namespace detail

/// Drives Psi_{e0}^D towards W_{e1}, later enumerates W to contradict
/// Gamma, and feeds Phi_e^{L(D)} computations on P-witnesses.
class IsolationAdversary
{
public:
    IsolationAdversary(const IsolationEngine& eng, std::uint64_t seed, Profile profile)
        : eng_(eng)
        , rng_(seed)
        , profile_(std::move(profile))
    {
    }

    void operator()(Stage s, std::vector<ScriptEvent>& out)
    {
        const std::uint64_t depth = eng_.depth();
        if (depth == 0) return;
        if (rng_.per_mille(detail::decayed(profile_.psi, profile_.half_life, s))) psi_event(rng_.below(depth), out);
        if (rng_.per_mille(detail::decayed(profile_.w, profile_.half_life, s))) w_event(rng_.below(depth), out);
        if (rng_.per_mille(detail::decayed(profile_.phi, profile_.half_life, s) / 4)) phi_event(rng_.below(depth), out);
        if (rng_.per_mille(detail::decayed(profile_.phi, profile_.half_life, s))) release_event(rng_.below(depth), out);
    }

private:
    /// Oracle positions for a D-query: members of D and nearby non-members.
    void d_oracle(std::uint64_t e, std::set<Element>& P, std::set<Element>& N)
    {
        const auto& D = eng_.history().members();
        const Element top = eng_.allocator().peek() + 4;
        const std::uint64_t n = rng_.geometric(profile_.max_oracle);
        for (std::uint64_t i = 0; i < n; ++i)
        {
            const Element z = (!D.empty() && rng_.below(2)) ? rng_.pick(D) : rng_.below(top);
            (D.count(z) ? P : N).insert(z);
        }
        // a lower-priority witness entering D later spoils the computation
        if (e + 1 < eng_.depth() && rng_.below(4))
        {
            const auto& w = eng_.p(e + 1 + rng_.below(eng_.depth() - e - 1)).witness;
            if (w && !D.count(*w)) N.insert(*w);
        }
    }

    void psi_event(std::uint64_t e, std::vector<ScriptEvent>& out)
    {
        const auto [e0, e1] = unpair(e);
        const auto& st = eng_.n(e);
        const Element n = rng_.below(4) ? st.last_ell : rng_.below(st.last_ell + 1);
        const auto& W = eng_.world().W(e1);
        std::uint8_t y = W.count(n) ? 1 : 0;
        if (rng_.below(10) == 0) y ^= 1;
        std::set<Element> X{n};
        const std::uint64_t run = 1 + rng_.below(4);
        for (Element m = n + 1; m < n + run && (W.count(m) ? 1 : 0) == y; ++m) X.insert(m);
        std::set<Element> P, N;
        d_oracle(e, P, N);
        if (!detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Psi, e0}, detail::make_axiom(X, y, P, N)))
            detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Psi, e0}, detail::make_axiom({n}, y, P, N));
    }

    void w_event(std::uint64_t e, std::vector<ScriptEvent>& out)
    {
        const auto e1 = unpair(e).second;
        const auto& g = eng_.n(e).gamma.entries();
        Element n = rng_.below(8);
        if (!g.empty() && rng_.below(2)) n = rng_.pick(g).first;
        out.push_back(ScriptEvent{0, EnumerateW{e1, n}});
    }

    void phi_event(std::uint64_t e, std::vector<ScriptEvent>& out)
    {
        const auto& w = eng_.p(e).witness;
        if (!w) return;
        // witnesses read by Psi computations are kept for release_event
        for (const auto& [id, f] : eng_.world().functionals())
        {
            if (id.family != FunctionalFamily::Psi) continue;
            for (const Axiom& a : f.base())
            {
                if (std::binary_search(a.N.begin(), a.N.end(), *w)) return;
            }
        }
        const auto& L = eng_.history().lachlan();
        std::set<Element> P, N;
        const std::uint64_t n = rng_.geometric(profile_.max_oracle);
        for (std::uint64_t i = 0; i < n; ++i)
        {
            Stage z = rng_.below(eng_.stage() + 2);
            // entry stages of current members may join L(D) later
            if (!eng_.history().members().empty() && rng_.below(2))
                z = *eng_.history().entry_stage(rng_.pick(eng_.history().members()));
            (L.count(z) ? P : N).insert(z);
        }
        const std::uint8_t y = rng_.below(8) == 0 ? 1 : 0;
        detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Phi, e}, detail::make_axiom({*w}, y, P, N));
    }

    /// When Gamma_e(n) has become wrong, lets a P-witness read negatively by
    /// the current Psi(n) computation enter D, so a new computation may follow.
    void release_event(std::uint64_t e, std::vector<ScriptEvent>& out)
    {
        const auto [e0, e1] = unpair(e);
        const auto& D = eng_.history().members();
        const auto& W = eng_.world().W(e1);
        for (const auto& [n, entry] : eng_.n(e).gamma.entries())
        {
            if (entry.value || !W.count(n)) continue;
            auto c = eng_.world().psi(e0).evaluate(D, n);
            if (!c) continue;
            const Axiom& a = eng_.world().psi(e0).base()[c->axiom];
            for (std::uint64_t j = 0; j < eng_.depth(); ++j)
            {
                const auto& p = eng_.p(j);
                if (p.witness && !p.has_disagreement && std::binary_search(a.N.begin(), a.N.end(), *p.witness))
                {
                    detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Phi, j}, detail::make_axiom({*p.witness}, 0, {}, {}));
                    return;
                }
            }
        }
    }

    const IsolationEngine& eng_;
    Rng rng_;
    Profile profile_;
};

/// Drives Phi_e^{W_e} towards D, breaks stale computations by enumerating
/// W_e, puts odd numbers into K under live Gamma definitions, and feeds
/// Phi_e^D(e) computations that read the agitators.
class UpperAdversary
{
public:
    UpperAdversary(const UpperIsolationEngine& eng, std::uint64_t seed, Profile profile)
        : eng_(eng)
        , rng_(seed)
        , profile_(std::move(profile))
        , negatives_(eng.depth())
    {
    }

    void operator()(Stage s, std::vector<ScriptEvent>& out)
    {
        const std::uint64_t depth = eng_.depth();
        if (depth == 0) return;
        const std::uint64_t phi = detail::decayed(profile_.phi, profile_.half_life, s);
        for (std::uint64_t e = 0; e < depth; ++e)
        {
            if (rng_.per_mille(phi)) track_event(e, out);
        }
        if (rng_.per_mille(phi)) lowness_event(rng_.below(depth), out);
        if (rng_.per_mille(detail::decayed(profile_.k, profile_.half_life, s))) k_event(out);
        if (rng_.per_mille(detail::decayed(profile_.w, profile_.half_life, s)))
        {
            const auto e = rng_.below(depth);
            out.push_back(ScriptEvent{0, EnumerateW{e, next_negative(e, out)}});
        }
    }

private:
    static bool pending_W(const std::vector<ScriptEvent>& out, std::uint64_t e, Element n)
    {
        for (const auto& ev : out)
        {
            const auto* w = std::get_if<EnumerateW>(&ev.body);
            if (w && w->e == e && w->n == n) return true;
        }
        return false;
    }

    /// A number outside W_e for negative oracle parts.
    Element next_negative(std::uint64_t e, const std::vector<ScriptEvent>& out)
    {
        const auto& W = eng_.world().W(e);
        Element& v = negatives_[e];
        if (rng_.below(3) == 0 || W.count(v) || pending_W(out, e, v))
        {
            while (W.count(v) || pending_W(out, e, v)) ++v;
            const Element pick = v;
            ++v;
            return pick;
        }
        return v;
    }

    void track_event(std::uint64_t e, std::vector<ScriptEvent>& out)
    {
        const auto& W = eng_.world().W(e);
        const auto& D = eng_.history().members();
        const AxiomFunctional& phi = eng_.world().phi(e);
        const Element x = length_of_agreement(phi, SetView{&W}, [&](Element z) { return D.count(z) != 0; });
        if (auto c = phi.evaluate(W, x))
        {
            // wrong value: spoil the computation through its negative part
            const Axiom& a = phi.base()[c->axiom];
            if (!a.N.empty()) out.push_back(ScriptEvent{0, EnumerateW{e, a.N[rng_.below(a.N.size())]}});
            return;
        }
        const bool value = D.count(x) != 0;
        std::set<Element> X{x};
        const std::uint64_t run = 1 + rng_.below(6);
        for (Element z = x + 1; z < x + run && (D.count(z) != 0) == value; ++z) X.insert(z);
        std::set<Element> P, N{next_negative(e, out)};
        if (!W.empty() && rng_.below(2)) P.insert(rng_.pick(W));
        auto a = detail::make_axiom(X, value ? 1 : 0, P, N);
        if (!detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Phi, e}, a))
        {
            detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Phi, e}, detail::make_axiom({x}, value ? 1 : 0, P, N));
        }
    }

    void lowness_event(std::uint64_t e, std::vector<ScriptEvent>& out)
    {
        const auto& D = eng_.history().members();
        std::set<Element> P, N;
        for (std::uint64_t i = 0; i < e; ++i)
        {
            const auto& ag = eng_.r(i).agitators;
            auto it = ag.find(2 * (e - i));
            if (it != ag.end() && it->second.has_value() && rng_.below(3)) (D.count(it->second.value) ? P : N).insert(it->second.value);
        }
        const Element top = eng_.allocator().peek() + 2;
        const std::uint64_t n = rng_.geometric(profile_.max_oracle);
        for (std::uint64_t i = 0; i < n; ++i)
        {
            const Element z = (!D.empty() && rng_.below(2)) ? rng_.pick(D) : rng_.below(top);
            (D.count(z) ? P : N).insert(z);
        }
        const std::uint8_t y = static_cast<std::uint8_t>(rng_.below(2));
        if (!detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Phi, e}, detail::make_axiom({e}, y, P, N)))
            detail::offer_axiom(eng_.world(), out, {FunctionalFamily::Phi, e}, detail::make_axiom({e}, y ^ 1, P, N));
    }

    void k_event(std::vector<ScriptEvent>& out)
    {
        std::vector<Element> targets;
        for (std::uint64_t e = 0; e < eng_.depth(); ++e)
        {
            for (const auto& [x, a] : eng_.r(e).agitators)
            {
                if (a.state == AgitatorState::Active && x % 2 == 1 && !eng_.world().K().count(x)) targets.push_back(x);
            }
        }
        Element x = 2 * rng_.below(8) + 1;
        if (!targets.empty() && rng_.below(4)) x = targets[rng_.below(targets.size())];
        out.push_back(ScriptEvent{0, EnumerateK{x}});
    }

    const UpperIsolationEngine& eng_;
    Rng rng_;
    Profile profile_;
    std::vector<Element> negatives_;
};

struct FuzzRun
{
    AdversaryScript script; // with every generated event
    std::string trace;
    RunOutcome outcome;
};

/// One adaptive run. The result depends only on the arguments.
inline FuzzRun fuzz_run(Construction c, std::uint64_t depth, Stage horizon, std::uint64_t seed, const Profile& profile,
                        EngineOptions options = {})
{
    AdversaryScript script;
    script.construction = c;
    script.depth = depth;
    script.horizon = horizon;
    script.seed = seed;
    script.profile = profile.name;
    FuzzRun out;
    if (c == Construction::Isolation)
    {
        IsolationEngine eng(script, options);
        IsolationAdversary adv(eng, seed, profile);
        eng.set_adversary(std::ref(adv));
        out.outcome = eng.run();
        out.script = eng.script();
        out.trace = eng.trace().str();
    }
    else
    {
        UpperIsolationEngine eng(script, options);
        UpperAdversary adv(eng, seed, profile);
        eng.set_adversary(std::ref(adv));
        out.outcome = eng.run();
        out.script = eng.script();
        out.trace = eng.trace().str();
    }
    return out;
}

/// Seed of the i-th corpus member.
inline std::uint64_t corpus_seed(std::uint64_t base, std::uint64_t i)
{
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace dcesim
