#pragma once

// Independent oracles and whole-run checks. A run is verified by replaying
// its script with every check attached, comparing the fresh trace with the
// recorded one, and scanning the trace for the counting bounds.

#include "bounds.hpp"
#include "isolation.hpp"
#include "upper_isolation.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dcesim
{

// ---------------------------------------------------------------------------
// brute-force oracles

namespace oracle
{

/// {s : some z entered at s and exited at a stage <= t}, from the raw change list.
inline std::set<Stage> brute_force_lachlan(const std::vector<Change>& changes, Stage t)
{
    std::set<Stage> out;
    for (std::size_t i = 0; i < changes.size(); ++i)
    {
        const Change& ex = changes[i];
        if (ex.dir != Direction::Exit || ex.stage > t) continue;
        for (std::size_t j = 0; j < i; ++j)
        {
            if (changes[j].z == ex.z && changes[j].dir == Direction::Enter) out.insert(changes[j].stage);
        }
    }
    return out;
}

/// Scans every base axiom; the applicable one with least (born, y, P, N) wins.
template <class In>
std::optional<Computation> evaluate_with(const AxiomFunctional& f, In&& in, Element x)
{
    const Axiom* best = nullptr;
    for (const Axiom& a : f.base())
    {
        if (std::find(a.X.begin(), a.X.end(), x) == a.X.end()) continue;
        bool ok = true;
        for (Element p : a.P) ok = ok && in(p) == 1;
        for (Element n : a.N) ok = ok && in(n) == 0;
        if (!ok) continue;
        if (!best || std::tie(a.born, a.y, a.P, a.N) < std::tie(best->born, best->y, best->P, best->N)) best = &a;
    }
    if (!best) return std::nullopt;
    return Computation{best->y, best->use(), static_cast<std::size_t>(best - f.base().data())};
}

inline std::optional<Computation> evaluate(const AxiomFunctional& f, const std::set<Element>& oracle, Element x)
{
    return evaluate_with(f, [&](Element z) { return oracle.count(z) ? 1 : 0; }, x);
}

/// Reads sigma; positions at or beyond |sigma| are unknown and block the axiom.
inline std::optional<Computation> evaluate_on(const AxiomFunctional& f, const Segment& sigma, Element x)
{
    return evaluate_with(f, [&](Element z) { return z >= sigma.length ? 2 : (sigma.at(z) ? 1 : 0); }, x);
}

/// One pass over the base: the winning applicable axiom for every argument.
inline std::uint64_t length_of_agreement(const AxiomFunctional& f, const std::set<Element>& oracle, const std::set<Element>& target)
{
    std::map<Element, const Axiom*> best;
    for (const Axiom& a : f.base())
    {
        bool ok = true;
        for (Element p : a.P) ok = ok && oracle.count(p);
        for (Element n : a.N) ok = ok && !oracle.count(n);
        if (!ok) continue;
        for (Element x : a.X)
        {
            const Axiom*& b = best[x];
            if (!b || std::tie(a.born, a.y, a.P, a.N) < std::tie(b->born, b->y, b->P, b->N)) b = &a;
        }
    }
    std::uint64_t y = 0;
    for (auto it = best.begin(); it != best.end() && it->first == y; ++it, ++y)
    {
        if (it->second->y != (target.count(y) != 0)) return y;
    }
    return y;
}

/// D restorable to sigma at stage s, from the raw change list.
inline bool is_restorable(const std::vector<Change>& changes, Stage s, const Segment& sigma)
{
    for (Element z = 0; z < sigma.length; ++z)
    {
        bool in = false;
        int count = 0;
        for (const Change& c : changes)
        {
            if (c.z != z || c.stage > s) continue;
            in = c.dir == Direction::Enter;
            ++count;
        }
        if (in != sigma.at(z) && count != 1) return false;
    }
    return true;
}

} // namespace oracle

// ---------------------------------------------------------------------------
// reports

enum class Outcome
{
    Pass,
    Fail,
    NotApplicable,
};

inline const char* to_string(Outcome o)
{
    switch (o)
    {
    case Outcome::Pass: return "pass";
    case Outcome::Fail: return "fail";
    case Outcome::NotApplicable: return "not-applicable";
    }
    return "?";
}

struct CheckReport
{
    std::string id;
    Stage first_stage = 0;
    Stage last_stage = 0;
    Outcome outcome = Outcome::NotApplicable;
    std::optional<std::string> witness; // offending trace line or state
    std::uint64_t observations = 0;

    nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["t"] = "check";
        j["id"] = id;
        j["first_stage"] = first_stage;
        j["last_stage"] = last_stage;
        j["outcome"] = to_string(outcome);
        j["observations"] = observations;
        if (witness) j["witness"] = *witness;
        return j;
    }
};

struct CheckSpec
{
    std::string_view id;
    bool isolation;
    bool upper;
};

inline constexpr std::array<CheckSpec, 18> kChecks{{
    {"replay", true, true},
    {"dce_soundness", true, true},
    {"lachlan_oracle", true, true},
    {"ell_oracle", true, true},
    {"restorable_on_disagreement", true, false},
    {"disagreement_permanence", true, false},
    {"downward_closure", true, false},
    {"injury_bound", true, false},
    {"single_disagreement", true, false},
    {"agitator_machine", false, true},
    {"gamma_matches_k", false, true},
    {"upsilon_restoration", false, true},
    {"upsilon_disjoint", false, true},
    {"upsilon_domain_bound", false, true},
    {"agitator_enumeration_bound", false, true},
    {"recurrence_bounds", false, true},
    {"closed_form_bounds", false, true},
    {"delta_stabilization", false, true},
}};

namespace detail
{

inline constexpr std::array<std::string_view, 18> kRequired{
    "replay", "dce_soundness", "lachlan_oracle", "ell_oracle", "restorable_on_disagreement", "disagreement_permanence",
    "downward_closure", "injury_bound", "single_disagreement", "agitator_machine", "gamma_matches_k", "upsilon_restoration",
    "upsilon_disjoint", "upsilon_domain_bound", "agitator_enumeration_bound", "recurrence_bounds", "closed_form_bounds", "delta_stabilization",
};

constexpr bool registry_complete()
{
    for (auto want : kRequired)
    {
        int hits = 0;
        for (const auto& c : kChecks) hits += c.id == want ? 1 : 0;
        if (hits != 1) return false;
    }
    return kRequired.size() == kChecks.size();
}

static_assert(registry_complete(), "every invariant needs exactly one registered check");

} // namespace detail

/// Accumulates one check's observations.
class Acc
{
public:
    void hit(Stage s)
    {
        if (!report_.observations) report_.first_stage = s;
        report_.first_stage = std::min(report_.first_stage, s);
        report_.last_stage = std::max(report_.last_stage, s);
        ++report_.observations;
    }

    void fail(Stage s, std::string witness)
    {
        hit(s);
        if (!failed_)
        {
            failed_ = true;
            report_.witness = std::move(witness);
        }
    }

    void check(bool ok, Stage s, const std::function<std::string()>& witness)
    {
        if (ok) hit(s);
        else fail(s, witness());
    }

    bool failed() const { return failed_; }

    CheckReport finish(std::string_view id) const
    {
        CheckReport r = report_;
        r.id = std::string(id);
        r.outcome = failed_ ? Outcome::Fail : (report_.observations ? Outcome::Pass : Outcome::NotApplicable);
        return r;
    }

private:
    CheckReport report_;
    bool failed_ = false;
};

using AccMap = std::map<std::string, Acc, std::less<>>;

// ---------------------------------------------------------------------------
// live checks attached to a replay

namespace detail
{

inline std::string set_str(const std::set<Element>& s)
{
    std::string out = "{";
    for (Element z : s) out += (out.size() > 1 ? "," : "") + std::to_string(z);
    return out + "}";
}

inline void common_stage_end(AccMap& acc, const EngineBase& eng, const DceHistory& h, Stage s)
{
    auto brute = oracle::brute_force_lachlan(h.changes(), s);
    acc["lachlan_oracle"].check(brute == h.lachlan(), s, [&] {
        return "stage " + std::to_string(s) + ": incremental " + set_str(h.lachlan()) + " vs definition " + set_str(brute);
    });
    for (const auto& [z, rec] : h.records())
    {
        (void)rec;
        if (h.change_count(z) > 2)
        {
            acc["dce_soundness"].fail(s, "element " + std::to_string(z) + " changed more than twice");
        }
    }
    (void)eng;
}

class IsolationChecker : public IsolationProbe
{
public:
    explicit IsolationChecker(AccMap& acc)
        : acc_(acc)
    {
    }

    void ell_measured(const IsolationEngine& eng, std::uint64_t e, std::uint64_t ell) override
    {
        const auto [e0, e1] = unpair(e);
        const auto brute = oracle::length_of_agreement(eng.world().psi(e0), eng.history().members(), eng.world().W(e1));
        acc_["ell_oracle"].check(brute == ell, eng.stage(), [&] {
            return IsolationEngine::actor(2 * e + 1) + " at stage " + std::to_string(eng.stage()) + ": engine ell " +
                   std::to_string(ell) + ", recomputed " + std::to_string(brute);
        });
    }

    void n_step_done(const IsolationEngine& eng, std::uint64_t e) override
    {
        const auto& st = eng.n(e);
        const auto& L = eng.history().lachlan();
        const auto& W = eng.world().W(unpair(e).second);
        const Element least = st.gamma.least_undefined(L);
        bool ok = true;
        Element bad = 0;
        for (Element m = 0; m < least && ok; ++m)
        {
            auto v = st.gamma.lookup(L, m);
            if (!v || *v != (W.count(m) != 0))
            {
                ok = false;
                bad = m;
            }
        }
        acc_["downward_closure"].check(ok, eng.stage(), [&] {
            return IsolationEngine::actor(2 * e + 1) + " at stage " + std::to_string(eng.stage()) + ": Gamma(" +
                   std::to_string(bad) + ") is not W(" + std::to_string(bad) + ")";
        });
    }

    void stage_end(const IsolationEngine& eng) override
    {
        const Stage s = eng.stage();
        common_stage_end(acc_, eng, eng.history(), s);
        for (std::uint64_t e = 0; e < eng.depth(); ++e)
        {
            const auto& st = eng.n(e);
            if (!st.received || st.received->stage >= s) continue;
            const auto [e0, e1] = unpair(e);
            const Element n = st.received->n;
            auto c = oracle::evaluate(eng.world().psi(e0), eng.history().members(), n);
            const bool ok = c && !c->value && eng.world().W(e1).count(n);
            acc_["disagreement_permanence"].check(ok, s, [&] {
                return IsolationEngine::actor(2 * e + 1) + " at stage " + std::to_string(s) + ": disagreement at n=" +
                       std::to_string(n) + " from stage " + std::to_string(st.received->stage) + " no longer holds";
            });
        }
    }

private:
    AccMap& acc_;
};

class UpperChecker : public UpperProbe
{
public:
    explicit UpperChecker(AccMap& acc)
        : acc_(acc)
    {
    }

    void ell_measured(const UpperIsolationEngine& eng, std::uint64_t e, std::uint64_t ell) override
    {
        const auto brute = oracle::length_of_agreement(eng.world().phi(e), eng.world().W(e), eng.history().members());
        acc_["ell_oracle"].check(brute == ell, eng.stage(), [&] {
            return UpperIsolationEngine::actor(2 * e + 1) + " at stage " + std::to_string(eng.stage()) + ": engine ell " +
                   std::to_string(ell) + ", recomputed " + std::to_string(brute);
        });
    }

    void sweep_done(const UpperIsolationEngine& eng, std::uint64_t e) override
    {
        const auto& st = eng.r(e);
        const auto& W = eng.world().W(e);
        const auto& K = eng.world().K();
        for (const auto& [x, en] : st.gamma.entries())
        {
            auto v = st.gamma.lookup(W, x);
            if (!v) continue;
            const Element x0 = x;
            acc_["gamma_matches_k"].check(*v == (K.count(x0) != 0), eng.stage(), [&] {
                return UpperIsolationEngine::actor(2 * e + 1) + " at stage " + std::to_string(eng.stage()) + ": Gamma(" +
                       std::to_string(x0) + ") != K(" + std::to_string(x0) + ")";
            });
        }
    }

    void marking_done(const UpperIsolationEngine& eng, std::uint64_t e) override
    {
        const Stage s = eng.stage();
        const auto& D = eng.history().members();
        for (const auto& sig : eng.l(e).upsilon)
        {
            if (!sig.restorable || sig.s_sigma >= s || !eng.upsilon_at(sig, s).empty()) continue;
            const bool ok = sig.sigma.is_prefix_of(D) && oracle::evaluate_on(eng.world().phi(e), sig.sigma, e).has_value();
            acc_["upsilon_restoration"].check(ok, s, [&] {
                return UpperIsolationEngine::actor(2 * e) + " at stage " + std::to_string(s) + ": restorable sigma " +
                       sig.sigma.to_bits() + " from stage " + std::to_string(sig.s_sigma) + " is not a computation";
            });
        }
    }

    void upsilon_recorded(const UpperIsolationEngine& eng, std::uint64_t e) override
    {
        const Stage s = eng.stage();
        const auto& ups = eng.l(e).upsilon;
        const auto& tau = ups.back();
        const auto ut = eng.upsilon_at(tau, s);
        for (std::size_t i = 0; i + 1 < ups.size(); ++i)
        {
            const auto& sig = ups[i];
            if (!sig.restorable) continue;
            const auto us = eng.upsilon_at(sig, s);
            std::vector<std::uint64_t> both;
            std::set_intersection(us.begin(), us.end(), ut.begin(), ut.end(), std::back_inserter(both));
            acc_["upsilon_disjoint"].check(both.empty(), s, [&] {
                return UpperIsolationEngine::actor(2 * e) + " at stage " + std::to_string(s) + ": Upsilon of stage " +
                       std::to_string(sig.s_sigma) + " meets the new record at i=" + std::to_string(both.front());
            });
        }
    }

    void stage_end(const UpperIsolationEngine& eng) override { common_stage_end(acc_, eng, eng.history(), eng.stage()); }

private:
    AccMap& acc_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// trace scans

inline std::uint64_t node_index(const std::string& actor)
{
    // "P3"/"N3" -> 6/7 and "L3"/"R3" -> 6/7
    const std::uint64_t e = std::stoull(actor.substr(1));
    return 2 * e + ((actor[0] == 'N' || actor[0] == 'R') ? 1 : 0);
}

inline bool is_strategy(const std::string& actor)
{
    return actor.size() > 1 && std::string_view("PNLR").find(actor[0]) != std::string_view::npos;
}

inline std::string event_witness(const TraceEvent& ev) { return Trace::event_line(ev); }

/// d.c.e. legality of every D-change in the trace.
inline void scan_dce(AccMap& acc, const std::vector<TraceEvent>& events)
{
    std::map<Element, int> count;
    std::map<Element, bool> in;
    for (const auto& ev : events)
    {
        if (ev.kind != EventKind::DEnter && ev.kind != EventKind::DExit) continue;
        const Element z = ev.data.at("z").get<Element>();
        const bool enter = ev.kind == EventKind::DEnter;
        const int c = ++count[z];
        const bool ok = c <= 2 && enter == !in[z] && (enter ? c == 1 : c == 2);
        in[z] = enter;
        acc["dce_soundness"].check(ok, ev.stage, [&] { return event_witness(ev); });
    }
}

/// Disagreement events against a brute-force restorability test on the D-history before them.
inline void scan_restorations(AccMap& acc, const std::vector<TraceEvent>& events)
{
    std::vector<Change> changes;
    std::vector<const TraceEvent*> exits_pending;
    for (std::size_t i = 0; i < events.size(); ++i)
    {
        const auto& ev = events[i];
        if (ev.kind == EventKind::DEnter || ev.kind == EventKind::DExit)
        {
            changes.push_back({ev.stage, ev.data.at("z").get<Element>(), ev.kind == EventKind::DEnter ? Direction::Enter : Direction::Exit});
            continue;
        }
        if (ev.kind != EventKind::Disagreement || ev.actor[0] != 'N') continue;
        Segment sigma;
        sigma.length = ev.data.at("sigma").at("len").get<std::uint64_t>();
        for (const auto& o : ev.data.at("sigma").at("ones")) sigma.ones.push_back(o.get<Element>());
        // the restoration's own exits sit just before the event
        std::vector<Change> before = changes;
        std::size_t k = i;
        while (k > 0 && events[k - 1].kind == EventKind::DExit && events[k - 1].actor == ev.actor && events[k - 1].stage == ev.stage)
        {
            --k;
            before.pop_back();
        }
        acc["restorable_on_disagreement"].check(oracle::is_restorable(before, ev.stage, sigma), ev.stage, [&] { return event_witness(ev); });
    }
}

struct EpochCounter
{
    std::map<std::uint64_t, std::uint64_t> inits; // node index -> initializations
};

inline void scan_isolation_counts(AccMap& acc, const std::vector<TraceEvent>& events, std::uint64_t depth)
{
    std::vector<std::uint64_t> inits(2 * depth, 0), since(2 * depth, 0);
    for (const auto& ev : events)
    {
        if (!is_strategy(ev.actor)) continue;
        const auto k = node_index(ev.actor);
        if (k >= 2 * depth) continue;
        if (ev.kind == EventKind::Initialized)
        {
            ++inits[k];
            since[k] = 0;
            acc["injury_bound"].check(inits[k] <= bounds::injury(k), ev.stage, [&] {
                return event_witness(ev) + " (initialization " + std::to_string(inits[k]) + ", bound " +
                       std::to_string(bounds::injury(k)) + ")";
            });
        }
        else if (ev.kind == EventKind::Disagreement)
        {
            ++since[k];
            acc["single_disagreement"].check(since[k] <= 1, ev.stage, [&] { return event_witness(ev); });
        }
    }
    // every strategy's total is an observation even when it was never initialized
    for (std::uint64_t k = 0; k < 2 * depth; ++k)
    {
        if (inits[k] == 0) acc["injury_bound"].hit(0);
    }
}

inline void scan_agitators(AccMap& acc, const std::vector<TraceEvent>& events)
{
    std::map<std::string, std::map<Element, AgitatorState>> state;
    for (const auto& ev : events)
    {
        if (ev.kind == EventKind::Initialized && ev.actor[0] == 'R')
        {
            state[ev.actor].clear();
            continue;
        }
        if (ev.kind != EventKind::AgitatorTransition) continue;
        const Element x = ev.data.at("x").get<Element>();
        auto from = parse_agitator_state(ev.data.at("from").get<std::string>());
        auto to = parse_agitator_state(ev.data.at("to").get<std::string>());
        auto& cur = state[ev.actor][x];
        const bool ok = from && to && *from == cur && legal_transition(*from, *to);
        acc["agitator_machine"].check(ok, ev.stage, [&] { return event_witness(ev); });
        if (to) cur = *to;
    }
}

/// f, g, h and p counters of an upper-isolation trace.
struct UpperCounts
{
    std::vector<std::uint64_t> f, g, h;
};

inline UpperCounts scan_upper_counts(AccMap& acc, const std::vector<TraceEvent>& events, std::uint64_t depth)
{
    UpperCounts out{std::vector<std::uint64_t>(depth, 0), std::vector<std::uint64_t>(depth, 1), std::vector<std::uint64_t>(depth, 1)};
    std::vector<std::uint64_t> dom(depth, 0), flips(depth, 0);
    std::vector<std::map<Element, std::uint64_t>> enumerations(depth); // per R_e epoch: x -> count
    std::vector<Stage> epoch_start(depth, 0);

    auto close_l_epoch = [&](std::uint64_t e, Stage s) {
        const auto bound = bounds::delta_flips(dom[e]);
        if (flips[e] <= bound) acc["delta_stabilization"].hit(s);
        else
        {
            acc["delta_stabilization"].fail(s, "L" + std::to_string(e) + ": " + std::to_string(flips[e]) + " Delta flips in the window from stage " +
                                               std::to_string(epoch_start[e]) + " with |dom Upsilon| " + std::to_string(dom[e]));
        }
    };

    for (const auto& ev : events)
    {
        if (ev.kind == EventKind::DeltaFlip)
        {
            const auto e = ev.data.at("e").get<std::uint64_t>();
            if (e < depth) ++flips[e];
            continue;
        }
        if (!is_strategy(ev.actor)) continue;
        const auto idx = node_index(ev.actor);
        const auto e = idx / 2;
        if (e >= depth) continue;
        const bool is_l = idx % 2 == 0;
        if (ev.kind == EventKind::Initialized)
        {
            if (is_l)
            {
                close_l_epoch(e, ev.stage);
                ++out.g[e];
                dom[e] = 0;
                flips[e] = 0;
                epoch_start[e] = ev.stage;
            }
            else
            {
                ++out.h[e];
                enumerations[e].clear();
            }
        }
        else if (ev.kind == EventKind::UpsilonRecord)
        {
            dom[e] = ev.data.at("dom").get<std::uint64_t>();
            out.f[e] = std::max(out.f[e], dom[e]);
            acc["upsilon_domain_bound"].check(dom[e] <= bounds::upsilon_dom(e), ev.stage, [&] {
                return event_witness(ev) + " (bound " + std::to_string(bounds::upsilon_dom(e)) + ")";
            });
        }
        else if (ev.kind == EventKind::DEnter && ev.data.contains("node"))
        {
            const auto i = node_index(ev.data.at("node").get<std::string>()) / 2;
            const Element x = ev.data.at("x").get<Element>();
            if (i >= depth) continue;
            ++enumerations[i][x];
            std::uint64_t total = 0;
            for (const auto& [y, c] : enumerations[i])
            {
                total += c;
                const auto bound = bounds::p(i, y);
                if (y < x) continue;
                acc["agitator_enumeration_bound"].check(total <= bound, ev.stage, [&] {
                    return event_witness(ev) + " (p(" + std::to_string(y) + ")=" + std::to_string(total) + " for R" + std::to_string(i) +
                           ", bound " + std::to_string(bound) + ")";
                });
            }
        }
    }
    for (std::uint64_t e = 0; e < depth; ++e) close_l_epoch(e, events.empty() ? 0 : events.back().stage);

    const Stage last = events.empty() ? 0 : events.back().stage;
    for (std::uint64_t e = 0; e < depth; ++e)
    {
        const std::string at = "e=" + std::to_string(e) + ": f=" + std::to_string(out.f[e]) + " g=" + std::to_string(out.g[e]) +
                               " h=" + std::to_string(out.h[e]);
        bool rec = out.h[e] <= (out.f[e] + 1) * out.g[e];
        if (e == 0) rec = rec && out.g[0] == 1;
        else rec = rec && out.g[e] <= out.h[e - 1] + e;
        acc["recurrence_bounds"].check(rec, last, [&] { return at; });
        const bool closed = out.g[e] <= bounds::g(e) && out.h[e] <= bounds::h(e);
        acc["closed_form_bounds"].check(closed, last, [&] {
            return at + " (bounds g " + std::to_string(bounds::g(e)) + ", h " + std::to_string(bounds::h(e)) + ")";
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// replay

struct Verification
{
    std::vector<CheckReport> reports;
    std::string trace; // the replayed trace
    RunOutcome outcome;

    bool passed() const
    {
        return std::none_of(reports.begin(), reports.end(), [](const CheckReport& r) { return r.outcome == Outcome::Fail; });
    }

    const CheckReport* find(std::string_view id) const
    {
        for (const auto& r : reports)
        {
            if (r.id == id) return &r;
        }
        return nullptr;
    }
};

/// Drops verifier records so a trace can be compared with a fresh run.
inline std::vector<std::string> run_lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
    {
        if (line.empty() || line.rfind("{\"t\":\"check\"", 0) == 0) continue;
        out.push_back(line);
    }
    return out;
}

/// Re-executes `script` with every check attached. When `recorded` is given
/// the fresh trace must match it line for line, else ReplayDivergence.
inline Verification replay_and_check(const AdversaryScript& script, const std::optional<std::string>& recorded = std::nullopt)
{
    if (recorded)
    {
        const auto lines = run_lines(*recorded);
        if (lines.empty()) throw SimError(ErrorKind::ReplayDivergence, "recorded trace is empty");
        const auto header = nlohmann::json::parse(lines.front());
        if (header.value("version", std::string{}) != kEngineVersion)
            throw SimError(ErrorKind::ReplayDivergence, "trace was produced by engine version '" + header.value("version", std::string{}) + "'");
    }

    AccMap acc;
    Verification out;
    EngineOptions opts; // skipped stages repeat the state of the stage before
    std::vector<TraceEvent> events;
    std::uint64_t depth = script.depth;

    if (script.construction == Construction::Isolation)
    {
        IsolationEngine eng(script, opts);
        detail::IsolationChecker probe(acc);
        eng.set_probe(&probe);
        out.outcome = eng.run();
        out.trace = eng.trace().str();
        events = eng.trace().events();
    }
    else
    {
        UpperIsolationEngine eng(script, opts);
        detail::UpperChecker probe(acc);
        eng.set_probe(&probe);
        out.outcome = eng.run();
        out.trace = eng.trace().str();
        events = eng.trace().events();
    }

    if (recorded)
    {
        const auto want = run_lines(*recorded);
        const auto got = run_lines(out.trace);
        for (std::size_t i = 0; i < std::max(want.size(), got.size()); ++i)
        {
            const std::string a = i < want.size() ? want[i] : "<end of trace>";
            const std::string b = i < got.size() ? got[i] : "<end of trace>";
            if (a != b)
            {
                throw SimError(ErrorKind::ReplayDivergence,
                               "line " + std::to_string(i + 1) + " differs: recorded " + a + " replayed " + b);
            }
        }
        acc["replay"].hit(script.horizon);
    }

    // aborts are failures of the check that guards them
    if (out.outcome.aborted && out.outcome.error)
    {
        const std::string why = std::string(to_string(*out.outcome.error)) + ": " + out.outcome.message;
        switch (*out.outcome.error)
        {
        case ErrorKind::DceViolation: acc["dce_soundness"].fail(out.outcome.stage, why); break;
        case ErrorKind::NoRestorablePair:
        case ErrorKind::NotRestorable: acc["restorable_on_disagreement"].fail(out.outcome.stage, why); break;
        case ErrorKind::AgitatorViolation: acc["agitator_machine"].fail(out.outcome.stage, why); break;
        default: acc["replay"].fail(out.outcome.stage, why); break;
        }
    }

    scan_dce(acc, events);
    if (script.construction == Construction::Isolation)
    {
        scan_restorations(acc, events);
        scan_isolation_counts(acc, events, depth);
    }
    else
    {
        scan_agitators(acc, events);
        scan_upper_counts(acc, events, depth);
    }

    const bool iso = script.construction == Construction::Isolation;
    for (const auto& spec : kChecks)
    {
        const bool applies = iso ? spec.isolation : spec.upper;
        auto it = acc.find(spec.id);
        if (!applies || it == acc.end())
        {
            CheckReport r;
            r.id = std::string(spec.id);
            out.reports.push_back(r);
        }
        else out.reports.push_back(it->second.finish(spec.id));
    }
    return out;
}

// ---------------------------------------------------------------------------
// bounds table

struct BoundRow
{
    std::string name;
    std::uint64_t index = 0;
    std::uint64_t measured = 0;
    std::uint64_t bound = 0;
};

/// Measured counters against their closed forms, from a trace alone.
inline std::vector<BoundRow> bounds_table(const LoadedTrace& trace)
{
    std::vector<BoundRow> rows;
    const auto construction = trace.header.value("construction", std::string("isolation"));
    const std::uint64_t depth = trace.header.value("depth", std::uint64_t{0});
    AccMap acc;
    if (construction == "isolation")
    {
        std::vector<std::uint64_t> inits(2 * depth, 0);
        for (const auto& ev : trace.events)
        {
            if (ev.kind == EventKind::Initialized && is_strategy(ev.actor))
            {
                const auto k = node_index(ev.actor);
                if (k < inits.size()) ++inits[k];
            }
        }
        for (std::uint64_t k = 0; k < 2 * depth; ++k) rows.push_back({"injury", k, inits[k], bounds::injury(k)});
        return rows;
    }
    const auto counts = scan_upper_counts(acc, trace.events, depth);
    for (std::uint64_t e = 0; e < depth; ++e)
    {
        rows.push_back({"dom_upsilon", e, counts.f[e], bounds::upsilon_dom(e)});
        rows.push_back({"g", e, counts.g[e], bounds::g(e)});
        rows.push_back({"h", e, counts.h[e], bounds::h(e)});
    }
    return rows;
}

} // namespace dcesim
