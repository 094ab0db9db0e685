#include "dcesim/fuzz.hpp"
#include "dcesim/verifier.hpp"

#include <catch_amalgamated.hpp>

using namespace dcesim;

namespace
{

constexpr FunctionalId phi(std::uint64_t e) { return {FunctionalFamily::Phi, e}; }

ScriptEvent axiom_at(Stage s, FunctionalId id, Element x, std::uint8_t y, std::vector<Element> N = {})
{
    return ScriptEvent{s, InsertAxiom{id, Axiom{{x}, y, {}, std::move(N), s}}};
}

// Phi_0^W(z) = 0 for z in [lo, hi), reading nothing
void zeros(std::vector<ScriptEvent>& out, Stage s, Element lo, Element hi)
{
    for (Element z = lo; z < hi; ++z) out.push_back(axiom_at(s, phi(0), z, 0));
}

AdversaryScript upper(std::uint64_t depth, Stage horizon, std::vector<ScriptEvent> events = {})
{
    AdversaryScript s;
    s.construction = Construction::UpperIsolation;
    s.depth = depth;
    s.horizon = horizon;
    s.events = std::move(events);
    std::stable_sort(s.events.begin(), s.events.end(), [](const auto& a, const auto& b) { return a.stage < b.stage; });
    validate(s);
    return s;
}

// D rebuilt from the trace's d_enter / d_exit records alone
std::set<Element> d_from_events(const std::vector<TraceEvent>& events)
{
    std::vector<Change> changes;
    for (const auto& ev : events)
    {
        if (ev.kind != EventKind::DEnter && ev.kind != EventKind::DExit) continue;
        changes.push_back({ev.stage, ev.data.at("z").get<Element>(), ev.kind == EventKind::DEnter ? Direction::Enter : Direction::Exit});
    }
    std::set<Element> d;
    for (const auto& c : changes)
    {
        if (c.dir == Direction::Enter) d.insert(c.z);
        else d.erase(c.z);
    }
    return d;
}

// agitators d_{0,x} = 10 + x get defined at stage 1 and become active at stage 2
std::vector<ScriptEvent> activation_script()
{
    std::vector<ScriptEvent> ev;
    zeros(ev, 0, 0, 10);
    zeros(ev, 2, 10, 30);
    return ev;
}

} // namespace

TEST_CASE("agitator state machine")
{
    using A = AgitatorState;
    CHECK(legal_transition(A::Undefined, A::Defined));
    CHECK(legal_transition(A::Undefined, A::Obsolete));
    CHECK(legal_transition(A::Defined, A::Active));
    CHECK(legal_transition(A::Active, A::Enumerated));
    CHECK(legal_transition(A::Active, A::Obsolete));
    CHECK(legal_transition(A::Enumerated, A::Undefined));
    CHECK(legal_transition(A::Obsolete, A::Undefined));
    CHECK_FALSE(legal_transition(A::Undefined, A::Undefined));
    CHECK_FALSE(legal_transition(A::Undefined, A::Active));
    CHECK_FALSE(legal_transition(A::Defined, A::Enumerated));
    CHECK_FALSE(legal_transition(A::Enumerated, A::Active));
    CHECK_FALSE(legal_transition(A::Obsolete, A::Defined));
    for (auto a : {A::Undefined, A::Defined, A::Active, A::Enumerated, A::Obsolete})
    {
        CHECK(parse_agitator_state(to_string(a)) == a);
    }
    CHECK_FALSE(parse_agitator_state("lost"));
}

TEST_CASE("agitators are defined, then activated")
{
    UpperIsolationEngine eng(upper(1, 2, activation_script()));
    eng.run();
    REQUIRE_FALSE(eng.outcome().aborted);
    const auto& r = eng.r(0);
    for (Element x = 0; x < 10; ++x)
    {
        CHECK(r.state_of(x) == AgitatorState::Active);
        CHECK(r.agitators.at(x).value == 10 + x);
        CHECK(r.gamma.lookup(eng.world().W(0), x) == false);
    }
    for (Element x = 10; x < 30; ++x)
    {
        CHECK(r.state_of(x) == AgitatorState::Defined);
        CHECK(r.agitators.at(x).value == 20 + x);
    }
}

TEST_CASE("R node waits off expansionary stages")
{
    UpperIsolationEngine eng(upper(1, 3, activation_script()));
    eng.run();
    const auto hash = eng.state_hash();
    const auto seq = eng.trace().next_seq();
    CHECK(eng.r_step(0, 3));
    CHECK(eng.state_hash() == hash);
    CHECK(eng.trace().next_seq() == seq);
}

TEST_CASE("K gaining x under an active agitator enumerates it and stops the stage")
{
    auto ev = activation_script();
    ev.push_back({3, EnumerateK{3}});
    zeros(ev, 3, 30, 60);
    UpperIsolationEngine eng(upper(1, 3, ev));
    eng.run();
    REQUIRE_FALSE(eng.outcome().aborted);

    const std::set<Element> frozen{13};
    CHECK(d_from_events(eng.trace().events()) == frozen);
    CHECK(eng.history().members() == frozen);

    const auto& r = eng.r(0);
    CHECK(r.state_of(3) == AgitatorState::Enumerated);
    for (Element x = 0; x < 3; ++x) CHECK(r.state_of(x) == AgitatorState::Active);
    for (Element x = 4; x < 60; ++x) CHECK(r.state_of(x) == AgitatorState::Undefined);
    CHECK(r.gamma.entries().rbegin()->first == 3);

    const auto& last = eng.trace().events().back();
    CHECK(last.kind == EventKind::StageStopped);
    CHECK(last.actor == "R0");
    CHECK(last.stage == 3);
}

TEST_CASE("K(x) = 1 at sweep time gives Gamma(x) = 1 with use 0")
{
    std::vector<ScriptEvent> ev{{0, EnumerateK{3}}};
    zeros(ev, 0, 0, 10);
    UpperIsolationEngine eng(upper(1, 1, ev));
    eng.run();
    const auto& r = eng.r(0);
    CHECK(r.state_of(3) == AgitatorState::Obsolete);
    REQUIRE(r.gamma.entries().count(3));
    CHECK(r.gamma.entries().at(3).use == 0);
    CHECK(r.gamma.entries().at(3).value);
    CHECK(r.state_of(2) == AgitatorState::Defined);
}

TEST_CASE("L node with divergent Phi lets its child act")
{
    UpperIsolationEngine eng(upper(1, 5));
    eng.run();
    CHECK(eng.l(0).upsilon.empty());
    CHECK_FALSE(eng.delta(0));
    CHECK(eng.l_step(0, 5));
}

TEST_CASE("L node keeps a recorded computation")
{
    UpperIsolationEngine eng(upper(1, 4, activation_script()));
    eng.run();
    REQUIRE(eng.l(0).upsilon.size() == 1);
    CHECK(eng.l(0).upsilon.front().s_sigma == 0);
    CHECK(eng.delta(0));
    CHECK(eng.l_step(0, 4));
    CHECK(eng.l(0).upsilon.size() == 1);
}

TEST_CASE("new L computation enumerates the active agitator it controls")
{
    auto ev = activation_script();
    ev.push_back(axiom_at(4, phi(1), 1, 1));
    UpperIsolationEngine eng(upper(2, 4, ev));
    eng.run();
    REQUIRE_FALSE(eng.outcome().aborted);

    const auto& ups = eng.l(1).upsilon;
    REQUIRE(ups.size() == 1);
    const auto& entry = ups.front();
    CHECK(entry.s_sigma == 4);
    CHECK(entry.starred == std::map<std::uint64_t, Element>{{0, 12}});
    CHECK(eng.upsilon_at(entry, 4) == std::set<std::uint64_t>{0});
    CHECK(eng.upsilon_at(entry, 3).empty());
    CHECK(d_from_events(eng.trace().events()) == std::set<Element>{12});
    CHECK(eng.r(0).state_of(2) == AgitatorState::Enumerated);
    CHECK(eng.r(0).state_of(1) == AgitatorState::Active);
    CHECK(eng.r(0).state_of(3) == AgitatorState::Undefined);
    CHECK(eng.delta(1));
}

TEST_CASE("which L nodes an agitator change initializes")
{
    // least e with j < 2(e - i)
    CHECK(UpperIsolationEngine::least_triggered_l(0, 0) == 1);
    CHECK(UpperIsolationEngine::least_triggered_l(0, 1) == 1);
    CHECK(UpperIsolationEngine::least_triggered_l(0, 2) == 2);
    CHECK(UpperIsolationEngine::least_triggered_l(1, 3) == 3);
    for (std::uint64_t i = 0; i < 4; ++i)
    {
        for (Element j = 0; j < 10; ++j)
        {
            std::uint64_t least = 0;
            while (!(i < least && j < 2 * (least - i))) ++least;
            CHECK(UpperIsolationEngine::least_triggered_l(i, j) == least);
        }
    }

    // no agitator changes: nothing initialized after the first stages
    UpperIsolationEngine eng(upper(3, 40));
    eng.run();
    for (const auto& ev : eng.trace().events()) CHECK(ev.kind != EventKind::Initialized);
}

TEST_CASE("Delta")
{
    std::vector<ScriptEvent> ev{axiom_at(0, phi(5), 5, 0), axiom_at(0, phi(0), 0, 0)};
    {
        UpperIsolationEngine eng(upper(6, 3, ev));
        eng.run();
        CHECK_FALSE(eng.delta(5));
        CHECK(eng.delta(0));
        CHECK_FALSE(eng.delta(1));
    }
    {
        UpperIsolationEngine eng(upper(6, 6, ev));
        eng.run();
        CHECK(eng.delta(5));
    }
}

TEST_CASE("empty upper script")
{
    UpperIsolationEngine eng(upper(3, 50));
    eng.run();
    CHECK(eng.history().members().empty());
    for (std::uint64_t e = 0; e < 3; ++e) CHECK_FALSE(eng.delta(e));
    for (const auto& ev : eng.trace().events()) CHECK(ev.kind != EventKind::DeltaFlip);
}

TEST_CASE("even K aborts the run")
{
    AdversaryScript s;
    s.construction = Construction::UpperIsolation;
    s.depth = 1;
    s.horizon = 5;
    s.events.push_back({2, EnumerateK{4}});
    UpperIsolationEngine eng(s);
    const auto& out = eng.run();
    CHECK(out.aborted);
    CHECK(out.error == ErrorKind::OddKViolation);
    CHECK(out.stage == 2);
    const auto text = eng.trace().str();
    const auto last = text.substr(text.rfind('\n', text.size() - 2) + 1);
    CHECK(last.rfind(R"({"t":"diagnostic","stage":2,"error":"OddKViolation")", 0) == 0);
}

TEST_CASE("skipping quiescent upper stages does not change the trace")
{
    for (std::uint64_t i = 0; i < 20; ++i)
    {
        const auto run = fuzz_run(Construction::UpperIsolation, 5, 1500, corpus_seed(9, i), profile_by_name("default"));
        UpperIsolationEngine slow(run.script, EngineOptions{false});
        slow.run();
        REQUIRE(slow.trace().str() == run.trace);
    }
}

TEST_CASE("seeded upper run")
{
    const auto run = fuzz_run(Construction::UpperIsolation, 8, 10000, 42, profile_by_name("default"));
    REQUIRE_FALSE(run.outcome.aborted);
    const auto v = replay_and_check(run.script, run.trace);
    for (const auto& r : v.reports)
    {
        INFO(r.id << " " << r.witness.value_or(""));
        CHECK(r.outcome != Outcome::Fail);
    }
}
