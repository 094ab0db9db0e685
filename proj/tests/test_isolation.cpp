#include "dcesim/fuzz.hpp"
#include "dcesim/verifier.hpp"

#include <catch_amalgamated.hpp>

using namespace dcesim;

namespace
{

ScriptEvent axiom_at(Stage s, FunctionalId id, std::vector<Element> X, std::uint8_t y, std::vector<Element> P,
                     std::vector<Element> N)
{
    return ScriptEvent{s, InsertAxiom{id, Axiom{std::move(X), y, std::move(P), std::move(N), s}}};
}

constexpr FunctionalId phi(std::uint64_t e) { return {FunctionalFamily::Phi, e}; }
constexpr FunctionalId psi(std::uint64_t e) { return {FunctionalFamily::Psi, e}; }

AdversaryScript iso(std::uint64_t depth, Stage horizon, std::vector<ScriptEvent> events = {})
{
    AdversaryScript s;
    s.construction = Construction::Isolation;
    s.depth = depth;
    s.horizon = horizon;
    s.events = std::move(events);
    validate(s);
    return s;
}

// Reference stepper for scripts whose only axioms are Phi axioms: N
// strategies never see a convergent Psi and stay idle, so only P_e acts.
struct PStepper
{
    struct Out
    {
        std::set<Element> D;
        std::vector<std::optional<Element>> witness;
        std::vector<std::uint64_t> inits;
        std::vector<std::pair<Stage, Element>> entered;
    };

    static Out run(const AdversaryScript& script)
    {
        const auto depth = script.depth;
        Out o;
        o.witness.assign(depth, std::nullopt);
        o.inits.assign(2 * depth, 0);
        std::vector<bool> done(depth, false);
        std::map<std::uint64_t, std::vector<Axiom>> axioms;
        Element next = 0;
        std::size_t cursor = 0;
        for (Stage s = 0; s <= script.horizon; ++s)
        {
            while (cursor < script.events.size() && script.events[cursor].stage <= s)
            {
                const auto& ia = std::get<InsertAxiom>(script.events[cursor].body);
                axioms[ia.functional.index].push_back(ia.axiom);
                for (const auto* part : {&ia.axiom.X, &ia.axiom.P, &ia.axiom.N})
                {
                    for (Element z : *part) next = std::max(next, z + 1);
                }
                ++cursor;
            }
            for (std::uint64_t t = 0; t < std::min<std::uint64_t>(s, 2 * depth); t += 2)
            {
                const auto e = t / 2;
                if (done[e]) continue;
                if (!o.witness[e])
                {
                    next = std::max(next, s + 1);
                    o.witness[e] = next++;
                    continue;
                }
                // L(D) stays empty: nothing is ever extracted
                const Axiom* best = nullptr;
                for (const auto& a : axioms[e])
                {
                    if (std::find(a.X.begin(), a.X.end(), *o.witness[e]) == a.X.end() || !a.P.empty()) continue;
                    if (!best || std::tie(a.born, a.y, a.N) < std::tie(best->born, best->y, best->N)) best = &a;
                }
                if (!best) continue;
                next = std::max(next, best->use() + 1);
                if (best->y != 0) continue;
                o.D.insert(*o.witness[e]);
                o.entered.push_back({s, *o.witness[e]});
                done[e] = true;
                for (std::uint64_t j = t + 1; j < 2 * depth; ++j)
                {
                    ++o.inits[j];
                    if (j % 2 == 0)
                    {
                        o.witness[j / 2].reset();
                        done[j / 2] = false;
                    }
                }
            }
        }
        return o;
    }
};

struct CheckAt : IsolationProbe
{
    std::function<void(const IsolationEngine&)> fn;
    void stage_end(const IsolationEngine& eng) override { fn(eng); }
};

} // namespace

TEST_CASE("P step picks a witness first")
{
    IsolationEngine eng(iso(2, 10));
    eng.p_step(0, 0);
    REQUIRE(eng.p(0).witness);
    CHECK(eng.history().members().empty());
    const Element w = *eng.p(0).witness;
    eng.p_step(0, 0);
    CHECK(eng.p(0).witness == w);
    CHECK(eng.history().changes().empty());
}

TEST_CASE("P step does nothing once it has disagreement")
{
    auto script = iso(1, 20, {axiom_at(3, phi(0), {2}, 0, {}, {})});
    IsolationEngine eng(script);
    eng.run();
    REQUIRE(eng.p(0).has_disagreement);
    const auto changes = eng.history().changes().size();
    eng.p_step(0, 20);
    CHECK(eng.history().changes().size() == changes);
}

TEST_CASE("Phi answering 0 on the witness puts it into D")
{
    // P_0 picks 2 at stage 1 and P_1 picks 4 at stage 3; the axiom for 2 comes at stage 9
    const auto script = iso(2, 12, {axiom_at(9, phi(0), {2}, 0, {}, {})});
    const auto ref = PStepper::run(script);
    REQUIRE(ref.entered == std::vector<std::pair<Stage, Element>>{{9, 2}});
    REQUIRE(ref.inits == std::vector<std::uint64_t>{0, 1, 1, 1});
    REQUIRE(ref.witness[1] == 10u);

    IsolationEngine eng(script);
    eng.run();
    CHECK(eng.history().members() == std::set<Element>{2});
    CHECK(eng.history().entry_stage(2) == 9u);
    CHECK(eng.p(1).witness == 10u);
    for (std::uint64_t k = 0; k < 4; ++k) CHECK(eng.initializations(k) == ref.inits[k]);

    std::size_t enters = 0;
    for (const auto& ev : eng.trace().events())
    {
        if (ev.kind != EventKind::DEnter) continue;
        ++enters;
        CHECK(ev.stage == 9);
        CHECK(ev.actor == "P0");
    }
    CHECK(enters == 1);
}

TEST_CASE("random Phi-only scripts match the reference stepper")
{
    for (std::uint64_t seed = 0; seed < 40; ++seed)
    {
        Rng rng(seed);
        std::vector<ScriptEvent> events;
        for (Stage s = 0; s < 60; ++s)
        {
            if (!rng.per_mille(150)) continue;
            const auto e = rng.below(3);
            const Element x = rng.below(40);
            events.push_back(axiom_at(s, phi(e), {x}, static_cast<std::uint8_t>(rng.below(2)), {},
                                      rng.below(2) ? std::vector<Element>{} : std::vector<Element>{rng.below(30)}));
        }
        AdversaryScript script;
        script.construction = Construction::Isolation;
        script.depth = 3;
        script.horizon = 80;
        script.events = events;
        try
        {
            validate(script);
        }
        catch (const SimError&)
        {
            continue;
        }
        const auto ref = PStepper::run(script);
        IsolationEngine eng(script);
        eng.run();
        INFO("seed " << seed);
        CHECK(eng.history().members() == ref.D);
        for (std::uint64_t e = 0; e < 3; ++e) CHECK(eng.p(e).witness == ref.witness[e]);
        for (std::uint64_t k = 0; k < 6; ++k) CHECK(eng.initializations(k) == ref.inits[k]);
    }
}

TEST_CASE("first expansionary stage defines Gamma with a fresh use")
{
    const auto script = iso(1, 4, {axiom_at(0, psi(0), {0}, 0, {}, {})});
    IsolationEngine eng(script);
    eng.run();
    const auto& st = eng.n(0);
    REQUIRE(st.gamma.entries().count(0));
    const auto& en = st.gamma.entries().at(0);
    CHECK_FALSE(en.value);
    CHECK(en.defined_at == 2);
    CHECK(en.use > *eng.p(0).witness);
    REQUIRE(st.pairs.at(0).size() == 1);
    const auto& pr = st.pairs.at(0).front();
    CHECK(pr.tau.length == en.use);
    CHECK(pr.sigma.length == 1);
    CHECK(pr.s_sigma == 2);
    CHECK(eng.trace().str().find(R"("case":"a2")") != std::string::npos);
}

TEST_CASE("W catching up with a wrong Gamma restores D and initializes below")
{
    // P_1's witness is 4. Psi_0 reads 4: Psi(0) = D(4), Psi(1) = 0 once 4 is in D.
    const auto script = iso(2, 30,
                            {
                                axiom_at(4, psi(0), {0}, 0, {}, {4}),
                                axiom_at(4, psi(0), {0}, 1, {4}, {}),
                                axiom_at(4, psi(0), {1}, 0, {4}, {}),
                                axiom_at(5, phi(1), {4}, 0, {}, {}),
                                ScriptEvent{6, EnumerateW{0, 0}},
                            });

    // derived by hand and the brute-force oracles
    DceHistory before;
    before.record_change(4, Direction::Enter, 5);
    const Segment sigma{5, {}};
    REQUIRE(oracle::is_restorable(before.changes(), 6, sigma));
    {
        World w;
        for (const auto& ev : script.events) w.apply(ev, Construction::Isolation);
        REQUIRE(oracle::length_of_agreement(w.psi(0), before.members(), w.W(0)) == 2);
        REQUIRE(oracle::length_of_agreement(w.psi(0), {}, {}) == 1);
    }
    DceHistory after = before;
    after.restore_to(6, sigma);
    REQUIRE(oracle::brute_force_lachlan(after.changes(), 6) == std::set<Stage>{5});

    CheckAt probe;
    std::vector<Stage> held;
    probe.fn = [&](const IsolationEngine& eng) {
        const auto& st = eng.n(0);
        if (!st.received || eng.stage() <= st.received->stage) return;
        auto c = oracle::evaluate(eng.world().psi(0), eng.history().members(), 0);
        if (c && c->value == 0 && eng.world().W(0).count(0)) held.push_back(eng.stage());
    };
    IsolationEngine eng(script, EngineOptions{false});
    eng.set_probe(&probe);
    eng.run();

    REQUIRE_FALSE(eng.outcome().aborted);
    const auto& st = eng.n(0);
    REQUIRE(st.has_disagreement);
    REQUIRE(st.received);
    CHECK(st.received->stage == 6);
    CHECK(st.received->n == 0);
    CHECK(st.received->sigma == sigma);
    CHECK(eng.history().members().empty());
    CHECK(eng.history().lachlan() == std::set<Stage>{5});
    CHECK(eng.history().change_count(4) == 2);
    CHECK(eng.initializations(2) == 1);
    CHECK(eng.initializations(3) == 2);
    CHECK(eng.p(1).witness == 7u);
    CHECK(held.size() == 24);
}

TEST_CASE("N step is idle off expansionary stages")
{
    const auto script = iso(1, 10, {axiom_at(0, psi(0), {0}, 0, {}, {})});
    IsolationEngine eng(script);
    eng.run();
    const auto before = eng.state_hash();
    const auto seq = eng.trace().next_seq();
    eng.n_step(0, 10);
    CHECK(eng.state_hash() == before);
    CHECK(eng.trace().next_seq() == seq);
}

TEST_CASE("initialization")
{
    IsolationEngine eng(iso(2, 10));
    eng.p_step(0, 0);
    eng.p_step(1, 0);
    const Element w1 = *eng.p(1).witness;

    eng.initialize_below(0);
    CHECK(eng.p(0).witness);
    CHECK_FALSE(eng.p(1).witness);
    for (std::uint64_t k = 1; k < 4; ++k) CHECK(eng.initializations(k) == 1);

    eng.initialize_below(3);
    for (std::uint64_t k = 1; k < 4; ++k) CHECK(eng.initializations(k) == 1);

    eng.p_step(1, 0);
    CHECK(*eng.p(1).witness > w1);
}

TEST_CASE("empty script")
{
    IsolationEngine eng(iso(3, 10));
    eng.run();
    CHECK(eng.history().members().empty());
    for (const auto& ev : eng.trace().events()) CHECK(ev.kind == EventKind::WitnessPicked);
    CHECK(eng.trace().events().size() == 3);
}

TEST_CASE("reruns are byte-identical")
{
    const auto script = iso(2, 12, {axiom_at(9, phi(0), {2}, 0, {}, {})});
    IsolationEngine a(script), b(script);
    a.run();
    b.run();
    CHECK(a.trace().str() == b.trace().str());
}

TEST_CASE("skipping quiescent stages does not change the trace")
{
    for (std::uint64_t seed = 0; seed < 30; ++seed)
    {
        const auto run = fuzz_run(Construction::Isolation, 4, 1500, corpus_seed(5, seed), profile_by_name("default"));
        IsolationEngine slow(run.script, EngineOptions{false});
        slow.run();
        REQUIRE(slow.trace().str() == run.trace);
    }
}

TEST_CASE("seeded run passes every check")
{
    const auto run = fuzz_run(Construction::Isolation, 4, 1000, 42, profile_by_name("default"));
    REQUIRE_FALSE(run.outcome.aborted);
    const auto v = replay_and_check(run.script, run.trace);
    for (const auto& r : v.reports)
    {
        INFO(r.id << " " << r.witness.value_or(""));
        CHECK(r.outcome != Outcome::Fail);
    }
}
