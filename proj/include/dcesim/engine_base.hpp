#pragma once

// State shared by both constructions: the adversary's world, D, the fresh
// number allocator, the stage loop's script cursor and the trace.

#include "core.hpp"
#include "script.hpp"
#include "trace.hpp"

#include <charconv>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dcesim
{

/// Inverse of the Cantor pairing <a, b> = (a + b)(a + b + 1)/2 + b.
inline std::pair<std::uint64_t, std::uint64_t> unpair(std::uint64_t e)
{
    std::uint64_t w = 0;
    while ((w + 1) * (w + 2) / 2 <= e) ++w;
    const std::uint64_t b = e - w * (w + 1) / 2;
    return {w - b, b};
}

inline std::uint64_t pair(std::uint64_t a, std::uint64_t b)
{
    return (a + b) * (a + b + 1) / 2 + b;
}

/// Called at the start of every stage, before scripted events are applied;
/// events it appends are stamped with that stage and recorded in the script.
using AdversaryHook = std::function<void(Stage, std::vector<ScriptEvent>&)>;

struct EngineOptions
{
    /// Skip the strategy walk on stages that provably repeat the previous
    /// one (no adversary events and no change during the previous stage).
    bool skip_quiescent = true;
};

struct RunOutcome
{
    bool aborted = false;
    std::optional<ErrorKind> error;
    std::string message;
    Stage stage = 0;
};

class EngineBase
{
public:
    EngineBase(AdversaryScript script, EngineOptions options)
        : script_(std::move(script))
        , options_(options)
    {
        clock_.horizon = script_.horizon;
    }

    void set_adversary(AdversaryHook hook) { hook_ = std::move(hook); }

    const AdversaryScript& script() const { return script_; }
    const World& world() const { return world_; }
    const DceHistory& history() const { return history_; }
    const FreshAllocator& allocator() const { return alloc_; }
    const Trace& trace() const { return trace_; }
    Stage stage() const { return clock_.current; }
    std::uint64_t depth() const { return script_.depth; }
    const RunOutcome& outcome() const { return outcome_; }

protected:
    struct Fingerprint
    {
        std::uint64_t seq = 0;
        std::size_t changes = 0;
        Element next = 0;

        friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
    };

    Fingerprint fingerprint() const { return {trace_.next_seq(), history_.changes().size(), alloc_.peek()}; }

    /// Applies this stage's adversary events. Returns how many were applied.
    std::size_t begin_stage(Stage s)
    {
        std::size_t applied = 0;
        if (hook_)
        {
            std::vector<ScriptEvent> generated;
            hook_(s, generated);
            // generated events go after any scripted ones of the same stage
            std::size_t at = cursor_;
            while (at < script_.events.size() && script_.events[at].stage <= s) ++at;
            for (auto& ev : generated)
            {
                ev.stage = s;
                if (auto* ia = std::get_if<InsertAxiom>(&ev.body)) ia->axiom.born = s;
                script_.events.insert(script_.events.begin() + static_cast<std::ptrdiff_t>(at), std::move(ev));
                ++at;
            }
        }
        while (cursor_ < script_.events.size() && script_.events[cursor_].stage <= s)
        {
            world_.apply(script_.events[cursor_], script_.construction);
            observe_constants(script_.events[cursor_]);
            ++cursor_;
            ++applied;
        }
        return applied;
    }

    /// Fresh numbers stay above every number an applied event mentions.
    void observe_constants(const ScriptEvent& ev)
    {
        std::visit(
            [&](const auto& body) {
                using T = std::decay_t<decltype(body)>;
                if constexpr (std::is_same_v<T, InsertAxiom>)
                {
                    for (const auto* part : {&body.axiom.X, &body.axiom.P, &body.axiom.N})
                    {
                        if (!part->empty()) alloc_.observe(part->back());
                    }
                }
                else alloc_.observe(body.n);
            },
            ev.body);
    }

    Element fresh()
    {
        if (fresh_above_stage_) alloc_.observe(clock_.current);
        return alloc_.fresh();
    }

    nlohmann::ordered_json header_json() const
    {
        nlohmann::ordered_json h;
        h["version"] = kEngineVersion;
        h["construction"] = to_string(script_.construction);
        h["depth"] = script_.depth;
        h["horizon"] = script_.horizon;
        if (script_.seed) h["seed"] = *script_.seed;
        if (!script_.profile.empty()) h["profile"] = script_.profile;
        return h;
    }

    void record_enter(Element z, const std::string& actor, nlohmann::ordered_json extra = nlohmann::ordered_json::object())
    {
        history_.record_change(z, Direction::Enter, clock_.current);
        nlohmann::ordered_json d;
        d["z"] = z;
        for (auto& [k, v] : extra.items()) d[k] = v;
        trace_.emit(clock_.current, actor, EventKind::DEnter, std::move(d));
    }

    void record_exit(Element z, const std::string& actor, nlohmann::ordered_json extra = nlohmann::ordered_json::object())
    {
        history_.record_change(z, Direction::Exit, clock_.current);
        nlohmann::ordered_json d;
        d["z"] = z;
        d["lachlan"] = *history_.entry_stage(z);
        for (auto& [k, v] : extra.items()) d[k] = v;
        trace_.emit(clock_.current, actor, EventKind::DExit, std::move(d));
    }

    static void put(std::string& out, std::uint64_t n)
    {
        char buf[24];
        out.append(buf, std::to_chars(buf, buf + sizeof buf, n).ptr);
    }

    static void hash_set(std::string& out, const std::set<Element>& s)
    {
        out += '{';
        for (Element z : s)
        {
            put(out, z);
            out += ',';
        }
        out += '}';
    }

    static void hash_segment(std::string& out, const Segment& s)
    {
        put(out, s.length);
        out += ':';
        for (Element z : s.ones)
        {
            put(out, z);
            out += ',';
        }
        out += ';';
    }

    void hash_core(std::string& out) const
    {
        out += "D#" + std::to_string(history_.changes().size());
        hash_set(out, history_.members());
        out += "L";
        hash_set(out, history_.lachlan());
        out += "next" + std::to_string(alloc_.peek());
    }

    void abort_run(const SimError& e)
    {
        outcome_.aborted = true;
        outcome_.error = e.kind();
        outcome_.message = e.what();
        outcome_.stage = clock_.current;
    }

    /// Summary, then the abort diagnostic (if any) as the last record.
    void finish_trace(nlohmann::ordered_json summary)
    {
        trace_.summary(std::move(summary));
        if (outcome_.aborted && outcome_.error) trace_.diagnostic(outcome_.stage, to_string(*outcome_.error), outcome_.message);
    }

    AdversaryScript script_;
    EngineOptions options_;
    World world_;
    DceHistory history_;
    FreshAllocator alloc_;
    Trace trace_;
    StageClock clock_;
    AdversaryHook hook_;
    std::size_t cursor_ = 0;
    RunOutcome outcome_;
    bool fresh_above_stage_ = true;
};

} // namespace dcesim
