#pragma once

// Trace records: one JSON line each, stable field order, integers only.

#include "core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dcesim
{

inline constexpr const char* kEngineVersion = "dcesim/1";

enum class EventKind
{
    WitnessPicked,
    DEnter,
    DExit,
    PairCreated,
    PairSuperseded,
    Disagreement,
    Initialized,
    GammaDefined,
    GammaInvalidated,
    Expansionary,
    AgitatorTransition,
    UpsilonRecord,
    UpsilonUnrestorable,
    DeltaFlip,
    StageStopped,
};

inline const char* to_string(EventKind k)
{
    switch (k)
    {
    case EventKind::WitnessPicked: return "witness_picked";
    case EventKind::DEnter: return "d_enter";
    case EventKind::DExit: return "d_exit";
    case EventKind::PairCreated: return "pair_created";
    case EventKind::PairSuperseded: return "pair_superseded";
    case EventKind::Disagreement: return "disagreement";
    case EventKind::Initialized: return "initialized";
    case EventKind::GammaDefined: return "gamma_defined";
    case EventKind::GammaInvalidated: return "gamma_invalidated";
    case EventKind::Expansionary: return "expansionary";
    case EventKind::AgitatorTransition: return "agitator_transition";
    case EventKind::UpsilonRecord: return "upsilon_record";
    case EventKind::UpsilonUnrestorable: return "upsilon_unrestorable";
    case EventKind::DeltaFlip: return "delta_flip";
    case EventKind::StageStopped: return "stage_stopped";
    }
    return "unknown";
}

struct TraceEvent
{
    Stage stage = 0;
    std::uint64_t seq = 0;
    std::string actor;
    EventKind kind = EventKind::WitnessPicked;
    nlohmann::ordered_json data = nlohmann::ordered_json::object();
};

/// 128-bit FNV-1a.
class Fnv128
{
public:
    void update(std::string_view bytes)
    {
        for (unsigned char c : bytes)
        {
            h_ ^= c;
            h_ *= kPrime;
        }
    }

    std::string hex() const
    {
        static const char* digits = "0123456789abcdef";
        std::string out(32, '0');
        unsigned __int128 v = h_;
        for (int i = 31; i >= 0; --i)
        {
            out[static_cast<std::size_t>(i)] = digits[static_cast<unsigned>(v & 0xf)];
            v >>= 4;
        }
        return out;
    }

private:
    static constexpr unsigned __int128 kPrime =
        (static_cast<unsigned __int128>(0x0000000001000000ULL) << 64) | 0x000000000000013BULL;
    unsigned __int128 h_ =
        (static_cast<unsigned __int128>(0x6c62272e07bb0142ULL) << 64) | 0x62b821756295c58dULL;
};

/// Append-only record stream of one run.
class Trace
{
public:
    void header(nlohmann::ordered_json h) { header_ = std::move(h); }

    TraceEvent& emit(Stage s, std::string actor, EventKind kind, nlohmann::ordered_json data = nlohmann::ordered_json::object())
    {
        events_.push_back(TraceEvent{s, seq_, std::move(actor), kind, std::move(data)});
        lines_.push_back(event_line(events_.back()));
        ++seq_;
        return events_.back();
    }

    void stage_hash(Stage s, const std::string& hash)
    {
        nlohmann::ordered_json j;
        j["t"] = "stage";
        j["stage"] = s;
        j["hash"] = hash;
        lines_.push_back(j.dump());
    }

    void diagnostic(Stage s, const std::string& kind, const std::string& message)
    {
        nlohmann::ordered_json j;
        j["t"] = "diagnostic";
        j["stage"] = s;
        j["error"] = kind;
        j["message"] = message;
        lines_.push_back(j.dump());
        aborted_ = true;
    }

    void summary(nlohmann::ordered_json s)
    {
        nlohmann::ordered_json j;
        j["t"] = "summary";
        for (auto& [k, v] : s.items()) j[k] = v;
        lines_.push_back(j.dump());
    }

    static std::string event_line(const TraceEvent& ev)
    {
        nlohmann::ordered_json j;
        j["t"] = "event";
        j["stage"] = ev.stage;
        j["seq"] = ev.seq;
        j["actor"] = ev.actor;
        j["kind"] = to_string(ev.kind);
        j["data"] = ev.data;
        return j.dump();
    }

    /// The JSON-lines rendering: header first, then records in emission order.
    std::string str() const
    {
        std::string out;
        nlohmann::ordered_json h;
        h["t"] = "header";
        for (auto& [k, v] : header_.items()) h[k] = v;
        out += h.dump();
        out += '\n';
        for (const auto& l : lines_)
        {
            out += l;
            out += '\n';
        }
        return out;
    }

    const std::vector<TraceEvent>& events() const { return events_; }
    bool aborted() const { return aborted_; }
    std::uint64_t next_seq() const { return seq_; }

private:
    nlohmann::ordered_json header_ = nlohmann::ordered_json::object();
    std::vector<TraceEvent> events_;
    std::vector<std::string> lines_;
    std::uint64_t seq_ = 0;
    bool aborted_ = false;
};

/// A parsed JSON-lines trace (for bounds reporting and verification).
struct LoadedTrace
{
    nlohmann::json header;
    std::vector<TraceEvent> events;
    std::vector<std::string> lines; // every line, verbatim, header included
    bool aborted = false;
};

inline LoadedTrace load_trace(const std::string& text)
{
    LoadedTrace out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try
        {
            j = nlohmann::json::parse(line);
        }
        catch (const nlohmann::json::parse_error& e)
        {
            throw SimError(ErrorKind::ParseError, "trace line " + std::to_string(lineno) + ": " + e.what());
        }
        out.lines.push_back(line);
        const auto t = j.value("t", std::string{});
        if (t == "header") out.header = j;
        else if (t == "diagnostic") out.aborted = true;
        else if (t == "event")
        {
            TraceEvent ev;
            ev.stage = j.at("stage").get<Stage>();
            ev.seq = j.at("seq").get<std::uint64_t>();
            ev.actor = j.at("actor").get<std::string>();
            const auto kind = j.at("kind").get<std::string>();
            bool known = false;
            for (int k = 0; k <= static_cast<int>(EventKind::StageStopped); ++k)
            {
                if (kind == to_string(static_cast<EventKind>(k)))
                {
                    ev.kind = static_cast<EventKind>(k);
                    known = true;
                }
            }
            if (!known) throw SimError(ErrorKind::ParseError, "trace line " + std::to_string(lineno) + ": unknown kind " + kind);
            ev.data = nlohmann::ordered_json::parse(j.at("data").dump());
            out.events.push_back(std::move(ev));
        }
    }
    return out;
}

} // namespace dcesim
