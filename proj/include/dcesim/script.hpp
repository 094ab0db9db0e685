#pragma once

// Adversary scripts: the stage-indexed enumerations into W_e and K and the
// axiom insertions into Phi_e / Psi_e that a construction reacts to.

#include "core.hpp"
#include "functional.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace dcesim
{

enum class Construction
{
    Isolation,
    UpperIsolation,
};

inline const char* to_string(Construction c)
{
    return c == Construction::Isolation ? "isolation" : "upper-isolation";
}

inline Construction parse_construction(const std::string& s)
{
    if (s == "isolation") return Construction::Isolation;
    if (s == "upper-isolation") return Construction::UpperIsolation;
    throw SimError(ErrorKind::ValidationError, "unknown construction '" + s + "'");
}

enum class FunctionalFamily
{
    Phi,
    Psi,
};

struct FunctionalId
{
    FunctionalFamily family = FunctionalFamily::Phi;
    std::uint64_t index = 0;

    std::string str() const
    {
        return std::string(family == FunctionalFamily::Phi ? "Phi_" : "Psi_") + std::to_string(index);
    }

    static FunctionalId parse(const std::string& s)
    {
        FunctionalId id;
        std::string_view rest;
        if (s.rfind("Phi_", 0) == 0) id.family = FunctionalFamily::Phi;
        else if (s.rfind("Psi_", 0) == 0) id.family = FunctionalFamily::Psi;
        else throw SimError(ErrorKind::ParseError, "functional id '" + s + "' is not Phi_<n> or Psi_<n>");
        rest = std::string_view(s).substr(4);
        auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), id.index);
        if (ec != std::errc() || p != rest.data() + rest.size() || rest.empty())
            throw SimError(ErrorKind::ParseError, "functional id '" + s + "' has a bad index");
        return id;
    }

    friend auto operator<=>(const FunctionalId&, const FunctionalId&) = default;
};

struct EnumerateW
{
    std::uint64_t e = 0;
    Element n = 0;
};

struct EnumerateK
{
    Element n = 0;
};

struct InsertAxiom
{
    FunctionalId functional;
    Axiom axiom; // axiom.born is the event stage
};

struct ScriptEvent
{
    Stage stage = 0;
    std::variant<EnumerateW, EnumerateK, InsertAxiom> body;
};

struct AdversaryScript
{
    Construction construction = Construction::Isolation;
    std::uint64_t depth = 3;
    Stage horizon = 100;
    std::optional<std::uint64_t> seed;
    std::string profile; // generator profile, informational
    std::vector<ScriptEvent> events;
};

/// The adversary's enumerations as seen by a running construction.
class World
{
public:
    /// Applies one event. Enumerations are idempotent; axioms are validated.
    void apply(const ScriptEvent& ev, Construction c)
    {
        std::visit(
            [&](const auto& body) {
                using T = std::decay_t<decltype(body)>;
                if constexpr (std::is_same_v<T, EnumerateW>)
                {
                    W_[body.e].insert(body.n);
                }
                else if constexpr (std::is_same_v<T, EnumerateK>)
                {
                    if (c == Construction::UpperIsolation && body.n % 2 == 0)
                        throw SimError(ErrorKind::OddKViolation,
                                       "K must be odd, got " + std::to_string(body.n));
                    K_.insert(body.n);
                }
                else
                {
                    Axiom a = body.axiom;
                    a.born = ev.stage;
                    functionals_[body.functional].insert(std::move(a));
                }
            },
            ev.body);
    }

    const std::set<Element>& W(std::uint64_t e) const
    {
        auto it = W_.find(e);
        return it == W_.end() ? empty_set_ : it->second;
    }

    const std::set<Element>& K() const { return K_; }

    const AxiomFunctional& functional(FunctionalId id) const
    {
        auto it = functionals_.find(id);
        return it == functionals_.end() ? empty_functional_ : it->second;
    }

    const AxiomFunctional& phi(std::uint64_t e) const { return functional({FunctionalFamily::Phi, e}); }
    const AxiomFunctional& psi(std::uint64_t e) const { return functional({FunctionalFamily::Psi, e}); }

    const std::map<FunctionalId, AxiomFunctional>& functionals() const { return functionals_; }
    const std::map<std::uint64_t, std::set<Element>>& all_W() const { return W_; }

private:
    std::map<std::uint64_t, std::set<Element>> W_;
    std::set<Element> K_;
    std::map<FunctionalId, AxiomFunctional> functionals_;
    std::set<Element> empty_set_;
    AxiomFunctional empty_functional_;
};

// ---------------------------------------------------------------------------
// JSON form
//
// {"construction": "isolation", "depth": 3, "horizon": 100, "seed": 7,
//  "profile": "default",
//  "events": [
//    {"kind": "enumerate_W", "e": 0, "n": 3, "stage": 5},
//    {"kind": "enumerate_K", "n": 3, "stage": 2},
//    {"kind": "insert_axiom", "functional": "Psi_0", "X": [0], "y": 0,
//     "P": [], "N": [5], "stage": 3}]}

namespace detail
{

inline std::uint64_t get_nat(const nlohmann::json& j, const char* field, std::size_t index)
{
    auto it = j.find(field);
    if (it == j.end())
        throw SimError(ErrorKind::ParseError,
                       "event " + std::to_string(index) + ": missing field '" + field + "'");
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
        throw SimError(ErrorKind::ParseError,
                       "event " + std::to_string(index) + ": field '" + field + "' must be a natural number");
    return it->get<std::uint64_t>();
}

inline std::vector<Element> get_set(const nlohmann::json& j, const char* field, std::size_t index)
{
    auto it = j.find(field);
    if (it == j.end()) return {};
    if (!it->is_array())
        throw SimError(ErrorKind::ParseError,
                       "event " + std::to_string(index) + ": field '" + field + "' must be an array");
    std::vector<Element> out;
    for (const auto& v : *it)
    {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            throw SimError(ErrorKind::ParseError,
                           "event " + std::to_string(index) + ": field '" + field + "' holds a non-natural");
        out.push_back(v.get<std::uint64_t>());
    }
    normalize(out);
    return out;
}

} // namespace detail

/// Checks stage order, odd K, horizon bounds and axiom consistency in stage
/// order. Throws ValidationError citing the violated condition.
inline void validate(const AdversaryScript& script)
{
    World world;
    Stage last = 0;
    for (std::size_t i = 0; i < script.events.size(); ++i)
    {
        const auto& ev = script.events[i];
        const std::string where = "event " + std::to_string(i) + " (stage " + std::to_string(ev.stage) + ")";
        if (ev.stage < last) throw SimError(ErrorKind::ValidationError, where + ": events are not stage-sorted");
        if (ev.stage > script.horizon)
            throw SimError(ErrorKind::ValidationError, where + ": stage beyond horizon");
        last = ev.stage;
        if (auto* k = std::get_if<EnumerateK>(&ev.body); k && k->n % 2 == 0)
            throw SimError(ErrorKind::ValidationError,
                           where + ": K must be odd (K is a subset of the odd numbers), got " + std::to_string(k->n));
        if (auto* a = std::get_if<InsertAxiom>(&ev.body); a && a->axiom.y > 1)
            throw SimError(ErrorKind::ValidationError, where + ": axiom output must be a bit");
        try
        {
            world.apply(ev, script.construction);
        }
        catch (const SimError& e)
        {
            throw SimError(ErrorKind::ValidationError, where + ": " + e.what());
        }
    }
}

inline AdversaryScript parse_script(const std::string& text)
{
    nlohmann::json doc;
    const bool blank = std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
    if (blank) doc = nlohmann::json::object();
    else
    {
        try
        {
            doc = nlohmann::json::parse(text);
        }
        catch (const nlohmann::json::parse_error& e)
        {
            throw SimError(ErrorKind::ParseError, std::string("line/byte ") + std::to_string(e.byte) + ": " + e.what());
        }
    }
    if (!doc.is_object()) throw SimError(ErrorKind::ParseError, "script must be a JSON object");

    AdversaryScript script;
    try
    {
        if (doc.contains("construction")) script.construction = parse_construction(doc.at("construction").get<std::string>());
        if (doc.contains("depth")) script.depth = doc.at("depth").get<std::uint64_t>();
        if (doc.contains("horizon")) script.horizon = doc.at("horizon").get<std::uint64_t>();
        if (doc.contains("seed") && !doc.at("seed").is_null()) script.seed = doc.at("seed").get<std::uint64_t>();
        if (doc.contains("profile")) script.profile = doc.at("profile").get<std::string>();
    }
    catch (const nlohmann::json::exception& e)
    {
        throw SimError(ErrorKind::ParseError, std::string("header field: ") + e.what());
    }

    if (doc.contains("events"))
    {
        const auto& evs = doc.at("events");
        if (!evs.is_array()) throw SimError(ErrorKind::ParseError, "'events' must be an array");
        for (std::size_t i = 0; i < evs.size(); ++i)
        {
            const auto& j = evs[i];
            if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
                throw SimError(ErrorKind::ParseError, "event " + std::to_string(i) + ": missing 'kind'");
            ScriptEvent ev;
            ev.stage = detail::get_nat(j, "stage", i);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "enumerate_W")
            {
                ev.body = EnumerateW{detail::get_nat(j, "e", i), detail::get_nat(j, "n", i)};
            }
            else if (kind == "enumerate_K")
            {
                ev.body = EnumerateK{detail::get_nat(j, "n", i)};
            }
            else if (kind == "insert_axiom")
            {
                if (!j.contains("functional") || !j.at("functional").is_string())
                    throw SimError(ErrorKind::ParseError, "event " + std::to_string(i) + ": missing 'functional'");
                InsertAxiom ia;
                ia.functional = FunctionalId::parse(j.at("functional").get<std::string>());
                ia.axiom.X = detail::get_set(j, "X", i);
                ia.axiom.y = static_cast<std::uint8_t>(std::min<std::uint64_t>(detail::get_nat(j, "y", i), 255));
                ia.axiom.P = detail::get_set(j, "P", i);
                ia.axiom.N = detail::get_set(j, "N", i);
                ia.axiom.born = ev.stage;
                ev.body = std::move(ia);
            }
            else
            {
                throw SimError(ErrorKind::ParseError, "event " + std::to_string(i) + ": unknown kind '" + kind + "'");
            }
            script.events.push_back(std::move(ev));
        }
    }
    std::stable_sort(script.events.begin(), script.events.end(),
                     [](const ScriptEvent& a, const ScriptEvent& b) { return a.stage < b.stage; });
    validate(script);
    return script;
}

inline nlohmann::ordered_json event_to_json(const ScriptEvent& ev)
{
    nlohmann::ordered_json j;
    std::visit(
        [&](const auto& body) {
            using T = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<T, EnumerateW>)
            {
                j["kind"] = "enumerate_W";
                j["e"] = body.e;
                j["n"] = body.n;
            }
            else if constexpr (std::is_same_v<T, EnumerateK>)
            {
                j["kind"] = "enumerate_K";
                j["n"] = body.n;
            }
            else
            {
                j["kind"] = "insert_axiom";
                j["functional"] = body.functional.str();
                j["X"] = body.axiom.X;
                j["y"] = body.axiom.y;
                j["P"] = body.axiom.P;
                j["N"] = body.axiom.N;
            }
        },
        ev.body);
    j["stage"] = ev.stage;
    return j;
}

inline std::string serialize_script(const AdversaryScript& script)
{
    nlohmann::ordered_json doc;
    doc["construction"] = to_string(script.construction);
    doc["depth"] = script.depth;
    doc["horizon"] = script.horizon;
    if (script.seed) doc["seed"] = *script.seed;
    if (!script.profile.empty()) doc["profile"] = script.profile;
    doc["events"] = nlohmann::ordered_json::array();
    for (const auto& ev : script.events) doc["events"].push_back(event_to_json(ev));
    // one event per line keeps scripts diffable
    std::string out = "{";
    bool first = true;
    for (auto it = doc.begin(); it != doc.end(); ++it)
    {
        if (it.key() == "events") continue;
        out += (first ? "\n  " : ",\n  ") + nlohmann::ordered_json(it.key()).dump() + ": " + it.value().dump();
        first = false;
    }
    out += ",\n  \"events\": [";
    for (std::size_t i = 0; i < script.events.size(); ++i)
    {
        out += (i ? ",\n    " : "\n    ") + doc["events"][i].dump();
    }
    out += script.events.empty() ? "]\n}\n" : "\n  ]\n}\n";
    return out;
}

} // namespace dcesim
