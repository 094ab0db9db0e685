#pragma once

// Stage clock, the d.c.e. set D with its full change history, the derived
// Lachlan set, binary segments and the fresh-number allocator.

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dcesim
{

using Stage = std::uint64_t;
using Element = std::uint64_t;

enum class ErrorKind
{
    DceViolation,
    NotRestorable,
    AxiomInconsistent,
    ExportInconsistent,
    NoRestorablePair,
    AgitatorViolation,
    OddKViolation,
    ParseError,
    ValidationError,
    ReplayDivergence,
    IoError,
};

inline const char* to_string(ErrorKind k) noexcept
{
    switch (k)
    {
    case ErrorKind::DceViolation: return "DceViolation";
    case ErrorKind::NotRestorable: return "NotRestorable";
    case ErrorKind::AxiomInconsistent: return "AxiomInconsistent";
    case ErrorKind::ExportInconsistent: return "ExportInconsistent";
    case ErrorKind::NoRestorablePair: return "NoRestorablePair";
    case ErrorKind::AgitatorViolation: return "AgitatorViolation";
    case ErrorKind::OddKViolation: return "OddKViolation";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::ReplayDivergence: return "ReplayDivergence";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

class SimError : public std::runtime_error
{
public:
    SimError(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what)
        , kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Anything with `bool contains(Element) const`.
template <typename T>
concept OracleView = requires(const T& o, Element z) {
    { o.contains(z) } -> std::convertible_to<bool>;
};

/// Read-only view over an ordered set (c.e. approximations W_e, K, L(D), D_s).
struct SetView
{
    const std::set<Element>* items = nullptr;

    bool contains(Element z) const { return items->count(z) != 0; }
};

/// A finite binary string, stored as its length plus the sorted positions
/// holding 1.
struct Segment
{
    std::uint64_t length = 0;
    std::vector<Element> ones;

    bool at(Element z) const
    {
        return z < length && std::binary_search(ones.begin(), ones.end(), z);
    }

    /// The restriction of an ordered set to [0, len).
    static Segment of(const std::set<Element>& s, std::uint64_t len)
    {
        Segment seg;
        seg.length = len;
        for (auto it = s.begin(); it != s.end() && *it < len; ++it)
        {
            seg.ones.push_back(*it);
        }
        return seg;
    }

    /// True iff this string is an initial segment of the characteristic
    /// sequence of `s`.
    bool is_prefix_of(const std::set<Element>& s) const
    {
        auto it = s.begin();
        for (Element one : ones)
        {
            if (it == s.end() || *it != one) return false;
            ++it;
        }
        return it == s.end() || *it >= length;
    }

    std::string to_bits() const
    {
        std::string out(length, '0');
        for (Element z : ones) out[z] = '1';
        return out;
    }

    friend bool operator==(const Segment&, const Segment&) = default;
    friend auto operator<=>(const Segment&, const Segment&) = default;
};

struct StageClock
{
    Stage current = 0;
    Stage horizon = 0;

    void advance()
    {
        if (current >= horizon)
        {
            throw std::logic_error("stage clock advanced past horizon");
        }
        ++current;
    }
};

enum class Direction : std::uint8_t
{
    Enter,
    Exit,
};

struct Change
{
    Stage stage = 0;
    Element z = 0;
    Direction dir = Direction::Enter;

    friend bool operator==(const Change&, const Change&) = default;
};

/// D as a stage-indexed history. Each element changes at most twice: in,
/// then possibly out.
class DceHistory
{
public:
    struct Record
    {
        std::optional<Stage> entered;
        std::optional<Stage> exited;

        unsigned count() const { return (entered ? 1u : 0u) + (exited ? 1u : 0u); }
    };

    void record_change(Element z, Direction dir, Stage s)
    {
        if (!changes_.empty() && s < changes_.back().stage)
        {
            throw SimError(ErrorKind::DceViolation, "change recorded out of stage order");
        }
        const unsigned before = change_count(z);
        if (dir == Direction::Enter)
        {
            if (before != 0)
            {
                throw SimError(ErrorKind::DceViolation,
                               "element " + std::to_string(z) + " cannot re-enter D");
            }
            records_[z].entered = s;
            members_.insert(z);
        }
        else
        {
            if (before != 1)
            {
                throw SimError(ErrorKind::DceViolation,
                               "element " + std::to_string(z) + " is not extractable");
            }
            Record& r = records_[z];
            r.exited = s;
            members_.erase(z);
            lachlan_.insert(*r.entered);
        }
        changes_.push_back({s, z, dir});
    }

    bool contains(Element z) const { return members_.count(z) != 0; }

    /// D_s(z): the value after every change made at stages <= s.
    bool membership_at(Element z, Stage s) const
    {
        auto it = records_.find(z);
        if (it == records_.end()) return false;
        const Record& r = it->second;
        if (!r.entered || *r.entered > s) return false;
        return !(r.exited && *r.exited <= s);
    }

    /// D#_s(z).
    unsigned change_count_at(Element z, Stage s) const
    {
        auto it = records_.find(z);
        if (it == records_.end()) return 0;
        const Record& r = it->second;
        return (r.entered && *r.entered <= s ? 1u : 0u) + (r.exited && *r.exited <= s ? 1u : 0u);
    }

    unsigned change_count(Element z) const
    {
        auto it = records_.find(z);
        return it == records_.end() ? 0u : it->second.count();
    }

    std::optional<Stage> entry_stage(Element z) const
    {
        auto it = records_.find(z);
        return it == records_.end() ? std::nullopt : it->second.entered;
    }

    /// Lachlan members as of stage t.
    std::set<Stage> lachlan_members(Stage t) const
    {
        std::set<Stage> out;
        for (const auto& [z, r] : records_)
        {
            if (r.exited && *r.exited <= t) out.insert(*r.entered);
        }
        return out;
    }

    bool is_restorable(Stage s, const Segment& sigma) const
    {
        for (auto it = records_.begin(); it != records_.end() && it->first < sigma.length; ++it)
        {
            const Element z = it->first;
            if (membership_at(z, s) != sigma.at(z) && change_count_at(z, s) != 1) return false;
        }
        // positions set in sigma that D never touched differ with count 0
        for (Element z : sigma.ones)
        {
            if (records_.count(z) == 0) return false;
        }
        return true;
    }

    /// Extracts every element below |sigma| on which the current D differs
    /// from sigma. Returns the extracted elements in increasing order.
    std::vector<Element> restore_to(Stage s, const Segment& sigma)
    {
        if (!is_restorable(s, sigma))
        {
            throw SimError(ErrorKind::NotRestorable, "D is not restorable to " + sigma.to_bits());
        }
        std::vector<Element> out;
        for (auto it = members_.begin(); it != members_.end() && *it < sigma.length; ++it)
        {
            if (!sigma.at(*it)) out.push_back(*it);
        }
        for (Element z : out) record_change(z, Direction::Exit, s);
        return out;
    }

    const std::set<Element>& members() const { return members_; }
    const std::set<Stage>& lachlan() const { return lachlan_; }
    const std::vector<Change>& changes() const { return changes_; }
    const std::map<Element, Record>& records() const { return records_; }

private:
    std::vector<Change> changes_;
    std::map<Element, Record> records_;
    std::set<Element> members_;
    std::set<Stage> lachlan_;
};

/// Monotone source of fresh numbers.
class FreshAllocator
{
public:
    explicit FreshAllocator(Element seed = 0)
        : next_(seed)
    {
    }

    void observe(Element n)
    {
        if (n >= next_) next_ = n + 1;
    }

    Element fresh() { return next_++; }

    Element peek() const { return next_; }

private:
    Element next_;
};

} // namespace dcesim
