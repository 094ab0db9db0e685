#pragma once

// Turing functionals as sets of axiom quadruples <X, y, P, N>, pointwise
// evaluation with uses, length of agreement, expansionary stages, the
// constructed Gamma graphs and their export as setwise axiom sets.

#include "core.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace dcesim
{

struct Axiom
{
    std::vector<Element> X; // sorted
    std::uint8_t y = 0;
    std::vector<Element> P; // sorted
    std::vector<Element> N; // sorted
    Stage born = 0;

    /// 1 + max(P u N u {0}).
    std::uint64_t use() const
    {
        Element m = 0;
        if (!P.empty()) m = std::max(m, P.back());
        if (!N.empty()) m = std::max(m, N.back());
        return m + 1;
    }

    friend bool operator==(const Axiom&, const Axiom&) = default;
};

namespace detail
{

inline bool sorted_intersect(const std::vector<Element>& a, const std::vector<Element>& b)
{
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end())
    {
        if (*i == *j) return true;
        if (*i < *j) ++i;
        else ++j;
    }
    return false;
}

inline void normalize(std::vector<Element>& v)
{
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Applicable-axiom order: earliest born, then (y, P, N) lexicographic.
inline bool precedes(const Axiom& a, const Axiom& b)
{
    if (a.born != b.born) return a.born < b.born;
    if (a.y != b.y) return a.y < b.y;
    if (a.P != b.P) return a.P < b.P;
    return a.N < b.N;
}

} // namespace detail

/// Two axioms whose oracle parts can hold simultaneously. Their monotone
/// closures then share a quadruple for every common X'.
inline bool compatible(const Axiom& a, const Axiom& b)
{
    return !detail::sorted_intersect(a.P, b.N) && !detail::sorted_intersect(b.P, a.N);
}

/// Reasons an axiom is rejected, empty if it is acceptable against `base`.
inline std::string axiom_conflict(const Axiom& a, const std::vector<const Axiom*>& candidates)
{
    if (detail::sorted_intersect(a.P, a.N)) return "condition (i): P and N intersect";
    for (const Axiom* b : candidates)
    {
        if (b->y == a.y) continue;
        if (a.X.empty() || b->X.empty())
        {
            if (a.X == b->X && a.P == b->P && a.N == b->N)
                return "condition (iii): same <X, P, N> with different outputs";
            continue;
        }
        if (detail::sorted_intersect(a.X, b->X) && compatible(a, *b))
            return "condition (iii): closure contains <X', 0, P', N'> and <X', 1, P', N'>";
    }
    return {};
}

struct Computation
{
    std::uint8_t value = 0;
    std::uint64_t use = 0;
    std::size_t axiom = 0; // index into the functional's base

    friend bool operator==(const Computation&, const Computation&) = default;
};

class AxiomFunctional
{
public:
    /// Rejects with AxiomInconsistent on (i) or (iii) against the base,
    /// where (iii) is checked over the monotone (ii)-closure.
    void insert(Axiom a)
    {
        detail::normalize(a.X);
        detail::normalize(a.P);
        detail::normalize(a.N);
        if (auto why = conflict(a); !why.empty())
        {
            throw SimError(ErrorKind::AxiomInconsistent, why);
        }
        const std::size_t idx = base_.size();
        base_.push_back(std::move(a));
        const Axiom& stored = base_.back();
        for (Element x : stored.X)
        {
            auto& list = by_x_[x];
            auto pos = std::upper_bound(list.begin(), list.end(), idx, [this](std::size_t l, std::size_t r) {
                return detail::precedes(base_[l], base_[r]);
            });
            list.insert(pos, idx);
        }
        if (stored.X.empty()) empty_x_.push_back(idx);
    }

    /// Empty if `a` could be inserted.
    std::string conflict(const Axiom& a) const
    {
        std::vector<const Axiom*> candidates;
        if (a.X.empty())
        {
            for (std::size_t i : empty_x_) candidates.push_back(&base_[i]);
        }
        for (Element x : a.X)
        {
            auto it = by_x_.find(x);
            if (it == by_x_.end()) continue;
            for (std::size_t i : it->second) candidates.push_back(&base_[i]);
        }
        return axiom_conflict(a, candidates);
    }

    template <OracleView Oracle>
    std::optional<Computation> evaluate(const Oracle& oracle, Element x) const
    {
        auto it = by_x_.find(x);
        if (it == by_x_.end()) return std::nullopt;
        for (std::size_t i : it->second)
        {
            const Axiom& a = base_[i];
            if (applies(a, oracle)) return Computation{a.y, a.use(), i};
        }
        return std::nullopt;
    }

    std::optional<Computation> evaluate(const std::set<Element>& oracle, Element x) const
    {
        return evaluate(SetView{&oracle}, x);
    }

    /// Phi^sigma(x): an axiom whose oracle part lies entirely below |sigma|
    /// and agrees with sigma.
    std::optional<Computation> evaluate_on(const Segment& sigma, Element x) const
    {
        auto it = by_x_.find(x);
        if (it == by_x_.end()) return std::nullopt;
        for (std::size_t i : it->second)
        {
            const Axiom& a = base_[i];
            if (a.use() > sigma.length && !(a.P.empty() && a.N.empty())) continue;
            bool ok = true;
            for (Element p : a.P) ok = ok && sigma.at(p);
            for (Element n : a.N) ok = ok && !sigma.at(n);
            if (ok) return Computation{a.y, a.use(), i};
        }
        return std::nullopt;
    }

    const std::vector<Axiom>& base() const { return base_; }
    bool empty() const { return base_.empty(); }

private:
    template <OracleView Oracle>
    static bool applies(const Axiom& a, const Oracle& oracle)
    {
        for (Element p : a.P)
            if (!oracle.contains(p)) return false;
        for (Element n : a.N)
            if (oracle.contains(n)) return false;
        return true;
    }

    std::vector<Axiom> base_;
    std::unordered_map<Element, std::vector<std::size_t>> by_x_;
    std::vector<std::size_t> empty_x_;
};

/// max{y : for all x < y, f^oracle(x) converges to target(x)}.
template <OracleView Oracle, typename Target>
std::uint64_t length_of_agreement(const AxiomFunctional& f, const Oracle& oracle, Target&& target)
{
    std::uint64_t y = 0;
    for (;;)
    {
        auto c = f.evaluate(oracle, y);
        if (!c || (c->value != 0) != static_cast<bool>(target(y))) return y;
        ++y;
    }
}

/// Strictly above every earlier measurement in its comparison class; the
/// maximum over an empty class is 0.
inline bool is_expansionary(const std::vector<std::uint64_t>& earlier, std::uint64_t ell)
{
    std::uint64_t best = 0;
    for (auto v : earlier) best = std::max(best, v);
    return ell > best;
}

/// Running form of is_expansionary: keeps only the maximum.
class ExpansionTracker
{
public:
    bool observe(std::uint64_t ell)
    {
        const bool exp = ell > max_;
        max_ = std::max(max_, ell);
        ++count_;
        return exp;
    }

    std::uint64_t max() const { return max_; }
    std::uint64_t count() const { return count_; }
    void reset() { *this = {}; }

private:
    std::uint64_t max_ = 0;
    std::uint64_t count_ = 0;
};

/// Gamma graph: x -> (value, use, snapshot of the oracle below use).
class GammaGraph
{
public:
    struct Entry
    {
        bool value = false;
        std::uint64_t use = 0;
        Segment snapshot;
        Stage defined_at = 0;
    };

    void define(Element x, bool value, std::uint64_t use, const std::set<Element>& oracle, Stage s)
    {
        entries_[x] = Entry{value, use, Segment::of(oracle, use), s};
    }

    /// Defined iff the oracle below use still equals the snapshot.
    std::optional<bool> lookup(const std::set<Element>& oracle, Element x) const
    {
        auto it = entries_.find(x);
        if (it == entries_.end()) return std::nullopt;
        if (!it->second.snapshot.is_prefix_of(oracle)) return std::nullopt;
        return it->second.value;
    }

    /// Least x at which lookup is undefined.
    Element least_undefined(const std::set<Element>& oracle) const
    {
        Element x = 0;
        while (lookup(oracle, x)) ++x;
        return x;
    }

    void erase(Element x) { entries_.erase(x); }
    void clear() { entries_.clear(); }
    const std::map<Element, Entry>& entries() const { return entries_; }

    /// Drops entries no longer defined against `oracle`.
    void prune(const std::set<Element>& oracle)
    {
        for (auto it = entries_.begin(); it != entries_.end();)
        {
            if (!it->second.snapshot.is_prefix_of(oracle)) it = entries_.erase(it);
            else ++it;
        }
    }

private:
    std::map<Element, Entry> entries_;
};

/// Setwise axiom set for the downward-closed block [0, n) of `g`: one
/// singleton axiom per argument, plus one axiom per output value over the
/// whole block. P and N are read off the union of the snapshots.
inline AxiomFunctional export_setwise(const GammaGraph& g)
{
    const auto& entries = g.entries();
    std::vector<const GammaGraph::Entry*> block;
    for (Element x = 0;; ++x)
    {
        auto it = entries.find(x);
        if (it == entries.end()) break;
        block.push_back(&it->second);
    }

    auto parts = [](const Segment& s, std::vector<Element>& P, std::vector<Element>& N) {
        for (Element z = 0; z < s.length; ++z) (s.at(z) ? P : N).push_back(z);
    };

    for (std::size_t a = 0; a < block.size(); ++a)
    {
        for (std::size_t b = a + 1; b < block.size(); ++b)
        {
            const auto lim = std::min(block[a]->use, block[b]->use);
            for (Element z = 0; z < lim; ++z)
            {
                if (block[a]->snapshot.at(z) != block[b]->snapshot.at(z))
                {
                    throw SimError(ErrorKind::ExportInconsistent,
                                   "entries " + std::to_string(a) + " and " + std::to_string(b) +
                                       " disagree on oracle position " + std::to_string(z));
                }
            }
        }
    }

    AxiomFunctional out;
    try
    {
        Axiom whole[2];
        for (std::size_t x = 0; x < block.size(); ++x)
        {
            Axiom a;
            a.X = {x};
            a.y = block[x]->value ? 1 : 0;
            parts(block[x]->snapshot, a.P, a.N);
            Axiom& w = whole[a.y];
            w.y = a.y;
            w.X.push_back(x);
            w.P.insert(w.P.end(), a.P.begin(), a.P.end());
            w.N.insert(w.N.end(), a.N.begin(), a.N.end());
            out.insert(std::move(a));
        }
        for (Axiom& w : whole)
        {
            if (w.X.size() >= 2) out.insert(std::move(w));
        }
    }
    catch (const SimError& e)
    {
        throw SimError(ErrorKind::ExportInconsistent, e.what());
    }
    return out;
}

} // namespace dcesim
