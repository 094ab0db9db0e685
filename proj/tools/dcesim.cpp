// dcesim: run, fuzz, verify and bound-report the two constructions.
//
// Exit status: 0 success, 1 a run aborted or a check failed, 2 usage,
// parse or I/O errors.

#include "dcesim/fuzz.hpp"
#include "dcesim/verifier.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dcesim;

namespace
{

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SimError(ErrorKind::IoError, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw SimError(ErrorKind::IoError, "short write to " + path.string());
}

/// DCESIM_OUT_DIR, when set, prefixes relative output paths.
fs::path out_path(const std::string& p)
{
    const char* dir = std::getenv("DCESIM_OUT_DIR");
    fs::path path(p);
    if (dir && *dir && path.is_relative()) return fs::path(dir) / path;
    return path;
}

std::string with_checks(const std::string& trace, const std::vector<CheckReport>& reports)
{
    std::string out = trace;
    for (const auto& r : reports) out += r.to_json().dump() + "\n";
    return out;
}

void print_reports(const std::vector<CheckReport>& reports)
{
    for (const auto& r : reports)
    {
        std::printf("%-28s %-15s obs=%llu stages=%llu..%llu", r.id.c_str(), to_string(r.outcome),
                    static_cast<unsigned long long>(r.observations), static_cast<unsigned long long>(r.first_stage),
                    static_cast<unsigned long long>(r.last_stage));
        if (r.witness) std::printf("  witness: %s", r.witness->c_str());
        std::printf("\n");
    }
}

struct Options
{
    std::string construction = "isolation";
    std::uint64_t depth = 3;
    Stage horizon = 100;
    std::optional<std::uint64_t> seed;
    std::string profile = "default";
    std::string trace;
    std::string script;
    std::string script_out;
    std::uint64_t count = 1;
    std::string out;
};

int cmd_run(const Options& o, bool horizon_given)
{
    AdversaryScript script;
    std::string trace;
    RunOutcome outcome;
    std::string summary;
    if (!o.script.empty())
    {
        script = parse_script(read_file(o.script));
        if (horizon_given) script.horizon = o.horizon;
        if (script.construction == Construction::Isolation)
        {
            IsolationEngine eng(script);
            outcome = eng.run();
            trace = eng.trace().str();
            summary = eng.summary().dump();
        }
        else
        {
            UpperIsolationEngine eng(script);
            outcome = eng.run();
            trace = eng.trace().str();
            summary = eng.summary().dump();
        }
    }
    else
    {
        const auto c = parse_construction(o.construction);
        if (o.seed)
        {
            auto run = fuzz_run(c, o.depth, o.horizon, *o.seed, profile_by_name(o.profile));
            script = run.script;
            trace = run.trace;
            outcome = run.outcome;
        }
        else
        {
            script.construction = c;
            script.depth = o.depth;
            script.horizon = o.horizon;
            if (c == Construction::Isolation)
            {
                IsolationEngine eng(script);
                outcome = eng.run();
                trace = eng.trace().str();
            }
            else
            {
                UpperIsolationEngine eng(script);
                outcome = eng.run();
                trace = eng.trace().str();
            }
        }
        const auto at = trace.rfind("{\"t\":\"summary\"");
        if (at != std::string::npos) summary = trace.substr(at, trace.find('\n', at) - at);
    }
    if (!o.trace.empty()) write_file(out_path(o.trace), trace);
    else std::fwrite(trace.data(), 1, trace.size(), stdout);
    if (!o.script_out.empty()) write_file(out_path(o.script_out), serialize_script(script));
    if (!o.trace.empty()) std::printf("%s\n", summary.c_str());
    if (outcome.aborted)
    {
        std::fprintf(stderr, "run aborted at stage %llu: %s\n", static_cast<unsigned long long>(outcome.stage), outcome.message.c_str());
        return kFailed;
    }
    return kOk;
}

int cmd_fuzz(const Options& o)
{
    const auto c = parse_construction(o.construction);
    const Profile profile = profile_by_name(o.profile);
    const std::uint64_t base = o.seed.value_or(0);
    std::map<std::string, std::array<std::uint64_t, 3>> totals; // pass, fail, n/a
    std::uint64_t failed_runs = 0, aborted = 0;
    std::string report;
    for (std::uint64_t i = 0; i < o.count; ++i)
    {
        const std::uint64_t seed = corpus_seed(base, i);
        auto run = fuzz_run(c, o.depth, o.horizon, seed, profile);
        std::vector<CheckReport> reports;
        try
        {
            reports = replay_and_check(run.script, run.trace).reports;
        }
        catch (const SimError& e)
        {
            CheckReport r;
            r.id = "replay";
            r.outcome = Outcome::Fail;
            r.witness = e.what();
            reports.push_back(r);
        }
        bool bad = run.outcome.aborted;
        for (const auto& r : reports)
        {
            totals[r.id][static_cast<int>(r.outcome)]++;
            if (r.outcome == Outcome::Fail)
            {
                bad = true;
                std::printf("seed %llu: %s failed: %s\n", static_cast<unsigned long long>(seed), r.id.c_str(),
                            r.witness.value_or("").c_str());
            }
        }
        if (run.outcome.aborted)
        {
            ++aborted;
            std::printf("seed %llu: aborted at stage %llu: %s\n", static_cast<unsigned long long>(seed),
                        static_cast<unsigned long long>(run.outcome.stage), run.outcome.message.c_str());
        }
        failed_runs += bad ? 1 : 0;
        if (!o.out.empty())
        {
            const fs::path dir = out_path(o.out);
            const std::string stem = "run-" + std::to_string(i);
            write_file(dir / (stem + ".script.json"), serialize_script(run.script));
            write_file(dir / (stem + ".trace.jsonl"), with_checks(run.trace, reports));
        }
        nlohmann::ordered_json line;
        line["run"] = i;
        line["seed"] = seed;
        line["aborted"] = run.outcome.aborted;
        line["failed"] = bad;
        report += line.dump() + "\n";
    }
    std::printf("%-28s %8s %8s %8s\n", "check", "pass", "fail", "n/a");
    for (const auto& [id, t] : totals)
    {
        std::printf("%-28s %8llu %8llu %8llu\n", id.c_str(), static_cast<unsigned long long>(t[0]),
                    static_cast<unsigned long long>(t[1]), static_cast<unsigned long long>(t[2]));
    }
    std::printf("runs %llu, failed %llu, aborted %llu\n", static_cast<unsigned long long>(o.count),
                static_cast<unsigned long long>(failed_runs), static_cast<unsigned long long>(aborted));
    if (!o.out.empty()) write_file(out_path(o.out) / "report.jsonl", report);
    return failed_runs ? kFailed : kOk;
}

int cmd_verify(const Options& o)
{
    if (o.trace.empty() || o.script.empty()) throw CLI::RequiredError("verify needs --trace and --script");
    const std::string recorded = read_file(o.trace);
    const AdversaryScript script = parse_script(read_file(o.script));
    Verification v;
    try
    {
        v = replay_and_check(script, recorded);
    }
    catch (const SimError& e)
    {
        if (e.kind() != ErrorKind::ReplayDivergence) throw;
        std::fprintf(stderr, "ReplayDivergence: %s\n", e.what());
        return kFailed;
    }
    print_reports(v.reports);
    return v.passed() && !v.outcome.aborted ? kOk : kFailed;
}

int cmd_bounds(const Options& o)
{
    if (o.trace.empty()) throw CLI::RequiredError("bounds needs --trace");
    const LoadedTrace t = load_trace(read_file(o.trace));
    bool over = false;
    std::printf("%-12s %6s %12s %22s\n", "counter", "index", "measured", "bound");
    for (const auto& row : bounds_table(t))
    {
        over = over || row.measured > row.bound;
        std::printf("%-12s %6llu %12llu %22llu%s\n", row.name.c_str(), static_cast<unsigned long long>(row.index),
                    static_cast<unsigned long long>(row.measured), static_cast<unsigned long long>(row.bound),
                    row.measured > row.bound ? "  EXCEEDED" : "");
    }
    return over ? kFailed : kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Stage-by-stage simulation of the isolation and upper-isolation constructions"};
    app.require_subcommand(1);
    Options o;

    auto add_shape = [&](CLI::App* sub) {
        sub->add_option("--construction", o.construction, "isolation | upper-isolation")
            ->check(CLI::IsMember({"isolation", "upper-isolation"}));
        sub->add_option("--depth", o.depth, "number of requirement indices");
        sub->add_option("--seed", o.seed, "adversary seed");
        sub->add_option("--profile", o.profile, "empty | sparse | default | dense")
            ->check(CLI::IsMember({"empty", "sparse", "default", "dense"}));
    };

    auto* run = app.add_subcommand("run", "run one script, or one seeded adversary");
    add_shape(run);
    auto* run_horizon = run->add_option("--horizon", o.horizon, "last stage");
    run->add_option("--script", o.script, "adversary script (JSON)");
    run->add_option("--trace", o.trace, "trace output (JSON lines); stdout if omitted");
    run->add_option("--script-out", o.script_out, "write the script actually run");

    auto* fuzz = app.add_subcommand("fuzz", "run and verify a seeded corpus");
    add_shape(fuzz);
    fuzz->add_option("--horizon", o.horizon, "last stage");
    fuzz->add_option("--count", o.count, "corpus size");
    fuzz->add_option("--out", o.out, "directory for scripts, traces and report.jsonl");

    auto* verify = app.add_subcommand("verify", "replay a script and check its trace");
    verify->add_option("--trace", o.trace, "recorded trace")->required();
    verify->add_option("--script", o.script, "script the trace came from")->required();

    auto* bnd = app.add_subcommand("bounds", "measured counters against their closed forms");
    bnd->add_option("--trace", o.trace, "trace")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try
    {
        if (*run) return cmd_run(o, run_horizon->count() > 0);
        if (*fuzz) return cmd_fuzz(o);
        if (*verify) return cmd_verify(o);
        if (*bnd) return cmd_bounds(o);
    }
    catch (const SimError& e)
    {
        std::fprintf(stderr, "%s: %s\n", to_string(e.kind()), e.what());
        return kUsage;
    }
    catch (const CLI::Error& e)
    {
        std::fprintf(stderr, "%s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
