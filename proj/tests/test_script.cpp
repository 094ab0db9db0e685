#include "dcesim/fuzz.hpp"

#include <catch_amalgamated.hpp>

using namespace dcesim;
using Catch::Matchers::ContainsSubstring;

namespace
{

ErrorKind parse_error(const std::string& text)
{
    try
    {
        parse_script(text);
    }
    catch (const SimError& e)
    {
        return e.kind();
    }
    FAIL("script accepted: " << text);
    return ErrorKind::IoError;
}

std::string parse_message(const std::string& text)
{
    try
    {
        parse_script(text);
    }
    catch (const SimError& e)
    {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("empty documents give the default script")
{
    for (const char* text : {"", "  \n", "{}"})
    {
        const auto s = parse_script(text);
        CHECK(s.construction == Construction::Isolation);
        CHECK(s.depth == 3);
        CHECK(s.horizon == 100);
        CHECK_FALSE(s.seed);
        CHECK(s.events.empty());
    }
}

TEST_CASE("K must be odd")
{
    const auto msg = parse_message(R"({"construction":"upper-isolation","events":[{"kind":"enumerate_K","n":4,"stage":1}]})");
    CHECK_THAT(msg, ContainsSubstring("ValidationError"));
    CHECK_THAT(msg, ContainsSubstring("K must be odd"));
    CHECK(parse_script(R"({"construction":"upper-isolation","events":[{"kind":"enumerate_K","n":5,"stage":1}]})").events.size() == 1);
}

TEST_CASE("conflicting axioms are rejected")
{
    const std::string text = R"({"events":[
        {"kind":"insert_axiom","functional":"Psi_0","X":[0],"y":1,"P":[2],"N":[3],"stage":1},
        {"kind":"insert_axiom","functional":"Psi_0","X":[0],"y":0,"P":[2],"N":[3],"stage":2}]})";
    CHECK(parse_error(text) == ErrorKind::ValidationError);
    CHECK_THAT(parse_message(text), ContainsSubstring("condition (iii)"));

    const std::string overlap = R"({"events":[
        {"kind":"insert_axiom","functional":"Phi_1","X":[0],"y":0,"P":[4],"N":[4],"stage":0}]})";
    CHECK_THAT(parse_message(overlap), ContainsSubstring("condition (i)"));

    // same axioms in different functionals do not interact
    CHECK_NOTHROW(parse_script(R"({"events":[
        {"kind":"insert_axiom","functional":"Psi_0","X":[0],"y":1,"P":[2],"N":[3],"stage":1},
        {"kind":"insert_axiom","functional":"Psi_1","X":[0],"y":0,"P":[2],"N":[3],"stage":2}]})"));
}

TEST_CASE("malformed scripts")
{
    CHECK(parse_error("{") == ErrorKind::ParseError);
    CHECK(parse_error("[]") == ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":{}})") == ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":[{"stage":1}]})") == ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":[{"kind":"launch","stage":1}]})") == ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":[{"kind":"enumerate_W","e":0,"stage":1}]})") == ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":[{"kind":"enumerate_W","e":0,"n":-1,"stage":1}]})") == ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":[{"kind":"insert_axiom","functional":"Chi_0","X":[0],"y":0,"stage":1}]})") ==
          ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":[{"kind":"insert_axiom","functional":"Phi_x","X":[0],"y":0,"stage":1}]})") ==
          ErrorKind::ParseError);
    CHECK(parse_error(R"({"events":[{"kind":"insert_axiom","functional":"Phi_0","X":3,"y":0,"stage":1}]})") ==
          ErrorKind::ParseError);
    CHECK(parse_error(R"({"depth":"three"})") == ErrorKind::ParseError);
    CHECK(parse_error(R"({"construction":"lower"})") == ErrorKind::ValidationError);
    CHECK(parse_error(R"({"horizon":5,"events":[{"kind":"enumerate_W","e":0,"n":1,"stage":6}]})") ==
          ErrorKind::ValidationError);
    CHECK(parse_error(R"({"events":[{"kind":"insert_axiom","functional":"Phi_0","X":[0],"y":2,"stage":1}]})") ==
          ErrorKind::ValidationError);
}

TEST_CASE("events are ordered by stage")
{
    const auto s = parse_script(R"({"events":[
        {"kind":"enumerate_W","e":0,"n":1,"stage":9},
        {"kind":"enumerate_W","e":0,"n":2,"stage":3},
        {"kind":"enumerate_W","e":0,"n":3,"stage":9}]})");
    REQUIRE(s.events.size() == 3);
    CHECK(s.events[0].stage == 3);
    CHECK(std::get<EnumerateW>(s.events[1].body).n == 1);
    CHECK(std::get<EnumerateW>(s.events[2].body).n == 3);

    AdversaryScript bad;
    bad.events.push_back({5, EnumerateW{0, 1}});
    bad.events.push_back({2, EnumerateW{0, 2}});
    CHECK_THROWS_AS(validate(bad), SimError);
}

TEST_CASE("functional ids")
{
    CHECK(FunctionalId::parse("Phi_12").index == 12);
    CHECK(FunctionalId::parse("Psi_0").family == FunctionalFamily::Psi);
    CHECK(FunctionalId::parse("Psi_3").str() == "Psi_3");
    CHECK_THROWS_AS(FunctionalId::parse("Phi_"), SimError);
    CHECK_THROWS_AS(FunctionalId::parse("Phi_1x"), SimError);
}

TEST_CASE("world applies events")
{
    World w;
    w.apply({0, EnumerateW{2, 7}}, Construction::Isolation);
    w.apply({0, EnumerateW{2, 7}}, Construction::Isolation);
    w.apply({1, EnumerateK{4}}, Construction::Isolation);
    CHECK(w.W(2) == std::set<Element>{7});
    CHECK(w.W(0).empty());
    CHECK(w.K() == std::set<Element>{4});
    try
    {
        w.apply({1, EnumerateK{6}}, Construction::UpperIsolation);
        FAIL("even K accepted");
    }
    catch (const SimError& e)
    {
        CHECK(e.kind() == ErrorKind::OddKViolation);
    }
    InsertAxiom ia{FunctionalId{FunctionalFamily::Phi, 1}, Axiom{{0}, 1, {}, {}, 0}};
    w.apply({4, ia}, Construction::Isolation);
    CHECK(w.phi(1).base().at(0).born == 4);
    CHECK(w.phi(0).empty());
}

TEST_CASE("parse, serialize, parse is the identity")
{
    const std::string text = R"({"construction":"upper-isolation","depth":4,"horizon":50,"seed":11,"profile":"sparse",
        "events":[{"kind":"enumerate_K","n":3,"stage":2},
                  {"kind":"insert_axiom","functional":"Phi_0","X":[1,0],"y":1,"P":[9,2],"N":[4],"stage":5},
                  {"kind":"enumerate_W","e":1,"n":8,"stage":5}]})";
    const auto a = parse_script(text);
    const auto once = serialize_script(a);
    const auto b = parse_script(once);
    CHECK(serialize_script(b) == once);
    CHECK(b.construction == Construction::UpperIsolation);
    CHECK(b.depth == 4);
    CHECK(b.horizon == 50);
    CHECK(b.seed == 11u);
    CHECK(b.profile == "sparse");
    const auto& ia = std::get<InsertAxiom>(b.events[1].body);
    CHECK(ia.axiom.X == std::vector<Element>{0, 1});
    CHECK(ia.axiom.P == std::vector<Element>{2, 9});
    CHECK(ia.axiom.born == 5);

    // generated scripts too
    for (auto c : {Construction::Isolation, Construction::UpperIsolation})
    {
        const auto run = fuzz_run(c, 3, 300, 99, profile_by_name("dense"));
        const auto s1 = serialize_script(run.script);
        CHECK(serialize_script(parse_script(s1)) == s1);
    }
}
