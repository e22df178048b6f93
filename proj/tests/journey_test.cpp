#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "clickpath/error.hpp"
#include "clickpath/journey.hpp"
#include "clickpath/markov.hpp"
#include "test_support.hpp"

namespace clickpath {
namespace {

Session make_session(std::string id, std::vector<std::pair<std::string, double>> events,
                     std::string keywords = "") {
    Session s{std::move(id), std::move(keywords), {}};
    for (auto& [page, dwell] : events) s.events.push_back({page, dwell});
    return s;
}

std::vector<Session> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_log(in);
}

TEST(ParseLog, EmptyStream) { EXPECT_TRUE(parse("").empty()); }

TEST(ParseLog, ThreeEventsInOrder) {
    const auto sessions = parse(
        R"({"session_id":"a","keywords":"car insurance","events":[)"
        R"({"page":"home","dwell_seconds":12},{"page":"quote","dwell_seconds":40.5},)"
        R"({"page":"price","dwell_seconds":0}]})"
        "\n");
    ASSERT_EQ(sessions.size(), 1u);
    EXPECT_EQ(sessions[0], make_session("a", {{"home", 12}, {"quote", 40.5}, {"price", 0}},
                                        "car insurance"));
}

TEST(ParseLog, BlankLinesSkipped) {
    const auto sessions = parse(
        "\n"
        R"({"session_id":"a","keywords":"","events":[]})"
        "\n   \n"
        R"({"session_id":"b","keywords":"x","events":[{"page":"p","dwell_seconds":1}]})");
    ASSERT_EQ(sessions.size(), 2u);
    EXPECT_EQ(sessions[1].session_id, "b");
}

TEST(ParseLog, NegativeDwellIsSchemaErrorAtLine) {
    try {
        parse(R"({"session_id":"a","keywords":"","events":[]})"
              "\n"
              R"({"session_id":"b","keywords":"","events":[{"page":"p","dwell_seconds":-1}]})");
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(ParseLog, MalformedLineIsParseErrorAtLine) {
    try {
        parse("\n{not json\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(ParseLog, MissingFieldIsSchemaError) {
    EXPECT_THROW(parse(R"({"session_id":"a","events":[]})"), SchemaError);
    EXPECT_THROW(parse(R"({"session_id":"a","keywords":"","events":[{"page":"p"}]})"), SchemaError);
    EXPECT_THROW(parse(R"([1,2,3])"), SchemaError);
}

TEST(ParseLog, SerializeRoundTrip) {
    Stream rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Session> sessions;
        const std::size_t n = rng.below(6);
        for (std::size_t i = 0; i < n; ++i) {
            Session s{"id-" + std::to_string(rng()), rng.below(2) ? "assurance \"auto\" é" : "", {}};
            const std::size_t events = rng.below(5);
            for (std::size_t e = 0; e < events; ++e)
                s.events.push_back({"page/" + std::to_string(rng.below(10)), rng.exponential(30.0)});
            sessions.push_back(std::move(s));
        }
        std::ostringstream out;
        write_log(out, sessions);
        EXPECT_EQ(parse(out.str()), sessions);
    }
}

TEST(BuildVocab, SinglePageCorpus) {
    const std::vector<Session> sessions = {make_session("a", {{"home", 1}})};
    const PageVocabulary vocab = build_vocab(sessions, 1);
    ASSERT_EQ(vocab.size(), 3u);
    EXPECT_EQ(vocab.name(0), "home");
    EXPECT_EQ(vocab.name(1), kNullPage);
    EXPECT_EQ(vocab.name(2), kUnknownPage);
}

TEST(BuildVocab, ThresholdBoundary) {
    const std::vector<Session> sessions = {
        make_session("a", {{"home", 1}, {"quote", 1}, {"home", 1}}),
        make_session("b", {{"home", 1}, {"quote", 1}, {"contact", 1}}),
    };
    const PageVocabulary vocab = build_vocab(sessions, 2);
    EXPECT_EQ(vocab.page_count(), 2u);
    EXPECT_EQ(vocab.index_of("home"), 0u);
    EXPECT_EQ(vocab.index_of("quote"), 1u);
    EXPECT_EQ(vocab.index_of("contact"), vocab.unknown_index());
    EXPECT_FALSE(vocab.contains("contact"));
}

TEST(BuildVocab, TiesBrokenLexicographically) {
    const std::vector<Session> sessions = {make_session("a", {{"zeta", 1}, {"alpha", 1}, {"mid", 1}})};
    const PageVocabulary vocab = build_vocab(sessions, 1);
    EXPECT_EQ(vocab.name(0), "alpha");
    EXPECT_EQ(vocab.name(1), "mid");
    EXPECT_EQ(vocab.name(2), "zeta");
}

TEST(BuildVocab, Errors) {
    const std::vector<Session> none;
    EXPECT_THROW(build_vocab(none, 1), ArgumentError);
    const std::vector<Session> one = {make_session("a", {{"home", 1}})};
    EXPECT_THROW(build_vocab(one, 0), ArgumentError);
}

TEST(BuildVocab, EncodeDecodeIsIdentityAndUnknownIsLast) {
    const auto sessions = generate_synthetic(testing::ten_page_chain(), 500, 3);
    const PageVocabulary vocab = build_vocab(sessions, 1);
    for (std::size_t i = 0; i < vocab.size(); ++i) EXPECT_EQ(vocab.index_of(vocab.name(i)), i);
    for (std::size_t i = 0; i < vocab.page_count(); ++i) EXPECT_LT(i, vocab.unknown_index());
    EXPECT_EQ(vocab.unknown_index(), vocab.size() - 1);
}

TEST(ReplicateDwell, Examples) {
    const DwellPolicy policy;
    EXPECT_EQ(replication_factor(10, policy), 1u);
    EXPECT_EQ(replication_factor(30, policy), 1u);
    EXPECT_EQ(replication_factor(75, policy), 3u);
    EXPECT_EQ(replication_factor(10000, policy), 5u);
    EXPECT_EQ(replication_factor(0, policy), 1u);
}

TEST(ReplicateDwell, ExpandsAndAppendsNull) {
    const Session s = make_session("a", {{"home", 10}, {"quote", 75}});
    const std::vector<std::string> expected = {"home", "quote", "quote", "quote",
                                               std::string(kNullPage)};
    EXPECT_EQ(replicate_dwell(s, 30.0, 5), expected);
}

TEST(ReplicateDwell, LengthIsSumOfFactorsPlusOne) {
    Stream rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        Session s{"s", "", {}};
        const std::size_t n = rng.below(8);
        const double unit = rng.uniform(1.0, 60.0);
        const std::size_t cap = 1 + rng.below(6);
        std::size_t expected = 1;
        for (std::size_t i = 0; i < n; ++i) {
            const double dwell = rng.uniform(0.0, 400.0);
            s.events.push_back({"p" + std::to_string(i), dwell});
            expected += std::min<std::size_t>(
                cap, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dwell / unit))));
        }
        EXPECT_EQ(replicate_dwell(s, unit, cap).size(), expected);
    }
}

std::vector<Session> numbered(std::size_t n) {
    std::vector<Session> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_session("s" + std::to_string(i), {{"p", 1}}));
    return out;
}

TEST(Split, EightyTwenty) {
    const auto parts = split(numbered(10), 0.8, 1);
    EXPECT_EQ(parts.train.size(), 8u);
    EXPECT_EQ(parts.eval.size(), 2u);
}

TEST(Split, IsAPartition) {
    const auto sessions = numbered(37);
    const auto parts = split(sessions, 0.7, 9);
    std::vector<std::string> ids;
    for (const auto& s : parts.train) ids.push_back(s.session_id);
    for (const auto& s : parts.eval) ids.push_back(s.session_id);
    std::vector<std::string> expected;
    for (const auto& s : sessions) expected.push_back(s.session_id);
    std::sort(ids.begin(), ids.end());
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(ids, expected);
}

TEST(Split, SameSeedSameSplit) {
    const auto sessions = numbered(20);
    const auto a = split(sessions, 0.8, 4), b = split(sessions, 0.8, 4);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.eval, b.eval);
}

TEST(Split, Errors) {
    EXPECT_THROW(split(numbered(1), 0.8, 0), ArgumentError);
    EXPECT_THROW(split(numbered(5), 0.0, 0), ArgumentError);
    EXPECT_THROW(split(numbered(5), 1.0, 0), ArgumentError);
}

TEST(GenerateSynthetic, DeterministicChain) {
    for (const Session& s : generate_synthetic(testing::deterministic_chain(), 50, 7)) {
        ASSERT_EQ(s.events.size(), 3u);
        EXPECT_EQ(s.events[0].page, "home");
        EXPECT_EQ(s.events[1].page, "products");
        EXPECT_EQ(s.events[2].page, "quote");
        EXPECT_EQ(s.keywords, "car insurance");
        for (const auto& e : s.events) EXPECT_GE(e.dwell_seconds, 0.0);
    }
}

TEST(GenerateSynthetic, SameSeedIdenticalSessions) {
    const auto spec = testing::five_state_chain();
    EXPECT_EQ(generate_synthetic(spec, 200, 5), generate_synthetic(spec, 200, 5));
    EXPECT_NE(generate_synthetic(spec, 200, 5), generate_synthetic(spec, 200, 6));
}

TEST(GenerateSynthetic, PrefixOfLargerRunMatches) {
    const auto spec = testing::five_state_chain();
    const auto small = generate_synthetic(spec, 10, 5);
    const auto large = generate_synthetic(spec, 30, 5);
    EXPECT_TRUE(std::equal(small.begin(), small.end(), large.begin()));
}

TEST(GenerateSynthetic, TransitionFrequenciesMatchChain) {
    const MarkovSpec spec = testing::five_state_chain();
    const auto sessions = generate_synthetic(spec, 50000, 11);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < spec.states.size(); ++i) index[spec.states[i]] = i;
    const std::size_t n = spec.states.size();
    Matrix counts(n, n);
    for (const Session& s : sessions) {
        ASSERT_FALSE(s.events.empty());
        for (std::size_t t = 0; t < s.events.size(); ++t) {
            const std::size_t from = index.at(s.events[t].page);
            ASSERT_NE(from, spec.terminal) << "terminal emitted as a page";
            const std::size_t to = t + 1 < s.events.size() ? index.at(s.events[t + 1].page) : spec.terminal;
            counts(from, to) += 1;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i == spec.terminal) continue;
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += counts(i, j);
        ASSERT_GT(total, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            EXPECT_NEAR(counts(i, j) / total, spec.transitions(i, j), 0.01) << i << "->" << j;
    }
}

TEST(MarkovSpec, ValidateRejectsBadChains) {
    MarkovSpec spec = testing::five_state_chain();
    spec.transitions(0, 0) += 0.1;
    EXPECT_THROW(spec.validate(), SpecError);
    spec = testing::five_state_chain();
    spec.transitions(spec.terminal, 0) = 0.5;
    spec.transitions(spec.terminal, spec.terminal) = 0.5;
    EXPECT_THROW(spec.validate(), SpecError);
    spec = testing::five_state_chain();
    spec.initial.pop_back();
    EXPECT_THROW(spec.validate(), SpecError);
}

TEST(MarkovSpec, JsonRoundTrip) {
    const MarkovSpec spec = testing::ten_page_chain();
    const MarkovSpec back = parse_markov_spec(to_json_text(spec));
    EXPECT_EQ(back.states, spec.states);
    EXPECT_EQ(back.terminal, spec.terminal);
    EXPECT_EQ(back.transitions, spec.transitions);
    EXPECT_EQ(back.initial, spec.initial);
    EXPECT_EQ(back.keywords_by_state, spec.keywords_by_state);
    EXPECT_EQ(back.dwell_mean_by_state, spec.dwell_mean_by_state);
}

TEST(MarkovSpec, BayesAccuracyOfDeterministicChainIsOne) {
    const MarkovSpec spec = testing::deterministic_chain();
    EXPECT_DOUBLE_EQ(bayes_accuracy(spec, generate_synthetic(spec, 20, 1)), 1.0);
}

TEST(MarkovSpec, BayesAccuracyHandComputed) {
    // One page "a" that loops with 0.7 and exits with 0.3; keywords identify it.
    const MarkovSpec spec = testing::make_chain({"a"}, {{0.7, 0.3}}, {1.0}, {"k"});
    const std::vector<Session> sessions = {make_session("x", {{"a", 1}, {"a", 1}}, "k")};
    // Steps: keyword -> a (1.0), a -> a (0.7), a -> exit (0.7).
    EXPECT_NEAR(bayes_accuracy(spec, sessions), (1.0 + 0.7 + 0.7) / 3.0, 1e-15);
}

}  // namespace
}  // namespace clickpath
