#include "clickpath/journey.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include "clickpath/error.hpp"
#include "clickpath/random.hpp"
#include "json.hpp"

namespace clickpath {

namespace {

using nlohmann::json;

const json& require(const json& record, const char* field, std::size_t line) {
    const auto it = record.find(field);
    if (it == record.end()) throw SchemaError(line, std::string("missing field '") + field + "'");
    return *it;
}

std::string require_string(const json& record, const char* field, std::size_t line) {
    const json& v = require(record, field, line);
    if (!v.is_string()) throw SchemaError(line, std::string("field '") + field + "' must be text");
    return v.get<std::string>();
}

Session session_from_json(const json& record, std::size_t line) {
    if (!record.is_object()) throw SchemaError(line, "record must be an object");
    Session s;
    s.session_id = require_string(record, "session_id", line);
    s.keywords = require_string(record, "keywords", line);
    const json& events = require(record, "events", line);
    if (!events.is_array()) throw SchemaError(line, "field 'events' must be an array");
    for (const json& e : events) {
        if (!e.is_object()) throw SchemaError(line, "event must be an object");
        PageEvent ev;
        ev.page = require_string(e, "page", line);
        if (ev.page.empty()) throw SchemaError(line, "event page must not be empty");
        const json& dwell = require(e, "dwell_seconds", line);
        if (!dwell.is_number()) throw SchemaError(line, "dwell_seconds must be a number");
        ev.dwell_seconds = dwell.get<double>();
        if (!std::isfinite(ev.dwell_seconds) || ev.dwell_seconds < 0.0)
            throw SchemaError(line, "dwell_seconds must be finite and non-negative");
        s.events.push_back(std::move(ev));
    }
    return s;
}

}  // namespace

std::vector<Session> parse_log(std::istream& in) {
    std::vector<Session> sessions;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(line, e.what());
        }
        sessions.push_back(session_from_json(record, line));
    }
    return sessions;
}

std::vector<Session> read_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open session log " + path.string());
    return parse_log(in);
}

std::string serialize_session(const Session& session) {
    json events = json::array();
    for (const PageEvent& e : session.events)
        events.push_back({{"page", e.page}, {"dwell_seconds", e.dwell_seconds}});
    json record = {{"session_id", session.session_id},
                   {"keywords", session.keywords},
                   {"events", std::move(events)}};
    return record.dump();
}

void write_log(std::ostream& out, std::span<const Session> sessions) {
    for (const Session& s : sessions) out << serialize_session(s) << '\n';
}

void write_log(const std::filesystem::path& path, std::span<const Session> sessions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write session log " + path.string());
    write_log(out, sessions);
}

PageVocabulary::PageVocabulary(std::vector<std::string> pages, std::size_t min_freq)
    : names_(std::move(pages)), min_freq_(min_freq) {
    names_.emplace_back(kNullPage);
    names_.emplace_back(kUnknownPage);
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (i < names_.size() - 2 && (names_[i] == kNullPage || names_[i] == kUnknownPage))
            throw ArgumentError("page name '" + names_[i] + "' is reserved");
        if (!index_.emplace(names_[i], i).second)
            throw ArgumentError("duplicate page name '" + names_[i] + "'");
    }
}

std::size_t PageVocabulary::index_of(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    return it == index_.end() ? unknown_index() : it->second;
}

bool PageVocabulary::contains(std::string_view name) const {
    return index_.contains(std::string(name));
}

PageVocabulary build_vocab(std::span<const Session> sessions, std::size_t min_freq) {
    if (sessions.empty()) throw ArgumentError("build_vocab: no sessions");
    if (min_freq < 1) throw ArgumentError("build_vocab: min_freq must be at least 1");
    std::map<std::string, std::size_t> counts;
    for (const Session& s : sessions)
        for (const PageEvent& e : s.events) ++counts[e.page];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [page, n] : counts)
        if (n >= min_freq) kept.emplace_back(page, n);
    // counts is already lexicographic, so a stable sort keeps that tie order.
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> pages;
    pages.reserve(kept.size());
    for (auto& [page, n] : kept) pages.push_back(page);
    return PageVocabulary(std::move(pages), min_freq);
}

std::size_t replication_factor(double dwell_seconds, const DwellPolicy& policy) {
    const double ratio = std::ceil(dwell_seconds / policy.unit_seconds);
    if (!(ratio > 1.0)) return 1;
    if (ratio >= static_cast<double>(policy.cap)) return policy.cap;
    return static_cast<std::size_t>(ratio);
}

std::vector<std::string> replicate_dwell(const Session& session, const DwellPolicy& policy) {
    if (!(policy.unit_seconds > 0.0)) throw ArgumentError("dwell unit must be positive");
    if (policy.cap < 1) throw ArgumentError("dwell cap must be at least 1");
    std::vector<std::string> out;
    for (const PageEvent& e : session.events) {
        const std::size_t r = replication_factor(e.dwell_seconds, policy);
        out.insert(out.end(), r, e.page);
    }
    out.emplace_back(kNullPage);
    return out;
}

std::vector<std::string> replicate_dwell(const Session& session, double unit_seconds,
                                         std::size_t cap) {
    return replicate_dwell(session, DwellPolicy{unit_seconds, cap});
}

SessionSplit split(std::span<const Session> sessions, double train_fraction, std::uint64_t seed) {
    if (sessions.size() < 2) throw ArgumentError("split: need at least 2 sessions");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ArgumentError("split: train_fraction must be in (0, 1)");
    std::vector<std::size_t> order(sessions.size());
    std::iota(order.begin(), order.end(), 0);
    Stream rng(derive_seed(seed, {hash_label("split")}));
    shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(sessions.size());
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    n_train = std::clamp<std::size_t>(n_train, 1, sessions.size() - 1);
    SessionSplit out;
    out.train.reserve(n_train);
    out.eval.reserve(sessions.size() - n_train);
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? out.train : out.eval).push_back(sessions[order[i]]);
    return out;
}

}  // namespace clickpath
