#include "clickpath/markov.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "clickpath/error.hpp"
#include "clickpath/random.hpp"
#include "json.hpp"

namespace clickpath {

namespace {

using nlohmann::json;

std::size_t sample_categorical(std::span<const double> probs, Stream& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

std::size_t state_index(const MarkovSpec& spec, std::string_view name) {
    const auto it = std::find(spec.states.begin(), spec.states.end(), name);
    if (it == spec.states.end()) throw ArgumentError("page '" + std::string(name) + "' is not a chain state");
    return static_cast<std::size_t>(it - spec.states.begin());
}

}  // namespace

void MarkovSpec::validate() const {
    const std::size_t n = states.size();
    if (n < 2) throw SpecError("chain needs at least one page and a terminal state");
    if (terminal >= n) throw SpecError("terminal index out of range");
    if (transitions.rows() != n || transitions.cols() != n)
        throw SpecError("transitions must be " + std::to_string(n) + "x" + std::to_string(n) +
                        ", got " + transitions.shape_string());
    if (initial.size() != n) throw SpecError("initial distribution has wrong length");
    if (keywords_by_state.size() != n) throw SpecError("keywords_by_state has wrong length");
    if (dwell_mean_by_state.size() != n) throw SpecError("dwell_mean_by_state has wrong length");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (states[i] == states[j]) throw SpecError("duplicate state '" + states[i] + "'");
    const auto check_row = [](std::span<const double> row, const std::string& what) {
        double total = 0.0;
        for (double p : row) {
            if (!std::isfinite(p) || p < 0.0) throw SpecError(what + " has a negative or non-finite entry");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw SpecError(what + " sums to " + std::to_string(total) + ", not 1");
    };
    for (std::size_t i = 0; i < n; ++i) check_row(transitions.row(i), "transition row '" + states[i] + "'");
    check_row(initial, "initial distribution");
    if (transitions(terminal, terminal) != 1.0) throw SpecError("terminal state must be absorbing");
    if (initial[terminal] != 0.0) throw SpecError("sessions cannot start in the terminal state");
    for (double d : dwell_mean_by_state)
        if (!std::isfinite(d) || d < 0.0) throw SpecError("dwell means must be finite and non-negative");
}

std::vector<std::string> MarkovSpec::page_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < states.size(); ++i)
        if (i != terminal) names.push_back(states[i]);
    return names;
}

MarkovSpec parse_markov_spec(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("markov spec: ") + e.what());
    }
    try {
        MarkovSpec spec;
        spec.states = doc.at("states").get<std::vector<std::string>>();
        spec.terminal = spec.states.empty() ? 0 : spec.states.size() - 1;
        if (doc.contains("terminal")) {
            const auto name = doc.at("terminal").get<std::string>();
            const auto it = std::find(spec.states.begin(), spec.states.end(), name);
            if (it == spec.states.end()) throw SpecError("terminal '" + name + "' is not a state");
            spec.terminal = static_cast<std::size_t>(it - spec.states.begin());
        }
        const auto rows = doc.at("transitions").get<std::vector<std::vector<double>>>();
        const std::size_t cols = rows.empty() ? 0 : rows.front().size();
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != cols) throw SpecError("transitions must be rectangular");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        spec.transitions = Matrix(rows.size(), cols, std::move(flat));
        spec.initial = doc.at("initial").get<std::vector<double>>();
        for (const json& k : doc.at("keywords_by_state")) {
            if (k.is_string())
                spec.keywords_by_state.push_back({k.get<std::string>()});
            else
                spec.keywords_by_state.push_back(k.get<std::vector<std::string>>());
        }
        spec.dwell_mean_by_state = doc.at("dwell_mean_by_state").get<std::vector<double>>();
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw SpecError(std::string("markov spec: ") + e.what());
    }
}

MarkovSpec load_markov_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open markov spec " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_markov_spec(buffer.str());
}

std::string to_json_text(const MarkovSpec& spec) {
    json rows = json::array();
    for (std::size_t r = 0; r < spec.transitions.rows(); ++r) {
        auto row = spec.transitions.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    json doc = {{"states", spec.states},
                {"terminal", spec.states.at(spec.terminal)},
                {"transitions", rows},
                {"initial", spec.initial},
                {"keywords_by_state", spec.keywords_by_state},
                {"dwell_mean_by_state", spec.dwell_mean_by_state}};
    return doc.dump(2);
}

std::vector<Session> generate_synthetic(const MarkovSpec& spec, std::size_t n_sessions,
                                        std::uint64_t seed) {
    spec.validate();
    if (n_sessions < 1) throw ArgumentError("generate_synthetic: n_sessions must be at least 1");
    constexpr std::size_t kMaxSteps = 100000;
    const int width = static_cast<int>(std::to_string(n_sessions).size());
    std::vector<Session> out;
    out.reserve(n_sessions);
    for (std::size_t i = 0; i < n_sessions; ++i) {
        Stream rng(derive_seed(seed, {hash_label("session"), i}));
        Session s;
        std::ostringstream id;
        id << 's' << std::setw(width) << std::setfill('0') << i;
        s.session_id = id.str();
        std::size_t state = sample_categorical(spec.initial, rng);
        const auto& phrases = spec.keywords_by_state[state];
        if (!phrases.empty()) s.keywords = phrases[rng.below(phrases.size())];
        while (state != spec.terminal) {
            if (s.events.size() == kMaxSteps)
                throw SpecError("chain did not reach the terminal state within " +
                                std::to_string(kMaxSteps) + " steps");
            s.events.push_back({spec.states[state], rng.exponential(spec.dwell_mean_by_state[state])});
            state = sample_categorical(spec.transitions.row(state), rng);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> initial_posterior(const MarkovSpec& spec, std::string_view keywords) {
    std::vector<double> post(spec.states.size(), 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < spec.states.size(); ++s) {
        const auto& phrases = spec.keywords_by_state[s];
        const auto hits = std::count(phrases.begin(), phrases.end(), keywords);
        if (hits == 0) continue;
        post[s] = spec.initial[s] * static_cast<double>(hits) / static_cast<double>(phrases.size());
        total += post[s];
    }
    if (total <= 0.0) return spec.initial;
    for (double& p : post) p /= total;
    return post;
}

double bayes_accuracy(const MarkovSpec& spec, std::span<const Session> sessions) {
    double expected = 0.0;
    std::size_t steps = 0;
    for (const Session& s : sessions) {
        const auto post = initial_posterior(spec, s.keywords);
        expected += *std::max_element(post.begin(), post.end());
        ++steps;
        for (const PageEvent& e : s.events) {
            const auto row = spec.transitions.row(state_index(spec, e.page));
            expected += *std::max_element(row.begin(), row.end());
            ++steps;
        }
    }
    return steps == 0 ? 0.0 : expected / static_cast<double>(steps);
}

}  // namespace clickpath
