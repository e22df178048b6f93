#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clickpath/journey.hpp"
#include "clickpath/matrix.hpp"

namespace clickpath {

/// Ground-truth clickstream generator: a Markov chain over pages with one
/// absorbing terminal state (the exit).
///
/// JSON form:
///   { "states": [...], "terminal": "<name>" (optional, default last state),
///     "transitions": [[...], ...], "initial": [...],
///     "keywords_by_state": ["text" | ["text", ...], ...],
///     "dwell_mean_by_state": [...] }
struct MarkovSpec {
    std::vector<std::string> states;
    std::size_t terminal = 0;
    Matrix transitions;  // row-stochastic, states x states
    std::vector<double> initial;
    /// Keyword phrases per state; a session draws one uniformly from its
    /// starting state's list (empty list means no keywords).
    std::vector<std::vector<std::string>> keywords_by_state;
    /// Mean of the exponential dwell-time distribution per state, seconds.
    std::vector<double> dwell_mean_by_state;

    /// Throws SpecError on inconsistent sizes, rows that do not sum to 1
    /// within 1e-9, a non-absorbing terminal, or a terminal start state.
    void validate() const;

    std::vector<std::string> page_names() const;
};

MarkovSpec parse_markov_spec(std::string_view json_text);
MarkovSpec load_markov_spec(const std::filesystem::path& path);
std::string to_json_text(const MarkovSpec& spec);

/// Samples sessions by walking the chain from the initial distribution until
/// the terminal state. Session i depends only on (seed, i).
std::vector<Session> generate_synthetic(const MarkovSpec& spec, std::size_t n_sessions,
                                        std::uint64_t seed);

/// Posterior over starting states given the session's keyword phrase.
/// Falls back to the prior when no state lists the phrase.
std::vector<double> initial_posterior(const MarkovSpec& spec, std::string_view keywords);

/// Expected next-page accuracy of the Bayes-optimal predictor on the given
/// sessions (no dwell replication): each prediction step contributes the
/// largest probability of its conditional next-state distribution, i.e. the
/// keyword posterior for the first page and the transition row of the
/// current page afterwards (the terminal counting as the exit prediction).
double bayes_accuracy(const MarkovSpec& spec, std::span<const Session> sessions);

}  // namespace clickpath
