#pragma once

#include <string>
#include <vector>

#include "clickpath/markov.hpp"
#include "clickpath/matrix.hpp"
#include "clickpath/random.hpp"
#include "clickpath/sequence_model.hpp"

namespace clickpath::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Stream& rng, double lo = -1.0,
                            double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

/// Small network for gradient checks and fast training tests.
inline ModelConfig tiny_config() {
    ModelConfig c;
    c.cnn.max_len = 12;
    c.cnn.kernel_width = 3;
    c.cnn.filters = {3, 3};
    c.cnn.pool = 2;
    c.lstm_layers = 2;
    c.lstm_hidden = 4;
    c.fc_width = 5;
    c.dropout = 0.0;
    return c;
}

/// Smallest network exercising every layer, for finite-difference checks.
/// Central differences at h = 1e-5 carry about 1e-11 of roundoff, so the
/// fixture keeps parameter count low and activations away from saturation.
inline ModelConfig gradcheck_config() {
    ModelConfig c;
    c.alphabet = "acehimnopqrtus";
    c.cnn.max_len = 8;
    c.cnn.kernel_width = 3;
    c.cnn.filters = {2, 2};
    c.cnn.pool = 2;
    c.lstm_layers = 2;
    c.lstm_hidden = 2;
    c.fc_width = 3;
    c.dropout = 0.0;
    return c;
}

/// Moves biases off zero (zero-input conv rows would sit on the ReLU kink)
/// and widens weights so no layer is nearly linear.
inline void condition_for_gradcheck(const SequenceModel& model, std::uint64_t seed) {
    Stream rng(seed);
    for (auto [name, param] : model.named_parameters()) {
        const bool is_bias = name.ends_with("bias");
        for (double& v : param.mutable_value().values()) {
            if (is_bias)
                v += rng.uniform(-0.5, 0.5);
            else
                v *= 1.5;
        }
    }
}

/// Moderate network that trains in seconds on a few thousand sessions.
inline ModelConfig small_config() {
    ModelConfig c;
    c.cnn.max_len = 24;
    c.cnn.kernel_width = 3;
    c.cnn.filters = {16, 16};
    c.cnn.pool = 4;
    c.lstm_layers = 1;
    c.lstm_hidden = 32;
    c.fc_width = 32;
    c.dropout = 0.0;
    return c;
}

/// Chain over named pages with a terminal "exit" appended. `rows` are over
/// pages followed by the exit column.
inline MarkovSpec make_chain(std::vector<std::string> pages, std::vector<std::vector<double>> rows,
                             std::vector<double> initial, std::vector<std::string> keywords = {}) {
    MarkovSpec spec;
    const std::size_t n = pages.size() + 1;
    spec.states = pages;
    spec.states.push_back("exit");
    spec.terminal = n - 1;
    spec.transitions = Matrix(n, n);
    for (std::size_t i = 0; i < pages.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) spec.transitions(i, j) = rows.at(i).at(j);
    spec.transitions(n - 1, n - 1) = 1.0;
    initial.push_back(0.0);
    spec.initial = initial;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < keywords.size() && !keywords[i].empty())
            spec.keywords_by_state.push_back({keywords[i]});
        else
            spec.keywords_by_state.push_back({});
    }
    spec.dwell_mean_by_state.assign(n, 20.0);
    spec.validate();
    return spec;
}

/// home -> products -> quote -> exit, always.
inline MarkovSpec deterministic_chain() {
    return make_chain({"home", "products", "quote"},
                      {{0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}, {1, 0, 0}, {"car insurance"});
}

/// Five states (four pages + exit) with mixed transitions.
inline MarkovSpec five_state_chain() {
    return make_chain({"home", "auto/quote", "home/contact", "agency/appointment"},
                      {{0.1, 0.4, 0.2, 0.1, 0.2},
                       {0.05, 0.3, 0.1, 0.25, 0.3},
                       {0.3, 0.1, 0.1, 0.2, 0.3},
                       {0.2, 0.05, 0.05, 0.1, 0.6}},
                      {0.6, 0.3, 0.1, 0.0},
                      {"insurance", "car insurance quote", "contact us"});
}

/// Ten pages with a clear most-likely successor per page.
inline MarkovSpec ten_page_chain() {
    std::vector<std::string> pages = {"home",           "auto/products",  "auto/quote/vehicle",
                                      "auto/quote/driver", "auto/quote/price", "home-insurance",
                                      "home/quote",     "contact",        "agency/search",
                                      "agency/appointment"};
    // Columns: the ten pages then exit.
    std::vector<std::vector<double>> rows = {
        {0.00, 0.55, 0.00, 0.00, 0.00, 0.25, 0.00, 0.05, 0.05, 0.00, 0.10},
        {0.10, 0.00, 0.60, 0.00, 0.00, 0.00, 0.00, 0.10, 0.00, 0.00, 0.20},
        {0.00, 0.05, 0.10, 0.70, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.15},
        {0.00, 0.00, 0.05, 0.05, 0.75, 0.00, 0.00, 0.00, 0.00, 0.00, 0.15},
        {0.05, 0.00, 0.00, 0.00, 0.05, 0.00, 0.00, 0.10, 0.20, 0.00, 0.60},
        {0.10, 0.00, 0.00, 0.00, 0.00, 0.00, 0.60, 0.05, 0.05, 0.00, 0.20},
        {0.05, 0.00, 0.00, 0.00, 0.00, 0.05, 0.10, 0.00, 0.10, 0.00, 0.70},
        {0.10, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.55, 0.05, 0.30},
        {0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.05, 0.05, 0.65, 0.25},
        {0.05, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.05, 0.00, 0.00, 0.90},
    };
    return make_chain(pages, rows, {0.4, 0.25, 0.0, 0.0, 0.0, 0.2, 0.0, 0.1, 0.05, 0.0},
                      {"gmf assurance", "car insurance quotes online", "", "", "",
                       "home insurance", "", "contact insurer", "insurance agency near me", ""});
}

/// Quote funnel: landing -> vehicle -> driver -> price -> confirmation, with
/// drop-outs and a detour to the agency appointment page.
inline MarkovSpec funnel_chain() {
    std::vector<std::string> pages = {"landing", "quote/vehicle", "quote/driver", "quote/price",
                                      "quote/confirmation", "agency/appointment"};
    std::vector<std::vector<double>> rows = {
        {0.05, 0.70, 0.00, 0.00, 0.00, 0.05, 0.20},
        {0.00, 0.30, 0.55, 0.00, 0.00, 0.05, 0.10},
        {0.00, 0.05, 0.25, 0.55, 0.00, 0.05, 0.10},
        {0.00, 0.00, 0.05, 0.10, 0.45, 0.15, 0.25},
        {0.05, 0.00, 0.00, 0.00, 0.00, 0.00, 0.95},
        {0.10, 0.00, 0.00, 0.00, 0.00, 0.10, 0.80},
    };
    return make_chain(pages, rows, {1.0, 0, 0, 0, 0, 0}, {"car insurance quotes online"});
}

}  // namespace clickpath::testing
