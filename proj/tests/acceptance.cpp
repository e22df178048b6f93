// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion with
// the measured values; exits non-zero if any criterion fails.
//
// Usage: acceptance [AC1 AC2 ...]   (default: all)

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clickpath/grad_check.hpp"
#include "clickpath/journey.hpp"
#include "clickpath/markov.hpp"
#include "clickpath/sequence_model.hpp"
#include "clickpath/simulator.hpp"
#include "clickpath/trainer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace clickpath;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

Session session_of(const std::vector<std::string>& pages, std::string keywords,
                   double dwell = 5.0) {
    Session s{"s", std::move(keywords), {}};
    for (const auto& p : pages) s.events.push_back({p, dwell});
    return s;
}

Var taped_session_loss(Tape& tape, const SequenceModel& model, const Session& session) {
    const auto encoded = encode_session(session, model.vocabulary(), DwellPolicy{});
    LstmState state = model.initial_state(1);
    std::vector<Var> losses;
    for (std::size_t t = 0; t < encoded.inputs.size(); ++t) {
        const Var probs = model.step(tape, state, model.embed(tape, encoded.inputs[t]));
        const std::vector<std::size_t> target = {encoded.targets[t]};
        const std::vector<double> weight = {1.0};
        losses.push_back(tape.cross_entropy(probs, target, weight));
    }
    return tape.sum(losses);
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
               return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
           });
}

bool same_parameters(const SequenceModel& a, const SequenceModel& b) {
    const auto pa = a.named_parameters(), pb = b.named_parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].first != pb[i].first) return false;
        const auto& va = pa[i].second.value().values();
        const auto& vb = pb[i].second.value().values();
        if (!same_bits({va.begin(), va.end()}, {vb.begin(), vb.end()})) return false;
    }
    return true;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// --- AC1 --------------------------------------------------------------------

Outcome gradient_correctness() {
    const Stopwatch clock;
    const SequenceModel model(testing::gradcheck_config(),
                              PageVocabulary({"home", "quote", "price"}), 0);
    testing::condition_for_gradcheck(model, 100);
    const Session s = session_of({"home", "quote", "price"}, "car ins");
    std::vector<Var> params = model.parameters();
    const auto f = [&](Tape& t) { return taped_session_loss(t, model, s); };
    const double err = grad_check(f, params, 1e-5);
    const double secs = clock.seconds();
    std::size_t count = 0;
    for (const Var& p : params) count += p.value().size();
    return {err < 1e-4 && secs < 30.0,
            fmt("max relative error %.3g over %zu parameters (< 1e-4), %.1f s (< 30 s)", err,
                count, secs)};
}

// --- AC2 --------------------------------------------------------------------

Outcome loss_oracle() {
    const Stopwatch clock;
    Stream rng(2024);
    double worst = 0.0;
    const std::size_t trials = 200;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        // N = pages + NULL + UNKNOWN, so 1..18 pages give N in 3..20.
        const std::size_t n_pages = 1 + rng.below(18);
        const std::size_t steps = 1 + rng.below(10);  // T = pages visited + NULL
        std::vector<std::string> names;
        for (std::size_t i = 0; i < n_pages; ++i) names.push_back("p" + std::to_string(i));
        const PageVocabulary vocab(names);
        std::vector<std::string> visited;
        for (std::size_t t = 0; t + 1 < steps; ++t) visited.push_back(names[rng.below(n_pages)]);
        const Session s = session_of(visited, "kw", rng.uniform(0.0, 30.0));
        const double n = static_cast<double>(vocab.size());
        std::vector<StepPrediction> uniform;
        for (std::size_t t = 0; t < steps; ++t)
            uniform.push_back({t, std::vector<double>(vocab.size(), 1.0 / n)});
        const double loss = session_loss(uniform, s, vocab);
        worst = std::max(worst, std::abs(loss - static_cast<double>(steps) * std::log(n)));
    }

    const std::vector<Session> one = {
        session_of({"home", "auto/quote", "auto/price"}, "car insurance")};
    const PageVocabulary vocab = build_vocab(one, 1);
    TrainConfig config;
    config.epochs = 500;
    config.batch_size = 1;
    config.model = testing::small_config();
    const TrainResult result = train(one, config, vocab);
    const Evaluation ev = evaluate(result.model, one);
    const double session_nats = ev.mean_loss * static_cast<double>(ev.steps);
    const double secs = clock.seconds();
    return {worst < 1e-9 && session_nats < 0.01 && secs < 60.0,
            fmt("uniform loss max |L - T ln N| %.2g over %zu cases (< 1e-9); overfit session "
                "loss %.3g nats after 500 epochs (< 0.01); %.1f s (< 60 s)",
                worst, trials, session_nats, secs)};
}

// --- AC3 --------------------------------------------------------------------

Outcome monte_carlo_equivalence() {
    const Stopwatch clock;
    Stream rng(77);
    const std::size_t cases = 100;
    std::size_t within = 0;
    double worst_z = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
        // Up to four pages plus NULL_PAGE: N <= 5 reachable outcomes per step.
        const HashedPredictor predictor(1 + rng.below(4), rng());
        const auto& vocab = predictor.vocabulary();
        const std::size_t real_pages = vocab.page_count();
        JourneyPrefix prefix{"kw", {}};
        const std::size_t prefix_len = rng.below(3);
        for (std::size_t i = 0; i < prefix_len; ++i)
            prefix.pages.push_back(vocab.name(rng.below(real_pages)));
        Objective objective{"goal", {vocab.name(rng.below(real_pages))}};
        const std::size_t horizon = 1 + rng.below(5);
        const double exact = exact_conversion(predictor, prefix, objective, horizon);
        SimulationParams params;
        params.n_samples = 100000;
        params.horizon = horizon;
        params.seed = rng();
        const ConversionEstimate est = estimate_conversion(predictor, prefix, objective, params);
        const double sigma = std::sqrt(exact * (1.0 - exact) / params.n_samples);
        const double diff = std::abs(est.probability - exact);
        const double z = sigma > 0.0 ? diff / sigma : (diff == 0.0 ? 0.0 : INFINITY);
        worst_z = std::max(worst_z, z);
        if (z <= 3.0) ++within;
    }
    const double secs = clock.seconds();
    const double frac = static_cast<double>(within) / cases;
    return {frac >= 0.99 && secs < 300.0,
            fmt("%zu/%zu predictors within 3 sigma (>= 99%%), worst %.2f sigma, n = 100000; "
                "%.1f s (< 300 s)",
                within, cases, worst_z, secs)};
}

// --- shared synthetic data for AC4 and AC5 ------------------------------------

struct TenPageData {
    MarkovSpec spec = testing::ten_page_chain();
    SessionSplit parts;
    PageVocabulary vocab{std::vector<std::string>{"x"}};
    TrainConfig config;
};

const TenPageData& ten_page_data() {
    static const TenPageData data = [] {
        TenPageData d;
        const auto sessions = generate_synthetic(d.spec, 10000, 4);
        d.parts = split(sessions, 0.8, 5);
        d.vocab = build_vocab(d.parts.train, 1);
        d.config.seed = 6;
        d.config.epochs = 20;
        d.config.learning_rate = 3e-4;
        // Dwell replication off, so targets are the chain's own transitions.
        d.config.dwell.cap = 1;
        return d;
    }();
    return data;
}

Outcome learnability() {
    const Stopwatch clock;
    const TenPageData& d = ten_page_data();
    const TrainResult result = train(d.parts.train, d.config, d.vocab, d.parts.eval);
    const Evaluation ev = evaluate(result.model, d.parts.eval, d.config.dwell);
    const double bayes = bayes_accuracy(d.spec, d.parts.eval);
    const double gap = 100.0 * (bayes - ev.accuracy);
    const double secs = clock.seconds();
    return {gap <= 3.0 && secs < 900.0,
            fmt("eval accuracy %.4f vs Bayes-optimal %.4f, gap %.2f points (<= 3) on %zu train / "
                "%zu eval sessions; %.1f s (< 900 s)",
                ev.accuracy, bayes, gap, d.parts.train.size(), d.parts.eval.size(), secs)};
}

// --- AC5 --------------------------------------------------------------------

Outcome ensemble_contract() {
    const Stopwatch clock;
    const TenPageData& d = ten_page_data();

    // k = 1 against a single model with the same seed.
    TrainConfig short_config = d.config;
    short_config.epochs = 2;
    const TrainResult single = train(d.parts.train, short_config, d.vocab);
    const EnsembleResult solo = train_ensemble(d.parts.train, short_config, d.vocab, 1);
    bool k1_identical = same_parameters(single.model, solo.ensemble.member(0));
    const Evaluation single_ev = evaluate(single.model, d.parts.eval, d.config.dwell);
    const Evaluation solo_ev = evaluate(solo.ensemble, d.parts.eval, d.config.dwell);
    k1_identical = k1_identical && single_ev.correct == solo_ev.correct &&
                   std::bit_cast<std::uint64_t>(single_ev.mean_loss) ==
                       std::bit_cast<std::uint64_t>(solo_ev.mean_loss);
    for (std::size_t i = 0; i < 20 && k1_identical; ++i) {
        const Session& s = d.parts.eval[i];
        JourneyPrefix prefix{s.keywords, {}};
        for (const auto& e : s.events) prefix.pages.push_back(e.page);
        k1_identical = same_bits(single.model.predict_next(prefix),
                                 ensemble_predict(solo.ensemble, prefix));
    }

    TrainConfig config = d.config;
    config.epochs = 5;
    const EnsembleResult five = train_ensemble(d.parts.train, config, d.vocab, 5);
    double member_mean = 0.0;
    for (const auto& m : five.ensemble.members())
        member_mean += evaluate(m, d.parts.eval, d.config.dwell).accuracy / 5.0;
    const Evaluation ens_ev = evaluate(five.ensemble, d.parts.eval, d.config.dwell);

    double worst_mass_error = 0.0;
    bool nonnegative = true;
    for (std::size_t i = 0; i < 200; ++i) {
        const Session& s = d.parts.eval[i];
        JourneyPrefix prefix{s.keywords, {}};
        for (const auto& e : s.events) {
            const auto dist = ensemble_predict(five.ensemble, prefix);
            const double mass = std::accumulate(dist.begin(), dist.end(), 0.0);
            worst_mass_error = std::max(worst_mass_error, std::abs(mass - 1.0));
            for (double p : dist) nonnegative = nonnegative && p >= 0.0 && std::isfinite(p);
            prefix.pages.push_back(e.page);
        }
    }
    const bool valid = nonnegative && worst_mass_error < 1e-12;
    const double margin = 100.0 * (ens_ev.accuracy - member_mean);
    const double secs = clock.seconds();
    return {k1_identical && valid && margin >= -0.5,
            fmt("k=1 bitwise identical to single model: %s; k=5 distributions valid: %s (max |sum - 1| "
                "%.2g); ensemble accuracy %.4f vs member mean %.4f (%+.2f points, >= -0.5); %.1f s",
                k1_identical ? "yes" : "no", valid ? "yes" : "no", worst_mass_error,
                ens_ev.accuracy, member_mean, margin, secs)};
}

// --- AC6 --------------------------------------------------------------------

Outcome simulation_realism() {
    const Stopwatch clock;
    const MarkovSpec spec = testing::funnel_chain();
    const auto sessions = generate_synthetic(spec, 10000, 11);
    const SessionSplit parts = split(sessions, 0.8, 12);
    const PageVocabulary vocab = build_vocab(parts.train, 1);
    // Five averaged members, as the simulator is meant to be used: a single
    // model's calibration wanders with the last few updates.
    TrainConfig config;
    config.seed = 13;
    config.epochs = 20;
    config.learning_rate = 3e-4;
    config.dwell.cap = 1;
    const EnsembleResult result = train_ensemble(parts.train, config, vocab, 5);

    const JourneyPrefix prefix{"car insurance quotes online", {"landing"}};
    const Objective objective{"quote_completed", {"quote/confirmation"}};
    const MarkovPredictor chain(spec);
    const double truth = chain_conversion(chain, prefix, objective, 30);

    const EnsemblePredictor predictor(result.ensemble);
    SimulationParams params;
    params.n_samples = 5000;
    params.horizon = 30;
    params.seed = 14;
    const ConversionEstimate est = estimate_conversion(predictor, prefix, objective, params);
    const double sigma = std::sqrt(truth * (1.0 - truth) / params.n_samples);
    const double z = std::abs(est.probability - truth) / sigma;
    const double secs = clock.seconds();
    return {z <= 3.0,
            fmt("5-model ensemble rollout conversion %.4f (n = %zu, horizon 30) vs exact %.4f on "
                "the generating chain: %.2f sigma (<= 3); %.1f s",
                est.probability, params.n_samples, truth, z, secs)};
}

// --- AC7 --------------------------------------------------------------------

int run(const std::string& command) {
    const int status = std::system((command + " > /dev/null 2>&1").c_str());
    return status;
}

Outcome determinism() {
    const Stopwatch clock;
    const fs::path root = fs::temp_directory_path() / fmt("clickpath_acceptance_%d", ::getpid());
    fs::remove_all(root);
    const std::string cli = CLICKPATH_CLI;
    const fs::path data = CLICKPATH_TEST_DATA;
    const std::vector<std::string> artifacts = {
        "sessions.jsonl", "train.jsonl",  "eval.jsonl", "train_config.json",
        "model.ckpt",     "train_report.csv", "scores.csv"};
    // Two consecutive runs of the same commands in the same directory.
    const fs::path dir = root / "run";
    bool commands_ok = true;
    std::vector<std::vector<std::string>> contents(2);
    for (auto& snapshot : contents) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string out = " --out-dir " + dir.string();
        commands_ok = commands_ok &&
                      run(cli + " gen-data --spec " + (data / "funnel_chain.json").string() +
                          " --sessions 2000 --seed 3" + out) == 0 &&
                      run(cli + " train --config " + (data / "train_small.conf").string() +
                          " --data " + (dir / "sessions.jsonl").string() + " --seed 4" + out) == 0 &&
                      run(cli + " score --model " + (dir / "model.ckpt").string() +
                          " --prefixes " + (data / "funnel_prefixes.jsonl").string() +
                          " --objectives " + (data / "funnel_objectives.json").string() +
                          " --samples 500 --seed 5" + out) == 0;
        for (const auto& file : artifacts) snapshot.push_back(read_file(dir / file));
    }
    std::size_t identical = 0;
    std::vector<std::string> differing;
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
        if (!contents[0][i].empty() && contents[0][i] == contents[1][i])
            ++identical;
        else
            differing.push_back(artifacts[i]);
    }

    // Checkpoint round trip.
    const SequenceModel model(testing::tiny_config(), PageVocabulary({"home", "quote", "price"}), 8);
    std::stringstream buffer;
    save_model(model, buffer);
    const std::string first_bytes = buffer.str();
    const SequenceModel loaded = load_model(buffer);
    std::stringstream again;
    save_model(loaded, again);
    bool roundtrip = same_parameters(model, loaded) && again.str() == first_bytes;
    for (const JourneyPrefix& p :
         {JourneyPrefix{"car", {}}, JourneyPrefix{"car insurance", {"home", "quote"}},
          JourneyPrefix{"", {"price", "price", "home"}}})
        roundtrip = roundtrip && same_bits(model.predict_next(p), loaded.predict_next(p));
    fs::remove_all(root);

    std::string diff_note;
    for (const auto& f : differing) diff_note += " " + f;
    const double secs = clock.seconds();
    return {commands_ok && differing.empty() && roundtrip,
            fmt("CLI runs succeeded: %s; %zu/%zu artifacts byte-identical across two runs%s%s; "
                "checkpoint save/load/predict bitwise stable: %s; %.1f s",
                commands_ok ? "yes" : "no", identical, artifacts.size(),
                differing.empty() ? "" : ", differing:", diff_note.c_str(),
                roundtrip ? "yes" : "no", secs)};
}

// --- AC8 --------------------------------------------------------------------

Outcome dwell_replication() {
    Stream rng(8);
    std::size_t matched = 0;
    const std::size_t cases = 1000;
    for (std::size_t c = 0; c < cases; ++c) {
        const double unit = rng.uniform(1.0, 120.0);
        const std::size_t cap = 1 + rng.below(8);
        Session s{"s", "kw", {}};
        const std::size_t events = rng.below(12);
        std::size_t expected = 1;  // NULL_PAGE
        bool content_ok = true;
        for (std::size_t e = 0; e < events; ++e) {
            // Mix of exact multiples of the unit, zero and arbitrary dwells.
            double dwell = 0.0;
            switch (rng.below(3)) {
                case 0: dwell = unit * static_cast<double>(rng.below(10)); break;
                case 1: dwell = 0.0; break;
                default: dwell = rng.uniform(0.0, 12.0 * unit); break;
            }
            s.events.push_back({"page" + std::to_string(rng.below(4)), dwell});
            expected += std::min<std::size_t>(
                cap, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dwell / unit))));
        }
        const auto expanded = replicate_dwell(s, unit, cap);
        content_ok = !expanded.empty() && expanded.back() == kNullPage;
        if (expanded.size() == expected && content_ok) ++matched;
    }
    return {matched == cases,
            fmt("%zu/%zu randomized sessions expand to min(cap, max(1, ceil(d / unit))) copies "
                "per page plus NULL_PAGE",
                matched, cases)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"AC1 gradient correctness", gradient_correctness},
        {"AC2 loss oracle and overfit", loss_oracle},
        {"AC3 Monte Carlo vs enumeration", monte_carlo_equivalence},
        {"AC4 learnability on synthetic chain", learnability},
        {"AC5 ensemble contract", ensemble_contract},
        {"AC6 funnel simulation realism", simulation_realism},
        {"AC7 determinism", determinism},
        {"AC8 dwell replication", dwell_replication},
    };
    std::set<std::string> selected(argv + 1, argv + argc);
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        if (!selected.empty() && !selected.contains(name.substr(0, 3))) continue;
        Outcome outcome;
        try {
            outcome = check();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        if (!outcome.pass) ++failures;
        std::cout << (outcome.pass ? "PASS " : "FAIL ") << name << ": " << outcome.detail
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
