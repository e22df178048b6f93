#include "clickpath/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "clickpath/error.hpp"
#include "clickpath/parallel.hpp"

namespace clickpath {

namespace {

std::size_t sample(std::span<const double> probs, Stream& rng) {
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

// --- model cursors ---------------------------------------------------------

class ModelCursor final : public PredictorCursor {
public:
    ModelCursor(const ModelPredictor& owner, LstmState state, std::vector<double> dist)
        : owner_(owner), state_(std::move(state)), dist_(std::move(dist)) {}

    const std::vector<double>& distribution() const override { return dist_; }

    void advance(std::size_t page) override { feed(owner_.page_embedding(page)); }

    void feed(const Matrix& embedding) {
        Tape tape(false);
        const Var probs = owner_.model().step(tape, state_, Var::constant(embedding));
        dist_.assign(probs.value().values().begin(), probs.value().values().end());
    }

    std::unique_ptr<PredictorCursor> clone() const override {
        // State nodes are never mutated in place, so sharing them is safe.
        return std::make_unique<ModelCursor>(*this);
    }

private:
    const ModelPredictor& owner_;
    LstmState state_;
    std::vector<double> dist_;
};

class EnsembleCursor final : public PredictorCursor {
public:
    explicit EnsembleCursor(std::vector<std::unique_ptr<PredictorCursor>> members)
        : members_(std::move(members)) {
        refresh();
    }

    const std::vector<double>& distribution() const override { return dist_; }

    void advance(std::size_t page) override {
        for (auto& m : members_) m->advance(page);
        refresh();
    }

    std::unique_ptr<PredictorCursor> clone() const override {
        std::vector<std::unique_ptr<PredictorCursor>> copies;
        for (const auto& m : members_) copies.push_back(m->clone());
        return std::make_unique<EnsembleCursor>(std::move(copies));
    }

private:
    void refresh() {
        std::vector<std::vector<double>> dists;
        for (const auto& m : members_) dists.push_back(m->distribution());
        dist_ = average_distributions(dists);
    }

    std::vector<std::unique_ptr<PredictorCursor>> members_;
    std::vector<double> dist_;
};

class MarkovCursor final : public PredictorCursor {
public:
    MarkovCursor(const MarkovPredictor& owner, std::vector<double> dist)
        : owner_(owner), dist_(std::move(dist)) {}
    const std::vector<double>& distribution() const override { return dist_; }
    void advance(std::size_t page) override { dist_ = owner_.row(page); }
    std::unique_ptr<PredictorCursor> clone() const override {
        return std::make_unique<MarkovCursor>(*this);
    }

private:
    const MarkovPredictor& owner_;
    std::vector<double> dist_;
};

class HashedCursor final : public PredictorCursor {
public:
    HashedCursor(const HashedPredictor& owner, std::uint64_t history)
        : owner_(owner), history_(history), dist_(owner.distribution_after(history)) {}
    const std::vector<double>& distribution() const override { return dist_; }
    void advance(std::size_t page) override {
        history_ = mix64(history_ ^ mix64(page + 0x51ED27ULL));
        dist_ = owner_.distribution_after(history_);
    }
    std::unique_ptr<PredictorCursor> clone() const override {
        return std::make_unique<HashedCursor>(*this);
    }

private:
    const HashedPredictor& owner_;
    std::uint64_t history_;
    std::vector<double> dist_;
};

std::vector<std::size_t> resolve_prefix(const JourneyPrefix& prefix, const PageVocabulary& vocab) {
    std::vector<std::size_t> out;
    for (const auto& p : prefix.pages) out.push_back(vocab.index_of(p));
    return out;
}

bool contains_any(std::span<const std::size_t> pages, std::span<const std::size_t> targets) {
    return std::any_of(pages.begin(), pages.end(), [&](std::size_t p) {
        return std::find(targets.begin(), targets.end(), p) != targets.end();
    });
}

SimulatedJourney rollout_from(const PredictorCursor& start, const JourneyPrefix& prefix,
                              std::size_t null_index, std::size_t horizon, Stream& rng) {
    SimulatedJourney journey;
    journey.prefix = prefix;
    journey.reason = Termination::Horizon;
    auto cursor = start.clone();
    for (std::size_t t = 0; t < horizon; ++t) {
        const std::size_t page = sample(cursor->distribution(), rng);
        journey.continuation.push_back(page);
        if (page == null_index) {
            journey.reason = Termination::NullPage;
            break;
        }
        if (t + 1 < horizon) cursor->advance(page);
    }
    return journey;
}

ConversionEstimate make_estimate(const std::string& id, std::size_t hits, std::size_t n,
                                 std::size_t horizon) {
    ConversionEstimate e;
    e.objective_id = id;
    e.n_samples = n;
    e.horizon = horizon;
    e.probability = static_cast<double>(hits) / static_cast<double>(n);
    e.std_error = std::sqrt(e.probability * (1.0 - e.probability) / static_cast<double>(n));
    return e;
}

/// Shared rollouts for several objectives of one prefix.
std::vector<ConversionEstimate> estimate_many(const Predictor& predictor,
                                              const JourneyPrefix& prefix,
                                              std::span<const Objective> objectives,
                                              const SimulationParams& params) {
    if (params.n_samples < 1) throw ArgumentError("n_samples must be at least 1");
    if (params.horizon < 1) throw ArgumentError("horizon must be at least 1");
    const PageVocabulary& vocab = predictor.vocabulary();
    std::vector<std::vector<std::size_t>> targets;
    for (const Objective& o : objectives) targets.push_back(resolve_objective(o, vocab));
    const auto prefix_pages = resolve_prefix(prefix, vocab);

    std::vector<bool> already(objectives.size());
    bool all_done = true;
    for (std::size_t o = 0; o < objectives.size(); ++o) {
        already[o] = contains_any(prefix_pages, targets[o]);
        all_done = all_done && already[o];
    }
    std::vector<std::size_t> hits(objectives.size(), 0);
    if (!all_done) {
        const auto start = predictor.start(prefix);
        const std::size_t null_index = vocab.null_index();
        std::vector<std::vector<char>> hit_by_sample(params.n_samples,
                                                     std::vector<char>(objectives.size(), 0));
        parallel_for(params.n_samples, params.workers, [&](std::size_t j) {
            Stream rng(derive_seed(params.seed, {j}));
            const auto journey = rollout_from(*start, prefix, null_index, params.horizon, rng);
            for (std::size_t o = 0; o < objectives.size(); ++o)
                hit_by_sample[j][o] = already[o] || contains_any(journey.continuation, targets[o]);
        });
        for (const auto& row : hit_by_sample)
            for (std::size_t o = 0; o < objectives.size(); ++o) hits[o] += row[o] ? 1 : 0;
    }
    std::vector<ConversionEstimate> out;
    for (std::size_t o = 0; o < objectives.size(); ++o) {
        const std::size_t h = already[o] ? params.n_samples : hits[o];
        out.push_back(make_estimate(objectives[o].id, h, params.n_samples, params.horizon));
    }
    return out;
}

void enumerate(const PredictorCursor& cursor, std::span<const std::size_t> targets,
               std::size_t null_index, std::size_t remaining, double mass, ExactOutcome& out) {
    const auto& dist = cursor.distribution();
    for (std::size_t page = 0; page < dist.size(); ++page) {
        const double p = mass * dist[page];
        if (p == 0.0) continue;
        if (std::find(targets.begin(), targets.end(), page) != targets.end()) {
            out.hit += p;
        } else if (page == null_index) {
            out.exited += p;
        } else if (remaining == 1) {
            out.horizon_miss += p;
        } else {
            auto next = cursor.clone();
            next->advance(page);
            enumerate(*next, targets, null_index, remaining - 1, p, out);
        }
    }
}

}  // namespace

// --- predictors ----------------------------------------------------------------

ModelPredictor::ModelPredictor(const SequenceModel& model) : model_(model) {
    for (const std::string& name : model.vocabulary().names()) page_embeddings_.push_back(model.embed(name));
}

std::unique_ptr<PredictorCursor> ModelPredictor::start(const JourneyPrefix& prefix) const {
    auto cursor = std::make_unique<ModelCursor>(*this, model_.initial_state(1), std::vector<double>{});
    cursor->feed(model_.embed(prefix.keywords));
    for (const std::string& page : prefix.pages) cursor->feed(model_.embed(page));
    return cursor;
}

EnsemblePredictor::EnsemblePredictor(const Ensemble& ensemble) : ensemble_(ensemble) {
    members_.reserve(ensemble.size());
    for (const SequenceModel& m : ensemble.members()) members_.emplace_back(m);
}

std::unique_ptr<PredictorCursor> EnsemblePredictor::start(const JourneyPrefix& prefix) const {
    std::vector<std::unique_ptr<PredictorCursor>> cursors;
    for (const ModelPredictor& m : members_) cursors.push_back(m.start(prefix));
    return std::make_unique<EnsembleCursor>(std::move(cursors));
}

MarkovPredictor::MarkovPredictor(MarkovSpec spec)
    : spec_(std::move(spec)), vocabulary_((spec_.validate(), spec_.page_names())) {
    const std::size_t n = vocabulary_.size();
    rows_.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t s = 0; s < spec_.states.size(); ++s) {
        if (s == spec_.terminal) continue;
        auto& row = rows_[vocabulary_.index_of(spec_.states[s])];
        for (std::size_t j = 0; j < spec_.states.size(); ++j) {
            const std::size_t to = j == spec_.terminal ? vocabulary_.null_index()
                                                       : vocabulary_.index_of(spec_.states[j]);
            row[to] += spec_.transitions(s, j);
        }
    }
}

std::vector<double> MarkovPredictor::first_step(std::string_view keywords) const {
    const auto post = initial_posterior(spec_, keywords);
    std::vector<double> dist(vocabulary_.size(), 0.0);
    for (std::size_t s = 0; s < spec_.states.size(); ++s) {
        if (s == spec_.terminal) continue;
        dist[vocabulary_.index_of(spec_.states[s])] += post[s];
    }
    return dist;
}

std::unique_ptr<PredictorCursor> MarkovPredictor::start(const JourneyPrefix& prefix) const {
    auto cursor = std::make_unique<MarkovCursor>(*this, first_step(prefix.keywords));
    for (const std::string& page : prefix.pages) {
        if (!vocabulary_.contains(page) || page == kNullPage || page == kUnknownPage)
            throw ArgumentError("page '" + page + "' is not a state of the chain");
        cursor->advance(vocabulary_.index_of(page));
    }
    return cursor;
}

namespace {

std::vector<std::string> toy_pages(std::size_t pages) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < pages; ++i) names.push_back("page-" + std::to_string(i));
    return names;
}

}  // namespace

HashedPredictor::HashedPredictor(std::size_t pages, std::uint64_t seed)
    : vocabulary_(toy_pages(pages)), seed_(seed) {
    if (pages < 1) throw ArgumentError("hashed predictor needs at least one page");
}

std::vector<double> HashedPredictor::distribution_after(std::uint64_t history_hash) const {
    Stream rng(derive_seed(seed_, {history_hash}));
    std::vector<double> dist(vocabulary_.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i <= vocabulary_.null_index(); ++i) {
        const double u = rng.uniform();
        dist[i] = 0.02 + u * u;
        total += dist[i];
    }
    for (double& p : dist) p /= total;
    return dist;
}

std::unique_ptr<PredictorCursor> HashedPredictor::start(const JourneyPrefix& prefix) const {
    auto cursor = std::make_unique<HashedCursor>(*this, hash_label(prefix.keywords));
    for (const std::string& page : prefix.pages) cursor->advance(vocabulary_.index_of(page));
    return cursor;
}

// --- simulation ------------------------------------------------------------

std::vector<std::size_t> resolve_objective(const Objective& objective,
                                           const PageVocabulary& vocabulary) {
    if (objective.pages.empty())
        throw ArgumentError("objective '" + objective.id + "' has no target pages");
    std::vector<std::size_t> out;
    for (const std::string& page : objective.pages) {
        if (page == kNullPage || page == kUnknownPage)
            throw ArgumentError("objective '" + objective.id + "' targets reserved page " + page);
        if (!vocabulary.contains(page))
            throw ArgumentError("objective '" + objective.id + "' targets unknown page '" + page + "'");
        out.push_back(vocabulary.index_of(page));
    }
    return out;
}

SimulatedJourney rollout(const Predictor& predictor, const JourneyPrefix& prefix,
                         std::size_t horizon, Stream& rng) {
    if (horizon < 1) throw ArgumentError("rollout: horizon must be at least 1");
    const auto start = predictor.start(prefix);
    return rollout_from(*start, prefix, predictor.vocabulary().null_index(), horizon, rng);
}

std::string format_journey(const SimulatedJourney& journey, const PageVocabulary& vocabulary) {
    std::ostringstream out;
    out << "keywords=\"" << journey.prefix.keywords << "\" |";
    for (const auto& p : journey.prefix.pages) out << ' ' << p << " ->";
    out << " [simulated]";
    for (std::size_t i = 0; i < journey.continuation.size(); ++i)
        out << (i == 0 ? " " : " -> ") << vocabulary.name(journey.continuation[i]);
    out << (journey.reason == Termination::NullPage ? " (exit)" : " (horizon)");
    return out.str();
}

ConversionEstimate estimate_conversion(const Predictor& predictor, const JourneyPrefix& prefix,
                                       const Objective& objective, const SimulationParams& params) {
    return estimate_many(predictor, prefix, std::span<const Objective>(&objective, 1), params).front();
}

ExactOutcome exact_outcome(const Predictor& predictor, const JourneyPrefix& prefix,
                           const Objective& objective, std::size_t horizon) {
    const PageVocabulary& vocab = predictor.vocabulary();
    const auto targets = resolve_objective(objective, vocab);
    const double paths = std::pow(static_cast<double>(vocab.size()), static_cast<double>(horizon));
    if (paths > 1e7) {
        throw CapacityError("exact enumeration of " + std::to_string(vocab.size()) + "^" +
                            std::to_string(horizon) + " paths exceeds the 1e7 guard");
    }
    ExactOutcome out;
    if (contains_any(resolve_prefix(prefix, vocab), targets)) {
        out.hit = 1.0;
        return out;
    }
    if (horizon == 0) {
        out.horizon_miss = 1.0;
        return out;
    }
    const auto start = predictor.start(prefix);
    enumerate(*start, targets, vocab.null_index(), horizon, 1.0, out);
    return out;
}

double exact_conversion(const Predictor& predictor, const JourneyPrefix& prefix,
                        const Objective& objective, std::size_t horizon) {
    return exact_outcome(predictor, prefix, objective, horizon).hit;
}

double chain_conversion(const MarkovPredictor& chain, const JourneyPrefix& prefix,
                        const Objective& objective, std::size_t horizon) {
    const PageVocabulary& vocab = chain.vocabulary();
    const auto targets = resolve_objective(objective, vocab);
    if (contains_any(resolve_prefix(prefix, vocab), targets)) return 1.0;
    if (horizon == 0) return 0.0;
    const auto is_target = [&](std::size_t i) {
        return std::find(targets.begin(), targets.end(), i) != targets.end();
    };
    std::vector<double> mass = chain.start(prefix)->distribution();
    double hit = 0.0;
    for (std::size_t step = 1;; ++step) {
        // mass: distribution of the page sampled at this step over journeys
        // that have neither converted nor exited yet.
        for (std::size_t i = 0; i < mass.size(); ++i) {
            if (is_target(i)) {
                hit += mass[i];
                mass[i] = 0.0;
            }
        }
        mass[vocab.null_index()] = 0.0;
        if (step == horizon) break;
        std::vector<double> next(mass.size(), 0.0);
        for (std::size_t i = 0; i < mass.size(); ++i) {
            if (mass[i] == 0.0) continue;
            const auto& row = chain.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) next[j] += mass[i] * row[j];
        }
        mass = std::move(next);
    }
    return hit;
}

std::vector<double> step_distribution(const Predictor& predictor, const JourneyPrefix& prefix,
                                      std::size_t t, std::size_t n_samples, std::uint64_t seed,
                                      std::size_t workers) {
    if (t < 1) throw ArgumentError("step_distribution: t must be at least 1");
    if (n_samples < 1) throw ArgumentError("step_distribution: n_samples must be at least 1");
    const PageVocabulary& vocab = predictor.vocabulary();
    const auto start = predictor.start(prefix);
    std::vector<std::size_t> page_at(n_samples);
    parallel_for(n_samples, workers, [&](std::size_t j) {
        Stream rng(derive_seed(seed, {j}));
        const auto journey = rollout_from(*start, prefix, vocab.null_index(), t, rng);
        page_at[j] = journey.continuation.size() >= t ? journey.continuation[t - 1] : vocab.null_index();
    });
    std::vector<double> freq(vocab.size(), 0.0);
    for (std::size_t p : page_at) freq[p] += 1.0;
    for (double& f : freq) f /= static_cast<double>(n_samples);
    return freq;
}

std::uint64_t prefix_seed(std::uint64_t seed, std::size_t prefix_index) {
    return derive_seed(seed, {hash_label("prefix"), prefix_index});
}

std::vector<ScoreRow> score_batch(const Predictor& predictor, std::span<const ScoredPrefix> prefixes,
                                  std::span<const Objective> objectives,
                                  const SimulationParams& params) {
    if (prefixes.empty() || objectives.empty())
        throw ArgumentError("score_batch: prefixes and objectives must be non-empty");
    std::vector<ScoreRow> rows;
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        SimulationParams sub = params;
        sub.seed = prefix_seed(params.seed, i);
        for (auto& e : estimate_many(predictor, prefixes[i].prefix, objectives, sub))
            rows.push_back({prefixes[i].id, std::move(e)});
    }
    return rows;
}

void write_scores_csv(std::ostream& out, std::span<const ScoreRow> rows) {
    const auto quoted = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + "\"";
    };
    out << "prefix_id,objective_id,probability,std_err,n_samples,horizon\n";
    out << std::setprecision(17);
    for (const ScoreRow& r : rows) {
        out << quoted(r.prefix_id) << ',' << quoted(r.estimate.objective_id) << ','
            << r.estimate.probability << ',' << r.estimate.std_error << ',' << r.estimate.n_samples
            << ',' << r.estimate.horizon << '\n';
    }
}

}  // namespace clickpath
