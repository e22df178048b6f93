#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "clickpath/journey.hpp"
#include "clickpath/markov.hpp"
#include "clickpath/random.hpp"
#include "clickpath/sequence_model.hpp"
#include "clickpath/trainer.hpp"

namespace clickpath {

/// A predictor conditioned on a journey so far. Cursors are independent
/// values: advancing a clone never affects the original.
class PredictorCursor {
public:
    virtual ~PredictorCursor() = default;
    /// Next-page distribution over the predictor's vocabulary.
    virtual const std::vector<double>& distribution() const = 0;
    /// Appends a page (vocabulary index) to the journey.
    virtual void advance(std::size_t page) = 0;
    virtual std::unique_ptr<PredictorCursor> clone() const = 0;
};

/// Anything that yields next-page distributions for journeys. Implementations
/// are read-only after construction and may be shared across threads.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual const PageVocabulary& vocabulary() const = 0;
    virtual std::unique_ptr<PredictorCursor> start(const JourneyPrefix& prefix) const = 0;
};

/// Wraps a trained model; vocabulary page embeddings are computed once.
class ModelPredictor final : public Predictor {
public:
    explicit ModelPredictor(const SequenceModel& model);
    const PageVocabulary& vocabulary() const override { return model_.vocabulary(); }
    std::unique_ptr<PredictorCursor> start(const JourneyPrefix& prefix) const override;

    const SequenceModel& model() const noexcept { return model_; }
    const Matrix& page_embedding(std::size_t page) const { return page_embeddings_.at(page); }

private:
    const SequenceModel& model_;
    std::vector<Matrix> page_embeddings_;
};

/// Averages the distributions of its members' cursors.
class EnsemblePredictor final : public Predictor {
public:
    explicit EnsemblePredictor(const Ensemble& ensemble);
    const PageVocabulary& vocabulary() const override { return ensemble_.vocabulary(); }
    std::unique_ptr<PredictorCursor> start(const JourneyPrefix& prefix) const override;

private:
    const Ensemble& ensemble_;
    std::vector<ModelPredictor> members_;
};

/// The generating chain itself: the terminal state plays NULL_PAGE and
/// UNKNOWN has probability zero. The first step uses the keyword posterior.
class MarkovPredictor final : public Predictor {
public:
    explicit MarkovPredictor(MarkovSpec spec);
    const PageVocabulary& vocabulary() const override { return vocabulary_; }
    std::unique_ptr<PredictorCursor> start(const JourneyPrefix& prefix) const override;

    const MarkovSpec& spec() const noexcept { return spec_; }
    /// Distribution over vocabulary indices after visiting `page`.
    const std::vector<double>& row(std::size_t page) const { return rows_.at(page); }
    std::vector<double> first_step(std::string_view keywords) const;

private:
    MarkovSpec spec_;
    PageVocabulary vocabulary_;
    std::vector<std::vector<double>> rows_;  // indexed by vocabulary page
};

/// Synthetic non-Markov predictor for testing: the distribution after each
/// history is a seeded hash of the whole history, over `pages` pages plus
/// NULL_PAGE (UNKNOWN gets zero mass).
class HashedPredictor final : public Predictor {
public:
    HashedPredictor(std::size_t pages, std::uint64_t seed);
    const PageVocabulary& vocabulary() const override { return vocabulary_; }
    std::unique_ptr<PredictorCursor> start(const JourneyPrefix& prefix) const override;

    std::vector<double> distribution_after(std::uint64_t history_hash) const;
    std::uint64_t seed() const noexcept { return seed_; }

private:
    PageVocabulary vocabulary_;
    std::uint64_t seed_;
};

// --- objectives and estimates ----------------------------------------------

/// A conversion goal: reaching any of `pages`.
struct Objective {
    std::string id;
    std::vector<std::string> pages;
};

/// Vocabulary indices of the objective's pages. Throws ArgumentError when
/// empty, or when a page is reserved or not in the vocabulary.
std::vector<std::size_t> resolve_objective(const Objective& objective,
                                           const PageVocabulary& vocabulary);

struct ConversionEstimate {
    std::string objective_id;
    double probability = 0.0;
    double std_error = 0.0;  // sqrt(p (1 - p) / n)
    std::size_t n_samples = 0;
    std::size_t horizon = 0;
};

enum class Termination { NullPage, Horizon };

struct SimulatedJourney {
    JourneyPrefix prefix;
    std::vector<std::size_t> continuation;  // sampled vocabulary indices
    Termination reason = Termination::Horizon;
};

/// Samples s_t from the predicted distribution, feeds it back, and repeats
/// until NULL_PAGE is drawn or `horizon` pages have been sampled.
SimulatedJourney rollout(const Predictor& predictor, const JourneyPrefix& prefix,
                         std::size_t horizon, Stream& rng);

/// Human-readable trace: keywords, prefix pages, then the sampled pages.
std::string format_journey(const SimulatedJourney& journey, const PageVocabulary& vocabulary);

struct SimulationParams {
    std::size_t n_samples = 1000;
    std::size_t horizon = 30;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// Fraction of rollouts in which a target page appears in the prefix or the
/// continuation. Sample j uses the stream derive_seed(seed, {j}).
ConversionEstimate estimate_conversion(const Predictor& predictor, const JourneyPrefix& prefix,
                                       const Objective& objective, const SimulationParams& params);

/// Path probabilities for all continuations up to the horizon.
struct ExactOutcome {
    double hit = 0.0;           // objective reached
    double exited = 0.0;        // NULL_PAGE before any target
    double horizon_miss = 0.0;  // horizon reached without a target
};

/// Depth-first enumeration of every continuation. Throws CapacityError
/// when N^horizon exceeds 1e7.
ExactOutcome exact_outcome(const Predictor& predictor, const JourneyPrefix& prefix,
                           const Objective& objective, std::size_t horizon);
double exact_conversion(const Predictor& predictor, const JourneyPrefix& prefix,
                        const Objective& objective, std::size_t horizon);

/// Conversion probability for the generating chain by forward propagation of
/// the state distribution; usable at horizons far beyond enumeration.
double chain_conversion(const MarkovPredictor& chain, const JourneyPrefix& prefix,
                        const Objective& objective, std::size_t horizon);

/// Empirical distribution of the page at future step t (1-based); journeys
/// that exited earlier count toward NULL_PAGE.
std::vector<double> step_distribution(const Predictor& predictor, const JourneyPrefix& prefix,
                                      std::size_t t, std::size_t n_samples, std::uint64_t seed,
                                      std::size_t workers = 1);

struct ScoredPrefix {
    std::string id;
    JourneyPrefix prefix;
};

struct ScoreRow {
    std::string prefix_id;
    ConversionEstimate estimate;
};

/// Seed used for the i-th prefix of a batch.
std::uint64_t prefix_seed(std::uint64_t seed, std::size_t prefix_index);

/// Every (prefix, objective) pair in prefix-major order. Prefix i is scored
/// exactly as estimate_conversion with seed prefix_seed(params.seed, i); its
/// objectives share those rollouts.
std::vector<ScoreRow> score_batch(const Predictor& predictor, std::span<const ScoredPrefix> prefixes,
                                  std::span<const Objective> objectives,
                                  const SimulationParams& params);

/// CSV with header `prefix_id,objective_id,probability,std_err,n_samples,horizon`.
void write_scores_csv(std::ostream& out, std::span<const ScoreRow> rows);

}  // namespace clickpath
