#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "clickpath/journey.hpp"
#include "clickpath/sequence_model.hpp"

namespace clickpath {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    /// Running average factor for squared gradients.
    double rms_decay = 0.9;
    double rms_epsilon = 1e-8;
    double gradient_clip_norm = 5.0;
    std::uint64_t seed = 0;
    DwellPolicy dwell;
    ModelConfig model;
    /// Evaluation threads; never changes results.
    std::size_t workers = 1;
};

/// Throws ArgumentError for out-of-range settings.
void validate(const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;     // mean nats per predicted step, dropout active
    double eval_loss = 0.0;      // NaN when no evaluation sessions were given
    double eval_accuracy = 0.0;  // NaN when no evaluation sessions were given
    double seconds = 0.0;

    /// Compares everything except wall-clock time.
    bool same_metrics(const EpochRecord& other) const;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;

    bool same_metrics(const TrainReport& other) const;
    /// CSV with header `epoch,train_loss,eval_loss,eval_accuracy`.
    void write_csv(std::ostream& out) const;
    void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
    SequenceModel model;
    TrainReport report;
};

/// Minimizes the summed next-page cross-entropy over length-bucketed,
/// padded mini-batches with RMS-scaled gradient steps and global-norm
/// clipping. Identical (sessions, config) give identical weights.
/// Throws TrainingError naming the epoch and batch if the loss diverges.
TrainResult train(std::span<const Session> sessions, const TrainConfig& config,
                  const PageVocabulary& vocabulary, std::span<const Session> eval_sessions = {});

struct Evaluation {
    double accuracy = 0.0;   // pooled over every predicted step
    double mean_loss = 0.0;  // nats per predicted step
    std::size_t steps = 0;
    std::size_t correct = 0;
};

class Ensemble;

/// Next-page accuracy with argmax ties broken by the lowest index, and mean
/// cross-entropy, micro-averaged over all steps of all sessions.
Evaluation evaluate(const SequenceModel& model, std::span<const Session> sessions,
                    const DwellPolicy& dwell = {}, std::size_t workers = 1);
Evaluation evaluate(const Ensemble& ensemble, std::span<const Session> sessions,
                    const DwellPolicy& dwell = {}, std::size_t workers = 1);

/// Index of the largest entry; the first one on ties.
std::size_t argmax(std::span<const double> values);

/// Arithmetic mean of equally sized distributions. Throws ArgumentError when
/// empty or ragged.
std::vector<double> average_distributions(std::span<const std::vector<double>> members);

/// Models sharing one vocabulary, predicting by averaging distributions.
class Ensemble {
public:
    /// Throws ArgumentError when empty or when members disagree on the vocabulary.
    explicit Ensemble(std::vector<SequenceModel> members);

    std::size_t size() const noexcept { return members_.size(); }
    const SequenceModel& member(std::size_t i) const { return members_.at(i); }
    const std::vector<SequenceModel>& members() const noexcept { return members_; }
    const PageVocabulary& vocabulary() const noexcept { return members_.front().vocabulary(); }

    std::vector<StepPrediction> forward_session(std::span<const std::string> phrases) const;

private:
    std::vector<SequenceModel> members_;
};

std::vector<double> ensemble_predict(const Ensemble& ensemble, const JourneyPrefix& prefix);

struct EnsembleResult {
    Ensemble ensemble;
    std::vector<TrainReport> reports;
};

/// Trains k independent members with seeds seed, seed+1, ..., seed+k-1.
/// Members train on up to config.workers threads.
EnsembleResult train_ensemble(std::span<const Session> sessions, const TrainConfig& config,
                              const PageVocabulary& vocabulary, std::size_t k,
                              std::span<const Session> eval_sessions = {});

}  // namespace clickpath
