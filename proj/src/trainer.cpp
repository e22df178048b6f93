#include "clickpath/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <unordered_map>

#include "clickpath/error.hpp"
#include "clickpath/parallel.hpp"

namespace clickpath {

namespace {

using EmbeddingTable = std::unordered_map<std::string, Matrix>;

EmbeddingTable build_embedding_table(const SequenceModel& model,
                                     const std::vector<EncodedSession>& sessions,
                                     std::size_t workers) {
    std::set<std::string> unique;
    for (const auto& s : sessions) unique.insert(s.inputs.begin(), s.inputs.end());
    const std::vector<std::string> phrases(unique.begin(), unique.end());
    std::vector<Matrix> embedded(phrases.size());
    parallel_for(phrases.size(), workers, [&](std::size_t i) { embedded[i] = model.embed(phrases[i]); });
    EmbeddingTable table;
    for (std::size_t i = 0; i < phrases.size(); ++i) table.emplace(phrases[i], std::move(embedded[i]));
    return table;
}

std::vector<std::vector<double>> member_predictions(const SequenceModel& model,
                                                    const EmbeddingTable& table,
                                                    const EncodedSession& s) {
    std::vector<Matrix> inputs;
    inputs.reserve(s.inputs.size());
    for (const auto& phrase : s.inputs) inputs.push_back(table.at(phrase));
    std::vector<std::vector<double>> out;
    for (auto& p : model.forward_embedded(inputs)) out.push_back(std::move(p.probabilities));
    return out;
}

template <typename Predict>
Evaluation evaluate_sessions(const std::vector<EncodedSession>& sessions, std::size_t workers,
                             Predict&& predict) {
    struct Partial {
        std::size_t correct = 0;
        std::size_t steps = 0;
        double loss = 0.0;
    };
    std::vector<Partial> partials(sessions.size());
    parallel_for(sessions.size(), workers, [&](std::size_t i) {
        const auto& s = sessions[i];
        const auto preds = predict(s);
        Partial p;
        for (std::size_t t = 0; t < s.targets.size(); ++t) {
            if (argmax(preds[t]) == s.targets[t]) ++p.correct;
            p.loss += cross_entropy(preds[t], s.targets[t]);
            ++p.steps;
        }
        partials[i] = p;
    });
    Evaluation ev;
    double loss = 0.0;
    for (const Partial& p : partials) {
        ev.correct += p.correct;
        ev.steps += p.steps;
        loss += p.loss;
    }
    if (ev.steps > 0) {
        ev.accuracy = static_cast<double>(ev.correct) / static_cast<double>(ev.steps);
        ev.mean_loss = loss / static_cast<double>(ev.steps);
    }
    return ev;
}

std::vector<EncodedSession> encode_all(std::span<const Session> sessions,
                                       const PageVocabulary& vocabulary, const DwellPolicy& dwell) {
    std::vector<EncodedSession> out;
    out.reserve(sessions.size());
    for (const Session& s : sessions) out.push_back(encode_session(s, vocabulary, dwell));
    return out;
}

struct Batch {
    std::vector<std::size_t> members;
};

std::vector<Batch> make_batches(const std::vector<EncodedSession>& sessions, std::size_t batch_size,
                                Stream& rng) {
    std::vector<std::size_t> order(sessions.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sessions[a].inputs.size() < sessions[b].inputs.size();
    });
    std::vector<Batch> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        batches.push_back({std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(i),
                                                    order.begin() + static_cast<std::ptrdiff_t>(end))});
    }
    shuffle(batches.begin(), batches.end(), rng);
    return batches;
}

/// Builds the batch loss on `tape`; returns the loss node and the number of
/// unpadded steps.
std::pair<Var, std::size_t> batch_loss(Tape& tape, const SequenceModel& model,
                                       const std::vector<EncodedSession>& sessions,
                                       const Batch& batch, Stream& dropout_rng) {
    // Each distinct phrase is encoded once per batch; its gradient collects
    // contributions from every position that uses it.
    std::map<std::string, std::size_t> phrase_index;
    std::vector<Var> embeddings;
    std::size_t longest = 0;
    for (std::size_t m : batch.members) {
        for (const auto& phrase : sessions[m].inputs) {
            if (phrase_index.emplace(phrase, embeddings.size()).second)
                embeddings.push_back(model.embed(tape, phrase));
        }
        longest = std::max(longest, sessions[m].inputs.size());
    }
    const Var table = tape.concat_rows(embeddings);
    const std::size_t width = batch.members.size();
    LstmState state = model.initial_state(width);
    std::vector<Var> losses;
    std::vector<std::size_t> rows(width), targets(width);
    std::vector<double> weights(width);
    std::size_t steps = 0;
    for (std::size_t t = 0; t < longest; ++t) {
        for (std::size_t b = 0; b < width; ++b) {
            const auto& s = sessions[batch.members[b]];
            const bool live = t < s.inputs.size();
            rows[b] = live ? phrase_index.at(s.inputs[t]) : 0;
            targets[b] = live ? s.targets[t] : 0;
            weights[b] = live ? 1.0 : 0.0;
            steps += live ? 1 : 0;
        }
        const Var probs = model.step(tape, state, tape.gather_rows(table, rows), &dropout_rng);
        losses.push_back(tape.cross_entropy(probs, targets, weights));
    }
    return {tape.sum(losses), steps};
}

}  // namespace

void validate(const TrainConfig& config) {
    if (config.epochs < 1) throw ArgumentError("train: epochs must be at least 1");
    if (config.batch_size < 1) throw ArgumentError("train: batch_size must be at least 1");
    if (!(config.learning_rate > 0.0)) throw ArgumentError("train: learning_rate must be positive");
    if (!(config.rms_decay >= 0.0 && config.rms_decay < 1.0))
        throw ArgumentError("train: rms_decay must be in [0, 1)");
    if (!(config.rms_epsilon >= 0.0)) throw ArgumentError("train: rms_epsilon must be non-negative");
    if (!(config.gradient_clip_norm > 0.0))
        throw ArgumentError("train: gradient_clip_norm must be positive");
    if (!(config.model.dropout >= 0.0 && config.model.dropout < 1.0))
        throw ArgumentError("train: dropout rate must be in [0, 1)");
    if (!(config.dwell.unit_seconds > 0.0) || config.dwell.cap < 1)
        throw ArgumentError("train: dwell unit must be positive and cap at least 1");
}

bool EpochRecord::same_metrics(const EpochRecord& o) const {
    const auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return epoch == o.epoch && same(train_loss, o.train_loss) && same(eval_loss, o.eval_loss) &&
           same(eval_accuracy, o.eval_accuracy);
}

bool TrainReport::same_metrics(const TrainReport& other) const {
    return std::equal(epochs.begin(), epochs.end(), other.epochs.begin(), other.epochs.end(),
                      [](const EpochRecord& a, const EpochRecord& b) { return a.same_metrics(b); });
}

void TrainReport::write_csv(std::ostream& out) const {
    const auto field = [&](double v) {
        if (!std::isnan(v)) out << v;
    };
    out << "epoch,train_loss,eval_loss,eval_accuracy\n";
    out << std::setprecision(17);
    for (const EpochRecord& e : epochs) {
        out << e.epoch << ',';
        field(e.train_loss);
        out << ',';
        field(e.eval_loss);
        out << ',';
        field(e.eval_accuracy);
        out << '\n';
    }
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write report " + path.string());
    write_csv(out);
}

TrainResult train(std::span<const Session> sessions, const TrainConfig& config,
                  const PageVocabulary& vocabulary, std::span<const Session> eval_sessions) {
    validate(config);
    if (sessions.empty()) throw ArgumentError("train: no sessions");
    SequenceModel model(config.model, vocabulary, config.seed);
    const auto encoded = encode_all(sessions, vocabulary, config.dwell);
    Stream order_rng(derive_seed(config.seed, {hash_label("batches")}));
    Stream dropout_rng(derive_seed(config.seed, {hash_label("dropout")}));

    std::vector<Var> params = model.parameters();
    std::vector<Matrix> mean_square;
    for (const Var& p : params) mean_square.emplace_back(p.rows(), p.cols());

    TrainReport report;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const auto batches = make_batches(encoded, config.batch_size, order_rng);
        double epoch_loss = 0.0;
        std::size_t epoch_steps = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            Tape tape;
            const auto [loss, steps] = batch_loss(tape, model, encoded, batches[bi], dropout_rng);
            const double value = loss.value()[0];
            if (!std::isfinite(value)) {
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(bi + 1));
            }
            for (Var& p : params) p.zero_grad();
            tape.backward(loss);

            double norm_sq = 0.0;
            for (Var& p : params)
                for (double g : p.grad().values()) norm_sq += g * g;
            const double norm = std::sqrt(norm_sq);
            if (!std::isfinite(norm)) {
                throw TrainingError("gradient diverged at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(bi + 1));
            }
            const double clip = norm > config.gradient_clip_norm ? config.gradient_clip_norm / norm : 1.0;
            for (std::size_t k = 0; k < params.size(); ++k) {
                Matrix& w = params[k].mutable_value();
                const Matrix& g = params[k].grad();
                Matrix& ms = mean_square[k];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double gi = g[i] * clip;
                    ms[i] = config.rms_decay * ms[i] + (1.0 - config.rms_decay) * gi * gi;
                    w[i] -= config.learning_rate * gi / (std::sqrt(ms[i]) + config.rms_epsilon);
                }
            }
            epoch_loss += value;
            epoch_steps += steps;
        }
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_steps));
        record.eval_loss = std::numeric_limits<double>::quiet_NaN();
        record.eval_accuracy = std::numeric_limits<double>::quiet_NaN();
        if (!eval_sessions.empty()) {
            const Evaluation ev = evaluate(model, eval_sessions, config.dwell, config.workers);
            record.eval_loss = ev.mean_loss;
            record.eval_accuracy = ev.accuracy;
        }
        record.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        report.epochs.push_back(record);
    }
    return {std::move(model), std::move(report)};
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Evaluation evaluate(const SequenceModel& model, std::span<const Session> sessions,
                    const DwellPolicy& dwell, std::size_t workers) {
    const auto encoded = encode_all(sessions, model.vocabulary(), dwell);
    const EmbeddingTable table = build_embedding_table(model, encoded, workers);
    return evaluate_sessions(encoded, workers, [&](const EncodedSession& s) {
        return member_predictions(model, table, s);
    });
}

Evaluation evaluate(const Ensemble& ensemble, std::span<const Session> sessions,
                    const DwellPolicy& dwell, std::size_t workers) {
    const auto encoded = encode_all(sessions, ensemble.vocabulary(), dwell);
    std::vector<EmbeddingTable> tables;
    for (const SequenceModel& m : ensemble.members())
        tables.push_back(build_embedding_table(m, encoded, workers));
    return evaluate_sessions(encoded, workers, [&](const EncodedSession& s) {
        std::vector<std::vector<std::vector<double>>> per_member;
        for (std::size_t k = 0; k < ensemble.size(); ++k)
            per_member.push_back(member_predictions(ensemble.member(k), tables[k], s));
        std::vector<std::vector<double>> out;
        std::vector<std::vector<double>> at_step(ensemble.size());
        for (std::size_t t = 0; t < s.targets.size(); ++t) {
            for (std::size_t k = 0; k < ensemble.size(); ++k) at_step[k] = per_member[k][t];
            out.push_back(average_distributions(at_step));
        }
        return out;
    });
}

std::vector<double> average_distributions(std::span<const std::vector<double>> members) {
    if (members.empty()) throw ArgumentError("average of an empty ensemble");
    std::vector<double> mean(members.front().size(), 0.0);
    for (const auto& m : members) {
        if (m.size() != mean.size()) throw ArgumentError("ensemble members disagree on width");
        for (std::size_t i = 0; i < m.size(); ++i) mean[i] += m[i];
    }
    const auto k = static_cast<double>(members.size());
    for (double& v : mean) v /= k;
    return mean;
}

Ensemble::Ensemble(std::vector<SequenceModel> members) : members_(std::move(members)) {
    if (members_.empty()) throw ArgumentError("ensemble must have at least one member");
    for (const SequenceModel& m : members_) {
        if (!(m.vocabulary() == members_.front().vocabulary()))
            throw ArgumentError("ensemble members must share one vocabulary");
        if (m.config().alphabet != members_.front().config().alphabet)
            throw ArgumentError("ensemble members must share one alphabet");
    }
}

std::vector<StepPrediction> Ensemble::forward_session(std::span<const std::string> phrases) const {
    std::vector<std::vector<StepPrediction>> per_member;
    for (const SequenceModel& m : members_) per_member.push_back(m.forward_session(phrases));
    std::vector<StepPrediction> out;
    std::vector<std::vector<double>> at_step(members_.size());
    for (std::size_t t = 0; t < phrases.size(); ++t) {
        for (std::size_t k = 0; k < members_.size(); ++k) at_step[k] = per_member[k][t].probabilities;
        out.push_back({t, average_distributions(at_step)});
    }
    return out;
}

std::vector<double> ensemble_predict(const Ensemble& ensemble, const JourneyPrefix& prefix) {
    return ensemble.forward_session(prefix_phrases(prefix)).back().probabilities;
}

EnsembleResult train_ensemble(std::span<const Session> sessions, const TrainConfig& config,
                              const PageVocabulary& vocabulary, std::size_t k,
                              std::span<const Session> eval_sessions) {
    if (k < 1) throw ArgumentError("train_ensemble: k must be at least 1");
    std::vector<std::optional<TrainResult>> results(k);
    parallel_for(k, config.workers, [&](std::size_t i) {
        TrainConfig member = config;
        member.seed = config.seed + i;
        member.workers = 1;
        results[i].emplace(train(sessions, member, vocabulary, eval_sessions));
    });
    std::vector<SequenceModel> models;
    std::vector<TrainReport> reports;
    for (auto& r : results) {
        models.push_back(std::move(r->model));
        reports.push_back(std::move(r->report));
    }
    return {Ensemble(std::move(models)), std::move(reports)};
}

}  // namespace clickpath
