#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clickpath/journey.hpp"
#include "clickpath/random.hpp"
#include "clickpath/tape.hpp"
#include "clickpath/text_encoder.hpp"

namespace clickpath {

struct ModelConfig {
    std::string alphabet = std::string(Alphabet::kDefaultSymbols);
    CnnConfig cnn;
    std::size_t lstm_layers = 2;
    std::size_t lstm_hidden = 128;
    std::size_t fc_width = 256;
    /// Dropout on the fully connected layer, training only.
    double dropout = 0.5;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// LSTM layer with fused gate weights; column blocks are
/// [input | forget | output | candidate], each `hidden` wide.
struct LstmLayer {
    Var input_weights;      // input_dim x 4H
    Var recurrent_weights;  // H x 4H
    Var bias;               // 1 x 4H

    std::size_t input_dim() const { return input_weights.rows(); }
    std::size_t hidden() const { return recurrent_weights.rows(); }

    /// Uniform variance-preserving weights, forget-gate bias 1, other biases 0.
    static LstmLayer create(std::size_t input_dim, std::size_t hidden, Stream& rng);
};

struct LstmCellState {
    Var h;  // batch x H
    Var c;  // batch x H
};

/// Per-layer recurrent state.
using LstmState = std::vector<LstmCellState>;

/// i, f, o = sigmoid(.), g = tanh(.); c' = f*c + i*g; h' = o*tanh(c').
/// Throws DimensionError when x or the state do not match the layer.
LstmCellState lstm_step(Tape& tape, const LstmLayer& layer, const Var& x,
                        const LstmCellState& state);

struct StepPrediction {
    std::size_t step = 0;
    std::vector<double> probabilities;
};

/// Character CNN phrase embedder feeding stacked LSTMs, a ReLU fully
/// connected layer and a softmax over every vocabulary page.
///
/// Parameters are shared handles, so the model is move-only.
class SequenceModel {
public:
    SequenceModel(ModelConfig config, PageVocabulary vocabulary, std::uint64_t seed);

    SequenceModel(SequenceModel&&) noexcept = default;
    SequenceModel& operator=(SequenceModel&&) noexcept = default;
    SequenceModel(const SequenceModel&) = delete;
    SequenceModel& operator=(const SequenceModel&) = delete;

    const ModelConfig& config() const noexcept { return config_; }
    const PageVocabulary& vocabulary() const noexcept { return vocabulary_; }
    const CnnEncoder& encoder() const noexcept { return encoder_; }
    const std::vector<LstmLayer>& layers() const noexcept { return layers_; }
    std::size_t num_classes() const noexcept { return vocabulary_.size(); }
    std::size_t embedding_dim() const noexcept { return encoder_.output_dim(); }

    /// Every trainable parameter with a stable dotted name, in a fixed order.
    std::vector<std::pair<std::string, Var>> named_parameters() const;
    std::vector<Var> parameters() const;

    LstmState initial_state(std::size_t batch) const;

    /// Advances `state` by one step on embedded inputs x (batch x D) and
    /// returns next-page probabilities (batch x N). Dropout is applied only
    /// when `dropout_rng` is given.
    Var step(Tape& tape, LstmState& state, const Var& x, Stream* dropout_rng = nullptr) const;

    Var embed(Tape& tape, std::string_view phrase) const { return encoder_.encode(tape, phrase); }
    Matrix embed(std::string_view phrase) const { return encoder_.embed(phrase); }

    /// One prediction per input phrase (keywords first, then pages), each
    /// predicting the page that follows it. Throws ArgumentError when empty.
    std::vector<StepPrediction> forward_session(std::span<const std::string> phrases) const;
    std::vector<StepPrediction> forward_embedded(std::span<const Matrix> embeddings) const;

    /// Distribution over all pages (NULL_PAGE included) after the prefix.
    std::vector<double> predict_next(const JourneyPrefix& prefix) const;

private:
    ModelConfig config_;
    PageVocabulary vocabulary_;
    CnnEncoder encoder_;
    std::vector<LstmLayer> layers_;
    Var fc_weights_;
    Var fc_bias_;
    Var out_weights_;
    Var out_bias_;
};

/// Phrases fed to the model for a journey prefix: keywords, then each page.
std::vector<std::string> prefix_phrases(const JourneyPrefix& prefix);

/// Model inputs and next-page targets for one session after dwell
/// replication: inputs are [keywords, p_1 .. p_T], targets [p_1 .. p_T, NULL_PAGE].
struct EncodedSession {
    std::vector<std::string> inputs;
    std::vector<std::size_t> targets;
};

EncodedSession encode_session(const Session& session, const PageVocabulary& vocabulary,
                              const DwellPolicy& dwell);

/// Sum over steps of -log(max(p_t[target_t], floor)) against the session's
/// expanded targets. Throws ArgumentError on a length mismatch.
double session_loss(std::span<const StepPrediction> predictions, const Session& session,
                    const PageVocabulary& vocabulary, const DwellPolicy& dwell = {});

// --- checkpoints ------------------------------------------------------------

/// Versioned binary container: magic, format version, JSON header (config,
/// alphabet, vocabulary, parameter shapes) and raw IEEE-754 little-endian
/// parameter values. Loading reproduces predictions bit for bit.
void save_model(const SequenceModel& model, std::ostream& out);
void save_model(const SequenceModel& model, const std::filesystem::path& path);
SequenceModel load_model(std::istream& in);
SequenceModel load_model(const std::filesystem::path& path);

}  // namespace clickpath
