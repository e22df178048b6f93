#include "clickpath/sequence_model.hpp"

#include "clickpath/error.hpp"

namespace clickpath {

LstmLayer LstmLayer::create(std::size_t input_dim, std::size_t hidden, Stream& rng) {
    LstmLayer layer;
    layer.input_weights =
        Var::parameter(glorot_uniform(input_dim, 4 * hidden, input_dim, hidden, rng));
    layer.recurrent_weights =
        Var::parameter(glorot_uniform(hidden, 4 * hidden, hidden, hidden, rng));
    Matrix bias(1, 4 * hidden);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
    layer.bias = Var::parameter(std::move(bias));
    return layer;
}

LstmCellState lstm_step(Tape& tape, const LstmLayer& layer, const Var& x,
                        const LstmCellState& state) {
    const std::size_t hidden = layer.hidden();
    if (x.cols() != layer.input_dim()) {
        throw DimensionError("lstm_step: input " + x.value().shape_string() +
                             " for a layer expecting " + std::to_string(layer.input_dim()) +
                             " features");
    }
    if (state.h.rows() != x.rows() || state.h.cols() != hidden || !state.c.value().same_shape(state.h.value())) {
        throw DimensionError("lstm_step: state " + state.h.value().shape_string() + "/" +
                             state.c.value().shape_string() + " for input " +
                             x.value().shape_string() + " and hidden size " +
                             std::to_string(hidden));
    }
    const Var gates = tape.add_row(tape.add(tape.matmul(x, layer.input_weights),
                                            tape.matmul(state.h, layer.recurrent_weights)),
                                   layer.bias);
    const Var input_gate = tape.sigmoid(tape.columns(gates, 0, hidden));
    const Var forget_gate = tape.sigmoid(tape.columns(gates, hidden, hidden));
    const Var output_gate = tape.sigmoid(tape.columns(gates, 2 * hidden, hidden));
    const Var candidate = tape.tanh(tape.columns(gates, 3 * hidden, hidden));
    LstmCellState next;
    next.c = tape.add(tape.mul(forget_gate, state.c), tape.mul(input_gate, candidate));
    next.h = tape.mul(output_gate, tape.tanh(next.c));
    return next;
}

namespace {

Stream init_stream(std::uint64_t seed) { return Stream(derive_seed(seed, {hash_label("init")})); }

}  // namespace

SequenceModel::SequenceModel(ModelConfig config, PageVocabulary vocabulary, std::uint64_t seed)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)),
      encoder_([&] {
          Stream rng = init_stream(seed);
          return CnnEncoder(Alphabet(config_.alphabet), config_.cnn, rng);
      }()) {
    if (config_.lstm_layers < 1 || config_.lstm_hidden < 1 || config_.fc_width < 1)
        throw ArgumentError("model: LSTM layers, hidden size and FC width must be positive");
    if (!(config_.dropout >= 0.0 && config_.dropout < 1.0))
        throw ArgumentError("model: dropout rate must be in [0, 1)");
    // The encoder consumed the head of the init stream; the rest of the
    // network draws from a sibling stream.
    Stream rng(derive_seed(seed, {hash_label("init"), 1}));
    std::size_t in = encoder_.output_dim();
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
        layers_.push_back(LstmLayer::create(in, config_.lstm_hidden, rng));
        in = config_.lstm_hidden;
    }
    const std::size_t n = vocabulary_.size();
    fc_weights_ = Var::parameter(glorot_uniform(in, config_.fc_width, in, config_.fc_width, rng));
    fc_bias_ = Var::parameter(Matrix(1, config_.fc_width));
    out_weights_ = Var::parameter(glorot_uniform(config_.fc_width, n, config_.fc_width, n, rng));
    out_bias_ = Var::parameter(Matrix(1, n));
}

std::vector<std::pair<std::string, Var>> SequenceModel::named_parameters() const {
    std::vector<std::pair<std::string, Var>> out;
    const auto& stages = encoder_.stages();
    for (std::size_t s = 0; s < stages.size(); ++s) {
        out.emplace_back("cnn." + std::to_string(s) + ".kernels", stages[s].kernels);
        out.emplace_back("cnn." + std::to_string(s) + ".bias", stages[s].bias);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string prefix = "lstm." + std::to_string(l) + ".";
        out.emplace_back(prefix + "input_weights", layers_[l].input_weights);
        out.emplace_back(prefix + "recurrent_weights", layers_[l].recurrent_weights);
        out.emplace_back(prefix + "bias", layers_[l].bias);
    }
    out.emplace_back("fc.weights", fc_weights_);
    out.emplace_back("fc.bias", fc_bias_);
    out.emplace_back("out.weights", out_weights_);
    out.emplace_back("out.bias", out_bias_);
    return out;
}

std::vector<Var> SequenceModel::parameters() const {
    std::vector<Var> out;
    for (auto& [name, v] : named_parameters()) out.push_back(v);
    return out;
}

LstmState SequenceModel::initial_state(std::size_t batch) const {
    LstmState state;
    for (const LstmLayer& layer : layers_) {
        state.push_back({Var::constant(Matrix(batch, layer.hidden())),
                         Var::constant(Matrix(batch, layer.hidden()))});
    }
    return state;
}

Var SequenceModel::step(Tape& tape, LstmState& state, const Var& x, Stream* dropout_rng) const {
    if (state.size() != layers_.size()) throw DimensionError("step: state has wrong layer count");
    Var in = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        state[l] = lstm_step(tape, layers_[l], in, state[l]);
        in = state[l].h;
    }
    Var hidden = tape.relu(tape.add_row(tape.matmul(in, fc_weights_), fc_bias_));
    if (dropout_rng != nullptr && config_.dropout > 0.0) {
        const double keep = 1.0 - config_.dropout;
        Matrix mask(hidden.rows(), hidden.cols());
        for (double& m : mask.values()) m = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        hidden = tape.mul(hidden, Var::constant(std::move(mask)));
    }
    return tape.softmax(tape.add_row(tape.matmul(hidden, out_weights_), out_bias_));
}

std::vector<StepPrediction> SequenceModel::forward_embedded(std::span<const Matrix> embeddings) const {
    if (embeddings.empty()) throw ArgumentError("forward_session: no inputs");
    Tape tape(false);
    LstmState state = initial_state(1);
    std::vector<StepPrediction> out;
    out.reserve(embeddings.size());
    for (std::size_t t = 0; t < embeddings.size(); ++t) {
        const Var probs = step(tape, state, Var::constant(embeddings[t]));
        const auto values = probs.value().values();
        out.push_back({t, std::vector<double>(values.begin(), values.end())});
    }
    return out;
}

std::vector<StepPrediction> SequenceModel::forward_session(std::span<const std::string> phrases) const {
    if (phrases.empty()) throw ArgumentError("forward_session: no inputs");
    std::vector<Matrix> embeddings;
    embeddings.reserve(phrases.size());
    for (const std::string& p : phrases) embeddings.push_back(embed(p));
    return forward_embedded(embeddings);
}

std::vector<double> SequenceModel::predict_next(const JourneyPrefix& prefix) const {
    const auto phrases = prefix_phrases(prefix);
    return forward_session(phrases).back().probabilities;
}

std::vector<std::string> prefix_phrases(const JourneyPrefix& prefix) {
    std::vector<std::string> phrases;
    phrases.reserve(prefix.pages.size() + 1);
    phrases.push_back(prefix.keywords);
    phrases.insert(phrases.end(), prefix.pages.begin(), prefix.pages.end());
    return phrases;
}

EncodedSession encode_session(const Session& session, const PageVocabulary& vocabulary,
                              const DwellPolicy& dwell) {
    const auto expanded = replicate_dwell(session, dwell);
    EncodedSession enc;
    enc.inputs.reserve(expanded.size());
    enc.inputs.push_back(session.keywords);
    enc.inputs.insert(enc.inputs.end(), expanded.begin(), expanded.end() - 1);
    enc.targets.reserve(expanded.size());
    for (const std::string& page : expanded) enc.targets.push_back(vocabulary.index_of(page));
    return enc;
}

double session_loss(std::span<const StepPrediction> predictions, const Session& session,
                    const PageVocabulary& vocabulary, const DwellPolicy& dwell) {
    const EncodedSession enc = encode_session(session, vocabulary, dwell);
    if (predictions.size() != enc.targets.size()) {
        throw ArgumentError("session_loss: " + std::to_string(predictions.size()) +
                            " predictions for " + std::to_string(enc.targets.size()) +
                            " transitions");
    }
    double loss = 0.0;
    for (std::size_t t = 0; t < predictions.size(); ++t) {
        if (predictions[t].probabilities.size() != vocabulary.size())
            throw ArgumentError("session_loss: prediction width does not match vocabulary");
        loss += cross_entropy(predictions[t].probabilities, enc.targets[t]);
    }
    return loss;
}

}  // namespace clickpath
