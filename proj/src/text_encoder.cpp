#include "clickpath/text_encoder.hpp"

#include <cmath>

#include "clickpath/error.hpp"

namespace clickpath {

std::u32string decode_utf8(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t extra = 0;
        char32_t cp = 0;
        if (lead < 0x80) {
            cp = lead;
        } else if ((lead & 0xE0) == 0xC0) {
            extra = 1;
            cp = lead & 0x1F;
        } else if ((lead & 0xF0) == 0xE0) {
            extra = 2;
            cp = lead & 0x0F;
        } else if ((lead & 0xF8) == 0xF0) {
            extra = 3;
            cp = lead & 0x07;
        } else {
            out.push_back(U'\uFFFD');
            ++i;
            continue;
        }
        bool ok = i + extra < text.size();
        for (std::size_t k = 1; ok && k <= extra; ++k) {
            const auto b = static_cast<unsigned char>(text[i + k]);
            if ((b & 0xC0) != 0x80) ok = false;
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok) {
            out.push_back(U'\uFFFD');
            ++i;
            continue;
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

char32_t fold_case(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    return c;
}

Alphabet::Alphabet(std::string_view utf8_symbols) : symbols_(utf8_symbols) {
    codepoints_ = decode_utf8(utf8_symbols);
    if (codepoints_.empty()) throw ArgumentError("alphabet must not be empty");
    for (std::size_t i = 0; i < codepoints_.size(); ++i) {
        if (!index_.emplace(codepoints_[i], i).second) {
            throw ArgumentError("alphabet has duplicate symbol at position " + std::to_string(i));
        }
    }
}

std::optional<std::size_t> Alphabet::index_of(char32_t c) const {
    const auto it = index_.find(c);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Matrix quantize(std::string_view phrase, const Alphabet& alphabet, std::size_t max_len) {
    if (max_len < 1) throw ArgumentError("quantize: max_len must be at least 1");
    Matrix out(max_len, alphabet.size());
    const std::u32string chars = decode_utf8(phrase);
    const std::size_t n = std::min(chars.size(), max_len);
    for (std::size_t t = 0; t < n; ++t) {
        if (const auto idx = alphabet.index_of(fold_case(chars[t]))) out(t, *idx) = 1.0;
    }
    return out;
}

Var conv1d(Tape& tape, const Var& input, const Var& kernels, const Var& bias, std::size_t width) {
    return tape.relu(tape.conv1d(input, kernels, bias, width));
}

Matrix conv1d(const Matrix& input, const Matrix& kernels, const Matrix& bias, std::size_t width) {
    Tape tape(false);
    return conv1d(tape, Var::constant(input), Var::constant(kernels), Var::constant(bias), width)
        .value();
}

Var maxpool1d(Tape& tape, const Var& input, std::size_t window) {
    return tape.maxpool_rows(input, window);
}

Matrix maxpool1d(const Matrix& input, std::size_t window) {
    Tape tape(false);
    return tape.maxpool_rows(Var::constant(input), window).value();
}

std::vector<std::size_t> stage_lengths(const CnnConfig& config) {
    if (config.filters.empty()) throw ArgumentError("cnn: at least one stage required");
    if (config.kernel_width < 1 || config.pool < 1)
        throw ArgumentError("cnn: kernel width and pool must be positive");
    std::vector<std::size_t> lengths;
    std::size_t length = config.max_len;
    for (std::size_t s = 0; s < config.filters.size(); ++s) {
        if (length < config.kernel_width) {
            throw ArgumentError("cnn: stage " + std::to_string(s) + " input length " +
                                std::to_string(length) + " is shorter than kernel width " +
                                std::to_string(config.kernel_width));
        }
        length = length - config.kernel_width + 1;
        length = (length + config.pool - 1) / config.pool;
        lengths.push_back(length);
    }
    return lengths;
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      Stream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(-limit, limit);
    return m;
}

CnnEncoder::CnnEncoder(Alphabet alphabet, CnnConfig config, Stream& rng)
    : alphabet_(std::move(alphabet)), config_(std::move(config)) {
    const auto lengths = stage_lengths(config_);
    std::size_t channels = alphabet_.size();
    const std::size_t k = config_.kernel_width;
    for (std::size_t filters : config_.filters) {
        if (filters < 1) throw ArgumentError("cnn: filter count must be positive");
        stages_.push_back({Var::parameter(glorot_uniform(k * channels, filters, k * channels,
                                                         k * filters, rng)),
                           Var::parameter(Matrix(1, filters))});
        channels = filters;
    }
    output_dim_ = lengths.back() * config_.filters.back();
}

Var CnnEncoder::encode(Tape& tape, std::string_view phrase) const {
    Var x = Var::constant(quantize(phrase, alphabet_, config_.max_len));
    for (const Stage& stage : stages_) {
        x = conv1d(tape, x, stage.kernels, stage.bias, config_.kernel_width);
        x = maxpool1d(tape, x, config_.pool);
    }
    return tape.flatten(x);
}

Matrix CnnEncoder::embed(std::string_view phrase) const {
    Tape tape(false);
    return encode(tape, phrase).value();
}

std::vector<double> embed_phrase(const CnnEncoder& encoder, std::string_view phrase) {
    const Matrix m = encoder.embed(phrase);
    return {m.values().begin(), m.values().end()};
}

}  // namespace clickpath
