#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clickpath/matrix.hpp"
#include "clickpath/random.hpp"
#include "clickpath/tape.hpp"

namespace clickpath {

/// Ordered set of characters a phrase is quantized against.
class Alphabet {
public:
    /// Latin letters, digits, space and the punctuation found in URL-style page names.
    static constexpr std::string_view kDefaultSymbols = "abcdefghijklmnopqrstuvwxyz0123456789 -_/.'";

    Alphabet() : Alphabet(kDefaultSymbols) {}
    /// Throws ArgumentError on duplicate or empty symbol sets.
    explicit Alphabet(std::string_view utf8_symbols);

    std::size_t size() const noexcept { return codepoints_.size(); }
    std::optional<std::size_t> index_of(char32_t c) const;
    const std::string& symbols() const noexcept { return symbols_; }

    friend bool operator==(const Alphabet& a, const Alphabet& b) { return a.symbols_ == b.symbols_; }

private:
    std::string symbols_;
    std::u32string codepoints_;
    std::unordered_map<char32_t, std::size_t> index_;
};

/// Decodes UTF-8; malformed bytes become U+FFFD.
std::u32string decode_utf8(std::string_view text);

/// Lowercases ASCII and Latin-1 capitals; other code points pass through.
char32_t fold_case(char32_t c);

/// One-hot character matrix of shape max_len x alphabet.size(). Characters are
/// case-folded; positions past the phrase and characters outside the alphabet
/// are zero rows; anything beyond max_len is dropped.
Matrix quantize(std::string_view phrase, const Alphabet& alphabet, std::size_t max_len);

/// Valid convolution followed by ReLU.
Matrix conv1d(const Matrix& input, const Matrix& kernels, const Matrix& bias, std::size_t width);
Var conv1d(Tape& tape, const Var& input, const Var& kernels, const Var& bias, std::size_t width);

Matrix maxpool1d(const Matrix& input, std::size_t window);
Var maxpool1d(Tape& tape, const Var& input, std::size_t window);

struct CnnConfig {
    std::size_t max_len = 64;
    std::size_t kernel_width = 3;
    /// Filter count per convolution + pooling stage.
    std::vector<std::size_t> filters = {64, 64};
    std::size_t pool = 4;

    friend bool operator==(const CnnConfig&, const CnnConfig&) = default;
};

/// Rows left after each stage's convolution and pooling, starting from max_len.
/// Throws ArgumentError if any stage input is shorter than the kernel.
std::vector<std::size_t> stage_lengths(const CnnConfig& config);

/// Character-level convolutional phrase encoder: quantize, then
/// (conv + ReLU, max-pool) per stage, then flatten.
class CnnEncoder {
public:
    struct Stage {
        Var kernels;  // (kernel_width * in_channels) x filters
        Var bias;     // 1 x filters
    };

    /// Kernels are drawn uniformly in +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
    CnnEncoder(Alphabet alphabet, CnnConfig config, Stream& rng);

    const Alphabet& alphabet() const noexcept { return alphabet_; }
    const CnnConfig& config() const noexcept { return config_; }
    std::size_t output_dim() const noexcept { return output_dim_; }
    std::vector<Stage>& stages() noexcept { return stages_; }
    const std::vector<Stage>& stages() const noexcept { return stages_; }

    /// Taped encoding, 1 x output_dim.
    Var encode(Tape& tape, std::string_view phrase) const;
    /// Inference encoding, 1 x output_dim.
    Matrix embed(std::string_view phrase) const;

private:
    Alphabet alphabet_;
    CnnConfig config_;
    std::vector<Stage> stages_;
    std::size_t output_dim_ = 0;
};

std::vector<double> embed_phrase(const CnnEncoder& encoder, std::string_view phrase);

/// Glorot-uniform initialised matrix.
Matrix glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      Stream& rng);

}  // namespace clickpath
