#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "clickpath/error.hpp"
#include "clickpath/sequence_model.hpp"
#include "json.hpp"

namespace clickpath {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'C', 'L', 'K', 'P', 'A', 'T', 'H', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw CheckpointError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

json config_to_json(const ModelConfig& c) {
    return {{"alphabet", c.alphabet},
            {"max_len", c.cnn.max_len},
            {"kernel_width", c.cnn.kernel_width},
            {"filters", c.cnn.filters},
            {"pool", c.cnn.pool},
            {"lstm_layers", c.lstm_layers},
            {"lstm_hidden", c.lstm_hidden},
            {"fc_width", c.fc_width},
            {"dropout", c.dropout}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.alphabet = j.at("alphabet").get<std::string>();
    c.cnn.max_len = j.at("max_len").get<std::size_t>();
    c.cnn.kernel_width = j.at("kernel_width").get<std::size_t>();
    c.cnn.filters = j.at("filters").get<std::vector<std::size_t>>();
    c.cnn.pool = j.at("pool").get<std::size_t>();
    c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.fc_width = j.at("fc_width").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

}  // namespace

void save_model(const SequenceModel& model, std::ostream& out) {
    const auto params = model.named_parameters();
    const auto& vocab = model.vocabulary();
    std::vector<std::string> pages(vocab.names().begin(), vocab.names().begin() + static_cast<std::ptrdiff_t>(vocab.page_count()));
    json shapes = json::array();
    for (const auto& [name, v] : params)
        shapes.push_back({{"name", name}, {"rows", v.rows()}, {"cols", v.cols()}});
    const json header = {{"config", config_to_json(model.config())},
                         {"vocabulary", {{"pages", pages}, {"min_freq", vocab.min_freq()}}},
                         {"parameters", shapes}};
    const std::string text = header.dump();
    out.write(kMagic, sizeof kMagic);
    write_u64(out, kFormatVersion);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, v] : params)
        for (double x : v.value().values()) write_u64(out, std::bit_cast<std::uint64_t>(x));
    if (!out) throw CheckpointError("failed writing checkpoint");
}

void save_model(const SequenceModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    save_model(model, out);
}

SequenceModel load_model(std::istream& in) {
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CheckpointError("not a clickpath checkpoint");
    const std::uint64_t version = read_u64(in);
    if (version != kFormatVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t length = read_u64(in);
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length)))
        throw CheckpointError("checkpoint truncated");
    json header;
    try {
        header = json::parse(text);
        ModelConfig config = config_from_json(header.at("config"));
        PageVocabulary vocab(header.at("vocabulary").at("pages").get<std::vector<std::string>>(),
                             header.at("vocabulary").at("min_freq").get<std::size_t>());
        SequenceModel model(std::move(config), std::move(vocab), 0);
        auto params = model.named_parameters();
        const json& shapes = header.at("parameters");
        if (shapes.size() != params.size()) throw CheckpointError("parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& [name, v] = params[i];
            if (shapes[i].at("name").get<std::string>() != name ||
                shapes[i].at("rows").get<std::size_t>() != v.rows() ||
                shapes[i].at("cols").get<std::size_t>() != v.cols())
                throw CheckpointError("parameter '" + name + "' does not match the configuration");
            for (double& x : v.mutable_value().values()) x = std::bit_cast<double>(read_u64(in));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
    }
}

SequenceModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    return load_model(in);
}

}  // namespace clickpath
