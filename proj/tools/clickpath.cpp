// clickpath: generate synthetic journeys, train the journey model, evaluate it,
// roll out simulated journeys and score conversion probabilities.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "clickpath/error.hpp"
#include "clickpath/journey.hpp"
#include "clickpath/markov.hpp"
#include "clickpath/random.hpp"
#include "clickpath/sequence_model.hpp"
#include "clickpath/simulator.hpp"
#include "clickpath/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clickpath;

namespace {

constexpr int kExitModuleError = 1;
constexpr int kExitUsage = 2;

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config,
                    "Flat key = value file; keys are flag names, command-line flags win");
    cmd->add_option("--seed", common.seed, "Seed for every random choice")->capture_default_str();
    cmd->add_option("--workers", common.workers, "Worker threads; never changes results")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--out-dir", common.out_dir, "Directory for artifacts (created if absent)")
        ->capture_default_str();
}

fs::path out_path(const Common& common, const std::string& name) {
    fs::create_directories(common.out_dir);
    return fs::path(common.out_dir) / name;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

// --- gen-data ----------------------------------------------------------------

struct GenDataArgs {
    std::string spec;
    std::size_t sessions = 10000;
    std::string output = "sessions.jsonl";
};

void run_gen_data(const Common& common, const GenDataArgs& args) {
    const MarkovSpec spec = load_markov_spec(args.spec);
    const auto sessions = generate_synthetic(spec, args.sessions, common.seed);
    const fs::path path = out_path(common, args.output);
    write_log(path, sessions);
    std::cout << "wrote " << sessions.size() << " sessions to " << path.string() << '\n';
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    double train_fraction = 0.8;
    std::size_t min_freq = 5;
    std::size_t ensemble = 1;
    TrainConfig config;
};

void add_model_options(CLI::App* cmd, ModelConfig& model) {
    cmd->add_option("--alphabet", model.alphabet, "Characters the phrase encoder recognises")
        ->capture_default_str();
    cmd->add_option("--max-len", model.cnn.max_len, "Characters kept per phrase")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--kernel-width", model.cnn.kernel_width, "Convolution width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--filters", model.cnn.filters, "Filter count of each convolution stage")
        ->capture_default_str();
    cmd->add_option("--pool", model.cnn.pool, "Max-pooling window")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--lstm-layers", model.lstm_layers, "Stacked LSTM layers")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--lstm-hidden", model.lstm_hidden, "Hidden units per LSTM layer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--fc-width", model.fc_width, "Fully connected layer width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--dropout", model.dropout, "Dropout rate on the fully connected layer")
        ->capture_default_str();
}

void add_dwell_options(CLI::App* cmd, DwellPolicy& dwell) {
    cmd->add_option("--dwell-unit", dwell.unit_seconds, "Seconds of dwell per page copy")
        ->capture_default_str();
    cmd->add_option("--dwell-cap", dwell.cap, "Maximum copies of one page")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

json train_config_json(const TrainArgs& args, const Common& common) {
    const TrainConfig& c = args.config;
    return {{"data", args.data},
            {"train_fraction", args.train_fraction},
            {"min_freq", args.min_freq},
            {"ensemble", args.ensemble},
            {"seed", common.seed},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"rms_decay", c.rms_decay},
            {"rms_epsilon", c.rms_epsilon},
            {"gradient_clip_norm", c.gradient_clip_norm},
            {"dwell_unit", c.dwell.unit_seconds},
            {"dwell_cap", c.dwell.cap},
            {"model",
             {{"alphabet", c.model.alphabet},
              {"max_len", c.model.cnn.max_len},
              {"kernel_width", c.model.cnn.kernel_width},
              {"filters", c.model.cnn.filters},
              {"pool", c.model.cnn.pool},
              {"lstm_layers", c.model.lstm_layers},
              {"lstm_hidden", c.model.lstm_hidden},
              {"fc_width", c.model.fc_width},
              {"dropout", c.model.dropout}}}};
}

void print_last_epoch(const TrainReport& report, const std::string& label) {
    const EpochRecord& last = report.epochs.back();
    std::cout << label << "epoch " << last.epoch << " train_loss " << last.train_loss
              << " eval_loss " << last.eval_loss << " eval_accuracy " << last.eval_accuracy << '\n';
}

void run_train(const Common& common, TrainArgs args) {
    if (args.ensemble < 1) throw ArgumentError("--ensemble must be at least 1");
    args.config.seed = common.seed;
    args.config.workers = common.workers;
    validate(args.config);

    const auto sessions = read_log(args.data);
    const auto parts = split(sessions, args.train_fraction, derive_seed(common.seed, {hash_label("split")}));
    const PageVocabulary vocab = build_vocab(parts.train, args.min_freq);
    write_log(out_path(common, "train.jsonl"), parts.train);
    write_log(out_path(common, "eval.jsonl"), parts.eval);
    open_output(out_path(common, "train_config.json")) << train_config_json(args, common).dump(2) << '\n';

    std::cout << "train " << parts.train.size() << " sessions, eval " << parts.eval.size()
              << " sessions, " << vocab.size() << " classes\n";
    if (args.ensemble == 1) {
        const TrainResult result = train(parts.train, args.config, vocab, parts.eval);
        save_model(result.model, out_path(common, "model.ckpt"));
        result.report.write_csv(out_path(common, "train_report.csv"));
        print_last_epoch(result.report, "");
        return;
    }
    const EnsembleResult result = train_ensemble(parts.train, args.config, vocab, args.ensemble, parts.eval);
    for (std::size_t i = 0; i < args.ensemble; ++i) {
        const std::string suffix = "-" + std::to_string(i);
        save_model(result.ensemble.member(i), out_path(common, "model" + suffix + ".ckpt"));
        result.reports[i].write_csv(out_path(common, "train_report" + suffix + ".csv"));
        print_last_epoch(result.reports[i], "member " + std::to_string(i) + ": ");
    }
    const Evaluation ev = evaluate(result.ensemble, parts.eval, args.config.dwell, common.workers);
    std::cout << "ensemble eval_accuracy " << ev.accuracy << " eval_loss " << ev.mean_loss << '\n';
}

// --- shared model loading ------------------------------------------------------

/// One checkpoint gives a single-model predictor; several give an ensemble.
struct LoadedPredictor {
    std::unique_ptr<Ensemble> ensemble;
    std::unique_ptr<Predictor> predictor;
};

LoadedPredictor load_predictor(const std::vector<std::string>& paths) {
    std::vector<SequenceModel> models;
    for (const auto& p : paths) models.push_back(load_model(fs::path(p)));
    LoadedPredictor out;
    out.ensemble = std::make_unique<Ensemble>(std::move(models));
    if (out.ensemble->size() == 1)
        out.predictor = std::make_unique<ModelPredictor>(out.ensemble->member(0));
    else
        out.predictor = std::make_unique<EnsemblePredictor>(*out.ensemble);
    return out;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
    std::vector<std::string> models;
    std::string data;
    DwellPolicy dwell;
};

void run_eval(const Common& common, const EvalArgs& args) {
    const auto sessions = read_log(args.data);
    if (sessions.empty()) throw ArgumentError("no sessions in " + args.data);
    std::vector<SequenceModel> models;
    for (const auto& p : args.models) models.push_back(load_model(fs::path(p)));
    const Ensemble ensemble(std::move(models));
    const Evaluation ev = ensemble.size() == 1
                              ? evaluate(ensemble.member(0), sessions, args.dwell, common.workers)
                              : evaluate(ensemble, sessions, args.dwell, common.workers);
    std::cout << std::setprecision(17) << "accuracy " << ev.accuracy << "\nloss " << ev.mean_loss
              << "\nsteps " << ev.steps << '\n';
}

// --- simulate ------------------------------------------------------------------

struct SimulateArgs {
    std::vector<std::string> models;
    std::string keywords;
    std::vector<std::string> pages;
    std::string seed_prefix;
    std::size_t steps = 30;
    std::size_t journeys = 10;
    std::string output = "journeys.txt";
};

/// "keywords+page+page" -> prefix; the first field is the keyword phrase.
JourneyPrefix parse_seed_prefix(const std::string& text) {
    JourneyPrefix prefix;
    std::size_t start = 0;
    bool first = true;
    while (true) {
        const std::size_t plus = text.find('+', start);
        const std::string field = text.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
        if (first)
            prefix.keywords = field;
        else if (!field.empty())
            prefix.pages.push_back(field);
        first = false;
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
    return prefix;
}

void run_simulate(const Common& common, const SimulateArgs& args) {
    if (args.steps < 1) throw ArgumentError("--steps must be at least 1");
    const JourneyPrefix prefix =
        args.seed_prefix.empty() ? JourneyPrefix{args.keywords, args.pages} : parse_seed_prefix(args.seed_prefix);
    const LoadedPredictor loaded = load_predictor(args.models);
    const fs::path path = out_path(common, args.output);
    std::ofstream out = open_output(path);
    for (std::size_t j = 0; j < args.journeys; ++j) {
        Stream rng(derive_seed(common.seed, {j}));
        const auto journey = rollout(*loaded.predictor, prefix, args.steps, rng);
        out << format_journey(journey, loaded.predictor->vocabulary()) << '\n';
    }
    std::cout << "wrote " << args.journeys << " journeys to " << path.string() << '\n';
}

// --- score ---------------------------------------------------------------------

struct ScoreArgs {
    std::vector<std::string> models;
    std::string prefixes;
    std::string objectives;
    std::size_t samples = 1000;
    std::size_t horizon = 30;
    std::string output = "scores.csv";
};

std::vector<ScoredPrefix> read_prefixes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    std::vector<ScoredPrefix> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(number, e.what());
        }
        try {
            ScoredPrefix p;
            p.id = j.at("id").get<std::string>();
            p.prefix.keywords = j.value("keywords", std::string{});
            p.prefix.pages = j.value("pages", std::vector<std::string>{});
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw SchemaError(number, e.what());
        }
    }
    return out;
}

std::vector<Objective> read_objectives(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    try {
        const json j = json::parse(in);
        std::vector<Objective> out;
        for (const json& o : j) out.push_back({o.at("id").get<std::string>(), o.at("pages").get<std::vector<std::string>>()});
        return out;
    } catch (const json::exception& e) {
        throw ParseError(1, std::string("objectives: ") + e.what());
    }
}

void run_score(const Common& common, const ScoreArgs& args) {
    const auto prefixes = read_prefixes(args.prefixes);
    const auto objectives = read_objectives(args.objectives);
    const LoadedPredictor loaded = load_predictor(args.models);
    const SimulationParams params{args.samples, args.horizon, common.seed, common.workers};
    const auto rows = score_batch(*loaded.predictor, prefixes, objectives, params);
    const fs::path path = out_path(common, args.output);
    std::ofstream out = open_output(path);
    write_scores_csv(out, rows);
    std::cout << "wrote " << rows.size() << " scores to " << path.string() << '\n';
}

// --- config file -----------------------------------------------------------------

/// Expands `--config FILE` into flags placed before the user's own, skipping
/// keys the user already passed so that flags win. Keys in a `[command]`
/// section apply only to that command.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    if (args.size() < 2) return args;
    const std::string& command = args[1];
    std::string config_path;
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;

    const auto given = [&](const std::string& key) {
        const std::string flag = "--" + key;
        return std::any_of(args.begin() + 2, args.end(), [&](const std::string& a) {
            return a == flag || a.starts_with(flag + "=");
        });
    };
    std::vector<std::string> injected;
    for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(config_path)) {
        if (item.name == "++" || item.name == "--") continue;  // section markers
        if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == command)) continue;
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '_', '-');
        if (key == "config" || given(key)) continue;
        injected.push_back("--" + key);
        for (const std::string& v : item.inputs) injected.push_back(v);
    }
    std::vector<std::string> out(args.begin(), args.begin() + 2);
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + 2, args.end());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Customer journey modelling: data generation, training, evaluation, simulation, scoring"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every command");

    Common common;

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write a session log sampled from a Markov chain spec");
    add_common(gen_cmd, common);
    gen_cmd->add_option("--spec", gen.spec, "Markov chain spec (JSON)")->required()->check(CLI::ExistingFile);
    gen_cmd->add_option("--sessions", gen.sessions, "Sessions to generate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen_cmd->add_option("--output", gen.output, "Log file name inside --out-dir")->capture_default_str();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model (or ensemble) on a session log");
    add_common(train_cmd, common);
    train_cmd->add_option("--data", tr.data, "Session log (JSON lines)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--train-fraction", tr.train_fraction, "Share of sessions used for training")
        ->capture_default_str();
    train_cmd->add_option("--min-freq", tr.min_freq, "Minimum page count to enter the vocabulary")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--ensemble", tr.ensemble, "Members to train (seeds seed .. seed+k-1)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--epochs", tr.config.epochs, "Passes over the training sessions")->capture_default_str();
    train_cmd->add_option("--batch-size", tr.config.batch_size, "Sessions per batch")->capture_default_str();
    train_cmd->add_option("--learning-rate", tr.config.learning_rate, "Step size")->capture_default_str();
    train_cmd->add_option("--rms-decay", tr.config.rms_decay, "Squared-gradient averaging factor")
        ->capture_default_str();
    train_cmd->add_option("--rms-epsilon", tr.config.rms_epsilon, "Step denominator offset")->capture_default_str();
    train_cmd->add_option("--clip-norm", tr.config.gradient_clip_norm, "Global gradient norm cap")
        ->capture_default_str();
    add_dwell_options(train_cmd, tr.config.dwell);
    add_model_options(train_cmd, tr.config.model);

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Print next-page accuracy and loss on a session log");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--model", ev.models, "Checkpoint; repeat for an ensemble")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", ev.data, "Session log (JSON lines)")->required()->check(CLI::ExistingFile);
    add_dwell_options(eval_cmd, ev.dwell);

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Write sampled future journeys for one journey prefix");
    add_common(sim_cmd, common);
    sim_cmd->add_option("--model", sim.models, "Checkpoint; repeat for an ensemble")
        ->required()
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--keywords", sim.keywords, "Search keywords of the prefix");
    sim_cmd->add_option("--pages", sim.pages, "Visited pages of the prefix, in order");
    sim_cmd->add_option("--seed-prefix", sim.seed_prefix, "Prefix as \"keywords+page+page\"")
        ->excludes("--keywords")
        ->excludes("--pages");
    sim_cmd->add_option("--steps", sim.steps, "Maximum simulated steps per journey")->capture_default_str();
    sim_cmd->add_option("--journeys", sim.journeys, "Journeys to sample")->capture_default_str();
    sim_cmd->add_option("--output", sim.output, "Trace file name inside --out-dir")->capture_default_str();

    ScoreArgs sc;
    auto* score_cmd = app.add_subcommand("score", "Estimate conversion probability per prefix and objective");
    add_common(score_cmd, common);
    score_cmd->add_option("--model", sc.models, "Checkpoint; repeat for an ensemble")
        ->required()
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--prefixes", sc.prefixes, "JSON lines of {id, keywords, pages}")
        ->required()
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--objectives", sc.objectives, "JSON array of {id, pages}")
        ->required()
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--samples", sc.samples, "Rollouts per prefix")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    score_cmd->add_option("--horizon", sc.horizon, "Maximum simulated steps")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    score_cmd->add_option("--output", sc.output, "CSV file name inside --out-dir")->capture_default_str();

    try {
        const std::vector<std::string> raw(argv, argv + argc);
        if (raw.size() > 1 && !raw[1].starts_with("-") && app.get_subcommand_no_throw(raw[1]) == nullptr) {
            std::cerr << "usage error: unknown command '" << raw[1]
                      << "' (expected gen-data, train, eval, simulate or score)\n";
            return kExitUsage;
        }
        std::vector<std::string> expanded = expand_config(raw);
        std::vector<char*> pointers;
        for (std::string& s : expanded) pointers.push_back(s.data());
        app.parse(static_cast<int>(pointers.size()), pointers.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\nrun with --help for usage\n";
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) run_gen_data(common, gen);
        if (train_cmd->parsed()) run_train(common, tr);
        if (eval_cmd->parsed()) run_eval(common, ev);
        if (sim_cmd->parsed()) run_simulate(common, sim);
        if (score_cmd->parsed()) run_score(common, sc);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitModuleError;
    }
    return 0;
}
