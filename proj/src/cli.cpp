#include "minusformer/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "minusformer/errors.hpp"
#include "minusformer/metrics.hpp"

namespace minusformer::cli {

namespace fs = std::filesystem;

std::string to_string(Command c) {
    switch (c) {
        case Command::train: return "train";
        case Command::eval: return "eval";
        case Command::ablate: return "ablate";
        case Command::decompose: return "decompose";
        case Command::simulate: return "simulate";
        case Command::synth: return "synth";
    }
    return "?";
}

namespace {

// Flag name (without dashes) -> canonical config key.
struct FlagDef {
    const char* flag;
    const char* key;
    const char* help;
};

constexpr FlagDef kFlags[] = {
    {"input-len", "input_len", "input window length I"},
    {"pred-len", "pred_len", "prediction length O"},
    {"embed-dim", "embed_dim", "embedding dimension E"},
    {"blocks", "n_blocks", "number of blocks L"},
    {"block-out-len", "block_out_len", "per-block output length H (0 = pred-len)"},
    {"heads", "heads", "attention heads"},
    {"ffn-hidden", "ffn_hidden", "feed-forward hidden width (0 = 4E)"},
    {"dropout", "dropout_rate", "dropout rate"},
    {"delta", "delta", "Dirac switch on the attention residual (0 or 1)"},
    {"gate", "gate_enabled", "enable the sigmoid gates (true/false)"},
    {"norm", "norm_enabled", "enable LayerNorm (true/false)"},
    {"input-sign", "input_sign", "input stream combination (+/-)"},
    {"output-sign", "output_sign", "output stream combination (+/-)"},
    {"lr", "learning_rate", "Adam learning rate"},
    {"batch-size", "batch_size", "mini-batch size"},
    {"epochs", "max_epochs", "maximum epochs"},
    {"patience", "patience", "early-stopping patience"},
    {"train-frac", "train_frac", "training fraction"},
    {"val-frac", "val_frac", "validation fraction"},
    {"test-frac", "test_frac", "test fraction"},
    {"kind", "kind", "synthetic series kind (sine_mix, trend_sine, random_walk)"},
    {"length", "length", "synthetic series length"},
    {"variates", "variates", "synthetic series variates"},
    {"noise", "noise_std", "synthetic noise std"},
    {"L", "L", "simulation block counts (comma separated)"},
    {"alpha", "alpha", "simulation block weight"},
    {"nu", "nu", "simulation block-error variance"},
    {"mu", "mu", "simulation pairwise covariances (comma separated)"},
    {"trials", "trials", "simulation trials"},
};

std::string canonical_key(std::string key) {
    for (auto& ch : key) {
        if (ch == '-') ch = '_';
    }
    for (const auto& f : kFlags) {
        std::string flag = f.flag;
        for (auto& ch : flag) {
            if (ch == '-') ch = '_';
        }
        if (key == flag) return f.key;
    }
    return key;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
        throw InvalidValue(key + ": '" + text + "' is not a number");
    }
    return v;
}

std::size_t parse_size(const std::string& key, const std::string& text, bool allow_zero = false) {
    const double v = parse_double(key, text);
    if (v < 0 || v != std::floor(v) || (!allow_zero && v == 0)) {
        throw InvalidValue(key + ": '" + text + "' must be a " + (allow_zero ? "non-negative" : "positive") +
                           " integer");
    }
    return static_cast<std::size_t>(v);
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& text, F parse_one) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_one(trim(item)));
    return out;
}

// Applies one canonical key. Throws UnknownFlag or InvalidValue.
void apply(RunSpec& spec, const std::string& raw_key, const std::string& value) {
    const std::string key = canonical_key(raw_key);
    try {
        if (key == "data") spec.data_path = value;
        else if (key == "out") spec.out_dir = value;
        else if (key == "checkpoint") spec.checkpoint_path = value;
        else if (key == "window") spec.window_index = parse_size(key, value, true);
        else if (key == "seed") {
            spec.seed = parse_size(key, value, true);
            spec.model.seed = spec.seed;
            spec.train.seed = spec.seed;
        } else if (key == "kind") spec.synth.kind = parse_synth_kind(value);
        else if (key == "length") spec.synth.length = parse_size(key, value);
        else if (key == "variates") spec.synth.variates = parse_size(key, value);
        else if (key == "noise_std") {
            spec.synth.noise_std = parse_double(key, value);
            if (spec.synth.noise_std < 0) throw InvalidValue("noise_std must be non-negative");
        } else if (key == "L") {
            spec.simulate.blocks = parse_list<std::size_t>(value, [&](const std::string& s) { return parse_size(key, s); });
        } else if (key == "alpha") spec.simulate.alpha = parse_double(key, value);
        else if (key == "nu") spec.simulate.nu = parse_double(key, value);
        else if (key == "mu") {
            spec.simulate.mus = parse_list<double>(value, [&](const std::string& s) { return parse_double(key, s); });
        } else if (key == "trials") spec.simulate.trials = parse_size(key, value);
        else if (!spec.model.set(key, value) && !spec.train.set(key, value)) {
            throw UnknownFlag("unknown setting '" + raw_key + "'");
        }
    } catch (const InvalidConfig& e) {
        throw InvalidValue(raw_key + ": " + e.what());
    } catch (const ParseError& e) {
        throw InvalidValue(raw_key + ": " + e.what());
    }
}

void load_config_file(RunSpec& spec, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingConfig("cannot read config file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidValue(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        apply(spec, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunSpec::echo() const {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("command", to_string(command));
    kv.emplace_back("version", MINUSFORMER_VERSION);
    kv.emplace_back("seed", std::to_string(seed));
    kv.emplace_back("data", data_path.empty() ? "<synthetic>" : data_path);
    if (!checkpoint_path.empty()) kv.emplace_back("checkpoint", checkpoint_path);
    kv.emplace_back("window", std::to_string(window_index));
    for (auto& p : model.to_key_values()) kv.push_back(p);
    for (auto& p : train.to_key_values()) kv.push_back(p);
    kv.emplace_back("kind", minusformer::to_string(synth.kind));
    kv.emplace_back("length", std::to_string(synth.length));
    kv.emplace_back("variates", std::to_string(synth.variates));
    std::ostringstream os;
    os.precision(17);
    os << synth.noise_std;
    kv.emplace_back("noise_std", os.str());
    std::string blocks, mus;
    for (auto b : simulate.blocks) blocks += (blocks.empty() ? "" : ",") + std::to_string(b);
    for (auto m : simulate.mus) {
        std::ostringstream ms;
        ms.precision(17);
        ms << m;
        mus += (mus.empty() ? "" : ",") + ms.str();
    }
    kv.emplace_back("L", blocks);
    kv.emplace_back("mu", mus);
    std::ostringstream an;
    an.precision(17);
    an << simulate.alpha;
    kv.emplace_back("alpha", an.str());
    std::ostringstream nn;
    nn.precision(17);
    nn << simulate.nu;
    kv.emplace_back("nu", nn.str());
    kv.emplace_back("trials", std::to_string(simulate.trials));
    return kv;
}

RunSpec parse_args(const std::vector<std::string>& argv) {
    if (argv.empty()) throw InvalidValue("empty argument vector");
    CLI::App app{"Minusformer forecasting toolkit", "minusformer"};
    app.require_subcommand(1);

    struct Bound {
        std::string config, data, out, checkpoint, seed, window;
        std::map<std::string, std::string> values;
    } bound;

    const std::pair<Command, const char*> commands[] = {
        {Command::train, "train a model and write checkpoint + run report"},
        {Command::eval, "evaluate a checkpoint on the test split"},
        {Command::ablate, "train the eight sign/gate variants"},
        {Command::decompose, "export per-block outputs for one test window"},
        {Command::simulate, "Monte-Carlo check of the subtraction variance bound"},
        {Command::synth, "write a synthetic dataset"},
    };
    std::map<CLI::App*, Command> by_app;
    std::vector<std::pair<CLI::App*, std::vector<std::pair<CLI::Option*, std::string>>>> options;
    for (const auto& [cmd, help] : commands) {
        CLI::App* sub = app.add_subcommand(to_string(cmd), help);
        by_app[sub] = cmd;
        std::vector<std::pair<CLI::Option*, std::string>> opts;
        opts.emplace_back(sub->add_option("--config", bound.config, "key=value config file"), "config");
        opts.emplace_back(sub->add_option("--data", bound.data, "input CSV (default: synthetic)"), "data");
        opts.emplace_back(sub->add_option("--out", bound.out, "output directory"), "out");
        opts.emplace_back(sub->add_option("--seed", bound.seed, "seed for every random stream"), "seed");
        opts.emplace_back(sub->add_option("--checkpoint", bound.checkpoint, "checkpoint file"), "checkpoint");
        opts.emplace_back(sub->add_option("--window", bound.window, "test window index for decompose"), "window");
        for (const auto& f : kFlags) {
            opts.emplace_back(sub->add_option(std::string("--") + f.flag, bound.values[f.key], f.help), f.key);
        }
        options.emplace_back(sub, std::move(opts));
    }

    std::vector<std::string> args(argv.begin() + 1, argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ExtrasError& e) {
        throw UnknownFlag(e.what());
    } catch (const CLI::CallForHelp& e) {
        std::ostringstream text;
        app.exit(e, text, text);
        throw HelpRequested{text.str()};
    } catch (const CLI::RequiredError& e) {
        throw InvalidValue(e.what());
    } catch (const CLI::ParseError& e) {
        throw InvalidValue(e.what());
    }

    RunSpec spec;
    CLI::App* chosen = app.get_subcommands().front();
    spec.command = by_app.at(chosen);
    const auto& opts = std::find_if(options.begin(), options.end(), [&](const auto& p) { return p.first == chosen; })->second;

    // defaults < config file < flags
    auto given = [&](const std::string& key) {
        for (const auto& [opt, k] : opts) {
            if (k == key) return opt->count() > 0;
        }
        return false;
    };
    if (given("config")) {
        spec.config_path = bound.config;
        load_config_file(spec, bound.config);
    }
    auto set_flag = [&](const std::string& key, const std::string& value) {
        spec.overrides[key] = value;
        apply(spec, key, value);
    };
    // seed first so that explicit per-stream keys could follow it
    if (given("seed")) set_flag("seed", bound.seed);
    if (given("data")) set_flag("data", bound.data);
    if (given("out")) set_flag("out", bound.out);
    if (given("checkpoint")) set_flag("checkpoint", bound.checkpoint);
    if (given("window")) set_flag("window", bound.window);
    for (const auto& f : kFlags) {
        if (given(f.key)) set_flag(f.key, bound.values[f.key]);
    }
    return spec;
}

std::vector<AblationVariant> ablation_grid() {
    std::vector<AblationVariant> grid;
    for (Sign in : {Sign::minus, Sign::plus})
        for (Sign out : {Sign::minus, Sign::plus})
            for (bool gate : {true, false}) grid.push_back({in, out, gate});
    return grid;
}

namespace {

SeriesTable load_data(const RunSpec& spec) {
    if (!spec.data_path.empty()) return load_csv(spec.data_path);
    return synth_series(spec.synth.kind, spec.synth.length, spec.synth.variates, spec.synth.noise_std, spec.seed);
}

void write_echo(const RunSpec& spec) {
    std::ofstream os(fs::path(spec.out_dir) / "config.txt");
    for (const auto& [k, v] : spec.echo()) os << k << '=' << v << '\n';
}

std::ofstream open_out(const RunSpec& spec, const std::string& name) {
    std::ofstream os(fs::path(spec.out_dir) / name);
    if (!os) throw IoError("cannot write " + (fs::path(spec.out_dir) / name).string());
    return os;
}

MinusformerConfig model_config_for(const RunSpec& spec, const SeriesTable& table) {
    MinusformerConfig cfg = spec.model;
    cfg.n_variates = table.variates();
    return cfg;
}

bool finite(const MetricsReport& r) { return std::isfinite(r.mse) && std::isfinite(r.mae); }

int run_train(const RunSpec& spec, std::ostream& out) {
    const SeriesTable table = load_data(spec);
    Minusformer model(model_config_for(spec, table));
    const auto& c = model.config();
    const DataSplits data = prepare_splits(table, {c.input_len, c.pred_len, 1}, spec.train.split);
    const RunReport report = train_loop(model, data, spec.train);
    save_checkpoint(model, (fs::path(spec.out_dir) / "checkpoint.txt").string());
    auto rep = open_out(spec, "run_report.txt");
    write_run_report(rep, report);
    auto met = open_out(spec, "metrics.csv");
    write_metrics_header(met, "split");
    write_metrics_row(met, report.test, "test");
    out << "trained " << report.epochs.size() << " epochs, best epoch " << report.best_epoch << ", test mse "
        << report.test.mse << ", mae " << report.test.mae << '\n';
    if (!finite(report.test)) throw Error("train/NonFinite", "test metrics are not finite");
    return 0;
}

int run_eval(const RunSpec& spec, std::ostream& out) {
    if (spec.checkpoint_path.empty()) throw MissingConfig("eval needs --checkpoint");
    const SeriesTable table = load_data(spec);
    const Minusformer model = load_checkpoint(spec.checkpoint_path);
    const auto& c = model.config();
    if (c.n_variates != table.variates()) throw ShapeMismatch("checkpoint variates differ from the data");
    const DataSplits data = prepare_splits(table, {c.input_len, c.pred_len, 1}, spec.train.split);
    auto met = open_out(spec, "metrics.csv");
    write_metrics_header(met, "split");
    const auto val = evaluate_split(model, data.val, spec.train.batch_size);
    const auto test = evaluate_split(model, data.test, spec.train.batch_size);
    write_metrics_row(met, val, "val");
    write_metrics_row(met, test, "test");
    out << "test mse " << test.mse << ", mae " << test.mae << '\n';
    return 0;
}

int run_ablate(const RunSpec& spec, std::ostream& out) {
    const SeriesTable table = load_data(spec);
    auto met = open_out(spec, "ablation.csv");
    write_metrics_header(met, "input_sign,output_sign,gate,best_epoch");
    bool ok = true;
    for (const auto& v : ablation_grid()) {
        MinusformerConfig cfg = model_config_for(spec, table);
        cfg.input_sign = v.input_sign;
        cfg.output_sign = v.output_sign;
        cfg.gate_enabled = v.gate;
        Minusformer model(cfg);
        const DataSplits data = prepare_splits(table, {cfg.input_len, cfg.pred_len, 1}, spec.train.split);
        const RunReport report = train_loop(model, data, spec.train);
        const std::string lead = to_string(v.input_sign) + "X," + to_string(v.output_sign) + "Y," +
                                 (v.gate ? "gate" : "no-gate") + "," + std::to_string(report.best_epoch);
        write_metrics_row(met, report.test, lead);
        out << lead << ": test mse " << report.test.mse << '\n';
        ok = ok && finite(report.test);
    }
    if (!ok) throw Error("ablate/NonFinite", "an ablation variant produced non-finite metrics");
    return 0;
}

int run_decompose(const RunSpec& spec, std::ostream& out) {
    if (spec.checkpoint_path.empty()) throw MissingConfig("decompose needs --checkpoint");
    const SeriesTable table = load_data(spec);
    const Minusformer model = load_checkpoint(spec.checkpoint_path);
    const auto& c = model.config();
    if (c.n_variates != table.variates()) throw ShapeMismatch("checkpoint variates differ from the data");
    const DataSplits data = prepare_splits(table, {c.input_len, c.pred_len, 1}, spec.train.split);
    if (spec.window_index >= data.test.size()) {
        throw RangeTooShort("window " + std::to_string(spec.window_index) + " exceeds the " +
                            std::to_string(data.test.size()) + " test windows");
    }
    const std::size_t idx[] = {spec.window_index};
    auto [x, y] = data.test.batch(idx);
    NoGradGuard guard;
    SeededRng unused(0);
    const auto fwd = model_forward(model, x, false, unused);
    const auto rows = export_trace(fwd.trace, &data.scaler);
    auto bo = open_out(spec, "block_outputs.csv");
    write_block_outputs_csv(bo, rows);
    auto at = open_out(spec, "attention.csv");
    write_attention_csv(at, fwd.trace);
    out << "wrote " << rows.size() << " block-output rows for test window " << spec.window_index << " (table row "
        << data.test.start_row(spec.window_index) << ")\n";
    return 0;
}

int run_simulate(const RunSpec& spec, std::ostream& out) {
    const auto& s = spec.simulate;
    const auto rows = run_theorem_grid(s.blocks, s.mus, s.alpha, s.nu, s.trials, spec.seed);
    auto csv = open_out(spec, "simulation.csv");
    write_simulation_csv(csv, rows);
    std::size_t passed = 0;
    for (const auto& r : rows) passed += r.pass ? 1 : 0;
    out << passed << "/" << rows.size() << " simulation rows pass\n";
    if (passed != rows.size()) throw Error("ensemblesim/BoundCheckFailed", "some simulation rows did not pass");
    return 0;
}

int run_synth(const RunSpec& spec, std::ostream& out) {
    const SeriesTable table =
        synth_series(spec.synth.kind, spec.synth.length, spec.synth.variates, spec.synth.noise_std, spec.seed);
    auto csv = open_out(spec, "data.csv");
    write_csv(csv, table);
    out << "wrote " << table.length() << " rows x " << table.variates() << " variates\n";
    return 0;
}

int exit_code_for(const std::string& category) {
    if (category.rfind("cli/", 0) == 0) return 2;
    if (category.rfind("data/", 0) == 0) return 3;
    if (category.rfind("ensemblesim/BoundCheckFailed", 0) == 0 || category.find("NonFinite") != std::string::npos) {
        return 5;
    }
    return 4;
}

}  // namespace

int dispatch(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    try {
        fs::create_directories(spec.out_dir);
        write_echo(spec);
        switch (spec.command) {
            case Command::train: return run_train(spec, out);
            case Command::eval: return run_eval(spec, out);
            case Command::ablate: return run_ablate(spec, out);
            case Command::decompose: return run_decompose(spec, out);
            case Command::simulate: return run_simulate(spec, out);
            case Command::synth: return run_synth(spec, out);
        }
    } catch (const Error& e) {
        err << e.what() << '\n';
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        err << "internal: " << e.what() << '\n';
        return 4;
    }
    return 4;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv, argv + argc);
    RunSpec spec;
    try {
        spec = parse_args(args);
    } catch (const HelpRequested& h) {
        out << h.text;
        return 0;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 2;
    }
    return dispatch(spec, out, err);
}

}  // namespace minusformer::cli
