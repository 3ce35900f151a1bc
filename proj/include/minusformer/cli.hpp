#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "minusformer/data.hpp"
#include "minusformer/ensemble.hpp"
#include "minusformer/model.hpp"
#include "minusformer/train.hpp"

namespace minusformer::cli {

enum class Command { train, eval, ablate, decompose, simulate, synth };
std::string to_string(Command c);

struct SynthSpec {
    SynthKind kind = SynthKind::sine_mix;
    std::size_t length = 4000;
    std::size_t variates = 3;
    double noise_std = 0.1;
};

struct SimulateSpec {
    std::vector<std::size_t> blocks{2, 4, 8, 16};
    std::vector<double> mus{0.1, 0.5, 0.9};
    double alpha = 1.0;
    double nu = 1.0;
    std::size_t trials = 200000;

    /// The first grid point as a single spec.
    EnsembleSpec first() const { return {blocks.front(), alpha, nu, mus.front()}; }
};

/// Fully resolved run: defaults, then config-file values, then flags.
struct RunSpec {
    Command command = Command::train;
    std::string config_path;
    std::string data_path;  // empty: generate a synthetic series
    std::string out_dir = "run";
    std::string checkpoint_path;
    std::size_t window_index = 0;
    std::uint64_t seed = 0;
    /// Canonical key -> value for every explicitly given flag.
    std::map<std::string, std::string> overrides;

    MinusformerConfig model;
    TrainConfig train;
    SynthSpec synth;
    SimulateSpec simulate;

    /// Canonical key=value lines covering every resolved setting.
    std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Thrown by parse_args for --help; carries the formatted usage text.
struct HelpRequested {
    std::string text;
};

/// argv[0] is the program name. Throws UnknownFlag, MissingConfig,
/// InvalidValue or HelpRequested.
RunSpec parse_args(const std::vector<std::string>& argv);

/// Executes a parsed run and writes its artifacts under spec.out_dir.
/// Returns the process exit code; failures are reported on `err` as
/// "<module>/<Kind>: message".
int dispatch(const RunSpec& spec, std::ostream& out, std::ostream& err);

/// parse_args + dispatch with usage errors mapped to exit code 2.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// The eight sign/gate combinations of the ablation grid, in output order.
struct AblationVariant {
    Sign input_sign;
    Sign output_sign;
    bool gate;
};
std::vector<AblationVariant> ablation_grid();

}  // namespace minusformer::cli
