#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "minusformer/tensor.hpp"

namespace minusformer {

/// Dense [T, D] table. The first CSV column is kept as an opaque label.
struct SeriesTable {
    std::vector<std::string> timestamps;
    std::vector<std::string> names;  // variate names, size D
    std::vector<double> values;      // row-major [T, D]

    std::size_t length() const { return timestamps.size(); }
    std::size_t variates() const { return names.size(); }
    double at(std::size_t t, std::size_t d) const { return values[t * variates() + d]; }
};

/// Half-open row interval [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end > begin ? end - begin : 0; }
    bool operator==(const IndexRange&) const = default;
};

struct ScalerStats {
    std::vector<double> mean;
    std::vector<double> std;  // population
    IndexRange fitted_on;

    std::size_t variates() const { return mean.size(); }
};

struct WindowSpec {
    std::size_t input_len = 96;
    std::size_t pred_len = 96;
    std::size_t stride = 1;
};

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct SplitRanges {
    IndexRange train, val, test;
};

SeriesTable load_csv(const std::string& path);
SeriesTable parse_csv(std::istream& is);
void write_csv(std::ostream& os, const SeriesTable& table);

/// Per-variate mean and population std over `train_range`. Throws
/// ZeroVariance naming the variate if any std is zero.
ScalerStats fit_scaler(const SeriesTable& table, IndexRange train_range);

enum class ScaleDirection { forward, inverse };
/// `rows` is row-major with stats.variates() columns.
std::vector<double> scale(const ScalerStats& stats, std::span<const double> rows, ScaleDirection direction);
SeriesTable scale(const ScalerStats& stats, const SeriesTable& table, ScaleDirection direction);

/// Chronological train/val/test partition of [0, T).
SplitRanges chrono_split(std::size_t length, const SplitSpec& split);

/// Sliding windows over a row range; owns a copy of the rows it needs.
class WindowSet {
public:
    WindowSet() = default;
    WindowSet(std::vector<double> rows, std::size_t variates, WindowSpec spec, std::size_t origin);

    std::size_t size() const { return starts_.size(); }
    bool empty() const { return starts_.empty(); }
    std::size_t variates() const { return variates_; }
    const WindowSpec& spec() const { return spec_; }
    /// Table row of the first input step of window i.
    std::size_t start_row(std::size_t i) const { return origin_ + starts_[i]; }

    std::span<const double> input(std::size_t i) const;   // [I, D]
    std::span<const double> target(std::size_t i) const;  // [O, D]

    /// Stacks windows into x [B, I, D] and y [B, O, D].
    std::pair<Tensor, Tensor> batch(std::span<const std::size_t> indices) const;

private:
    std::vector<double> rows_;
    std::size_t variates_ = 0;
    WindowSpec spec_;
    std::size_t origin_ = 0;
    std::vector<std::size_t> starts_;
};

/// Windows whose input and target both lie inside `range`; count is
/// floor((len - I - O) / stride) + 1. Throws RangeTooShort.
WindowSet make_windows(const SeriesTable& table, const WindowSpec& spec, IndexRange range);

enum class SynthKind { sine_mix, trend_sine, random_walk };
SynthKind parse_synth_kind(const std::string& text);
std::string to_string(SynthKind kind);

/// Deterministic synthetic series.
///  sine_mix:    x_d(t) = sum_k A_k sin(2 pi (t mod P_k) / P_k + phi_d) + noise
///               with (A, P) = (1.0, 24), (0.5, 12), (0.3, 96)
///  trend_sine:  sine_mix plus a linear trend of slope (d + 1) / T
///  random_walk: cumulative sum of N(0, 1) steps, plus noise
/// Phases phi_d are drawn U(0, 2 pi) from the seed; noise is N(0, noise_std^2).
SeriesTable synth_series(SynthKind kind, std::size_t length, std::size_t variates, double noise_std,
                         std::uint64_t seed);

}  // namespace minusformer
