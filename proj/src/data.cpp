#include "minusformer/data.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "minusformer/errors.hpp"
#include "minusformer/rng.hpp"

namespace minusformer {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string loc(std::size_t row, std::size_t col) {
    return "row " + std::to_string(row) + ", col " + std::to_string(col);
}

}  // namespace

SeriesTable parse_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty input, expected a header row");
    auto header = split_commas(trim(line));
    if (header.size() < 2) throw ParseError("header needs a label column and at least one variate");

    SeriesTable table;
    for (std::size_t c = 1; c < header.size(); ++c) table.names.push_back(trim(header[c]));
    const std::size_t d = table.names.size();

    std::size_t row = 0;  // 1-based data row, header excluded
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty()) continue;
        ++row;
        auto cells = split_commas(line);
        if (cells.size() != d + 1) {
            throw ParseError(loc(row, cells.size()) + ": expected " + std::to_string(d + 1) + " cells, got " +
                             std::to_string(cells.size()));
        }
        table.timestamps.push_back(trim(cells[0]));
        for (std::size_t c = 1; c <= d; ++c) {
            const std::string cell = trim(cells[c]);
            if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
                throw MissingValue(loc(row, c));
            }
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size() || errno == ERANGE) {
                throw ParseError(loc(row, c) + ": '" + cell + "' is not a number");
            }
            if (!std::isfinite(v)) throw MissingValue(loc(row, c));
            table.values.push_back(v);
        }
    }
    return table;
}

SeriesTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_csv(in);
}

void write_csv(std::ostream& os, const SeriesTable& table) {
    os << "date";
    for (const auto& n : table.names) os << ',' << n;
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t t = 0; t < table.length(); ++t) {
        os << table.timestamps[t];
        for (std::size_t c = 0; c < table.variates(); ++c) os << ',' << table.at(t, c);
        os << '\n';
    }
}

ScalerStats fit_scaler(const SeriesTable& table, IndexRange train_range) {
    if (train_range.size() == 0 || train_range.end > table.length()) {
        throw EmptySplit("scaler range [" + std::to_string(train_range.begin) + ", " +
                         std::to_string(train_range.end) + ") is empty or exceeds the table");
    }
    const std::size_t d = table.variates();
    const auto n = static_cast<double>(train_range.size());
    ScalerStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), train_range};
    for (std::size_t t = train_range.begin; t < train_range.end; ++t)
        for (std::size_t c = 0; c < d; ++c) stats.mean[c] += table.at(t, c);
    for (auto& m : stats.mean) m /= n;
    for (std::size_t t = train_range.begin; t < train_range.end; ++t)
        for (std::size_t c = 0; c < d; ++c) {
            const double dev = table.at(t, c) - stats.mean[c];
            stats.std[c] += dev * dev;
        }
    for (std::size_t c = 0; c < d; ++c) {
        stats.std[c] = std::sqrt(stats.std[c] / n);
        if (!(stats.std[c] > 0.0)) throw ZeroVariance("variate " + table.names[c] + " is constant on the training range");
    }
    return stats;
}

std::vector<double> scale(const ScalerStats& stats, std::span<const double> rows, ScaleDirection direction) {
    const std::size_t d = stats.variates();
    if (d == 0 || rows.size() % d != 0) {
        throw ShapeMismatch(std::to_string(rows.size()) + " values do not split into rows of " + std::to_string(d));
    }
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t c = i % d;
        out[i] = direction == ScaleDirection::forward ? (rows[i] - stats.mean[c]) / stats.std[c]
                                                      : rows[i] * stats.std[c] + stats.mean[c];
    }
    return out;
}

SeriesTable scale(const ScalerStats& stats, const SeriesTable& table, ScaleDirection direction) {
    SeriesTable out = table;
    out.values = scale(stats, table.values, direction);
    return out;
}

SplitRanges chrono_split(std::size_t length, const SplitSpec& split) {
    const bool valid = split.train >= 0 && split.val >= 0 && split.test >= 0 &&
                       std::abs(split.train + split.val + split.test - 1.0) < 1e-9;
    if (!valid) throw EmptySplit("split fractions must be non-negative and sum to 1");
    // The small epsilon keeps 0.7 * 100 at 70 despite rounding.
    const auto cut = [&](double f) {
        return std::min(length, static_cast<std::size_t>(std::floor(static_cast<double>(length) * f + 1e-9)));
    };
    const std::size_t a = cut(split.train);
    const std::size_t b = cut(split.train + split.val);
    SplitRanges r{{0, a}, {a, b}, {b, length}};
    if (r.train.size() == 0 || r.val.size() == 0 || r.test.size() == 0) {
        throw EmptySplit("split of " + std::to_string(length) + " rows leaves a part empty");
    }
    return r;
}

WindowSet::WindowSet(std::vector<double> rows, std::size_t variates, WindowSpec spec, std::size_t origin)
    : rows_(std::move(rows)), variates_(variates), spec_(spec), origin_(origin) {
    const std::size_t len = rows_.size() / variates_;
    const std::size_t span = spec_.input_len + spec_.pred_len;
    for (std::size_t s = 0; s + span <= len; s += spec_.stride) starts_.push_back(s);
}

std::span<const double> WindowSet::input(std::size_t i) const {
    return {rows_.data() + starts_[i] * variates_, spec_.input_len * variates_};
}

std::span<const double> WindowSet::target(std::size_t i) const {
    return {rows_.data() + (starts_[i] + spec_.input_len) * variates_, spec_.pred_len * variates_};
}

std::pair<Tensor, Tensor> WindowSet::batch(std::span<const std::size_t> indices) const {
    const std::size_t b = indices.size();
    std::vector<double> x, y;
    x.reserve(b * spec_.input_len * variates_);
    y.reserve(b * spec_.pred_len * variates_);
    for (auto i : indices) {
        auto xi = input(i);
        auto yi = target(i);
        x.insert(x.end(), xi.begin(), xi.end());
        y.insert(y.end(), yi.begin(), yi.end());
    }
    return {Tensor({b, spec_.input_len, variates_}, std::move(x)),
            Tensor({b, spec_.pred_len, variates_}, std::move(y))};
}

WindowSet make_windows(const SeriesTable& table, const WindowSpec& spec, IndexRange range) {
    if (spec.input_len == 0 || spec.pred_len == 0 || spec.stride == 0) {
        throw RangeTooShort("window lengths and stride must be positive");
    }
    if (range.end > table.length() || range.size() < spec.input_len + spec.pred_len) {
        throw RangeTooShort("range of " + std::to_string(range.size()) + " rows cannot hold input " +
                            std::to_string(spec.input_len) + " + prediction " + std::to_string(spec.pred_len));
    }
    const std::size_t d = table.variates();
    std::vector<double> rows(table.values.begin() + static_cast<long>(range.begin * d),
                             table.values.begin() + static_cast<long>(range.end * d));
    return WindowSet(std::move(rows), d, spec, range.begin);
}

SynthKind parse_synth_kind(const std::string& text) {
    if (text == "sine_mix") return SynthKind::sine_mix;
    if (text == "trend_sine") return SynthKind::trend_sine;
    if (text == "random_walk") return SynthKind::random_walk;
    throw ParseError("unknown synthetic series kind '" + text + "'");
}

std::string to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::sine_mix: return "sine_mix";
        case SynthKind::trend_sine: return "trend_sine";
        case SynthKind::random_walk: return "random_walk";
    }
    return "?";
}

SeriesTable synth_series(SynthKind kind, std::size_t length, std::size_t variates, double noise_std,
                         std::uint64_t seed) {
    struct Component {
        double amplitude;
        std::size_t period;
    };
    static constexpr Component kComponents[] = {{1.0, 24}, {0.5, 12}, {0.3, 96}};
    constexpr double two_pi = 2.0 * std::numbers::pi;

    SeededRng rng(seed);
    std::vector<double> phase(variates);
    for (auto& p : phase) p = rng.uniform(0.0, two_pi);

    SeriesTable table;
    table.timestamps.reserve(length);
    for (std::size_t d = 0; d < variates; ++d) table.names.push_back("v" + std::to_string(d));
    table.values.assign(length * variates, 0.0);
    std::vector<double> walk(variates, 0.0);

    for (std::size_t t = 0; t < length; ++t) {
        table.timestamps.push_back(std::to_string(t));
        for (std::size_t d = 0; d < variates; ++d) {
            double v = 0.0;
            if (kind == SynthKind::random_walk) {
                walk[d] += rng.normal();
                v = walk[d];
            } else {
                for (const auto& c : kComponents) {
                    const auto p = static_cast<double>(c.period);
                    v += c.amplitude * std::sin(two_pi * static_cast<double>(t % c.period) / p + phase[d]);
                }
                if (kind == SynthKind::trend_sine) {
                    v += static_cast<double>(d + 1) * static_cast<double>(t) / static_cast<double>(length);
                }
            }
            if (noise_std > 0.0) v += noise_std * rng.normal();
            table.values[t * variates + d] = v;
        }
    }
    return table;
}

}  // namespace minusformer
