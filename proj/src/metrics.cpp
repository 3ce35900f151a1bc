#include "minusformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <vector>

#include "minusformer/errors.hpp"

namespace minusformer {

namespace {

void check_lengths(std::span<const double> y, std::span<const double> yhat, const char* metric) {
    if (y.empty() || y.size() != yhat.size()) {
        throw ShapeMismatch(std::string(metric) + ": need equal non-empty lengths, got " + std::to_string(y.size()) +
                            " and " + std::to_string(yhat.size()));
    }
}

double median(std::vector<double> v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
    const double upper = v[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
    return 0.5 * (lower + upper);
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

double mae(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

PointwiseMetrics pointwise_metrics(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "pointwise_metrics");
    const std::size_t n = y.size();
    PointwiseMetrics m;
    m.mse = mse(y, yhat);
    m.mae = mae(y, yhat);
    std::vector<double> sq_rel(n);
    double ape = 0.0, sape = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double err = std::abs(y[i] - yhat[i]);
        if (y[i] == 0.0) throw DivisionDomain("mape/rmsp: y[" + std::to_string(i) + "] is zero");
        const double denom = std::abs(y[i]) + std::abs(yhat[i]);
        if (denom == 0.0) throw DivisionDomain("smape: |y| + |yhat| is zero at index " + std::to_string(i));
        ape += err / std::abs(y[i]);
        sape += err / denom;
        const double rel = (y[i] - yhat[i]) / y[i];
        sq_rel[i] = rel * rel;
    }
    m.mape = ape / static_cast<double>(n);
    m.smape = 2.0 * sape / static_cast<double>(n);
    m.rmsp = std::sqrt(median(std::move(sq_rel)));
    return m;
}

double mase(std::span<const double> y, std::span<const double> yhat, std::size_t m) {
    check_lengths(y, yhat, "mase");
    if (m == 0 || y.size() <= m) {
        throw SeriesTooShort("mase needs N > m >= 1, got N=" + std::to_string(y.size()) + ", m=" + std::to_string(m));
    }
    double naive = 0.0;
    for (std::size_t i = m; i < y.size(); ++i) naive += std::abs(y[i] - y[i - m]);
    naive /= static_cast<double>(y.size() - m);
    if (naive == 0.0) throw ZeroDenominator("mase: the m-lag naive error of y is zero");
    return mae(y, yhat) / naive;
}

double quantile_loss(std::span<const double> y, std::span<const double> yhat, double q) {
    check_lengths(y, yhat, "quantile_loss");
    if (!(q > 0.0 && q < 1.0)) throw InvalidQuantile("q must lie in (0, 1), got " + std::to_string(q));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double err = std::abs(y[i] - yhat[i]);
        s += yhat[i] >= y[i] ? (1.0 - q) * err : q * err;
    }
    return s / static_cast<double>(y.size());
}

double overall_score(double mse, double mae) { return 0.5 * (mse + mae); }

void write_metrics_header(std::ostream& os, const std::string& leading_columns) {
    if (!leading_columns.empty()) os << leading_columns << ',';
    os << "mse,mae,rmsp,mape,smape,mase,q25,q50,q75,overall\n";
}

void write_metrics_row(std::ostream& os, const MetricsReport& r, const std::string& leading_cells) {
    char buf[64];
    auto cell = [&](std::optional<double> v) {
        if (v) {
            std::snprintf(buf, sizeof buf, "%.10g", *v);
            os << buf;
        }
    };
    auto q = [&](double level) -> std::optional<double> {
        auto it = r.quantile.find(level);
        if (it == r.quantile.end()) return std::nullopt;
        return it->second;
    };
    if (!leading_cells.empty()) os << leading_cells << ',';
    cell(r.mse);
    os << ',';
    cell(r.mae);
    os << ',';
    cell(r.rmsp);
    os << ',';
    cell(r.mape);
    os << ',';
    cell(r.smape);
    os << ',';
    cell(r.mase);
    os << ',';
    cell(q(0.25));
    os << ',';
    cell(q(0.5));
    os << ',';
    cell(q(0.75));
    os << ',';
    cell(r.overall);
    os << '\n';
}

}  // namespace minusformer
