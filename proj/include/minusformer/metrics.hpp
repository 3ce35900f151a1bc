#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace minusformer {

struct PointwiseMetrics {
    double mse = 0.0;
    double mae = 0.0;
    double mape = 0.0;
    double smape = 0.0;
    double rmsp = 0.0;
};

/// MSE, MAE, MAPE, sMAPE (factor 2/N) and RMSP (square root of the median
/// squared relative error; even counts average the two central values).
/// Throws DivisionDomain naming the metric and index when y_i = 0 (MAPE,
/// RMSP) or |y_i| + |yhat_i| = 0 (sMAPE).
PointwiseMetrics pointwise_metrics(std::span<const double> y, std::span<const double> yhat);

double mse(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);

/// Mean absolute error scaled by the in-sample m-lag naive error of y.
double mase(std::span<const double> y, std::span<const double> yhat, std::size_t m = 1);

/// Pinball loss: (1-q)|e| where yhat >= y, q|e| otherwise.
double quantile_loss(std::span<const double> y, std::span<const double> yhat, double q);

double overall_score(double mse, double mae);

/// Aggregate evaluation record. Metrics that are undefined for the data
/// (e.g. a zero target for MAPE) are left empty and written as blank cells.
struct MetricsReport {
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> rmsp;
    std::optional<double> mape;
    std::optional<double> smape;
    std::optional<double> mase;
    std::size_t mase_m = 1;
    std::map<double, double> quantile;  // q -> loss
    double overall = 0.0;
};

/// Column order: mse,mae,rmsp,mape,smape,mase,q25,q50,q75,overall
void write_metrics_header(std::ostream& os, const std::string& leading_columns = "");
void write_metrics_row(std::ostream& os, const MetricsReport& report, const std::string& leading_cells = "");

}  // namespace minusformer
