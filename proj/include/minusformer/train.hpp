#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "minusformer/data.hpp"
#include "minusformer/layers.hpp"
#include "minusformer/metrics.hpp"
#include "minusformer/model.hpp"

namespace minusformer {

/// Mean squared error over all elements; differentiable.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of every parameter from its current grad.
void adam_step(AdamState& state, const NamedParameters& params, double lr);

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 10;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    SplitSpec split;

    void validate() const;
    std::vector<std::pair<std::string, std::string>> to_key_values() const;
    /// Returns false for an unknown key; throws InvalidConfig on bad values.
    bool set(const std::string& key, const std::string& value);
};

/// Patience-based stopping rule on validation loss.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Records one epoch's loss; returns true if it is a new best.
    bool update(double val_loss);
    bool should_stop() const { return epochs_since_best_ >= patience_; }
    double best() const { return best_; }
    std::size_t best_epoch() const { return best_epoch_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t epochs_since_best_ = 0;
    double best_ = 0.0;
};

/// Scaled windows for the three chronological splits. Validation and test
/// windows take their inputs from the I rows preceding the split so that
/// every target row belongs to its split.
struct DataSplits {
    ScalerStats scaler;
    SplitRanges ranges;
    WindowSet train, val, test;
};

DataSplits prepare_splits(const SeriesTable& raw, const WindowSpec& window, const SplitSpec& split);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 0: initial weights
    double best_val_loss = 0.0;
    MetricsReport test;
    double wall_seconds = 0.0;
    std::vector<std::pair<std::string, std::string>> config_echo;
};

/// Adam + MSE with seeded shuffling; stops after `patience` epochs without
/// validation improvement and restores the best-epoch parameters before
/// evaluating the test split.
RunReport train_loop(Minusformer& model, const DataSplits& data, const TrainConfig& config);

/// Pooled metrics over every element of every window, in standardized space.
/// MASE averages per-(window, variate) horizon series. Throws EmptySplit.
MetricsReport evaluate_split(const Minusformer& model, const WindowSet& windows, std::size_t batch_size);

/// MSE of repeating each window's last input row over the horizon.
double naive_last_value_mse(const WindowSet& windows);

void write_run_report(std::ostream& os, const RunReport& report);

/// Copy of every parameter's values, in parameters() order.
std::vector<std::vector<double>> snapshot(const NamedParameters& params);
void restore(const NamedParameters& params, const std::vector<std::vector<double>>& values);

}  // namespace minusformer
