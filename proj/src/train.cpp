#include "minusformer/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>

#include "minusformer/errors.hpp"

namespace minusformer {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeMismatch("mse_loss: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    }
    return mean_all(square(sub(pred, target)));
}

void adam_step(AdamState& s, const NamedParameters& params, double lr) {
    if (s.m.size() != params.size()) {
        s.m.clear();
        s.v.clear();
        for (const auto& [name, p] : params) {
            s.m.emplace_back(p.numel(), 0.0);
            s.v.emplace_back(p.numel(), 0.0);
        }
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k].second;
        auto values = p.mutable_values();
        const auto g = p.grad();
        auto& m = s.m[k];
        auto& v = s.v[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            values[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate must be positive");
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    if (patience == 0) throw InvalidConfig("patience must be positive");
    const double total = split.train + split.val + split.test;
    if (!(split.train > 0.0 && split.val > 0.0 && split.test > 0.0) || std::abs(total - 1.0) > 1e-9) {
        throw InvalidConfig("split fractions must be positive and sum to 1");
    }
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_key_values() const {
    auto real = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    return {
        {"learning_rate", real(learning_rate)},
        {"batch_size", std::to_string(batch_size)},
        {"max_epochs", std::to_string(max_epochs)},
        {"patience", std::to_string(patience)},
        {"train_seed", std::to_string(seed)},
        {"train_frac", real(split.train)},
        {"val_frac", real(split.val)},
        {"test_frac", real(split.test)},
    };
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
    auto number = [&]() {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
            throw InvalidConfig(key + " must be a number, got '" + value + "'");
        }
        return v;
    };
    auto count = [&]() {
        const double v = number();
        if (v < 0 || v != std::floor(v)) throw InvalidConfig(key + " must be a non-negative integer");
        return static_cast<std::size_t>(v);
    };
    auto positive = [&]() {
        const std::size_t v = count();
        if (v == 0) throw InvalidConfig(key + " must be positive");
        return v;
    };
    if (key == "learning_rate") {
        learning_rate = number();
        if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate must be positive");
    } else if (key == "batch_size") batch_size = positive();
    else if (key == "max_epochs") max_epochs = count();
    else if (key == "patience") patience = positive();
    else if (key == "train_seed") seed = count();
    else if (key == "train_frac") split.train = number();
    else if (key == "val_frac") split.val = number();
    else if (key == "test_frac") split.test = number();
    else return false;
    return true;
}

bool EarlyStopping::update(double val_loss) {
    ++epoch_;
    if (epoch_ == 1 || val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = epoch_;
        epochs_since_best_ = 0;
        return true;
    }
    ++epochs_since_best_;
    return false;
}

DataSplits prepare_splits(const SeriesTable& raw, const WindowSpec& window, const SplitSpec& split) {
    DataSplits d;
    d.ranges = chrono_split(raw.length(), split);
    d.scaler = fit_scaler(raw, d.ranges.train);
    const SeriesTable scaled = scale(d.scaler, raw, ScaleDirection::forward);
    auto with_lookback = [&](IndexRange r) {
        return IndexRange{r.begin >= window.input_len ? r.begin - window.input_len : 0, r.end};
    };
    d.train = make_windows(scaled, window, d.ranges.train);
    d.val = make_windows(scaled, window, with_lookback(d.ranges.val));
    d.test = make_windows(scaled, window, with_lookback(d.ranges.test));
    return d;
}

std::vector<std::vector<double>> snapshot(const NamedParameters& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.emplace_back(t.values().begin(), t.values().end());
    return out;
}

void restore(const NamedParameters& params, const std::vector<std::vector<double>>& values) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor t = params[k].second;
        std::copy(values[k].begin(), values[k].end(), t.mutable_values().begin());
    }
}

namespace {

double mean_loss(const Minusformer& model, const WindowSet& windows, std::size_t batch_size) {
    if (windows.empty()) throw EmptySplit("no windows to evaluate");
    double sum = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(windows.size(), start + batch_size); ++i) idx.push_back(i);
        auto [x, y] = windows.batch(idx);
        const Tensor pred = predict(model, x);
        const auto p = pred.values();
        const auto t = y.values();
        for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] - t[i]) * (p[i] - t[i]);
        count += p.size();
    }
    return sum / static_cast<double>(count);
}

}  // namespace

RunReport train_loop(Minusformer& model, const DataSplits& data, const TrainConfig& config) {
    config.validate();
    if (data.train.empty() || data.val.empty() || data.test.empty()) throw EmptySplit("every split needs windows");
    const auto started = std::chrono::steady_clock::now();

    RunReport report;
    report.config_echo = model.config().to_key_values();
    for (auto& kv : config.to_key_values()) report.config_echo.push_back(kv);

    const NamedParameters params = model.parameters();
    AdamState adam;
    SeededRng root(config.seed);
    SeededRng shuffle_rng = root.derive(1);
    SeededRng dropout_rng = root.derive(2);
    EarlyStopping stopper(config.patience);
    std::vector<std::vector<double>> best = snapshot(params);

    std::vector<std::size_t> order(data.train.size());
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            auto [x, y] = data.train.batch(idx);
            for (const auto& [name, p] : params) Tensor(p).zero_grad();
            const Tensor loss = mse_loss(model_forward(model, x, true, dropout_rng).prediction, y);
            backward(loss);
            adam_step(adam, params, config.learning_rate);
            loss_sum += loss.item() * static_cast<double>(idx.size());
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_loss = mean_loss(model, data.val, config.batch_size);
        report.epochs.push_back(rec);
        if (stopper.update(rec.val_loss)) best = snapshot(params);
        if (stopper.should_stop()) break;
    }

    restore(params, best);
    report.best_epoch = stopper.best_epoch();
    report.best_val_loss = report.epochs.empty() ? mean_loss(model, data.val, config.batch_size) : stopper.best();
    report.test = evaluate_split(model, data.test, config.batch_size);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

MetricsReport evaluate_split(const Minusformer& model, const WindowSet& windows, std::size_t batch_size) {
    if (windows.empty()) throw EmptySplit("no windows to evaluate");
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    std::vector<double> ys, preds;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(windows.size(), start + batch_size); ++i) idx.push_back(i);
        auto [x, y] = windows.batch(idx);
        const Tensor pred = predict(model, x);
        ys.insert(ys.end(), y.values().begin(), y.values().end());
        preds.insert(preds.end(), pred.values().begin(), pred.values().end());
    }

    MetricsReport r;
    r.mse = mse(ys, preds);
    r.mae = mae(ys, preds);
    r.overall = overall_score(r.mse, r.mae);
    try {
        const auto pw = pointwise_metrics(ys, preds);
        r.mape = pw.mape;
        r.rmsp = pw.rmsp;
        r.smape = pw.smape;
    } catch (const DivisionDomain&) {
        // a zero target: MAPE and RMSP stay undefined, sMAPE only needs |y|+|yhat| > 0
        double s = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < ys.size() && ok; ++i) {
            const double den = std::abs(ys[i]) + std::abs(preds[i]);
            ok = den > 0.0;
            if (ok) s += std::abs(ys[i] - preds[i]) / den;
        }
        if (ok) r.smape = 2.0 * s / static_cast<double>(ys.size());
    }
    for (double q : {0.25, 0.5, 0.75}) r.quantile[q] = quantile_loss(ys, preds, q);

    // MASE per (window, variate) series along the horizon
    const std::size_t horizon = windows.spec().pred_len;
    const std::size_t nd = windows.variates();
    r.mase_m = 1;
    if (horizon > r.mase_m) {
        double total = 0.0;
        std::size_t used = 0;
        std::vector<double> ys_series(horizon), pred_series(horizon);
        for (std::size_t w = 0; w < windows.size(); ++w) {
            for (std::size_t d = 0; d < nd; ++d) {
                for (std::size_t h = 0; h < horizon; ++h) {
                    ys_series[h] = ys[(w * horizon + h) * nd + d];
                    pred_series[h] = preds[(w * horizon + h) * nd + d];
                }
                try {
                    total += mase(ys_series, pred_series, r.mase_m);
                    ++used;
                } catch (const ZeroDenominator&) {
                }
            }
        }
        if (used) r.mase = total / static_cast<double>(used);
    }
    return r;
}

double naive_last_value_mse(const WindowSet& windows) {
    if (windows.empty()) throw EmptySplit("no windows");
    const std::size_t nd = windows.variates();
    const std::size_t in_len = windows.spec().input_len;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto x = windows.input(w);
        const auto y = windows.target(w);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double last = x[(in_len - 1) * nd + i % nd];
            sum += (y[i] - last) * (y[i] - last);
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

void write_run_report(std::ostream& os, const RunReport& r) {
    char buf[64];
    auto real = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    os << "# minusformer run report\n";
    for (const auto& [k, v] : r.config_echo) os << k << '=' << v << '\n';
    os << "epochs_run=" << r.epochs.size() << '\n';
    os << "best_epoch=" << r.best_epoch << '\n';
    os << "best_val_loss=" << real(r.best_val_loss) << '\n';
    os << "test_mse=" << real(r.test.mse) << '\n';
    os << "test_mae=" << real(r.test.mae) << '\n';
    os << "test_overall=" << real(r.test.overall) << '\n';
    os << "wall_seconds=" << real(r.wall_seconds) << '\n';
    os << "\n[epochs]\nepoch,train_loss,val_loss\n";
    for (const auto& e : r.epochs) os << e.epoch << ',' << real(e.train_loss) << ',' << real(e.val_loss) << '\n';
}

}  // namespace minusformer
