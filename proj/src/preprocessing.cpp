#include "mmdcal/preprocessing.hpp"

#include "mmdcal/errors.hpp"
#include "mmdcal/optimizer.hpp"
#include "mmdcal/random.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace mmdcal {

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Raw: return "raw";
        case Stage::LogTransformed: return "log";
        case Stage::CountNormalized: return "count-normalized";
        case Stage::Denoised: return "denoised";
        case Stage::PcaReduced: return "pca";
    }
    return "unknown";
}

Sample::Sample(Matrix data_, std::vector<std::string> names, std::string prov, Stage stage_)
    : data(std::move(data_)), column_names(std::move(names)), provenance(std::move(prov)), stage(stage_) {
    validate();
}

void Sample::validate() const {
    if (column_names.size() != cols()) {
        throw DataError("sample has " + std::to_string(cols()) + " columns but " +
                        std::to_string(column_names.size()) + " column names");
    }
    if (!all_finite(data)) throw DataError("sample '" + provenance + "' contains non-finite values");
}

std::vector<std::string> default_column_names(std::size_t d) {
    std::vector<std::string> names;
    names.reserve(d);
    for (std::size_t i = 1; i <= d; ++i) names.push_back("c" + std::to_string(i));
    return names;
}

namespace {

void require_stage(const Sample& s, std::initializer_list<Stage> allowed, const char* op) {
    if (std::find(allowed.begin(), allowed.end(), s.stage) == allowed.end()) {
        throw PipelineOrderError(std::string(op) + " cannot follow stage '" + to_string(s.stage) + "' (sample '" +
                                 s.provenance + "')");
    }
}

void require_nonnegative(const Matrix& m, const char* op) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (m(i, j) < 0.0) {
                throw DataError(std::string(op) + ": negative entry at row " + std::to_string(i + 1) + ", column " +
                                std::to_string(j + 1));
            }
        }
    }
}

Sample derived(const Sample& in, Matrix data, Stage stage, const std::string& tag) {
    Sample out;
    out.data = std::move(data);
    out.column_names = in.column_names;
    out.provenance = in.provenance.empty() ? tag : in.provenance + "|" + tag;
    out.stage = stage;
    return out;
}

}  // namespace

Sample log_transform(const Sample& sample) {
    require_stage(sample, {Stage::Raw}, "log_transform");
    require_nonnegative(sample.data, "log_transform");
    return derived(sample, sample.data.array().log1p().matrix(), Stage::LogTransformed, "log");
}

Matrix scale_rows_to_total(const Matrix& counts, double total) {
    if (!(total > 0.0)) throw ConfigError("normalization total must be positive");
    require_nonnegative(counts, "normalize_counts");
    const Vector sums = counts.rowwise().sum();
    for (Eigen::Index i = 0; i < sums.size(); ++i) {
        if (!(sums(i) > 0.0)) throw DataError("normalize_counts: row " + std::to_string(i + 1) + " is all zeros");
    }
    return (counts.array().colwise() * (total / sums.array())).matrix();
}

Sample normalize_counts(const Sample& sample, double total) {
    require_stage(sample, {Stage::Raw}, "normalize_counts");
    return derived(sample, scale_rows_to_total(sample.data, total).array().log1p().matrix(), Stage::CountNormalized,
                   "normalized");
}

Sample select_clean_cells(const Sample& sample, std::size_t max_zeros) {
    std::vector<std::size_t> keep;
    for (Eigen::Index i = 0; i < sample.data.rows(); ++i) {
        const auto zeros = static_cast<std::size_t>((sample.data.row(i).array() == 0.0).count());
        if (zeros <= max_zeros) keep.push_back(static_cast<std::size_t>(i));
    }
    if (keep.empty()) {
        throw DataError("select_clean_cells: no row of '" + sample.provenance + "' has at most " +
                        std::to_string(max_zeros) + " zeros");
    }
    Sample out = sample;
    out.data = take_rows(sample.data, keep);
    return out;
}

Matrix DaeModel::reconstruct(const Matrix& x) const {
    const Matrix h1 = encoder1.forward(x).cwiseMax(0.0);
    const Matrix h2 = encoder2.forward(h1).cwiseMax(0.0);
    return decoder.forward(h2);
}

namespace {

constexpr std::uint64_t kDaeInitStream = 11;
constexpr std::uint64_t kDaeSplitStream = 12;
constexpr std::uint64_t kDaeBatchStream = 13;
constexpr std::uint64_t kDaeValidationStream = 14;

Matrix bernoulli_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double keep) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(keep) ? 1.0 : 0.0;
    return m;
}

void glorot(DenseLayer& layer, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = rng.uniform(-bound, bound);
    layer.bias.setZero();
}

double weight_sq_norm(const DaeModel& m) {
    return m.encoder1.weights.squaredNorm() + m.encoder2.weights.squaredNorm() + m.decoder.weights.squaredNorm();
}

double reconstruction_mse(const DaeModel& m, const Matrix& corrupted, const Matrix& clean) {
    return (m.reconstruct(corrupted) - clean).array().square().mean();
}

}  // namespace

DaeModel train_dae(const Sample& clean, const DaeConfig& config) {
    const TrainingConfig& tc = config.training;
    tc.validate();
    if (!(config.corruption_keep_prob > 0.0 && config.corruption_keep_prob <= 1.0)) {
        throw ConfigError("corruption_keep_prob must lie in (0, 1]");
    }
    if (config.hidden_width == 0) throw ConfigError("DAE hidden width must be positive");
    clean.validate();
    const std::size_t n = clean.rows();
    if (n < tc.minibatch_size) {
        throw DataError("train_dae: " + std::to_string(n) + " clean rows, need at least the minibatch size " +
                        std::to_string(tc.minibatch_size));
    }
    const auto n_val = static_cast<std::size_t>(std::llround(tc.validation_fraction * static_cast<double>(n)));
    if (n_val < 2 || n - n_val < 2) throw DataError("train_dae: too few rows for a validation split");

    const std::size_t d = clean.cols();
    const std::size_t h = config.hidden_width;
    DaeModel model;
    model.corruption_keep_prob = config.corruption_keep_prob;
    model.encoder1 = DenseLayer(d, h);
    model.encoder2 = DenseLayer(h, h);
    model.decoder = DenseLayer(h, d);
    Rng init_rng(derive_seed(tc.seed, kDaeInitStream));
    glorot(model.encoder1, init_rng);
    glorot(model.encoder2, init_rng);
    glorot(model.decoder, init_rng);

    Rng split_rng(derive_seed(tc.seed, kDaeSplitStream));
    const std::vector<std::size_t> order = sample_without_replacement(split_rng, n, n);
    const Matrix val = take_rows(clean.data, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val)});
    const Matrix train_rows = take_rows(clean.data, {order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end()});
    Rng val_rng(derive_seed(tc.seed, kDaeValidationStream));
    const Matrix val_corrupted =
        val.cwiseProduct(bernoulli_mask(val_rng, val.rows(), val.cols(), config.corruption_keep_prob));

    auto validation_loss = [&] {
        const double v = reconstruction_mse(model, val_corrupted, val) + tc.l2_penalty * weight_sq_norm(model);
        if (!std::isfinite(v)) throw NumericError("DAE validation loss became non-finite");
        return v;
    };

    Rng batch_rng(derive_seed(tc.seed, kDaeBatchStream));
    RmspropState state;
    const std::size_t steps = (static_cast<std::size_t>(train_rows.rows()) + tc.minibatch_size - 1) / tc.minibatch_size;
    double best = validation_loss();
    DaeModel best_model = model;
    model.training_log.push_back({0, std::nullopt, best});
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        double train_sum = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            const Matrix x = take_rows(train_rows, sample_with_replacement(batch_rng, train_rows.rows(), tc.minibatch_size));
            const Matrix xt = x.cwiseProduct(bernoulli_mask(batch_rng, x.rows(), x.cols(), config.corruption_keep_prob));
            const Matrix z1 = model.encoder1.forward(xt);
            const Matrix h1 = z1.cwiseMax(0.0);
            const Matrix z2 = model.encoder2.forward(h1);
            const Matrix h2 = z2.cwiseMax(0.0);
            const Matrix out = model.decoder.forward(h2);
            const Matrix err = out - x;
            const double loss = err.array().square().mean() + tc.l2_penalty * weight_sq_norm(model);
            if (!std::isfinite(loss)) throw NumericError("DAE training loss became non-finite");
            train_sum += loss;

            const Matrix d_out = err * (2.0 / static_cast<double>(err.size()));
            Matrix gw3 = h2.transpose() * d_out + 2.0 * tc.l2_penalty * model.decoder.weights;
            RowVector gb3 = d_out.colwise().sum();
            const Matrix d_z2 = (z2.array() > 0.0).select(d_out * model.decoder.weights.transpose(), 0.0);
            Matrix gw2 = h1.transpose() * d_z2 + 2.0 * tc.l2_penalty * model.encoder2.weights;
            RowVector gb2 = d_z2.colwise().sum();
            const Matrix d_z1 = (z1.array() > 0.0).select(d_z2 * model.encoder2.weights.transpose(), 0.0);
            Matrix gw1 = xt.transpose() * d_z1 + 2.0 * tc.l2_penalty * model.encoder1.weights;
            RowVector gb1 = d_z1.colwise().sum();

            auto view = [](auto& m) { return std::span<double>(m.data(), static_cast<std::size_t>(m.size())); };
            const std::vector<std::span<double>> params{view(model.encoder1.weights), view(model.encoder1.bias),
                                                        view(model.encoder2.weights), view(model.encoder2.bias),
                                                        view(model.decoder.weights),  view(model.decoder.bias)};
            const std::vector<std::span<double>> grads{view(gw1), view(gb1), view(gw2), view(gb2), view(gw3), view(gb3)};
            rmsprop_step(params, grads, state, tc.rmsprop);
        }
        const double v = validation_loss();
        model.training_log.push_back({epoch, train_sum / static_cast<double>(steps), v});
        if (v < best) {
            best = v;
            best_model = model;
            best_model.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    best_model.training_log = model.training_log;
    return best_model;
}

Sample denoise(const DaeModel& model, const Sample& sample) {
    require_stage(sample, {Stage::LogTransformed, Stage::CountNormalized}, "denoise");
    require_dims(sample.cols() == model.dim(), "denoise: sample has " + std::to_string(sample.cols()) +
                                                   " columns, model expects " + std::to_string(model.dim()));
    return derived(sample, model.reconstruct(sample.data), Stage::Denoised, "denoised");
}

std::pair<PcaModel, std::vector<Sample>> reduce_pca(const std::vector<Sample>& samples, std::size_t k,
                                                     PcaFitRows fit_rows, std::size_t designated) {
    if (samples.empty()) throw DataError("reduce_pca: no samples");
    for (const auto& s : samples) {
        require_stage(s, {Stage::Raw, Stage::LogTransformed, Stage::CountNormalized, Stage::Denoised}, "reduce_pca");
        if (s.column_names != samples.front().column_names) throw DimensionError("reduce_pca: samples do not share columns");
    }
    Matrix fit_data;
    if (fit_rows == PcaFitRows::Pooled) {
        fit_data = samples.front().data;
        for (std::size_t i = 1; i < samples.size(); ++i) fit_data = vstack(fit_data, samples[i].data);
    } else {
        if (designated >= samples.size()) throw ConfigError("reduce_pca: designated sample index out of range");
        fit_data = samples[designated].data;
    }
    PcaModel model = fit_pca(fit_data, k);
    std::vector<std::string> names;
    for (std::size_t i = 1; i <= k; ++i) names.push_back("PC" + std::to_string(i));
    std::vector<Sample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        Sample p;
        p.data = project(model, s.data);
        p.column_names = names;
        p.provenance = s.provenance.empty() ? "pca" : s.provenance + "|pca";
        p.stage = Stage::PcaReduced;
        out.push_back(std::move(p));
    }
    return {std::move(model), std::move(out)};
}

}  // namespace mmdcal
