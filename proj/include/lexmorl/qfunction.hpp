#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "action.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace lexmorl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

/// Flat parameter/gradient storage. Eigen peels vectorized reductions up to
/// the first aligned element, so buffers must share one alignment for the
/// summation order (and hence the bits) to be reproducible.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Map from a flat observation to one value per action.
///
/// Parameters live in one flat array so optimizers, target sync and
/// checkpoints treat every architecture alike. `forward` keeps the
/// activations needed by the next `backward`; `evaluate` is the
/// side-effect-free path safe to share across threads.
class QFunction {
public:
    virtual ~QFunction() = default;

    virtual std::string_view kind() const = 0;
    virtual nlohmann::json architecture() const = 0;
    virtual std::size_t input_size() const = 0;
    virtual std::span<double> params() = 0;
    virtual std::span<const double> params() const = 0;
    std::size_t num_params() const { return params().size(); }

    /// Batch forward pass (rows are observations), caching activations.
    virtual RowMatrix forward(const RowMatrix& inputs) = 0;
    virtual RowMatrix evaluate(const RowMatrix& inputs) const = 0;
    /// Adds dL/dparams for the cached batch given dL/dQ (batch x actions).
    virtual void backward(const RowMatrix& dq, std::span<double> grad) = 0;

    virtual std::unique_ptr<QFunction> clone() const = 0;
    /// Makes this function a bit-exact copy of `other` (same architecture).
    virtual void copy_from(const QFunction& other) = 0;

    QRow q_values(std::span<const double> obs) const {
        if (input_size() != 0 && obs.size() != input_size())
            throw InvalidArgument("q_values: observation has wrong size");
        RowMatrix x(1, static_cast<Eigen::Index>(obs.size()));
        for (std::size_t i = 0; i < obs.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = obs[i];
        const RowMatrix q = evaluate(x);
        QRow out{};
        for (std::size_t a = 0; a < kNumActions; ++a) out[a] = q(0, static_cast<Eigen::Index>(a));
        return out;
    }
};

namespace detail {

/// Glorot-uniform weights, zero biases.
inline void init_dense(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-limit, limit);
}

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t offset = 0;  ///< weights (out x in, row-major) then bias (out)

    std::size_t size() const { return out * in + out; }
    ConstMatrixMap weights(std::span<const double> p) const {
        return ConstMatrixMap(p.data() + offset, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    }
    Eigen::Map<const Eigen::RowVectorXd> bias(std::span<const double> p) const {
        return Eigen::Map<const Eigen::RowVectorXd>(p.data() + offset + out * in, static_cast<Eigen::Index>(out));
    }

    void forward(std::span<const double> p, const RowMatrix& x, RowMatrix& z) const {
        z.noalias() = x * weights(p).transpose();
        z.rowwise() += bias(p);
    }

    /// Accumulates parameter gradients; writes dx when requested.
    void backward(std::span<const double> p, const RowMatrix& x, const RowMatrix& dz, std::span<double> grad,
                  RowMatrix* dx) const {
        MatrixMap gw(grad.data() + offset, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        gw.noalias() += dz.transpose() * x;
        Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + offset + out * in, static_cast<Eigen::Index>(out));
        gb += dz.colwise().sum();
        if (dx) dx->noalias() = dz * weights(p);
    }
};

inline void relu_inplace(RowMatrix& m) { m = m.cwiseMax(0.0); }

inline void relu_backward(const RowMatrix& activated, RowMatrix& grad) {
    grad = (activated.array() > 0.0).select(grad, 0.0);
}

inline std::vector<double> json_scale(const nlohmann::json& j, const char* key, std::size_t n) {
    if (!j.contains(key)) return std::vector<double>(n, 1.0);
    auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != n) throw ConfigError(std::string("architecture: '") + key + "' has wrong length");
    return v;
}

}  // namespace detail

/// Table keyed by the observation rounded to a fixed resolution; unseen keys read as zero.
class TabularQ final : public QFunction {
public:
    explicit TabularQ(std::size_t inputs, double resolution = 0.5) : inputs_(inputs), resolution_(resolution) {
        if (!(resolution_ > 0.0)) throw InvalidArgument("tabular resolution must be positive");
    }

    std::string_view kind() const override { return "tabular"; }
    nlohmann::json architecture() const override {
        nlohmann::json keys = nlohmann::json::array();
        for (const auto& k : slot_keys_) keys.push_back(k);
        return {{"kind", "tabular"}, {"inputs", inputs_}, {"resolution", resolution_}, {"keys", keys}};
    }
    std::size_t input_size() const override { return inputs_; }
    std::span<double> params() override { return values_; }
    std::span<const double> params() const override { return values_; }
    std::size_t entries() const { return slot_keys_.size(); }

    using Key = std::vector<std::int64_t>;

    Key key_of(std::span<const double> obs) const {
        Key k(obs.size());
        for (std::size_t i = 0; i < obs.size(); ++i) k[i] = std::llround(obs[i] / resolution_);
        return k;
    }

    RowMatrix forward(const RowMatrix& inputs) override {
        cached_slots_.clear();
        RowMatrix q = RowMatrix::Zero(inputs.rows(), kNumActions);
        for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
            const std::size_t slot = slot_for(key_of(row_span(inputs, r)));
            cached_slots_.push_back(slot);
            for (std::size_t a = 0; a < kNumActions; ++a) q(r, static_cast<Eigen::Index>(a)) = values_[slot * kNumActions + a];
        }
        return q;
    }

    RowMatrix evaluate(const RowMatrix& inputs) const override {
        RowMatrix q = RowMatrix::Zero(inputs.rows(), kNumActions);
        for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
            const auto it = slots_.find(key_of(row_span(inputs, r)));
            if (it == slots_.end()) continue;
            for (std::size_t a = 0; a < kNumActions; ++a)
                q(r, static_cast<Eigen::Index>(a)) = values_[it->second * kNumActions + a];
        }
        return q;
    }

    void backward(const RowMatrix& dq, std::span<double> grad) override {
        for (std::size_t r = 0; r < cached_slots_.size(); ++r)
            for (std::size_t a = 0; a < kNumActions; ++a)
                grad[cached_slots_[r] * kNumActions + a] += dq(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a));
    }

    std::unique_ptr<QFunction> clone() const override { return std::make_unique<TabularQ>(*this); }
    void copy_from(const QFunction& other) override {
        const auto* o = dynamic_cast<const TabularQ*>(&other);
        if (!o) throw InvalidArgument("copy_from: architecture mismatch");
        *this = *o;
    }

    /// Restores the key index from an architecture descriptor.
    void restore_keys(const nlohmann::json& keys) {
        slots_.clear();
        slot_keys_.clear();
        for (const auto& k : keys) {
            slots_.emplace(k.get<Key>(), slot_keys_.size());
            slot_keys_.push_back(k.get<Key>());
        }
        values_.assign(slot_keys_.size() * kNumActions, 0.0);
    }

private:
    static std::span<const double> row_span(const RowMatrix& m, Eigen::Index r) {
        return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
    }

    std::size_t slot_for(const Key& k) {
        const auto [it, inserted] = slots_.emplace(k, slot_keys_.size());
        if (inserted) {
            slot_keys_.push_back(k);
            values_.resize(values_.size() + kNumActions, 0.0);
        }
        return it->second;
    }

    std::size_t inputs_;
    double resolution_;
    std::map<Key, std::size_t> slots_;
    std::vector<Key> slot_keys_;
    std::vector<double> values_;
    std::vector<std::size_t> cached_slots_;
};

/// Fully connected network with ReLU hidden layers and a linear output.
class MlpQ final : public QFunction {
public:
    MlpQ(std::size_t inputs, std::vector<std::size_t> hidden, std::uint64_t seed, std::vector<double> input_scale = {})
        : inputs_(inputs), hidden_(std::move(hidden)), scale_(std::move(input_scale)) {
        if (inputs_ == 0) throw InvalidArgument("mlp needs at least one input");
        if (scale_.empty()) scale_.assign(inputs_, 1.0);
        if (scale_.size() != inputs_) throw InvalidArgument("mlp input scale has wrong length");
        std::size_t prev = inputs_, offset = 0;
        std::vector<std::size_t> sizes = hidden_;
        sizes.push_back(kNumActions);
        for (std::size_t n : sizes) {
            layers_.push_back({prev, n, offset});
            offset += layers_.back().size();
            prev = n;
        }
        params_.assign(offset, 0.0);
        Rng rng(seed);
        for (const auto& l : layers_)
            detail::init_dense(std::span<double>(params_).subspan(l.offset, l.in * l.out), l.in, l.out, rng);
    }

    std::string_view kind() const override { return "mlp"; }
    nlohmann::json architecture() const override {
        return {{"kind", "mlp"}, {"inputs", inputs_}, {"hidden", hidden_}, {"input_scale", scale_}};
    }
    std::size_t input_size() const override { return inputs_; }
    std::span<double> params() override { return params_; }
    std::span<const double> params() const override { return params_; }

    RowMatrix forward(const RowMatrix& inputs) override { return run(inputs, cache_); }
    RowMatrix evaluate(const RowMatrix& inputs) const override {
        std::vector<RowMatrix> scratch;
        return run(inputs, scratch);
    }

    void backward(const RowMatrix& dq, std::span<double> grad) override {
        RowMatrix dz = dq, dx;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            layers_[i].backward(params_, cache_[i], dz, grad, i > 0 ? &dx : nullptr);
            if (i > 0) {
                detail::relu_backward(cache_[i], dx);
                dz.swap(dx);
            }
        }
    }

    std::unique_ptr<QFunction> clone() const override { return std::make_unique<MlpQ>(*this); }
    void copy_from(const QFunction& other) override {
        const auto* o = dynamic_cast<const MlpQ*>(&other);
        if (!o || o->params_.size() != params_.size() || o->inputs_ != inputs_)
            throw InvalidArgument("copy_from: architecture mismatch");
        params_ = o->params_;
    }

private:
    /// acts[i] is the input of layer i.
    RowMatrix run(const RowMatrix& inputs, std::vector<RowMatrix>& acts) const {
        if (static_cast<std::size_t>(inputs.cols()) != inputs_) throw InvalidArgument("mlp: input width mismatch");
        acts.resize(layers_.size());
        acts[0] = inputs * Eigen::Map<const Eigen::VectorXd>(scale_.data(), static_cast<Eigen::Index>(inputs_)).asDiagonal();
        RowMatrix z;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i].forward(params_, acts[i], z);
            if (i + 1 < layers_.size()) {
                detail::relu_inplace(z);
                acts[i + 1] = z;
            }
        }
        return z;
    }

    std::size_t inputs_;
    std::vector<std::size_t> hidden_;
    std::vector<double> scale_;
    std::vector<detail::DenseLayer> layers_;
    ParamVector params_;
    std::vector<RowMatrix> cache_;
};

/// Convolutional Q-network over an H x W x C grid (channels last).
///
/// Each conv block is zero-padded convolution + ReLU + average pooling;
/// pooling windows at the border average only in-bounds cells, so a 1x1
/// map passes through unchanged. Optional scalar inputs are concatenated
/// with the flattened features before the first fully connected layer.
class CnnQ final : public QFunction {
public:
    struct Config {
        std::size_t rows = 40;
        std::size_t cols = 30;
        std::size_t channels = 4;
        std::size_t extra_inputs = 0;
        std::vector<std::size_t> filters = {32, 64, 64};
        std::size_t kernel = 5;
        std::size_t stride = 3;
        std::size_t pad = 2;
        std::size_t pool = 2;
        std::vector<std::size_t> fc = {128, 64};
        std::vector<double> input_scale;  ///< per channel
        std::vector<double> extra_scale;  ///< per extra input
    };

    CnnQ(Config cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        if (cfg_.input_scale.empty()) cfg_.input_scale.assign(cfg_.channels, 1.0);
        if (cfg_.extra_scale.empty()) cfg_.extra_scale.assign(cfg_.extra_inputs, 1.0);
        if (cfg_.input_scale.size() != cfg_.channels || cfg_.extra_scale.size() != cfg_.extra_inputs)
            throw InvalidArgument("cnn: scale vectors have wrong length");
        if (cfg_.rows == 0 || cfg_.cols == 0 || cfg_.channels == 0 || cfg_.kernel == 0 || cfg_.stride == 0 || cfg_.pool == 0)
            throw InvalidArgument("cnn: dimensions must be positive");
        std::size_t h = cfg_.rows, w = cfg_.cols, c = cfg_.channels, offset = 0;
        Rng rng(seed);
        for (std::size_t f : cfg_.filters) {
            Conv conv;
            conv.in_h = h; conv.in_w = w; conv.in_c = c;
            if (h + 2 * cfg_.pad < cfg_.kernel || w + 2 * cfg_.pad < cfg_.kernel)
                throw InvalidArgument("cnn: input too small for the kernel");
            conv.out_h = (h + 2 * cfg_.pad - cfg_.kernel) / cfg_.stride + 1;
            conv.out_w = (w + 2 * cfg_.pad - cfg_.kernel) / cfg_.stride + 1;
            conv.dense = {cfg_.kernel * cfg_.kernel * c, f, offset};
            conv.pool_h = (conv.out_h + cfg_.pool - 1) / cfg_.pool;
            conv.pool_w = (conv.out_w + cfg_.pool - 1) / cfg_.pool;
            offset += conv.dense.size();
            convs_.push_back(conv);
            h = conv.pool_h; w = conv.pool_w; c = f;
        }
        flat_ = h * w * c;
        std::size_t prev = flat_ + cfg_.extra_inputs;
        std::vector<std::size_t> sizes = cfg_.fc;
        sizes.push_back(kNumActions);
        for (std::size_t n : sizes) {
            fcs_.push_back({prev, n, offset});
            offset += fcs_.back().size();
            prev = n;
        }
        params_.assign(offset, 0.0);
        for (const auto& cv : convs_)
            detail::init_dense(std::span<double>(params_).subspan(cv.dense.offset, cv.dense.in * cv.dense.out),
                               cv.dense.in, cfg_.kernel * cfg_.kernel * cv.dense.out, rng);
        for (const auto& l : fcs_)
            detail::init_dense(std::span<double>(params_).subspan(l.offset, l.in * l.out), l.in, l.out, rng);
    }

    static Config config_from_json(const nlohmann::json& j) {
        Config c;
        c.rows = j.at("rows").get<std::size_t>();
        c.cols = j.at("cols").get<std::size_t>();
        c.channels = j.value("channels", std::size_t{4});
        c.extra_inputs = j.value("extra_inputs", std::size_t{0});
        c.filters = j.value("filters", c.filters);
        c.kernel = j.value("kernel", c.kernel);
        c.stride = j.value("stride", c.stride);
        c.pad = j.value("pad", c.pad);
        c.pool = j.value("pool", c.pool);
        c.fc = j.value("fc", c.fc);
        c.input_scale = detail::json_scale(j, "input_scale", c.channels);
        c.extra_scale = detail::json_scale(j, "extra_scale", c.extra_inputs);
        return c;
    }

    const Config& config() const { return cfg_; }
    std::size_t grid_size() const { return cfg_.rows * cfg_.cols * cfg_.channels; }

    std::string_view kind() const override { return "cnn"; }
    nlohmann::json architecture() const override {
        return {{"kind", "cnn"},           {"rows", cfg_.rows},         {"cols", cfg_.cols},
                {"channels", cfg_.channels}, {"extra_inputs", cfg_.extra_inputs}, {"filters", cfg_.filters},
                {"kernel", cfg_.kernel},   {"stride", cfg_.stride},     {"pad", cfg_.pad},
                {"pool", cfg_.pool},       {"fc", cfg_.fc},             {"input_scale", cfg_.input_scale},
                {"extra_scale", cfg_.extra_scale}};
    }
    std::size_t input_size() const override { return grid_size() + cfg_.extra_inputs; }
    std::span<double> params() override { return params_; }
    std::span<const double> params() const override { return params_; }

    RowMatrix forward(const RowMatrix& inputs) override { return run(inputs, cache_); }
    RowMatrix evaluate(const RowMatrix& inputs) const override {
        // Per-thread scratch keeps the large im2col buffers allocated between
        // calls; single observations get their own so batch sizes do not thrash it.
        thread_local std::array<Cache, 2> scratch;
        return run(inputs, scratch[inputs.rows() == 1 ? 0 : 1]);
    }

    void backward(const RowMatrix& dq, std::span<double> grad) override {
        const Cache& c = cache_;
        Workspace& w = work_;
        RowMatrix dz = dq;
        for (std::size_t i = fcs_.size(); i-- > 0;) {
            fcs_[i].backward(params_, c.fc_in[i], dz, grad, &w.dx);
            if (i > 0) {
                detail::relu_backward(c.fc_in[i], w.dx);
                dz.swap(w.dx);
            }
        }
        // w.dx holds the gradient w.r.t. [flattened conv features | extras]; extras are inputs.
        const auto batch = static_cast<std::size_t>(dq.rows());
        const std::size_t n = convs_.size();
        w.dpooled.resize(n);
        w.dconv.resize(n);
        w.dcols.resize(n);
        w.dpooled[n - 1] = w.dx.leftCols(static_cast<Eigen::Index>(flat_));
        for (std::size_t li = n; li-- > 0;) {
            const Conv& cv = convs_[li];
            // Per sample, pooled features are laid out (py, px, filter): same memory as rows of filters.
            const Eigen::Map<const RowMatrix> dpool(w.dpooled[li].data(), static_cast<Eigen::Index>(batch * cv.pool_h * cv.pool_w),
                                                    static_cast<Eigen::Index>(cv.dense.out));
            pool_backward(cv, dpool, batch, w.dconv[li]);
            detail::relu_backward(c.conv_out[li], w.dconv[li]);
            cv.dense.backward(params_, c.cols[li], w.dconv[li], grad, li > 0 ? &w.dcols[li] : nullptr);
            if (li > 0) col2im(cv, w.dcols[li], batch, w.dpooled[li - 1]);
        }
    }

    std::unique_ptr<QFunction> clone() const override { return std::make_unique<CnnQ>(*this); }
    void copy_from(const QFunction& other) override {
        const auto* o = dynamic_cast<const CnnQ*>(&other);
        if (!o || o->params_.size() != params_.size() || o->input_size() != input_size())
            throw InvalidArgument("copy_from: architecture mismatch");
        params_ = o->params_;
    }

private:
    struct Conv {
        std::size_t in_h = 0, in_w = 0, in_c = 0;
        std::size_t out_h = 0, out_w = 0;
        std::size_t pool_h = 0, pool_w = 0;
        detail::DenseLayer dense;  ///< in = k*k*in_c, out = filters
    };

    struct Cache {
        RowMatrix scaled;                 ///< scaled input grid, batch x (h*w*c)
        std::vector<RowMatrix> cols;      ///< im2col patches per conv
        std::vector<RowMatrix> conv_out;  ///< post-ReLU conv maps, (batch*out_h*out_w) x filters
        std::vector<RowMatrix> pooled;    ///< pooled maps, (batch*pool_h*pool_w) x filters
        std::vector<RowMatrix> fc_in;     ///< inputs of each dense layer
    };

    struct Workspace {
        RowMatrix dx;
        std::vector<RowMatrix> dpooled, dconv, dcols;  ///< per conv layer, so sizes stay stable
    };

    /// Rows: (sample, out_y, out_x); columns: (ky, kx, channel).
    void im2col(const Conv& cv, const double* in, std::size_t batch, RowMatrix& cols) const {
        const std::size_t k = cfg_.kernel, s = cfg_.stride, p = cfg_.pad, row_len = k * k * cv.in_c;
        cols.resize(static_cast<Eigen::Index>(batch * cv.out_h * cv.out_w), static_cast<Eigen::Index>(row_len));
        cols.setZero();
        const std::size_t sample_size = cv.in_h * cv.in_w * cv.in_c;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* src = in + b * sample_size;
            for (std::size_t oy = 0; oy < cv.out_h; ++oy)
                for (std::size_t ox = 0; ox < cv.out_w; ++ox) {
                    double* row = cols.data() + ((b * cv.out_h + oy) * cv.out_w + ox) * row_len;
                    const auto x0 = static_cast<std::ptrdiff_t>(ox * s) - static_cast<std::ptrdiff_t>(p);
                    const std::size_t kx0 = x0 < 0 ? static_cast<std::size_t>(-x0) : 0;
                    const std::size_t kx1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k), static_cast<std::ptrdiff_t>(cv.in_w) - x0);
                    if (kx1 <= kx0) continue;
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(cv.in_h)) continue;
                        const double* px = src + (static_cast<std::size_t>(iy) * cv.in_w + static_cast<std::size_t>(x0 + static_cast<std::ptrdiff_t>(kx0))) * cv.in_c;
                        std::copy(px, px + (kx1 - kx0) * cv.in_c, row + (ky * k + kx0) * cv.in_c);
                    }
                }
        }
    }

    /// Adjoint of im2col; writes batch x (in_h*in_w*in_c).
    void col2im(const Conv& cv, const RowMatrix& dcols, std::size_t batch, RowMatrix& din) const {
        const std::size_t k = cfg_.kernel, s = cfg_.stride, p = cfg_.pad, row_len = k * k * cv.in_c;
        din.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(cv.in_h * cv.in_w * cv.in_c));
        din.setZero();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t oy = 0; oy < cv.out_h; ++oy)
                for (std::size_t ox = 0; ox < cv.out_w; ++ox) {
                    const double* row = dcols.data() + ((b * cv.out_h + oy) * cv.out_w + ox) * row_len;
                    const auto x0 = static_cast<std::ptrdiff_t>(ox * s) - static_cast<std::ptrdiff_t>(p);
                    const std::size_t kx0 = x0 < 0 ? static_cast<std::size_t>(-x0) : 0;
                    const std::size_t kx1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k), static_cast<std::ptrdiff_t>(cv.in_w) - x0);
                    if (kx1 <= kx0) continue;
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(cv.in_h)) continue;
                        double* dst = din.data() + b * din.cols() +
                                      (static_cast<std::size_t>(iy) * cv.in_w + static_cast<std::size_t>(x0 + static_cast<std::ptrdiff_t>(kx0))) * cv.in_c;
                        const double* g = row + (ky * k + kx0) * cv.in_c;
                        const std::size_t n = (kx1 - kx0) * cv.in_c;
                        for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
                    }
                }
    }

    /// Average pooling with border windows clipped to the map.
    void pool_forward(const Conv& cv, const RowMatrix& conv, std::size_t batch, RowMatrix& out) const {
        const std::size_t f = cv.dense.out, q = cfg_.pool;
        out.resize(static_cast<Eigen::Index>(batch * cv.pool_h * cv.pool_w), static_cast<Eigen::Index>(f));
        out.setZero();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t py = 0; py < cv.pool_h; ++py)
                for (std::size_t px = 0; px < cv.pool_w; ++px) {
                    double* dst = out.data() + ((b * cv.pool_h + py) * cv.pool_w + px) * f;
                    const std::size_t y1 = std::min((py + 1) * q, cv.out_h), x1 = std::min((px + 1) * q, cv.out_w);
                    const double inv = 1.0 / static_cast<double>((y1 - py * q) * (x1 - px * q));
                    for (std::size_t y = py * q; y < y1; ++y)
                        for (std::size_t x = px * q; x < x1; ++x) {
                            const double* src = conv.data() + ((b * cv.out_h + y) * cv.out_w + x) * f;
                            for (std::size_t i = 0; i < f; ++i) dst[i] += src[i];
                        }
                    for (std::size_t i = 0; i < f; ++i) dst[i] *= inv;
                }
    }

    template <typename Grad>
    void pool_backward(const Conv& cv, const Grad& dpool, std::size_t batch, RowMatrix& dconv) const {
        const std::size_t f = cv.dense.out, q = cfg_.pool;
        dconv.resize(static_cast<Eigen::Index>(batch * cv.out_h * cv.out_w), static_cast<Eigen::Index>(f));
        dconv.setZero();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t py = 0; py < cv.pool_h; ++py)
                for (std::size_t px = 0; px < cv.pool_w; ++px) {
                    const double* g = dpool.data() + ((b * cv.pool_h + py) * cv.pool_w + px) * f;
                    const std::size_t y1 = std::min((py + 1) * q, cv.out_h), x1 = std::min((px + 1) * q, cv.out_w);
                    const double inv = 1.0 / static_cast<double>((y1 - py * q) * (x1 - px * q));
                    for (std::size_t y = py * q; y < y1; ++y)
                        for (std::size_t x = px * q; x < x1; ++x) {
                            double* dst = dconv.data() + ((b * cv.out_h + y) * cv.out_w + x) * f;
                            for (std::size_t i = 0; i < f; ++i) dst[i] += inv * g[i];
                        }
                }
    }

    RowMatrix run(const RowMatrix& inputs, Cache& c) const {
        if (static_cast<std::size_t>(inputs.cols()) != input_size()) throw InvalidArgument("cnn: input width mismatch");
        const auto batch = static_cast<std::size_t>(inputs.rows());
        const std::size_t g = grid_size(), ch = cfg_.channels;
        c.scaled.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(g));
        for (std::size_t b = 0; b < batch; ++b) {
            const double* src = inputs.data() + b * static_cast<std::size_t>(inputs.cols());
            double* dst = c.scaled.data() + b * g;
            for (std::size_t i = 0; i < g; i += ch)
                for (std::size_t k = 0; k < ch; ++k) dst[i + k] = src[i + k] * cfg_.input_scale[k];
        }
        c.cols.resize(convs_.size());
        c.conv_out.resize(convs_.size());
        c.pooled.resize(convs_.size());
        c.fc_in.resize(fcs_.size());
        const double* current = c.scaled.data();
        for (std::size_t li = 0; li < convs_.size(); ++li) {
            const Conv& cv = convs_[li];
            im2col(cv, current, batch, c.cols[li]);
            cv.dense.forward(params_, c.cols[li], c.conv_out[li]);
            detail::relu_inplace(c.conv_out[li]);
            pool_forward(cv, c.conv_out[li], batch, c.pooled[li]);
            current = c.pooled[li].data();
        }
        RowMatrix& fc0 = c.fc_in[0];
        fc0.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(flat_ + cfg_.extra_inputs));
        fc0.leftCols(static_cast<Eigen::Index>(flat_)) =
            Eigen::Map<const RowMatrix>(current, static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(flat_));
        for (std::size_t e = 0; e < cfg_.extra_inputs; ++e)
            fc0.col(static_cast<Eigen::Index>(flat_ + e)) =
                inputs.col(static_cast<Eigen::Index>(g + e)) * cfg_.extra_scale[e];
        RowMatrix z;
        for (std::size_t i = 0; i < fcs_.size(); ++i) {
            fcs_[i].forward(params_, c.fc_in[i], z);
            if (i + 1 < fcs_.size()) {
                detail::relu_inplace(z);
                c.fc_in[i + 1] = z;
            }
        }
        return z;
    }

    Config cfg_;
    std::vector<Conv> convs_;
    std::vector<detail::DenseLayer> fcs_;
    std::size_t flat_ = 0;
    ParamVector params_;
    Cache cache_;
    Workspace work_;
};

/// Builds a Q-function from an architecture descriptor.
inline std::unique_ptr<QFunction> make_qfunction(const nlohmann::json& arch, std::uint64_t seed) {
    try {
        const auto kind = arch.at("kind").get<std::string>();
        if (kind == "mlp") {
            const auto inputs = arch.at("inputs").get<std::size_t>();
            return std::make_unique<MlpQ>(inputs, arch.value("hidden", std::vector<std::size_t>{32, 32}), seed,
                                          detail::json_scale(arch, "input_scale", inputs));
        }
        if (kind == "cnn") return std::make_unique<CnnQ>(CnnQ::config_from_json(arch), seed);
        if (kind == "tabular") {
            auto t = std::make_unique<TabularQ>(arch.at("inputs").get<std::size_t>(), arch.value("resolution", 0.5));
            if (arch.contains("keys")) t->restore_keys(arch.at("keys"));
            return t;
        }
        throw ConfigError("unknown Q-function kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("architecture: ") + e.what());
    }
}

}  // namespace lexmorl
