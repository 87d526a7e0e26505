#include "xmove/neural.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

#include "xmove/binary_io.hpp"
#include "xmove/error.hpp"
#include "xmove/metrics.hpp"

namespace xmove::neural {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using StridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using Vec = Eigen::VectorXd;

void uniform_init(std::span<double> values, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : values) v = dist(rng);
}

void expect_rank(const Shape& s, std::size_t rank, const std::string& layer) {
    if (s.size() != rank) {
        throw ShapeError(layer + " expects a rank-" + std::to_string(rank) + " input, got " + shape_string(s));
    }
}

}  // namespace

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), values(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_size(shape)) {
        throw ShapeError("tensor of shape " + shape_string(shape) + " given " + std::to_string(values.size()) +
                         " values");
    }
}

std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

// ---- Conv1d

Conv1d::Conv1d(std::size_t dim, std::size_t height, std::size_t filters)
    : dim_(dim), height_(height), filters_(filters) {
    if (dim == 0 || height == 0 || filters == 0) throw ConfigError("conv1d sizes must be positive");
}

void Conv1d::init(std::span<double> params, std::mt19937_64& rng) const { uniform_init(params, height_ * dim_, rng); }

Shape Conv1d::output_shape(const Shape& in) const {
    expect_rank(in, 2, "conv1d");
    if (in[1] != dim_) throw ShapeError("conv1d expects width " + std::to_string(dim_) + ", got " + shape_string(in));
    if (in[0] < height_) {
        throw ShapeError("conv1d filter height " + std::to_string(height_) + " exceeds " + std::to_string(in[0]) +
                         " slices");
    }
    return {in[0] - height_ + 1, filters_};
}

Tensor Conv1d::forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode&) const {
    const auto out_shape = output_shape(in.shape);
    const std::size_t steps = out_shape[0], window = height_ * dim_;
    StridedMap x(in.values.data(), static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(window),
                 Eigen::OuterStride<>(static_cast<Eigen::Index>(dim_)));
    ConstMap w(params.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(window));
    Eigen::Map<const Vec> b(params.data() + filters_ * window, static_cast<Eigen::Index>(filters_));
    Tensor out(out_shape);
    MutMap y(out.values.data(), static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(filters_));
    y.noalias() = x * w.transpose();
    y.rowwise() += b.transpose();
    cache.input = in;
    return out;
}

Tensor Conv1d::backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                        std::span<double> grads) const {
    const auto& in = cache.input;
    const std::size_t steps = grad_out.shape[0], window = height_ * dim_;
    StridedMap x(in.values.data(), static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(window),
                 Eigen::OuterStride<>(static_cast<Eigen::Index>(dim_)));
    ConstMap w(params.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(window));
    ConstMap g(grad_out.values.data(), static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(filters_));
    MutMap dw(grads.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(window));
    Eigen::Map<Vec> db(grads.data() + filters_ * window, static_cast<Eigen::Index>(filters_));
    dw.noalias() += g.transpose() * x;
    db += g.colwise().sum().transpose();

    const RowMat dwin = g * w;
    Tensor dx(in.shape);
    for (std::size_t t = 0; t < steps; ++t) {
        const double* src = dwin.data() + t * window;
        double* dst = dx.values.data() + t * dim_;
        for (std::size_t j = 0; j < window; ++j) dst[j] += src[j];
    }
    return dx;
}

Tensor conv1d(const Matrix& input, const Tensor& weights, std::span<const double> bias) {
    if (weights.shape.size() != 3) throw ShapeError("conv1d weights must be [filters, height, dim]");
    const std::size_t f = weights.shape[0], h = weights.shape[1], d = weights.shape[2];
    if (bias.size() != f) throw ShapeError("conv1d bias length must equal the filter count");
    Conv1d layer(d, h, f);
    std::vector<double> params(weights.values);
    params.insert(params.end(), bias.begin(), bias.end());
    Cache cache;
    return layer.forward(params, Tensor({input.rows(), input.cols()}, input.data()), cache, Mode{});
}

// ---- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
    : in_(in_channels), out_(out_channels), k_(kernel) {
    if (in_ == 0 || out_ == 0 || k_ == 0) throw ConfigError("conv2d sizes must be positive");
}

void Conv2d::init(std::span<double> params, std::mt19937_64& rng) const { uniform_init(params, in_ * k_ * k_, rng); }

Shape Conv2d::output_shape(const Shape& in) const {
    expect_rank(in, 3, "conv2d");
    if (in[0] != in_) throw ShapeError("conv2d expects " + std::to_string(in_) + " channels, got " + shape_string(in));
    if (in[1] < k_ || in[2] < k_) {
        throw ShapeError("conv2d kernel " + std::to_string(k_) + " larger than input " + shape_string(in));
    }
    return {out_, in[1] - k_ + 1, in[2] - k_ + 1};
}

Tensor Conv2d::forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode&) const {
    const auto os = output_shape(in.shape);
    const std::size_t H = in.shape[1], W = in.shape[2], oh = os[1], ow = os[2];
    Tensor out(os);
    const double* bias = params.data() + out_ * in_ * k_ * k_;
    for (std::size_t o = 0; o < out_; ++o) {
        double* y = out.values.data() + o * oh * ow;
        std::fill(y, y + oh * ow, bias[o]);
        for (std::size_t i = 0; i < in_; ++i) {
            const double* x = in.values.data() + i * H * W;
            const double* w = params.data() + ((o * in_ + i) * k_) * k_;
            for (std::size_t a = 0; a < k_; ++a) {
                for (std::size_t b = 0; b < k_; ++b) {
                    const double wv = w[a * k_ + b];
                    for (std::size_t r = 0; r < oh; ++r) {
                        const double* xr = x + (r + a) * W + b;
                        double* yr = y + r * ow;
                        for (std::size_t c = 0; c < ow; ++c) yr[c] += wv * xr[c];
                    }
                }
            }
        }
    }
    cache.input = in;
    return out;
}

Tensor Conv2d::backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                        std::span<double> grads) const {
    const auto& in = cache.input;
    const std::size_t H = in.shape[1], W = in.shape[2], oh = grad_out.shape[1], ow = grad_out.shape[2];
    Tensor dx(in.shape);
    double* dbias = grads.data() + out_ * in_ * k_ * k_;
    for (std::size_t o = 0; o < out_; ++o) {
        const double* g = grad_out.values.data() + o * oh * ow;
        dbias[o] += std::accumulate(g, g + oh * ow, 0.0);
        for (std::size_t i = 0; i < in_; ++i) {
            const double* x = in.values.data() + i * H * W;
            double* dxi = dx.values.data() + i * H * W;
            const std::size_t base = ((o * in_ + i) * k_) * k_;
            for (std::size_t a = 0; a < k_; ++a) {
                for (std::size_t b = 0; b < k_; ++b) {
                    const double wv = params[base + a * k_ + b];
                    double acc = 0.0;
                    for (std::size_t r = 0; r < oh; ++r) {
                        const double* xr = x + (r + a) * W + b;
                        double* dxr = dxi + (r + a) * W + b;
                        const double* gr = g + r * ow;
                        for (std::size_t c = 0; c < ow; ++c) {
                            acc += gr[c] * xr[c];
                            dxr[c] += wv * gr[c];
                        }
                    }
                    grads[base + a * k_ + b] += acc;
                }
            }
        }
    }
    return dx;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias) {
    if (weights.shape.size() != 4 || weights.shape[2] != weights.shape[3]) {
        throw ShapeError("conv2d weights must be [out, in, k, k]");
    }
    if (bias.size() != weights.shape[0]) throw ShapeError("conv2d bias length must equal the output channels");
    Conv2d layer(weights.shape[1], weights.shape[0], weights.shape[2]);
    std::vector<double> params(weights.values);
    params.insert(params.end(), bias.begin(), bias.end());
    Cache cache;
    return layer.forward(params, input, cache, Mode{});
}

// ---- pooling

MaxPool2d::MaxPool2d(std::size_t k) : k_(k) {
    if (k == 0) throw ConfigError("pool size must be positive");
}

Shape MaxPool2d::output_shape(const Shape& in) const {
    expect_rank(in, 3, "maxpool2d");
    if (in[1] < k_ || in[2] < k_) throw ShapeError("maxpool2d window larger than input " + shape_string(in));
    return {in[0], in[1] / k_, in[2] / k_};
}

Tensor MaxPool2d::forward(std::span<const double>, const Tensor& in, Cache& cache, const Mode&) const {
    const auto os = output_shape(in.shape);
    const std::size_t H = in.shape[1], W = in.shape[2];
    Tensor out(os);
    cache.index.assign(out.size(), 0);
    cache.input.shape = in.shape;
    std::size_t n = 0;
    for (std::size_t c = 0; c < os[0]; ++c) {
        for (std::size_t r = 0; r < os[1]; ++r) {
            for (std::size_t q = 0; q < os[2]; ++q, ++n) {
                std::size_t best = c * H * W + (r * k_) * W + q * k_;
                for (std::size_t a = 0; a < k_; ++a) {
                    for (std::size_t b = 0; b < k_; ++b) {
                        const std::size_t idx = c * H * W + (r * k_ + a) * W + q * k_ + b;
                        if (in.values[idx] > in.values[best]) best = idx;
                    }
                }
                cache.index[n] = best;
                out.values[n] = in.values[best];
            }
        }
    }
    return out;
}

Tensor MaxPool2d::backward(std::span<const double>, const Tensor& grad_out, const Cache& cache,
                           std::span<double>) const {
    Tensor dx(cache.input.shape);
    for (std::size_t n = 0; n < grad_out.size(); ++n) dx.values[cache.index[n]] += grad_out.values[n];
    return dx;
}

Shape GlobalMaxPool::output_shape(const Shape& in) const {
    expect_rank(in, 2, "global_maxpool");
    if (in[0] == 0) throw ShapeError("global_maxpool over an empty map");
    return {in[1]};
}

Tensor GlobalMaxPool::forward(std::span<const double>, const Tensor& in, Cache& cache, const Mode&) const {
    const auto os = output_shape(in.shape);
    const std::size_t L = in.shape[0], F = in.shape[1];
    Tensor out(os);
    cache.index.assign(F, 0);
    cache.input.shape = in.shape;
    for (std::size_t f = 0; f < F; ++f) {
        std::size_t best = f;
        for (std::size_t t = 1; t < L; ++t) {
            if (in.values[t * F + f] > in.values[best]) best = t * F + f;
        }
        cache.index[f] = best;
        out.values[f] = in.values[best];
    }
    return out;
}

Tensor GlobalMaxPool::backward(std::span<const double>, const Tensor& grad_out, const Cache& cache,
                               std::span<double>) const {
    Tensor dx(cache.input.shape);
    for (std::size_t f = 0; f < grad_out.size(); ++f) dx.values[cache.index[f]] += grad_out.values[f];
    return dx;
}

double maxpool_full(std::span<const double> map) {
    if (map.empty()) throw ShapeError("max pooling over an empty map");
    return *std::max_element(map.begin(), map.end());
}

// ---- flatten / dense / activations

Shape Flatten::output_shape(const Shape& in) const { return {shape_size(in)}; }

Tensor Flatten::forward(std::span<const double>, const Tensor& in, Cache& cache, const Mode&) const {
    cache.input.shape = in.shape;
    return Tensor({in.size()}, in.values);
}

Tensor Flatten::backward(std::span<const double>, const Tensor& grad_out, const Cache& cache, std::span<double>) const {
    return Tensor(cache.input.shape, grad_out.values);
}

Dense::Dense(std::size_t in, std::size_t out) : in_(in), out_(out) {
    if (in == 0 || out == 0) throw ConfigError("dense sizes must be positive");
}

void Dense::init(std::span<double> params, std::mt19937_64& rng) const { uniform_init(params, in_, rng); }

Shape Dense::output_shape(const Shape& in) const {
    if (in.size() != 1 || in[0] != in_) {
        throw ShapeError("dense expects [" + std::to_string(in_) + "], got " + shape_string(in));
    }
    return {out_};
}

Tensor Dense::forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode&) const {
    output_shape(in.shape);
    ConstMap w(params.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    Eigen::Map<const Vec> b(params.data() + out_ * in_, static_cast<Eigen::Index>(out_));
    Eigen::Map<const Vec> x(in.values.data(), static_cast<Eigen::Index>(in_));
    Tensor out({out_});
    Eigen::Map<Vec> y(out.values.data(), static_cast<Eigen::Index>(out_));
    y.noalias() = w * x;
    y += b;
    cache.input = in;
    return out;
}

Tensor Dense::backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                       std::span<double> grads) const {
    ConstMap w(params.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    Eigen::Map<const Vec> x(cache.input.values.data(), static_cast<Eigen::Index>(in_));
    Eigen::Map<const Vec> g(grad_out.values.data(), static_cast<Eigen::Index>(out_));
    MutMap dw(grads.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    Eigen::Map<Vec> db(grads.data() + out_ * in_, static_cast<Eigen::Index>(out_));
    dw.noalias() += g * x.transpose();
    db += g;
    Tensor dx({in_});
    Eigen::Map<Vec>(dx.values.data(), static_cast<Eigen::Index>(in_)).noalias() = w.transpose() * g;
    return dx;
}

Tensor Relu::forward(std::span<const double>, const Tensor& in, Cache& cache, const Mode&) const {
    Tensor out = in;
    for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
    cache.input = in;
    return out;
}

Tensor Relu::backward(std::span<const double>, const Tensor& grad_out, const Cache& cache, std::span<double>) const {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(cache.input.values[i] > 0.0)) dx.values[i] = 0.0;
    }
    return dx;
}

Dropout::Dropout(double p) : p_(p) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
}

Tensor Dropout::forward(std::span<const double>, const Tensor& in, Cache& cache, const Mode& mode) const {
    if (!mode.training || p_ == 0.0) {
        cache.output = Tensor(in.shape, 1.0);
        return in;
    }
    if (mode.rng == nullptr) throw ConfigError("dropout in training mode needs a random generator");
    std::bernoulli_distribution keep(1.0 - p_);
    const double scale = 1.0 / (1.0 - p_);
    cache.output = Tensor(in.shape);
    Tensor out = in;
    for (std::size_t i = 0; i < in.size(); ++i) {
        cache.output.values[i] = keep(*mode.rng) ? scale : 0.0;
        out.values[i] *= cache.output.values[i];
    }
    return out;
}

Tensor Dropout::backward(std::span<const double>, const Tensor& grad_out, const Cache& cache,
                         std::span<double>) const {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.values[i] *= cache.output.values[i];
    return dx;
}

// ---- containers

std::size_t Sequential::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->param_count();
    return n;
}

void Sequential::init(std::span<double> params, std::mt19937_64& rng) const {
    std::size_t off = 0;
    for (const auto& l : layers_) {
        l->init(params.subspan(off, l->param_count()), rng);
        off += l->param_count();
    }
}

Shape Sequential::output_shape(const Shape& in) const {
    Shape s = in;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
}

Tensor Sequential::forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const {
    cache.children.resize(layers_.size());
    Tensor x = in;
    std::size_t off = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto n = layers_[i]->param_count();
        x = layers_[i]->forward(params.subspan(off, n), x, cache.children[i], mode);
        off += n;
    }
    return x;
}

Tensor Sequential::backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                            std::span<double> grads) const {
    Tensor g = grad_out;
    std::size_t off = param_count();
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto n = layers_[i]->param_count();
        off -= n;
        g = layers_[i]->backward(params.subspan(off, n), g, cache.children[i], grads.subspan(off, n));
    }
    return g;
}

std::size_t Concat::param_count() const {
    std::size_t n = 0;
    for (const auto& b : branches_) n += b->param_count();
    return n;
}

void Concat::init(std::span<double> params, std::mt19937_64& rng) const {
    std::size_t off = 0;
    for (const auto& b : branches_) {
        b->init(params.subspan(off, b->param_count()), rng);
        off += b->param_count();
    }
}

Shape Concat::output_shape(const Shape& in) const {
    std::size_t n = 0;
    for (const auto& b : branches_) n += shape_size(b->output_shape(in));
    return {n};
}

Tensor Concat::forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const {
    cache.children.resize(branches_.size());
    cache.index.clear();
    std::vector<double> joined;
    std::size_t off = 0;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
        const auto n = branches_[i]->param_count();
        Tensor y = branches_[i]->forward(params.subspan(off, n), in, cache.children[i], mode);
        cache.index.push_back(y.size());
        cache.children[i].output.shape = y.shape;
        joined.insert(joined.end(), y.values.begin(), y.values.end());
        off += n;
    }
    cache.input.shape = in.shape;
    const std::size_t n = joined.size();
    return Tensor({n}, std::move(joined));
}

Tensor Concat::backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                        std::span<double> grads) const {
    Tensor dx(cache.input.shape);
    std::size_t poff = 0, goff = 0;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
        const auto n = branches_[i]->param_count();
        const auto m = cache.index[i];
        Tensor g(cache.children[i].output.shape,
                 std::vector<double>(grad_out.values.begin() + static_cast<std::ptrdiff_t>(goff),
                                     grad_out.values.begin() + static_cast<std::ptrdiff_t>(goff + m)));
        Tensor d = branches_[i]->backward(params.subspan(poff, n), g, cache.children[i], grads.subspan(poff, n));
        for (std::size_t j = 0; j < dx.size(); ++j) dx.values[j] += d.values[j];
        poff += n;
        goff += m;
    }
    return dx;
}

// ---- model specs

namespace {

void add_head(Sequential& net, std::size_t in, const std::vector<std::size_t>& dense, double dropout) {
    for (std::size_t i = 0; i < dense.size(); ++i) {
        net.add(std::make_unique<Dense>(in, dense[i]));
        net.add(std::make_unique<Relu>());
        if (i == 0 && dropout > 0.0) net.add(std::make_unique<Dropout>(dropout));
        in = dense[i];
    }
    net.add(std::make_unique<Dense>(in, 2));
}

}  // namespace

Shape input_shape(const ModelSpec& spec) {
    return std::visit(
        [](const auto& s) -> Shape {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ParallelCnnSpec>) return {s.max_slices, s.embedding_dim};
            else return {1, s.max_slices, s.embedding_dim};
        },
        spec);
}

std::unique_ptr<Sequential> build_network(const ModelSpec& spec) {
    auto net = std::make_unique<Sequential>();
    if (const auto* p = std::get_if<ParallelCnnSpec>(&spec)) {
        if (p->filter_heights.empty()) throw ConfigError("parallel CNN needs at least one filter height");
        auto branches = std::make_unique<Concat>();
        for (auto h : p->filter_heights) {
            auto branch = std::make_unique<Sequential>();
            branch->add(std::make_unique<Conv1d>(p->embedding_dim, h, p->n_filters));
            branch->add(std::make_unique<Relu>());
            branch->add(std::make_unique<GlobalMaxPool>());
            branches->add(std::move(branch));
        }
        net->add(std::move(branches));
        add_head(*net, p->n_filters * p->filter_heights.size(), p->dense, p->dropout);
    } else {
        const auto& s = std::get<SequentialCnnSpec>(spec);
        if (s.channels.size() != 3) throw ConfigError("sequential CNN needs exactly three channel counts");
        Shape shape = input_shape(spec);
        std::size_t in = 1;
        for (std::size_t i = 0; i < 3; ++i) {
            net->add(std::make_unique<Conv2d>(in, s.channels[i], kSequentialKernels[i]));
            net->add(std::make_unique<Relu>());
            if (s.pool > 1) net->add(std::make_unique<MaxPool2d>(s.pool));
            in = s.channels[i];
        }
        net->add(std::make_unique<Flatten>());
        shape = net->output_shape(shape);
        add_head(*net, shape[0], s.dense, s.dropout);
    }
    const auto out = net->output_shape(input_shape(spec));
    if (out != Shape{2}) throw ShapeError("network output must be [2], got " + shape_string(out));
    return net;
}

void validate(const ModelSpec& spec) {
    std::visit(
        [](const auto& s) {
            if (s.embedding_dim == 0 || s.max_slices == 0) throw ConfigError("model input sizes must be positive");
            if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
        },
        spec);
    build_network(spec);
}

std::size_t parameter_count(const ModelSpec& spec) { return build_network(spec)->param_count(); }

nlohmann::json to_json(const ModelSpec& spec) {
    if (const auto* p = std::get_if<ParallelCnnSpec>(&spec)) {
        return {{"arch", "parallel"},        {"embedding_dim", p->embedding_dim}, {"max_slices", p->max_slices},
                {"filter_heights", p->filter_heights}, {"n_filters", p->n_filters}, {"dense", p->dense},
                {"dropout", p->dropout}};
    }
    const auto& s = std::get<SequentialCnnSpec>(spec);
    return {{"arch", "sequential"}, {"embedding_dim", s.embedding_dim}, {"max_slices", s.max_slices},
            {"channels", s.channels}, {"pool", s.pool},                  {"dense", s.dense},
            {"dropout", s.dropout}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    try {
        const auto arch = j.at("arch").get<std::string>();
        if (arch == "parallel") {
            ParallelCnnSpec p;
            j.at("embedding_dim").get_to(p.embedding_dim);
            j.at("max_slices").get_to(p.max_slices);
            j.at("filter_heights").get_to(p.filter_heights);
            j.at("n_filters").get_to(p.n_filters);
            j.at("dense").get_to(p.dense);
            j.at("dropout").get_to(p.dropout);
            return p;
        }
        if (arch == "sequential") {
            SequentialCnnSpec s;
            j.at("embedding_dim").get_to(s.embedding_dim);
            j.at("max_slices").get_to(s.max_slices);
            j.at("channels").get_to(s.channels);
            j.at("pool").get_to(s.pool);
            j.at("dense").get_to(s.dense);
            j.at("dropout").get_to(s.dropout);
            return s;
        }
        throw FormatError("unknown architecture '" + arch + "'");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad model spec: ") + e.what());
    }
}

// ---- softmax and losses

std::array<double, 2> softmax(std::span<const double> logits) {
    if (logits.size() != 2) throw ShapeError("softmax expects two logits");
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
    const double s = e0 + e1;
    return {e0 / s, e1 / s};
}

void FocalLossParams::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("focal alpha must be in [0, 1]");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("focal gamma must be >= 0");
}

double bce_loss(double p, bool target) {
    const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
    return -std::log(target ? pc : 1.0 - pc);
}

double focal_loss(double p, bool target, const FocalLossParams& params) {
    const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
    const double pt = target ? pc : 1.0 - pc;
    const double at = params.use_alpha ? (target ? params.alpha : 1.0 - params.alpha) : 1.0;
    return -at * std::pow(1.0 - pt, params.gamma) * std::log(pt);
}

double loss_value(double p, bool target, const LossSpec& spec) {
    return spec.kind == LossKind::Bce ? bce_loss(p, target) : focal_loss(p, target, spec.focal);
}

double loss_grad(double p, bool target, const LossSpec& spec) {
    if (p < kProbEps || p > 1.0 - kProbEps) return 0.0;
    const double pt = target ? p : 1.0 - p;
    const double sign = target ? 1.0 : -1.0;
    if (spec.kind == LossKind::Bce) return sign * (-1.0 / pt);
    const auto& f = spec.focal;
    const double at = f.use_alpha ? (target ? f.alpha : 1.0 - f.alpha) : 1.0;
    double d = std::pow(1.0 - pt, f.gamma) / pt;
    if (f.gamma != 0.0) d -= f.gamma * std::pow(1.0 - pt, f.gamma - 1.0) * std::log(pt);
    return sign * (-at * d);
}

// ---- Adam

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must be in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("Adam eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
    if (grads.size() != params.size()) throw ShapeError("gradient and parameter sizes differ");
    if (state.m.empty() && state.v.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("optimizer state does not match the parameter count");
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + cfg.weight_decay * params[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// ---- model

CnnModel::CnnModel(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), net_(build_network(spec_)) {
    params_.assign(net_->param_count(), 0.0);
    std::mt19937_64 rng(seed);
    net_->init(params_, rng);
}

CnnModel::CnnModel(ModelSpec spec, std::vector<double> params)
    : spec_(std::move(spec)), net_(build_network(spec_)), params_(std::move(params)) {
    if (params_.size() != net_->param_count()) {
        throw ShapeError("model expects " + std::to_string(net_->param_count()) + " parameters, got " +
                         std::to_string(params_.size()));
    }
}

CnnModel::CnnModel(const CnnModel& other)
    : spec_(other.spec_), net_(other.net_ ? build_network(other.spec_) : nullptr), params_(other.params_) {}

CnnModel& CnnModel::operator=(const CnnModel& other) {
    if (this != &other) {
        spec_ = other.spec_;
        net_ = other.net_ ? build_network(other.spec_) : nullptr;
        params_ = other.params_;
    }
    return *this;
}

Tensor CnnModel::to_input(const Matrix& stack) const {
    const Shape want = input_shape(spec_);
    const std::size_t rows = want[want.size() - 2], cols = want.back();
    if (stack.rows() != rows || stack.cols() != cols) {
        throw ShapeError("model expects a " + std::to_string(rows) + "x" + std::to_string(cols) + " stack, got " +
                         std::to_string(stack.rows()) + "x" + std::to_string(stack.cols()));
    }
    return Tensor(want, stack.data());
}

std::array<double, 2> CnnModel::logits(const Tensor& input, Cache& cache, const Mode& mode) const {
    const Tensor out = net_->forward(params_, input, cache, mode);
    return {out.values[0], out.values[1]};
}

std::array<double, 2> CnnModel::logits(const Matrix& stack) const {
    Cache cache;
    return logits(to_input(stack), cache, Mode{});
}

double predict_proba_nn(const CnnModel& model, const Matrix& stack) {
    const auto z = model.logits(stack);
    return softmax(z)[kPositive];
}

namespace {

double loss_and_backward(const CnnModel& model, const Tensor& input, bool target, const LossSpec& loss,
                         const Mode& mode, std::vector<double>* grad) {
    Cache cache;
    const auto z = model.logits(input, cache, mode);
    const double p = softmax(z)[kPositive];
    const double value = loss_value(p, target, loss);
    if (grad != nullptr) {
        const double dz = loss_grad(p, target, loss) * p * (1.0 - p);
        Tensor g({2});
        g.values[kPositive] = dz;
        g.values[1 - kPositive] = -dz;
        model.network().backward(model.params(), g, cache, *grad);
    }
    return value;
}

}  // namespace

double sample_loss(const CnnModel& model, const Matrix& stack, bool target, const LossSpec& loss,
                   std::vector<double>* grad) {
    if (grad != nullptr && grad->size() != model.params().size()) grad->assign(model.params().size(), 0.0);
    return loss_and_backward(model, model.to_input(stack), target, loss, Mode{}, grad);
}

// ---- training

void TrainConfig::validate() const {
    adam.validate();
    if (loss.kind == LossKind::Focal) loss.focal.validate();
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation fraction must be in (0, 1)");
    }
}

Dataset dataset_from_matrices(std::vector<Matrix> inputs, std::vector<bool> labels) {
    if (inputs.size() != labels.size()) throw ShapeError("inputs and labels differ in length");
    auto shared = std::make_shared<std::vector<Matrix>>(std::move(inputs));
    Dataset d;
    d.size = shared->size();
    d.input = [shared](std::size_t i) { return (*shared)[i]; };
    d.labels = std::move(labels);
    return d;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(const std::vector<bool>& labels,
                                                                                 double fraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train_idx, val_idx;
    for (bool cls : {false, true}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) members.push_back(i);
        }
        std::shuffle(members.begin(), members.end(), rng);
        auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        if (n_val == 0 && members.size() >= 2) n_val = 1;
        if (n_val >= members.size() && !members.empty()) n_val = members.size() - 1;
        val_idx.insert(val_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {train_idx, val_idx};
}

TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    validate(spec);
    if (data.size == 0 || data.labels.size() != data.size) throw TrainingError("empty or inconsistent dataset");
    const auto positives = std::count(data.labels.begin(), data.labels.end(), true);
    if (positives == 0 || static_cast<std::size_t>(positives) == data.size) {
        throw TrainingError("training data contains a single class");
    }

    TrainResult result;
    std::tie(result.train_indices, result.val_indices) =
        stratified_holdout(data.labels, cfg.validation_fraction, cfg.seed);
    if (result.val_indices.empty()) throw TrainingError("too few samples for a validation split");
    std::size_t train_pos = 0;
    for (auto i : result.train_indices) train_pos += data.labels[i];
    if (train_pos == 0 || train_pos == result.train_indices.size()) {
        throw TrainingError("training portion contains a single class");
    }

    CnnModel model(spec, cfg.seed);
    std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    AdamState state;
    const Mode train_mode{true, &rng};

    std::vector<Tensor> val_inputs;
    std::vector<bool> val_labels;
    for (auto i : result.val_indices) {
        val_inputs.push_back(model.to_input(data.input(i)));
        val_labels.push_back(data.labels[i]);
    }

    CnnModel best = model;
    double best_f1 = -1.0, best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    bool first_batch = true;
    std::vector<std::size_t> order = result.train_indices;
    std::vector<double> grad(model.params().size());

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto idx = order[k];
                batch_loss +=
                    loss_and_backward(model, model.to_input(data.input(idx)), data.labels[idx], cfg.loss, train_mode,
                                      &grad);
            }
            const double n = static_cast<double>(end - start);
            for (auto& g : grad) g /= n;
            if (first_batch) {
                result.first_batch_loss = batch_loss / n;
                first_batch = false;
            }
            epoch_loss += batch_loss;
            adam_step(model.params(), grad, state, cfg.adam);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(order.size());
        std::vector<bool> preds;
        double val_loss = 0.0;
        for (std::size_t k = 0; k < val_inputs.size(); ++k) {
            Cache cache;
            const double p = softmax(model.logits(val_inputs[k], cache, Mode{}))[kPositive];
            val_loss += loss_value(p, val_labels[k], cfg.loss);
            preds.push_back(p > 0.5);
        }
        stats.val_loss = val_loss / static_cast<double>(val_inputs.size());
        stats.val_f1 = positive_f1(count_outcomes(preds, val_labels));
        result.history.push_back(stats);

        if (stats.val_f1 > best_f1 || (stats.val_f1 == best_f1 && stats.val_loss < best_loss)) {
            best_f1 = stats.val_f1;
            best_loss = stats.val_loss;
            best = model;
            result.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    result.model = std::move(best);
    return result;
}

// ---- checkpoints

namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'X', 'M', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(std::ostream& out, const CnnModel& model) {
    using binary_io::put_uint;
    const std::string spec = to_json(model.spec()).dump();
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    put_uint<std::uint32_t>(out, kCheckpointVersion);
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
    out.write(spec.data(), static_cast<std::streamsize>(spec.size()));
    put_uint<std::uint64_t>(out, model.params().size());
    for (double v : model.params()) put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

CnnModel load_checkpoint(std::istream& in) {
    binary_io::ByteReader r(in, "model checkpoint");
    std::array<char, 4> magic{};
    r.read(magic.data(), magic.size());
    if (magic != kCheckpointMagic) throw FormatError("not a model checkpoint (bad magic)");
    const auto version = r.uint<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    std::string spec_text(r.uint<std::uint32_t>(), '\0');
    r.read(spec_text.data(), spec_text.size());
    nlohmann::json spec_json;
    try {
        spec_json = nlohmann::json::parse(spec_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint spec: ") + e.what());
    }
    const ModelSpec spec = model_spec_from_json(spec_json);
    const auto count = r.uint<std::uint64_t>();
    const auto expected = parameter_count(spec);
    if (count != expected) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, spec needs " +
                          std::to_string(expected));
    }
    std::vector<double> params(count);
    for (auto& v : params) v = std::bit_cast<double>(r.uint<std::uint64_t>());
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint parameters");
    return CnnModel(spec, std::move(params));
}

void save_checkpoint_file(const std::string& path, const CnnModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DependencyError("cannot write '" + path + "'");
    save_checkpoint(out, model);
}

CnnModel load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("cannot open '" + path + "'");
    return load_checkpoint(in);
}

}  // namespace xmove::neural
