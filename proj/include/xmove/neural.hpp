#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmove/matrix.hpp"

namespace xmove::neural {

using Shape = std::vector<std::size_t>;

struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

std::size_t shape_size(const Shape& s);
std::string shape_string(const Shape& s);

struct Mode {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // required when training with dropout
};

// Per-call scratch a layer keeps between forward and backward.
struct Cache {
    Tensor input;
    Tensor output;
    std::vector<std::size_t> index;
    std::vector<Cache> children;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string name() const = 0;
    virtual std::size_t param_count() const { return 0; }
    virtual void init(std::span<double> /*params*/, std::mt19937_64& /*rng*/) const {}
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const = 0;
    // Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
    virtual Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                            std::span<double> grads) const = 0;
};

// Input [L, D]; `filters` windows of `height` full-width rows. Output [L-height+1, filters].
class Conv1d : public Layer {
public:
    Conv1d(std::size_t dim, std::size_t height, std::size_t filters);
    std::string name() const override { return "conv1d"; }
    std::size_t param_count() const override { return filters_ * (height_ * dim_ + 1); }
    void init(std::span<double> params, std::mt19937_64& rng) const override;
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;

private:
    std::size_t dim_, height_, filters_;
};

// Input [C_in, H, W], square kernel k, output [C_out, H-k+1, W-k+1].
class Conv2d : public Layer {
public:
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);
    std::string name() const override { return "conv2d"; }
    std::size_t param_count() const override { return out_ * (in_ * k_ * k_ + 1); }
    void init(std::span<double> params, std::mt19937_64& rng) const override;
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;

private:
    std::size_t in_, out_, k_;
};

// Non-overlapping k x k pooling on [C, H, W]; trailing rows/cols that do not fill a window are dropped.
class MaxPool2d : public Layer {
public:
    explicit MaxPool2d(std::size_t k);
    std::string name() const override { return "maxpool2d"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;

private:
    std::size_t k_;
};

// Max over the whole map: [L, F] -> [F]. Ties route to the first index.
class GlobalMaxPool : public Layer {
public:
    std::string name() const override { return "global_maxpool"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;
};

class Flatten : public Layer {
public:
    std::string name() const override { return "flatten"; }
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;
};

class Dense : public Layer {
public:
    Dense(std::size_t in, std::size_t out);
    std::string name() const override { return "dense"; }
    std::size_t param_count() const override { return out_ * (in_ + 1); }
    void init(std::span<double> params, std::mt19937_64& rng) const override;
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;

private:
    std::size_t in_, out_;
};

class Relu : public Layer {
public:
    std::string name() const override { return "relu"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;
};

// Inverted dropout: kept units are scaled by 1/(1-p) in training, identity otherwise.
class Dropout : public Layer {
public:
    explicit Dropout(double p);
    std::string name() const override { return "dropout"; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;

private:
    double p_;
};

// Ordered chain of layers sharing one flat parameter span.
class Sequential : public Layer {
public:
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
    std::string name() const override { return "sequential"; }
    std::size_t param_count() const override;
    void init(std::span<double> params, std::mt19937_64& rng) const override;
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Runs each branch on the same input and concatenates the flattened outputs.
class Concat : public Layer {
public:
    void add(std::unique_ptr<Layer> branch) { branches_.push_back(std::move(branch)); }
    std::string name() const override { return "concat"; }
    std::size_t param_count() const override;
    void init(std::span<double> params, std::mt19937_64& rng) const override;
    Shape output_shape(const Shape& in) const override;
    Tensor forward(std::span<const double> params, const Tensor& in, Cache& cache, const Mode& mode) const override;
    Tensor backward(std::span<const double> params, const Tensor& grad_out, const Cache& cache,
                    std::span<double> grads) const override;

private:
    std::vector<std::unique_ptr<Layer>> branches_;
};

// Free-function forms of the primitive ops.
Tensor conv1d(const Matrix& input, const Tensor& weights, std::span<const double> bias);  // weights [f, h, D]
Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias);  // weights [o, i, k, k]
double maxpool_full(std::span<const double> map);

struct ParallelCnnSpec {
    std::size_t embedding_dim = 768;
    std::size_t max_slices = 362;
    std::vector<std::size_t> filter_heights{3, 4, 5};
    std::size_t n_filters = 100;
    std::vector<std::size_t> dense{2048, 512};
    double dropout = 0.5;
};

struct SequentialCnnSpec {
    std::size_t embedding_dim = 768;
    std::size_t max_slices = 362;
    std::vector<std::size_t> channels{6, 16, 16};  // kernels are 5, 4, 3
    std::size_t pool = 2;                          // 0 or 1 disables pooling
    std::vector<std::size_t> dense{119, 84};
    double dropout = 0.5;
};

inline constexpr std::size_t kSequentialKernels[3] = {5, 4, 3};

using ModelSpec = std::variant<ParallelCnnSpec, SequentialCnnSpec>;

void validate(const ModelSpec& spec);
nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
std::unique_ptr<Sequential> build_network(const ModelSpec& spec);
Shape input_shape(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

// Index of the positive class in the 2-logit output.
inline constexpr std::size_t kPositive = 0;

std::array<double, 2> softmax(std::span<const double> logits);

struct FocalLossParams {
    double alpha = 0.25;
    double gamma = 2.0;
    bool use_alpha = true;  // false -> alpha_t = 1

    void validate() const;
};

enum class LossKind { Bce, Focal };

struct LossSpec {
    LossKind kind = LossKind::Bce;
    FocalLossParams focal;
};

inline constexpr double kProbEps = 1e-7;

double bce_loss(double p, bool target);
double focal_loss(double p, bool target, const FocalLossParams& params);
double loss_value(double p, bool target, const LossSpec& spec);
// d(loss)/dp of the clamped loss.
double loss_grad(double p, bool target, const LossSpec& spec);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void validate() const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

class CnnModel {
public:
    CnnModel() = default;
    CnnModel(ModelSpec spec, std::uint64_t seed);
    CnnModel(ModelSpec spec, std::vector<double> params);
    CnnModel(const CnnModel& other);
    CnnModel& operator=(const CnnModel& other);
    CnnModel(CnnModel&&) = default;
    CnnModel& operator=(CnnModel&&) = default;

    const ModelSpec& spec() const { return spec_; }
    const Sequential& network() const { return *net_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    Tensor to_input(const Matrix& stack) const;
    std::array<double, 2> logits(const Matrix& stack) const;
    std::array<double, 2> logits(const Tensor& input, Cache& cache, const Mode& mode) const;

private:
    ModelSpec spec_;
    std::unique_ptr<Sequential> net_;
    std::vector<double> params_;
};

double predict_proba_nn(const CnnModel& model, const Matrix& stack);

// Loss of one sample in evaluation mode; adds d(loss)/d(params) to `grad` when given.
double sample_loss(const CnnModel& model, const Matrix& stack, bool target, const LossSpec& loss,
                   std::vector<double>* grad = nullptr);

struct TrainConfig {
    AdamConfig adam;
    LossSpec loss;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::size_t patience = 5;
    double validation_fraction = 0.1;
    std::uint64_t seed = 42;

    void validate() const;
};

// Lazily materialized samples; inputs are padded stacks.
struct Dataset {
    std::size_t size = 0;
    std::function<Matrix(std::size_t)> input;
    std::vector<bool> labels;
};

Dataset dataset_from_matrices(std::vector<Matrix> inputs, std::vector<bool> labels);

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_f1 = 0.0;
};

struct TrainResult {
    CnnModel model;
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
    double first_batch_loss = 0.0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

// Stratified seeded split; returns (train, validation) indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(const std::vector<bool>& labels,
                                                                                 double fraction, std::uint64_t seed);

TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg);

void save_checkpoint(std::ostream& out, const CnnModel& model);
CnnModel load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const CnnModel& model);
CnnModel load_checkpoint_file(const std::string& path);

}  // namespace xmove::neural
