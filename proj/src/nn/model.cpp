#include "emberflow/model.hpp"

#include <cmath>

namespace emberflow {

void ModelConfig::validate() const {
  if (conv_channels.empty()) throw UsageError("model config: conv_channels must not be empty");
  for (std::size_t c : conv_channels) {
    if (c == 0) throw UsageError("model config: conv channel counts must be positive");
  }
  if (kernel == 0) throw UsageError("model config: kernel must be positive");
  if (pool_size == 0 || pool_stride == 0) throw UsageError("model config: pool size and stride must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw UsageError("model config: dropout_rate must be in [0,1)");
  if (hidden_units == 0) throw UsageError("model config: hidden_units must be positive");
  if (num_classes < 2) throw UsageError("model config: num_classes must be at least 2");
  if (input_shape.size() != 3) throw UsageError("model config: input_shape must be [C,H,W]");
  shape_numel(input_shape);
  shape_trace();
}

std::vector<Shape> ModelConfig::shape_trace() const {
  std::vector<Shape> trace{input_shape};
  std::size_t h = input_shape.at(1);
  std::size_t w = input_shape.at(2);
  const ConvGeometry conv{kernel, 1, conv_padding};
  const ConvGeometry pool{pool_size, pool_stride, 0};
  for (std::size_t c : conv_channels) {
    h = conv_output_extent(conv_output_extent(h, conv), pool);
    w = conv_output_extent(conv_output_extent(w, conv), pool);
    trace.push_back({c, h, w});
  }
  trace.push_back({conv_channels.back() * h * w});
  trace.push_back({hidden_units});
  trace.push_back({num_classes});
  return trace;
}

std::size_t ModelConfig::flatten_size() const {
  const auto trace = shape_trace();
  return trace[trace.size() - 3][0];
}

// ---------------------------------------------------------------------------

struct ForwardContext {
  Mode mode;
  bool bn_frozen;
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const noexcept { return name_; }

  virtual BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext& ctx) = 0;
  virtual BasicTensor<T> infer(const BasicTensor<T>& x) const = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& dy) = 0;
  virtual void collect_params(std::vector<ParamSlot<T>*>&) {}
  virtual void collect_buffers(std::vector<NamedBuffer<T>>&) {}

 private:
  std::string name_;
};

namespace {

template <typename T>
ParamSlot<T> make_slot(std::string name, BasicTensor<T> value) {
  BasicTensor<T> grad(value.shape());
  return {std::move(name), std::move(value), std::move(grad)};
}

template <typename T>
void accumulate(BasicTensor<T>& into, const BasicTensor<T>& delta) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

template <typename T>
class Conv2dLayer final : public Layer<T> {
 public:
  Conv2dLayer(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding,
              Rng& rng)
      : Layer<T>(name), padding_(padding) {
    const double fan_in = static_cast<double>(in * kernel * kernel);
    weight_ = make_slot(name + ".weight", normal<T>({out, in, kernel, kernel}, 0.0, std::sqrt(2.0 / fan_in), rng));
    bias_ = make_slot(name + ".bias", zeros<T>({out}));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext&) override {
    input_ = x;
    return conv2d_forward(x, weight_.value, bias_.value, 1, padding_);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return conv2d_forward(x, weight_.value, bias_.value, 1, padding_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    ConvGrads<T> g = conv2d_backward(dy, input_, weight_.value, 1, padding_);
    accumulate(weight_.grad, g.dweight);
    accumulate(bias_.grad, g.dbias);
    input_ = {};
    return std::move(g.dx);
  }
  void collect_params(std::vector<ParamSlot<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  std::size_t padding_;
  ParamSlot<T> weight_;
  ParamSlot<T> bias_;
  BasicTensor<T> input_;
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(const std::string& name, std::size_t channels)
      : Layer<T>(name),
        gamma_(make_slot(name + ".gamma", full<T>({channels}, T{1}))),
        beta_(make_slot(name + ".beta", zeros<T>({channels}))),
        stats_(channels) {}

  BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext& ctx) override {
    const Mode mode = ctx.bn_frozen ? Mode::eval : ctx.mode;
    return batchnorm_forward(x, gamma_.value, beta_.value, stats_, mode, {}, &cache_);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    BatchNormStats<T> stats = stats_;
    return batchnorm_forward(x, gamma_.value, beta_.value, stats, Mode::eval);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BatchNormGrads<T> g = batchnorm_backward(dy, gamma_.value, cache_);
    accumulate(gamma_.grad, g.dgamma);
    accumulate(beta_.grad, g.dbeta);
    cache_ = {};
    return std::move(g.dx);
  }
  void collect_params(std::vector<ParamSlot<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override {
    out.push_back({this->name() + ".running_mean", &stats_.running_mean});
    out.push_back({this->name() + ".running_var", &stats_.running_var});
  }

 private:
  ParamSlot<T> gamma_;
  ParamSlot<T> beta_;
  BatchNormStats<T> stats_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext&) override {
    input_ = x;
    return relu_forward(x);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override { return relu_forward(x); }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> dx = relu_backward(dy, input_);
    input_ = {};
    return dx;
  }

 private:
  BasicTensor<T> input_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  MaxPoolLayer(const std::string& name, std::size_t size, std::size_t stride)
      : Layer<T>(name), size_(size), stride_(stride) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext&) override {
    PoolResult<T> r = maxpool_forward(x, size_, stride_);
    input_shape_ = x.shape();
    argmax_ = std::move(r.argmax);
    return std::move(r.y);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override { return maxpool_forward(x, size_, stride_).y; }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> dx = maxpool_backward(dy, argmax_, input_shape_);
    argmax_.clear();
    return dx;
  }

 private:
  std::size_t size_;
  std::size_t stride_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class DropoutLayer final : public Layer<T> {
 public:
  DropoutLayer(const std::string& name, double rate, Rng& rng) : Layer<T>(name), rate_(rate), rng_(&rng) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext& ctx) override {
    DropoutResult<T> r = dropout_forward(x, rate_, *rng_, ctx.mode);
    mask_ = std::move(r.mask);
    return std::move(r.y);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override { return x; }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    BasicTensor<T> dx = dropout_backward(dy, mask_);
    mask_ = {};
    return dx;
  }
  void rebind(Rng& rng) noexcept { rng_ = &rng; }

 private:
  double rate_;
  Rng* rng_;
  BasicTensor<T> mask_;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext&) override {
    input_shape_ = x.shape();
    return infer(x);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override { return dy.reshaped(input_shape_); }

 private:
  Shape input_shape_;
};

template <typename T>
class LinearLayer final : public Layer<T> {
 public:
  LinearLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng) : Layer<T>(name) {
    weight_ = make_slot(name + ".weight", normal<T>({in, out}, 0.0, std::sqrt(2.0 / static_cast<double>(in)), rng));
    bias_ = make_slot(name + ".bias", zeros<T>({out}));
  }
  BasicTensor<T> forward(const BasicTensor<T>& x, const ForwardContext&) override {
    input_ = x;
    return linear_forward(x, weight_.value, bias_.value);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return linear_forward(x, weight_.value, bias_.value);
  }
  BasicTensor<T> backward(const BasicTensor<T>& dy) override {
    LinearGrads<T> g = linear_backward(dy, input_, weight_.value);
    accumulate(weight_.grad, g.dweight);
    accumulate(bias_.grad, g.dbias);
    input_ = {};
    return std::move(g.dx);
  }
  void collect_params(std::vector<ParamSlot<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  ParamSlot<T> weight_;
  ParamSlot<T> bias_;
  BasicTensor<T> input_;
};

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, Rng& init_rng) : config_(config), dropout_rng_(std::make_unique<Rng>()) {
  config_.validate();
  std::size_t in = config_.input_shape[0];
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    const std::size_t out = config_.conv_channels[i];
    layers_.push_back(
        std::make_unique<Conv2dLayer<T>>("conv" + n, in, out, config_.kernel, config_.conv_padding, init_rng));
    layers_.push_back(std::make_unique<BatchNormLayer<T>>("bn" + n, out));
    layers_.push_back(std::make_unique<ReluLayer<T>>("relu" + n));
    layers_.push_back(std::make_unique<MaxPoolLayer<T>>("pool" + n, config_.pool_size, config_.pool_stride));
    layers_.push_back(std::make_unique<DropoutLayer<T>>("drop" + n, config_.dropout_rate, *dropout_rng_));
    in = out;
  }
  layers_.push_back(std::make_unique<FlattenLayer<T>>("flatten"));
  layers_.push_back(std::make_unique<LinearLayer<T>>("fc1", config_.flatten_size(), config_.hidden_units, init_rng));
  layers_.push_back(std::make_unique<ReluLayer<T>>("relu_fc"));
  layers_.push_back(std::make_unique<LinearLayer<T>>("fc2", config_.hidden_units, config_.num_classes, init_rng));
  *dropout_rng_ = init_rng.split();
}

template <typename T>
Model<T>::~Model() = default;
template <typename T>
Model<T>::Model(Model&&) noexcept = default;
template <typename T>
Model<T>& Model<T>::operator=(Model&&) noexcept = default;

template <typename T>
BasicTensor<T> Model<T>::forward(const BasicTensor<T>& x) {
  const ForwardContext ctx{mode_, bn_frozen_};
  has_saved_state_ = false;
  BasicTensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, ctx);
  has_saved_state_ = true;
  return h;
}

template <typename T>
BasicTensor<T> Model<T>::infer(const BasicTensor<T>& x) const {
  BasicTensor<T> h = x;
  for (const auto& layer : layers_) h = layer->infer(h);
  return h;
}

template <typename T>
BasicTensor<T> Model<T>::backward(const BasicTensor<T>& dlogits) {
  if (!has_saved_state_) throw UsageError("Model::backward called without a preceding forward()");
  has_saved_state_ = false;
  BasicTensor<T> g = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
void Model<T>::zero_grad() {
  for (ParamSlot<T>* slot : params()) slot->grad.fill(T{0});
}

template <typename T>
std::vector<ParamSlot<T>*> Model<T>::params() {
  std::vector<ParamSlot<T>*> out;
  for (auto& layer : layers_) layer->collect_params(out);
  return out;
}

template <typename T>
std::vector<const ParamSlot<T>*> Model<T>::params() const {
  std::vector<ParamSlot<T>*> mut;
  for (const auto& layer : layers_) layer->collect_params(mut);
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<NamedBuffer<T>> Model<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  for (auto& layer : layers_) layer->collect_buffers(out);
  return out;
}

template <typename T>
std::vector<ConstNamedBuffer<T>> Model<T>::buffers() const {
  std::vector<NamedBuffer<T>> mut;
  for (const auto& layer : layers_) layer->collect_buffers(mut);
  std::vector<ConstNamedBuffer<T>> out;
  for (const auto& b : mut) out.push_back({b.name, b.value});
  return out;
}

template <typename T>
std::vector<std::string> Model<T>::layer_names() const {
  std::vector<std::string> out;
  for (const auto& layer : layers_) out.push_back(layer->name());
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace emberflow
