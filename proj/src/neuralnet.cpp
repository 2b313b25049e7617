#include "kmfm/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kmfm/rng.hpp"

namespace kmfm {

namespace {

constexpr char kNetMagic[] = "KMFMNET1";

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

void check_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

DenseLayer make_layer(Index d_in, Index d_out, Activation act, bool use_bias,
                      rng::Sampler& sampler) {
    DenseLayer layer;
    layer.weights.resize(d_out, d_in);
    const double limit = std::sqrt(6.0 / static_cast<double>(d_in));
    for (Index i = 0; i < d_out; ++i)
        for (Index j = 0; j < d_in; ++j) layer.weights(i, j) = sampler.uniform(-limit, limit);
    layer.bias = Vector::Zero(d_out);
    layer.activation = act;
    (void)use_bias;  // bias starts at zero either way
    return layer;
}

const DenseLayer& flat_layer(const EncoderDecoderNet& net, std::size_t l) {
    return l < net.encoder.size() ? net.encoder[l] : net.decoder[l - net.encoder.size()];
}

}  // namespace

Gradients Gradients::zeros_like(const EncoderDecoderNet& net) {
    Gradients g;
    for (const auto& layer : net.encoder)
        g.encoder.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                             Vector::Zero(layer.bias.size())});
    for (const auto& layer : net.decoder)
        g.decoder.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                             Vector::Zero(layer.bias.size())});
    return g;
}

Gradients& Gradients::operator*=(double s) {
    for (auto& l : encoder) {
        l.weights *= s;
        l.bias *= s;
    }
    for (auto& l : decoder) {
        l.weights *= s;
        l.bias *= s;
    }
    return *this;
}

EncoderDecoderNet build_network(const std::vector<Index>& layer_dims, HeadKind head,
                                Index output_dim, bool use_bias, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw InvalidSpec("need at least one encoder layer");
    for (Index d : layer_dims)
        if (d < 1) throw InvalidSpec("layer width must be >= 1");
    if (output_dim < 1) throw InvalidSpec("output_dim must be >= 1");

    rng::Sampler sampler(seed);
    EncoderDecoderNet net;
    net.head = head;
    net.use_bias = use_bias;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l)
        net.encoder.push_back(
            make_layer(layer_dims[l], layer_dims[l + 1], Activation::relu, use_bias, sampler));
    // decoder mirrors d_k -> ... -> d_1, then maps d_1 to the head width
    for (std::size_t l = layer_dims.size() - 1; l >= 2; --l)
        net.decoder.push_back(
            make_layer(layer_dims[l], layer_dims[l - 1], Activation::relu, use_bias, sampler));
    net.decoder.push_back(
        make_layer(layer_dims[1], output_dim, Activation::identity, use_bias, sampler));
    return net;
}

EncoderDecoderNet init_network(const NetworkSpec& spec) {
    if (spec.layer_dims.size() < 2)
        throw InvalidSpec("layer_dims needs d0 and at least one hidden width");
    for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l)
        if (spec.layer_dims[l] <= spec.layer_dims[l + 1])
            throw InvalidSpec("encoder widths must be strictly decreasing");
    return build_network(spec.layer_dims, spec.head, spec.output_dim, spec.use_bias, spec.seed);
}

ForwardCache forward_batch(const EncoderDecoderNet& net, const Matrix& inputs) {
    if (inputs.cols() != net.input_dim())
        throw ShapeMismatch("input width " + std::to_string(inputs.cols()) + " != " +
                            std::to_string(net.input_dim()));
    check_finite(inputs, "network input");

    const std::size_t total = net.encoder.size() + net.decoder.size();
    ForwardCache cache;
    cache.layer_inputs.reserve(total);
    cache.preacts.reserve(total);
    cache.net_version = net.version;

    Matrix cur = inputs;
    for (std::size_t l = 0; l < total; ++l) {
        const DenseLayer& layer = flat_layer(net, l);
        cache.layer_inputs.push_back(cur);
        Matrix pre = cur * layer.weights.transpose();
        pre.rowwise() += layer.bias.transpose();
        cur = layer.activation == Activation::relu ? relu(pre) : pre;
        cache.preacts.push_back(std::move(pre));
        if (l + 1 == net.encoder.size()) cache.latent = cur;
    }
    cache.output = cur;
    return cache;
}

ForwardResult forward(const EncoderDecoderNet& net, const Vector& x) {
    ForwardCache cache = forward_batch(net, x.transpose());
    return {cache.latent.row(0).transpose(), cache.output.row(0).transpose(), std::move(cache)};
}

double softmax_nll(const Vector& logits, const Vector& onehot) {
    if (logits.size() != onehot.size()) throw ShapeMismatch("logits/onehot length mismatch");
    const double m = logits.maxCoeff();
    const double lse = std::log((logits.array() - m).exp().sum());
    double loss = 0.0;
    for (Index l = 0; l < logits.size(); ++l)
        if (onehot(l) != 0.0) loss += lse + m - logits(l);
    return loss;
}

double softmax_nll_blockwise(const Vector& logits, const Vector& onehot,
                             const std::vector<std::pair<Index, Index>>& blocks) {
    if (logits.size() != onehot.size()) throw ShapeMismatch("logits/onehot length mismatch");
    double loss = 0.0;
    for (const auto& [off, size] : blocks)
        loss += softmax_nll(logits.segment(off, size), onehot.segment(off, size));
    return loss;
}

double mse(const Vector& pred, const Vector& target) {
    if (pred.size() != target.size()) throw ShapeMismatch("mse length mismatch");
    return (target - pred).squaredNorm() / static_cast<double>(pred.size());
}

namespace {

// Row-wise softmax probabilities with max-shift.
Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        p.row(i) = e / e.sum();
    }
    return p;
}

}  // namespace

std::pair<double, Matrix> head_loss_grad(HeadKind head, const Matrix& outputs,
                                         const Matrix& targets, const TrainConfig& cfg) {
    if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols())
        throw ShapeMismatch("output/target shape mismatch");

    if (head == HeadKind::mse_numerical) {
        const double p1 = static_cast<double>(outputs.cols());
        const double loss = (targets - outputs).squaredNorm() / p1;
        Matrix grad = 2.0 / p1 * (outputs - targets);
        return {loss, std::move(grad)};
    }

    if (cfg.blockwise_softmax) {
        double loss = 0.0;
        Matrix grad = Matrix::Zero(outputs.rows(), outputs.cols());
        for (const auto& [off, size] : cfg.softmax_blocks) {
            const Matrix p = softmax_rows(outputs.middleCols(off, size));
            for (Index i = 0; i < outputs.rows(); ++i)
                loss += softmax_nll(outputs.row(i).segment(off, size).transpose(),
                                    targets.row(i).segment(off, size).transpose());
            grad.middleCols(off, size) = p - targets.middleCols(off, size);
        }
        return {loss, std::move(grad)};
    }

    // One softmax over the whole output row. With a active labels per row
    // the NLL gradient is a*p - y.
    const Matrix p = softmax_rows(outputs);
    double loss = 0.0;
    Matrix grad(outputs.rows(), outputs.cols());
    for (Index i = 0; i < outputs.rows(); ++i) {
        loss += softmax_nll(outputs.row(i).transpose(), targets.row(i).transpose());
        const double active = targets.row(i).sum();
        grad.row(i) = active * p.row(i) - targets.row(i);
    }
    return {loss, std::move(grad)};
}

Gradients backward(const EncoderDecoderNet& net, const ForwardCache& cache, const Matrix& dOutput,
                   const Matrix* dLatentExtra) {
    if (cache.net_version != net.version)
        throw StaleCache("forward cache was built from an older parameter version");
    const std::size_t total = net.encoder.size() + net.decoder.size();
    if (cache.preacts.size() != total) throw ShapeMismatch("cache does not match network depth");
    if (dOutput.rows() != cache.output.rows() || dOutput.cols() != cache.output.cols())
        throw ShapeMismatch("dOutput shape mismatch");

    Gradients g = Gradients::zeros_like(net);
    Matrix grad = dOutput;  // gradient w.r.t. the activation leaving layer l
    for (std::size_t l = total; l-- > 0;) {
        const DenseLayer& layer = flat_layer(net, l);
        Matrix gpre = layer.activation == Activation::relu
                          ? (cache.preacts[l].array() > 0.0).select(grad, 0.0).eval()
                          : grad;
        LayerGrads& lg = l < net.encoder.size() ? g.encoder[l] : g.decoder[l - net.encoder.size()];
        lg.weights = gpre.transpose() * cache.layer_inputs[l];
        lg.bias = gpre.colwise().sum().transpose();
        grad = gpre * layer.weights;
        if (l == net.encoder.size() && dLatentExtra != nullptr) grad += *dLatentExtra;
    }
    // grad now holds d/d(input), unused
    return g;
}

Gradients backward(const EncoderDecoderNet& net, const ForwardCache& cache,
                   const Vector& dOutput) {
    return backward(net, cache, Matrix(dOutput.transpose()), nullptr);
}

Optimizer::Optimizer(const EncoderDecoderNet& net, const TrainConfig& cfg)
    : kind_(cfg.optimizer),
      lr_(cfg.learning_rate),
      mu_(cfg.momentum),
      b1_(cfg.adam_beta1),
      b2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      use_bias_(net.use_bias) {
    if (kind_ != OptimizerKind::sgd) {
        m1_ = Gradients::zeros_like(net);
        if (kind_ == OptimizerKind::adam) m2_ = Gradients::zeros_like(net);
    }
}

void Optimizer::step(EncoderDecoderNet& net, const Gradients& grads) {
    ++t_;
    const auto update = [&](DenseLayer& layer, const LayerGrads& g, LayerGrads* m1,
                            LayerGrads* m2) {
        switch (kind_) {
            case OptimizerKind::sgd:
                layer.weights -= lr_ * g.weights;
                if (use_bias_) layer.bias -= lr_ * g.bias;
                break;
            case OptimizerKind::momentum:
                m1->weights = mu_ * m1->weights + g.weights;
                layer.weights -= lr_ * m1->weights;
                if (use_bias_) {
                    m1->bias = mu_ * m1->bias + g.bias;
                    layer.bias -= lr_ * m1->bias;
                }
                break;
            case OptimizerKind::adam: {
                const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
                const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
                m1->weights = b1_ * m1->weights + (1.0 - b1_) * g.weights;
                m2->weights = b2_ * m2->weights.array() + (1.0 - b2_) * g.weights.array().square();
                layer.weights.array() -=
                    lr_ * (m1->weights.array() / c1) / ((m2->weights.array() / c2).sqrt() + eps_);
                if (use_bias_) {
                    m1->bias = b1_ * m1->bias + (1.0 - b1_) * g.bias;
                    m2->bias = b2_ * m2->bias.array() + (1.0 - b2_) * g.bias.array().square();
                    layer.bias.array() -=
                        lr_ * (m1->bias.array() / c1) / ((m2->bias.array() / c2).sqrt() + eps_);
                }
                break;
            }
        }
    };

    for (std::size_t l = 0; l < net.encoder.size(); ++l)
        update(net.encoder[l], grads.encoder[l], m1_.encoder.empty() ? nullptr : &m1_.encoder[l],
               m2_.encoder.empty() ? nullptr : &m2_.encoder[l]);
    for (std::size_t l = 0; l < net.decoder.size(); ++l)
        update(net.decoder[l], grads.decoder[l], m1_.decoder.empty() ? nullptr : &m1_.decoder[l],
               m2_.decoder.empty() ? nullptr : &m2_.decoder[l]);
    ++net.version;
}

double evaluate_loss(const EncoderDecoderNet& net, const Matrix& inputs, const Matrix& targets,
                     const TrainConfig& cfg) {
    if (inputs.rows() == 0) return 0.0;
    const ForwardCache cache = forward_batch(net, inputs);
    const auto [loss_sum, grad] = head_loss_grad(net.head, cache.output, targets, cfg);
    return loss_sum / static_cast<double>(inputs.rows());
}

LossHistory train(EncoderDecoderNet& net, const Matrix& train_inputs, const Matrix& train_targets,
                  const Matrix& val_inputs, const Matrix& val_targets, const TrainConfig& cfg) {
    const Index n = train_inputs.rows();
    if (n != train_targets.rows()) throw ShapeMismatch("train input/target row mismatch");
    if (val_inputs.rows() != val_targets.rows()) throw ShapeMismatch("val input/target row mismatch");
    if (train_targets.cols() != net.output_dim())
        throw ShapeMismatch("target width incompatible with head");
    if (cfg.batch_size < 1 || cfg.batch_size > n)
        throw InvalidSpec("batch_size must be in [1, n_train]");
    if (cfg.epochs < 0) throw InvalidSpec("epochs must be >= 0");

    Optimizer opt(net, cfg);
    rng::Sampler shuffler(cfg.shuffle_seed);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    LossHistory history;
    history.train.reserve(static_cast<std::size_t>(cfg.epochs));
    history.validation.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffler.shuffle(order);
        double epoch_loss = 0.0;
        for (Index start = 0; start < n; start += cfg.batch_size) {
            const Index b = std::min(cfg.batch_size, n - start);
            std::vector<Index> rows(order.begin() + start, order.begin() + start + b);
            const Matrix xb = train_inputs(rows, Eigen::all);
            const Matrix tb = train_targets(rows, Eigen::all);

            const ForwardCache cache = forward_batch(net, xb);
            auto [loss_sum, dout] = head_loss_grad(net.head, cache.output, tb, cfg);
            if (!std::isfinite(loss_sum))
                throw DivergenceDetected("non-finite training loss at epoch " +
                                         std::to_string(epoch));
            epoch_loss += loss_sum;

            Gradients grads = backward(net, cache, dout);
            grads *= 1.0 / static_cast<double>(b);
            opt.step(net, grads);
        }
        history.train.push_back(epoch_loss / static_cast<double>(n));
        const double val_loss =
            val_inputs.rows() > 0 ? evaluate_loss(net, val_inputs, val_targets, cfg) : 0.0;
        if (!std::isfinite(val_loss))
            throw DivergenceDetected("non-finite validation loss at epoch " +
                                     std::to_string(epoch));
        history.validation.push_back(val_loss);
    }
    return history;
}

Matrix encode_all(const EncoderDecoderNet& net, const Matrix& inputs) {
    if (inputs.cols() != net.input_dim()) throw ShapeMismatch("encode_all input width");
    Matrix cur = inputs;
    for (const auto& layer : net.encoder) {
        Matrix pre = cur * layer.weights.transpose();
        pre.rowwise() += layer.bias.transpose();
        cur = relu(pre);
    }
    return cur;
}

void serialize_network(const EncoderDecoderNet& net, io::BinaryWriter& w) {
    w.u32(static_cast<std::uint32_t>(net.head));
    w.u32(net.use_bias ? 1 : 0);
    w.u64(net.version);
    const auto dump = [&](const std::vector<DenseLayer>& layers) {
        w.u32(static_cast<std::uint32_t>(layers.size()));
        for (const auto& l : layers) {
            w.u32(static_cast<std::uint32_t>(l.activation));
            w.matrix(l.weights);
            w.vector(l.bias);
        }
    };
    dump(net.encoder);
    dump(net.decoder);
}

EncoderDecoderNet deserialize_network(io::BinaryReader& r) {
    EncoderDecoderNet net;
    net.head = static_cast<HeadKind>(r.u32());
    net.use_bias = r.u32() != 0;
    net.version = r.u64();
    const auto slurp = [&](std::vector<DenseLayer>& layers) {
        const auto count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            DenseLayer l;
            l.activation = static_cast<Activation>(r.u32());
            l.weights = r.matrix();
            l.bias = r.vector();
            layers.push_back(std::move(l));
        }
    };
    slurp(net.encoder);
    slurp(net.decoder);
    return net;
}

void save_network(const EncoderDecoderNet& net, const std::filesystem::path& path) {
    io::BinaryWriter w(path);
    w.str(kNetMagic);
    serialize_network(net, w);
}

EncoderDecoderNet load_network(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    if (r.str() != kNetMagic) throw IoError("not a network checkpoint: " + path.string());
    return deserialize_network(r);
}

}  // namespace kmfm
