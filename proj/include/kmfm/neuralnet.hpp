#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "kmfm/common.hpp"
#include "kmfm/serialize.hpp"

namespace kmfm {

enum class Activation { relu, identity };
enum class HeadKind { softmax_categorical, mse_numerical };
enum class OptimizerKind { sgd, momentum, adam };

/// Explicit-width network description: strictly decreasing encoder widths
/// d0 > d1 > ... > dk, mirrored by the decoder, terminated by a loss head.
struct NetworkSpec {
    std::vector<Index> layer_dims;  // d0..dk
    HeadKind head = HeadKind::mse_numerical;
    Index output_dim = 0;
    bool use_bias = true;
    std::uint64_t seed = 0;
};

struct DenseLayer {
    Matrix weights;  // d_out x d_in
    Vector bias;     // d_out (kept zero when bias is disabled)
    Activation activation = Activation::relu;
};

/// Encoder stack (ReLU) into a latent code, decoder stack mirroring the
/// encoder widths (ReLU on hidden, identity on the final pre-head layer).
struct EncoderDecoderNet {
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> decoder;
    HeadKind head = HeadKind::mse_numerical;
    bool use_bias = true;
    std::uint64_t version = 0;  // bumped on every parameter change

    Index input_dim() const { return encoder.front().weights.cols(); }
    Index latent_dim() const { return encoder.back().weights.rows(); }
    Index output_dim() const { return decoder.back().weights.rows(); }
};

struct LayerGrads {
    Matrix weights;
    Vector bias;
};

struct Gradients {
    std::vector<LayerGrads> encoder;
    std::vector<LayerGrads> decoder;

    static Gradients zeros_like(const EncoderDecoderNet& net);
    Gradients& operator*=(double s);
};

/// Per-layer inputs and pre-activations retained by a forward pass;
/// consumed by backward(). Tied to the parameter version it was built from.
struct ForwardCache {
    std::vector<Matrix> layer_inputs;  // encoder then decoder, flattened
    std::vector<Matrix> preacts;
    Matrix latent;  // B x dk
    Matrix output;  // B x output_dim
    std::uint64_t net_version = 0;
};

struct TrainConfig {
    int epochs = 200;
    Index batch_size = 32;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 0;
    /// Softmax head: normalize per category block instead of globally.
    bool blockwise_softmax = false;
    std::vector<std::pair<Index, Index>> softmax_blocks;  // (offset, size)
};

struct LossHistory {
    std::vector<double> train;
    std::vector<double> validation;
};

/// Build a network from an arbitrary width chain (no monotonicity demand);
/// weights are fan-in-scaled uniform, deterministic in the seed.
EncoderDecoderNet build_network(const std::vector<Index>& layer_dims, HeadKind head,
                                Index output_dim, bool use_bias, std::uint64_t seed);

/// Strict construction: validates the strictly decreasing width chain.
EncoderDecoderNet init_network(const NetworkSpec& spec);

ForwardCache forward_batch(const EncoderDecoderNet& net, const Matrix& inputs);

struct ForwardResult {
    Vector latent;
    Vector output;
    ForwardCache cache;
};
ForwardResult forward(const EncoderDecoderNet& net, const Vector& x);

/// Softmax negative log-likelihood with one softmax over all logits (the
/// default objective form); max-shifted for overflow safety. `onehot` may
/// carry several active entries (one per category block).
double softmax_nll(const Vector& logits, const Vector& onehot);

/// Variant normalizing each category block independently.
double softmax_nll_blockwise(const Vector& logits, const Vector& onehot,
                             const std::vector<std::pair<Index, Index>>& blocks);

double mse(const Vector& pred, const Vector& target);

/// Sum of per-sample head losses over the batch and the gradient of that
/// sum with respect to the network output.
std::pair<double, Matrix> head_loss_grad(HeadKind head, const Matrix& outputs,
                                         const Matrix& targets, const TrainConfig& cfg);

/// Exact gradients of the scalar whose output-gradient is `dOutput`.
/// `dLatentExtra`, when given, is added at the latent layer (used when an
/// external penalty depends on the latent codes). ReLU subgradient at 0 is 0.
Gradients backward(const EncoderDecoderNet& net, const ForwardCache& cache, const Matrix& dOutput,
                   const Matrix* dLatentExtra = nullptr);
Gradients backward(const EncoderDecoderNet& net, const ForwardCache& cache, const Vector& dOutput);

/// First-order parameter updates; holds momentum/adam state across steps.
class Optimizer {
public:
    Optimizer(const EncoderDecoderNet& net, const TrainConfig& cfg);
    void step(EncoderDecoderNet& net, const Gradients& grads);

private:
    OptimizerKind kind_;
    double lr_, mu_, b1_, b2_, eps_;
    bool use_bias_;
    long t_ = 0;
    Gradients m1_, m2_;
};

/// Mini-batch training on (inputs, targets); records mean per-sample train
/// and validation loss each epoch. Deterministic given seeds. Throws
/// DivergenceDetected (with the epoch index) on a non-finite loss.
LossHistory train(EncoderDecoderNet& net, const Matrix& train_inputs, const Matrix& train_targets,
                  const Matrix& val_inputs, const Matrix& val_targets, const TrainConfig& cfg);

/// Latent codes for every input row; row i equals forward(net, row_i).latent.
Matrix encode_all(const EncoderDecoderNet& net, const Matrix& inputs);

/// Mean per-sample head loss on a dataset (no parameter change).
double evaluate_loss(const EncoderDecoderNet& net, const Matrix& inputs, const Matrix& targets,
                     const TrainConfig& cfg);

void serialize_network(const EncoderDecoderNet& net, io::BinaryWriter& w);
EncoderDecoderNet deserialize_network(io::BinaryReader& r);

/// Single-file checkpoint; reload is bit-exact.
void save_network(const EncoderDecoderNet& net, const std::filesystem::path& path);
EncoderDecoderNet load_network(const std::filesystem::path& path);

}  // namespace kmfm
