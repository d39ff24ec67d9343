#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "repvec/errors.hpp"
#include "repvec/rmsprop.hpp"
#include "repvec/rng.hpp"
#include "repvec/serialize.hpp"
#include "repvec/sparse.hpp"

namespace repvec {

/// One denoising autoencoder: sigmoid encoder, linear decoder, untied weights.
struct DaeLayer {
    Eigen::MatrixXd encoder_weights; // d_out x d_in
    Eigen::VectorXd encoder_bias;    // d_out
    Eigen::MatrixXd decoder_weights; // d_in x d_out
    Eigen::VectorXd decoder_bias;    // d_in

    std::size_t input_dim() const { return static_cast<std::size_t>(encoder_weights.cols()); }
    std::size_t output_dim() const { return static_cast<std::size_t>(encoder_weights.rows()); }

    /// Weights uniform in +-1/sqrt(d_in), biases zero.
    static DaeLayer initialize(std::size_t input_dim, std::size_t output_dim, Rng &rng);

    bool operator==(const DaeLayer &o) const;
};

struct LayerOutput {
    Eigen::VectorXd representation; // sigmoid(W_enc x + b_enc)
    Eigen::VectorXd reconstruction;  // W_dec r + b_dec
};

LayerOutput layer_forward(const DaeLayer &layer, const Eigen::VectorXd &input);
LayerOutput layer_forward(const DaeLayer &layer, const SparseVector &input);

/// Dropout noise: each coordinate zeroed independently with probability p,
/// survivors unscaled. Throws std::invalid_argument for p outside [0, 1].
Eigen::VectorXd corrupt(const Eigen::VectorXd &input, double p, Rng &rng);
/// Sparse variant; only stored coordinates are sampled (zeros stay zero).
SparseVector corrupt(const SparseVector &input, double p, Rng &rng);

struct SdaeLayerConfig {
    std::size_t hidden_dim = 0;
    double corruption = 0.0;
};

struct SdaeConfig {
    std::vector<SdaeLayerConfig> layers;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    RmspropConfig optimizer;
    std::uint64_t seed = 0;
};

struct SdaeModel {
    std::vector<DaeLayer> layers;
    std::vector<double> corruption;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
    /// Per layer: loss before training, then the mean loss of every epoch.
    std::vector<std::vector<double>> loss_trace;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().input_dim(); }
    std::size_t representation_dim() const
    {
        return layers.empty() ? 0 : layers.back().output_dim();
    }

    bool operator==(const SdaeModel &o) const;
};

/// Mean squared reconstruction error of `clean` from `corrupted` over the
/// batch, averaged over batch and coordinates, with its exact gradients.
struct DaeGradients {
    double loss = 0.0;
    Eigen::MatrixXd encoder_weights;
    Eigen::VectorXd encoder_bias;
    Eigen::MatrixXd decoder_weights;
    Eigen::VectorXd decoder_bias;
};

DaeGradients dae_gradients(const DaeLayer &layer, const InputMatrix &clean,
                           const InputMatrix &corrupted);
double dae_loss(const DaeLayer &layer, const InputMatrix &clean, const InputMatrix &corrupted);

/// Trains each layer in turn as an independent denoising autoencoder; layer
/// n is fed the clean representations of layer n-1. Layer n draws from its
/// own seeded stream, so adding layers never changes the earlier ones.
SdaeModel pretrain_stack(const SdaeConfig &config, const InputMatrix &training);

/// Deterministic encoding, no corruption.
Eigen::VectorXd represent(const SdaeModel &model, const SparseVector &input);
Eigen::VectorXd represent(const SdaeModel &model, const Eigen::VectorXd &input);
/// One column per instance.
Eigen::MatrixXd represent_all(const SdaeModel &model, const InputMatrix &inputs);

/// dR/dz (d_R x d_z), or only the requested columns of it.
Eigen::MatrixXd encoder_jacobian(const SdaeModel &model, const SparseVector &input,
                                 std::optional<std::span<const std::size_t>> features = {});
Eigen::MatrixXd encoder_jacobian(const SdaeModel &model, const Eigen::VectorXd &input,
                                 std::optional<std::span<const std::size_t>> features = {});

/// J^T g without forming J.
Eigen::VectorXd encoder_vjp(const SdaeModel &model, const SparseVector &input,
                            const Eigen::VectorXd &upstream);

void encode_sdae(const SdaeModel &model, ByteWriter &out);
SdaeModel decode_sdae(ByteReader &in);
void save_sdae(const SdaeModel &model, const std::filesystem::path &path);
SdaeModel load_sdae(const std::filesystem::path &path);

} // namespace repvec
