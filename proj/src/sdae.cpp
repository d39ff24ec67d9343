#include "repvec/sdae.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace repvec {

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd &x)
{
    return (1.0 + (-x.array()).exp()).inverse().matrix();
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd &x)
{
    return (1.0 + (-x.array()).exp()).inverse().matrix();
}

Eigen::VectorXd encode_sparse(const DaeLayer &layer, const SparseVector &x)
{
    if(x.dim != layer.input_dim())
        throw std::invalid_argument("sdae: input dimension " + std::to_string(x.dim) +
                                    " does not match layer input " +
                                    std::to_string(layer.input_dim()));
    Eigen::VectorXd pre = layer.encoder_bias;
    for(std::size_t k = 0; k < x.indices.size(); ++k)
        pre.noalias() += x.values[k] * layer.encoder_weights.col(x.indices[k]);
    return sigmoid(pre);
}

Eigen::VectorXd encode_dense(const DaeLayer &layer, const Eigen::VectorXd &x)
{
    if(static_cast<std::size_t>(x.size()) != layer.input_dim())
        throw std::invalid_argument("sdae: input dimension " + std::to_string(x.size()) +
                                    " does not match layer input " +
                                    std::to_string(layer.input_dim()));
    return sigmoid(Eigen::VectorXd(layer.encoder_weights * x + layer.encoder_bias));
}

// Activations of every layer for one input; acts[l] is the output of layer l.
template <class Input>
std::vector<Eigen::VectorXd> activations(const SdaeModel &model, const Input &input)
{
    if(model.layers.empty())
        throw std::invalid_argument("sdae: model has no layers");
    std::vector<Eigen::VectorXd> acts;
    acts.reserve(model.layers.size());
    if constexpr(std::is_same_v<Input, SparseVector>)
        acts.push_back(encode_sparse(model.layers[0], input));
    else
        acts.push_back(encode_dense(model.layers[0], input));
    for(std::size_t l = 1; l < model.layers.size(); ++l)
        acts.push_back(encode_dense(model.layers[l], acts.back()));
    return acts;
}

template <class Input>
Eigen::MatrixXd jacobian_impl(const SdaeModel &model, const Input &input,
                              std::optional<std::span<const std::size_t>> features)
{
    const auto acts = activations(model, input);
    const auto &first = model.layers[0].encoder_weights;
    Eigen::MatrixXd w;
    if(features) {
        w.resize(first.rows(), static_cast<Eigen::Index>(features->size()));
        for(std::size_t c = 0; c < features->size(); ++c) {
            if((*features)[c] >= model.input_dim())
                throw std::invalid_argument("encoder_jacobian: feature index out of range");
            w.col(static_cast<Eigen::Index>(c)) = first.col(static_cast<Eigen::Index>((*features)[c]));
        }
    } else {
        w = first;
    }
    Eigen::VectorXd s = acts[0].array() * (1.0 - acts[0].array());
    Eigen::MatrixXd jac = s.asDiagonal() * w;
    for(std::size_t l = 1; l < model.layers.size(); ++l) {
        s = acts[l].array() * (1.0 - acts[l].array());
        jac = s.asDiagonal() * (model.layers[l].encoder_weights * jac);
    }
    return jac;
}

void check_finite(double loss, std::size_t layer, std::size_t epoch, std::size_t batch)
{
    if(!std::isfinite(loss))
        throw TrainingError("sdae: non-finite loss at layer " + std::to_string(layer) + ", epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batch));
}

InputMatrix corrupt_batch(const InputMatrix &inputs, std::span<const std::size_t> batch, double p,
                          Rng &rng)
{
    if(inputs.is_sparse()) {
        std::vector<SparseVector> rows;
        rows.reserve(batch.size());
        for(auto i : batch)
            rows.push_back(corrupt(inputs.sparse_row(i), p, rng));
        return InputMatrix(std::move(rows));
    }
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(inputs.dim()),
                         static_cast<Eigen::Index>(batch.size()));
    for(std::size_t c = 0; c < batch.size(); ++c)
        cols.col(static_cast<Eigen::Index>(c)) =
            corrupt(Eigen::VectorXd(inputs.dense().col(static_cast<Eigen::Index>(batch[c]))), p, rng);
    return InputMatrix(std::move(cols));
}

InputMatrix select(const InputMatrix &inputs, std::span<const std::size_t> batch)
{
    if(inputs.is_sparse()) {
        std::vector<SparseVector> rows;
        rows.reserve(batch.size());
        for(auto i : batch)
            rows.push_back(inputs.sparse_row(i));
        return InputMatrix(std::move(rows));
    }
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(inputs.dim()),
                         static_cast<Eigen::Index>(batch.size()));
    for(std::size_t c = 0; c < batch.size(); ++c)
        cols.col(static_cast<Eigen::Index>(c)) = inputs.dense().col(static_cast<Eigen::Index>(batch[c]));
    return InputMatrix(std::move(cols));
}

Eigen::MatrixXd dense_targets(const InputMatrix &clean)
{
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(clean.dim()),
                                              static_cast<Eigen::Index>(clean.size()));
    if(clean.is_sparse()) {
        for(std::size_t c = 0; c < clean.size(); ++c) {
            const auto &row = clean.sparse_row(c);
            for(std::size_t k = 0; k < row.indices.size(); ++k)
                x(row.indices[k], static_cast<Eigen::Index>(c)) = row.values[k];
        }
    } else {
        x = clean.dense();
    }
    return x;
}

struct BatchForward {
    Eigen::MatrixXd hidden;
    Eigen::MatrixXd error; // reconstruction - clean
};

BatchForward batch_forward(const DaeLayer &layer, const InputMatrix &clean,
                           const InputMatrix &corrupted)
{
    if(clean.size() != corrupted.size() || clean.dim() != layer.input_dim() ||
       corrupted.dim() != layer.input_dim())
        throw std::invalid_argument("dae: batch dimension mismatch");
    std::vector<std::size_t> idx(clean.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    BatchForward f;
    Eigen::MatrixXd pre;
    corrupted.multiply(layer.encoder_weights, idx, pre);
    pre.colwise() += layer.encoder_bias;
    f.hidden = sigmoid(pre);
    f.error = layer.decoder_weights * f.hidden;
    f.error.colwise() += layer.decoder_bias;
    f.error -= dense_targets(clean);
    return f;
}

} // namespace

// ---------------------------------------------------------------------------

DaeLayer DaeLayer::initialize(std::size_t input_dim, std::size_t output_dim, Rng &rng)
{
    if(input_dim == 0 || output_dim == 0)
        throw std::invalid_argument("DaeLayer: dimensions must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
    DaeLayer layer;
    const auto in = static_cast<Eigen::Index>(input_dim);
    const auto out = static_cast<Eigen::Index>(output_dim);
    layer.encoder_weights.resize(out, in);
    layer.decoder_weights.resize(in, out);
    for(Eigen::Index c = 0; c < in; ++c)
        for(Eigen::Index r = 0; r < out; ++r)
            layer.encoder_weights(r, c) = rng.uniform(-bound, bound);
    for(Eigen::Index c = 0; c < out; ++c)
        for(Eigen::Index r = 0; r < in; ++r)
            layer.decoder_weights(r, c) = rng.uniform(-bound, bound);
    layer.encoder_bias = Eigen::VectorXd::Zero(out);
    layer.decoder_bias = Eigen::VectorXd::Zero(in);
    return layer;
}

bool DaeLayer::operator==(const DaeLayer &o) const
{
    return encoder_weights.rows() == o.encoder_weights.rows() &&
           encoder_weights.cols() == o.encoder_weights.cols() &&
           encoder_weights == o.encoder_weights && encoder_bias == o.encoder_bias &&
           decoder_weights == o.decoder_weights && decoder_bias == o.decoder_bias;
}

bool SdaeModel::operator==(const SdaeModel &o) const
{
    return layers == o.layers && corruption == o.corruption && epochs == o.epochs &&
           batch_size == o.batch_size && seed == o.seed && loss_trace == o.loss_trace;
}

LayerOutput layer_forward(const DaeLayer &layer, const Eigen::VectorXd &input)
{
    LayerOutput out;
    out.representation = encode_dense(layer, input);
    out.reconstruction = layer.decoder_weights * out.representation + layer.decoder_bias;
    return out;
}

LayerOutput layer_forward(const DaeLayer &layer, const SparseVector &input)
{
    LayerOutput out;
    out.representation = encode_sparse(layer, input);
    out.reconstruction = layer.decoder_weights * out.representation + layer.decoder_bias;
    return out;
}

Eigen::VectorXd corrupt(const Eigen::VectorXd &input, double p, Rng &rng)
{
    if(!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("corrupt: proportion must be in [0, 1]");
    Eigen::VectorXd out = input;
    for(Eigen::Index i = 0; i < out.size(); ++i)
        if(rng.bernoulli(p))
            out[i] = 0.0;
    return out;
}

SparseVector corrupt(const SparseVector &input, double p, Rng &rng)
{
    if(!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("corrupt: proportion must be in [0, 1]");
    SparseVector out;
    out.dim = input.dim;
    for(std::size_t k = 0; k < input.indices.size(); ++k) {
        if(rng.bernoulli(p))
            continue;
        out.indices.push_back(input.indices[k]);
        out.values.push_back(input.values[k]);
    }
    return out;
}

double dae_loss(const DaeLayer &layer, const InputMatrix &clean, const InputMatrix &corrupted)
{
    const auto f = batch_forward(layer, clean, corrupted);
    return f.error.squaredNorm() / static_cast<double>(f.error.size());
}

DaeGradients dae_gradients(const DaeLayer &layer, const InputMatrix &clean,
                           const InputMatrix &corrupted)
{
    const auto f = batch_forward(layer, clean, corrupted);
    const double scale = 2.0 / static_cast<double>(f.error.size());

    DaeGradients g;
    g.loss = f.error.squaredNorm() / static_cast<double>(f.error.size());
    const Eigen::MatrixXd d_out = scale * f.error;
    g.decoder_weights.noalias() = d_out * f.hidden.transpose();
    g.decoder_bias = d_out.rowwise().sum();
    const Eigen::MatrixXd d_hidden =
        ((layer.decoder_weights.transpose() * d_out).array() * f.hidden.array() *
         (1.0 - f.hidden.array()))
            .matrix();
    g.encoder_bias = d_hidden.rowwise().sum();
    g.encoder_weights = Eigen::MatrixXd::Zero(layer.encoder_weights.rows(), layer.encoder_weights.cols());
    std::vector<std::size_t> idx(corrupted.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    corrupted.accumulate_outer(d_hidden, idx, g.encoder_weights);
    return g;
}

SdaeModel pretrain_stack(const SdaeConfig &config, const InputMatrix &training)
{
    if(config.layers.empty())
        throw std::invalid_argument("pretrain_stack: no layers configured");
    if(training.size() == 0)
        throw std::invalid_argument("pretrain_stack: empty training set");
    if(config.batch_size == 0)
        throw std::invalid_argument("pretrain_stack: batch_size must be positive");

    SdaeModel model;
    model.epochs = config.epochs;
    model.batch_size = config.batch_size;
    model.seed = config.seed;

    InputMatrix current = training;
    const std::size_t n = training.size();
    for(std::size_t l = 0; l < config.layers.size(); ++l) {
        const auto &lc = config.layers[l];
        if(!(lc.corruption >= 0.0 && lc.corruption <= 1.0))
            throw std::invalid_argument("pretrain_stack: corruption must be in [0, 1]");
        Rng rng(mix_seed(config.seed, l));
        DaeLayer layer = DaeLayer::initialize(current.dim(), lc.hidden_dim, rng);
        Rmsprop opt(config.optimizer);
        std::vector<double> trace;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});

        // loss of the untrained layer over one corruption draw
        {
            double total = 0.0;
            for(std::size_t b = 0; b < n; b += config.batch_size) {
                const std::span<const std::size_t> batch(order.data() + b,
                                                         std::min(config.batch_size, n - b));
                total += dae_loss(layer, select(current, batch),
                                  corrupt_batch(current, batch, lc.corruption, rng)) *
                         static_cast<double>(batch.size());
            }
            trace.push_back(total / static_cast<double>(n));
            check_finite(trace.back(), l, 0, 0);
        }

        for(std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
            rng.shuffle(order.begin(), order.end());
            double total = 0.0;
            std::size_t batch_no = 0;
            for(std::size_t b = 0; b < n; b += config.batch_size, ++batch_no) {
                const std::span<const std::size_t> batch(order.data() + b,
                                                         std::min(config.batch_size, n - b));
                auto g = dae_gradients(layer, select(current, batch),
                                       corrupt_batch(current, batch, lc.corruption, rng));
                check_finite(g.loss, l, epoch, batch_no);
                total += g.loss * static_cast<double>(batch.size());
                opt.step(0, layer.encoder_weights, g.encoder_weights);
                opt.step(1, layer.encoder_bias, g.encoder_bias);
                opt.step(2, layer.decoder_weights, g.decoder_weights);
                opt.step(3, layer.decoder_bias, g.decoder_bias);
            }
            trace.push_back(total / static_cast<double>(n));
        }

        model.layers.push_back(std::move(layer));
        model.corruption.push_back(lc.corruption);
        model.loss_trace.push_back(std::move(trace));

        if(l + 1 < config.layers.size()) {
            SdaeModel partial;
            partial.layers = {model.layers.back()};
            current = InputMatrix(represent_all(partial, current));
        }
    }
    return model;
}

Eigen::VectorXd represent(const SdaeModel &model, const SparseVector &input)
{
    return activations(model, input).back();
}

Eigen::VectorXd represent(const SdaeModel &model, const Eigen::VectorXd &input)
{
    return activations(model, input).back();
}

Eigen::MatrixXd represent_all(const SdaeModel &model, const InputMatrix &inputs)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(model.representation_dim()),
                        static_cast<Eigen::Index>(inputs.size()));
    for(std::size_t i = 0; i < inputs.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) =
            inputs.is_sparse() ? represent(model, inputs.sparse_row(i))
                               : represent(model, Eigen::VectorXd(inputs.dense().col(static_cast<Eigen::Index>(i))));
    }
    return out;
}

Eigen::MatrixXd encoder_jacobian(const SdaeModel &model, const SparseVector &input,
                                 std::optional<std::span<const std::size_t>> features)
{
    return jacobian_impl(model, input, features);
}

Eigen::MatrixXd encoder_jacobian(const SdaeModel &model, const Eigen::VectorXd &input,
                                 std::optional<std::span<const std::size_t>> features)
{
    return jacobian_impl(model, input, features);
}

Eigen::VectorXd encoder_vjp(const SdaeModel &model, const SparseVector &input,
                            const Eigen::VectorXd &upstream)
{
    const auto acts = activations(model, input);
    if(upstream.size() != acts.back().size())
        throw std::invalid_argument("encoder_vjp: upstream dimension mismatch");
    Eigen::VectorXd g = upstream;
    for(std::size_t l = model.layers.size(); l-- > 0;) {
        const Eigen::VectorXd delta = g.array() * acts[l].array() * (1.0 - acts[l].array());
        g = model.layers[l].encoder_weights.transpose() * delta;
    }
    return g;
}

// ---------------------------------------------------------------------------

void encode_sdae(const SdaeModel &model, ByteWriter &out)
{
    out.u64(model.layers.size());
    for(std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto &layer = model.layers[l];
        out.u64(layer.input_dim());
        out.u64(layer.output_dim());
        out.f64(model.corruption[l]);
        out.matrix(layer.encoder_weights);
        out.vector(layer.encoder_bias);
        out.matrix(layer.decoder_weights);
        out.vector(layer.decoder_bias);
    }
    out.u64(model.epochs);
    out.u64(model.batch_size);
    out.u64(model.seed);
    out.u64(model.loss_trace.size());
    for(const auto &t : model.loss_trace)
        out.f64s(t);
}

SdaeModel decode_sdae(ByteReader &in)
{
    SdaeModel model;
    const auto n_layers = in.u64();
    for(std::uint64_t l = 0; l < n_layers; ++l) {
        const auto d_in = static_cast<Eigen::Index>(in.u64());
        const auto d_out = static_cast<Eigen::Index>(in.u64());
        model.corruption.push_back(in.f64());
        DaeLayer layer;
        layer.encoder_weights = in.matrix();
        layer.encoder_bias = in.vector();
        layer.decoder_weights = in.matrix();
        layer.decoder_bias = in.vector();
        if(layer.encoder_weights.rows() != d_out || layer.encoder_weights.cols() != d_in ||
           layer.encoder_bias.size() != d_out || layer.decoder_weights.rows() != d_in ||
           layer.decoder_weights.cols() != d_out || layer.decoder_bias.size() != d_in)
            throw SerializationError("sdae: inconsistent layer dimensions");
        if(!model.layers.empty() && model.layers.back().output_dim() != layer.input_dim())
            throw SerializationError("sdae: layers do not chain");
        model.layers.push_back(std::move(layer));
    }
    model.epochs = in.u64();
    model.batch_size = in.u64();
    model.seed = in.u64();
    const auto n_traces = in.u64();
    for(std::uint64_t t = 0; t < n_traces; ++t)
        model.loss_trace.push_back(in.f64s());
    return model;
}

void save_sdae(const SdaeModel &model, const std::filesystem::path &path)
{
    ByteWriter w;
    encode_sdae(model, w);
    write_container(path, ModelType::sdae, w);
}

SdaeModel load_sdae(const std::filesystem::path &path)
{
    auto r = read_container(path, ModelType::sdae);
    auto model = decode_sdae(r);
    r.expect_end();
    return model;
}

} // namespace repvec
