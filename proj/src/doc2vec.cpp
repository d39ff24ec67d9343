#include "repvec/doc2vec.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace repvec {

namespace {

double log_sigmoid(double x)
{
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x)
{
    if(x >= 0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// One SGD step of the negative-sampling loss at input h. All scores are taken
// at the pre-update point; the input step goes to `input_step` and the output
// columns are updated in place unless `outputs` is null (frozen).
double ns_step(const Eigen::Ref<const Eigen::VectorXd> &h, const Eigen::MatrixXd &output_vectors,
               Eigen::MatrixXd *outputs, std::size_t target, std::span<const std::size_t> negatives,
               double lr, Eigen::VectorXd &input_step)
{
    const std::size_t k = negatives.size() + 1;
    double coef[64];
    std::vector<double> coef_heap;
    double *c = coef;
    if(k > 64) {
        coef_heap.resize(k);
        c = coef_heap.data();
    }
    auto column = [&](std::size_t j) { return j == 0 ? target : negatives[j - 1]; };

    double loss = 0.0;
    for(std::size_t j = 0; j < k; ++j) {
        const double s = h.dot(output_vectors.col(static_cast<Eigen::Index>(column(j))));
        if(j == 0) {
            loss -= log_sigmoid(s);
            c[j] = sigmoid(s) - 1.0;
        } else {
            loss -= log_sigmoid(-s);
            c[j] = sigmoid(s);
        }
    }
    input_step.setZero();
    for(std::size_t j = 0; j < k; ++j)
        input_step.noalias() -= lr * c[j] * output_vectors.col(static_cast<Eigen::Index>(column(j)));
    if(outputs)
        for(std::size_t j = 0; j < k; ++j)
            outputs->col(static_cast<Eigen::Index>(column(j))).noalias() -= lr * c[j] * h;
    return loss;
}

void draw_negatives(const NoiseSampler &sampler, Rng &rng, std::size_t count, std::size_t target,
                    std::vector<std::size_t> &out)
{
    out.clear();
    for(std::size_t j = 0; j < count; ++j) {
        const std::size_t w = sampler(rng);
        if(w != target)
            out.push_back(w);
    }
}

void init_uniform(Eigen::MatrixXd &m, Rng &rng)
{
    const double half = 0.5 / static_cast<double>(m.rows());
    for(Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform(-half, half);
}

double learning_rate(const DbowConfig &c, double progress)
{
    return c.start_learning_rate - (c.start_learning_rate - c.end_learning_rate) * progress;
}

} // namespace

std::vector<double> build_noise_distribution(std::span<const std::uint64_t> counts, double power)
{
    if(counts.empty())
        throw std::invalid_argument("build_noise_distribution: empty vocabulary");
    if(!(power >= 0.0))
        throw std::invalid_argument("build_noise_distribution: power must be non-negative");
    std::vector<double> p(counts.size());
    double total = 0.0;
    for(std::size_t i = 0; i < counts.size(); ++i) {
        if(counts[i] == 0)
            throw std::invalid_argument("build_noise_distribution: counts must be positive");
        p[i] = std::pow(static_cast<double>(counts[i]), power);
        total += p[i];
    }
    for(auto &v : p)
        v /= total;
    return p;
}

std::vector<double> build_noise_distribution(const TermCounts &counts, double power)
{
    std::vector<std::uint64_t> c;
    c.reserve(counts.size());
    for(const auto &[term, n] : counts)
        c.push_back(n);
    return build_noise_distribution(c, power);
}

NoiseSampler::NoiseSampler(std::span<const double> probabilities) : _cumulative(probabilities.size())
{
    if(probabilities.empty())
        throw std::invalid_argument("NoiseSampler: empty distribution");
    std::partial_sum(probabilities.begin(), probabilities.end(), _cumulative.begin());
}

std::size_t NoiseSampler::operator()(Rng &rng) const
{
    const double u = rng.uniform() * _cumulative.back();
    const auto it = std::upper_bound(_cumulative.begin(), _cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - _cumulative.begin()), _cumulative.size() - 1);
}

std::optional<std::size_t> DbowModel::find(std::string_view term) const
{
    const auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), term);
    if(it == vocabulary.end() || *it != term)
        return std::nullopt;
    return static_cast<std::size_t>(it - vocabulary.begin());
}

std::optional<std::size_t> DbowModel::document_index(std::string_view id) const
{
    const auto it = std::lower_bound(document_ids.begin(), document_ids.end(), id);
    if(it == document_ids.end() || *it != id)
        return std::nullopt;
    return static_cast<std::size_t>(it - document_ids.begin());
}

bool DbowModel::operator==(const DbowModel &o) const
{
    return config == o.config && vocabulary == o.vocabulary && frequencies == o.frequencies &&
           noise == o.noise && document_ids == o.document_ids && degenerate == o.degenerate &&
           document_vectors == o.document_vectors && word_vectors == o.word_vectors &&
           output_vectors == o.output_vectors && loss_trace == o.loss_trace;
}

double negative_sampling_loss(const Eigen::VectorXd &input, const Eigen::MatrixXd &output_vectors,
                              std::size_t target, std::span<const std::size_t> negatives)
{
    double loss = -log_sigmoid(input.dot(output_vectors.col(static_cast<Eigen::Index>(target))));
    for(const auto n : negatives)
        loss -= log_sigmoid(-input.dot(output_vectors.col(static_cast<Eigen::Index>(n))));
    return loss;
}

NegativeSamplingGradients negative_sampling_gradients(const Eigen::VectorXd &input,
                                                      const Eigen::MatrixXd &output_vectors,
                                                      std::size_t target,
                                                      std::span<const std::size_t> negatives)
{
    NegativeSamplingGradients g;
    Eigen::MatrixXd moved = output_vectors;
    Eigen::VectorXd step(input.size());
    // a unit-rate step is exactly minus the gradient
    g.loss = ns_step(input, output_vectors, &moved, target, negatives, 1.0, step);
    g.input = -step;
    g.output = output_vectors - moved;
    return g;
}

DbowModel train_dbow(std::span<const PatientDocument> documents, const DbowConfig &config)
{
    if(config.dim == 0)
        throw std::invalid_argument("train_dbow: dim must be positive");
    if(documents.empty())
        throw std::invalid_argument("train_dbow: no documents");

    DbowModel model;
    model.config = config;

    std::vector<std::size_t> order(documents.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return documents[a].patient_id < documents[b].patient_id;
    });
    for(std::size_t i = 0; i < order.size(); ++i) {
        if(i > 0 && documents[order[i]].patient_id == documents[order[i - 1]].patient_id)
            throw std::invalid_argument("train_dbow: duplicate document id " +
                                        documents[order[i]].patient_id);
        model.document_ids.push_back(documents[order[i]].patient_id);
    }

    TermCounts counts;
    for(const auto &d : documents)
        for(const auto &t : d.tokens)
            ++counts[t];
    for(const auto &[term, n] : counts) {
        if(n >= config.min_count) {
            model.vocabulary.push_back(term);
            model.frequencies.push_back(n);
        }
    }
    if(model.vocabulary.empty())
        throw std::invalid_argument("train_dbow: no term occurs min_count times");
    model.noise = build_noise_distribution(model.frequencies, config.noise_power);
    const NoiseSampler sampler(model.noise);

    std::vector<std::vector<std::size_t>> sequences(order.size());
    std::size_t total_positions = 0;
    for(std::size_t i = 0; i < order.size(); ++i) {
        for(const auto &t : documents[order[i]].tokens)
            if(auto w = model.find(t))
                sequences[i].push_back(*w);
        model.degenerate.push_back(sequences[i].empty());
        total_positions += sequences[i].size();
    }

    const auto d = static_cast<Eigen::Index>(config.dim);
    const auto V = static_cast<Eigen::Index>(model.vocabulary.size());
    Rng rng(config.seed);
    model.document_vectors.resize(d, static_cast<Eigen::Index>(order.size()));
    init_uniform(model.document_vectors, rng);
    model.word_vectors.resize(d, V);
    init_uniform(model.word_vectors, rng);
    model.output_vectors = Eigen::MatrixXd::Zero(d, V);

    const double schedule = static_cast<double>(std::max<std::size_t>(1, total_positions * config.epochs));
    std::size_t processed = 0;
    std::vector<std::size_t> doc_order(order.size());
    std::iota(doc_order.begin(), doc_order.end(), std::size_t{0});
    std::vector<std::size_t> negatives;
    Eigen::VectorXd step(d);
    const auto window = static_cast<std::ptrdiff_t>(config.window);

    for(std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(doc_order.begin(), doc_order.end());
        double loss = 0.0;
        std::size_t updates = 0;
        for(const auto doc : doc_order) {
            const auto &seq = sequences[doc];
            auto h = model.document_vectors.col(static_cast<Eigen::Index>(doc));
            const auto len = static_cast<std::ptrdiff_t>(seq.size());
            for(std::ptrdiff_t i = 0; i < len; ++i) {
                const double lr = learning_rate(config, static_cast<double>(processed++) / schedule);
                const std::size_t target = seq[static_cast<std::size_t>(i)];
                draw_negatives(sampler, rng, config.negatives, target, negatives);
                loss += ns_step(h, model.output_vectors, &model.output_vectors, target, negatives,
                                lr, step);
                h += step;
                ++updates;
                if(!config.train_words)
                    continue;
                for(std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - window);
                    j <= std::min(len - 1, i + window); ++j) {
                    if(j == i)
                        continue;
                    auto in = model.word_vectors.col(
                        static_cast<Eigen::Index>(seq[static_cast<std::size_t>(j)]));
                    draw_negatives(sampler, rng, config.negatives, target, negatives);
                    loss += ns_step(in, model.output_vectors, &model.output_vectors, target,
                                    negatives, lr, step);
                    in += step;
                    ++updates;
                }
            }
        }
        const double mean = updates ? loss / static_cast<double>(updates) : 0.0;
        if(!std::isfinite(mean) || !model.document_vectors.allFinite() ||
           !model.word_vectors.allFinite() || !model.output_vectors.allFinite()) {
            std::ostringstream msg;
            msg << "train_dbow: non-finite values after epoch " << epoch + 1;
            throw TrainingError(msg.str());
        }
        model.loss_trace.push_back(mean);
    }
    return model;
}

InferredVector infer_vector(const DbowModel &model, std::span<const std::string> tokens,
                            std::uint64_t seed)
{
    const auto &config = model.config;
    InferredVector result;
    Rng rng(seed);
    Eigen::MatrixXd init(static_cast<Eigen::Index>(model.dim()), 1);
    init_uniform(init, rng);
    result.vector = init.col(0);

    std::vector<std::size_t> seq;
    for(const auto &t : tokens)
        if(auto w = model.find(t))
            seq.push_back(*w);
    if(seq.empty()) {
        result.degenerate = true;
        return result;
    }

    const NoiseSampler sampler(model.noise);
    std::vector<std::vector<std::size_t>> fixed(seq.size());
    for(std::size_t i = 0; i < seq.size(); ++i)
        draw_negatives(sampler, rng, config.negatives, seq[i], fixed[i]);
    auto evaluation_loss = [&](const Eigen::VectorXd &h) {
        double loss = 0.0;
        for(std::size_t i = 0; i < seq.size(); ++i)
            loss += negative_sampling_loss(h, model.output_vectors, seq[i], fixed[i]);
        return loss / static_cast<double>(seq.size());
    };

    const std::size_t max_epochs = config.max_inference_epochs;
    const double schedule = static_cast<double>(max_epochs * seq.size());
    std::size_t processed = 0;
    std::vector<std::size_t> negatives;
    Eigen::VectorXd step(result.vector.size());
    double previous = evaluation_loss(result.vector);
    for(std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
        for(const auto target : seq) {
            const double lr = learning_rate(config, static_cast<double>(processed++) / schedule);
            draw_negatives(sampler, rng, config.negatives, target, negatives);
            ns_step(result.vector, model.output_vectors, nullptr, target, negatives, lr, step);
            result.vector += step;
        }
        const double current = evaluation_loss(result.vector);
        result.loss_trace.push_back(current);
        result.epochs = epoch + 1;
        if(!std::isfinite(current))
            throw TrainingError("infer_vector: non-finite loss");
        if(previous - current < config.inference_tolerance * previous)
            break;
        previous = current;
    }
    return result;
}

void encode_dbow(const DbowModel &model, ByteWriter &out)
{
    const auto &c = model.config;
    out.u64(c.dim);
    out.u64(c.window);
    out.u64(c.min_count);
    out.u64(c.negatives);
    out.u64(c.epochs);
    out.f64(c.noise_power);
    out.f64(c.start_learning_rate);
    out.f64(c.end_learning_rate);
    out.u8(c.train_words ? 1 : 0);
    out.u64(c.max_inference_epochs);
    out.f64(c.inference_tolerance);
    out.u64(c.seed);
    out.strings(model.vocabulary);
    out.u64s(model.frequencies);
    out.f64s(model.noise);
    out.strings(model.document_ids);
    std::vector<std::uint64_t> degenerate(model.degenerate.begin(), model.degenerate.end());
    out.u64s(degenerate);
    out.matrix(model.document_vectors);
    out.matrix(model.word_vectors);
    out.matrix(model.output_vectors);
    out.f64s(model.loss_trace);
}

DbowModel decode_dbow(ByteReader &in)
{
    DbowModel model;
    auto &c = model.config;
    c.dim = in.u64();
    c.window = in.u64();
    c.min_count = in.u64();
    c.negatives = in.u64();
    c.epochs = in.u64();
    c.noise_power = in.f64();
    c.start_learning_rate = in.f64();
    c.end_learning_rate = in.f64();
    c.train_words = in.u8() != 0;
    c.max_inference_epochs = in.u64();
    c.inference_tolerance = in.f64();
    c.seed = in.u64();
    model.vocabulary = in.strings();
    model.frequencies = in.u64s();
    model.noise = in.f64s();
    model.document_ids = in.strings();
    for(const auto v : in.u64s())
        model.degenerate.push_back(v != 0);
    model.document_vectors = in.matrix();
    model.word_vectors = in.matrix();
    model.output_vectors = in.matrix();
    model.loss_trace = in.f64s();
    in.expect_end();

    const auto V = static_cast<Eigen::Index>(model.vocabulary.size());
    const auto d = static_cast<Eigen::Index>(c.dim);
    if(model.frequencies.size() != model.vocabulary.size() ||
       model.noise.size() != model.vocabulary.size() ||
       model.degenerate.size() != model.document_ids.size() || model.document_vectors.rows() != d ||
       model.document_vectors.cols() != static_cast<Eigen::Index>(model.document_ids.size()) ||
       model.word_vectors.rows() != d || model.word_vectors.cols() != V ||
       model.output_vectors.rows() != d || model.output_vectors.cols() != V)
        throw SerializationError("dbow model: inconsistent dimensions");
    return model;
}

void save_dbow(const DbowModel &model, const std::filesystem::path &path)
{
    ByteWriter w;
    encode_dbow(model, w);
    write_container(path, ModelType::dbow, w);
}

DbowModel load_dbow(const std::filesystem::path &path)
{
    auto r = read_container(path, ModelType::dbow);
    return decode_dbow(r);
}

} // namespace repvec
