#include <algorithm>
#include <cstring>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repvec/doc2vec.hpp"
#include "repvec/synthetic.hpp"

using namespace repvec;

namespace {

double cosine(const Eigen::VectorXd &a, const Eigen::VectorXd &b)
{
    return a.dot(b) / (a.norm() * b.norm());
}

// Documents drawn from one of two disjoint topic vocabularies plus a shared
// pool of filler words.
std::vector<PatientDocument> two_topic_corpus(std::size_t n_docs, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<PatientDocument> docs;
    for(std::size_t i = 0; i < n_docs; ++i) {
        PatientDocument d;
        d.patient_id = "D" + std::to_string(1000 + i);
        const std::size_t topic = i % 2;
        for(int t = 0; t < 80; ++t) {
            if(rng.bernoulli(0.3))
                d.tokens.push_back(synthetic_word(100 + rng.below(10)));
            else
                d.tokens.push_back(synthetic_word(topic * 40 + rng.below(40)));
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

DbowConfig small_config()
{
    DbowConfig c;
    c.dim = 20;
    c.min_count = 3;
    c.seed = 11;
    return c;
}

} // namespace

TEST(NoiseDistribution, WorkedExamples)
{
    const std::vector<std::uint64_t> even = {1, 1};
    EXPECT_EQ(build_noise_distribution(even, 0.75), (std::vector<double>{0.5, 0.5}));
    const std::vector<std::uint64_t> skew = {16, 1};
    const auto p = build_noise_distribution(skew, 0.75);
    EXPECT_NEAR(p[0], 8.0 / 9.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0 / 9.0, 1e-15);
    const std::vector<std::uint64_t> mixed = {3, 70, 5, 1};
    for(const auto v : build_noise_distribution(mixed, 0.0))
        EXPECT_NEAR(v, 0.25, 1e-15);

    const TermCounts terms = {{"b", 1}, {"a", 16}};
    EXPECT_NEAR(build_noise_distribution(terms, 0.75)[0], 8.0 / 9.0, 1e-15);
}

TEST(NoiseDistribution, RejectsInvalidInput)
{
    EXPECT_THROW(build_noise_distribution(std::vector<std::uint64_t>{}, 0.75), std::invalid_argument);
    EXPECT_THROW(build_noise_distribution(std::vector<std::uint64_t>{1, 0}, 0.75), std::invalid_argument);
    EXPECT_THROW(build_noise_distribution(std::vector<std::uint64_t>{1, 2}, -1.0), std::invalid_argument);
}

TEST(NoiseDistribution, SumsToOneAndSamplerFollowsIt)
{
    Rng rng(1);
    std::vector<std::uint64_t> counts(30);
    for(auto &c : counts)
        c = 1 + rng.below(500);
    const auto p = build_noise_distribution(counts, 0.75);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);

    const NoiseSampler sampler(p);
    std::vector<double> hits(p.size());
    const int draws = 200000;
    for(int i = 0; i < draws; ++i)
        hits[sampler(rng)] += 1.0;
    for(std::size_t i = 0; i < p.size(); ++i) {
        const double sd = std::sqrt(p[i] * (1 - p[i]) / draws);
        EXPECT_NEAR(hits[i] / draws, p[i], 5 * sd + 1e-9) << i;
    }
}

TEST(NegativeSampling, GradientsMatchFiniteDifferences)
{
    Rng rng(2);
    for(int trial = 0; trial < 25; ++trial) {
        const auto d = static_cast<Eigen::Index>(2 + rng.below(6));
        const auto V = static_cast<Eigen::Index>(3 + rng.below(8));
        const Eigen::VectorXd h = oracle::random_matrix(d, 1, rng);
        const Eigen::MatrixXd out = oracle::random_matrix(d, V, rng);
        const std::size_t target = rng.below(static_cast<std::uint64_t>(V));
        std::vector<std::size_t> negatives;
        for(int j = 0; j < 5; ++j)
            negatives.push_back(rng.below(static_cast<std::uint64_t>(V)));

        const auto g = negative_sampling_gradients(h, out, target, negatives);
        EXPECT_NEAR(g.loss, negative_sampling_loss(h, out, target, negatives), 1e-12);

        const auto num_in = oracle::central_gradient(
            [&](const Eigen::VectorXd &x) { return negative_sampling_loss(x, out, target, negatives); },
            h);
        EXPECT_LT(oracle::max_relative_error(g.input, num_in), 1e-4);

        const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(out.data(), out.size());
        const auto num_out = oracle::central_gradient(
            [&](const Eigen::VectorXd &x) {
                const Eigen::MatrixXd o = Eigen::Map<const Eigen::MatrixXd>(x.data(), d, V);
                return negative_sampling_loss(h, o, target, negatives);
            },
            flat);
        const Eigen::MatrixXd num_out_m = Eigen::Map<const Eigen::MatrixXd>(num_out.data(), d, V);
        EXPECT_LT(oracle::max_relative_error(g.output, num_out_m), 1e-4);
    }
}

TEST(TrainDbow, DefaultConfigEcho)
{
    const DbowConfig c;
    EXPECT_EQ(c.epochs, 5u);
    EXPECT_EQ(c.window, 3u);
    EXPECT_EQ(c.min_count, 10u);
    EXPECT_EQ(c.negatives, 5u);
    EXPECT_EQ(c.dim, 300u);
}

TEST(TrainDbow, SeparatesTopics)
{
    const auto docs = two_topic_corpus(40, 3);
    const auto model = train_dbow(docs, small_config());
    double intra = 0, inter = 0;
    int n_intra = 0, n_inter = 0;
    for(std::size_t i = 0; i < docs.size(); ++i)
        for(std::size_t j = i + 1; j < docs.size(); ++j) {
            const auto a = model.document_vectors.col(*model.document_index(docs[i].patient_id));
            const auto b = model.document_vectors.col(*model.document_index(docs[j].patient_id));
            const double c = cosine(a, b);
            if(i % 2 == j % 2) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    EXPECT_GT(intra / n_intra, inter / n_inter);
}

TEST(TrainDbow, SmoothedLossDecreases)
{
    const auto docs = two_topic_corpus(40, 4);
    const auto model = train_dbow(docs, small_config());
    const auto &trace = model.loss_trace;
    ASSERT_EQ(trace.size(), 5u);
    // 2-epoch moving average
    for(std::size_t e = 2; e < trace.size(); ++e)
        EXPECT_LE(trace[e] + trace[e - 1], trace[e - 1] + trace[e - 2]) << e;
}

TEST(TrainDbow, MinCountContract)
{
    std::vector<PatientDocument> docs(3);
    for(std::size_t i = 0; i < docs.size(); ++i)
        docs[i].patient_id = "P" + std::to_string(i);
    for(int i = 0; i < 10; ++i)
        docs[i % 3].tokens.push_back("frequent");
    for(int i = 0; i < 9; ++i)
        docs[i % 3].tokens.push_back("rare");
    DbowConfig c = small_config();
    c.min_count = 10;
    const auto model = train_dbow(docs, c);
    EXPECT_EQ(model.vocabulary, std::vector<std::string>{"frequent"});
    EXPECT_FALSE(model.find("rare"));
    EXPECT_EQ(model.word_vectors.cols(), 1);

    c.min_count = 11;
    EXPECT_THROW(train_dbow(docs, c), std::invalid_argument);
}

TEST(TrainDbow, DeterministicAndDuplicateIdsRejected)
{
    auto docs = two_topic_corpus(10, 5);
    EXPECT_TRUE(train_dbow(docs, small_config()) == train_dbow(docs, small_config()));
    auto other = small_config();
    other.seed = 12;
    EXPECT_FALSE(train_dbow(docs, small_config()) == train_dbow(docs, other));
    docs[1].patient_id = docs[0].patient_id;
    EXPECT_THROW(train_dbow(docs, small_config()), std::invalid_argument);
}

TEST(InferVector, FreezesEverythingButTheNewVector)
{
    const auto docs = two_topic_corpus(20, 6);
    const auto model = train_dbow(docs, small_config());
    const DbowModel before = model;
    const auto inferred = infer_vector(model, docs[3].tokens, 99);
    EXPECT_FALSE(inferred.degenerate);
    EXPECT_GT(inferred.epochs, 0u);
    EXPECT_LE(inferred.epochs, model.config.max_inference_epochs);
    EXPECT_TRUE(model == before);
    EXPECT_EQ(std::memcmp(model.output_vectors.data(), before.output_vectors.data(),
                          sizeof(double) * static_cast<std::size_t>(model.output_vectors.size())),
              0);
}

TEST(InferVector, RecoversTrainingDocuments)
{
    const auto docs = two_topic_corpus(40, 7);
    const auto model = train_dbow(docs, small_config());
    int wins = 0;
    for(std::size_t i = 0; i < docs.size(); ++i) {
        const auto inferred = infer_vector(model, docs[i].tokens, 1000 + i);
        const std::size_t own = *model.document_index(docs[i].patient_id);
        std::vector<double> others;
        for(std::size_t j = 0; j < docs.size(); ++j)
            if(j != own)
                others.push_back(cosine(inferred.vector, model.document_vectors.col(j)));
        std::nth_element(others.begin(), others.begin() + others.size() / 2, others.end());
        const double median = others[others.size() / 2];
        wins += cosine(inferred.vector, model.document_vectors.col(own)) > median;
    }
    EXPECT_EQ(wins, 40);
}

TEST(InferVector, NoKnownTokensIsDegenerate)
{
    const auto docs = two_topic_corpus(10, 8);
    const auto model = train_dbow(docs, small_config());
    const std::vector<std::string> unknown = {"zzz", "qqq"};
    const auto r = infer_vector(model, unknown, 1);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.epochs, 0u);
    EXPECT_EQ(r.vector.size(), 20);
    EXPECT_LE(r.vector.cwiseAbs().maxCoeff(), 0.5 / 20);
    EXPECT_TRUE(infer_vector(model, {}, 1).degenerate);
}

TEST(DbowSerialization, RoundTripIsBitExact)
{
    const auto docs = two_topic_corpus(10, 9);
    const auto model = train_dbow(docs, small_config());
    const auto dir = oracle::temp_dir("dbow");
    save_dbow(model, dir / "d.rpv");
    const auto loaded = load_dbow(dir / "d.rpv");
    EXPECT_TRUE(loaded == model);
    const auto a = infer_vector(model, docs[0].tokens, 5), b = infer_vector(loaded, docs[0].tokens, 5);
    EXPECT_EQ(a.vector, b.vector);
    EXPECT_THROW(load_dbow(dir / "missing.rpv"), SerializationError);
}
