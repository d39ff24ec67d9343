#include "repvec/models.hpp"

#include <algorithm>

namespace repvec {

std::optional<std::size_t> RepresentationSet::column_of(std::string_view patient_id) const
{
    const auto it = std::lower_bound(patient_ids.begin(), patient_ids.end(), patient_id);
    if(it == patient_ids.end() || *it != patient_id)
        return std::nullopt;
    return static_cast<std::size_t>(it - patient_ids.begin());
}

DenseRepresentation RepresentationSet::at(std::size_t i) const
{
    return {patient_ids.at(i), values.col(static_cast<Eigen::Index>(i))};
}

RepresentationSet concat_representation_sets(const RepresentationSet &a, const RepresentationSet &b,
                                             std::string system)
{
    if(a.patient_ids != b.patient_ids)
        throw std::invalid_argument("concat_representation_sets: " + a.system + " and " + b.system +
                                    " cover different patients");
    RepresentationSet out;
    out.system = std::move(system);
    out.patient_ids = a.patient_ids;
    out.values.resize(a.values.rows() + b.values.rows(), a.values.cols());
    for(std::size_t i = 0; i < a.patient_ids.size(); ++i)
        out.values.col(static_cast<Eigen::Index>(i)) = concat_representations(a.at(i), b.at(i)).values;
    return out;
}

bool same_feature_set(const FeatureSet &a, const FeatureSet &b)
{
    return a.vocabulary == b.vocabulary && a.tfidf == b.tfidf && a.patient_ids == b.patient_ids &&
           a.rows == b.rows && a.degenerate == b.degenerate;
}

void encode_feature_set(const FeatureSet &features, ByteWriter &out)
{
    const auto &terms = features.vocabulary.terms();
    const auto &freqs = features.vocabulary.frequencies();
    out.u64(features.vocabulary.min_frequency());
    out.strings(std::vector<std::string>(terms.begin() + 1, terms.end()));
    out.u64s(std::vector<std::uint64_t>(freqs.begin() + 1, freqs.end()));
    out.f64s(features.tfidf.idf());
    out.u64(features.tfidf.n_documents());
    out.strings(features.patient_ids);
    for(std::size_t i = 0; i < features.rows.size(); ++i) {
        const auto &row = features.rows[i];
        out.u8(features.degenerate[i] ? 1 : 0);
        out.u64(row.indices.size());
        for(std::size_t k = 0; k < row.indices.size(); ++k) {
            out.u32(row.indices[k]);
            out.f64(row.values[k]);
        }
    }
}

FeatureSet decode_feature_set(ByteReader &in)
{
    FeatureSet fs;
    const auto min_frequency = in.u64();
    auto terms = in.strings();
    auto freqs = in.u64s();
    try {
        fs.vocabulary = Vocabulary(std::move(terms), std::move(freqs), min_frequency);
    } catch(const std::invalid_argument &e) {
        throw SerializationError(std::string("feature set: ") + e.what());
    }
    auto idf = in.f64s();
    if(idf.size() != fs.vocabulary.size())
        throw SerializationError("feature set: idf length does not match the vocabulary");
    const auto n_documents = in.u64();
    fs.tfidf = TfidfModel(std::move(idf), n_documents);
    fs.patient_ids = in.strings();
    const std::size_t dim = fs.vocabulary.size();
    for(std::size_t i = 0; i < fs.patient_ids.size(); ++i) {
        fs.degenerate.push_back(in.u8() != 0);
        SparseVector row;
        row.dim = dim;
        const auto nnz = in.u64();
        for(std::uint64_t k = 0; k < nnz; ++k) {
            const auto idx = in.u32();
            if(idx >= dim || (!row.indices.empty() && idx <= row.indices.back()))
                throw SerializationError("feature set: invalid sparse index");
            row.indices.push_back(idx);
            row.values.push_back(in.f64());
        }
        fs.rows.push_back(std::move(row));
    }
    return fs;
}

void save_feature_set(const FeatureSet &features, const std::filesystem::path &path)
{
    ByteWriter w;
    encode_feature_set(features, w);
    write_container(path, ModelType::feature_set, w);
}

FeatureSet load_feature_set(const std::filesystem::path &path)
{
    auto r = read_container(path, ModelType::feature_set);
    auto fs = decode_feature_set(r);
    r.expect_end();
    return fs;
}

void encode_representations(const RepresentationSet &reps, ByteWriter &out)
{
    out.str(reps.system);
    out.strings(reps.patient_ids);
    out.matrix(reps.values);
}

RepresentationSet decode_representations(ByteReader &in)
{
    RepresentationSet reps;
    reps.system = in.str();
    reps.patient_ids = in.strings();
    reps.values = in.matrix();
    if(reps.values.cols() != static_cast<Eigen::Index>(reps.patient_ids.size()))
        throw SerializationError("representations: column count does not match the patient list");
    return reps;
}

void save_representations(const RepresentationSet &reps, const std::filesystem::path &path)
{
    ByteWriter w;
    encode_representations(reps, w);
    write_container(path, ModelType::representations, w);
}

RepresentationSet load_representations(const std::filesystem::path &path)
{
    auto r = read_container(path, ModelType::representations);
    auto reps = decode_representations(r);
    r.expect_end();
    return reps;
}

void save_model(const TrainedModel &model, const std::filesystem::path &path)
{
    std::visit(
        [&](const auto &m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr(std::is_same_v<T, SdaeModel>)
                save_sdae(m, path);
            else if constexpr(std::is_same_v<T, DbowModel>)
                save_dbow(m, path);
            else if constexpr(std::is_same_v<T, FeedForwardClassifier>)
                save_classifier(m, path);
            else if constexpr(std::is_same_v<T, FeatureSet>)
                save_feature_set(m, path);
            else
                save_representations(m, path);
        },
        model);
}

TrainedModel load_model(const std::filesystem::path &path)
{
    switch(peek_model_type(path)) {
    case ModelType::sdae:
        return load_sdae(path);
    case ModelType::dbow:
        return load_dbow(path);
    case ModelType::classifier:
        return load_classifier(path);
    case ModelType::feature_set:
        return load_feature_set(path);
    case ModelType::representations:
        return load_representations(path);
    }
    throw SerializationError(path.string() + ": unknown model type");
}

} // namespace repvec
