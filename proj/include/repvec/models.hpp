#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "repvec/classifier.hpp"
#include "repvec/corpus.hpp"
#include "repvec/doc2vec.hpp"
#include "repvec/sdae.hpp"
#include "repvec/serialize.hpp"

namespace repvec {

/// Dense representations of a cohort, one column per patient.
struct RepresentationSet {
    std::string system;
    std::vector<std::string> patient_ids; // sorted
    Eigen::MatrixXd values;               // d x n

    std::optional<std::size_t> column_of(std::string_view patient_id) const;
    DenseRepresentation at(std::size_t i) const;
    bool operator==(const RepresentationSet &) const = default;
};

/// Column-wise concatenation over the same patients.
RepresentationSet concat_representation_sets(const RepresentationSet &a, const RepresentationSet &b,
                                             std::string system);

bool same_feature_set(const FeatureSet &a, const FeatureSet &b);

void encode_feature_set(const FeatureSet &features, ByteWriter &out);
FeatureSet decode_feature_set(ByteReader &in);
void save_feature_set(const FeatureSet &features, const std::filesystem::path &path);
FeatureSet load_feature_set(const std::filesystem::path &path);

void encode_representations(const RepresentationSet &reps, ByteWriter &out);
RepresentationSet decode_representations(ByteReader &in);
void save_representations(const RepresentationSet &reps, const std::filesystem::path &path);
RepresentationSet load_representations(const std::filesystem::path &path);

using TrainedModel = std::variant<SdaeModel, DbowModel, FeedForwardClassifier, FeatureSet, RepresentationSet>;

void save_model(const TrainedModel &model, const std::filesystem::path &path);
/// Dispatches on the container's type tag.
TrainedModel load_model(const std::filesystem::path &path);

} // namespace repvec
