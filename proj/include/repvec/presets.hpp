#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "repvec/classifier.hpp"
#include "repvec/doc2vec.hpp"
#include "repvec/sdae.hpp"

namespace repvec {

enum class FeatureKind { bow, bocui };

std::string_view to_string(FeatureKind f);
FeatureKind parse_feature_kind(std::string_view name);

/// Published SDAE settings per input feature set, RMSProp at lr 0.001.
SdaeConfig sdae_preset(FeatureKind features);

/// Published DBOW settings: 300 dims, window 3, min count 10, 5 negatives, 5 epochs.
DbowConfig dbow_preset();

struct ClassifierPreset {
    std::string_view task;
    std::string_view system;
    ClassifierArchitecture architecture;
};

/// Systems: bow, sdae-bow, doc2vec, ensemble, bocui, sdae-bocui.
/// Tasks: in_hosp, 30_days, 1_year, pri_diag_cat, pri_proc_cat, gender.
std::span<const ClassifierPreset> classifier_presets();

std::optional<ClassifierArchitecture> find_classifier_preset(std::string_view task, std::string_view system);

} // namespace repvec
