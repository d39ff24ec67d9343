#include "repvec/presets.hpp"

#include <array>
#include <stdexcept>

namespace repvec {

std::string_view to_string(FeatureKind f)
{
    return f == FeatureKind::bow ? "bow" : "bocui";
}

FeatureKind parse_feature_kind(std::string_view name)
{
    if(name == "bow")
        return FeatureKind::bow;
    if(name == "bocui")
        return FeatureKind::bocui;
    throw std::invalid_argument("unknown feature set '" + std::string(name) + "' (expected bow or bocui)");
}

SdaeConfig sdae_preset(FeatureKind features)
{
    SdaeConfig c;
    if(features == FeatureKind::bow)
        c.layers = {{800, 0.05}};
    else
        c.layers = {{300, 0.4}};
    c.optimizer.learning_rate = 0.001;
    return c;
}

DbowConfig dbow_preset()
{
    DbowConfig c;
    c.dim = 300;
    c.window = 3;
    c.min_count = 10;
    c.negatives = 5;
    c.epochs = 5;
    return c;
}

namespace {

constexpr Activation sig = Activation::sigmoid, tanh_ = Activation::tanh, relu = Activation::relu;

const std::array<ClassifierPreset, 36> presets = {{
    {"in_hosp", "bow", {7, 980, sig}},
    {"in_hosp", "sdae-bow", {7, 160, relu}},
    {"in_hosp", "doc2vec", {10, 410, sig}},
    {"in_hosp", "ensemble", {7, 340, tanh_}},
    {"in_hosp", "bocui", {3, 680, sig}},
    {"in_hosp", "sdae-bocui", {3, 560, sig}},

    {"30_days", "bow", {10, 220, relu}},
    {"30_days", "sdae-bow", {3, 820, sig}},
    {"30_days", "doc2vec", {2, 900, sig}},
    {"30_days", "ensemble", {8, 430, sig}},
    {"30_days", "bocui", {7, 510, tanh_}},
    {"30_days", "sdae-bocui", {3, 750, sig}},

    {"1_year", "bow", {1, 650, sig}},
    {"1_year", "sdae-bow", {10, 570, sig}},
    {"1_year", "doc2vec", {3, 1000, sig}},
    {"1_year", "ensemble", {5, 920, sig}},
    {"1_year", "bocui", {1, 290, sig}},
    {"1_year", "sdae-bocui", {6, 290, relu}},

    {"pri_diag_cat", "bow", {4, 100, sig}},
    {"pri_diag_cat", "sdae-bow", {2, 110, sig}},
    {"pri_diag_cat", "doc2vec", {9, 600, relu}},
    {"pri_diag_cat", "ensemble", {8, 700, relu}},
    {"pri_diag_cat", "bocui", {4, 80, sig}},
    {"pri_diag_cat", "sdae-bocui", {8, 230, relu}},

    {"pri_proc_cat", "bow", {2, 220, sig}},
    {"pri_proc_cat", "sdae-bow", {5, 890, relu}},
    {"pri_proc_cat", "doc2vec", {3, 980, relu}},
    {"pri_proc_cat", "ensemble", {8, 520, relu}},
    {"pri_proc_cat", "bocui", {10, 760, relu}},
    {"pri_proc_cat", "sdae-bocui", {6, 540, relu}},

    {"gender", "bow", {0, 0, sig}},
    {"gender", "sdae-bow", {8, 160, relu}},
    {"gender", "doc2vec", {0, 0, sig}},
    {"gender", "ensemble", {7, 280, sig}},
    {"gender", "bocui", {5, 410, relu}},
    {"gender", "sdae-bocui", {1, 210, relu}},
}};

} // namespace

std::span<const ClassifierPreset> classifier_presets()
{
    return presets;
}

std::optional<ClassifierArchitecture> find_classifier_preset(std::string_view task, std::string_view system)
{
    for(const auto &p : presets)
        if(p.task == task && p.system == system)
            return p.architecture;
    return std::nullopt;
}

} // namespace repvec
