#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "repvec/presets.hpp"

using namespace repvec;

namespace {

// Appendix table transcribed as text, one row per (task, system).
const char *published_rows = R"(in_hosp bow 7 980 sigmoid
in_hosp sdae-bow 7 160 relu
in_hosp doc2vec 10 410 sigmoid
in_hosp ensemble 7 340 tanh
in_hosp bocui 3 680 sigmoid
in_hosp sdae-bocui 3 560 sigmoid
30_days bow 10 220 relu
30_days sdae-bow 3 820 sigmoid
30_days doc2vec 2 900 sigmoid
30_days ensemble 8 430 sigmoid
30_days bocui 7 510 tanh
30_days sdae-bocui 3 750 sigmoid
1_year bow 1 650 sigmoid
1_year sdae-bow 10 570 sigmoid
1_year doc2vec 3 1000 sigmoid
1_year ensemble 5 920 sigmoid
1_year bocui 1 290 sigmoid
1_year sdae-bocui 6 290 relu
pri_diag_cat bow 4 100 sigmoid
pri_diag_cat sdae-bow 2 110 sigmoid
pri_diag_cat doc2vec 9 600 relu
pri_diag_cat ensemble 8 700 relu
pri_diag_cat bocui 4 80 sigmoid
pri_diag_cat sdae-bocui 8 230 relu
pri_proc_cat bow 2 220 sigmoid
pri_proc_cat sdae-bow 5 890 relu
pri_proc_cat doc2vec 3 980 relu
pri_proc_cat ensemble 8 520 relu
pri_proc_cat bocui 10 760 relu
pri_proc_cat sdae-bocui 6 540 relu
gender bow 0 NA NA
gender sdae-bow 8 160 relu
gender doc2vec 0 NA NA
gender ensemble 7 280 sigmoid
gender bocui 5 410 relu
gender sdae-bocui 1 210 relu
)";

} // namespace

TEST(Presets, ClassifierTableMatchesPublishedRows)
{
    std::istringstream in(published_rows);
    std::string task, system, layers, width, act;
    std::size_t rows = 0;
    while(in >> task >> system >> layers >> width >> act) {
        ++rows;
        const auto a = find_classifier_preset(task, system);
        ASSERT_TRUE(a.has_value()) << task << " " << system;
        EXPECT_EQ(describe(*a), layers == "0" ? "0/NA/NA" : layers + "/" + width + "/" + act) << task << " " << system;
    }
    EXPECT_EQ(rows, 36u);
    EXPECT_EQ(classifier_presets().size(), 36u);
    std::set<std::pair<std::string, std::string>> keys;
    for(const auto &p : classifier_presets())
        keys.insert({std::string(p.task), std::string(p.system)});
    EXPECT_EQ(keys.size(), 36u);
}

TEST(Presets, WorkedLookups)
{
    EXPECT_EQ(describe(*find_classifier_preset("in_hosp", "sdae-bow")), "7/160/relu");
    EXPECT_EQ(find_classifier_preset("gender", "bow")->hidden_layers, 0u);
    EXPECT_FALSE(find_classifier_preset("in_hosp", "lda").has_value());
    EXPECT_FALSE(find_classifier_preset("readmission", "bow").has_value());
}

TEST(Presets, SdaeAndDbow)
{
    const auto bow = sdae_preset(FeatureKind::bow);
    ASSERT_EQ(bow.layers.size(), 1u);
    EXPECT_EQ(bow.layers[0].hidden_dim, 800u);
    EXPECT_EQ(bow.layers[0].corruption, 0.05);
    EXPECT_EQ(bow.optimizer.learning_rate, 0.001);
    const auto cui = sdae_preset(FeatureKind::bocui);
    ASSERT_EQ(cui.layers.size(), 1u);
    EXPECT_EQ(cui.layers[0].hidden_dim, 300u);
    EXPECT_EQ(cui.layers[0].corruption, 0.4);

    const auto d = dbow_preset();
    EXPECT_EQ(d.dim, 300u);
    EXPECT_EQ(d.window, 3u);
    EXPECT_EQ(d.min_count, 10u);
    EXPECT_EQ(d.negatives, 5u);
    EXPECT_EQ(d.epochs, 5u);
}

TEST(Presets, FeatureKindNames)
{
    EXPECT_EQ(parse_feature_kind("bow"), FeatureKind::bow);
    EXPECT_EQ(parse_feature_kind("bocui"), FeatureKind::bocui);
    EXPECT_EQ(to_string(FeatureKind::bocui), "bocui");
    EXPECT_THROW(parse_feature_kind("cui"), std::invalid_argument);
}
