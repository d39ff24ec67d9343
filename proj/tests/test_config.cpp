#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repvec/config.hpp"

using namespace repvec;

TEST(Config, ParsesKeysCommentsAndLists)
{
    const auto c = PipelineConfig::parse("# comment\n\n task = in_hosp \nseed=12\nsignificance.systems = bow, ,doc2vec\n"
                                         "sdae.learning_rate = 0.01\nsynth.task.mort.markers = a,b\n");
    EXPECT_EQ(c.text("task"), "in_hosp");
    EXPECT_EQ(c.seed(), 12u);
    EXPECT_EQ(c.list("significance.systems"), (std::vector<std::string>{"bow", "doc2vec"}));
    EXPECT_EQ(c.real("sdae.learning_rate", 0.0), 0.01);
    EXPECT_EQ(c.list("synth.task.mort.markers"), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(c.integer("sdae.epochs", 20), 20u);
    EXPECT_EQ(c.text("feature_set", "bow"), "bow");
    EXPECT_THROW(c.text("notes"), ConfigError);
}

TEST(Config, RejectsMalformedInput)
{
    EXPECT_THROW(PipelineConfig::parse("task\n"), ConfigError);
    EXPECT_THROW(PipelineConfig::parse("task=a\ntask=b\n"), ConfigError);
    EXPECT_THROW(PipelineConfig::parse("tsak=a\n"), ConfigError);
    EXPECT_THROW(PipelineConfig::parse("synth.task.x.colour=red\n"), ConfigError);
    const auto c = PipelineConfig::parse("seed=-1\nsdae.learning_rate=fast\nsearch.samples=3x\n");
    EXPECT_THROW(c.seed(), ConfigError);
    EXPECT_THROW(c.real("sdae.learning_rate", 0), ConfigError);
    EXPECT_THROW(c.integer("search.samples", 0), ConfigError);
    try {
        PipelineConfig::parse("seed=1\n\nbogus=2\n");
        FAIL();
    } catch(const ConfigError &e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(Config, PathsResolveAgainstConfigDirectory)
{
    const auto dir = oracle::temp_dir("config_paths");
    std::ofstream(dir / "run.conf") << "notes = data/notes.tsv\nlabels = /abs/labels.tsv\nout = results\n";
    const auto c = PipelineConfig::load(dir / "run.conf");
    EXPECT_EQ(c.path("notes"), dir / "data/notes.tsv");
    EXPECT_EQ(c.path("labels"), std::filesystem::path("/abs/labels.tsv"));
    EXPECT_EQ(c.out_dir(), dir / "results");
    EXPECT_FALSE(c.optional_path("concepts").has_value());
    EXPECT_THROW(PipelineConfig::load(dir / "missing.conf"), ConfigError);
}

TEST(Config, OverridesAreValidated)
{
    auto c = PipelineConfig::parse("seed=1\n");
    c.set("seed", "5");
    EXPECT_EQ(c.seed(), 5u);
    EXPECT_THROW(c.set("nonsense", "1"), ConfigError);
    EXPECT_TRUE(is_known_config_key("synth.latent.severity.max_rate"));
    EXPECT_FALSE(is_known_config_key("synth.latent..max_rate"));
}
