#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ckgr/config.hpp"
#include "ckgr/errors.hpp"

using namespace ckgr;

TEST(Config, DefaultsValidate) {
    RunConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    const auto hp = cfg.hyperparameters();
    EXPECT_EQ(hp.entity_dim, 64u);
    EXPECT_EQ(hp.relation_dim, 64u);
    EXPECT_EQ(hp.layers, 2u);
    EXPECT_EQ(hp.layer_dims, (std::vector<std::size_t>{32, 16}));
    EXPECT_EQ(hp.learning_rate, 0.001);
    EXPECT_EQ(hp.eval_k, 10u);
    EXPECT_EQ(cfg.seed(), 42u);
    EXPECT_TRUE(std::isinf(cfg.implicit_threshold()));
}

TEST(Config, LoadsKeyValueLinesWithComments) {
    std::istringstream in("# run\nmodel.d = 16  # small\n\ntrain.lr=0.01\nseed = 7\n");
    RunConfig cfg;
    cfg.load(in);
    EXPECT_EQ(cfg.hyperparameters().entity_dim, 16u);
    EXPECT_EQ(cfg.hyperparameters().learning_rate, 0.01);
    EXPECT_EQ(cfg.seed(), 7u);
    EXPECT_TRUE(cfg.is_set("seed"));
    EXPECT_FALSE(cfg.is_set("model.k"));
}

TEST(Config, UnknownKeyRejectedWithLine) {
    std::istringstream in("model.d = 8\nmodel.depth = 3\n");
    RunConfig cfg;
    try {
        cfg.load(in, "run.cfg");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("model.depth"), std::string::npos);
    }
}

TEST(Config, MalformedValuesRejected) {
    for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
             {"model.d", "abc"}, {"model.d", "0"}, {"train.lr", "-1"}, {"train.lr", "nan"}, {"split.ratios", "0.8,0.2"},
             {"model.attention", "dot"}, {"kg.id_order", "random"}, {"aggregator.shared_weights", "maybe"},
             {"eval.k", "0"}, {"data.format", "xml"}}) {
        RunConfig cfg;
        cfg.set(key, value);
        EXPECT_THROW(cfg.validate(), ConfigError) << key << "=" << value;
    }
}

TEST(Config, PrintedAttentionNeedsSquareProjection) {
    RunConfig cfg;
    cfg.set("model.attention", "printed");
    cfg.set("model.k", "32");
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.set("model.k", "64");
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, AssignmentOverrides) {
    RunConfig cfg;
    cfg.set_assignment("train.epochs = 5");
    EXPECT_EQ(cfg.hyperparameters().epochs, 5u);
    EXPECT_THROW(cfg.set_assignment("train.epochs"), ConfigError);
}

TEST(Config, SeedEnvIsFallbackOnly) {
    RunConfig a;
    a.apply_seed_env("123");
    EXPECT_EQ(a.seed(), 123u);
    RunConfig b;
    b.set("seed", "5");
    b.apply_seed_env("123");
    EXPECT_EQ(b.seed(), 5u);
    RunConfig c;
    EXPECT_THROW(c.apply_seed_env("x1"), ConfigError);
    c.apply_seed_env(nullptr);
    EXPECT_EQ(c.seed(), 42u);
}

TEST(Config, ThresholdAndLists) {
    RunConfig cfg;
    cfg.set("data.threshold", "4");
    EXPECT_EQ(cfg.implicit_threshold(), 4.0);
    EXPECT_EQ(parse_size_list("k", "1, 2,3"), (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_THROW(parse_size_list("k", "1,,3"), ConfigError);
    EXPECT_THROW(parse_real("k", "1.5x"), ConfigError);
}
