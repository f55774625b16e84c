#include "ta/config.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <map>

namespace {

ta::EnvLookup fake_env(std::map<std::string, std::string> vars) {
    return [vars](const char* name) -> std::optional<std::string> {
        const auto it = vars.find(name);
        return it == vars.end() ? std::nullopt : std::optional<std::string>(it->second);
    };
}

TEST(Config, TomlFileEnvAndFlagLayers) {
    ta_test::TempDir dir;
    const std::string path = dir / "cfg.toml";
    ta_test::spit(path, "host = \"0.0.0.0\"\nport = 9000\ndata_dir = \"" + (dir / "file_data") +
                            "\"\ntile_buffer = 32\ncors_allow = [\"http://a\", \"http://b\"]\n");
    const auto none = fake_env({});
    auto c = ta::resolve_config(path, {}, none);
    EXPECT_EQ(c.host, "0.0.0.0");
    EXPECT_EQ(c.port, 9000);
    EXPECT_EQ(c.data_dir, dir / "file_data");
    EXPECT_EQ(c.tile.buffer, 32u);
    EXPECT_EQ(c.tile.extent, 4096u);
    EXPECT_EQ(c.cors_allow, (std::vector<std::string>{"http://a", "http://b"}));

    const auto env = fake_env({{"TA_PORT", "9100"}, {"TA_DATA_DIR", dir / "env_data"}});
    c = ta::resolve_config(path, {}, env);
    EXPECT_EQ(c.port, 9100);
    EXPECT_EQ(c.data_dir, dir / "env_data");

    ta::ConfigFlags flags;
    flags.port = 9200;
    c = ta::resolve_config(path, flags, env);
    EXPECT_EQ(c.port, 9200);
    EXPECT_EQ(c.data_dir, dir / "env_data");
    EXPECT_TRUE(std::filesystem::is_directory(dir / "env_data"));
}

TEST(Config, JsonFileAndDefaults) {
    ta_test::TempDir dir;
    const std::string path = dir / "cfg.json";
    ta_test::spit(path, R"({"port": 8181, "data_dir": ")" + (dir / "d") + R"(", "max_upload_bytes": 1024})");
    const auto c = ta::resolve_config(path, {}, fake_env({}));
    EXPECT_EQ(c.port, 8181);
    EXPECT_EQ(c.max_upload_bytes, 1024u);
    EXPECT_EQ(c.default_transform, "affine");
    ta::ConfigFlags flags;
    flags.data_dir = dir / "x";
    const auto d = ta::resolve_config(std::nullopt, flags, fake_env({}));
    EXPECT_EQ(d.port, 8080);
    EXPECT_EQ(d.max_upload_bytes, std::size_t{32} << 20);
}

TEST(Config, Errors) {
    ta_test::TempDir dir;
    ta::ConfigFlags flags;
    flags.data_dir = dir / "d";
    flags.port = 0;
    EXPECT_THROW(ta::resolve_config(std::nullopt, flags, fake_env({})), ta::ValidationError);
    flags.port = 70000;
    EXPECT_THROW(ta::resolve_config(std::nullopt, flags, fake_env({})), ta::ValidationError);
    flags.port.reset();
    EXPECT_THROW(ta::resolve_config(std::nullopt, flags, fake_env({{"TA_PORT", "80a"}})), ta::ValidationError);

    const std::string bad = dir / "bad.toml";
    ta_test::spit(bad, "port = 1\nhost = \n");
    try {
        ta::load_config_document(bad);
        FAIL() << "expected a parse error";
    } catch (const ta::ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.toml:2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(ta::load_config_document(dir / "missing.toml"), ta::ValidationError);
    const std::string typed = dir / "typed.json";
    ta_test::spit(typed, R"({"port": "eighty"})");
    EXPECT_THROW(ta::resolve_config(typed, {}, fake_env({})), ta::ValidationError);
}

TEST(Config, ReconstructParamsFromToml) {
    ta_test::TempDir dir;
    const std::string path = dir / "params.toml";
    ta_test::spit(path, "floor_height = 3.5\nstair_rise = 0.2\n");
    const auto p = ta::load_reconstruct_params(path);
    EXPECT_EQ(p.floor_height, 3.5);
    EXPECT_EQ(p.stair_rise, 0.2);
    EXPECT_EQ(p.default_floors, 2);
    ta_test::spit(path, "floor_height = -1\n");
    EXPECT_THROW(ta::load_reconstruct_params(path), ta::ValidationError);
}

} // namespace
