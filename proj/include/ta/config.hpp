#ifndef TA_CONFIG_HPP
#define TA_CONFIG_HPP

// Service configuration: file (TOML or JSON), then environment, then flags.

#include "ta/error.hpp"
#include "ta/reconstruct.hpp"
#include "ta/tiling.hpp"

#include <json.hpp>
#include <toml.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ta {

/// Reads a TOML or JSON file (by extension; anything but .toml is JSON) into JSON.
inline nlohmann::json load_config_document(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path.string() + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (path.extension() == ".toml") {
        try {
            const toml::table t = toml::parse(buf.str(), path.string());
            std::ostringstream js;
            js << toml::json_formatter{t};
            return nlohmann::json::parse(js.str());
        } catch (const toml::parse_error& e) {
            std::ostringstream msg;
            msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
            throw ValidationError(msg.str());
        }
    }
    try {
        return nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": malformed JSON: " + e.what());
    }
}

inline ReconstructParams load_reconstruct_params(const std::filesystem::path& path) {
    try {
        return reconstruct_params_from_json(load_config_document(path));
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        if (what.starts_with(path.string())) throw;
        throw ValidationError(path.string() + ": " + what);
    }
}

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "data";
    TileConfig tile;
    std::string default_transform = "affine";
    std::vector<std::string> cors_allow;
    std::size_t max_upload_bytes = std::size_t{32} << 20;

    /// Checks ranges and that the data directory exists (created if missing) and is writable.
    void validate() const {
        if (port < 1 || port > 65535) throw ValidationError("port must be in [1, 65535], got " + std::to_string(port));
        tile.validate();
        if (max_upload_bytes == 0) throw ValidationError("max_upload_bytes must be positive");
        std::error_code ec;
        std::filesystem::create_directories(data_dir, ec);
        const auto probe = data_dir / ".write_probe";
        std::ofstream out(probe);
        if (!out) throw ValidationError("data directory " + data_dir.string() + " is not writable");
        out.close();
        std::filesystem::remove(probe, ec);
    }
};

inline ServiceConfig config_from_json(const nlohmann::json& j, ServiceConfig c = {}) {
    if (!j.is_object()) throw ValidationError("configuration must be a table/object");
    try {
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
        c.tile.extent = j.value("tile_extent", c.tile.extent);
        c.tile.buffer = j.value("tile_buffer", c.tile.buffer);
        c.default_transform = j.value("default_transform", c.default_transform);
        c.cors_allow = j.value("cors_allow", c.cors_allow);
        c.max_upload_bytes = j.value("max_upload_bytes", c.max_upload_bytes);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("configuration: ") + e.what());
    }
    return c;
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::optional<std::string>(v) : std::nullopt;
}

inline ServiceConfig apply_env(ServiceConfig c, const EnvLookup& env = process_env) {
    if (const auto p = env("TA_PORT")) {
        try {
            std::size_t used = 0;
            c.port = std::stoi(*p, &used);
            if (used != p->size()) throw std::invalid_argument("trailing text");
        } catch (const std::exception&) {
            throw ValidationError("TA_PORT '" + *p + "' is not an integer");
        }
    }
    if (const auto d = env("TA_DATA_DIR")) c.data_dir = *d;
    return c;
}

/// Command-line overrides; unset members leave the lower layers alone.
struct ConfigFlags {
    std::optional<std::string> host;
    std::optional<int> port;
    std::optional<std::string> data_dir;
};

inline ServiceConfig resolve_config(const std::optional<std::filesystem::path>& file, const ConfigFlags& flags,
                                    const EnvLookup& env = process_env) {
    ServiceConfig c;
    if (file) c = config_from_json(load_config_document(*file));
    c = apply_env(std::move(c), env);
    if (flags.host) c.host = *flags.host;
    if (flags.port) c.port = *flags.port;
    if (flags.data_dir) c.data_dir = *flags.data_dir;
    c.validate();
    return c;
}

} // namespace ta

#endif
