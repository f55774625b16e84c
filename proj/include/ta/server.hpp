#ifndef TA_SERVER_HPP
#define TA_SERVER_HPP

// HTTP service: vector tiles, feature ingestion and query, the model repository
// and a control-point fit endpoint for the browser client.

#include "ta/config.hpp"
#include "ta/georectify.hpp"
#include "ta/gltf.hpp"
#include "ta/store.hpp"
#include "ta/tiling.hpp"

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ta {

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

struct ModelRecord {
    std::uint64_t id = 0;
    std::string sha256;
    std::size_t size = 0;
    std::string title;
    std::optional<std::uint64_t> feature_id;
    std::optional<TimeSpan> span;

    nlohmann::json to_json() const {
        nlohmann::json j{{"model_id", id}, {"sha256", sha256}, {"size", size}, {"title", title}};
        j["feature_id"] = feature_id ? nlohmann::json(*feature_id) : nlohmann::json(nullptr);
        if (span) {
            j["span"] = {{"start_date", span->start.iso()},
                         {"end_date", span->end ? nlohmann::json(span->end->iso()) : nlohmann::json(nullptr)}};
        }
        return j;
    }

    static ModelRecord from_json(const nlohmann::json& j) {
        ModelRecord r;
        r.id = j.at("model_id").get<std::uint64_t>();
        r.sha256 = j.at("sha256").get<std::string>();
        r.size = j.at("size").get<std::size_t>();
        r.title = j.value("title", "");
        if (j.contains("feature_id") && !j["feature_id"].is_null()) r.feature_id = j["feature_id"].get<std::uint64_t>();
        if (j.contains("span")) {
            const auto& s = j["span"];
            std::optional<Date> end;
            if (s.contains("end_date") && !s["end_date"].is_null()) end = Date::parse(s["end_date"].get<std::string>());
            r.span = TimeSpan::make(Date::parse(s.at("start_date").get<std::string>()), end);
        }
        return r;
    }
};

/// Content-addressed GLB blobs under `dir` with an `index.json` sidecar.
class ModelRepository {
public:
    explicit ModelRepository(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        const auto index = dir_ / "index.json";
        if (std::filesystem::exists(index)) {
            std::ifstream in(index);
            try {
                const auto doc = nlohmann::json::parse(in);
                for (const auto& j : doc.at("models")) records_.push_back(ModelRecord::from_json(j));
            } catch (const std::exception& e) {
                throw ValidationError(index.string() + ": " + e.what());
            }
        }
    }

    /// Stores the blob (once per content hash) and assigns a fresh id.
    ModelRecord add(const std::string& blob, ModelRecord meta) {
        std::lock_guard lock(mutex_);
        meta.sha256 = sha256_hex(blob);
        meta.size = blob.size();
        meta.id = records_.empty() ? 1 : records_.back().id + 1;
        const auto path = blob_path(meta.sha256);
        if (!std::filesystem::exists(path)) write_atomic(path, blob);
        records_.push_back(meta);
        save();
        return meta;
    }

    std::optional<ModelRecord> find(std::uint64_t id) const {
        std::lock_guard lock(mutex_);
        for (const auto& r : records_) {
            if (r.id == id) return r;
        }
        return std::nullopt;
    }

    std::string read_blob(const ModelRecord& r) const {
        std::ifstream in(blob_path(r.sha256), std::ios::binary);
        if (!in) throw NotFoundError("blob for model " + std::to_string(r.id) + " is missing");
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    std::vector<ModelRecord> list(std::optional<std::uint64_t> feature_id = std::nullopt) const {
        std::lock_guard lock(mutex_);
        std::vector<ModelRecord> out;
        for (const auto& r : records_) {
            if (!feature_id || r.feature_id == feature_id) out.push_back(r);
        }
        return out;
    }

    ModelRecord set_feature(std::uint64_t id, std::uint64_t feature_id) {
        std::lock_guard lock(mutex_);
        for (auto& r : records_) {
            if (r.id == id) {
                r.feature_id = feature_id;
                save();
                return r;
            }
        }
        throw NotFoundError("model " + std::to_string(id) + " not found");
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return records_.size();
    }

private:
    std::filesystem::path blob_path(const std::string& sha) const { return dir_ / (sha + ".glb"); }

    static void write_atomic(const std::filesystem::path& path, const std::string& data) {
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out.write(data.data(), static_cast<std::streamsize>(data.size()));
            out.flush();
            if (!out) throw Error("cannot write " + tmp);
        }
        if (FILE* f = std::fopen(tmp.c_str(), "rb")) {
            ::fsync(fileno(f));
            std::fclose(f);
        }
        std::filesystem::rename(tmp, path);
    }

    void save() const {
        nlohmann::json j{{"models", nlohmann::json::array()}};
        for (const auto& r : records_) j["models"].push_back(r.to_json());
        write_atomic(dir_ / "index.json", j.dump(2) + "\n");
    }

    std::filesystem::path dir_;
    std::vector<ModelRecord> records_;
    mutable std::mutex mutex_;
};

namespace detail {

inline void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void error_reply(httplib::Response& res, int status, const std::string& message) {
    json_reply(res, status, {{"error", message}});
}

inline std::optional<std::uint64_t> parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline LonLatBox parse_bbox(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t used = 0;
        double x = 0;
        try {
            x = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != cell.size()) throw ValidationError("bbox component '" + cell + "' is not a number");
        v.push_back(x);
    }
    if (v.size() != 4) throw ValidationError("bbox must be min_lon,min_lat,max_lon,max_lat");
    return {v[0], v[1], v[2], v[3]};
}

inline std::optional<Date> time_param(const httplib::Request& req) {
    if (!req.has_param("time")) return std::nullopt;
    return Date::parse(req.get_param_value("time"));
}

} // namespace detail

/// Owns the store, the model repository and the HTTP routes.
class Server {
public:
    explicit Server(ServiceConfig cfg)
        : cfg_(std::move(cfg)), store_(cfg_.data_dir / "features.jsonl"), models_(cfg_.data_dir / "models") {
        http_.set_payload_max_length(cfg_.max_upload_bytes + (std::size_t{1} << 20));
        routes();
    }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    TemporalStore& store() { return store_; }
    ModelRepository& models() { return models_; }
    const ServiceConfig& config() const { return cfg_; }
    httplib::Server& http() { return http_; }

    /// Binds the configured address; port 0 in `port_override` picks a free port. Returns the port.
    int bind(std::optional<int> port_override = std::nullopt) {
        const int want = port_override.value_or(cfg_.port);
        const int port = want == 0 ? http_.bind_to_any_port(cfg_.host) : (http_.bind_to_port(cfg_.host, want) ? want : -1);
        if (port < 0) throw Error("cannot listen on " + cfg_.host + ":" + std::to_string(want));
        return port;
    }

    /// Serves until stop(); call bind() first.
    void run() { http_.listen_after_bind(); }
    void stop() { http_.stop(); }
    void wait_until_ready() { http_.wait_until_ready(); }

    /// The encoded tile (after the optional time filter) and its ETag.
    std::pair<std::string, std::string> tile(const TileAddress& t, std::optional<Date> at) {
        const auto snap = store_.snapshot();
        const std::string key = std::to_string(snap->version()) + "/" + std::to_string(t.z) + "/" + std::to_string(t.x) +
                                "/" + std::to_string(t.y) + (at ? "@" + at->iso() : "");
        const std::string etag = "\"" + key + "\"";
        {
            std::lock_guard lock(cache_mutex_);
            if (cache_version_ != snap->version()) {
                cache_.clear();
                cache_order_.clear();
                cache_version_ = snap->version();
            }
            if (const auto it = cache_.find(key); it != cache_.end()) return {it->second, etag};
        }
        std::string bytes = build_tile(snap->query(tile_query_box(t, cfg_.tile), at), t, cfg_.tile);
        std::lock_guard lock(cache_mutex_);
        if (cache_version_ == snap->version() && !cache_.count(key)) {
            cache_.emplace(key, bytes);
            cache_order_.push_back(key);
            if (cache_order_.size() > cache_capacity) {
                cache_.erase(cache_order_.front());
                cache_order_.pop_front();
            }
        }
        return {std::move(bytes), etag};
    }

    static constexpr std::size_t cache_capacity = 4096;

private:
    void cors(const httplib::Request& req, httplib::Response& res) const {
        const auto origin = req.get_header_value("Origin");
        if (origin.empty()) return;
        for (const auto& allowed : cfg_.cors_allow) {
            if (allowed == "*" || allowed == origin) {
                res.set_header("Access-Control-Allow-Origin", allowed == "*" ? "*" : origin);
                res.set_header("Vary", "Origin");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
                res.set_header("Access-Control-Allow-Headers", "Content-Type, If-None-Match");
                res.set_header("Access-Control-Expose-Headers", "ETag");
                return;
            }
        }
    }

    void routes() {
        using namespace httplib;
        http_.set_post_routing_handler([this](const Request& req, Response& res) { cors(req, res); });
        http_.set_exception_handler([](const Request&, Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                detail::error_reply(res, 500, e.what());
            } catch (...) {
                detail::error_reply(res, 500, "unknown error");
            }
        });
        http_.Options(R"(/.*)", [](const Request&, Response& res) { res.status = 204; });

        http_.Get("/healthz", [this](const Request&, Response& res) {
            const auto snap = store_.snapshot();
            detail::json_reply(res, 200,
                               {{"status", "ok"},
                                {"snapshot_version", snap->version()},
                                {"feature_count", snap->size()},
                                {"model_count", models_.size()}});
        });

        http_.Get(R"(/tiles/([^/]+)/([^/]+)/([^/]+)\.mvt)", [this](const Request& req, Response& res) {
            const auto z = detail::parse_u64(req.matches[1].str());
            const auto x = detail::parse_u64(req.matches[2].str());
            const auto y = detail::parse_u64(req.matches[3].str());
            if (!z || !x || !y || *z > 30) return detail::error_reply(res, 400, "malformed tile address");
            const std::uint64_t n = std::uint64_t{1} << *z;
            if (*x >= n || *y >= n) return detail::error_reply(res, 404, "tile outside the zoom level");
            std::optional<Date> at;
            try {
                at = detail::time_param(req);
            } catch (const ValidationError& e) {
                return detail::error_reply(res, 400, e.what());
            }
            const TileAddress t{static_cast<std::uint32_t>(*z), static_cast<std::uint32_t>(*x), static_cast<std::uint32_t>(*y)};
            auto [bytes, etag] = tile(t, at);
            res.set_header("ETag", etag);
            if (req.get_header_value("If-None-Match") == etag) {
                res.status = 304;
                return;
            }
            res.status = 200;
            res.set_content(std::move(bytes), "application/vnd.mapbox-vector-tile");
        });

        http_.Post("/features", [this](const Request& req, Response& res) {
            nlohmann::json body;
            try {
                body = nlohmann::json::parse(req.body);
            } catch (const nlohmann::json::exception& e) {
                return detail::error_reply(res, 400, std::string("malformed JSON: ") + e.what());
            }
            try {
                const auto ids = store_.ingest_geojson(body);
                detail::json_reply(res, 200, {{"ids", ids}, {"snapshot_version", store_.snapshot()->version()}});
            } catch (const BatchValidationError& e) {
                nlohmann::json errs = nlohmann::json::array();
                for (const auto& d : e.errors()) errs.push_back({{"index", d.index}, {"message", d.message}});
                detail::json_reply(res, 422, {{"error", "validation failed"}, {"errors", errs}});
            } catch (const ValidationError& e) {
                detail::json_reply(res, 422, {{"error", e.what()}, {"errors", {{{"index", 0}, {"message", e.what()}}}}});
            }
        });

        http_.Get("/features", [this](const Request& req, Response& res) {
            try {
                const LonLatBox box = req.has_param("bbox") ? detail::parse_bbox(req.get_param_value("bbox"))
                                                            : LonLatBox{-180, -90, 180, 90};
                detail::json_reply(res, 200, feature_collection(store_.query(box, detail::time_param(req))));
            } catch (const ValidationError& e) {
                detail::error_reply(res, 400, e.what());
            }
        });

        http_.Post("/models", [this](const Request& req, Response& res) { upload_model(req, res); });

        http_.Get("/models", [this](const Request& req, Response& res) {
            std::optional<std::uint64_t> fid;
            if (req.has_param("feature_id")) {
                fid = detail::parse_u64(req.get_param_value("feature_id"));
                if (!fid) return detail::error_reply(res, 400, "feature_id must be an unsigned integer");
            }
            nlohmann::json list = nlohmann::json::array();
            for (const auto& r : models_.list(fid)) list.push_back(r.to_json());
            detail::json_reply(res, 200, {{"models", list}});
        });

        http_.Get(R"(/models/([^/]+))", [this](const Request& req, Response& res) {
            const auto id = detail::parse_u64(req.matches[1].str());
            const auto rec = id ? models_.find(*id) : std::nullopt;
            if (!rec) return detail::error_reply(res, 404, "model " + req.matches[1].str() + " not found");
            const std::string etag = "\"" + rec->sha256 + "\"";
            res.set_header("ETag", etag);
            if (req.get_header_value("If-None-Match") == etag) {
                res.status = 304;
                return;
            }
            res.status = 200;
            res.set_content(models_.read_blob(*rec), "model/gltf-binary");
        });

        http_.Post(R"(/models/([^/]+)/link)", [this](const Request& req, Response& res) {
            const auto id = detail::parse_u64(req.matches[1].str());
            if (!id || !models_.find(*id)) return detail::error_reply(res, 404, "model " + req.matches[1].str() + " not found");
            std::optional<std::uint64_t> fid;
            try {
                const auto body = nlohmann::json::parse(req.body);
                fid = body.at("feature_id").get<std::uint64_t>();
            } catch (const nlohmann::json::exception&) {
                return detail::error_reply(res, 400, "body must be {\"feature_id\": <id>}");
            }
            try {
                const Feature f = store_.link_model(*fid, std::to_string(*id));
                const ModelRecord r = models_.set_feature(*id, *fid);
                detail::json_reply(res, 200, {{"model", r.to_json()}, {"feature", feature_to_geojson(f)}});
            } catch (const NotFoundError& e) {
                detail::error_reply(res, 404, e.what());
            } catch (const KindError& e) {
                detail::error_reply(res, 422, e.what());
            }
        });

        http_.Post("/warp/fit", [](const Request& req, Response& res) {
            try {
                const auto body = nlohmann::json::parse(req.body);
                std::vector<ControlPointPair> pairs;
                for (const auto& p : body.at("pairs")) {
                    pairs.push_back({{p.at("px").get<double>(), p.at("py").get<double>()},
                                     {p.at("lon").get<double>(), p.at("lat").get<double>()}});
                }
                const auto spec = TransformSpec::parse(body.value("kind", std::string("affine")));
                const Transform2D t = fit_transform(pairs, spec);
                const ResidualReport rep = residual_report(t, pairs);
                nlohmann::json residuals = nlohmann::json::array();
                for (const auto& [i, d] : rep.per_pair) residuals.push_back({{"index", i}, {"residual_m", d}});
                detail::json_reply(res, 200, {{"transform", to_json(t)}, {"residuals", residuals}, {"rms", rep.rms}});
            } catch (const nlohmann::json::exception& e) {
                detail::error_reply(res, 400, std::string("malformed request: ") + e.what());
            } catch (const Error& e) {
                detail::error_reply(res, 422, e.what());
            }
        });
    }

    /// Raw GLB body with query metadata, or multipart with a `model` file and optional `metadata` JSON.
    void upload_model(const httplib::Request& req, httplib::Response& res) {
        std::string blob;
        nlohmann::json meta = nlohmann::json::object();
        try {
            if (req.is_multipart_form_data()) {
                if (!req.has_file("model")) return detail::error_reply(res, 400, "multipart upload needs a 'model' part");
                blob = req.get_file_value("model").content;
                if (req.has_file("metadata")) meta = nlohmann::json::parse(req.get_file_value("metadata").content);
            } else {
                blob = req.body;
                for (const char* k : {"title", "feature_id", "start_date", "end_date"}) {
                    if (req.has_param(k)) meta[k] = req.get_param_value(k);
                }
            }
        } catch (const nlohmann::json::exception& e) {
            return detail::error_reply(res, 400, std::string("metadata is not valid JSON: ") + e.what());
        }
        if (blob.size() > cfg_.max_upload_bytes) return detail::error_reply(res, 413, "model exceeds the upload cap");
        try {
            (void)from_glb(blob);
        } catch (const Error& e) {
            return detail::error_reply(res, 415, std::string("upload is not a valid GLB: ") + e.what());
        }
        ModelRecord rec;
        try {
            if (meta.contains("title")) rec.title = meta["title"].get<std::string>();
            if (meta.contains("feature_id")) {
                const auto& f = meta["feature_id"];
                const auto v = f.is_string() ? detail::parse_u64(f.get<std::string>())
                                             : std::optional<std::uint64_t>(f.get<std::uint64_t>());
                if (!v) throw ValidationError("feature_id must be an unsigned integer");
                rec.feature_id = v;
            }
            if (meta.contains("start_date")) {
                std::optional<Date> end;
                if (meta.contains("end_date") && !meta["end_date"].is_null()) end = Date::parse(meta["end_date"].get<std::string>());
                rec.span = TimeSpan::make(Date::parse(meta["start_date"].get<std::string>()), end);
            }
        } catch (const nlohmann::json::exception& e) {
            return detail::error_reply(res, 422, std::string("bad metadata: ") + e.what());
        } catch (const ValidationError& e) {
            return detail::error_reply(res, 422, e.what());
        }
        if (rec.feature_id) {
            const Feature* f = store_.snapshot()->find(*rec.feature_id);
            if (!f) return detail::error_reply(res, 404, "feature " + std::to_string(*rec.feature_id) + " not found");
            if (f->kind != FeatureKind::building) return detail::error_reply(res, 422, "models attach to buildings only");
        }
        const ModelRecord stored = models_.add(blob, rec);
        if (stored.feature_id) store_.link_model(*stored.feature_id, std::to_string(stored.id));
        detail::json_reply(res, 200, stored.to_json());
    }

    ServiceConfig cfg_;
    TemporalStore store_;
    ModelRepository models_;
    httplib::Server http_;
    std::mutex cache_mutex_;
    std::uint64_t cache_version_ = 0;
    std::unordered_map<std::string, std::string> cache_;
    std::list<std::string> cache_order_;
};

} // namespace ta

#endif
