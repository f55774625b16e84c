// ta: command-line entry points for every pipeline stage and the HTTP service.
// Exit codes: 0 success, 1 validation or processing error, 2 usage error.

#include "ta/config.hpp"
#include "ta/demo.hpp"
#include "ta/facade.hpp"
#include "ta/georectify.hpp"
#include "ta/gltf.hpp"
#include "ta/raster.hpp"
#include "ta/reconstruct.hpp"
#include "ta/server.hpp"
#include "ta/store.hpp"
#include "ta/tiling.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ta::ValidationError(path + ": cannot open file");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw ta::Error(path.string() + ": cannot write file");
}

/// Writes to stdout for "-", else to the file.
void emit(const std::string& path, const std::string& data) {
    if (path == "-") {
        std::cout << data;
    } else {
        write_file(path, data);
    }
}

json read_json(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ta::ValidationError(path + ": malformed JSON: " + e.what());
    }
}

/// Prefixes validation messages with the file they came from.
template <class F>
auto with_source(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ta::BatchValidationError&) {
        std::cerr << path << ":\n";
        throw;
    } catch (const ta::ValidationError& e) {
        throw ta::ValidationError(path + ": " + e.what());
    }
}

std::vector<ta::ControlPointPair> read_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ta::ValidationError(path + ": cannot open file");
    return ta::read_control_points(in, path);
}

std::pair<std::uint32_t, std::uint32_t> parse_zoom(const std::string& s) {
    auto num = [&](const std::string& t) {
        std::uint32_t v = 0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size() || t.empty() || v > 24) {
            throw CLI::ValidationError("--zoom", "expected Z or Z1..Z2 with zooms in 0..24, got '" + s + "'");
        }
        return v;
    };
    const auto dots = s.find("..");
    if (dots == std::string::npos) {
        const auto z = num(s);
        return {z, z};
    }
    const auto a = num(s.substr(0, dots)), b = num(s.substr(dots + 2));
    if (a > b) throw CLI::ValidationError("--zoom", "range start exceeds its end in '" + s + "'");
    return {a, b};
}

std::vector<ta::Feature> load_features(const std::string& path) {
    auto features = with_source(path, [&] { return ta::features_from_geojson(read_json(path)); });
    for (std::size_t i = 0; i < features.size(); ++i) {
        with_source(path, [&] {
            ta::validate_geometry(features[i].geometry);
            return 0;
        });
        features[i].id = i + 1;
    }
    return features;
}

json value_json(const ta::mvt::Value& v) {
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, ta::mvt::SInt>) {
                return x.value;
            } else {
                return x;
            }
        },
        v);
}

json tile_json(const std::vector<ta::mvt::Layer>& layers) {
    json out = json::array();
    for (const auto& l : layers) {
        json feats = json::array();
        for (const auto& f : l.features) {
            json props = json::object();
            for (std::size_t i = 0; i + 1 < f.tags.size(); i += 2) props[l.keys.at(f.tags[i])] = value_json(l.values.at(f.tags[i + 1]));
            json paths = json::array();
            for (const auto& p : f.paths) {
                json pts = json::array();
                for (const auto& q : p) pts.push_back({q.x, q.y});
                paths.push_back(pts);
            }
            static const char* types[] = {"Unknown", "Point", "LineString", "Polygon"};
            feats.push_back({{"id", f.id ? json(*f.id) : json(nullptr)},
                             {"type", types[static_cast<int>(f.type)]},
                             {"properties", props},
                             {"paths", paths}});
        }
        out.push_back({{"name", l.name}, {"extent", l.extent}, {"features", feats}});
    }
    return {{"layers", out}};
}

struct TileBuildStats {
    std::size_t tiles = 0;
};

/// Writes {z}/{x}/{y}.mvt for every tile overlapping some feature's bounding box.
TileBuildStats build_tiles(const std::vector<ta::Feature>& features, std::uint32_t z0, std::uint32_t z1,
                           const fs::path& out, std::optional<ta::Date> at, const ta::TileConfig& cfg) {
    TileBuildStats stats;
    std::vector<const ta::Feature*> live;
    for (const auto& f : features) {
        if (!at || f.span.contains(*at)) live.push_back(&f);
    }
    for (std::uint32_t z = z0; z <= z1; ++z) {
        std::set<std::pair<std::uint32_t, std::uint32_t>> cells;
        for (const auto* f : live) {
            for (const auto& t : ta::tiles_covering(ta::bbox(f->geometry), z)) cells.insert({t.x, t.y});
        }
        for (const auto& [x, y] : cells) {
            const ta::TileAddress t{z, x, y};
            const ta::LonLatBox q = ta::tile_query_box(t, cfg);
            std::vector<ta::Feature> in;
            for (const auto* f : live) {
                if (ta::bbox(f->geometry).intersects(q)) in.push_back(*f);
            }
            write_file(out / std::to_string(z) / std::to_string(x) / (std::to_string(y) + ".mvt"), ta::build_tile(in, t, cfg));
            ++stats.tiles;
        }
    }
    return stats;
}

std::string default_data_dir() { return ta::process_env("TA_DATA_DIR").value_or("data"); }

struct ReconstructArgs {
    std::string footprint;
    std::vector<std::string> annotations;
    std::string params;
    std::optional<double> height;
    std::string out;
    std::string obj;
};

int run_reconstruct(const ReconstructArgs& a) {
    const ta::ReconstructParams params = a.params.empty() ? ta::ReconstructParams{} : ta::load_reconstruct_params(a.params);
    const ta::Footprint fp = with_source(a.footprint, [&] { return ta::footprint_from_geojson(read_json(a.footprint)); });
    std::vector<ta::facade::Annotation> anns;
    for (const auto& p : a.annotations) anns.push_back(with_source(p, [&] { return ta::facade::annotation_from_json(read_json(p)); }));
    const auto result = with_source(a.footprint, [&] { return ta::reconstruct_building(fp, anns, params, a.height); });
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    emit(a.out, ta::to_glb(result.mesh));
    if (!a.obj.empty()) emit(a.obj, ta::to_obj(result.mesh));
    std::cerr << "wrote " << a.out << ": " << result.mesh.tags.size() << " components, " << result.mesh.triangles.size()
              << " triangles\n";
    return 0;
}

int run_serve(const std::optional<std::string>& config, const ta::ConfigFlags& flags) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    const ta::ServiceConfig cfg = ta::resolve_config(config ? std::optional<fs::path>(*config) : std::nullopt, flags);
    ta::Server server(cfg);
    const int port = server.bind();
    std::cerr << "listening on http://" << cfg.host << ":" << port << " (data " << cfg.data_dir.string() << ")\n";
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        std::cerr << "stopping\n";
        server.stop();
    });
    server.run();
    // Wake the waiter if the server stopped on its own.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

int run_demo(const fs::path& out, bool inputs_only) {
    const json fc = ta::demo::feature_collection();
    write_file(out / "features.geojson", fc.dump(2) + "\n");
    for (const auto& photo : ta::demo::facade_photos()) {
        write_file(out / "annotations" / (photo.building + ".json"), photo.annotation.dump(2) + "\n");
        write_file(out / "footprints" / (photo.building + ".json"), fc["features"][photo.feature_id - 1].dump(2) + "\n");
    }
    std::cerr << "wrote demo inputs to " << out.string() << "\n";
    if (inputs_only) return 0;

    fs::remove_all(out / "data");
    ta::TemporalStore store(out / "data" / "features.jsonl");
    const auto ids = store.ingest_geojson(fc);
    std::cerr << "ingested " << ids.size() << " features\n";
    const auto stats = build_tiles(store.snapshot()->features(), 16, 18, out / "tiles", std::nullopt, {});
    std::cerr << "built " << stats.tiles << " tiles\n";
    for (const auto& photo : ta::demo::facade_photos()) {
        ReconstructArgs a;
        a.footprint = (out / "footprints" / (photo.building + ".json")).string();
        a.annotations = {(out / "annotations" / (photo.building + ".json")).string()};
        a.out = (out / "models" / (photo.building + ".glb")).string();
        run_reconstruct(a);
    }
    const auto conflicts = ta::check_overlaps(*store.snapshot());
    std::cerr << conflicts.size() << " overlap conflicts\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Historical map georectification, vector tiles, temporal feature store and 3-D reconstruction."};
    app.require_subcommand(1);
    std::function<int()> action;

    // warp
    auto* warp = app.add_subcommand("warp", "Control-point georectification of scanned maps");
    warp->require_subcommand(1);
    std::string pairs_path, kind = "affine", transform_path, out_path = "-", image_path, bounds_str, size_str,
                resampling = "bilinear";

    auto* fit = warp->add_subcommand("fit", "Fit a transform to px,py,lon,lat control points");
    fit->add_option("--pairs", pairs_path, "Control-point CSV")->required();
    fit->add_option("--kind", kind, "affine, poly1, poly2 or poly3")->capture_default_str();
    fit->add_option("--out", out_path, "Transform JSON (- for stdout)")->capture_default_str();
    fit->callback([&] {
        action = [&] {
            const auto pairs = read_pairs(pairs_path);
            const auto spec = ta::TransformSpec::parse(kind);
            const auto fwd = ta::fit_transform(pairs, spec);
            json j = ta::to_json(fwd);
            j["inverse"] = ta::to_json(ta::fit_inverse(pairs, spec));
            const auto rep = ta::residual_report(fwd, pairs);
            j["rms_m"] = rep.rms;
            emit(out_path, j.dump(2) + "\n");
            std::cerr << "fitted " << kind << " to " << pairs.size() << " pairs, RMS " << rep.rms << " m\n";
            return 0;
        };
    });

    auto* apply = warp->add_subcommand("apply", "Resample a scan into Web Mercator");
    apply->add_option("--image", image_path, "Source PNG")->required();
    apply->add_option("--transform", transform_path, "Transform JSON from `warp fit`")->required();
    apply->add_option("--out", out_path, "Output PNG")->required();
    apply->add_option("--bounds", bounds_str, "Mercator bounds min_x,min_y,max_x,max_y (default: warped scan extent)");
    apply->add_option("--size", size_str, "Output size WxH (default: source size)");
    apply->add_option("--resampling", resampling, "nearest or bilinear")->capture_default_str();
    apply->callback([&] {
        action = [&] {
            const json tj = read_json(transform_path);
            const auto fwd = with_source(transform_path, [&] { return ta::transform_from_json(tj); });
            if (!tj.contains("inverse")) throw ta::ValidationError(transform_path + ": transform has no 'inverse' member");
            const auto inv = with_source(transform_path, [&] { return ta::transform_from_json(tj["inverse"]); });
            const auto img = ta::read_png(image_path);
            ta::OutputGrid grid{ta::warped_bounds(fwd, img.width, img.height), img.width, img.height};
            if (!bounds_str.empty()) {
                const auto b = ta::detail::parse_bbox(bounds_str);
                grid.bounds = {b.min_lon, b.min_lat, b.max_lon, b.max_lat};
            }
            if (!size_str.empty()) {
                int w = 0, h = 0;
                char x = 0;
                std::istringstream ss(size_str);
                if (!(ss >> w >> x >> h) || x != 'x' || w <= 0 || h <= 0) throw ta::ValidationError("--size must look like 800x600");
                grid.width = w;
                grid.height = h;
            }
            if (resampling != "nearest" && resampling != "bilinear") throw ta::ValidationError("--resampling must be nearest or bilinear");
            const auto r = resampling == "nearest" ? ta::Resampling::nearest : ta::Resampling::bilinear;
            ta::write_png(out_path, ta::warp_raster(img, inv, grid, r));
            std::cerr << "wrote " << out_path << " (" << grid.width << "x" << grid.height << ")\n";
            return 0;
        };
    });

    auto* report = warp->add_subcommand("report", "Per-pair residuals and RMS of a transform");
    report->add_option("--pairs", pairs_path, "Control-point CSV")->required();
    report->add_option("--transform", transform_path, "Transform JSON")->required();
    report->callback([&] {
        action = [&] {
            const auto pairs = read_pairs(pairs_path);
            const auto t = with_source(transform_path, [&] { return ta::transform_from_json(read_json(transform_path)); });
            const auto rep = ta::residual_report(t, pairs);
            std::printf("pair  residual_m\n");
            for (const auto& [i, d] : rep.per_pair) std::printf("%4zu  %.3f\n", i, d);
            std::printf("RMS %.3f\n", rep.rms);
            return 0;
        };
    });

    // tile
    auto* tile = app.add_subcommand("tile", "Vector tile generation and inspection");
    tile->require_subcommand(1);
    std::string features_path, zoom = "14", tiles_out, time_str, tile_in;
    auto* build = tile->add_subcommand("build", "Write {z}/{x}/{y}.mvt tiles covering the features");
    build->add_option("--features", features_path, "GeoJSON Feature or FeatureCollection")->required();
    build->add_option("--zoom", zoom, "Zoom level Z or range Z1..Z2")->capture_default_str();
    build->add_option("--out", tiles_out, "Output directory")->required();
    build->add_option("--time", time_str, "Only features present at this date");
    build->callback([&] {
        action = [&] {
            const auto [z0, z1] = parse_zoom(zoom);
            const auto features = load_features(features_path);
            std::optional<ta::Date> at;
            if (!time_str.empty()) at = ta::Date::parse(time_str);
            const auto stats = build_tiles(features, z0, z1, tiles_out, at, {});
            std::cerr << "wrote " << stats.tiles << " tiles for " << features.size() << " features\n";
            return 0;
        };
    });
    auto* decode = tile->add_subcommand("decode", "Print a tile as JSON");
    decode->add_option("--in", tile_in, "MVT file")->required();
    decode->add_option("--time", time_str, "Apply the client-side date filter");
    decode->callback([&] {
        action = [&] {
            auto layers = ta::mvt::decode_tile(read_file(tile_in));
            if (!time_str.empty()) layers = ta::filter_tile(std::move(layers), ta::Date::parse(time_str));
            std::cout << tile_json(layers).dump(2) << "\n";
            return 0;
        };
    });

    // store
    std::string data_dir = default_data_dir(), bbox_str;
    auto* ingest = app.add_subcommand("ingest", "Validate and append features to the store");
    ingest->add_option("--features", features_path, "GeoJSON Feature or FeatureCollection")->required();
    ingest->add_option("--data-dir", data_dir, "Store directory (env TA_DATA_DIR)")->capture_default_str();
    ingest->callback([&] {
        action = [&] {
            const json body = read_json(features_path);
            ta::TemporalStore store(fs::path(data_dir) / "features.jsonl");
            const auto ids = with_source(features_path, [&] { return store.ingest_geojson(body); });
            std::cout << json{{"ids", ids}, {"snapshot_version", store.snapshot()->version()}}.dump() << "\n";
            std::cerr << "ingested " << ids.size() << " features into " << data_dir << "\n";
            return 0;
        };
    });

    auto* query = app.add_subcommand("query", "Print stored features in a box, optionally at a date");
    query->add_option("--data-dir", data_dir, "Store directory (env TA_DATA_DIR)")->capture_default_str();
    query->add_option("--bbox", bbox_str, "min_lon,min_lat,max_lon,max_lat (default: world)");
    query->add_option("--time", time_str, "Date YYYY[-MM[-DD]]");
    query->callback([&] {
        action = [&] {
            ta::TemporalStore store(fs::path(data_dir) / "features.jsonl");
            const ta::LonLatBox box = bbox_str.empty() ? ta::LonLatBox{-180, -90, 180, 90} : ta::detail::parse_bbox(bbox_str);
            std::optional<ta::Date> at;
            if (!time_str.empty()) at = ta::Date::parse(time_str);
            std::cout << ta::feature_collection(store.query(box, at)).dump() << "\n";
            return 0;
        };
    });

    auto* overlaps = app.add_subcommand("check-overlaps", "List buildings overlapping in both space and time");
    overlaps->add_option("--data-dir", data_dir, "Store directory (env TA_DATA_DIR)")->capture_default_str();
    overlaps->callback([&] {
        action = [&] {
            ta::TemporalStore store(fs::path(data_dir) / "features.jsonl");
            json out = json::array();
            for (const auto& c : ta::check_overlaps(*store.snapshot())) {
                out.push_back({{"a", c.a},
                               {"b", c.b},
                               {"area_m2", c.area},
                               {"start_date", c.overlap.start.iso()},
                               {"end_date", c.overlap.end ? json(c.overlap.end->iso()) : json(nullptr)}});
            }
            std::cout << json{{"conflicts", out}}.dump(2) << "\n";
            return 0;
        };
    });

    // serve
    std::optional<std::string> config_path;
    ta::ConfigFlags flags;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config_path, "TOML or JSON configuration file");
    serve->add_option("--host", flags.host, "Listen address");
    serve->add_option("--port", flags.port, "Listen port (env TA_PORT)");
    serve->add_option("--data-dir", flags.data_dir, "Data directory (env TA_DATA_DIR)");
    serve->callback([&] { action = [&] { return run_serve(config_path, flags); }; });

    // reconstruct
    ReconstructArgs rec;
    auto* reconstruct = app.add_subcommand("reconstruct", "Build a GLB from a footprint and facade annotations");
    reconstruct->add_option("--footprint", rec.footprint, "GeoJSON Feature or Polygon")->required();
    reconstruct->add_option("--annotations", rec.annotations, "Facade annotation JSON (repeatable)");
    reconstruct->add_option("--params", rec.params, "Reconstruction parameters (TOML or JSON)");
    reconstruct->add_option("--height", rec.height, "Building height in meters (default from properties)");
    reconstruct->add_option("--out", rec.out, "Output GLB")->required();
    reconstruct->add_option("--obj", rec.obj, "Also write a Wavefront OBJ");
    reconstruct->callback([&] { action = [&] { return run_reconstruct(rec); }; });

    // demo
    std::string demo_out = "demo";
    bool inputs_only = false;
    auto* demo = app.add_subcommand("demo", "Generate and process the synthetic two-block dataset");
    demo->add_option("--out", demo_out, "Output directory")->capture_default_str();
    demo->add_flag("--inputs-only", inputs_only, "Only write the input files");
    demo->callback([&] { action = [&] { return run_demo(demo_out, inputs_only); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        return action();
    } catch (const ta::BatchValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ta::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
