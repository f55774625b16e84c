#include "ta/gltf.hpp"
#include "ta/raster.hpp"
#include "ta/reconstruct.hpp"

#include "../unit/test_util.hpp"

#include <httplib.h>
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <csignal>
#include <numbers>
#include <random>
#include <regex>
#include <set>
#include <thread>

namespace {

using nlohmann::json;
using ta_test::run;

std::string ta_cmd(const std::string& args) { return std::string(TA_CLI) + " " + args + " 2>&1"; }

int status_of(const std::string& args) { return run(ta_cmd(args) + " >/dev/null").status; }

json square_building(double lon, double lat, double size, const std::string& start, const std::string& end = "") {
    json props{{"kind", "building"}, {"start_date", start}};
    if (!end.empty()) props["end_date"] = end;
    return {{"type", "Feature"},
            {"geometry",
             {{"type", "Polygon"},
              {"coordinates", {{{lon, lat}, {lon + size, lat}, {lon + size, lat + size}, {lon, lat + size}, {lon, lat}}}}}},
            {"properties", props}};
}

void write_pairs(const std::string& path, const std::vector<std::array<double, 2>>& px, double dx, double dy) {
    // Targets are the pixel coordinates shifted by (dx, dy) Mercator meters.
    std::ostringstream s;
    s.precision(17);
    s << "px,py,lon,lat\n";
    const double r = 6378137.0;
    for (const auto& p : px) {
        const double mx = p[0] + dx, my = p[1] + dy;
        s << p[0] << ',' << p[1] << ',' << mx / r * 180 / std::numbers::pi << ','
          << (2 * std::atan(std::exp(my / r)) - std::numbers::pi / 2) * 180 / std::numbers::pi << '\n';
    }
    ta_test::spit(path, s.str());
}

TEST(Cli, EverySubcommandHasHelp) {
    for (const char* sub : {"", "warp", "warp fit", "warp apply", "warp report", "tile", "tile build", "tile decode", "ingest",
                            "query", "check-overlaps", "serve", "reconstruct", "demo"}) {
        const auto r = run(ta_cmd(std::string(sub) + " --help"));
        EXPECT_EQ(r.status, 0) << sub;
        EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
    }
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(status_of(""), 2);
    EXPECT_EQ(status_of("frobnicate"), 2);
    EXPECT_EQ(status_of("warp fit"), 2);
    EXPECT_EQ(status_of("tile build --features x --out y --zoom 9..3"), 2);
    EXPECT_EQ(status_of("reconstruct --footprint a.json --out b.glb --height tall"), 2);
}

TEST(Cli, WarpFitReportAndArity) {
    ta_test::TempDir dir;
    write_pairs(dir / "gcp.csv", {{0, 0}, {100, 0}, {0, 100}}, 10, 5);
    ASSERT_EQ(status_of("warp fit --pairs " + (dir / "gcp.csv") + " --out " + (dir / "t.json")), 0);
    const auto t = json::parse(ta_test::slurp(dir / "t.json"));
    EXPECT_EQ(t["kind"], "affine");
    const std::vector<double> ex{10, 1, 0}, ey{5, 0, 1};
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(t["coeffs_x"][k].get<double>(), ex[k], 1e-6);
        EXPECT_NEAR(t["coeffs_y"][k].get<double>(), ey[k], 1e-6);
    }
    const auto rep = run(ta_cmd("warp report --pairs " + (dir / "gcp.csv") + " --transform " + (dir / "t.json")));
    EXPECT_EQ(rep.status, 0);
    EXPECT_NE(rep.out.find("RMS 0.000"), std::string::npos) << rep.out;

    write_pairs(dir / "two.csv", {{0, 0}, {100, 0}}, 10, 5);
    const auto few = run(ta_cmd("warp fit --pairs " + (dir / "two.csv") + " --out " + (dir / "t2.json")));
    EXPECT_EQ(few.status, 1);
    EXPECT_NE(few.out.find("pairs"), std::string::npos) << few.out;
    EXPECT_EQ(status_of("warp fit --pairs " + (dir / "missing.csv")), 1);
    EXPECT_EQ(status_of("warp fit --pairs " + (dir / "gcp.csv") + " --kind poly7"), 1);
}

TEST(Cli, WarpApplyWritesRaster) {
    ta_test::TempDir dir;
    write_pairs(dir / "gcp.csv", {{0, 0}, {64, 0}, {0, 48}, {64, 48}}, 1000, -2000);
    ASSERT_EQ(status_of("warp fit --pairs " + (dir / "gcp.csv") + " --out " + (dir / "t.json")), 0);
    ta::RasterImage img(64, 48, 4);
    for (auto& v : img.data) v = 200;
    ta::write_png(dir / "scan.png", img);
    ASSERT_EQ(status_of("warp apply --image " + (dir / "scan.png") + " --transform " + (dir / "t.json") + " --out " +
                        (dir / "out.png") + " --size 32x24"),
              0);
    const auto out = ta::read_png(dir / "out.png");
    EXPECT_EQ(out.width, 32);
    EXPECT_EQ(out.height, 24);
    EXPECT_EQ(status_of("warp apply --image " + (dir / "nope.png") + " --transform " + (dir / "t.json") + " --out " +
                        (dir / "o.png")),
              1);
}

// Independent slippy-map formula.
std::pair<long, long> slippy(double lon, double lat, int z) {
    const double n = std::ldexp(1.0, z);
    const double r = lat * std::numbers::pi / 180;
    return {static_cast<long>(std::floor((lon + 180) / 360 * n)),
            static_cast<long>(std::floor((1 - std::log(std::tan(r) + 1 / std::cos(r)) / std::numbers::pi) / 2 * n))};
}

std::set<std::string> files_under(const std::filesystem::path& root) {
    std::set<std::string> out;
    if (!std::filesystem::exists(root)) return out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out.insert(std::filesystem::relative(e.path(), root).string());
    }
    return out;
}

TEST(Cli, TileBuildCoversExactlyTheBoundingBox) {
    ta_test::TempDir dir;
    // Straddles tile boundaries at z=14 in both axes.
    const double lon = -0.0105, lat = 51.5005, size = 0.025;
    ta_test::spit(dir / "one.geojson", square_building(lon, lat, size, "1900").dump());
    ASSERT_EQ(status_of("tile build --features " + (dir / "one.geojson") + " --zoom 14..14 --out " + (dir / "tiles")), 0);
    const auto [x0, y1] = slippy(lon, lat, 14);
    const auto [x1, y0] = slippy(lon + size, lat + size, 14);
    std::set<std::string> expect;
    for (long x = x0; x <= x1; ++x) {
        for (long y = y0; y <= y1; ++y) expect.insert("14/" + std::to_string(x) + "/" + std::to_string(y) + ".mvt");
    }
    EXPECT_GT(expect.size(), 1u);
    EXPECT_EQ(files_under(dir / "tiles"), expect);

    const std::string any = dir / ("tiles/" + *expect.begin());
    const auto dec = run(ta_cmd("tile decode --in " + any));
    ASSERT_EQ(dec.status, 0);
    const auto j = json::parse(dec.out);
    EXPECT_EQ(j["layers"][0]["name"], "buildings");
    EXPECT_EQ(j["layers"][0]["features"][0]["properties"]["start_date"], "1900-01-01");
}

TEST(Cli, TileBuildEmptyAndInvalid) {
    ta_test::TempDir dir;
    ta_test::spit(dir / "empty.geojson", R"({"type":"FeatureCollection","features":[]})");
    EXPECT_EQ(status_of("tile build --features " + (dir / "empty.geojson") + " --zoom 10..12 --out " + (dir / "t")), 0);
    EXPECT_TRUE(files_under(dir / "t").empty());
    json bad{{"type", "FeatureCollection"},
             {"features", {square_building(0, 0, 0.001, "1900"), square_building(0, 100, 0.001, "1900"),
                           square_building(0, 0, 0.001, "19000")}}};
    ta_test::spit(dir / "bad.geojson", bad.dump());
    const auto r = run(ta_cmd("tile build --features " + (dir / "bad.geojson") + " --out " + (dir / "t2")));
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("document 1"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("document 2"), std::string::npos) << r.out;
    EXPECT_TRUE(files_under(dir / "t2").empty());
}

TEST(Cli, IngestQueryAndOverlaps) {
    ta_test::TempDir dir;
    json fc{{"type", "FeatureCollection"},
            {"features", {square_building(2.0, 48.0, 0.001, "1900", "1950"), square_building(2.0005, 48.0005, 0.001, "1940"),
                          square_building(2.01, 48.0, 0.001, "1900")}}};
    ta_test::spit(dir / "fc.geojson", fc.dump());
    const std::string data = dir / "data";
    const auto r = run(ta_cmd("ingest --features " + (dir / "fc.geojson") + " --data-dir " + data));
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("\"ids\":[1,2,3]"), std::string::npos) << r.out;

    const auto q = run(std::string(TA_CLI) + " query --data-dir " + data + " --bbox 1.9,47.9,2.005,48.1 --time 1945");
    ASSERT_EQ(q.status, 0);
    EXPECT_EQ(json::parse(q.out)["features"].size(), 2u);
    const auto q2 = run(std::string(TA_CLI) + " query --data-dir " + data + " --time 1899");
    EXPECT_EQ(json::parse(q2.out)["features"].size(), 0u);

    const auto o = run(std::string(TA_CLI) + " check-overlaps --data-dir " + data);
    ASSERT_EQ(o.status, 0);
    const auto c = json::parse(o.out)["conflicts"];
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0]["a"], 1);
    EXPECT_EQ(c[0]["b"], 2);
    EXPECT_EQ(c[0]["start_date"], "1940-01-01");
    EXPECT_EQ(c[0]["end_date"], "1950-01-01");

    ta_test::spit(dir / "bad.geojson", square_building(0, 91, 0.001, "1900").dump());
    EXPECT_EQ(status_of("ingest --features " + (dir / "bad.geojson") + " --data-dir " + data), 1);
    const auto all = run(std::string(TA_CLI) + " query --data-dir " + data);
    EXPECT_EQ(json::parse(all.out)["features"].size(), 3u);
}

json annotation_2x3() {
    json boxes = json::array();
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) {
            boxes.push_back({{"label", "window"}, {"x", 100 + 200 * c}, {"y", 80 + 220 * r}, {"w", 90}, {"h", 140}});
        }
    }
    return {{"image", {{"width", 700}, {"height", 560}}}, {"boxes", boxes}};
}

TEST(Cli, ReconstructPrismAndGrid) {
    ta_test::TempDir dir;
    const json fp = square_building(13.4, 52.5, 0.0002, "1900");
    ta_test::spit(dir / "fp.json", fp.dump());
    ASSERT_EQ(status_of("reconstruct --footprint " + (dir / "fp.json") + " --out " + (dir / "prism.glb")), 0);
    const ta::Mesh prism = ta::from_glb(ta_test::slurp(dir / "prism.glb"));
    EXPECT_EQ(prism.tags.size(), 1u);
    // Shoelace in Mercator meters times the default 2 x 3 m height.
    const double r = 6378137.0;
    auto mx = [&](double lon) { return r * lon * std::numbers::pi / 180; };
    auto my = [&](double lat) { return r * std::log(std::tan(std::numbers::pi / 4 + lat * std::numbers::pi / 360)); };
    const double area = (mx(13.4002) - mx(13.4)) * (my(52.5002) - my(52.5));
    EXPECT_NEAR(ta::signed_volume(prism), area * 6.0, 1e-6 * area * 6.0);

    ta_test::spit(dir / "facade.json", annotation_2x3().dump());
    ta_test::spit(dir / "params.toml", "floor_height = 3.5\n");
    ASSERT_EQ(status_of("reconstruct --footprint " + (dir / "fp.json") + " --annotations " + (dir / "facade.json") +
                        " --params " + (dir / "params.toml") + " --out " + (dir / "a.glb") + " --obj " + (dir / "a.obj")),
              0);
    const ta::Mesh m = ta::from_glb(ta_test::slurp(dir / "a.glb"));
    EXPECT_EQ(m.tags.size(), 7u);
    EXPECT_NEAR(ta::signed_volume(ta::extrude_footprint(ta::footprint_from_geojson(fp), 7.0)),
                area * 7.0, 1e-6 * area * 7.0);
    EXPECT_TRUE(std::filesystem::exists(dir / "a.obj"));

    ASSERT_EQ(status_of("reconstruct --footprint " + (dir / "fp.json") + " --annotations " + (dir / "facade.json") +
                        " --params " + (dir / "params.toml") + " --out " + (dir / "b.glb")),
              0);
    EXPECT_EQ(ta_test::slurp(dir / "a.glb"), ta_test::slurp(dir / "b.glb"));
}

TEST(Cli, ReconstructErrorsNameTheFile) {
    ta_test::TempDir dir;
    ta_test::spit(dir / "broken.json", "{\"type\": \"Feature\", ");
    const auto r = run(ta_cmd("reconstruct --footprint " + (dir / "broken.json") + " --out " + (dir / "x.glb")));
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("broken.json"), std::string::npos) << r.out;

    ta_test::spit(dir / "line.json", R"({"type":"LineString","coordinates":[[0,0],[1,1]]})");
    EXPECT_EQ(status_of("reconstruct --footprint " + (dir / "line.json") + " --out " + (dir / "x.glb")), 1);
    ta_test::spit(dir / "bowtie.json", R"({"type":"Polygon","coordinates":[[[0,0],[0.001,0.001],[0.001,0],[0,0.001],[0,0]]]})");
    EXPECT_EQ(status_of("reconstruct --footprint " + (dir / "bowtie.json") + " --out " + (dir / "x.glb")), 1);
    ta_test::spit(dir / "fp.json", square_building(0, 0, 0.001, "1900").dump());
    ta_test::spit(dir / "ann.json", R"({"image":{"width":10}})");
    const auto a = run(ta_cmd("reconstruct --footprint " + (dir / "fp.json") + " --annotations " + (dir / "ann.json") +
                              " --out " + (dir / "x.glb")));
    EXPECT_EQ(a.status, 1);
    EXPECT_NE(a.out.find("ann.json"), std::string::npos) << a.out;
    EXPECT_FALSE(std::filesystem::exists(dir / "x.glb"));
}

TEST(Cli, ServeAnswersHealthz) {
    ta_test::TempDir dir;
    std::mt19937 rng(std::random_device{}());
    for (int attempt = 0; attempt < 5; ++attempt) {
        const int port = 20000 + static_cast<int>(rng() % 30000);
        const std::string log = dir / "serve.log";
        const auto pid = run(std::string(TA_CLI) + " serve --port " + std::to_string(port) + " --data-dir " + (dir / "data") +
                             " >" + log + " 2>&1 & echo $!");
        const std::string pid_s = pid.out.substr(0, pid.out.find('\n'));
        httplib::Client c("127.0.0.1", port);
        httplib::Result res;
        for (int i = 0; i < 100 && !res; ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
            res = c.Get("/healthz");
        }
        const bool up = static_cast<bool>(res);
        if (up) {
            EXPECT_EQ(res->status, 200);
            EXPECT_EQ(json::parse(res->body)["feature_count"], 0);
        }
        run("kill -TERM " + pid_s + "; for i in $(seq 50); do kill -0 " + pid_s + " 2>/dev/null || break; sleep 0.1; done");
        EXPECT_EQ(run("kill -0 " + pid_s + " 2>/dev/null").status, 1) << "server did not stop";
        if (up) return;
        if (ta_test::slurp(log).find("cannot listen") == std::string::npos) FAIL() << ta_test::slurp(log);
    }
    FAIL() << "no free port found";
}

TEST(Cli, ServeRejectsBadConfig) {
    ta_test::TempDir dir;
    ta_test::spit(dir / "cfg.toml", "port = 70000\n");
    const auto r = run(ta_cmd("serve --config " + (dir / "cfg.toml") + " --data-dir " + (dir / "d")));
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("port"), std::string::npos);
}

TEST(Cli, DemoIsDeterministic) {
    ta_test::TempDir dir;
    ASSERT_EQ(status_of("demo --out " + (dir / "one")), 0);
    ASSERT_EQ(status_of("demo --out " + (dir / "two")), 0);
    const auto files = files_under(dir / "one/models");
    EXPECT_EQ(files, (std::set<std::string>{"A0.glb", "A1b.glb", "B2.glb"}));
    for (const auto& f : files) {
        EXPECT_EQ(ta_test::slurp(dir / ("one/models/" + f)), ta_test::slurp(dir / ("two/models/" + f))) << f;
    }
    EXPECT_EQ(files_under(dir / "one/tiles"), files_under(dir / "two/tiles"));
}

} // namespace
