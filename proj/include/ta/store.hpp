#ifndef TA_STORE_HPP
#define TA_STORE_HPP

// Append-only feature store with immutable, grid-indexed snapshots.

#include "ta/feature.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>

namespace ta {

/// Uniform grid over Mercator meters. Features spanning more than `max_cells` cells go
/// to a separate list that every query scans.
class GridIndex {
public:
    static constexpr double cell_size = 256.0;
    static constexpr std::int64_t max_cells = 1024;

    struct CellRange {
        std::int64_t x0, y0, x1, y1;
        std::int64_t count() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
    };

    static CellRange cells(const MercatorBox& b) {
        auto c = [](double v) { return static_cast<std::int64_t>(std::floor(v / cell_size)); };
        return {c(b.min_x), c(b.min_y), c(b.max_x), c(b.max_y)};
    }

    void insert(std::uint32_t slot, const MercatorBox& b) {
        const CellRange r = cells(b);
        if (r.count() > max_cells) {
            oversized_.push_back(slot);
            return;
        }
        for (std::int64_t y = r.y0; y <= r.y1; ++y) {
            for (std::int64_t x = r.x0; x <= r.x1; ++x) cells_[key(x, y)].push_back(slot);
        }
    }

    /// Slots whose cells meet `b`, plus all oversized slots; may contain duplicates.
    template <class Fn>
    void visit(const MercatorBox& b, std::size_t total, Fn&& fn) const {
        const CellRange r = cells(b);
        if (r.count() > static_cast<std::int64_t>(std::max(cells_.size(), total))) {
            for (std::size_t i = 0; i < total; ++i) fn(static_cast<std::uint32_t>(i));
            return;
        }
        for (std::int64_t y = r.y0; y <= r.y1; ++y) {
            for (std::int64_t x = r.x0; x <= r.x1; ++x) {
                const auto it = cells_.find(key(x, y));
                if (it == cells_.end()) continue;
                for (const std::uint32_t s : it->second) fn(s);
            }
        }
        for (const std::uint32_t s : oversized_) fn(s);
    }

    std::size_t cell_count() const { return cells_.size(); }

private:
    static std::uint64_t key(std::int64_t x, std::int64_t y) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) | static_cast<std::uint32_t>(y);
    }
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
    std::vector<std::uint32_t> oversized_;
};

namespace detail {
inline MercatorBox mercator_query_box(const LonLatBox& b) {
    auto clamp_pt = [](double lon, double lat) {
        return lonlat_to_mercator({std::clamp(lon, -180.0, 180.0), std::clamp(lat, -EarthModel::max_lat, EarthModel::max_lat)});
    };
    const MercatorPoint lo = clamp_pt(b.min_lon, b.min_lat);
    const MercatorPoint hi = clamp_pt(b.max_lon, b.max_lat);
    return {lo.x, lo.y, hi.x, hi.y};
}

inline void require_valid_query(const LonLatBox& b) {
    if (!std::isfinite(b.min_lon) || !std::isfinite(b.min_lat) || !std::isfinite(b.max_lon) ||
        !std::isfinite(b.max_lat) || b.min_lon > b.max_lon || b.min_lat > b.max_lat) {
        throw ValidationError("query bbox must be finite with min <= max");
    }
}
} // namespace detail

/// Immutable feature set. Features are ordered by id.
class StoreSnapshot {
public:
    StoreSnapshot() = default;
    StoreSnapshot(std::vector<Feature> features, std::uint64_t version) : features_(std::move(features)), version_(version) {
        reindex();
    }

    std::uint64_t version() const { return version_; }
    const std::vector<Feature>& features() const { return features_; }
    std::size_t size() const { return features_.size(); }
    const LonLatBox& box(std::size_t slot) const { return boxes_[slot]; }

    const Feature* find(std::uint64_t id) const {
        const auto it = std::lower_bound(features_.begin(), features_.end(), id,
                                         [](const Feature& f, std::uint64_t v) { return f.id < v; });
        return it != features_.end() && it->id == id ? &*it : nullptr;
    }

    /// Features whose bounding box intersects `bbox` and, when given, exist at `at`.
    std::vector<Feature> query(const LonLatBox& bbox, std::optional<Date> at = std::nullopt) const {
        detail::require_valid_query(bbox);
        std::vector<std::uint32_t> hits;
        index_.visit(detail::mercator_query_box(bbox), features_.size(), [&](std::uint32_t s) {
            if (boxes_[s].intersects(bbox) && (!at || features_[s].span.contains(*at))) hits.push_back(s);
        });
        std::sort(hits.begin(), hits.end());
        hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
        std::vector<Feature> out;
        out.reserve(hits.size());
        for (const std::uint32_t s : hits) out.push_back(features_[s]);
        return out;
    }

    /// Index-free linear scan with the same semantics as query().
    std::vector<Feature> scan(const LonLatBox& bbox, std::optional<Date> at = std::nullopt) const {
        detail::require_valid_query(bbox);
        std::vector<Feature> out;
        for (std::size_t s = 0; s < features_.size(); ++s) {
            if (boxes_[s].intersects(bbox) && (!at || features_[s].span.contains(*at))) out.push_back(features_[s]);
        }
        return out;
    }

    friend bool operator==(const StoreSnapshot& a, const StoreSnapshot& b) {
        return a.version_ == b.version_ && a.features_ == b.features_;
    }

private:
    void reindex() {
        index_ = GridIndex{};
        boxes_.clear();
        for (std::size_t s = 0; s < features_.size(); ++s) {
            boxes_.push_back(bbox(features_[s].geometry));
            index_.insert(static_cast<std::uint32_t>(s), mercator_bbox(features_[s].geometry));
        }
    }

    std::vector<Feature> features_;
    std::vector<LonLatBox> boxes_;
    GridIndex index_;
    std::uint64_t version_ = 0;
};

struct OverlapConflict {
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    double area = 0.0;
    TimeSpan overlap;
};

inline constexpr double overlap_epsilon_m2 = 1e-4;

/// Building pairs that overlap in both space (area > epsilon) and time, ordered by (a, b).
inline std::vector<OverlapConflict> check_overlaps(const StoreSnapshot& snap) {
    struct Entry {
        const Feature* f;
        MercatorBox box;
    };
    std::vector<Entry> buildings;
    for (const auto& f : snap.features()) {
        if (f.kind == FeatureKind::building && f.geometry.type == GeometryType::polygon) {
            buildings.push_back({&f, mercator_bbox(f.geometry)});
        }
    }
    std::sort(buildings.begin(), buildings.end(), [](const Entry& x, const Entry& y) { return x.box.min_x < y.box.min_x; });
    std::vector<OverlapConflict> out;
    for (std::size_t i = 0; i < buildings.size(); ++i) {
        for (std::size_t j = i + 1; j < buildings.size() && buildings[j].box.min_x <= buildings[i].box.max_x; ++j) {
            const Entry& p = buildings[i];
            const Entry& q = buildings[j];
            if (!p.box.intersects(q.box)) continue;
            const auto when = intersect(p.f->span, q.f->span);
            if (!when) continue;
            // Local frame near both shapes keeps the clipping arithmetic well conditioned.
            const Vec2 origin{std::min(p.box.min_x, q.box.min_x), std::min(p.box.min_y, q.box.min_y)};
            auto planar = [&](const Feature& f) {
                auto rings = mercator_parts(f.geometry, origin);
                PlanarPolygon poly{std::move(rings[0]), {}};
                for (std::size_t k = 1; k < rings.size(); ++k) poly.holes.push_back(std::move(rings[k]));
                return poly;
            };
            const PlanarPolygon pp = planar(*p.f);
            const PlanarPolygon qq = planar(*q.f);
            // Averaging both argument orders makes the value independent of which
            // feature came first (IEEE addition commutes).
            const double area = 0.5 * (intersection_area(pp, qq) + intersection_area(qq, pp));
            if (area > overlap_epsilon_m2) {
                const auto [lo, hi] = std::minmax(p.f->id, q.f->id);
                out.push_back({lo, hi, area, *when});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const OverlapConflict& x, const OverlapConflict& y) {
        return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    return out;
}

/// Single-writer store. Readers take a snapshot and never see a partial batch.
/// With a log path, every committed batch is appended as one JSON line and fsynced
/// before the new snapshot is published; construction replays the log.
class TemporalStore {
public:
    TemporalStore() : snap_(std::make_shared<const StoreSnapshot>()) {}

    explicit TemporalStore(std::filesystem::path log_path) : TemporalStore() {
        log_path_ = std::move(log_path);
        replay();
    }

    std::shared_ptr<const StoreSnapshot> snapshot() const {
        std::lock_guard lock(snap_mutex_);
        return snap_;
    }

    /// Assigns ids and commits all features, or none.
    std::vector<std::uint64_t> ingest(std::vector<Feature> batch) {
        std::lock_guard writer(write_mutex_);
        const auto cur = snapshot();
        std::vector<DocumentError> errors;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            try {
                validate(batch[i]);
            } catch (const Error& e) {
                errors.push_back({i, e.what()});
            }
        }
        if (!errors.empty()) throw BatchValidationError(std::move(errors));
        std::vector<std::uint64_t> ids;
        std::uint64_t next = next_id_;
        for (auto& f : batch) {
            f.id = next++;
            ids.push_back(f.id);
        }
        nlohmann::json rec{{"op", "ingest"}, {"version", cur->version() + 1}};
        rec["features"] = nlohmann::json::array();
        for (const auto& f : batch) rec["features"].push_back(feature_to_geojson(f));
        append_log(rec);

        std::vector<Feature> all = cur->features();
        all.insert(all.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
        publish(std::make_shared<const StoreSnapshot>(std::move(all), cur->version() + 1));
        next_id_ = next;
        return ids;
    }

    std::vector<std::uint64_t> ingest_geojson(const nlohmann::json& body) { return ingest(features_from_geojson(body)); }

    /// Sets `model_id` on a building; the last link wins.
    Feature link_model(std::uint64_t feature_id, const std::string& model_id) {
        std::lock_guard writer(write_mutex_);
        const auto cur = snapshot();
        const Feature* f = cur->find(feature_id);
        if (!f) throw NotFoundError("feature " + std::to_string(feature_id) + " not found");
        if (f->kind != FeatureKind::building) {
            throw KindError("feature " + std::to_string(feature_id) + " is a " + kind_name(f->kind) + ", not a building");
        }
        append_log({{"op", "link"}, {"version", cur->version() + 1}, {"feature_id", feature_id}, {"model_id", model_id}});
        std::vector<Feature> all = cur->features();
        Feature* target = &*std::find_if(all.begin(), all.end(), [&](const Feature& x) { return x.id == feature_id; });
        target->properties["model_id"] = model_id;
        Feature updated = *target;
        publish(std::make_shared<const StoreSnapshot>(std::move(all), cur->version() + 1));
        return updated;
    }

    std::vector<Feature> query(const LonLatBox& bbox, std::optional<Date> at = std::nullopt) const {
        return snapshot()->query(bbox, at);
    }

    const std::optional<std::filesystem::path>& log_path() const { return log_path_; }

private:
    static void validate(const Feature& f) {
        validate_geometry(f.geometry);
        if (f.span.end && !(f.span.start < *f.span.end)) throw ValidationError("time span is empty");
        if (!f.properties.is_object()) throw ValidationError("properties must be an object");
    }

    void publish(std::shared_ptr<const StoreSnapshot> s) {
        std::lock_guard lock(snap_mutex_);
        snap_ = std::move(s);
    }

    void append_log(const nlohmann::json& rec) {
        if (!log_path_) return;
        const std::string line = rec.dump() + "\n";
        if (log_path_->has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(log_path_->parent_path(), ec);
        }
        const int fd = ::open(log_path_->c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
        if (fd < 0) throw Error("cannot open log " + log_path_->string() + ": " + std::strerror(errno));
        std::size_t done = 0;
        while (done < line.size()) {
            const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                const int err = errno;
                ::close(fd);
                throw Error("cannot write log " + log_path_->string() + ": " + std::strerror(err));
            }
            done += static_cast<std::size_t>(n);
        }
        if (::fsync(fd) != 0) {
            const int err = errno;
            ::close(fd);
            throw Error("cannot sync log " + log_path_->string() + ": " + std::strerror(err));
        }
        ::close(fd);
    }

    void replay() {
        std::ifstream in(*log_path_, std::ios::binary);
        if (!in) return;
        const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::vector<std::pair<std::size_t, std::string>> lines; // (offset, text)
        for (std::size_t pos = 0; pos < data.size();) {
            const std::size_t nl = data.find('\n', pos);
            const std::size_t end = nl == std::string::npos ? data.size() : nl;
            if (end > pos) lines.emplace_back(pos, data.substr(pos, end - pos));
            pos = end + 1;
        }
        std::vector<Feature> all;
        std::uint64_t version = 0;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const auto& [offset, text] = lines[i];
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(text);
            } catch (const nlohmann::json::parse_error&) {
                if (i + 1 == lines.size()) {
                    // A torn final record is an uncommitted batch; cut it so the next
                    // append starts on a clean line.
                    std::filesystem::resize_file(*log_path_, offset);
                    break;
                }
                throw ParseError("corrupt record on line " + std::to_string(i + 1) + " of " + log_path_->string(), offset);
            }
            const std::string op = rec.value("op", "");
            if (op == "ingest") {
                for (const auto& doc : rec.at("features")) {
                    Feature f = feature_from_geojson(doc);
                    f.id = doc.at("id").get<std::uint64_t>();
                    next_id_ = std::max(next_id_, f.id + 1);
                    all.push_back(std::move(f));
                }
            } else if (op == "link") {
                const auto id = rec.at("feature_id").get<std::uint64_t>();
                for (auto& f : all) {
                    if (f.id == id) f.properties["model_id"] = rec.at("model_id");
                }
            } else {
                throw ParseError("unknown log op '" + op + "'", offset);
            }
            version = rec.value("version", version + 1);
        }
        std::sort(all.begin(), all.end(), [](const Feature& a, const Feature& b) { return a.id < b.id; });
        publish(std::make_shared<const StoreSnapshot>(std::move(all), version));
    }

    std::optional<std::filesystem::path> log_path_;
    mutable std::mutex snap_mutex_;
    std::mutex write_mutex_;
    std::shared_ptr<const StoreSnapshot> snap_;
    std::uint64_t next_id_ = 1;
};

} // namespace ta

#endif // TA_STORE_HPP
