#ifndef TA_MVT_HPP
#define TA_MVT_HPP

// Mapbox Vector Tile 2.1 codec: protobuf wire format, geometry command streams.

#include "ta/error.hpp"

#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ta::mvt {

enum class GeomType : std::uint32_t { unknown = 0, point = 1, linestring = 2, polygon = 3 };

enum Command : std::uint32_t { move_to = 1, line_to = 2, close_path = 7 };

struct IPoint {
    std::int32_t x = 0;
    std::int32_t y = 0;
    friend bool operator==(const IPoint&, const IPoint&) = default;
};

/// A point set, a line, or a ring without its closing vertex.
using Path = std::vector<IPoint>;

/// Distinguishes the sint_value wire field from int_value.
struct SInt {
    std::int64_t value = 0;
    friend bool operator==(const SInt&, const SInt&) = default;
};

using Value = std::variant<std::string, float, double, std::int64_t, std::uint64_t, SInt, bool>;

struct Feature {
    std::optional<std::uint64_t> id;
    GeomType type = GeomType::unknown;
    std::vector<std::uint32_t> tags;
    std::vector<Path> paths;
    friend bool operator==(const Feature&, const Feature&) = default;
};

struct Layer {
    std::uint32_t version = 2;
    std::string name;
    std::uint32_t extent = 4096;
    std::vector<std::string> keys;
    std::vector<Value> values;
    std::vector<Feature> features;
    friend bool operator==(const Layer&, const Layer&) = default;
};

inline std::uint64_t zigzag(std::int64_t n) {
    return (static_cast<std::uint64_t>(n) << 1) ^ static_cast<std::uint64_t>(n >> 63);
}

inline std::int64_t unzigzag(std::uint64_t z) {
    return static_cast<std::int64_t>(z >> 1) ^ -static_cast<std::int64_t>(z & 1);
}

inline std::uint32_t command_integer(std::uint32_t id, std::uint32_t count) {
    if (count == 0) throw EncodingError("geometry command with count 0");
    if (count >= (1u << 29)) throw EncodingError("geometry command count exceeds 2^29 - 1");
    return (id & 0x7) | (count << 3);
}

namespace detail {
inline std::uint32_t param(std::int64_t delta) {
    if (delta < INT32_MIN || delta > INT32_MAX) throw EncodingError("coordinate delta exceeds 32 bits");
    return static_cast<std::uint32_t>(zigzag(delta));
}
} // namespace detail

/// Command stream for `paths`. Rings must not repeat their first vertex.
inline std::vector<std::uint32_t> encode_commands(const std::vector<Path>& paths, GeomType type) {
    std::vector<std::uint32_t> out;
    IPoint cur{};
    auto emit = [&](IPoint p) {
        out.push_back(detail::param(std::int64_t{p.x} - cur.x));
        out.push_back(detail::param(std::int64_t{p.y} - cur.y));
        cur = p;
    };
    switch (type) {
    case GeomType::point: {
        std::size_t n = 0;
        for (const auto& p : paths) n += p.size();
        out.push_back(command_integer(move_to, static_cast<std::uint32_t>(n)));
        for (const auto& path : paths) {
            for (const IPoint p : path) emit(p);
        }
        break;
    }
    case GeomType::linestring:
    case GeomType::polygon: {
        if (paths.empty()) throw EncodingError("geometry has no paths");
        for (const auto& path : paths) {
            if (path.empty()) throw EncodingError("empty path");
            out.push_back(command_integer(move_to, 1));
            emit(path[0]);
            out.push_back(command_integer(line_to, static_cast<std::uint32_t>(path.size() - 1)));
            for (std::size_t i = 1; i < path.size(); ++i) emit(path[i]);
            if (type == GeomType::polygon) out.push_back(command_integer(close_path, 1));
        }
        break;
    }
    case GeomType::unknown:
        throw EncodingError("cannot encode geometry of unknown type");
    }
    return out;
}

/// Inverse of encode_commands. Errors report `base` as the byte offset of the stream.
inline std::vector<Path> decode_commands(const std::vector<std::uint32_t>& cmds, GeomType type, std::size_t base = 0) {
    std::vector<Path> paths;
    IPoint cur{};
    std::size_t i = 0;
    auto fail = [&](const std::string& what) { throw ParseError("geometry: " + what, base); };
    auto read_point = [&]() {
        if (i + 2 > cmds.size()) fail("command parameters truncated");
        const std::int64_t x = std::int64_t{cur.x} + unzigzag(cmds[i]);
        const std::int64_t y = std::int64_t{cur.y} + unzigzag(cmds[i + 1]);
        i += 2;
        if (x < INT32_MIN || x > INT32_MAX || y < INT32_MIN || y > INT32_MAX) fail("coordinate overflow");
        cur = {static_cast<std::int32_t>(x), static_cast<std::int32_t>(y)};
        return cur;
    };
    while (i < cmds.size()) {
        const std::uint32_t id = cmds[i] & 0x7;
        const std::uint32_t count = cmds[i] >> 3;
        ++i;
        if (type == GeomType::point) {
            if (id != move_to || count == 0 || !paths.empty()) fail("point geometry must be a single MoveTo");
            Path p;
            for (std::uint32_t k = 0; k < count; ++k) p.push_back(read_point());
            paths.push_back(std::move(p));
            continue;
        }
        if (id != move_to || count != 1) fail("path must start with MoveTo(1)");
        Path p{read_point()};
        if (i >= cmds.size() || (cmds[i] & 0x7) != line_to || (cmds[i] >> 3) == 0) fail("MoveTo not followed by LineTo");
        const std::uint32_t n = cmds[i] >> 3;
        ++i;
        if (n > (cmds.size() - i) / 2) fail("LineTo parameters truncated");
        for (std::uint32_t k = 0; k < n; ++k) p.push_back(read_point());
        if (type == GeomType::polygon) {
            if (i >= cmds.size() || cmds[i] != command_integer(close_path, 1)) fail("ring without ClosePath");
            ++i;
            if (p.size() < 3) fail("ring with fewer than 3 vertices");
        }
        paths.push_back(std::move(p));
    }
    if (paths.empty() && !cmds.empty()) fail("no paths");
    return paths;
}

namespace detail {

enum Wire : std::uint32_t { wire_varint = 0, wire_fixed64 = 1, wire_length = 2, wire_fixed32 = 5 };

class Writer {
public:
    void varint_raw(std::uint64_t v) {
        while (v >= 0x80) {
            buf_.push_back(static_cast<char>((v & 0x7f) | 0x80));
            v >>= 7;
        }
        buf_.push_back(static_cast<char>(v));
    }
    void key(std::uint32_t field, Wire w) { varint_raw((std::uint64_t{field} << 3) | w); }
    void field_varint(std::uint32_t field, std::uint64_t v) {
        key(field, wire_varint);
        varint_raw(v);
    }
    void field_bytes(std::uint32_t field, std::string_view s) {
        key(field, wire_length);
        varint_raw(s.size());
        buf_.append(s);
    }
    void field_packed(std::uint32_t field, const std::vector<std::uint32_t>& v) {
        Writer inner;
        for (const std::uint32_t x : v) inner.varint_raw(x);
        field_bytes(field, inner.buf_);
    }
    template <class T>
    void field_fixed(std::uint32_t field, T v) {
        key(field, sizeof(T) == 4 ? wire_fixed32 : wire_fixed64);
        char raw[sizeof(T)];
        std::memcpy(raw, &v, sizeof(T)); // little-endian host
        buf_.append(raw, sizeof(T));
    }
    std::string& str() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string_view data, std::size_t base) : data_(data), base_(base) {}

    bool done() const { return pos_ >= data_.size(); }
    std::size_t offset() const { return base_ + pos_; }
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, offset()); }

    std::uint64_t varint() {
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            if (done()) fail("truncated varint");
            const auto b = static_cast<std::uint8_t>(data_[pos_++]);
            if (shift == 63 && b > 1) fail("varint overflows 64 bits");
            v |= std::uint64_t{b & 0x7fu} << shift;
            if (!(b & 0x80)) return v;
        }
        fail("varint longer than 10 bytes");
    }
    std::pair<std::uint32_t, Wire> key() {
        const std::uint64_t k = varint();
        const auto field = static_cast<std::uint32_t>(k >> 3);
        if (field == 0 || (k >> 3) > 0x1fffffff) fail("invalid field number");
        return {field, static_cast<Wire>(k & 7)};
    }
    /// Returns the sub-view and its absolute offset.
    std::pair<std::string_view, std::size_t> bytes() {
        const std::uint64_t n = varint();
        if (n > data_.size() - pos_) fail("length-delimited field exceeds buffer");
        const std::size_t at = offset();
        const std::string_view s = data_.substr(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return {s, at};
    }
    template <class T>
    T fixed() {
        if (data_.size() - pos_ < sizeof(T)) fail("truncated fixed-width field");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void expect(Wire got, Wire want) {
        if (got != want) fail("unexpected wire type " + std::to_string(got));
    }
    void skip(Wire w) {
        switch (w) {
        case wire_varint: varint(); break;
        case wire_fixed64: fixed<std::uint64_t>(); break;
        case wire_length: bytes(); break;
        case wire_fixed32: fixed<std::uint32_t>(); break;
        default: fail("unsupported wire type " + std::to_string(w));
        }
    }
    std::vector<std::uint32_t> packed_u32() {
        auto [s, at] = bytes();
        Reader inner(s, at);
        std::vector<std::uint32_t> out;
        while (!inner.done()) {
            const std::uint64_t v = inner.varint();
            if (v > UINT32_MAX) inner.fail("packed value exceeds 32 bits");
            out.push_back(static_cast<std::uint32_t>(v));
        }
        return out;
    }

private:
    std::string_view data_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

inline void write_value(Writer& w, const Value& v) {
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::string>) w.field_bytes(1, x);
            else if constexpr (std::is_same_v<T, float>) w.field_fixed(2, x);
            else if constexpr (std::is_same_v<T, double>) w.field_fixed(3, x);
            else if constexpr (std::is_same_v<T, std::int64_t>) w.field_varint(4, static_cast<std::uint64_t>(x));
            else if constexpr (std::is_same_v<T, std::uint64_t>) w.field_varint(5, x);
            else if constexpr (std::is_same_v<T, SInt>) w.field_varint(6, zigzag(x.value));
            else w.field_varint(7, x ? 1 : 0);
        },
        v);
}

inline Value read_value(std::string_view s, std::size_t at) {
    Reader r(s, at);
    std::optional<Value> v;
    while (!r.done()) {
        const auto [field, wire] = r.key();
        auto set = [&](Value x) {
            if (v) r.fail("value message carries more than one field");
            v = std::move(x);
        };
        switch (field) {
        case 1: r.expect(wire, wire_length); set(std::string(r.bytes().first)); break;
        case 2: r.expect(wire, wire_fixed32); set(r.fixed<float>()); break;
        case 3: r.expect(wire, wire_fixed64); set(r.fixed<double>()); break;
        case 4: r.expect(wire, wire_varint); set(static_cast<std::int64_t>(r.varint())); break;
        case 5: r.expect(wire, wire_varint); set(r.varint()); break;
        case 6: r.expect(wire, wire_varint); set(SInt{unzigzag(r.varint())}); break;
        case 7: r.expect(wire, wire_varint); set(r.varint() != 0); break;
        default: r.skip(wire);
        }
    }
    if (!v) throw ParseError("value message is empty", at);
    return *v;
}

inline Feature read_feature(std::string_view s, std::size_t at) {
    Reader r(s, at);
    Feature f;
    std::vector<std::uint32_t> geometry;
    std::size_t geometry_at = at;
    while (!r.done()) {
        const auto [field, wire] = r.key();
        switch (field) {
        case 1: r.expect(wire, wire_varint); f.id = r.varint(); break;
        case 2: r.expect(wire, wire_length); f.tags = r.packed_u32(); break;
        case 3: {
            r.expect(wire, wire_varint);
            const std::uint64_t t = r.varint();
            if (t > 3) r.fail("unknown geometry type " + std::to_string(t));
            f.type = static_cast<GeomType>(t);
            break;
        }
        case 4:
            r.expect(wire, wire_length);
            geometry_at = r.offset();
            geometry = r.packed_u32();
            break;
        default: r.skip(wire);
        }
    }
    if (f.tags.size() % 2 != 0) throw ParseError("odd number of feature tags", at);
    if (!geometry.empty()) {
        if (f.type == GeomType::unknown) throw ParseError("geometry present on feature of unknown type", geometry_at);
        f.paths = decode_commands(geometry, f.type, geometry_at);
    }
    return f;
}

inline Layer read_layer(std::string_view s, std::size_t at) {
    Reader r(s, at);
    Layer l;
    l.version = 1; // proto default
    bool named = false;
    while (!r.done()) {
        const auto [field, wire] = r.key();
        switch (field) {
        case 1: r.expect(wire, wire_length); l.name = std::string(r.bytes().first); named = true; break;
        case 2: {
            r.expect(wire, wire_length);
            auto [fs, fat] = r.bytes();
            l.features.push_back(read_feature(fs, fat));
            break;
        }
        case 3: r.expect(wire, wire_length); l.keys.emplace_back(r.bytes().first); break;
        case 4: {
            r.expect(wire, wire_length);
            auto [vs, vat] = r.bytes();
            l.values.push_back(read_value(vs, vat));
            break;
        }
        case 5: {
            r.expect(wire, wire_varint);
            const std::uint64_t e = r.varint();
            if (e == 0 || e > UINT32_MAX) r.fail("invalid extent");
            l.extent = static_cast<std::uint32_t>(e);
            break;
        }
        case 15: {
            r.expect(wire, wire_varint);
            const std::uint64_t v = r.varint();
            if (v > UINT32_MAX) r.fail("invalid version");
            l.version = static_cast<std::uint32_t>(v);
            break;
        }
        default: r.skip(wire);
        }
    }
    if (!named) throw ParseError("layer without a name", at);
    for (const auto& f : l.features) {
        for (std::size_t i = 0; i < f.tags.size(); i += 2) {
            if (f.tags[i] >= l.keys.size() || f.tags[i + 1] >= l.values.size()) {
                throw ParseError("feature tag index out of range in layer '" + l.name + "'", at);
            }
        }
    }
    return l;
}

} // namespace detail

inline std::string encode_tile(const std::vector<Layer>& layers) {
    detail::Writer tile;
    for (const auto& l : layers) {
        if (l.extent == 0) throw EncodingError("layer '" + l.name + "' has extent 0");
        detail::Writer lw;
        lw.field_bytes(1, l.name);
        for (const auto& f : l.features) {
            if (f.tags.size() % 2 != 0) throw EncodingError("odd tag count in layer '" + l.name + "'");
            for (std::size_t i = 0; i < f.tags.size(); i += 2) {
                if (f.tags[i] >= l.keys.size() || f.tags[i + 1] >= l.values.size()) {
                    throw EncodingError("tag index out of range in layer '" + l.name + "'");
                }
            }
            detail::Writer fw;
            if (f.id) fw.field_varint(1, *f.id);
            if (!f.tags.empty()) fw.field_packed(2, f.tags);
            fw.field_varint(3, static_cast<std::uint32_t>(f.type));
            if (!f.paths.empty()) fw.field_packed(4, encode_commands(f.paths, f.type));
            lw.field_bytes(2, fw.str());
        }
        for (const auto& k : l.keys) lw.field_bytes(3, k);
        for (const auto& v : l.values) {
            detail::Writer vw;
            detail::write_value(vw, v);
            lw.field_bytes(4, vw.str());
        }
        lw.field_varint(5, l.extent);
        lw.field_varint(15, l.version);
        tile.field_bytes(3, lw.str());
    }
    return std::move(tile.str());
}

inline std::vector<Layer> decode_tile(std::string_view bytes) {
    detail::Reader r(bytes, 0);
    std::vector<Layer> layers;
    while (!r.done()) {
        const auto [field, wire] = r.key();
        if (field == 3) {
            r.expect(wire, detail::wire_length);
            auto [s, at] = r.bytes();
            layers.push_back(detail::read_layer(s, at));
        } else {
            r.skip(wire);
        }
    }
    return layers;
}

/// Accumulates a layer, deduplicating keys and values.
class LayerBuilder {
public:
    explicit LayerBuilder(std::string name, std::uint32_t extent = 4096) {
        layer_.name = std::move(name);
        layer_.extent = extent;
    }

    void add(Feature f, const std::vector<std::pair<std::string, Value>>& attrs) {
        f.tags.clear();
        for (const auto& [k, v] : attrs) {
            f.tags.push_back(intern_key(k));
            f.tags.push_back(intern_value(v));
        }
        layer_.features.push_back(std::move(f));
    }

    bool empty() const { return layer_.features.empty(); }
    Layer release() { return std::move(layer_); }

private:
    std::uint32_t intern_key(const std::string& k) {
        auto [it, fresh] = key_index_.try_emplace(k, static_cast<std::uint32_t>(layer_.keys.size()));
        if (fresh) layer_.keys.push_back(k);
        return it->second;
    }
    std::uint32_t intern_value(const Value& v) {
        // Keyed on (type, bytes) so 1.0 and true stay distinct.
        std::string key(1, static_cast<char>(v.index()));
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, std::string>) key += x;
                else key.append(reinterpret_cast<const char*>(&x), sizeof x);
            },
            v);
        auto [it, fresh] = value_index_.try_emplace(key, static_cast<std::uint32_t>(layer_.values.size()));
        if (fresh) layer_.values.push_back(v);
        return it->second;
    }

    Layer layer_;
    std::map<std::string, std::uint32_t> key_index_;
    std::map<std::string, std::uint32_t> value_index_;
};

/// Value of tag `key` on `f`, if present.
inline const Value* find_tag(const Layer& l, const Feature& f, std::string_view key) {
    for (std::size_t i = 0; i + 1 < f.tags.size(); i += 2) {
        if (l.keys.at(f.tags[i]) == key) return &l.values.at(f.tags[i + 1]);
    }
    return nullptr;
}

} // namespace ta::mvt

#endif // TA_MVT_HPP
