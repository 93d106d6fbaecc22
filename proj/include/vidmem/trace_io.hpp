#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vidmem/backend.hpp"
#include "vidmem/config.hpp"
#include "vidmem/errors.hpp"
#include "vidmem/retrieval.hpp"

namespace vidmem {
namespace traceio {

// Container layout (all integers and floats little-endian):
//   8-byte magic, u32 version, u32 record count, then per record a
//   length-prefixed text header (key=value lines) followed by f32 payload
//   sections in declared order. Payloads are stored as f32 to match typical
//   accelerator dumps and widened to f64 on load.
inline constexpr char kTraceMagic[8] = {'V', 'M', 'T', 'R', 'A', 'C', 'E', '1'};
inline constexpr char kStateMagic[8] = {'V', 'M', 'S', 'T', 'A', 'T', 'E', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

struct Writer {
    std::string buf;

    void bytes(const void* p, std::size_t n) {
        buf.append(static_cast<const char*>(p), n);
    }
    void u32(std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void f32(double v) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
    void text_block(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
};

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    explicit Reader(const std::string& b) : buf(b) {}

    void require(std::size_t n, const char* what) const {
        if (pos + n > buf.size()) {
            throw TraceFormatError(std::string("truncated file while reading ") + what, pos);
        }
    }
    void bytes(void* p, std::size_t n, const char* what) {
        require(n, what);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }
    double f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
    std::string text_block(const char* what) {
        const std::uint32_t n = u32(what);
        require(n, what);
        std::string s(buf.data() + pos, n);
        pos += n;
        return s;
    }
};

inline std::string encode_text(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        if (c == '%' || c == '\n' || c == '\r' || c < 0x20 || c > 0x7E) {
            char buf[4];
            std::snprintf(buf, sizeof(buf), "%%%02X", c);
            out += buf;
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

inline std::string decode_text(const std::string& s, std::size_t offset) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '%') {
            out.push_back(s[i]);
            continue;
        }
        if (i + 2 >= s.size()) throw TraceFormatError("dangling escape in text field", offset);
        const auto hex = [&](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            throw TraceFormatError("bad escape in text field", offset);
        };
        out.push_back(static_cast<char>(hex(s[i + 1]) * 16 + hex(s[i + 2])));
        i += 2;
    }
    return out;
}

// Key=value header parsing with file-offset errors instead of line errors.
inline std::map<std::string, std::string> parse_header(const std::string& text,
                                                       std::size_t offset) {
    std::map<std::string, std::string> kv;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw TraceFormatError("header line without '=': " + line, offset);
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline std::uint64_t header_u64(const std::map<std::string, std::string>& kv,
                                const std::string& key, std::size_t offset) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        throw TraceFormatError("header missing key '" + key + "'", offset);
    }
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw TraceFormatError("header key '" + key + "' not an integer", offset);
    }
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace detail

inline std::string serialize_trace(const std::vector<BackendOutput>& outputs) {
    detail::Writer w;
    w.bytes(kTraceMagic, 8);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(outputs.size()));
    for (const BackendOutput& o : outputs) {
        const AttentionTrace& t = o.trace;
        std::string header;
        header += "clip_id=" + std::to_string(t.clip_id) + "\n";
        header += "n_layers=" + std::to_string(t.n_layers) + "\n";
        header += "layer_ids=";
        for (std::size_t i = 0; i < t.layer_ids.size(); ++i) {
            if (i) header += ",";
            header += std::to_string(t.layer_ids[i]);
        }
        header += "\n";
        header += "n_heads=" + std::to_string(t.n_heads) + "\n";
        header += "n_memory=" + std::to_string(t.layout.n_memory) + "\n";
        header += "n_visual=" + std::to_string(t.layout.n_visual) + "\n";
        header += "n_instruction=" + std::to_string(t.layout.n_instruction) + "\n";
        header += "n_caption=" + std::to_string(t.layout.n_caption) + "\n";
        header += "dim=" + std::to_string(o.caption.token_embeddings.empty()
                                              ? 0
                                              : o.caption.token_embeddings[0].size()) + "\n";
        if (o.caption.text) header += "text=" + detail::encode_text(*o.caption.text) + "\n";
        w.text_block(header);
        for (const Mat& b : t.blocks) {
            for (double x : b.data) w.f32(x);
        }
        for (const Vec& tok : o.caption.token_embeddings) {
            for (double x : tok) w.f32(x);
        }
    }
    return w.buf;
}

inline std::vector<BackendOutput> deserialize_trace(const std::string& bytes) {
    detail::Reader r(bytes);
    char magic[8];
    r.bytes(magic, 8, "magic");
    if (std::memcmp(magic, kTraceMagic, 8) != 0) {
        throw TraceFormatError("bad magic, not a trace file", 0);
    }
    const std::uint32_t version = r.u32("version");
    if (version != kFormatVersion) {
        throw UnsupportedVersion("trace file version " + std::to_string(version) +
                                 ", expected " + std::to_string(kFormatVersion));
    }
    const std::uint32_t count = r.u32("record count");
    std::vector<BackendOutput> out;
    out.reserve(count);
    for (std::uint32_t rec = 0; rec < count; ++rec) {
        const std::size_t header_offset = r.pos;
        const std::string header_text = r.text_block("record header");
        const auto kv = detail::parse_header(header_text, header_offset);

        AttentionTrace t;
        t.clip_id = detail::header_u64(kv, "clip_id", header_offset);
        t.n_layers = detail::header_u64(kv, "n_layers", header_offset);
        t.n_heads = detail::header_u64(kv, "n_heads", header_offset);
        t.layout = TokenLayout::make(detail::header_u64(kv, "n_memory", header_offset),
                                     detail::header_u64(kv, "n_visual", header_offset),
                                     detail::header_u64(kv, "n_instruction", header_offset),
                                     detail::header_u64(kv, "n_caption", header_offset));
        const std::size_t dim = detail::header_u64(kv, "dim", header_offset);
        if (t.layout.n_caption == 0 || t.layout.n_visual == 0 || dim == 0 || t.n_heads == 0) {
            throw TraceFormatError("trace record with zero-sized layout", header_offset);
        }
        auto ids = kv.find("layer_ids");
        if (ids == kv.end()) {
            throw TraceFormatError("header missing key 'layer_ids'", header_offset);
        }
        for (const std::string& tok : config::SectionView::split(ids->second, ',')) {
            try {
                t.layer_ids.push_back(std::stoull(tok));
            } catch (const std::exception&) {
                throw TraceFormatError("bad layer_ids entry '" + tok + "'", header_offset);
            }
        }

        for (std::size_t b = 0; b < t.layer_ids.size() * t.n_heads; ++b) {
            const std::size_t block_offset = r.pos;
            Mat block(t.layout.n_caption, t.layout.n_visual);
            for (double& x : block.data) {
                x = r.f32("attention block");
                if (!(x >= 0.0 && x <= 1.0)) {
                    throw TraceFormatError("attention entry outside [0,1]", block_offset);
                }
            }
            t.blocks.push_back(std::move(block));
        }
        try {
            t.validate();
        } catch (const Error& e) {
            throw TraceFormatError(std::string("invalid trace record: ") + e.what(),
                                   header_offset);
        }

        std::vector<Vec> caption_tokens(t.layout.n_caption, Vec(dim));
        for (Vec& tok : caption_tokens) {
            for (double& x : tok) {
                x = r.f32("caption embedding");
                if (!std::isfinite(x)) {
                    throw TraceFormatError("non-finite caption embedding", r.pos);
                }
            }
        }
        std::optional<std::string> text;
        if (auto it = kv.find("text"); it != kv.end()) {
            text = detail::decode_text(it->second, header_offset);
        }
        out.push_back(BackendOutput{
            CaptionRecord::make(t.clip_id, std::move(caption_tokens), std::move(text)),
            std::move(t)});
    }
    if (r.pos != bytes.size()) {
        throw TraceFormatError("trailing bytes after last record", r.pos);
    }
    return out;
}

inline void write_trace(const std::string& path, const std::vector<BackendOutput>& outputs) {
    detail::write_file(path, serialize_trace(outputs));
}

inline std::vector<BackendOutput> read_trace(const std::string& path) {
    return deserialize_trace(detail::read_file(path));
}

// --- caption-store state files ---

struct PersistedState {
    std::vector<CaptionRecord> captions;
    std::map<std::uint64_t, Vec> visual_index;  // pooled visual per clip, optional
};

inline std::string serialize_state(const PersistedState& state) {
    detail::Writer w;
    w.bytes(kStateMagic, 8);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(state.captions.size()));
    for (const CaptionRecord& c : state.captions) {
        const auto vis = state.visual_index.find(c.clip_id);
        std::string header;
        header += "clip_id=" + std::to_string(c.clip_id) + "\n";
        header += "tokens=" + std::to_string(c.token_count) + "\n";
        header += "dim=" + std::to_string(c.token_embeddings[0].size()) + "\n";
        header += "has_visual=" + std::string(vis != state.visual_index.end() ? "1" : "0") + "\n";
        if (c.text) header += "text=" + detail::encode_text(*c.text) + "\n";
        w.text_block(header);
        for (const Vec& tok : c.token_embeddings) {
            for (double x : tok) w.f32(x);
        }
        if (vis != state.visual_index.end()) {
            for (double x : vis->second) w.f32(x);
        }
    }
    return w.buf;
}

inline PersistedState deserialize_state(const std::string& bytes) {
    detail::Reader r(bytes);
    char magic[8];
    r.bytes(magic, 8, "magic");
    if (std::memcmp(magic, kStateMagic, 8) != 0) {
        throw TraceFormatError("bad magic, not a state file", 0);
    }
    const std::uint32_t version = r.u32("version");
    if (version != kFormatVersion) {
        throw UnsupportedVersion("state file version " + std::to_string(version) +
                                 ", expected " + std::to_string(kFormatVersion));
    }
    const std::uint32_t count = r.u32("record count");
    PersistedState state;
    for (std::uint32_t rec = 0; rec < count; ++rec) {
        const std::size_t header_offset = r.pos;
        const auto kv = detail::parse_header(r.text_block("record header"), header_offset);
        const std::uint64_t clip_id = detail::header_u64(kv, "clip_id", header_offset);
        const std::size_t tokens = detail::header_u64(kv, "tokens", header_offset);
        const std::size_t dim = detail::header_u64(kv, "dim", header_offset);
        const bool has_visual = detail::header_u64(kv, "has_visual", header_offset) != 0;
        if (tokens == 0 || dim == 0) {
            throw TraceFormatError("state record with zero tokens or dim", header_offset);
        }
        std::vector<Vec> embeds(tokens, Vec(dim));
        for (Vec& tok : embeds) {
            for (double& x : tok) x = r.f32("caption embedding");
        }
        std::optional<std::string> text;
        if (auto it = kv.find("text"); it != kv.end()) {
            text = detail::decode_text(it->second, header_offset);
        }
        state.captions.push_back(CaptionRecord::make(clip_id, std::move(embeds), std::move(text)));
        if (has_visual) {
            Vec v(dim);
            for (double& x : v) x = r.f32("pooled visual");
            state.visual_index[clip_id] = std::move(v);
        }
    }
    if (r.pos != bytes.size()) {
        throw TraceFormatError("trailing bytes after last record", r.pos);
    }
    return state;
}

inline void write_state(const std::string& path, const PersistedState& state) {
    detail::write_file(path, serialize_state(state));
}

inline PersistedState read_state(const std::string& path) {
    return deserialize_state(detail::read_file(path));
}

}  // namespace traceio
}  // namespace vidmem
