#include "lpln/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lpln::agentloop {

namespace {

constexpr char kMagic[4] = {'L', 'P', 'L', 'N'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string read_string(std::istream& in) {
    std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

void write_f64(std::ostream& out, const double* data, std::size_t count) {
    // Host doubles are IEEE-754; on a little-endian host the raw bytes are
    // already the stored format.
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
}

CheckpointMeta read_header(std::istream& in, const std::string& path) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    CheckpointMeta meta;
    meta.version = read_u32(in);
    if (meta.version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    meta.config_hash = read_u64(in);
    return meta;
}

}  // namespace

void save_checkpoint(
    const std::string& path, std::uint64_t config_hash,
    const std::vector<std::pair<std::string, const diffmath::ParameterSet*>>& segments) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    write_u64(out, config_hash);
    write_u32(out, static_cast<std::uint32_t>(segments.size()));
    for (const auto& [seg_name, set] : segments) {
        write_string(out, seg_name);
        write_u32(out, static_cast<std::uint32_t>(set->items().size()));
        std::uint64_t offset = 0;
        for (const diffmath::Param& p : set->items()) {
            write_string(out, p.name);
            write_u32(out, static_cast<std::uint32_t>(p.value.shape().size()));
            for (int d : p.value.shape()) write_u32(out, static_cast<std::uint32_t>(d));
            write_u64(out, offset);
            offset += p.value.size() * sizeof(double);
        }
        write_u64(out, offset);  // blob size
        for (const diffmath::Param& p : set->items())
            write_f64(out, p.value.data(), p.value.size());
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointMeta load_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, diffmath::ParameterSet*>>& segments) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    CheckpointMeta meta = read_header(in, path);
    std::uint32_t n_segments = read_u32(in);
    if (n_segments != segments.size())
        throw std::runtime_error("checkpoint: segment count mismatch in " + path);

    // Stage into copies first so a mismatch midway leaves targets untouched.
    std::vector<std::vector<Array>> staged(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto& [want_name, set] = segments[s];
        std::string seg_name = read_string(in);
        if (seg_name != want_name)
            throw std::runtime_error("checkpoint: expected segment '" + want_name +
                                     "', found '" + seg_name + "'");
        std::uint32_t n_params = read_u32(in);
        if (n_params != set->items().size())
            throw std::runtime_error("checkpoint: parameter count mismatch in segment " +
                                     seg_name);
        std::vector<std::vector<int>> shapes(n_params);
        std::uint64_t expect_offset = 0;
        for (std::uint32_t i = 0; i < n_params; ++i) {
            const diffmath::Param& p = set->items()[i];
            std::string name = read_string(in);
            if (name != p.name)
                throw std::runtime_error("checkpoint: expected parameter '" + p.name +
                                         "', found '" + name + "'");
            std::uint32_t ndim = read_u32(in);
            std::vector<int> shape(ndim);
            for (std::uint32_t d = 0; d < ndim; ++d)
                shape[d] = static_cast<int>(read_u32(in));
            if (shape != p.value.shape())
                throw std::runtime_error("checkpoint: shape mismatch for parameter " + name);
            std::uint64_t offset = read_u64(in);
            if (offset != expect_offset)
                throw std::runtime_error("checkpoint: bad manifest offset for " + name);
            expect_offset += Array::count(shape) * sizeof(double);
            shapes[i] = std::move(shape);
        }
        std::uint64_t blob = read_u64(in);
        if (blob != expect_offset)
            throw std::runtime_error("checkpoint: blob size mismatch in segment " + seg_name);
        staged[s].reserve(n_params);
        for (std::uint32_t i = 0; i < n_params; ++i) {
            Array a(shapes[i]);
            if (!in.read(reinterpret_cast<char*>(a.data()),
                         static_cast<std::streamsize>(a.size() * sizeof(double))))
                throw std::runtime_error("checkpoint: truncated data in " + path);
            staged[s].push_back(std::move(a));
        }
    }
    for (std::size_t s = 0; s < segments.size(); ++s) {
        diffmath::ParameterSet* set = segments[s].second;
        for (std::size_t i = 0; i < staged[s].size(); ++i)
            set->items()[i].value = std::move(staged[s][i]);
        set->bump_version();
    }
    return meta;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    return read_header(in, path);
}

}  // namespace lpln::agentloop
