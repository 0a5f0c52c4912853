#include "omni/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "omni/error.hpp"
#include "omni/random.hpp"

namespace omni {

namespace {

constexpr char kMagic[4] = {'O', 'M', 'N', 'I'};

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<char>(u & 0xff));
        u = static_cast<U>(u >> 8);
    }
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }

    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail(ErrorKind::io, "container truncated");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

const ContainerEntry* Container::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const ContainerEntry& Container::at(const std::string& name) const {
    const auto* e = find(name);
    if (e == nullptr) fail(ErrorKind::io, "container has no tensor named '" + name + "'");
    return *e;
}

std::string encode_container(const Container& container) {
    std::string out(kMagic, 4);
    put_le<std::uint32_t>(out, Container::kVersion);
    put_le<std::uint64_t>(out, container.metadata.size());
    out += container.metadata;
    put_le<std::uint64_t>(out, container.entries.size());
    for (const auto& e : container.entries) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        const auto& shape = e.tensor.shape();
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
        for (auto extent : shape) put_le<std::uint64_t>(out, extent);
        out.push_back(e.frozen ? 1 : 0);
        for (double v : e.tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Container decode_container(const std::string& bytes) {
    Reader r(bytes);
    if (r.take(4) != std::string(kMagic, 4)) fail(ErrorKind::io, "not an OMNI container (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != Container::kVersion) {
        fail(ErrorKind::compatibility, "unsupported container version " + std::to_string(version));
    }
    Container c;
    c.metadata = r.take(static_cast<std::size_t>(r.get<std::uint64_t>()));
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        ContainerEntry e;
        e.name = r.take(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank == 0 || rank > 3) fail(ErrorKind::io, "tensor '" + e.name + "' has invalid rank");
        Shape shape(rank);
        for (auto& extent : shape) extent = static_cast<std::size_t>(r.get<std::uint64_t>());
        e.frozen = r.get<std::uint8_t>() != 0;
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>());
        e.tensor = Tensor(std::move(shape), std::move(values), !e.frozen);
        c.entries.push_back(std::move(e));
    }
    if (!r.done()) fail(ErrorKind::io, "trailing bytes after container entries");
    return c;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorKind::io, "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::io, "cannot move '" + tmp.string() + "' into place: " + ec.message());
}

void write_container(const std::filesystem::path& path, const Container& container) {
    write_file_atomic(path, encode_container(container));
}

Container read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

std::uint64_t hash_file(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    Fnv1a h;
    h.update(bytes);
    return h.digest();
}

}  // namespace omni
