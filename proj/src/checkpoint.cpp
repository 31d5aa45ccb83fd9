#include "las/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "las/dataset.hpp"  // IoError

namespace las {

namespace {

void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u64le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw IoError(path + ": truncated checkpoint (expected " + std::to_string(n) +
                          " more bytes for " + what + ", have " + std::to_string(buf.size() - pos) +
                          ")");
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return buf[pos++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 8;
        return v;
    }
};

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(path + ": cannot open");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {});
}

void read_blocks(Reader& r, NetParams<float>& params, const std::vector<int>& counts) {
    auto read_tensor = [&r](Tensor<float>& t) {
        const std::size_t bytes = t.size() * sizeof(float);
        r.need(bytes, "parameter block");
        std::memcpy(t.data(), r.buf.data() + r.pos, bytes);
        r.pos += bytes;
    };
    visit_learnable<float>(params, counts, read_tensor);
    visit_bn_state<float>(params, counts, read_tensor);
}

}  // namespace

void save_checkpoint(const SearchSpaceSpec& spec, const NetParams<float>& params,
                     const LayerAssignment& a, bool supernet, const std::string& path) {
    std::string out;
    out.reserve(64 + param_count(params, a.groups()) * sizeof(float));
    out += "LASN";
    out.push_back(1);  // version
    out.push_back(supernet ? 1 : 0);
    put_u64le(out, spec.digest());
    const std::string astr = a.str();
    put_u16le(out, static_cast<std::uint16_t>(astr.size()));
    out += astr;
    if (supernet) {
        out.push_back(static_cast<char>(spec.n));
        for (int g = 0; g < spec.n; ++g)
            put_u16le(out, static_cast<std::uint16_t>(spec.capacity(g)));
    }
    auto append_tensor = [&out](const Tensor<float>& t) {
        const char* p = reinterpret_cast<const char*>(t.data());
        out.append(p, t.size() * sizeof(float));
    };
    visit_learnable<float>(params, a.groups(), append_tensor);
    visit_bn_state<float>(params, a.groups(), append_tensor);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(path + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError(path + ": write failed");
}

namespace {

LayerAssignment read_header(Reader& r, const SearchSpaceSpec& spec, bool expect_supernet) {
    r.need(4, "magic");
    if (std::memcmp(r.buf.data(), "LASN", 4) != 0)
        throw IoError(r.path + ": bad magic (not a LASN checkpoint)");
    r.pos = 4;
    const auto version = r.u8("version");
    if (version != 1)
        throw IoError(r.path + ": unsupported checkpoint version " + std::to_string(version));
    const auto flags = r.u8("flags");
    const bool is_supernet = (flags & 1) != 0;
    if (is_supernet != expect_supernet)
        throw IoError(r.path + (is_supernet ? ": supernet checkpoint where a network was expected"
                                            : ": network checkpoint where a supernet was expected"));
    const std::uint64_t digest = r.u64("spec digest");
    if (digest != spec.digest())
        throw IoError(r.path + ": spec digest mismatch (checkpoint " + hex_digest(digest) +
                      ", expected " + hex_digest(spec.digest()) + ")");
    const auto alen = r.u16("assignment length");
    r.need(alen, "assignment string");
    const std::string astr(reinterpret_cast<const char*>(r.buf.data() + r.pos), alen);
    r.pos += alen;
    LayerAssignment a = LayerAssignment::parse(astr);
    if (is_supernet) {
        const auto n = r.u8("layout group count");
        if (n != spec.n) throw IoError(r.path + ": layout table group count mismatch");
        for (int g = 0; g < spec.n; ++g) {
            const auto c = r.u16("layout capacity");
            if (static_cast<int>(c) != spec.capacity(g))
                throw IoError(r.path + ": layout capacity mismatch in group " + std::to_string(g + 1));
        }
    }
    return a;
}

}  // namespace

Network<float> load_network_checkpoint(const std::string& path, const SearchSpaceSpec& spec) {
    const auto buf = slurp(path);
    Reader r{buf, 0, path};
    LayerAssignment a = read_header(r, spec, false);
    Network<float> net = build_network<float>(spec, a, 0);
    read_blocks(r, net.params, a.groups());
    if (r.pos != buf.size())
        throw IoError(path + ": " + std::to_string(buf.size() - r.pos) +
                      " trailing bytes after the parameter blocks");
    return net;
}

NetParams<float> load_supernet_checkpoint(const std::string& path, const SearchSpaceSpec& spec) {
    const auto buf = slurp(path);
    Reader r{buf, 0, path};
    const LayerAssignment a = read_header(r, spec, true);
    if (a.groups() != spec.capacities())
        throw IoError(path + ": supernet assignment does not match the capacities");
    NetParams<float> params = build_params<float>(spec, spec.capacities(), 0);
    read_blocks(r, params, spec.capacities());
    if (r.pos != buf.size())
        throw IoError(path + ": " + std::to_string(buf.size() - r.pos) +
                      " trailing bytes after the parameter blocks");
    return params;
}

}  // namespace las
