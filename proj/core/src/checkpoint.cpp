#include "medsynth/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "medsynth/error.hpp"

namespace medsynth {
namespace {

constexpr char kMagic[8] = {'M', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

enum class Kind : std::uint32_t { Parameter = 0, Buffer = 1, Optimizer = 2 };

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw DataError("checkpoint truncated");
    }
    std::string data_;
    std::size_t pos_ = 0;
};

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void put_tensor(std::string& out, const NamedTensor& t, Kind kind) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(kind));
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values) put_f32(out, v);
}

const std::string& require(const std::map<std::string, std::string>& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError("checkpoint metadata lacks " + key);
    return it->second;
}

int to_int(const std::string& s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw DataError("bad integer in checkpoint metadata: " + s);
    return v;
}

double to_double(const std::string& s) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw DataError("bad number in checkpoint metadata: " + s);
        return v;
    } catch (const std::logic_error&) {
        throw DataError("bad number in checkpoint metadata: " + s);
    }
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::map<std::string, std::string> meta = ckpt.metadata;
    const NetworkConfig& cfg = ckpt.params.config;
    meta["network.n_classes"] = std::to_string(cfg.n_classes);
    meta["network.base_channels"] = std::to_string(cfg.base_channels);
    meta["network.image_size"] = std::to_string(cfg.image_size);
    meta["network.embed_dim"] = std::to_string(cfg.embed_dim);
    meta["schedule.steps"] = std::to_string(ckpt.schedule.steps);
    meta["schedule.beta_start"] = format_double(ckpt.schedule.beta_start);
    meta["schedule.beta_end"] = format_double(ckpt.schedule.beta_end);

    std::string meta_text;
    for (const auto& [k, v] : meta) {
        if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
            throw InvalidArgument("checkpoint metadata may not contain '=' in keys or newlines: " + k);
        meta_text += k + "=" + v + "\n";
    }

    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
    out += meta_text;
    put_u32(out, static_cast<std::uint32_t>(ckpt.params.tensors.size() + ckpt.params.buffers.size() +
                                            ckpt.optimizer.size()));
    for (const auto& t : ckpt.params.tensors) put_tensor(out, t, Kind::Parameter);
    for (const auto& t : ckpt.params.buffers) put_tensor(out, t, Kind::Buffer);
    for (const auto& t : ckpt.optimizer) put_tensor(out, t, Kind::Optimizer);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot open " + path.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << file.rdbuf();
    Reader in(buf.str());

    if (in.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw DataError("not a checkpoint file");
    if (in.u32() != kVersion) throw DataError("unsupported checkpoint version");
    const std::string meta_text = in.bytes(in.u32());

    Checkpoint ckpt;
    std::istringstream lines(meta_text);
    for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed checkpoint metadata line");
        ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
    }
    NetworkConfig& cfg = ckpt.params.config;
    cfg.n_classes = to_int(require(ckpt.metadata, "network.n_classes"));
    cfg.base_channels = to_int(require(ckpt.metadata, "network.base_channels"));
    cfg.image_size = to_int(require(ckpt.metadata, "network.image_size"));
    cfg.embed_dim = to_int(require(ckpt.metadata, "network.embed_dim"));
    ckpt.schedule = build_schedule(to_int(require(ckpt.metadata, "schedule.steps")),
                                   to_double(require(ckpt.metadata, "schedule.beta_start")),
                                   to_double(require(ckpt.metadata, "schedule.beta_end")));
    for (const char* key : {"network.n_classes", "network.base_channels", "network.image_size", "network.embed_dim",
                            "schedule.steps", "schedule.beta_start", "schedule.beta_end"})
        ckpt.metadata.erase(key);

    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = in.bytes(in.u32());
        const auto kind = static_cast<Kind>(in.u32());
        const std::uint32_t rank = in.u32();
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.shape.push_back(static_cast<int>(in.u32()));
            n *= static_cast<std::size_t>(t.shape.back());
        }
        t.values.resize(n);
        for (double& v : t.values) v = in.f32();
        switch (kind) {
        case Kind::Parameter: ckpt.params.tensors.push_back(std::move(t)); break;
        case Kind::Buffer: ckpt.params.buffers.push_back(std::move(t)); break;
        case Kind::Optimizer: ckpt.optimizer.push_back(std::move(t)); break;
        default: throw DataError("unknown tensor kind in checkpoint");
        }
    }
    if (!in.done()) throw DataError("trailing bytes in checkpoint");

    const auto specs = describe_parameters(cfg);
    const auto buffer_specs = describe_buffers(cfg);
    if (specs.size() != ckpt.params.tensors.size() || buffer_specs.size() != ckpt.params.buffers.size())
        throw DataError("checkpoint tensors do not match the network config");
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (specs[i].name != ckpt.params.tensors[i].name || specs[i].shape != ckpt.params.tensors[i].shape)
            throw DataError("checkpoint tensor " + ckpt.params.tensors[i].name + " does not match the network layout");
    return ckpt;
}

} // namespace medsynth
