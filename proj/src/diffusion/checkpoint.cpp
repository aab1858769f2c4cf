#include "vton/diffusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace vton::diffusion {

namespace {

constexpr char kMagic[8] = {'V', 'T', 'O', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kDtypeF64 = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_bytes(std::istream& in, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw CheckpointError("checkpoint truncated");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}
std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }

std::string get_string(std::istream& in, std::uint32_t n) {
    if (n > (1u << 20)) throw CheckpointError("checkpoint string too long");
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw CheckpointError("checkpoint truncated");
    return s;
}

nlohmann::json config_json(const UNetConfig& c) {
    return {{"latent_channels", c.latent_channels}, {"base_channels", c.base_channels},
            {"attention_width", c.attention_width}, {"heads", c.heads},
            {"text_dim", c.text_dim},               {"time_dim", c.time_dim},
            {"zero_init_output", c.zero_init_output}};
}

void write_net(std::ostream& out, const std::string& prefix, const UNetToy& net) {
    for (const auto& p : net.parameters()) {
        const std::string name = prefix + p.name;
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Tensor& t = p.var.value();
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        out.put(static_cast<char>(kDtypeF64));
        for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

}  // namespace

ModelPair make_models(const UNetConfig& config, std::uint64_t seed) {
    return {std::make_unique<UNetToy>(UNetRole::main, config, seed),
            std::make_unique<UNetToy>(UNetRole::reference, config, seed + 1)};
}

void save_checkpoint(const std::filesystem::path& path, const UNetToy& main, const UNetToy& reference) {
    if (!(main.config() == reference.config())) throw CheckpointError("main and reference configs differ");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kCheckpointVersion);
    const std::string cfg = config_json(main.config()).dump();
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put_u32(out, static_cast<std::uint32_t>(main.parameters().size() + reference.parameters().size()));
    write_net(out, "main.", main);
    write_net(out, "reference.", reference);
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

ModelPair load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile("missing checkpoint: " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    UNetConfig cfg;
    try {
        const auto j = nlohmann::json::parse(get_string(in, get_u32(in)));
        cfg.latent_channels = j.at("latent_channels");
        cfg.base_channels = j.at("base_channels");
        cfg.attention_width = j.at("attention_width");
        cfg.heads = j.at("heads");
        cfg.text_dim = j.at("text_dim");
        cfg.time_dim = j.at("time_dim");
        cfg.zero_init_output = j.value("zero_init_output", true);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
    }

    std::map<std::string, Tensor> tensors;
    const std::uint32_t count = get_u32(in);
    for (std::uint32_t k = 0; k < count; ++k) {
        std::string name = get_string(in, get_u32(in));
        const std::uint32_t rank = get_u32(in);
        if (rank > 8) throw CheckpointError("tensor " + name + " has implausible rank");
        std::vector<int> shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<int>(get_u32(in)));
            numel *= static_cast<std::size_t>(shape.back());
        }
        if (get_bytes(in, 1) != kDtypeF64) throw CheckpointError("tensor " + name + " has unsupported dtype");
        if (numel > (1u << 24)) throw CheckpointError("tensor " + name + " too large");
        std::vector<double> data(numel);
        for (double& v : data) v = std::bit_cast<double>(get_bytes(in, 8));
        tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }

    ModelPair models = make_models(cfg, 0);
    for (auto [prefix, net] : {std::pair{"main.", models.main.get()}, std::pair{"reference.", models.reference.get()}}) {
        for (auto& p : net->parameters()) {
            const auto it = tensors.find(prefix + p.name);
            if (it == tensors.end()) throw CheckpointError("checkpoint lacks tensor " + std::string(prefix) + p.name);
            if (it->second.shape() != p.var.value().shape())
                throw CheckpointError("tensor " + it->first + " has shape " + it->second.shape_string() + ", expected " +
                                      p.var.value().shape_string());
            p.var.mutable_value() = it->second;
            tensors.erase(it);
        }
    }
    if (!tensors.empty()) throw CheckpointError("checkpoint has unexpected tensor " + tensors.begin()->first);
    return models;
}

}  // namespace vton::diffusion
