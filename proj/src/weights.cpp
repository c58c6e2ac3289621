#include "yawdrive/weights.hpp"

#include "binary_io.hpp"

namespace yawdrive {

namespace {
constexpr char kMagic[4] = {'Y', 'W', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;
} // namespace

void save_weights(const ParameterSet<double>& params, const std::filesystem::path& path)
{
    io::Writer w;
    w.put_bytes(kMagic, 4);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
        w.put_bytes(p.name.data(), p.name.size());
        w.put<std::uint8_t>(static_cast<std::uint8_t>(p.value.rank()));
        for (int d : p.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        w.put_bytes(p.value.ptr(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
    }
    w.save(path);
}

ParameterSet<double> load_weights(const std::filesystem::path& path)
{
    io::Reader r(path);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + " is not a weights file");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw FormatError("unsupported weights version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    ParameterSet<double> params;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(r.get<std::uint16_t>(), '\0');
        r.get_bytes(name.data(), name.size());
        Shape shape(r.get<std::uint8_t>());
        for (int& d : shape) d = static_cast<int>(r.get<std::uint32_t>());
        auto& p = params.add(name, shape);
        r.get_bytes(p.value.ptr(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
    }
    if (r.remaining() != 0) throw CorruptData(path.string() + " has trailing bytes");
    return params;
}

} // namespace yawdrive
