#pragma once

// Little-endian byte packing shared by the record and weight files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "yawdrive/errors.hpp"

namespace yawdrive::io {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

class Writer
{
  public:
    template <typename T>
    void put(T v)
    {
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const char*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }

    void save(const std::filesystem::path& path) const
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw WriteError("cannot open " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw WriteError("failed writing " + path.string());
    }

    std::vector<char> bytes;
};

class Reader
{
  public:
    explicit Reader(const std::filesystem::path& path) : name_(path.string())
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open " + name_);
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    template <typename T>
    T get()
    {
        T v;
        get_bytes(&v, sizeof(T));
        return v;
    }
    void get_bytes(void* dst, std::size_t n)
    {
        if (pos_ + n > bytes_.size()) throw CorruptData(name_ + " is truncated");
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    const std::string& name() const { return name_; }

  private:
    std::string name_;
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

} // namespace yawdrive::io
