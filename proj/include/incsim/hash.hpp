#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include "error.hpp"

namespace incsim {

/// 64-bit FNV-1a, used for input fingerprints.
class Fnv1a {
  public:
    Fnv1a &update(std::string_view bytes) noexcept {
        for (char c : bytes) {
            state_ = (state_ ^ static_cast<unsigned char>(c)) * 0x100000001b3ull;
        }
        return *this;
    }
    std::uint64_t value() const noexcept { return state_; }
    std::string hex() const { return to_hex(state_); }

    static std::string to_hex(std::uint64_t v) {
        std::ostringstream out;
        out << std::hex << std::setw(16) << std::setfill('0') << v;
        return out.str();
    }

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::string hash_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return Fnv1a{}.update(buf.str()).hex();
}

} // namespace incsim
