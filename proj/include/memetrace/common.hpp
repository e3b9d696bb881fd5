#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace memetrace {

/// Base exception for every recoverable failure raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Contract violation on an argument (bad window, short series, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

inline constexpr std::int64_t kSecondsPerDay = 86400;

/// UTC calendar day index (days since 1970-01-01) of a timestamp.
constexpr std::int64_t utc_day(std::int64_t ts) {
    return ts >= 0 ? ts / kSecondsPerDay : -((-ts + kSecondsPerDay - 1) / kSecondsPerDay);
}

/// "YYYY-MM-DD" for a day index.
std::string format_day(std::int64_t day);

/// 64-bit FNV-1a. Used for config hashes, artifact fingerprints and RNG stream keys.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

/// Parses 16 hex digits (optionally 0x-prefixed). Throws InvalidArgument.
std::uint64_t parse_hex64(std::string_view s);

/// Derives an independent 64-bit seed from a base seed and a key.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

}  // namespace memetrace
