#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace abridge {

enum class errc {
    io,
    bad_magic,
    truncated,
    bad_metadata,
    writer_busy,
    lock_timeout,
    barrier_timeout,
    already_exists,
    not_found,
    invalid_argument,
    misaligned,
    out_of_bounds,
    overlap,
    wrong_kind,
    missing_source,
    cyclic_reference,
    duplicate_coordinate,
};

constexpr std::string_view to_string(errc code) noexcept
{
    switch (code) {
    case errc::io: return "io";
    case errc::bad_magic: return "bad_magic";
    case errc::truncated: return "truncated";
    case errc::bad_metadata: return "bad_metadata";
    case errc::writer_busy: return "writer_busy";
    case errc::lock_timeout: return "lock_timeout";
    case errc::barrier_timeout: return "barrier_timeout";
    case errc::already_exists: return "already_exists";
    case errc::not_found: return "not_found";
    case errc::invalid_argument: return "invalid_argument";
    case errc::misaligned: return "misaligned";
    case errc::out_of_bounds: return "out_of_bounds";
    case errc::overlap: return "overlap";
    case errc::wrong_kind: return "wrong_kind";
    case errc::missing_source: return "missing_source";
    case errc::cyclic_reference: return "cyclic_reference";
    case errc::duplicate_coordinate: return "duplicate_coordinate";
    }
    return "unknown";
}

class error : public std::runtime_error {
public:
    error(errc code, const std::string &msg)
        : std::runtime_error { std::string { to_string(code) } + ": " + msg }, _code { code }
    {}

    errc code() const noexcept { return _code; }

    // bad_magic, truncated and bad_metadata all mean the file cannot be trusted
    bool corruption() const noexcept
    {
        return _code == errc::bad_magic || _code == errc::truncated || _code == errc::bad_metadata;
    }

private:
    errc _code;
};

} // namespace abridge
