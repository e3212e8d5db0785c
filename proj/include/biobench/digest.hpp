#pragma once

#include <string>
#include <string_view>

namespace biobench {

// SHA-256 of a byte string, lowercase hex (64 chars).
std::string sha256_hex(std::string_view bytes);

// SHA-256 of a file's bytes. Memoized per path for the process lifetime;
// recomputing the same path is permitted and yields the identical digest.
// Assumes file contents do not change while the process runs.
std::string file_digest_hex(const std::string& path);

// Whole-file read used for image payloads. Throws MissingFilesError when
// the file cannot be opened.
std::string read_file_bytes(const std::string& path);

// UTC wall-clock timestamp, ISO 8601 with milliseconds ("...Z").
std::string iso_utc_now();

}  // namespace biobench
