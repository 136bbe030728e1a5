#ifndef MMCOORD_DB_IO_HPP
#define MMCOORD_DB_IO_HPP

#include <iosfwd>
#include <string>

#include "mmcoord/fingerprint_db.hpp"

namespace mmcoord {

/// Serializes the DB as JSON: matrices row-major (rows = LPs), NULL sectors
/// and NONE MCS as JSON null, checksum as a 16-digit hex string.
std::string serialize_db(const FingerprintDB& db);
/// Throws std::runtime_error on malformed input.
FingerprintDB deserialize_db(const std::string& text);

void save_db(const FingerprintDB& db, const std::string& path);
FingerprintDB load_db(const std::string& path);

std::string checksum_hex(std::uint64_t checksum);

}  // namespace mmcoord

#endif  // MMCOORD_DB_IO_HPP
