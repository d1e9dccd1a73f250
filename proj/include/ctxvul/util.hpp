#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctxvul {

// --- hashing -------------------------------------------------------------

/// SHA-256 of a byte string, returned as lowercase hex.
std::string sha256_hex(std::string_view data);

/// FNV-1a 64-bit, used where a cheap deterministic hash is enough.
std::uint64_t fnv1a64(std::string_view data);

// --- filesystem ----------------------------------------------------------

std::string read_file(const std::filesystem::path& path);

/// Write via temp file + rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Read a line-delimited JSON file; throws Parse on malformed lines.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Parses the first balanced {...} object in text, ignoring prose around it.
/// Parse errors carry the byte offset where scanning gave up.
nlohmann::json extract_first_json_object(const std::string& text);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

// --- strings -------------------------------------------------------------

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string to_lower(std::string s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Shell-style glob with '*' and '?', matched against the whole string.
bool glob_match(std::string_view pattern, std::string_view text);

std::size_t levenshtein(std::string_view a, std::string_view b);

/// Collapse whitespace runs to single spaces and trim; used for code similarity.
std::string normalize_ws(std::string_view s);

/// Length of the longest common subsequence (O(n*m), fine for function bodies).
std::size_t lcs_length(std::string_view a, std::string_view b);

/// Similarity in [0,1]: LCS length over max length, on whitespace-normalized text.
double text_similarity(std::string_view a, std::string_view b);

/// Round half away from zero to `decimals` places and format with fixed width.
std::string format_fixed(double value, int decimals);

}  // namespace ctxvul
