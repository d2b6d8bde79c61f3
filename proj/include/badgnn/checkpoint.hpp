// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Versioned binary container for parameters, config text and memory
 *         snapshots.
 *
 * Layout (little-endian):
 *   "BADGNNCK" u32 version u32 n_records
 *   record: u32 name_len name u8 kind
 *           kind 0 (matrix): u64 rows u64 cols f64[rows*cols]
 *           kind 1 (text):   u64 len bytes
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <badgnn/linalg.hpp>
#include <badgnn/memory.hpp>
#include <badgnn/training.hpp>

namespace badgnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Archive {
  std::map<std::string, Matrix> matrices;
  std::map<std::string, std::string> texts;
};

void write_archive(const Archive &a, const std::filesystem::path &path);
/// Throws IoError on a missing file, SchemaError on a bad magic, version or
/// truncated record.
Archive read_archive(const std::filesystem::path &path);

void store_params(Archive &a, const ModelParams &p);
/// Fills `p` (whose shapes must already be set) by record name.
void load_params(const Archive &a, ModelParams &p);

void store_memory(Archive &a, const NodeMemory &m);
/// Staged messages are not part of a snapshot.
void load_memory(const Archive &a, NodeMemory &m);

} // namespace badgnn
