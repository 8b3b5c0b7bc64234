#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "array.hpp"
#include "container.hpp"

namespace abridge {

// Version history of `/<name>` inside one container:
//   /<name>                  latest version, always fully stored
//   /PreviousVersions/V<k>   every older version k (stored or virtual)
//   /VersionData/V<k>        chunks superseded when version k+1 was saved
// by chunk mosaic. Older versions are plain datasets; any reader of the
// container format can open them without this module.

std::string version_label(std::uint64_t k);
std::string previous_version_path(std::uint64_t k);
std::string version_data_path(std::uint64_t k);

// Chunk coordinates (ascending linear index) whose cells in data differ
// bitwise from the current contents of latest_path. Unwritten chunks compare
// as fill.
std::vector<extents> detect_changed_chunks(const container &c, const std::string &latest_path, const dense_view &data);

// Both return the new version number. The first save of a name creates V0
// with the given chunk shape; later saves keep the existing chunk shape and
// fill, and require the same dtype and shape.
std::uint64_t save_version_full_copy(container &c, const std::string &name, const dense_view &data,
                                     const extents &chunk_shape, const scalar &fill = 0.0);
std::uint64_t save_version_chunk_mosaic(container &c, const std::string &name, const dense_view &data,
                                        const extents &chunk_shape, const scalar &fill = 0.0);

// [0, 1, ..., latest]; throws errc::not_found for an unknown name.
std::vector<std::uint64_t> list_versions(const container &c, const std::string &name);
std::uint64_t latest_version(const container &c, const std::string &name);

// Dataset holding version k: `/<name>` for the latest, else the
// PreviousVersions entry.
std::string version_path(const container &c, const std::string &name, std::uint64_t k);

// Whole-array cells of version k through the ordinary region read.
std::vector<std::byte> read_version(const container &c, const std::string &name, std::uint64_t k);

} // namespace abridge
