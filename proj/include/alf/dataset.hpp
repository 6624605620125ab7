#pragma once

#include <string>
#include <vector>

#include "alf/image.hpp"

namespace alf {

// Writes `count` synthetic grayscale PNGs of side `size` into `dir`,
// creating it if needed. The corpus cycles through four texture families:
// Gaussian random fields at three correlation lengths, checkerboards,
// linear gradients, and superposed sinusoids. Deterministic in `seed`.
// Returns the written file paths in index order.
std::vector<std::string> gen_dataset(std::uint64_t seed, int count, int size,
                                     const std::string& dir);

// Sorted PNG/PNM paths in `dir`; throws IoError if the directory is missing.
std::vector<std::string> list_dataset(const std::string& dir);

// Loads every image returned by list_dataset.
std::vector<Image> load_dataset(const std::string& dir);

// Generates the same corpus as gen_dataset without touching the filesystem.
std::vector<Image> make_dataset(std::uint64_t seed, int count, int size);

}  // namespace alf
