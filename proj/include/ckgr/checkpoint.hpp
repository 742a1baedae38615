#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ckgr/trainer.hpp"

namespace ckgr {

// Binary model file, all integers and floats little-endian:
//
//   "CKGR" 0x01
//   u32 N_u, M_u, N_i, M_i, d, k, L, d_0 .. d_L, weight_sets (1 = shared W1, 2 = W1 and W2)
//   f64 blocks: entity_u, relation_u, projections_u, layers_u, then the same for the item side
//   u64 metadata length, UTF-8 JSON metadata (config echo, seed, epoch, hyperparameters,
//   vocabularies, alignments)
inline constexpr char kCheckpointMagic[4] = {'C', 'K', 'G', 'R'};
inline constexpr std::uint8_t kCheckpointVersion = 0x01;

struct ModelShape {
    std::size_t entities_u = 0;
    std::size_t relations_u = 0;
    std::size_t entities_i = 0;
    std::size_t relations_i = 0;
    std::size_t d = 0;
    std::size_t k = 0;
    std::vector<std::size_t> dims;  // d_0 .. d_L
    bool shared_weights = true;

    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

ModelShape shape_of(const ModelState& state);

// Throws DimensionConflict naming the first field of `actual` that disagrees with `expected`.
// Zero counts and an empty dims list in `expected` are not checked.
void check_shape(const ModelShape& expected, const ModelShape& actual);

std::vector<std::uint8_t> encode_checkpoint(const ModelState& state);
// Throws FormatError with the byte offset on bad magic/version or truncation.
ModelState decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelShape* expected = nullptr);

void checkpoint_save(const ModelState& state, const std::filesystem::path& path);
ModelState checkpoint_load(const std::filesystem::path& path, const ModelShape* expected = nullptr);

}  // namespace ckgr
