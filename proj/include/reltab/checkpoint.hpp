#pragma once
#include <string>

#include "reltab/encoder.hpp"

namespace reltab {

/// Writes <dir>/meta.json and <dir>/params.bin. params.bin is a sequence of
/// [u32 name_len][name][u32 ndim][u64 dims...][f64 data...] records,
/// little-endian, in parameter registration order.
void save_checkpoint(const TableEncoderModel& model, const DatabaseSchema& schema,
                     const VocabSet& vocabs, const std::string& dir,
                     uint64_t seed = 0);

/// Rebuilds the model from meta.json config and restores parameters bitwise.
/// Throws VersionMismatchError / SchemaHashMismatchError / IOError.
TableEncoderModel load_checkpoint(const std::string& dir,
                                  const DatabaseSchema& schema,
                                  const VocabSet& vocabs);

constexpr int kCheckpointFormatVersion = 1;

}  // namespace reltab
