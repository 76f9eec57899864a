#pragma once

#include <string>
#include <vector>

#include "sinkgan/tensor.hpp"

namespace sinkgan {

struct Dataset {
    std::vector<Tensor> images;  // each [side, side, 1], values in [0,1]
    std::vector<int> labels;     // empty when no label file was given
    size_t side = 0;
};

/// Big-endian IDX reader: magic 0x00000803 for images, 0x00000801 for labels.
/// Bytes are scaled to [0,1]. Wrong magic or truncation raises FormatError
/// with the offending byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path = "");

/// Seeded stroke-and-blob images in [0,1]; fully determined by (count, side, seed).
Dataset synth_dataset(size_t count, size_t side, uint64_t seed);

}  // namespace sinkgan
