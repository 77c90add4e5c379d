#pragma once

// MetaImage (.mhd + .raw) subset reader/writer.
//
// Supported header keys: NDims (must be 3), DimSize, ElementSpacing,
// ElementType in {MET_UCHAR, MET_SHORT, MET_FLOAT}, ElementByteOrderMSB
// (must be false / absent; data is little-endian), ElementDataFile.
// The raw file stores voxels in the project's fixed layout (x fastest).

#include <string>

#include "liverseg/grid.hpp"

namespace liverseg {

enum class ElementType { UChar, Short, Float };

Volume load_volume(const std::string& path);
void save_volume(const Volume& vol, const std::string& path,
                 ElementType type = ElementType::Float);

// Masks are stored as MET_UCHAR with values {0,1}.
LabelMask load_mask(const std::string& path);
void save_mask(const LabelMask& mask, const std::string& path);

// Probability maps are stored as MET_FLOAT; values are validated to [0,1].
ProbabilityMap load_probability_map(const std::string& path);
void save_probability_map(const ProbabilityMap& map, const std::string& path);

}  // namespace liverseg
