#pragma once

#include "liverseg/grid.hpp"

namespace liverseg {

// Trilinear resampling to target_dims. Output spacing is rescaled so the
// physical extent (dims * spacing) is preserved; coordinates are clamped at
// the volume border.
Volume resample(const Volume& vol, Dims3 target_dims);

// Affine map of [level - width/2, level + width/2] onto [-128, 128],
// clamped outside that range.
Volume window_normalize(const Volume& vol, double level, double width);

// Trilinear sample at continuous voxel coordinates (clamped).
float sample_trilinear(const Volume& vol, double x, double y, double z);

}  // namespace liverseg
