#pragma once

// Dense 3D grids with physical spacing. Memory layout is fixed across the
// whole project: x is the fastest-varying axis, i.e.
//   index(x,y,z) = (z * dims[1] + y) * dims[0] + x.

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace liverseg {

using Dims3 = std::array<int, 3>;
using Spacing3 = std::array<double, 3>;

template <typename T>
class Grid3 {
public:
    Grid3() = default;

    Grid3(Dims3 dims, Spacing3 spacing, T fill = T{})
        : dims_(dims), spacing_(spacing)
    {
        for (int a = 0; a < 3; ++a) {
            if (dims_[a] <= 0)
                throw std::invalid_argument("Grid3: dims must be positive");
            if (!(spacing_[a] > 0.0))
                throw std::invalid_argument("Grid3: spacing must be positive");
        }
        data_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], fill);
    }

    const Dims3& dims() const { return dims_; }
    const Spacing3& spacing() const { return spacing_; }
    void set_spacing(const Spacing3& s) { spacing_ = s; }

    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t index(int x, int y, int z) const
    {
        return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
    }

    bool contains(int x, int y, int z) const
    {
        return x >= 0 && x < dims_[0] && y >= 0 && y < dims_[1] && z >= 0 && z < dims_[2];
    }

    T& at(int x, int y, int z) { return data_[index(x, y, z)]; }
    const T& at(int x, int y, int z) const { return data_[index(x, y, z)]; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const Grid3& o) const { return dims_ == o.dims_; }

    // Sample at clamped integer coordinates; used by border-handling code.
    const T& at_clamped(int x, int y, int z) const
    {
        x = x < 0 ? 0 : (x >= dims_[0] ? dims_[0] - 1 : x);
        y = y < 0 ? 0 : (y >= dims_[1] ? dims_[1] - 1 : y);
        z = z < 0 ? 0 : (z >= dims_[2] ? dims_[2] - 1 : z);
        return at(x, y, z);
    }

    double voxel_volume_mm3() const { return spacing_[0] * spacing_[1] * spacing_[2]; }

private:
    Dims3 dims_{0, 0, 0};
    Spacing3 spacing_{1.0, 1.0, 1.0};
    std::vector<T> data_;
};

using Volume = Grid3<float>;
using LabelMask = Grid3<std::uint8_t>;
using ProbabilityMap = Grid3<float>;

inline void require_same_shape(const Dims3& a, const Dims3& b, const std::string& what)
{
    if (a != b)
        throw std::invalid_argument(what + ": grid dimensions mismatch");
}

}  // namespace liverseg
