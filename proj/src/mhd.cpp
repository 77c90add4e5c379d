#include "liverseg/mhd.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace liverseg {
namespace {

namespace fs = std::filesystem;

struct Header {
    Dims3 dims{0, 0, 0};
    Spacing3 spacing{1.0, 1.0, 1.0};
    ElementType type = ElementType::Float;
    std::string data_file;
};

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    return s.substr(b, e - b + 1);
}

Header parse_header(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open header: " + path);

    Header h;
    bool have_dims = false, have_data_file = false;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "NDims") {
            if (val != "3")
                throw std::runtime_error(path + ": NDims must be 3, got " + val);
        } else if (key == "DimSize") {
            std::istringstream ss(val);
            if (!(ss >> h.dims[0] >> h.dims[1] >> h.dims[2]))
                throw std::runtime_error(path + ": malformed DimSize");
            have_dims = true;
        } else if (key == "ElementSpacing") {
            std::istringstream ss(val);
            if (!(ss >> h.spacing[0] >> h.spacing[1] >> h.spacing[2]))
                throw std::runtime_error(path + ": malformed ElementSpacing");
        } else if (key == "ElementType") {
            if (val == "MET_UCHAR")
                h.type = ElementType::UChar;
            else if (val == "MET_SHORT")
                h.type = ElementType::Short;
            else if (val == "MET_FLOAT")
                h.type = ElementType::Float;
            else
                throw std::runtime_error(path + ": unsupported ElementType " + val);
        } else if (key == "ElementByteOrderMSB") {
            if (val == "True" || val == "true" || val == "1")
                throw std::runtime_error(path + ": big-endian data not supported");
        } else if (key == "ElementDataFile") {
            h.data_file = val;
            have_data_file = true;
        }
    }
    if (!have_dims)
        throw std::runtime_error(path + ": missing DimSize");
    if (!have_data_file)
        throw std::runtime_error(path + ": missing ElementDataFile");
    for (int a = 0; a < 3; ++a)
        if (h.dims[a] <= 0 || !(h.spacing[a] > 0.0))
            throw std::runtime_error(path + ": non-positive DimSize or ElementSpacing");
    return h;
}

std::size_t element_size(ElementType t)
{
    switch (t) {
    case ElementType::UChar: return 1;
    case ElementType::Short: return 2;
    case ElementType::Float: return 4;
    }
    return 0;
}

std::string element_name(ElementType t)
{
    switch (t) {
    case ElementType::UChar: return "MET_UCHAR";
    case ElementType::Short: return "MET_SHORT";
    case ElementType::Float: return "MET_FLOAT";
    }
    return "";
}

std::string resolve_data_path(const std::string& header_path, const std::string& data_file)
{
    fs::path p(data_file);
    if (p.is_absolute())
        return p.string();
    return (fs::path(header_path).parent_path() / p).string();
}

std::vector<char> read_raw(const std::string& path, std::size_t expected_bytes)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open data file: " + path);
    in.seekg(0, std::ios::end);
    auto actual = static_cast<std::size_t>(in.tellg());
    if (actual != expected_bytes)
        throw std::runtime_error(path + ": data file length mismatch (expected " +
                                 std::to_string(expected_bytes) + " bytes, got " +
                                 std::to_string(actual) + ")");
    in.seekg(0, std::ios::beg);
    std::vector<char> buf(expected_bytes);
    in.read(buf.data(), static_cast<std::streamsize>(expected_bytes));
    if (!in)
        throw std::runtime_error(path + ": read failure");
    return buf;
}

template <typename Raw, typename T>
void convert(const std::vector<char>& buf, std::vector<T>& out)
{
    const auto* src = reinterpret_cast<const Raw*>(buf.data());
    std::size_t n = buf.size() / sizeof(Raw);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<T>(src[i]);
}

template <typename T>
Grid3<T> load_grid(const std::string& path, ElementType* loaded_type = nullptr)
{
    Header h = parse_header(path);
    std::size_t n = static_cast<std::size_t>(h.dims[0]) * h.dims[1] * h.dims[2];
    auto buf = read_raw(resolve_data_path(path, h.data_file), n * element_size(h.type));

    Grid3<T> grid(h.dims, h.spacing);
    switch (h.type) {
    case ElementType::UChar: convert<std::uint8_t>(buf, grid.data()); break;
    case ElementType::Short: convert<std::int16_t>(buf, grid.data()); break;
    case ElementType::Float: convert<float>(buf, grid.data()); break;
    }
    if (loaded_type)
        *loaded_type = h.type;
    return grid;
}

template <typename T>
void write_grid(const Grid3<T>& grid, const std::string& path, ElementType type)
{
    if (grid.empty())
        throw std::invalid_argument("save: empty grid");

    fs::path header_path(path);
    fs::path raw_path = header_path;
    raw_path.replace_extension(".raw");

    std::ofstream hdr(header_path);
    if (!hdr)
        throw std::runtime_error("cannot write header: " + path);
    hdr << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "DimSize = " << grid.dims()[0] << ' ' << grid.dims()[1] << ' ' << grid.dims()[2] << '\n'
        << "ElementSpacing = " << grid.spacing()[0] << ' ' << grid.spacing()[1] << ' '
        << grid.spacing()[2] << '\n'
        << "ElementType = " << element_name(type) << '\n'
        << "ElementByteOrderMSB = False\n"
        << "ElementDataFile = " << raw_path.filename().string() << '\n';
    if (!hdr)
        throw std::runtime_error("header write failure: " + path);

    std::ofstream raw(raw_path, std::ios::binary);
    if (!raw)
        throw std::runtime_error("cannot write data file: " + raw_path.string());

    auto write_as = [&](auto tag) {
        using Raw = decltype(tag);
        std::vector<Raw> out(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
            out[i] = static_cast<Raw>(grid[i]);
        raw.write(reinterpret_cast<const char*>(out.data()),
                  static_cast<std::streamsize>(out.size() * sizeof(Raw)));
    };
    switch (type) {
    case ElementType::UChar: write_as(std::uint8_t{}); break;
    case ElementType::Short: write_as(std::int16_t{}); break;
    case ElementType::Float: write_as(float{}); break;
    }
    if (!raw)
        throw std::runtime_error("data write failure: " + raw_path.string());
}

}  // namespace

Volume load_volume(const std::string& path)
{
    return load_grid<float>(path);
}

void save_volume(const Volume& vol, const std::string& path, ElementType type)
{
    write_grid(vol, path, type);
}

LabelMask load_mask(const std::string& path)
{
    auto mask = load_grid<std::uint8_t>(path);
    for (auto v : mask.data())
        if (v > 1)
            throw std::runtime_error(path + ": mask values must be 0 or 1");
    return mask;
}

void save_mask(const LabelMask& mask, const std::string& path)
{
    for (auto v : mask.data())
        if (v > 1)
            throw std::invalid_argument("save_mask: values must be 0 or 1");
    write_grid(mask, path, ElementType::UChar);
}

ProbabilityMap load_probability_map(const std::string& path)
{
    auto map = load_grid<float>(path);
    for (auto v : map.data())
        if (!(v >= 0.0f && v <= 1.0f))
            throw std::runtime_error(path + ": probability values must lie in [0,1]");
    return map;
}

void save_probability_map(const ProbabilityMap& map, const std::string& path)
{
    for (auto v : map.data())
        if (!(v >= 0.0f && v <= 1.0f))
            throw std::invalid_argument("save_probability_map: values must lie in [0,1]");
    write_grid(map, path, ElementType::Float);
}

}  // namespace liverseg
