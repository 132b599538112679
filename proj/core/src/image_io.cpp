#include "rs2/image_io.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "rs2/common.hpp"

namespace rs2 {

namespace {

std::uint8_t to_byte(double v) {
    const double scaled = std::round(v * 255.0);
    if (scaled <= 0.0) return 0;
    if (scaled >= 255.0) return 255;
    return static_cast<std::uint8_t>(scaled);
}

// Reads one whitespace-delimited unsigned integer from a PNM header.
std::size_t read_header_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n') c = in.get();
    require(c >= '0' && c <= '9', "pnm: malformed header in ", path);
    std::size_t v = 0;
    while (c >= '0' && c <= '9') {
        v = v * 10 + static_cast<std::size_t>(c - '0');
        c = in.get();
    }
    require(c == ' ' || c == '\t' || c == '\r' || c == '\n',
            "pnm: header not whitespace-terminated in ", path);
    return v;
}

std::vector<char> read_payload(std::istream& in, std::size_t n, const std::string& path) {
    std::vector<char> buf(n);
    in.read(buf.data(), static_cast<std::streamsize>(n));
    require(static_cast<std::size_t>(in.gcount()) == n, "pnm: truncated pixel data in ", path);
    return buf;
}

} // namespace

void write_ppm(const std::string& path, const Tensor<double>& image) {
    require(image.rank() == 3 && image.extent(2) == 3, "ppm: image must be [H,W,3], got ",
            image.shape_str());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("ppm: cannot write ", path);
    out << "P6\n" << image.extent(1) << " " << image.extent(0) << "\n255\n";
    std::vector<char> bytes;
    bytes.reserve(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        bytes.push_back(static_cast<char>(to_byte(image[i])));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("ppm: write failed for ", path);
}

Tensor<double> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("ppm: cannot open ", path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    require(m0 == 'P' && m1 == '6', "ppm: ", path, " is not binary P6");
    const std::size_t w = read_header_int(in, path);
    const std::size_t h = read_header_int(in, path);
    const std::size_t maxval = read_header_int(in, path);
    require(maxval == 255, "ppm: ", path, " maxval must be 255");
    auto buf = read_payload(in, h * w * 3, path);
    Tensor<double> image({h, w, 3});
    for (std::size_t i = 0; i < image.size(); ++i)
        image[i] = static_cast<double>(static_cast<std::uint8_t>(buf[i])) / 255.0;
    return image;
}

void write_pgm(const std::string& path, const Mask& mask) {
    require(mask.h > 0 && mask.w > 0 && mask.v.size() == mask.h * mask.w,
            "pgm: mask extents inconsistent");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("pgm: cannot write ", path);
    out << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    std::vector<char> bytes;
    bytes.reserve(mask.v.size());
    for (std::uint8_t x : mask.v) {
        require(x == 0 || x == 1, "pgm: mask must be binary, found ", static_cast<int>(x));
        bytes.push_back(static_cast<char>(x ? 255 : 0));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("pgm: write failed for ", path);
}

Mask read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("pgm: cannot open ", path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    require(m0 == 'P' && m1 == '5', "pgm: ", path, " is not binary P5");
    const std::size_t w = read_header_int(in, path);
    const std::size_t h = read_header_int(in, path);
    const std::size_t maxval = read_header_int(in, path);
    require(maxval == 255, "pgm: ", path, " maxval must be 255");
    auto buf = read_payload(in, h * w, path);
    Mask mask(h, w);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const std::uint8_t b = static_cast<std::uint8_t>(buf[i]);
        require(b == 0 || b == 255, "pgm: ", path, " contains non-binary value ",
                static_cast<int>(b));
        mask.v[i] = b ? 1 : 0;
    }
    return mask;
}

} // namespace rs2
