#include "sinkgan/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

namespace sinkgan {

namespace {

uint32_t read_be32(std::ifstream& f, const std::string& path, size_t offset) {
    unsigned char buf[4];
    f.read(reinterpret_cast<char*>(buf), 4);
    if (f.gcount() != 4) {
        throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
    }
    return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
           uint32_t(buf[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream f(images_path, std::ios::binary);
    if (!f) throw FormatError("cannot open IDX image file: " + images_path);

    const uint32_t magic = read_be32(f, images_path, 0);
    if (magic != 0x00000803u) {
        throw FormatError(images_path + ": bad image magic at byte offset 0 (expected 0x00000803)");
    }
    const uint32_t count = read_be32(f, images_path, 4);
    const uint32_t rows = read_be32(f, images_path, 8);
    const uint32_t cols = read_be32(f, images_path, 12);
    if (rows != cols) {
        throw FormatError(images_path + ": non-square images (" + std::to_string(rows) + "x" +
                          std::to_string(cols) + ") are not supported");
    }

    Dataset ds;
    ds.side = rows;
    ds.images.reserve(count);
    std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
    for (uint32_t i = 0; i < count; ++i) {
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (f.gcount() != static_cast<std::streamsize>(buf.size())) {
            throw FormatError(images_path + ": truncated at byte offset " +
                              std::to_string(16 + static_cast<size_t>(i) * buf.size()));
        }
        Tensor img({rows, cols, 1});
        for (size_t p = 0; p < buf.size(); ++p) img[p] = static_cast<double>(buf[p]) / 255.0;
        ds.images.push_back(std::move(img));
    }

    if (!labels_path.empty()) {
        std::ifstream lf(labels_path, std::ios::binary);
        if (!lf) throw FormatError("cannot open IDX label file: " + labels_path);
        const uint32_t lmagic = read_be32(lf, labels_path, 0);
        if (lmagic != 0x00000801u) {
            throw FormatError(labels_path +
                              ": bad label magic at byte offset 0 (expected 0x00000801)");
        }
        const uint32_t lcount = read_be32(lf, labels_path, 4);
        if (lcount != count) {
            throw FormatError(labels_path + ": label count " + std::to_string(lcount) +
                              " does not match image count " + std::to_string(count));
        }
        ds.labels.resize(lcount);
        for (uint32_t i = 0; i < lcount; ++i) {
            char c;
            lf.read(&c, 1);
            if (lf.gcount() != 1) {
                throw FormatError(labels_path + ": truncated at byte offset " +
                                  std::to_string(8 + i));
            }
            ds.labels[i] = static_cast<unsigned char>(c);
        }
    }
    return ds;
}

namespace {

struct Segment {
    double x0, y0, x1, y1;
};

double segment_distance(double px, double py, const Segment& s) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    const double cx = s.x0 + t * dx, cy = s.y0 + t * dy;
    return std::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
}

}  // namespace

Dataset synth_dataset(size_t count, size_t side, uint64_t seed) {
    if (side < 8) throw ContractError("synthetic images need side >= 8");
    Dataset ds;
    ds.side = side;
    ds.images.reserve(count);
    const double stroke_sigma = static_cast<double>(side) / 14.0;
    for (size_t idx = 0; idx < count; ++idx) {
        Rng rng(mix_seed(seed, idx));
        const size_t n_strokes = 1 + rng.uniform_index(2);
        std::vector<Segment> segs;
        for (size_t s = 0; s < n_strokes; ++s) {
            Segment seg;
            seg.x0 = rng.uniform(0.1, 0.9) * side;
            seg.y0 = rng.uniform(0.1, 0.9) * side;
            const double ang = rng.uniform(0.0, 2.0 * M_PI);
            const double len = rng.uniform(0.35, 0.8) * side;
            seg.x1 = std::min(static_cast<double>(side) - 1.0,
                              std::max(0.0, seg.x0 + len * std::cos(ang)));
            seg.y1 = std::min(static_cast<double>(side) - 1.0,
                              std::max(0.0, seg.y0 + len * std::sin(ang)));
            segs.push_back(seg);
        }
        const double bx = rng.uniform(0.2, 0.8) * side;
        const double by = rng.uniform(0.2, 0.8) * side;
        const double bsig = rng.uniform(0.06, 0.14) * side;

        Tensor img({side, side, 1});
        for (size_t i = 0; i < side; ++i) {
            for (size_t j = 0; j < side; ++j) {
                double v = 0.0;
                for (const Segment& s : segs) {
                    const double d = segment_distance(static_cast<double>(j),
                                                      static_cast<double>(i), s);
                    v = std::max(v, std::exp(-0.5 * d * d / (stroke_sigma * stroke_sigma)));
                }
                const double ddx = static_cast<double>(j) - bx;
                const double ddy = static_cast<double>(i) - by;
                v = std::max(v, 0.8 * std::exp(-0.5 * (ddx * ddx + ddy * ddy) / (bsig * bsig)));
                img.at(i, j, 0) = std::min(1.0, v);
            }
        }
        ds.images.push_back(std::move(img));
    }
    return ds;
}

}  // namespace sinkgan
