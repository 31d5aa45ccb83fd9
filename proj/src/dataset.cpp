#include "las/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "las/rng.hpp"

namespace las {

void Dataset::validate() const {
    if (pixels.size() != count() * sample_size())
        throw IoError("dataset: pixel payload size does not match sample count");
}

std::uint64_t Dataset::digest() const {
    std::uint64_t h = fnv1a64("Dataset");
    h = fnv1a64(shape.data(), shape.size() * sizeof(int), h);
    h = fnv1a64(pixels.data(), pixels.size(), h);
    h = fnv1a64(labels.data(), labels.size() * sizeof(std::uint16_t), h);
    return h;
}

std::uint64_t DatasetSplit::digest() const {
    std::uint64_t h = fnv1a64("DatasetSplit");
    h = mix_u64(h, train.digest());
    h = mix_u64(h, val.digest());
    h = mix_u64(h, calib.digest());
    return h;
}

std::vector<std::uint8_t> synthetic_class_template(std::uint64_t seed, int cls,
                                                   std::array<int, 3> shape) {
    const int c = shape[0], h = shape[1], w = shape[2];
    Rng rng(derive_seed(seed, "template", static_cast<std::uint64_t>(cls)));
    std::vector<std::uint8_t> out(static_cast<std::size_t>(c) * h * w);
    for (int ch = 0; ch < c; ++ch) {
        const double base = rng.uniform(48.0, 208.0);
        struct Blob {
            double cx, cy, sigma, amp;
        };
        Blob blobs[3];
        for (auto& b : blobs) {
            b.cx = rng.uniform(0.0, static_cast<double>(w));
            b.cy = rng.uniform(0.0, static_cast<double>(h));
            b.sigma = rng.uniform(w / 8.0, w / 3.0);
            b.amp = rng.uniform(-96.0, 96.0);
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double v = base;
                for (const auto& b : blobs) {
                    const double dx = x - b.cx, dy = y - b.cy;
                    v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                }
                v = std::max(0.0, std::min(255.0, v));
                out[(static_cast<std::size_t>(ch) * h + y) * w + x] =
                    static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

DatasetSplit generate_synthetic_task(std::uint64_t seed, int num_classes, int samples_per_class,
                                     std::array<int, 3> shape, double noise) {
    if (num_classes < 2) throw std::invalid_argument("synthetic task: need at least two classes");
    if (samples_per_class < 1)
        throw std::invalid_argument("synthetic task: need at least one sample per class");
    if (shape[0] < 1 || shape[1] < 1 || shape[2] < 1)
        throw std::invalid_argument("synthetic task: bad sample shape");
    if (noise < 0.0) throw std::invalid_argument("synthetic task: noise must be >= 0");

    std::vector<std::vector<std::uint8_t>> templates;
    templates.reserve(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c)
        templates.push_back(synthetic_class_template(seed, c, shape));

    Dataset pool;
    pool.shape = shape;
    const std::size_t n = static_cast<std::size_t>(num_classes) * samples_per_class;
    pool.pixels.resize(n * pool.sample_size());
    pool.labels.resize(n);

    // sample-major round robin keeps the positional 80/20 split class-balanced
    std::size_t i = 0;
    for (int s = 0; s < samples_per_class; ++s) {
        for (int c = 0; c < num_classes; ++c, ++i) {
            Rng rng(derive_seed(seed, "sample",
                                (static_cast<std::uint64_t>(c) << 32) |
                                    static_cast<std::uint64_t>(s)));
            std::uint8_t* dst = pool.pixels.data() + i * pool.sample_size();
            const std::uint8_t* tpl = templates[static_cast<std::size_t>(c)].data();
            for (std::size_t p = 0; p < pool.sample_size(); ++p) {
                double v = static_cast<double>(tpl[p]);
                if (noise > 0.0) v += rng.normal(0.0, noise * 255.0);
                v = std::max(0.0, std::min(255.0, v));
                dst[p] = static_cast<std::uint8_t>(std::lround(v));
            }
            pool.labels[i] = static_cast<std::uint16_t>(c);
        }
    }
    return split_pool(pool);
}

namespace {

Dataset take_rows(const Dataset& src, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.shape = src.shape;
    out.pixels.resize(rows.size() * src.sample_size());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(out.pixels.data() + i * src.sample_size(), src.sample(rows[i]),
                    src.sample_size());
        out.labels[i] = src.labels[rows[i]];
    }
    return out;
}

}  // namespace

DatasetSplit split_pool(const Dataset& pool) {
    pool.validate();
    if (pool.count() < 2) throw std::invalid_argument("split: pool needs at least two samples");
    const std::size_t n_train = pool.count() * 4 / 5;
    if (n_train == 0 || n_train == pool.count())
        throw std::invalid_argument("split: pool too small for an 80/20 split");

    std::vector<std::size_t> train_rows(n_train), val_rows(pool.count() - n_train);
    for (std::size_t i = 0; i < n_train; ++i) train_rows[i] = i;
    for (std::size_t i = n_train; i < pool.count(); ++i) val_rows[i - n_train] = i;

    DatasetSplit split;
    split.train = take_rows(pool, train_rows);
    split.val = take_rows(pool, val_rows);

    // calibration subset of the train pool, seeded by the pool content so a
    // written-then-loaded pool reproduces it exactly
    const std::size_t k = std::min<std::size_t>(1000, std::max<std::size_t>(1, n_train / 5));
    Rng rng(derive_seed(pool.digest(), "calibration"));
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    order.resize(k);
    std::sort(order.begin(), order.end());
    split.calib = take_rows(split.train, order);
    return split;
}

Dataset concat_pool(const DatasetSplit& split) {
    split.train.validate();
    split.val.validate();
    if (split.train.shape != split.val.shape)
        throw std::invalid_argument("concat: train and val shapes differ");
    Dataset pool;
    pool.shape = split.train.shape;
    pool.pixels = split.train.pixels;
    pool.pixels.insert(pool.pixels.end(), split.val.pixels.begin(), split.val.pixels.end());
    pool.labels = split.train.labels;
    pool.labels.insert(pool.labels.end(), split.val.labels.begin(), split.val.labels.end());
    return pool;
}

namespace {

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32le(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    write_bytes(f, b, 4);
}

std::uint32_t read_u32le(const std::vector<unsigned char>& buf, std::size_t& pos,
                         const std::string& path) {
    if (pos + 4 > buf.size())
        throw IoError(path + ": truncated (expected 4 more bytes at offset " +
                      std::to_string(pos) + ", have " + std::to_string(buf.size() - pos) + ")");
    std::uint32_t v = static_cast<std::uint32_t>(buf[pos]) |
                      (static_cast<std::uint32_t>(buf[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(buf[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(buf[pos + 3]) << 24);
    pos += 4;
    return v;
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(path + ": cannot open");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

void save_lasd(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(path + ": cannot open for writing");
    write_bytes(f, "LASD", 4);
    const unsigned char version = 1, dtype = 0, ndim = 4;
    write_bytes(f, &version, 1);
    write_bytes(f, &dtype, 1);
    write_bytes(f, &ndim, 1);
    write_u32le(f, static_cast<std::uint32_t>(ds.count()));
    write_u32le(f, static_cast<std::uint32_t>(ds.shape[0]));
    write_u32le(f, static_cast<std::uint32_t>(ds.shape[1]));
    write_u32le(f, static_cast<std::uint32_t>(ds.shape[2]));
    write_bytes(f, ds.pixels.data(), ds.pixels.size());
    write_bytes(f, "LABL", 4);
    write_u32le(f, static_cast<std::uint32_t>(ds.labels.size()));
    for (std::uint16_t l : ds.labels) {
        unsigned char b[2] = {static_cast<unsigned char>(l & 0xff),
                              static_cast<unsigned char>(l >> 8)};
        write_bytes(f, b, 2);
    }
    if (!f) throw IoError(path + ": write failed");
}

Dataset load_lasd(const std::string& path) {
    const auto buf = read_file(path);
    std::size_t pos = 0;
    if (buf.size() < 7 || std::memcmp(buf.data(), "LASD", 4) != 0)
        throw IoError(path + ": bad magic (not a LASD file)");
    pos = 4;
    if (buf[pos] != 1)
        throw IoError(path + ": unsupported LASD version " + std::to_string(buf[pos]));
    ++pos;
    if (buf[pos] != 0)
        throw IoError(path + ": unsupported dtype " + std::to_string(buf[pos]));
    ++pos;
    const int ndim = buf[pos];
    ++pos;
    if (ndim != 4) throw IoError(path + ": expected 4 dims, got " + std::to_string(ndim));
    const std::uint32_t n = read_u32le(buf, pos, path);
    Dataset ds;
    ds.shape[0] = static_cast<int>(read_u32le(buf, pos, path));
    ds.shape[1] = static_cast<int>(read_u32le(buf, pos, path));
    ds.shape[2] = static_cast<int>(read_u32le(buf, pos, path));
    const std::size_t payload = static_cast<std::size_t>(n) * ds.sample_size();
    if (pos + payload > buf.size())
        throw IoError(path + ": truncated pixel payload (expected " + std::to_string(payload) +
                      " bytes, have " + std::to_string(buf.size() - pos) + ")");
    ds.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                     buf.begin() + static_cast<std::ptrdiff_t>(pos + payload));
    pos += payload;
    if (pos + 4 > buf.size() || std::memcmp(buf.data() + pos, "LABL", 4) != 0)
        throw IoError(path + ": missing label block magic");
    pos += 4;
    const std::uint32_t label_count = read_u32le(buf, pos, path);
    if (label_count != n)
        throw IoError(path + ": label count " + std::to_string(label_count) +
                      " does not match sample count " + std::to_string(n));
    if (pos + 2 * static_cast<std::size_t>(label_count) > buf.size())
        throw IoError(path + ": truncated label payload (expected " +
                      std::to_string(2 * static_cast<std::size_t>(label_count)) +
                      " bytes, have " + std::to_string(buf.size() - pos) + ")");
    ds.labels.resize(label_count);
    for (std::uint32_t i = 0; i < label_count; ++i) {
        ds.labels[i] = static_cast<std::uint16_t>(
            buf[pos + 2 * i] | (static_cast<std::uint16_t>(buf[pos + 2 * i + 1]) << 8));
    }
    return ds;
}

void save_csv_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError(path + ": cannot open for writing");
    f << "dims," << ds.shape[0] << ',' << ds.shape[1] << ',' << ds.shape[2] << '\n';
    for (std::size_t i = 0; i < ds.count(); ++i) {
        f << ds.labels[i];
        const std::uint8_t* s = ds.sample(i);
        for (std::size_t p = 0; p < ds.sample_size(); ++p) f << ',' << static_cast<int>(s[p]);
        f << '\n';
    }
    if (!f) throw IoError(path + ": write failed");
}

Dataset load_csv_dataset(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError(path + ": cannot open");
    std::string line;
    if (!std::getline(f, line)) throw IoError(path + ": empty file");
    Dataset ds;
    {
        if (line.rfind("dims,", 0) != 0)
            throw IoError(path + ": first line must be a dims header, got \"" + line + "\"");
        int vals[3];
        std::size_t pos = 5;
        for (int i = 0; i < 3; ++i) {
            std::size_t comma = line.find(',', pos);
            std::string tok = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
            try {
                vals[i] = std::stoi(tok);
            } catch (const std::exception&) {
                throw IoError(path + ": bad dims header value \"" + tok + "\"");
            }
            if (comma == std::string::npos && i != 2)
                throw IoError(path + ": dims header needs three values");
            pos = comma + 1;
        }
        ds.shape = {vals[0], vals[1], vals[2]};
    }
    std::size_t row = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++row;
        std::size_t pos = 0, field = 0;
        long label = -1;
        std::vector<std::uint8_t> px(ds.sample_size());
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            const std::string tok =
                line.substr(pos, comma == std::string::npos ? comma : comma - pos);
            long v = 0;
            try {
                v = std::stol(tok);
            } catch (const std::exception&) {
                throw IoError(path + ": row " + std::to_string(row) + ": bad value \"" + tok + "\"");
            }
            if (field == 0) {
                if (v < 0 || v > 0xffff)
                    throw IoError(path + ": row " + std::to_string(row) + ": label " +
                                  std::to_string(v) + " out of range [0, 65535]");
                label = v;
            } else {
                if (field - 1 >= px.size())
                    throw IoError(path + ": row " + std::to_string(row) + ": too many pixels");
                if (v < 0 || v > 255)
                    throw IoError(path + ": row " + std::to_string(row) + ": pixel value " +
                                  std::to_string(v) + " out of range [0, 255]");
                px[field - 1] = static_cast<std::uint8_t>(v);
            }
            ++field;
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (field != px.size() + 1)
            throw IoError(path + ": row " + std::to_string(row) + ": expected " +
                          std::to_string(px.size() + 1) + " fields, got " + std::to_string(field));
        ds.labels.push_back(static_cast<std::uint16_t>(label));
        ds.pixels.insert(ds.pixels.end(), px.begin(), px.end());
    }
    ds.validate();
    return ds;
}

void save_split(const DatasetSplit& split, const std::string& path, DataFormat fmt) {
    const Dataset pool = concat_pool(split);
    if (fmt == DataFormat::lasd)
        save_lasd(pool, path);
    else
        save_csv_dataset(pool, path);
}

DatasetSplit load_split(const std::string& path, DataFormat fmt, int expected_classes) {
    const Dataset pool = fmt == DataFormat::lasd ? load_lasd(path) : load_csv_dataset(path);
    if (expected_classes >= 0) {
        for (std::size_t i = 0; i < pool.labels.size(); ++i)
            if (pool.labels[i] >= expected_classes)
                throw IoError(path + ": sample " + std::to_string(i) + ": label " +
                              std::to_string(pool.labels[i]) + " out of range [0, " +
                              std::to_string(expected_classes) + ")");
    }
    return split_pool(pool);
}

}  // namespace las
