#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "swan/cube.hpp"
#include "swan/error.hpp"
#include "swan/matrix.hpp"
#include "swan/model.hpp"
#include "swan/unmixer.hpp"

namespace swan::io {

// ---------------------------------------------------------------------------
// Little-endian primitives

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

/// Bounds-checked cursor over a byte buffer.
class Reader {
public:
    explicit Reader(std::string_view bytes, ErrorCode short_code = ErrorCode::TruncatedPayload)
        : bytes_(bytes), short_(short_code) {}

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

    std::string_view take(std::size_t n) {
        if (remaining() < n)
            throw Error(short_, "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                                    ", have " + std::to_string(remaining()));
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t uint(std::size_t width) {
        const auto s = take(width);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
    std::uint64_t u64() { return uint(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
    ErrorCode short_;
};

} // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// ---------------------------------------------------------------------------
// Cube files: "SWANCUBE1" | u32 rows | u32 cols | u32 bands | u8 dtype | u8 interleave | u8 endian
// followed by a band-sequential little-endian f32 payload.

inline constexpr std::string_view kCubeMagic = "SWANCUBE1";
inline constexpr std::size_t kCubeHeaderBytes = 9 + 3 * 4 + 3;
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kInterleaveBsq = 0;
inline constexpr std::uint8_t kLittleEndian = 0;

inline std::uint64_t cube_payload_bytes(std::uint64_t rows, std::uint64_t cols, std::uint64_t bands) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 4;
    if (rows != 0 && cols > limit / rows) throw Error(ErrorCode::DimOverflow, "rows*cols overflows");
    const std::uint64_t rc = rows * cols;
    if (rc != 0 && bands > limit / rc) throw Error(ErrorCode::DimOverflow, "rows*cols*bands overflows");
    return rc * bands * 4;
}

inline std::string encode_cube(const SpectralCube& cube) {
    constexpr auto max32 = std::numeric_limits<std::uint32_t>::max();
    if (cube.rows > max32 || cube.cols > max32 || cube.bands > max32)
        throw Error(ErrorCode::DimOverflow, "cube dimension exceeds 32 bits");
    std::string out(kCubeMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(cube.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(cube.cols));
    detail::put_u32(out, static_cast<std::uint32_t>(cube.bands));
    out.push_back(static_cast<char>(kDtypeF32));
    out.push_back(static_cast<char>(kInterleaveBsq));
    out.push_back(static_cast<char>(kLittleEndian));
    out.reserve(out.size() + cube_payload_bytes(cube.rows, cube.cols, cube.bands));
    for (std::size_t l = 0; l < cube.bands; ++l)
        for (std::size_t p = 0; p < cube.pixel_count(); ++p)
            detail::put_f32(out, static_cast<float>(cube.data(p, l)));
    return out;
}

inline SpectralCube decode_cube(std::string_view bytes) {
    if (bytes.size() < kCubeMagic.size() || bytes.substr(0, kCubeMagic.size()) != kCubeMagic)
        throw Error(ErrorCode::BadMagic, "not a SWANCUBE1 file");
    detail::Reader rd(bytes.substr(kCubeMagic.size()), ErrorCode::BadHeader);
    const std::uint32_t rows = rd.u32(), cols = rd.u32(), bands = rd.u32();
    const std::uint8_t dtype = rd.u8(), interleave = rd.u8(), endian = rd.u8();
    if (dtype != kDtypeF32 || interleave != kInterleaveBsq || endian != kLittleEndian)
        throw Error(ErrorCode::BadHeader, "unsupported dtype/interleave/endianness tag");
    const std::uint64_t payload = cube_payload_bytes(rows, cols, bands);
    const std::uint64_t have = bytes.size() - kCubeHeaderBytes;
    if (have != payload)
        throw Error(ErrorCode::TruncatedPayload, "payload is " + std::to_string(have) + " bytes, header implies " +
                                                     std::to_string(payload));
    SpectralCube cube(rows, cols, bands);
    detail::Reader body(bytes.substr(kCubeHeaderBytes));
    for (std::size_t l = 0; l < bands; ++l)
        for (std::size_t p = 0; p < cube.pixel_count(); ++p) cube.data(p, l) = static_cast<double>(body.f32());
    return cube;
}

inline void write_cube(const std::filesystem::path& path, const SpectralCube& cube) {
    write_file(path, encode_cube(cube));
}
inline SpectralCube read_cube(const std::filesystem::path& path) { return decode_cube(read_file(path)); }

// ---------------------------------------------------------------------------
// key=value configuration text

using KeyValues = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
inline KeyValues parse_key_values(std::string_view text) {
    KeyValues kv;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline std::string config_to_text(const TrainConfig& c) {
    std::ostringstream os;
    os << "batch=" << c.batch_size << '\n'
       << "epochs=" << c.epochs << '\n'
       << "lambda1=" << format_double(c.lambda1) << '\n'
       << "lambda2=" << format_double(c.lambda2) << '\n'
       << "lr=" << format_double(c.learning_rate) << '\n'
       << "dropout=" << format_double(c.dropout) << '\n'
       << "sigma=" << format_double(c.noise_sigma) << '\n'
       << "train_fraction=" << format_double(c.train_fraction) << '\n'
       << "seed=" << c.seed << '\n';
    return os.str();
}

/// Applies recognised keys onto `c`; unknown keys are an error.
/// Keys "widths" and "threads" are accepted and left to the caller.
inline void apply_config(TrainConfig& c, const KeyValues& kv) {
    const auto num = [](const std::string& key, const std::string& v) {
        const auto d = parse_double(v);
        if (!d) throw Error(ErrorCode::InvalidConfig, "value for '" + key + "' is not a number: " + v);
        return *d;
    };
    const auto count = [&](const std::string& key, const std::string& v) {
        const double d = num(key, v);
        if (d < 0 || d != std::floor(d)) throw Error(ErrorCode::InvalidConfig, "'" + key + "' must be a whole number");
        return static_cast<std::uint64_t>(d);
    };
    for (const auto& [k, v] : kv) {
        if (k == "batch") c.batch_size = count(k, v);
        else if (k == "epochs") c.epochs = count(k, v);
        else if (k == "lambda1") c.lambda1 = num(k, v);
        else if (k == "lambda2") c.lambda2 = num(k, v);
        else if (k == "lr") c.learning_rate = num(k, v);
        else if (k == "dropout") c.dropout = num(k, v);
        else if (k == "sigma") c.noise_sigma = num(k, v);
        else if (k == "train_fraction") c.train_fraction = num(k, v);
        else if (k == "seed") c.seed = count(k, v);
        else if (k == "widths" || k == "threads") continue;
        else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + k + "'");
    }
}

// ---------------------------------------------------------------------------
// Model files: "SWANMODEL1" | u32 K | u32 e | 6 x u32 widths | f64 dropout | u64 seed
// | u32 config length + config text | per layer: u32 out | u32 in | u8 has_bias | f64 weights | f64 bias

inline constexpr std::string_view kModelMagic = "SWANMODEL1";

struct ModelFile {
    SwanModel model;
    TrainConfig config;
    std::string config_text;
};

inline std::string encode_model(const SwanModel& m, const TrainConfig& config) {
    std::string out(kModelMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(m.arch.coefficients));
    detail::put_u32(out, static_cast<std::uint32_t>(m.arch.endmembers));
    for (auto w : m.arch.widths.encoder) detail::put_u32(out, static_cast<std::uint32_t>(w));
    for (auto w : m.arch.widths.forward) detail::put_u32(out, static_cast<std::uint32_t>(w));
    detail::put_f64(out, m.arch.dropout);
    detail::put_u64(out, config.seed);
    const std::string text = config_to_text(config);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (const auto& layer : m.layers) {
        detail::put_u32(out, static_cast<std::uint32_t>(layer.out_dim()));
        detail::put_u32(out, static_cast<std::uint32_t>(layer.in_dim()));
        out.push_back(layer.has_bias ? 1 : 0);
        for (double w : layer.weights.flat()) detail::put_f64(out, w);
        if (layer.has_bias)
            for (double b : layer.bias) detail::put_f64(out, b);
    }
    return out;
}

inline ModelFile decode_model(std::string_view bytes) {
    if (bytes.substr(0, kModelMagic.size()) != kModelMagic) throw Error(ErrorCode::BadMagic, "not a SWANMODEL1 file");
    detail::Reader rd(bytes.substr(kModelMagic.size()));
    const std::size_t K = rd.u32(), e = rd.u32();
    LayerWidths widths;
    for (auto& w : widths.encoder) w = rd.u32();
    for (auto& w : widths.forward) w = rd.u32();
    const double dropout = rd.f64();
    const std::uint64_t seed = rd.u64();
    const std::size_t text_len = rd.u32();
    ModelFile mf;
    mf.config_text = std::string(rd.take(text_len));
    apply_config(mf.config, parse_key_values(mf.config_text));
    if (mf.config.seed != seed) throw Error(ErrorCode::BadHeader, "seed field disagrees with the config text");

    try {
        mf.model = build(K, e, widths, 0, dropout);
    } catch (const Error& err) {
        throw Error(ErrorCode::BadHeader, std::string("architecture: ") + err.what());
    }
    for (auto& layer : mf.model.layers) {
        const std::size_t out_dim = rd.u32(), in_dim = rd.u32();
        const bool has_bias = rd.u8() != 0;
        if (out_dim != layer.out_dim() || in_dim != layer.in_dim() || has_bias != layer.has_bias)
            throw Error(ErrorCode::BadHeader, "layer shape disagrees with the architecture");
        for (double& w : layer.weights.flat()) w = rd.f64();
        if (has_bias)
            for (double& b : layer.bias) b = rd.f64();
    }
    if (rd.remaining() != 0) throw Error(ErrorCode::BadHeader, "trailing bytes after the last layer");
    return mf;
}

inline void save_model(const std::filesystem::path& path, const SwanModel& m, const TrainConfig& config) {
    write_file(path, encode_model(m, config));
}
inline ModelFile load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// ---------------------------------------------------------------------------
// CSV matrices

/// Writes rows of `m` as comma-separated shortest round-trip decimals.
inline std::string encode_csv(const Matrix& m, std::string_view header_prefix = {}) {
    std::string out;
    if (!header_prefix.empty()) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += header_prefix;
            out += std::to_string(c + 1);
        }
        out += '\n';
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    return out;
}

/// Rectangular numeric CSV; a non-numeric first line is taken as a header.
inline Matrix decode_csv(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        std::vector<double> vals;
        bool numeric = true;
        std::size_t f = 0;
        while (true) {
            const std::size_t comma = line.find(',', f);
            const auto field = line.substr(f, comma == std::string_view::npos ? std::string_view::npos : comma - f);
            const auto v = parse_double(field);
            if (!v || !std::isfinite(*v)) {
                numeric = false;
                break;
            }
            vals.push_back(*v);
            if (comma == std::string_view::npos) break;
            f = comma + 1;
        }
        if (!numeric) {
            if (rows.empty() && lineno == 1) continue; // header
            throw Error(ErrorCode::NonNumeric, "line " + std::to_string(lineno) + " has a non-numeric field");
        }
        if (!rows.empty() && vals.size() != rows.front().size())
            throw Error(ErrorCode::RaggedRows, "line " + std::to_string(lineno) + " has " +
                                                   std::to_string(vals.size()) + " fields, expected " +
                                                   std::to_string(rows.front().size()));
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw Error(ErrorCode::NonNumeric, "csv has no numeric rows");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    return m;
}

/// L rows x e columns, header "em1,em2,...".
inline void write_endmember_csv(const std::filesystem::path& path, const Matrix& m) {
    write_file(path, encode_csv(m, "em"));
}
inline EndmemberMatrix read_endmember_csv(const std::filesystem::path& path) {
    return EndmemberMatrix{decode_csv(read_file(path)), {}};
}

/// One pixel per line (P rows x e columns), header "a1,a2,...".
inline void write_abundance_csv(const std::filesystem::path& path, const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t j = 0; j < a.rows(); ++j)
        for (std::size_t p = 0; p < a.cols(); ++p) t(p, j) = a(j, p);
    write_file(path, encode_csv(t, "a"));
}
inline AbundanceMatrix read_abundance_csv(const std::filesystem::path& path) {
    const Matrix t = decode_csv(read_file(path));
    AbundanceMatrix a{Matrix(t.cols(), t.rows())};
    for (std::size_t p = 0; p < t.rows(); ++p)
        for (std::size_t j = 0; j < t.cols(); ++j) a.values(j, p) = t(p, j);
    return a;
}

// ---------------------------------------------------------------------------
// Figures

/// 8-bit binary PGM of one abundance map, value = round(255 * alpha).
inline std::string encode_pgm(std::span<const double> map, std::size_t rows, std::size_t cols) {
    if (map.size() != rows * cols) throw Error(ErrorCode::DimensionMismatch, "map size differs from rows*cols");
    std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    for (double a : map) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(a, 0.0, 1.0)))));
    return out;
}

/// Writes prefix_1.pgm ... prefix_e.pgm and returns their paths.
inline std::vector<std::filesystem::path> write_abundance_maps(const AbundanceMatrix& a, std::size_t rows,
                                                               std::size_t cols, const std::string& prefix) {
    if (a.values.cols() != rows * cols)
        throw Error(ErrorCode::DimensionMismatch, std::to_string(a.values.cols()) + " pixels but image is " +
                                                      std::to_string(rows) + "x" + std::to_string(cols));
    std::vector<std::filesystem::path> paths;
    for (std::size_t j = 0; j < a.count(); ++j) {
        paths.emplace_back(prefix + "_" + std::to_string(j + 1) + ".pgm");
        write_file(paths.back(), encode_pgm(a.values.row(j), rows, cols));
    }
    return paths;
}

inline constexpr std::string_view kTruthColor = "#1f77b4";
inline constexpr std::string_view kEstimateColor = "#ff7f0e";

/// Line plot of signature columns against band index. Ground truth (if any)
/// is drawn in blue, estimates in orange.
inline std::string encode_endmember_svg(const Matrix& est, const Matrix* gt = nullptr) {
    const std::size_t L = est.rows();
    if (L < 2) throw Error(ErrorCode::InvalidDims, "plot needs at least two bands");
    if (gt && gt->rows() != L) throw Error(ErrorCode::SizeMismatch, "ground truth has a different band count");
    constexpr double W = 640, H = 360, left = 48, right = 16, top = 16, bottom = 32;
    double ymax = 0.0, ymin = 0.0;
    for (double v : est.flat()) ymax = std::max(ymax, v), ymin = std::min(ymin, v);
    if (gt)
        for (double v : gt->flat()) ymax = std::max(ymax, v), ymin = std::min(ymin, v);
    if (ymax <= ymin) ymax = ymin + 1.0;

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
       << W << ' ' << H << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (W / 2) << "\" y=\"" << H - 8 << "\" font-size=\"12\" text-anchor=\"middle\">band</text>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << top + 10 << "\" font-size=\"10\" text-anchor=\"end\">"
       << ymax << "</text>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << H - bottom << "\" font-size=\"10\" text-anchor=\"end\">"
       << ymin << "</text>\n";

    const auto polyline = [&](const Matrix& m, std::size_t j, std::string_view color) {
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t l = 0; l < L; ++l) {
            const double x = left + (W - left - right) * static_cast<double>(l) / static_cast<double>(L - 1);
            const double y = (H - bottom) - (H - top - bottom) * (m(l, j) - ymin) / (ymax - ymin);
            if (l) os << ' ';
            os << x << ',' << y;
        }
        os << "\"/>\n";
    };
    if (gt)
        for (std::size_t j = 0; j < gt->cols(); ++j) polyline(*gt, j, kTruthColor);
    for (std::size_t j = 0; j < est.cols(); ++j) polyline(est, j, kEstimateColor);
    os << "</svg>\n";
    return os.str();
}

inline void write_endmember_plot(const std::filesystem::path& path, const Matrix& est, const Matrix* gt = nullptr) {
    write_file(path, encode_endmember_svg(est, gt));
}

/// Loss trace in the layout of loss_log_header().
inline std::string encode_loss_log(const std::vector<EpochRecord>& trace) {
    std::string out = loss_log_header();
    for (const auto& r : trace) {
        out += std::to_string(r.epoch);
        for (double v : {r.train.l5a_term, r.train.l5d_term, r.train.l9_term, r.train.l2_reg, r.train.l1_reg,
                         r.train.total}) {
            out += '\t';
            out += format_double(v);
        }
        out += '\t';
        out += r.has_heldout ? format_double(r.heldout.total) : std::string("nan");
        out += '\n';
    }
    return out;
}

} // namespace swan::io
