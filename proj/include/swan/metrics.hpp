#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "swan/angle.hpp"
#include "swan/error.hpp"
#include "swan/log.hpp"
#include "swan/matrix.hpp"

namespace swan {

inline double rmse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw Error(ErrorCode::LengthMismatch, "rmse needs equal, non-empty lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

/// Spectral angle distance in radians.
inline double sad(std::span<const double> a, std::span<const double> b) { return spectral_angle(a, b); }

inline constexpr double kSidFloor = 1e-12;

/// Spectral information divergence: symmetric KL divergence between the
/// spectra normalised to unit sum, entries floored at 1e-12. `floored`
/// (optional) receives the number of entries the floor touched.
inline double sid(std::span<const double> a, std::span<const double> b, std::size_t* floored = nullptr) {
    if (a.size() != b.size() || a.empty()) throw Error(ErrorCode::LengthMismatch, "sid needs equal lengths");
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0.0 || b[i] < 0.0) throw Error(ErrorCode::NegativeEntry, "sid input has a negative entry");
        sa += a[i];
        sb += b[i];
    }
    if (sa <= 0.0 || sb <= 0.0) throw Error(ErrorCode::ZeroSum, "sid input sums to zero");
    double d = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double p = a[i] / sa, q = b[i] / sb;
        if (p < kSidFloor) p = kSidFloor, ++hits;
        if (q < kSidFloor) q = kSidFloor, ++hits;
        d += (p - q) * std::log(p / q);
    }
    if (floored) *floored = hits;
    return d;
}

inline Vec unit_max(std::span<const double> v) {
    Vec out(v.begin(), v.end());
    double peak = 0.0;
    for (double x : out) peak = std::max(peak, std::abs(x));
    if (peak > 0.0)
        for (double& x : out) x /= peak;
    return out;
}

struct ComponentScores {
    std::vector<double> rmse, sad, sid; // per endmember / per map
    double mean_rmse = 0.0, mean_sad = 0.0, mean_sid = 0.0;
};

struct ScoreReport {
    std::string dataset;
    std::string snr;  // "none" when noiseless
    std::string seed;
    ComponentScores endmembers;
    ComponentScores abundances; // per-map RMSE/SAD/SID; means: RMSE over maps, SAD/SID over pixels
    std::size_t sid_floor_hits = 0;
};

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Scores an estimate whose columns/rows are already aligned to the ground truth.
/// Endmembers are L x e; abundances are e x P.
inline ScoreReport score_unmixing(const Matrix& est_endmembers, const Matrix& est_abundances,
                                  const Matrix& gt_endmembers, const Matrix& gt_abundances) {
    if (est_endmembers.rows() != gt_endmembers.rows() || est_endmembers.cols() != gt_endmembers.cols())
        throw Error(ErrorCode::SizeMismatch, "endmember matrices differ in shape");
    if (est_abundances.rows() != gt_abundances.rows() || est_abundances.cols() != gt_abundances.cols())
        throw Error(ErrorCode::SizeMismatch, "abundance matrices differ in shape");
    if (est_endmembers.cols() != est_abundances.rows())
        throw Error(ErrorCode::SizeMismatch, "endmember count differs between M and A");

    ScoreReport r;
    const std::size_t e = gt_endmembers.cols();
    std::size_t hits = 0;
    for (std::size_t j = 0; j < e; ++j) {
        const Vec est = unit_max(est_endmembers.col(j));
        const Vec gt = unit_max(gt_endmembers.col(j));
        r.endmembers.rmse.push_back(rmse(est, gt));
        r.endmembers.sad.push_back(sad(est, gt));
        std::size_t h = 0;
        r.endmembers.sid.push_back(sid(est, gt, &h));
        hits += h;
    }
    r.endmembers.mean_rmse = mean_of(r.endmembers.rmse);
    r.endmembers.mean_sad = mean_of(r.endmembers.sad);
    r.endmembers.mean_sid = mean_of(r.endmembers.sid);

    for (std::size_t j = 0; j < e; ++j) {
        const auto est = est_abundances.row(j);
        const auto gt = gt_abundances.row(j);
        r.abundances.rmse.push_back(rmse(est, gt));
        r.abundances.sad.push_back(sad(est, gt));
        std::size_t h = 0;
        r.abundances.sid.push_back(sid(est, gt, &h));
        hits += h;
    }
    r.abundances.mean_rmse = mean_of(r.abundances.rmse);

    const std::size_t P = gt_abundances.cols();
    double sad_sum = 0.0, sid_sum = 0.0;
    Vec a(e), b(e);
    for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t j = 0; j < e; ++j) {
            a[j] = est_abundances(j, p);
            b[j] = gt_abundances(j, p);
        }
        sad_sum += sad(a, b);
        std::size_t h = 0;
        sid_sum += sid(a, b, &h);
        hits += h;
    }
    r.abundances.mean_sad = sad_sum / static_cast<double>(P);
    r.abundances.mean_sid = sid_sum / static_cast<double>(P);
    r.sid_floor_hits = hits;
    if (hits > 0) log("sid floor applied to " + std::to_string(hits) + " entries");
    return r;
}

/// Tab-separated report. The summary row follows the layout
/// method, endmember RMSE/SAD/SID, abundance RMSE/SAD/SID.
inline void write_score_report(std::ostream& os, const ScoreReport& r, const std::string& method = "SWAN") {
    const auto num = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(6) << v;
        return s.str();
    };
    os << "# dataset=" << r.dataset << "\tsnr_db=" << r.snr << "\tseed=" << r.seed
       << "\tabundance_sad_sid=per_pixel_mean\tsad_unit=rad\n";
    os << "method\tem_rmse\tem_sad\tem_sid\tab_rmse\tab_sad\tab_sid\n";
    os << method << '\t' << num(r.endmembers.mean_rmse) << '\t' << num(r.endmembers.mean_sad) << '\t'
       << num(r.endmembers.mean_sid) << '\t' << num(r.abundances.mean_rmse) << '\t'
       << num(r.abundances.mean_sad) << '\t' << num(r.abundances.mean_sid) << '\n';
    os << "component\tindex\trmse\tsad\tsid\n";
    for (std::size_t j = 0; j < r.endmembers.rmse.size(); ++j)
        os << "endmember\t" << j + 1 << '\t' << num(r.endmembers.rmse[j]) << '\t' << num(r.endmembers.sad[j])
           << '\t' << num(r.endmembers.sid[j]) << '\n';
    for (std::size_t j = 0; j < r.abundances.rmse.size(); ++j)
        os << "abundance_map\t" << j + 1 << '\t' << num(r.abundances.rmse[j]) << '\t'
           << num(r.abundances.sad[j]) << '\t' << num(r.abundances.sid[j]) << '\n';
}

} // namespace swan
