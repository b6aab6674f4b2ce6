#pragma once

// Occupation-dependent transition kernels alpha(k, x) given as threshold
// tables: row with the largest k_min <= k applies at occupation k. Includes
// the drift analysis (v_bullet, x_bullet, p_bullet) and the nested interval
// partitions of [0,1) that drive the walker.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rwdre/lattice.hpp"

namespace rwdre::kernel {

struct KernelRow {
    std::int64_t kMin = 0;
    std::vector<std::pair<Site, double>> steps;  // (step, probability)
};

class Kernel {
public:
    Kernel(int dim, std::vector<KernelRow> rows) : dim_(dim), rows_(std::move(rows)) {
        if (dim_ < 1 || dim_ > kMaxDim) throw std::invalid_argument("Kernel: dim out of range");
        if (rows_.empty()) throw std::invalid_argument("Kernel: no rows");
        std::sort(rows_.begin(), rows_.end(),
                  [](const KernelRow& a, const KernelRow& b) { return a.kMin < b.kMin; });
        if (rows_.front().kMin != 0) throw std::invalid_argument("Kernel: need a row with kMin = 0");
        for (std::size_t r = 0; r + 1 < rows_.size(); ++r)
            if (rows_[r].kMin == rows_[r + 1].kMin)
                throw std::invalid_argument("Kernel: duplicate row threshold");
        for (auto& row : rows_) {
            double total = 0.0;
            std::sort(row.steps.begin(), row.steps.end(),
                      [](const auto& a, const auto& b) { return lexLess(a.first, b.first); });
            for (std::size_t i = 0; i < row.steps.size(); ++i) {
                const auto& [x, p] = row.steps[i];
                if (p < 0.0 || p > 1.0) throw std::invalid_argument("Kernel: probability out of [0,1]");
                if (i > 0 && row.steps[i - 1].first == x)
                    throw std::invalid_argument("Kernel: duplicate step in row");
                for (int j = dim_; j < kMaxDim; ++j)
                    if (x[j] != 0) throw std::invalid_argument("Kernel: step uses coordinate beyond dim");
                total += p;
                if (p > 0.0) stepSet_.push_back(x);
            }
            if (std::fabs(total - 1.0) > 1e-12)
                throw std::invalid_argument("Kernel: row probabilities do not sum to 1");
        }
        std::sort(stepSet_.begin(), stepSet_.end(), lexLess);
        stepSet_.erase(std::unique(stepSet_.begin(), stepSet_.end()), stepSet_.end());
        range_ = 0;
        for (const auto& x : stepSet_) range_ = std::max<std::int64_t>(range_, l1(x));
    }

    int dim() const { return dim_; }
    int range() const { return static_cast<int>(range_); }
    const std::vector<Site>& stepSet() const { return stepSet_; }
    const std::vector<KernelRow>& rows() const { return rows_; }

    std::size_t rowIndexFor(std::int64_t occupation) const {
        std::size_t r = 0;
        while (r + 1 < rows_.size() && rows_[r + 1].kMin <= occupation) ++r;
        return r;
    }

    double alpha(std::int64_t occupation, const Site& x) const {
        const auto& row = rows_[rowIndexFor(occupation)];
        for (const auto& [s, p] : row.steps)
            if (s == x) return p;
        return 0.0;
    }

private:
    int dim_;
    std::vector<KernelRow> rows_;
    std::vector<Site> stepSet_;
    std::int64_t range_ = 0;
};

struct DriftReport {
    double vBullet = 0.0;
    std::optional<Site> xBullet;
    std::map<std::int64_t, double> pBullet;  // at each row threshold
    bool assumptionS = false;
    bool assumptionD = false;
    bool assumptionR = false;

    double pBulletAt(std::int64_t k) const {
        double p = 0.0;
        for (const auto& [kMin, val] : pBullet)
            if (kMin <= k) p = val;
        return p;
    }
};

inline DriftReport analyze(const Kernel& kernel) {
    DriftReport rep;
    rep.assumptionS = true;  // threshold tables always have a finite step set

    const auto& rows = kernel.rows();
    const auto& top = rows.back();
    for (const auto& [x, p] : top.steps) rep.vBullet += p * static_cast<double>(x[0]);
    rep.assumptionD = rep.vBullet > 0.0;

    // x_bullet: forward step maximizing its probability floor on the top row,
    // lexicographic tie-break.
    double bestTop = 0.0;
    for (const auto& x : kernel.stepSet()) {
        if (x[0] <= 0) continue;
        double aTop = 0.0;
        for (const auto& [s, p] : top.steps)
            if (s == x) aTop = p;
        if (aTop > bestTop || (aTop == bestTop && aTop > 0.0 && rep.xBullet && lexLess(x, *rep.xBullet))) {
            bestTop = aTop;
            rep.xBullet = x;
        }
    }
    rep.assumptionR = rep.xBullet.has_value() && bestTop > 0.0;
    if (!rep.assumptionR) rep.xBullet.reset();

    if (rep.xBullet) {
        // p_bullet(k) = inf over rows applying at some occupation >= k; a
        // suffix minimum over the row table.
        std::vector<double> alphaAtRow(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            alphaAtRow[r] = 0.0;
            for (const auto& [s, p] : rows[r].steps)
                if (s == *rep.xBullet) alphaAtRow[r] = p;
        }
        std::vector<double> suffixMin(rows.size());
        double m = alphaAtRow.back();
        for (std::size_t r = rows.size(); r-- > 0;) {
            m = std::min(m, alphaAtRow[r]);
            suffixMin[r] = m;
        }
        for (std::size_t r = 0; r < rows.size(); ++r) rep.pBullet[rows[r].kMin] = suffixMin[r];
    }
    return rep;
}

struct IntervalPartition {
    // Per occupation 0..kMax: ordered (step, [lo, hi)) tiling [0, 1).
    std::vector<std::vector<std::pair<Site, std::pair<double, double>>>> perOccupation;
    std::int64_t kMax = 0;

    const std::vector<std::pair<Site, std::pair<double, double>>>& at(std::int64_t k) const {
        std::int64_t idx = std::min<std::int64_t>(k, kMax);
        return perOccupation[static_cast<std::size_t>(idx)];
    }

    Site sampleStep(std::int64_t occupation, double u) const {
        for (const auto& [x, iv] : at(occupation))
            if (u >= iv.first && u < iv.second) return x;
        return at(occupation).back().first;  // u == 1 cannot occur; guard rounding
    }
};

// Partition of [0,1) per occupation with I^k_{x_bullet} anchored at 0 and the
// remaining steps in lexicographic order. Anchoring at zero realizes the
// nesting [0, p_bullet(k)) c I^l_{x_bullet} for all l >= k.
inline IntervalPartition buildPartitions(const Kernel& kernel, std::int64_t kMax) {
    DriftReport rep = analyze(kernel);
    if (!rep.assumptionR)
        throw std::invalid_argument("buildPartitions: Assumption (R) fails; no admissible x_bullet");
    std::int64_t topThreshold = kernel.rows().back().kMin;
    kMax = std::max(kMax, topThreshold);

    IntervalPartition part;
    part.kMax = kMax;
    part.perOccupation.resize(static_cast<std::size_t>(kMax) + 1);
    for (std::int64_t k = 0; k <= kMax; ++k) {
        const auto& row = kernel.rows()[kernel.rowIndexFor(k)];
        auto& slots = part.perOccupation[static_cast<std::size_t>(k)];
        double lo = 0.0;
        double aBullet = kernel.alpha(k, *rep.xBullet);
        if (aBullet > 0.0) {
            slots.push_back({*rep.xBullet, {0.0, aBullet}});
            lo = aBullet;
        }
        for (const auto& [x, p] : row.steps) {
            if (x == *rep.xBullet || p <= 0.0) continue;
            slots.push_back({x, {lo, lo + p}});
            lo += p;
        }
        if (!slots.empty()) slots.back().second.second = 1.0;  // close the tiling exactly
    }
    return part;
}

} // namespace rwdre::kernel
