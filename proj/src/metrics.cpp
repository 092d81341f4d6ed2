#include "crvos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crvos/errors.hpp"

namespace crvos {

namespace {

void require_same_shape(const MaskMap& a, const MaskMap& b, const char* who) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError(std::string(who) + ": mask shapes (" + std::to_string(a.h) + "," +
                         std::to_string(a.w) + ") vs (" + std::to_string(b.h) + "," +
                         std::to_string(b.w) + ") differ");
}

// Exact squared Euclidean distance transform (two-pass, per Felzenszwalb &
// Huttenlocher). Input: seed distances (0 at boundary pixels, +inf elsewhere).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n) {
    static thread_local std::vector<int> v;
    static thread_local std::vector<double> z;
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

std::vector<double> squared_edt(const MaskMap& seeds) {
    const int h = seeds.h, w = seeds.w;
    const double inf = 1e18;
    std::vector<double> dist(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < dist.size(); ++i) dist[i] = seeds.labels[i] ? 0.0 : inf;

    std::vector<double> col(h), out_col(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = dist[static_cast<size_t>(y) * w + x];
        edt_1d(col, out_col, h);
        for (int y = 0; y < h; ++y) dist[static_cast<size_t>(y) * w + x] = out_col[y];
    }
    std::vector<double> row(w), out_row(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[x] = dist[static_cast<size_t>(y) * w + x];
        edt_1d(row, out_row, w);
        for (int x = 0; x < w; ++x) dist[static_cast<size_t>(y) * w + x] = out_row[x];
    }
    return dist;
}

}  // namespace

double jaccard(const MaskMap& pred, const MaskMap& gt) {
    require_same_shape(pred, gt, "jaccard");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.labels[i] != 0, g = gt.labels[i] != 0;
        inter += p && g;
        uni += p || g;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

MaskMap boundary_of(const MaskMap& mask) {
    MaskMap b(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (mask.at(y, x) == 0) continue;
            const bool edge = y == 0 || y == mask.h - 1 || x == 0 || x == mask.w - 1 ||
                              mask.at(y - 1, x) == 0 || mask.at(y + 1, x) == 0 ||
                              mask.at(y, x - 1) == 0 || mask.at(y, x + 1) == 0;
            if (edge) b.at(y, x) = 1;
        }
    }
    return b;
}

int default_boundary_tolerance(int h, int w) {
    return static_cast<int>(std::ceil(0.008 * std::hypot(h, w)));
}

double boundary_f(const MaskMap& pred, const MaskMap& gt, int tolerance_px) {
    require_same_shape(pred, gt, "boundary_f");
    if (tolerance_px < 0) tolerance_px = default_boundary_tolerance(pred.h, pred.w);

    const MaskMap pb = boundary_of(pred);
    const MaskMap gb = boundary_of(gt);
    size_t np = 0, ng = 0;
    for (int32_t v : pb.labels) np += v != 0;
    for (int32_t v : gb.labels) ng += v != 0;
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;

    const double tol2 = static_cast<double>(tolerance_px) * tolerance_px;
    const std::vector<double> dist_to_g = squared_edt(gb);
    const std::vector<double> dist_to_p = squared_edt(pb);

    size_t p_hit = 0, g_hit = 0;
    for (size_t i = 0; i < pb.size(); ++i) {
        if (pb.labels[i] && dist_to_g[i] <= tol2) ++p_hit;
        if (gb.labels[i] && dist_to_p[i] <= tol2) ++g_hit;
    }
    const double precision = static_cast<double>(p_hit) / static_cast<double>(np);
    const double recall = static_cast<double>(g_hit) / static_cast<double>(ng);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

EvalResult evaluate(const std::vector<MaskMap>& preds, const std::vector<MaskMap>& gts, int K,
                    int tolerance_px) {
    if (preds.size() != gts.size())
        throw ShapeError("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(gts.size()) + " ground-truth masks");
    if (preds.empty()) throw std::invalid_argument("evaluate: empty sequence");
    if (K < 1) throw std::invalid_argument("evaluate: K must be >= 1");

    EvalResult r;
    r.per_target_per_frame_J.assign(K, std::vector<double>(preds.size(), 0.0));
    r.per_target_per_frame_F.assign(K, std::vector<double>(preds.size(), 0.0));

    auto binarize = [](const MaskMap& m, int target) {
        MaskMap b(m.h, m.w);
        for (size_t i = 0; i < m.size(); ++i) b.labels[i] = m.labels[i] == target ? 1 : 0;
        return b;
    };

    double sum_j = 0.0, sum_f = 0.0;
    size_t n = 0;
    for (int k = 1; k <= K; ++k) {
        for (size_t t = 0; t < preds.size(); ++t) {
            const MaskMap pb = binarize(preds[t], k);
            const MaskMap gb = binarize(gts[t], k);
            const double j = jaccard(pb, gb);
            const double f = boundary_f(pb, gb, tolerance_px);
            r.per_target_per_frame_J[k - 1][t] = j;
            r.per_target_per_frame_F[k - 1][t] = f;
            if (t > 0) {
                sum_j += j;
                sum_f += f;
                ++n;
            }
        }
    }
    if (n > 0) {
        r.mean_J = sum_j / static_cast<double>(n);
        r.mean_F = sum_f / static_cast<double>(n);
    } else {
        // single-frame sequence: only the given mask exists
        r.mean_J = 1.0;
        r.mean_F = 1.0;
    }
    r.mean_JF = 0.5 * (r.mean_J + r.mean_F);
    return r;
}

}  // namespace crvos
