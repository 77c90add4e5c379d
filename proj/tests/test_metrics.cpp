#include <doctest.h>

#include <cmath>
#include <random>

#include "liverseg/metrics.hpp"

using namespace liverseg;

namespace {

LabelMask sphere_mask(Dims3 d, Spacing3 sp, std::array<double, 3> center, double radius)
{
    LabelMask m(d, sp);
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                double dx = (x - center[0]) * sp[0];
                double dy = (y - center[1]) * sp[1];
                double dz = (z - center[2]) * sp[2];
                if (dx * dx + dy * dy + dz * dz <= radius * radius)
                    m.at(x, y, z) = 1;
            }
    return m;
}

}  // namespace

TEST_CASE("identical masks score perfectly on every measure")
{
    LabelMask m = sphere_mask({24, 24, 24}, {1, 1, 1}, {12, 12, 12}, 7.0);
    MetricReport r = evaluate_masks(m, m);
    CHECK(r.voe == doctest::Approx(0.0));
    CHECK(r.rvd == doctest::Approx(0.0));
    CHECK(r.dist.asd == doctest::Approx(0.0));
    CHECK(r.dist.rmsd == doctest::Approx(0.0));
    CHECK(r.dist.msd == doctest::Approx(0.0));
    for (double s : r.scores)
        CHECK(s == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(r.total_score == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("reference-level errors score 75 per metric")
{
    auto scores = sliver_scores(6.4, 4.7, {1.0, 1.8, 19.0});
    for (double s : scores)
        CHECK(s == doctest::Approx(75.0).epsilon(1e-9));

    // RVD is scored on its absolute value; scores floor at zero.
    auto neg = sliver_scores(0.0, -4.7, {0.0, 0.0, 0.0});
    CHECK(neg[1] == doctest::Approx(75.0).epsilon(1e-9));
    auto awful = sliver_scores(100.0, 0.0, {0.0, 0.0, 0.0});
    CHECK(awful[0] == 0.0);
}

TEST_CASE("single-voxel masks give exact analytic distances")
{
    Dims3 d{10, 10, 10};
    Spacing3 sp{1.0, 2.0, 3.0};
    LabelMask a(d, sp), b(d, sp);
    a.at(2, 2, 2) = 1;
    b.at(5, 4, 2) = 1;  // offset (3, 2, 0) voxels -> (3, 4, 0) mm
    double dist = std::sqrt(9.0 + 16.0);
    SurfaceDistances s = surface_distances(a, b);
    CHECK(s.asd == doctest::Approx(dist).epsilon(1e-12));
    CHECK(s.rmsd == doctest::Approx(dist).epsilon(1e-12));
    CHECK(s.msd == doctest::Approx(dist).epsilon(1e-12));

    CHECK(voe(a, b) == doctest::Approx(100.0));
    CHECK(rvd(a, b) == doctest::Approx(0.0));
}

TEST_CASE("signed volume difference keeps its sign")
{
    LabelMask big = sphere_mask({30, 30, 30}, {1, 1, 1}, {15, 15, 15}, 9.0);
    LabelMask small = sphere_mask({30, 30, 30}, {1, 1, 1}, {15, 15, 15}, 7.0);
    CHECK(rvd(small, big) < 0.0);
    CHECK(rvd(big, small) > 0.0);

    LabelMask empty({5, 5, 5}, {1, 1, 1});
    CHECK_THROWS(rvd(big, LabelMask({30, 30, 30}, {1, 1, 1})));
    CHECK_THROWS(voe(empty, empty));
    CHECK_THROWS(surface_distances(empty, empty));
}

TEST_CASE("concentric digital spheres sit three millimetres apart")
{
    Dims3 d{56, 56, 56};
    std::array<double, 3> c{27.5, 27.5, 27.5};
    LabelMask inner = sphere_mask(d, {1, 1, 1}, c, 20.0);
    LabelMask outer = sphere_mask(d, {1, 1, 1}, c, 23.0);
    SurfaceDistances s = surface_distances(inner, outer);
    CHECK(s.asd == doctest::Approx(3.0).epsilon(0.5 / 3.0));
    CHECK(s.msd == doctest::Approx(3.0).epsilon(1.0 / 3.0));
}

TEST_CASE("distance statistics are ordered on random mask pairs")
{
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> cd(8.0, 12.0), rd(2.0, 6.0);
    for (int trial = 0; trial < 50; ++trial) {
        Dims3 d{20, 20, 20};
        LabelMask a = sphere_mask(d, {1, 1, 1}, {cd(rng), cd(rng), cd(rng)}, rd(rng));
        LabelMask b = sphere_mask(d, {1, 1, 1}, {cd(rng), cd(rng), cd(rng)}, rd(rng));
        std::size_t na = 0, nb = 0;
        for (auto v : a.data())
            na += v;
        for (auto v : b.data())
            nb += v;
        if (na == 0 || nb == 0)
            continue;
        SurfaceDistances s = surface_distances(a, b);
        CHECK(s.asd <= s.rmsd + 1e-12);
        CHECK(s.rmsd <= s.msd + 1e-12);
        // Symmetric in its arguments.
        SurfaceDistances t = surface_distances(b, a);
        CHECK(s.asd == doctest::Approx(t.asd));
        CHECK(s.msd == doctest::Approx(t.msd));
    }
}

TEST_CASE("exact distance transform agrees with direct nearest-neighbor search")
{
    std::mt19937_64 rng(11);
    Dims3 d{9, 8, 7};
    Spacing3 sp{1.0, 1.5, 2.0};
    LabelMask a(d, sp), b(d, sp);
    std::bernoulli_distribution bit(0.1);
    for (auto& v : a.data())
        v = bit(rng) ? 1 : 0;
    for (auto& v : b.data())
        v = bit(rng) ? 1 : 0;
    a.at(4, 4, 3) = 1;  // guarantee non-empty
    b.at(2, 2, 2) = 1;

    // Direct quadratic oracle over border voxels.
    auto borders = [&](const LabelMask& m) {
        std::vector<std::array<int, 3>> out;
        for (int z = 0; z < d[2]; ++z)
            for (int y = 0; y < d[1]; ++y)
                for (int x = 0; x < d[0]; ++x) {
                    if (!m.at(x, y, z))
                        continue;
                    auto bg = [&](int nx, int ny, int nz) {
                        return !m.contains(nx, ny, nz) || !m.at(nx, ny, nz);
                    };
                    if (bg(x + 1, y, z) || bg(x - 1, y, z) || bg(x, y + 1, z) ||
                        bg(x, y - 1, z) || bg(x, y, z + 1) || bg(x, y, z - 1))
                        out.push_back({x, y, z});
                }
        return out;
    };
    auto ba = borders(a);
    auto bb = borders(b);
    auto nearest = [&](const std::array<int, 3>& p,
                       const std::vector<std::array<int, 3>>& set) {
        double best = 1e300;
        for (const auto& q : set) {
            double dx = (p[0] - q[0]) * sp[0];
            double dy = (p[1] - q[1]) * sp[1];
            double dz = (p[2] - q[2]) * sp[2];
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        return std::sqrt(best);
    };
    double sum = 0.0, sum2 = 0.0, mx = 0.0;
    for (const auto& p : ba) {
        double v = nearest(p, bb);
        sum += v;
        sum2 += v * v;
        mx = std::max(mx, v);
    }
    for (const auto& p : bb) {
        double v = nearest(p, ba);
        sum += v;
        sum2 += v * v;
        mx = std::max(mx, v);
    }
    double n = static_cast<double>(ba.size() + bb.size());

    SurfaceDistances s = surface_distances(a, b);
    CHECK(s.asd == doctest::Approx(sum / n).epsilon(1e-9));
    CHECK(s.rmsd == doctest::Approx(std::sqrt(sum2 / n)).epsilon(1e-9));
    CHECK(s.msd == doctest::Approx(mx).epsilon(1e-9));
}

TEST_CASE("mask volume uses the voxel spacing")
{
    LabelMask m({10, 10, 10}, {2.0, 2.0, 2.5});
    for (int i = 0; i < 100; ++i)
        m[i] = 1;
    CHECK(mask_volume_ml(m) == doctest::Approx(100 * 10.0 / 1000.0));
}

TEST_CASE("volume statistics reproduce the direct regression formulas")
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> md(800.0, 2000.0), nd(-40.0, 40.0);
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 20; ++i) {
        double manual = md(rng);
        pairs.emplace_back(1.05 * manual - 20.0 + nd(rng), manual);
    }

    // Independent textbook formulas.
    double n = static_cast<double>(pairs.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (auto [a, m] : pairs) {
        sy += a;
        sx += m;
        sxx += m * m;
        syy += a * a;
        sxy += m * a;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double intercept = (sy - slope * sx) / n;
    double r = (n * sxy - sx * sy) /
               std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));

    VolumeStats s = volume_stats(pairs);
    CHECK(s.slope == doctest::Approx(slope).epsilon(1e-9));
    CHECK(s.intercept == doctest::Approx(intercept).epsilon(1e-9));
    CHECK(s.correlation == doctest::Approx(r).epsilon(1e-9));

    // Bland-Altman from first principles.
    double mean_d = (sy - sx) / n;
    double ssd = 0.0;
    for (auto [a, m] : pairs) {
        double dd = (a - m) - mean_d;
        ssd += dd * dd;
    }
    double sd = std::sqrt(ssd / (n - 1));
    CHECK(s.mean_difference == doctest::Approx(mean_d).epsilon(1e-9));
    CHECK(s.loa_low == doctest::Approx(mean_d - 1.96 * sd).epsilon(1e-9));
    CHECK(s.loa_high == doctest::Approx(mean_d + 1.96 * sd).epsilon(1e-9));
    CHECK(s.cv_percent ==
          doctest::Approx(100.0 * sd / (0.5 * (sx + sy) / n)).epsilon(1e-9));
}

TEST_CASE("perfect agreement gives unit correlation and zero spread")
{
    std::vector<std::pair<double, double>> pairs{
        {1000.0, 1000.0}, {1500.0, 1500.0}, {1250.0, 1250.0}, {900.0, 900.0}};
    VolumeStats s = volume_stats(pairs);
    CHECK(s.slope == doctest::Approx(1.0));
    CHECK(s.intercept == doctest::Approx(0.0).scale(1000.0));
    CHECK(s.correlation == doctest::Approx(1.0));
    CHECK(s.cv_percent == doctest::Approx(0.0));
    CHECK(s.mean_difference == doctest::Approx(0.0));

    CHECK_THROWS(volume_stats({{1.0, 1.0}, {2.0, 2.0}}));
    CHECK_THROWS(volume_stats(
        {{1.0, 5.0}, {1.0, 5.0}, {1.0, 5.0}, {1.0, 5.0}}));  // degenerate spread
}
