#include "poolforge/synthetic.hpp"

#include <cmath>
#include <random>

#include "poolforge/error.hpp"
#include "poolforge/rng.hpp"

namespace poolforge {

namespace {

// Pairwise well parameters: a short-range repulsive bump and a longer-range
// attractive well whose depths depend on the species pair, so families with
// different compositions have genuinely different energy surfaces.
struct PairWell {
    double a, d; // amplitudes (meV)
};

PairWell well_params(int zi, int zj) {
    return {30.0 + 4.0 * (zi + zj), 20.0 + 1.5 * zi * zj};
}

constexpr double kRep0 = 1.0, kRepW = 0.4;
constexpr double kAtt0 = 2.0, kAttW = 0.8;

double pair_energy(double dist, int zi, int zj) {
    const auto w = well_params(zi, zj);
    const double ur = (dist - kRep0) / kRepW;
    const double ua = (dist - kAtt0) / kAttW;
    return w.a * std::exp(-ur * ur) - w.d * std::exp(-ua * ua);
}

double pair_energy_ddist(double dist, int zi, int zj) {
    const auto w = well_params(zi, zj);
    const double ur = (dist - kRep0) / kRepW;
    const double ua = (dist - kAtt0) / kAttW;
    return w.a * std::exp(-ur * ur) * (-2.0 * ur / kRepW) -
           w.d * std::exp(-ua * ua) * (-2.0 * ua / kAttW);
}

double min_pair_distance(const std::vector<Vec3>& coords) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < coords.size(); ++i)
        for (std::size_t j = i + 1; j < coords.size(); ++j) {
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double df = coords[i][a] - coords[j][a];
                d2 += df * df;
            }
            best = std::min(best, std::sqrt(d2));
        }
    return best;
}

std::vector<Vec3> sample_geometry(int atoms, double box, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, box);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<Vec3> coords(atoms);
        for (auto& r : coords)
            for (int a = 0; a < 3; ++a) r[a] = uni(rng);
        if (atoms == 1 || min_pair_distance(coords) >= 0.9) return coords;
    }
    throw Error(errc::invalid_spec, "synthetic: could not place atoms without clashes");
}

} // namespace

void SyntheticPoolSpec::validate() const {
    if (n_families < 1 || atoms < 1)
        throw Error(errc::invalid_spec, "synthetic: counts must be >= 1");
    if (static_cast<int>(frames_per_family.size()) != n_families)
        throw Error(errc::invalid_spec, "synthetic: need one frame count per family");
    for (int f : frames_per_family)
        if (f < 1) throw Error(errc::invalid_spec, "synthetic: frame counts must be >= 1");
    if (family_separation < 0 || perturbation < 0 || label_noise < 0)
        throw Error(errc::invalid_spec, "synthetic: scales must be >= 0");
}

double oracle_energy(const Structure& s) {
    double e = 0.0;
    const int n = s.atom_count();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double df = s.coords[i][a] - s.coords[j][a];
                d2 += df * df;
            }
            e += pair_energy(std::sqrt(d2), s.species[i], s.species[j]);
        }
    return e;
}

std::vector<Vec3> oracle_forces(const Structure& s) {
    const int n = s.atom_count();
    std::vector<Vec3> f(n, Vec3{0.0, 0.0, 0.0});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Vec3 diff;
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                diff[a] = s.coords[i][a] - s.coords[j][a];
                d2 += diff[a] * diff[a];
            }
            const double d = std::sqrt(d2);
            const double dv = pair_energy_ddist(d, s.species[i], s.species[j]);
            for (int a = 0; a < 3; ++a) {
                const double g = dv * diff[a] / d; // dE/dr_i
                f[i][a] -= g;
                f[j][a] += g;
            }
        }
    return f;
}

SyntheticPool generate_synthetic_pool(const SyntheticPoolSpec& spec) {
    spec.validate();
    SyntheticPool pool;

    const double box = 2.2 * std::cbrt(static_cast<double>(spec.atoms));
    for (int fam = 0; fam < spec.n_families; ++fam) {
        auto rng = make_rng(spec.seed, "family-" + std::to_string(fam));
        std::uniform_int_distribution<int> species_pick(1, 9);
        std::uniform_real_distribution<double> uni(-0.5, 0.5);
        std::normal_distribution<double> normal(0.0, 1.0);

        std::vector<int> species(spec.atoms);
        for (auto& z : species) z = species_pick(rng);

        const double scale = 1.0 + spec.family_separation * uni(rng);
        auto endpoint_a = sample_geometry(spec.atoms, box, rng);
        auto endpoint_b = sample_geometry(spec.atoms, box, rng);
        for (auto& r : endpoint_a)
            for (int a = 0; a < 3; ++a) r[a] *= scale;
        for (auto& r : endpoint_b)
            for (int a = 0; a < 3; ++a) r[a] *= scale;

        // Fixed per-family off-path direction; the sin(pi t) bump pushes
        // mid-path frames away from the linear interpolation, giving them a
        // transition-state-like energy barrier.
        std::vector<Vec3> bump(spec.atoms);
        for (auto& r : bump)
            for (int a = 0; a < 3; ++a) r[a] = 0.35 * normal(rng);

        const int frames = spec.frames_per_family[static_cast<std::size_t>(fam)];
        for (int k = 0; k < frames; ++k) {
            const double t = frames > 1 ? static_cast<double>(k) / (frames - 1) : 0.0;
            Structure s;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "f%02d_x%03d", fam, k);
            s.id = buf;
            s.species = species;
            s.family = "fam" + std::to_string(fam);
            s.frame = k;
            s.coords.resize(spec.atoms);

            for (int attempt = 0; attempt < 200; ++attempt) {
                for (int i = 0; i < spec.atoms; ++i)
                    for (int a = 0; a < 3; ++a)
                        s.coords[static_cast<std::size_t>(i)][a] =
                            (1.0 - t) * endpoint_a[static_cast<std::size_t>(i)][a] +
                            t * endpoint_b[static_cast<std::size_t>(i)][a] +
                            std::sin(M_PI * t) * bump[static_cast<std::size_t>(i)][a] +
                            spec.perturbation * normal(rng);
                if (spec.atoms == 1 || min_pair_distance(s.coords) >= 0.7) break;
            }

            Labels lab;
            lab.energy = oracle_energy(s) + spec.label_noise * normal(rng);
            lab.forces = oracle_forces(s);
            pool.labels[s.id] = lab;
            pool.structures.push_back(std::move(s));
        }
    }
    return pool;
}

} // namespace poolforge
