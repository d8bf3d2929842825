#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "poolforge/core.hpp"

namespace poolforge {

// Desk-scale stand-in for reaction-path candidate pools: each family is a
// smooth one-parameter path of structures between two endpoint geometries
// with a mid-path bump, labelled by a fixed analytic pairwise potential.
struct SyntheticPoolSpec {
    int n_families = 3;
    std::vector<int> frames_per_family = {35, 35, 35}; // may be unbalanced
    int atoms = 6;
    double family_separation = 0.3; // endpoint geometry scale spread
    double perturbation = 0.02;     // per-frame coordinate jitter
    double label_noise = 0.0;       // meV, energy labels only
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticPool {
    std::vector<Structure> structures;
    std::map<std::string, Labels> labels;
};

SyntheticPool generate_synthetic_pool(const SyntheticPoolSpec& spec);

// The analytic oracle potential (species-dependent sum of pairwise smooth
// wells) and its exact forces.
double oracle_energy(const Structure& s);
std::vector<Vec3> oracle_forces(const Structure& s);

} // namespace poolforge
