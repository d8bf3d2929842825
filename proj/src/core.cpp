#include "poolforge/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "poolforge/error.hpp"
#include "poolforge/rng.hpp"

namespace poolforge {

void validate_structure(const Structure& s) {
    if (s.species.empty())
        throw Error(errc::invalid_spec, "structure '" + s.id + "' has no atoms");
    if (s.species.size() != s.coords.size())
        throw Error(errc::invalid_spec,
                    "structure '" + s.id + "': species/coords length mismatch");
    for (const auto& r : s.coords)
        for (double c : r)
            if (!std::isfinite(c))
                throw Error(errc::invalid_spec,
                            "structure '" + s.id + "' has non-finite coordinates");
}

void validate_labels(const Structure& s, const Labels& l) {
    // Energy-only labels (no forces) are valid; when forces are present they
    // must cover every atom.
    if (!l.forces.empty() && l.forces.size() != s.species.size())
        throw Error(errc::invalid_spec,
                    "labels for '" + s.id + "': force count != atom count");
    if (!std::isfinite(l.energy))
        throw Error(errc::invalid_spec, "labels for '" + s.id + "': non-finite energy");
    for (const auto& f : l.forces)
        for (double c : f)
            if (!std::isfinite(c))
                throw Error(errc::invalid_spec,
                            "labels for '" + s.id + "': non-finite force");
}

bool Pool::contains(const std::string& id) const {
    return std::find(candidates.begin(), candidates.end(), id) != candidates.end();
}

bool LabeledSet::contains(const std::string& id) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const LabeledEntry& e) { return e.id == id; });
}

std::vector<std::string> LabeledSet::ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

ALState apply_acquisition(const ALState& state,
                          const std::vector<std::string>& batch,
                          const std::map<std::string, Labels>& labels) {
    std::set<std::string> seen;
    for (const auto& id : batch) {
        if (!seen.insert(id).second)
            throw Error(errc::duplicate_id, "batch id repeated: " + id);
        if (!state.pool.contains(id))
            throw Error(errc::unknown_id, "batch id not in pool: " + id);
        if (labels.find(id) == labels.end())
            throw Error(errc::missing_label, "no labels for batch id: " + id);
    }

    ALState next = state;
    next.round = state.round + 1;
    for (const auto& id : batch) {
        next.labeled.entries.push_back({id, labels.at(id), state.round});
    }
    auto& cands = next.pool.candidates;
    cands.erase(std::remove_if(cands.begin(), cands.end(),
                               [&](const std::string& id) { return seen.count(id) > 0; }),
                cands.end());
    return next;
}

DatasetSplit split_dataset(const std::vector<std::string>& ids,
                           double test_fraction,
                           double validation_fraction,
                           std::uint64_t seed) {
    if (ids.empty()) throw Error(errc::empty_input, "split_dataset: no structures");
    if (test_fraction < 0 || validation_fraction < 0 ||
        test_fraction + validation_fraction >= 1.0)
        throw Error(errc::invalid_spec, "split_dataset: fractions must be >= 0 and sum < 1");

    std::vector<std::string> shuffled = ids;
    auto rng = make_rng(seed, "split");
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    const auto n = shuffled.size();
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * validation_fraction));

    DatasetSplit split;
    split.test.assign(shuffled.begin(), shuffled.begin() + n_test);
    split.validation.assign(shuffled.begin() + n_test, shuffled.begin() + n_test + n_val);
    split.pool.assign(shuffled.begin() + n_test + n_val, shuffled.end());
    return split;
}

} // namespace poolforge
