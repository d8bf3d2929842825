#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace poolforge {

// All recoverable failures carry a stable machine-readable code string
// alongside the human message. The CLI maps these to exit status 1.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

namespace errc {
inline constexpr const char* unknown_id = "UnknownId";
inline constexpr const char* duplicate_id = "DuplicateId";
inline constexpr const char* missing_label = "MissingLabel";
inline constexpr const char* empty_input = "EmptyInput";
inline constexpr const char* dimension_mismatch = "DimensionMismatch";
inline constexpr const char* kind_mismatch = "KindMismatch";
inline constexpr const char* index_out_of_range = "IndexOutOfRange";
inline constexpr const char* pool_too_large = "PoolTooLarge";
inline constexpr const char* unknown_species = "UnknownSpecies";
inline constexpr const char* empty_training_set = "EmptyTrainingSet";
inline constexpr const char* empty_pool = "EmptyPool";
inline constexpr const char* singular_kernel = "SingularKernel";
inline constexpr const char* batch_too_large = "BatchTooLarge";
inline constexpr const char* nonpositive_variance = "NonpositiveVariance";
inline constexpr const char* degenerate_bins = "DegenerateBins";
inline constexpr const char* degenerate_input = "DegenerateInput";
inline constexpr const char* misaligned_ids = "MisalignedIds";
inline constexpr const char* empty_curve = "EmptyCurve";
inline constexpr const char* no_shared_target = "NoSharedTarget";
inline constexpr const char* invalid_spec = "InvalidSpec";
inline constexpr const char* missing_tags = "MissingTags";
inline constexpr const char* config_invalid = "ConfigInvalid";
inline constexpr const char* io_error = "IoError";
inline constexpr const char* format_error = "FormatError";
} // namespace errc

} // namespace poolforge
