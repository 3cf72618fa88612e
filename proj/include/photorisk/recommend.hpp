#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace photorisk::rec {

enum class FilterKind { DarkAmber, CoolGrey, LightGrey, NeutralDensity, NoFilter };
enum class BrightnessCategory { High, Medium, Low };
enum class VarianceCategory { High, Low };
enum class FeedbackKind { TooBright, TooDim, TooWarm, TooCool, Ok };

// Display names: "Dark Amber", "Cool Grey", "Light Grey", "Neutral Density",
// "No Filter" — used in CLI output and JSON alike.
std::string to_string(FilterKind kind);
FilterKind filter_from_string(const std::string& name);

std::string to_string(FeedbackKind kind);
FeedbackKind feedback_from_string(const std::string& name);  // throws on unknown

// Personal rendering offsets ride along with the filter choice but can never
// change it; bounds are clamped at every update.
inline constexpr double kIntensityBound = 0.3;
inline constexpr int kWarmthBound = 2;

struct Recommendation {
    FilterKind filter = FilterKind::NoFilter;
    std::string note;
    double intensity_offset = 0.0;  // in [-0.3, 0.3]
    int warmth_step = 0;            // in [-2, 2]

    bool operator==(const Recommendation&) const = default;
};

struct FeedbackEvent {
    std::int64_t timestamp = 0;  // unix seconds
    FeedbackKind kind = FeedbackKind::Ok;

    bool operator==(const FeedbackEvent&) const = default;
};

struct UserProfile {
    int warmth_step = 0;
    double intensity_offset = 0.0;
    std::vector<FeedbackEvent> feedback_log;  // append-only

    bool operator==(const UserProfile&) const = default;
};

// score >= 0.7 -> Dark Amber; 0.4 <= score < 0.7 -> Cool Grey; else No Filter.
// Both boundaries belong to the higher-protection band. Score must be in [0,1].
Recommendation filter_from_score(double score);

// lux >= 900 High, 600 <= lux < 900 Medium, else Low; eye_var >= 6 High else Low.
std::pair<BrightnessCategory, VarianceCategory> categorize(double lux, double eye_var);

Recommendation filter_from_categories(BrightnessCategory b, VarianceCategory v);

// TooBright +0.1 intensity, TooDim -0.1, TooWarm -1 warmth, TooCool +1,
// Ok no change; results clamped to bounds; the event is always logged.
UserProfile apply_feedback(const UserProfile& profile, FeedbackKind kind, std::int64_t timestamp);

// Copies the profile's offsets onto the recommendation. The filter kind is
// a safety band and is never overridden by preference data.
Recommendation personalize(const Recommendation& base, const UserProfile& profile);

nlohmann::json to_json(const Recommendation& r);
nlohmann::json to_json(const UserProfile& p);

void save_profile(const UserProfile& profile, const std::filesystem::path& path);
UserProfile load_profile(const std::filesystem::path& path);  // throws std::runtime_error

}  // namespace photorisk::rec
