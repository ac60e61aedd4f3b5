#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace comet {

// The five age-inappropriate comment categories. The ensemble trains one
// binary model per category; "safe" is always derived, never stored.
enum class Category : int {
  toxic = 0,
  obscene = 1,
  insult = 2,
  threat = 3,
  identity_hate = 4,
};

inline constexpr std::size_t kCategoryCount = 5;

inline constexpr std::array<Category, kCategoryCount> kAllCategories = {
    Category::toxic, Category::obscene, Category::insult, Category::threat,
    Category::identity_hate};

constexpr std::string_view category_name(Category c) {
  switch (c) {
    case Category::toxic: return "toxic";
    case Category::obscene: return "obscene";
    case Category::insult: return "insult";
    case Category::threat: return "threat";
    case Category::identity_hate: return "identity_hate";
  }
  return "unknown";
}

inline std::optional<Category> category_from_name(std::string_view name) {
  for (Category c : kAllCategories)
    if (category_name(c) == name) return c;
  // accept the spaced spelling used in prose
  if (name == "identity hate") return Category::identity_hate;
  return std::nullopt;
}

// Five boolean category labels. Ground truth and predictions share this
// shape; safe is NOT(any flag) by construction.
struct LabelVector {
  std::array<bool, kCategoryCount> flags{};

  bool& operator[](Category c) { return flags[static_cast<int>(c)]; }
  bool operator[](Category c) const { return flags[static_cast<int>(c)]; }

  bool any() const {
    for (bool f : flags)
      if (f) return true;
    return false;
  }
  bool safe() const { return !any(); }

  // Labeling rule: a subcategory flag implies toxic. Violations are loaded
  // with a warning, not rejected.
  bool violates_hierarchy() const {
    if ((*this)[Category::toxic]) return false;
    return (*this)[Category::obscene] || (*this)[Category::insult] ||
           (*this)[Category::threat] || (*this)[Category::identity_hate];
  }

  bool operator==(const LabelVector&) const = default;
};

}  // namespace comet
