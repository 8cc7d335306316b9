#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dentalx/image.hpp"
#include "json.hpp"

namespace dentalx {

// Anatomy label values used by every mask in the project.
enum class Anatomy : std::uint8_t {
  kBackground = 0,
  kEnamel = 1,
  kDentin = 2,
  kRootDentin = 3,
  kPulp = 4,
  kBone = 5,
  kImplant = 6,
};

inline constexpr int kNamedAnatomyClasses = 6;

const std::string& anatomy_name(int label);
std::optional<int> anatomy_from_name(const std::string& name);
std::span<const Rgb> anatomy_palette();

// Synthetic disease taxonomy. Class ids beyond the six base templates reuse
// template (id % 6) and get a numeric suffix.
enum class DiseaseTemplate : int {
  kCalculus = 0,
  kCariesEnamel = 1,
  kCariesDentin = 2,
  kBoneLoss = 3,
  kPeriImplantBoneLoss = 4,
  kPeriapicalLesion = 5,
};

inline constexpr int kDiseaseTemplates = 6;

DiseaseTemplate disease_template(int class_id);
std::string disease_name(int class_id);
std::vector<std::string> disease_names(int num_classes);

// Disease class -> anatomy labels the disease may occupy.
class DiseaseRuleTable {
 public:
  DiseaseRuleTable() = default;

  static DiseaseRuleTable defaults(int num_disease_classes);

  void set_allowed(int disease, std::set<int> anatomy);
  bool contains(int disease) const { return allowed_.contains(disease); }
  const std::set<int>& allowed(int disease) const;
  bool is_allowed(int disease, int anatomy) const;
  std::size_t size() const { return allowed_.size(); }

  // {"caries_enamel": ["enamel"], ...}; names resolve through disease_names().
  nlohmann::json to_json(int num_disease_classes) const;
  static DiseaseRuleTable from_json(const nlohmann::json& j, int num_disease_classes);

 private:
  std::map<int, std::set<int>> allowed_;
};

}  // namespace dentalx
