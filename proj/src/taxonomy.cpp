#include "dentalx/taxonomy.hpp"

#include <algorithm>
#include <array>

#include "dentalx/errors.hpp"

namespace dentalx {
namespace {

const std::array<std::string, kNamedAnatomyClasses + 1> kAnatomyNames = {
    "background", "enamel", "dentin", "root_dentin", "pulp", "bone", "implant"};

const std::array<Rgb, kNamedAnatomyClasses + 1> kPalette = {{
    {0, 0, 0},
    {250, 250, 210},
    {230, 160, 60},
    {180, 110, 40},
    {220, 40, 40},
    {70, 130, 200},
    {160, 160, 160},
}};

const std::array<std::string, kDiseaseTemplates> kDiseaseNames = {
    "calculus", "caries_enamel", "caries_dentin", "bone_loss", "peri_implant_bone_loss",
    "periapical_lesion"};

std::set<int> template_allowed(DiseaseTemplate t) {
  auto id = [](Anatomy a) { return static_cast<int>(a); };
  switch (t) {
    case DiseaseTemplate::kCalculus:
      return {id(Anatomy::kBackground), id(Anatomy::kEnamel)};
    case DiseaseTemplate::kCariesEnamel:
      return {id(Anatomy::kEnamel)};
    case DiseaseTemplate::kCariesDentin:
      return {id(Anatomy::kEnamel), id(Anatomy::kDentin)};
    case DiseaseTemplate::kBoneLoss:
      return {id(Anatomy::kBackground), id(Anatomy::kEnamel), id(Anatomy::kDentin),
              id(Anatomy::kRootDentin), id(Anatomy::kBone)};
    case DiseaseTemplate::kPeriImplantBoneLoss:
      return {id(Anatomy::kBackground), id(Anatomy::kBone), id(Anatomy::kImplant)};
    case DiseaseTemplate::kPeriapicalLesion:
      return {id(Anatomy::kRootDentin), id(Anatomy::kPulp), id(Anatomy::kBone)};
  }
  return {};
}

}  // namespace

const std::string& anatomy_name(int label) {
  if (label < 0 || label > kNamedAnatomyClasses) throw DataError("anatomy label out of range");
  return kAnatomyNames[static_cast<std::size_t>(label)];
}

std::optional<int> anatomy_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kAnatomyNames.size(); ++i)
    if (kAnatomyNames[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

std::span<const Rgb> anatomy_palette() { return kPalette; }

DiseaseTemplate disease_template(int class_id) {
  if (class_id < 0) throw DataError("negative disease class");
  return static_cast<DiseaseTemplate>(class_id % kDiseaseTemplates);
}

std::string disease_name(int class_id) {
  const auto& base = kDiseaseNames[static_cast<std::size_t>(disease_template(class_id))];
  const int round = class_id / kDiseaseTemplates;
  return round == 0 ? base : base + "_" + std::to_string(round);
}

std::vector<std::string> disease_names(int num_classes) {
  std::vector<std::string> out;
  for (int c = 0; c < num_classes; ++c) out.push_back(disease_name(c));
  return out;
}

DiseaseRuleTable DiseaseRuleTable::defaults(int num_disease_classes) {
  DiseaseRuleTable table;
  for (int c = 0; c < num_disease_classes; ++c) table.set_allowed(c, template_allowed(disease_template(c)));
  return table;
}

void DiseaseRuleTable::set_allowed(int disease, std::set<int> anatomy) {
  if (anatomy.empty()) throw ConfigError("rule for disease " + std::to_string(disease) + " allows no anatomy");
  for (int a : anatomy)
    if (a < 0 || a > kNamedAnatomyClasses) throw ConfigError("rule references unknown anatomy label");
  allowed_[disease] = std::move(anatomy);
}

const std::set<int>& DiseaseRuleTable::allowed(int disease) const {
  auto it = allowed_.find(disease);
  if (it == allowed_.end()) throw ConfigError("no rule for disease " + std::to_string(disease));
  return it->second;
}

bool DiseaseRuleTable::is_allowed(int disease, int anatomy) const {
  return allowed(disease).contains(anatomy);
}

nlohmann::json DiseaseRuleTable::to_json(int num_disease_classes) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [disease, anatomy] : allowed_) {
    if (disease >= num_disease_classes) continue;
    nlohmann::json names = nlohmann::json::array();
    for (int a : anatomy) names.push_back(anatomy_name(a));
    j[disease_name(disease)] = names;
  }
  return j;
}

DiseaseRuleTable DiseaseRuleTable::from_json(const nlohmann::json& j, int num_disease_classes) {
  if (!j.is_object()) throw ConfigError("rules file must hold a JSON object");
  const auto names = disease_names(num_disease_classes);
  DiseaseRuleTable table;
  for (const auto& [key, value] : j.items()) {
    auto it = std::find(names.begin(), names.end(), key);
    if (it == names.end()) throw ConfigError("rules file names unknown disease '" + key + "'");
    std::set<int> anatomy;
    for (const auto& name : value) {
      auto label = anatomy_from_name(name.get<std::string>());
      if (!label) throw ConfigError("rules file names unknown anatomy '" + name.get<std::string>() + "'");
      anatomy.insert(*label);
    }
    table.set_allowed(static_cast<int>(it - names.begin()), std::move(anatomy));
  }
  return table;
}

}  // namespace dentalx
