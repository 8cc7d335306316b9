#include "dentalx/ablation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "dentalx/errors.hpp"
#include "dentalx/inference.hpp"
#include "dentalx/training.hpp"

namespace dentalx {

namespace {

using Column = std::optional<double> AblationRow::*;
constexpr std::array<std::pair<const char*, Column>, 6> kColumns{{{"AP50", &AblationRow::ap50},
                                                                  {"AP75", &AblationRow::ap75},
                                                                  {"AP50_95", &AblationRow::ap5095},
                                                                  {"mIoU", &AblationRow::miou},
                                                                  {"mDice", &AblationRow::mdice},
                                                                  {"mAcc", &AblationRow::macc}}};

std::optional<double> median(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

const AblationRow& AblationTable::row(TrainMode mode) const {
  for (const auto& r : rows)
    if (r.mode == mode) return r;
  throw std::out_of_range("ablation table has no row for " + to_string(mode));
}

std::string AblationTable::to_csv() const {
  std::ostringstream out;
  out << "mode";
  for (const auto& [name, _] : kColumns) out << ',' << name;
  out << '\n' << std::setprecision(6) << std::fixed;
  for (const auto& r : rows) {
    out << to_string(r.mode);
    for (const auto& [_, column] : kColumns) {
      out << ',';
      if (r.*column) out << 100.0 * *(r.*column);
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"mode", to_string(r.mode)}};
    for (const auto& [name, column] : kColumns) row[name] = r.*column ? nlohmann::json(*(r.*column)) : nlohmann::json();
    j.push_back(row);
  }
  return j;
}

AblationTable run_ablation(const Corpus& train, const Corpus& test, const AblationSettings& settings) {
  AblationTable table;
  for (TrainMode mode : kAblationModes) {
    ModelConfig model_config = settings.model;
    model_config.use_context = mode == TrainMode::kJointContext;
    auto model = build_model(model_config);

    std::filesystem::path dir;
    if (!settings.out_dir.empty()) dir = settings.out_dir / to_string(mode);
    Trainer trainer(model, train, settings.train, mode, dir);
    trainer.run(-1, [&](const StepLog& log) {
      if (settings.on_step) settings.on_step(mode, log.step, log.loss.total);
    });

    EvalOptions options;
    options.inference = settings.inference;
    options.task = trains_detection(mode) && trains_segmentation(mode) ? EvalTask::kBoth
                   : trains_detection(mode)                            ? EvalTask::kDetection
                                                                       : EvalTask::kSegmentation;
    const EvalResult result = evaluate(model, test, options);

    AblationRow row;
    row.mode = mode;
    if (result.detection) {
      row.ap50 = result.detection->ap50;
      row.ap75 = result.detection->ap75;
      row.ap5095 = result.detection->ap5095;
    }
    if (result.segmentation) {
      row.miou = result.segmentation->miou;
      row.mdice = result.segmentation->mdice;
      row.macc = result.segmentation->macc;
    }
    table.rows.push_back(row);
  }
  return table;
}

AblationTable median_table(std::span<const AblationTable> tables) {
  if (tables.empty()) throw std::invalid_argument("median_table: no tables");
  AblationTable out;
  for (std::size_t i = 0; i < tables[0].rows.size(); ++i) {
    AblationRow row;
    row.mode = tables[0].rows[i].mode;
    for (const auto& [_, column] : kColumns) {
      std::vector<double> values;
      for (const auto& t : tables) {
        if (t.rows.size() != tables[0].rows.size() || t.rows[i].mode != row.mode)
          throw std::invalid_argument("median_table: tables have different rows");
        if (t.rows[i].*column) values.push_back(*(t.rows[i].*column));
      }
      row.*column = median(std::move(values));
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace dentalx
