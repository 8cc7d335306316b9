#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "dentalx/checkpoint.hpp"
#include "dentalx/errors.hpp"
#include "dentalx/evaluation.hpp"
#include "dentalx/geometry.hpp"
#include "dentalx/inference.hpp"
#include "dentalx/model.hpp"
#include "dentalx/synthetic.hpp"
#include "dentalx/taxonomy.hpp"

namespace py = pybind11;
using namespace dentalx;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Raster<std::uint8_t> to_raster(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D uint8 array, got " + std::to_string(a.ndim()) + " dimensions");
  Raster<std::uint8_t> r(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(r.data.data(), a.data(), r.data.size());
  return r;
}

U8Array to_array(const Raster<std::uint8_t>& r) {
  U8Array a({r.height, r.width});
  std::memcpy(a.mutable_data(), r.data.data(), r.data.size());
  return a;
}

DiseaseRuleTable rules_from(const py::object& rules, int num_classes) {
  return rules.is_none() ? DiseaseRuleTable::defaults(num_classes)
                         : DiseaseRuleTable::from_json(from_python(rules), num_classes);
}

GeneratorConfig generator_from(int size, int classes, const py::object& overrides) {
  nlohmann::json j = GeneratorConfig{}.to_json();
  j["width"] = size;
  j["height"] = size;
  j["num_disease_classes"] = classes;
  if (!overrides.is_none()) j.merge_patch(from_python(overrides));
  return GeneratorConfig::from_json(j);
}

class PyModel {
 public:
  explicit PyModel(DentalXModel model, std::optional<TrainMode> mode = std::nullopt)
      : model_(std::move(model)), mode_(mode) {}

  static PyModel create(const py::object& config) {
    nlohmann::json j = ModelConfig{}.to_json();
    if (!config.is_none()) j.merge_patch(from_python(config));
    return PyModel(build_model(ModelConfig::from_json(j)));
  }

  static PyModel load(const std::filesystem::path& path) {
    auto ckpt = load_checkpoint(path);
    return PyModel(ckpt.model, ckpt.mode);
  }

  void save(const std::filesystem::path& path) { save_checkpoint(path, model_, mode_); }

  py::list predict(const std::vector<U8Array>& images, double score_threshold, double nms_iou) {
    std::vector<GrayImage> rasters;
    for (const auto& a : images) rasters.push_back(to_raster(a));
    std::vector<const GrayImage*> ptrs;
    for (const auto& r : rasters) ptrs.push_back(&r);
    InferenceConfig inference;
    inference.score_threshold = score_threshold;
    inference.nms_iou = nms_iou;
    inference.validate();
    std::vector<ImagePrediction> preds;
    {
      py::gil_scoped_release release;
      preds = dentalx::predict(model_, ptrs, inference);
    }
    py::list out;
    for (const auto& p : preds) {
      py::dict d;
      d["detections"] = p.detections;
      d["anatomy"] = to_array(p.anatomy);
      out.append(d);
    }
    return out;
  }

  py::object config() const { return to_python(model_->config().to_json()); }
  std::optional<std::string> mode() const {
    return mode_ ? std::optional<std::string>(to_string(*mode_)) : std::nullopt;
  }
  int64_t num_parameters() const { return parameter_count(*model_); }

 private:
  DentalXModel model_;
  std::optional<TrainMode> mode_;
};

}  // namespace

PYBIND11_MODULE(_dentalx, m) {
  m.doc() = "Joint dental disease detection and anatomy segmentation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Box>(m, "Box")
      .def(py::init<>())
      .def(py::init([](double x1, double y1, double x2, double y2) { return Box{x1, y1, x2, y2}; }), py::arg("x1"),
           py::arg("y1"), py::arg("x2"), py::arg("y2"))
      .def_readwrite("x1", &Box::x1)
      .def_readwrite("y1", &Box::y1)
      .def_readwrite("x2", &Box::x2)
      .def_readwrite("y2", &Box::y2)
      .def("area", &Box::area)
      .def("as_tuple", [](const Box& b) { return py::make_tuple(b.x1, b.y1, b.x2, b.y2); })
      .def(py::self == py::self)
      .def("__repr__", [](const Box& b) {
        std::ostringstream s;
        s << "Box(" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2 << ")";
        return s.str();
      });

  py::class_<Detection>(m, "Detection")
      .def(py::init([](const Box& box, int class_id, double score) { return Detection{box, class_id, score}; }),
           py::arg("box"), py::arg("class_id"), py::arg("score"))
      .def_readwrite("box", &Detection::box)
      .def_readwrite("class_id", &Detection::class_id)
      .def_readwrite("score", &Detection::score)
      .def(py::self == py::self)
      .def("__repr__", [](const Detection& d) {
        std::ostringstream s;
        s << "Detection(class " << d.class_id << ", score " << d.score << ", box " << d.box.x1 << " " << d.box.y1
          << " " << d.box.x2 << " " << d.box.y2 << ")";
        return s.str();
      });

  py::class_<GroundTruthBox>(m, "GroundTruthBox")
      .def(py::init([](const Box& box, int class_id) { return GroundTruthBox{box, class_id}; }), py::arg("box"),
           py::arg("class_id"))
      .def_readwrite("box", &GroundTruthBox::box)
      .def_readwrite("class_id", &GroundTruthBox::class_id);

  m.def("box_iou", &box_iou, py::arg("a"), py::arg("b"));
  m.def(
      "nms", [](const std::vector<Detection>& d, double thr) { return nms(d, thr); }, py::arg("detections"),
      py::arg("iou_threshold"));

  m.def(
      "compute_ap",
      [](const std::vector<std::vector<Detection>>& preds, const std::vector<std::vector<GroundTruthBox>>& gts,
         int num_classes) { return to_python(to_json(compute_ap(preds, gts, num_classes))); },
      py::arg("predictions"), py::arg("ground_truth"), py::arg("num_classes"),
      "AP50, AP75 and AP50:95 with per-class detail; one inner list per image.");

  m.def(
      "compute_seg_metrics",
      [](const std::vector<U8Array>& preds, const std::vector<U8Array>& gts, int num_labels) {
        std::vector<LabelMask> p, g;
        for (const auto& a : preds) p.push_back(to_raster(a));
        for (const auto& a : gts) g.push_back(to_raster(a));
        return to_python(to_json(compute_seg_metrics(p, g, num_labels)));
      },
      py::arg("predictions"), py::arg("ground_truth"), py::arg("num_labels") = kNamedAnatomyClasses + 1);

  m.def(
      "domain_rule_filter",
      [](const std::vector<Detection>& dets, const U8Array& anatomy, const py::object& rules, double threshold,
         int num_classes) {
        return domain_rule_filter(dets, to_raster(anatomy), rules_from(rules, num_classes), threshold);
      },
      py::arg("detections"), py::arg("anatomy"), py::arg("rules") = py::none(), py::arg("overlap_threshold") = 0.5,
      py::arg("num_classes") = kDiseaseTemplates,
      "Drops detections whose box mostly covers anatomy the disease class may not occupy.");

  m.def(
      "default_rules", [](int num_classes) { return to_python(DiseaseRuleTable::defaults(num_classes).to_json(num_classes)); },
      py::arg("num_classes") = kDiseaseTemplates);
  m.def("disease_names", &disease_names, py::arg("num_classes") = kDiseaseTemplates);
  m.def("anatomy_name", &anatomy_name, py::arg("label"));

  m.def(
      "generate_scene",
      [](std::uint64_t seed, int size, int classes, const py::object& overrides) {
        const Scene s = generate_scene(seed, generator_from(size, classes, overrides));
        py::dict d;
        d["image"] = to_array(s.image);
        d["mask"] = to_array(s.mask);
        d["targets"] = s.targets();
        d["attempts"] = s.attempts;
        return d;
      },
      py::arg("seed"), py::arg("size") = 128, py::arg("classes") = kDiseaseTemplates,
      py::arg("overrides") = py::none());

  m.def(
      "export_dataset",
      [](int n_det, int n_seg, std::uint64_t seed, const std::filesystem::path& out_dir, int size, int classes,
         const std::string& split) {
        const auto config = generator_from(size, classes, py::none());
        DatasetManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = export_dataset(n_det, n_seg, seed, out_dir, config, split);
        }
        return to_python(manifest.to_json());
      },
      py::arg("n_det"), py::arg("n_seg"), py::arg("seed"), py::arg("out_dir"), py::arg("size") = 128,
      py::arg("classes") = kDiseaseTemplates, py::arg("split") = "train");

  py::class_<PyModel>(m, "Model")
      .def(py::init(&PyModel::create), py::arg("config") = py::none(),
           "Freshly initialised model; config keys as in ModelConfig JSON.")
      .def_static("load", &PyModel::load, py::arg("path"))
      .def("save", &PyModel::save, py::arg("path"))
      .def("predict", &PyModel::predict, py::arg("images"), py::arg("score_threshold") = 0.01,
           py::arg("nms_iou") = 0.65)
      .def_property_readonly("config", &PyModel::config)
      .def_property_readonly("mode", &PyModel::mode)
      .def_property_readonly("num_parameters", &PyModel::num_parameters);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a dentalx subcommand; returns (exit_code, stdout, stderr).");
}
