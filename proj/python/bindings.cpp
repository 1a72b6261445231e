#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "evmost/artifact.hpp"
#include "evmost/checkpoint.hpp"
#include "evmost/distributions.hpp"
#include "evmost/errors.hpp"
#include "evmost/eval.hpp"
#include "evmost/fusion.hpp"
#include "evmost/losses.hpp"
#include "evmost/model.hpp"

namespace py = pybind11;
using namespace evmost;

namespace {

py::dict dataset_dict(const Dataset& d) {
  py::list features;
  for (std::size_t m = 0; m < d.modalities(); ++m) {
    py::list rows;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto r = d.row(m, i);
      rows.append(std::vector<double>(r.begin(), r.end()));
    }
    features.append(rows);
  }
  py::dict out;
  out["features"] = features;
  out["labels"] = d.labels;
  out["classes"] = d.classes;
  out["split"] = d.split;
  return out;
}

FeatureViews views_of(const std::vector<std::vector<double>>& x) {
  FeatureViews v;
  for (const auto& m : x) v.emplace_back(m);
  return v;
}

}  // namespace

PYBIND11_MODULE(_evmost, m) {
  m.doc() = "Evidential multimodal classification with mixture-of-Student's-t fusion";
  m.attr("__version__") = kToolVersion;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<NIGParams>(m, "NIGParams")
      .def(py::init<double, double, double, double>(), py::arg("gamma"), py::arg("delta"),
           py::arg("alpha"), py::arg("beta"))
      .def_property_readonly("gamma", &NIGParams::gamma)
      .def_property_readonly("delta", &NIGParams::delta)
      .def_property_readonly("alpha", &NIGParams::alpha)
      .def_property_readonly("beta", &NIGParams::beta)
      .def("__repr__", [](const NIGParams& p) {
        return "NIGParams(" + std::to_string(p.gamma()) + ", " + std::to_string(p.delta()) +
               ", " + std::to_string(p.alpha()) + ", " + std::to_string(p.beta()) + ")";
      });

  py::class_<StudentT>(m, "StudentT")
      .def(py::init<double, double, double>(), py::arg("u"), py::arg("sigma"), py::arg("v"))
      .def_property_readonly("u", &StudentT::u)
      .def_property_readonly("sigma", &StudentT::sigma)
      .def_property_readonly("v", &StudentT::v)
      .def("__eq__", [](const StudentT& a, const StudentT& b) { return a == b; })
      .def("__repr__", [](const StudentT& s) {
        return "StudentT(" + std::to_string(s.u()) + ", " + std::to_string(s.sigma()) + ", " +
               std::to_string(s.v()) + ")";
      });

  py::class_<FusedStudentT>(m, "FusedStudentT")
      .def_readonly("st", &FusedStudentT::st)
      .def_readonly("source_index", &FusedStudentT::source_index);

  m.def("nig_aleatoric", &nig_aleatoric);
  m.def("nig_epistemic", &nig_epistemic);
  m.def("nig_to_student_t", &nig_to_student_t);
  m.def("student_t_pdf", &student_t_pdf);
  m.def("student_t_variance", &student_t_variance);
  m.def(
      "nig_marginal_pdf_quadrature",
      [](const NIGParams& p, double y) { return nig_marginal_pdf_quadrature(p, y); },
      "Brute-force double integral of the NIG marginal likelihood at y");

  m.def("fuse_pair", &fuse_pair);
  m.def("fuse", [](const std::vector<StudentT>& inputs) { return fuse_many(inputs); },
        "Left fold of fuse_pair over the inputs");
  m.def("fused_prediction", [](const FusedStudentT& f) {
    const FusedPrediction p = fused_prediction(f);
    return py::make_tuple(p.y_hat, p.uncertainty);
  });

  m.def("nig_nll", &nig_nll);
  m.def("student_t_nll", &student_t_nll);
  m.def("cross_entropy",
        [](const std::vector<double>& logits, std::size_t label) {
          return cross_entropy(logits, label);
        });
  m.def(
      "evidential_objective",
      [](const std::vector<std::vector<NIGParams>>& per_modality, std::size_t label,
         std::size_t classes, double lambda) {
        const auto onehot = make_onehot(label, classes);
        const LossBreakdown b = evidential_objective(per_modality, onehot, lambda);
        py::dict d;
        d["per_modality"] = b.per_modality_nig;
        d["fused"] = b.fused_st;
        d["total"] = b.total;
        return d;
      },
      py::arg("per_modality"), py::arg("label"), py::arg("classes"),
      py::arg("lam") = kDefaultLambda);

  m.def("accuracy", [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& l) {
    return accuracy(p, l);
  });
  m.def(
      "cohen_kappa",
      [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& l, std::size_t k,
         bool quadratic) { return cohen_kappa(p, l, k, quadratic); },
      py::arg("preds"), py::arg("labels"), py::arg("classes"), py::arg("quadratic") = false);
  m.def(
      "ece",
      [](const std::vector<double>& conf, const std::vector<bool>& correct, std::size_t bins) {
        std::unique_ptr<bool[]> flags(new bool[correct.size()]);
        for (std::size_t i = 0; i < correct.size(); ++i) flags[i] = correct[i];
        return expected_calibration_error(conf, std::span<const bool>(flags.get(), correct.size()),
                                          bins)
            .ece;
      },
      py::arg("confidences"), py::arg("correct"), py::arg("n_bins") = 10);

  m.def(
      "generate_synthetic",
      [](std::size_t classes, std::size_t n_per_class, std::vector<std::size_t> dims,
         std::vector<double> separation, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.classes = classes;
        spec.n_per_class = n_per_class;
        spec.dims = std::move(dims);
        spec.separation = std::move(separation);
        spec.seed = seed;
        const DatasetSplits s = generate_synthetic(spec);
        py::dict out;
        out["train"] = dataset_dict(s.train);
        out["val"] = dataset_dict(s.val);
        out["test"] = dataset_dict(s.test);
        return out;
      },
      py::arg("classes") = 3, py::arg("n_per_class") = 100,
      py::arg("dims") = std::vector<std::size_t>{4, 4},
      py::arg("separation") = std::vector<double>{3.0, 3.0}, py::arg("seed") = 42);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("classes", [](const Checkpoint& c) { return c.model.classes(); })
      .def_property_readonly("modalities",
                             [](const Checkpoint& c) { return c.model.modalities(); })
      .def_readonly("config_hash", &Checkpoint::config_hash)
      .def(
          "predict",
          [](const Checkpoint& c, std::vector<std::vector<double>> x, bool raw_features) {
            if (!raw_features && c.standardization) {
              const auto& s = *c.standardization;
              for (std::size_t m = 0; m < x.size() && m < s.mean.size(); ++m) {
                if (x[m].size() != s.mean[m].size()) continue;
                for (std::size_t f = 0; f < x[m].size(); ++f) {
                  x[m][f] = (x[m][f] - s.mean[m][f]) / s.stddev[m][f];
                }
              }
            }
            const Prediction p = c.model.predict(views_of(x));
            py::dict d;
            d["predicted_class"] = p.predicted_class;
            d["confidence"] = p.confidence;
            d["aleatoric"] = p.modality_aleatoric;
            d["epistemic"] = p.modality_epistemic;
            d["fused_uncertainty"] = p.fused_uncertainty;
            return d;
          },
          py::arg("features"), py::arg("standardized") = false,
          "Predict for one sample given per-modality feature lists. Raw features are "
          "z-scored with the checkpoint statistics unless standardized=True.");

  m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path); });
}
