#include <pybind11/numpy.h>

#include <iostream>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ssql/checkpoint.hpp"
#include "ssql/cli.hpp"
#include "ssql/config.hpp"
#include "ssql/diag.hpp"
#include "ssql/eval.hpp"
#include "ssql/quant.hpp"
#include "ssql/ssl.hpp"
#include "ssql/train.hpp"

namespace py = pybind11;
using namespace ssql;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor matrix_to_tensor(const FloatArray& a, const char* name) {
    if (a.ndim() != 2) throw Error(std::string(name) + " must be a 2-d array");
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor::from_data({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))},
                             std::move(data));
}

Tensor any_to_tensor(const FloatArray& a) {
    Shape shape(a.ndim());
    for (int i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor::from_data(shape, std::move(data));
}

py::array tensor_to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    auto src = t.data();
    std::copy(src.begin(), src.end(), out.mutable_data());
    return out;
}

py::array images_to_array(const std::vector<float>& flat, int n, int c, int s) {
    py::array_t<float> out({n, c, s, s});
    std::copy(flat.begin(), flat.end(), out.mutable_data());
    return out;
}

// Opaque spec+parameters pair; the bound operations mutate it in place.
struct PyModel {
    nn::ModelSpec spec;
    nn::ModelParams params;
};

eval::EvalProtocol protocol_from_text(const std::string& text, eval::EvalProtocol base) {
    config::Map m = config::parse(text);
    for (const auto& [k, v] : m)
        check(k.rfind("eval.", 0) == 0, "protocol text accepts only eval.* keys, got '" + k + "'");
    config::apply_eval(m, base);
    base.validate();
    return base;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "quantization-friendly self-supervised pretraining (forward surface)";
    m.attr("__version__") = cli::kVersionString;
    m.def("version", [] { return std::string(cli::kVersionString); });

    py::register_exception<Error>(m, "SsqlError", PyExc_RuntimeError);

    // ---- quantizer ----
    m.def(
        "compute_qparams",
        [](const FloatArray& x, int bits) {
            Tensor t = any_to_tensor(x);
            quant::QuantParams qp = quant::compute_qparams(t, bits);
            return py::make_tuple(qp.scale, qp.zero_point);
        },
        py::arg("x"), py::arg("bits"),
        "per-tensor affine parameters (scale, zero_point) from the min/max of x");
    m.def(
        "quantize_dequantize",
        [](const FloatArray& x, int bits) {
            NoGradGuard ng;
            Tensor t = any_to_tensor(x);
            return tensor_to_array(quant::fake_quant(t, bits));
        },
        py::arg("x"), py::arg("bits"), "uniform affine round-trip at the given bit width");

    // ---- losses (forward values on [n, d] embeddings) ----
    auto loss4 = [](const FloatArray& a, const FloatArray& b, const FloatArray& c,
                    const FloatArray& d, auto&& fn) {
        NoGradGuard ng;
        return static_cast<double>(fn(matrix_to_tensor(a, "p1"), matrix_to_tensor(b, "p2"),
                                      matrix_to_tensor(c, "z1"), matrix_to_tensor(d, "z2"))
                                       .data()[0]);
    };
    m.def(
        "simsiam_loss",
        [loss4](const FloatArray& p1, const FloatArray& p2, const FloatArray& z1,
                const FloatArray& z2) { return loss4(p1, p2, z1, z2, ssl::simsiam_loss); },
        py::arg("p1"), py::arg("p2"), py::arg("z1"), py::arg("z2"));
    m.def(
        "ssql_loss",
        [loss4](const FloatArray& pq1, const FloatArray& pq2, const FloatArray& z1,
                const FloatArray& z2) { return loss4(pq1, pq2, z1, z2, ssl::ssql_loss); },
        py::arg("pq1"), py::arg("pq2"), py::arg("z1"), py::arg("z2"));
    m.def(
        "info_nce_loss",
        [](const FloatArray& z1, const FloatArray& z2, float tau) {
            NoGradGuard ng;
            return static_cast<double>(
                ssl::info_nce_loss(matrix_to_tensor(z1, "z1"), matrix_to_tensor(z2, "z2"), tau)
                    .data()[0]);
        },
        py::arg("z1"), py::arg("z2"), py::arg("tau") = 0.5f);
    m.def(
        "decompose",
        [](const FloatArray& zq, const FloatArray& z, const FloatArray& target) {
            Tensor a = matrix_to_tensor(zq, "zq");
            Tensor b = matrix_to_tensor(z, "z");
            Tensor c = matrix_to_tensor(target, "target");
            check(a.shape() == b.shape() && b.shape() == c.shape(),
                  "decompose: shapes must match");
            auto rec = diag::decompose_embeddings(a.data().data(), b.data().data(),
                                                  c.data().data(), a.shape()[0], a.shape()[1]);
            py::dict d;
            d["q_term"] = rec.q_term;
            d["cl_term"] = rec.cl_term;
            d["cross_term"] = rec.cross_term;
            d["total"] = rec.total;
            return d;
        },
        py::arg("zq"), py::arg("z"), py::arg("target"),
        "squared-L2 split of ||zq - target||^2 into quantization, task, and cross parts");

    // ---- data ----
    py::class_<DatasetHandle>(m, "Dataset")
        .def_readonly("num_classes", &DatasetHandle::num_classes)
        .def_readonly("image_size", &DatasetHandle::image_size)
        .def_readonly("channels", &DatasetHandle::channels)
        .def_property_readonly("train_count", &DatasetHandle::train_count)
        .def_property_readonly("test_count", &DatasetHandle::test_count)
        .def("train_images",
             [](const DatasetHandle& d) {
                 return images_to_array(d.train_images, d.train_count(), d.channels, d.image_size);
             })
        .def("test_images",
             [](const DatasetHandle& d) {
                 return images_to_array(d.test_images, d.test_count(), d.channels, d.image_size);
             })
        .def("train_labels", [](const DatasetHandle& d) { return py::cast(d.train_labels); })
        .def("test_labels", [](const DatasetHandle& d) { return py::cast(d.test_labels); })
        .def("__repr__", [](const DatasetHandle& d) {
            return "<Dataset " + std::to_string(d.train_count()) + "+" +
                   std::to_string(d.test_count()) + " images, " +
                   std::to_string(d.num_classes) + " classes>";
        });
    m.def(
        "gen_synthetic",
        [](int classes, int train_per_class, int test_per_class, int image_size, int channels,
           int blobs_per_class, float separation, float noise_std, uint64_t seed) {
            SyntheticSpec sp;
            sp.num_classes = classes;
            sp.train_per_class = train_per_class;
            sp.test_per_class = test_per_class;
            sp.image_size = image_size;
            sp.channels = channels;
            sp.blobs_per_class = blobs_per_class;
            sp.separation = separation;
            sp.noise_std = noise_std;
            return gen_synthetic(sp, seed);
        },
        py::arg("classes") = 4, py::arg("train_per_class") = 125, py::arg("test_per_class") = 50,
        py::arg("image_size") = 12, py::arg("channels") = 3, py::arg("blobs_per_class") = 3,
        py::arg("separation") = 1.0f, py::arg("noise_std") = 0.15f, py::arg("seed") = 0);
    m.def("load_cifar10", &load_cifar10, py::arg("dir"),
          "read the standard binary batches (50000 train / 10000 test)");
    m.def("stratified_subset", &stratified_subset, py::arg("data"), py::arg("n"), py::arg("seed"),
          "seeded class-balanced train subset; the test split is kept whole");

    // ---- model / training / evaluation ----
    py::class_<nn::ModelSpec>(m, "ModelSpec")
        .def(py::init([](const std::string& backbone, int input_channels, int input_size,
                         std::vector<int> channels, std::vector<int> mlp_widths,
                         int projection_hidden, int projection_dim, int predictor_hidden) {
                 nn::ModelSpec s;
                 s.backbone = nn::parse_backbone(backbone);
                 s.input_channels = input_channels;
                 s.input_size = input_size;
                 s.channels = std::move(channels);
                 s.mlp_widths = std::move(mlp_widths);
                 s.projection_hidden = projection_hidden;
                 s.projection_dim = projection_dim;
                 s.predictor_hidden = predictor_hidden;
                 s.validate();
                 return s;
             }),
             py::arg("backbone") = "tiny_cnn", py::arg("input_channels") = 3,
             py::arg("input_size") = 32, py::arg("channels") = std::vector<int>{16, 32, 64, 128},
             py::arg("mlp_widths") = std::vector<int>{256, 128},
             py::arg("projection_hidden") = 128, py::arg("projection_dim") = 128,
             py::arg("predictor_hidden") = 32)
        .def_property_readonly("backbone",
                               [](const nn::ModelSpec& s) { return nn::backbone_name(s.backbone); })
        .def_readonly("input_channels", &nn::ModelSpec::input_channels)
        .def_readonly("input_size", &nn::ModelSpec::input_size)
        .def_property_readonly("feature_dim", &nn::ModelSpec::feature_dim)
        .def("to_text", &nn::ModelSpec::to_text)
        .def_static("from_text", &nn::ModelSpec::from_text);

    py::class_<PyModel>(m, "Model")
        .def_property_readonly("spec", [](const PyModel& mm) { return mm.spec; })
        .def("param_names",
             [](const PyModel& mm) {
                 std::vector<std::string> names;
                 for (const auto& item : mm.params.items) names.push_back(item.name);
                 return names;
             })
        .def("param",
             [](const PyModel& mm, const std::string& name) {
                 return tensor_to_array(mm.params.at(name));
             },
             py::arg("name"))
        .def("__repr__", [](const PyModel& mm) {
            return "<Model " + mm.spec.to_text() + ">";
        });
    m.def(
        "build_model",
        [](const nn::ModelSpec& spec, uint64_t seed) {
            return PyModel{spec, nn::build_model(spec, seed)};
        },
        py::arg("spec"), py::arg("seed") = 0);

    m.def(
        "pretrain",
        [](PyModel& model, const DatasetHandle& data, const std::string& config_text) {
            train::TrainConfig cfg = config::train_from_text(config_text);
            train::Trainer trainer(model.spec, cfg, std::move(model.params));
            std::vector<train::StepMetrics> log = train::pretrain(trainer, data);
            model.params = std::move(trainer.params);
            return train::metrics_to_csv(log);
        },
        py::arg("model"), py::arg("data"), py::arg("config_text") = "",
        "train in place; returns the step metrics as CSV text");

    m.def(
        "linear_probe",
        [](PyModel& model, const DatasetHandle& data, const std::string& bits,
           const std::string& protocol_text) {
            eval::EvalProtocol proto =
                protocol_from_text(protocol_text, eval::EvalProtocol::linear_default());
            return eval::linear_probe(model.spec, model.params, data,
                                      quant::parse_bit_pair(bits), proto);
        },
        py::arg("model"), py::arg("data"), py::arg("bits") = "fp",
        py::arg("protocol_text") = "", "accuracy in percent under PTQ at the given bit pair");

    m.def(
        "sweep",
        [](const std::vector<std::pair<std::string, PyModel*>>& entries,
           const DatasetHandle& data, const std::string& mode, const std::string& protocol_text) {
            eval::EvalProtocol proto = protocol_from_text(
                protocol_text, mode == "finetune_ptq" ? eval::EvalProtocol::finetune_default()
                                                      : eval::EvalProtocol::linear_default());
            proto.mode = eval::parse_eval_mode(mode);
            std::vector<eval::SweepEntry> rows;
            for (const auto& [name, pm] : entries)
                rows.push_back({name, &pm->spec, &pm->params});
            return eval::sweep(rows, data, proto).to_csv();
        },
        py::arg("entries"), py::arg("data"), py::arg("mode") = "linear_eval",
        py::arg("protocol_text") = "", "multi-model evaluation table as CSV text");

    m.def(
        "save_checkpoint",
        [](const std::string& path, const PyModel& model, const std::string& config_text) {
            ckpt::Checkpoint c;
            c.spec = model.spec;
            c.params = model.params.clone();
            c.cfg = config::train_from_text(config_text);
            ckpt::save_checkpoint(path, c);
        },
        py::arg("path"), py::arg("model"), py::arg("config_text") = "");
    m.def(
        "load_checkpoint",
        [](const std::string& path) {
            ckpt::Checkpoint c = ckpt::load_checkpoint(path);
            return py::make_tuple(PyModel{c.spec, std::move(c.params)},
                                  config::train_to_text(c.cfg));
        },
        py::arg("path"), "returns (model, train_config_text)");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            int code = cli::run_cli(args);
            std::cout.flush();  // surface iostream output to capturing callers
            std::cerr.flush();
            return code;
        },
        py::arg("args"), "invoke the command-line interface; returns its exit code");
}
