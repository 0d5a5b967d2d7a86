#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "giva/adapters.hpp"
#include "giva/linalg.hpp"
#include "giva/oracle.hpp"
#include "giva/runconfig.hpp"
#include "giva/runner.hpp"

#include <json.hpp>

namespace py = pybind11;
using giva::Matrix;
using giva::index_t;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) {
        throw py::value_error("expected a 2-d float array");
    }
    const auto rows = static_cast<index_t>(arr.shape(0));
    const auto cols = static_cast<index_t>(arr.shape(1));
    Matrix m(rows, cols);
    std::memcpy(m.data().data(), arr.data(), rows * cols * sizeof(double));
    return m;
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> out({static_cast<py::ssize_t>(m.rows()),
                             static_cast<py::ssize_t>(m.cols())});
    std::memcpy(out.mutable_data(), m.data().data(), m.rows() * m.cols() * sizeof(double));
    return out;
}

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
    return out;
}

using NpMatrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

} // namespace

PYBIND11_MODULE(_giva, mod) {
    mod.doc() = "gradient-informed vector adapters: linear algebra kernels and run drivers";

    py::register_exception<giva::Error>(mod, "GivaError");

    mod.def(
        "svd_full",
        [](const NpMatrix& a) {
            auto f = giva::linalg::svd_full(to_matrix(a));
            return py::make_tuple(to_array(f.U), to_array(f.S), to_array(f.V));
        },
        py::arg("a"), "Full SVD; returns (U, S, V) with descending singular values.");

    mod.def(
        "svd_lowrank",
        [](const NpMatrix& a, index_t rank, index_t oversample, index_t power_iters,
           std::uint64_t seed) {
            auto f = giva::linalg::svd_lowrank(to_matrix(a), rank, oversample, power_iters, seed);
            return py::make_tuple(to_array(f.U), to_array(f.S), to_array(f.V));
        },
        py::arg("a"), py::arg("rank"), py::arg("oversample") = 8, py::arg("power_iters") = 4,
        py::arg("seed") = 0,
        "Randomized truncated SVD; returns (U, S, V) for the top `rank` values.");

    mod.def(
        "qr_orthonormal",
        [](const NpMatrix& a) { return to_array(giva::linalg::qr_orthonormal(to_matrix(a))); },
        py::arg("a"), "Orthonormal basis for the column span, via Gram-Schmidt.");

    mod.def(
        "giva_bases",
        [](const NpMatrix& grad, index_t rank, const std::string& strategy, std::uint64_t seed) {
            auto bases = giva::adapters::giva_bases_from_gradient(
                to_matrix(grad), rank, giva::adapters::basis_from_name(strategy), seed);
            return py::make_tuple(to_array(*bases.a), to_array(*bases.b));
        },
        py::arg("grad"), py::arg("rank"), py::arg("strategy") = "v_r_u_r", py::arg("seed") = 0,
        "Frozen bases (A, B) built from a first-step gradient estimate.");

    mod.def(
        "objective_value",
        [](const NpMatrix& g, const NpMatrix& a, const NpMatrix& b) {
            return giva::oracle::objective_value(to_matrix(g), to_matrix(a), to_matrix(b));
        },
        py::arg("g"), py::arg("a"), py::arg("b"),
        "Frobenius error of projecting g onto the (a, b) subspace pair.");

    mod.def(
        "best_rank_r_error",
        [](const NpMatrix& g, index_t rank) {
            return giva::oracle::best_rank_r_error(to_matrix(g), rank);
        },
        py::arg("g"), py::arg("rank"), "Optimal rank-r approximation error of g.");

    mod.def(
        "train_run",
        [](const std::string& config_json, const std::string& out_dir) {
            auto cfg = giva::runcfg::parse_run_config(nlohmann::json::parse(config_json));
            cfg.validate();
            giva::runner::run_training(cfg, out_dir);
            std::ifstream in(std::filesystem::path(out_dir) / "summary.json");
            std::ostringstream buf;
            buf << in.rdbuf();
            return buf.str();
        },
        py::arg("config_json"), py::arg("out_dir"),
        "Runs one training job into out_dir and returns the summary JSON text.");

    mod.def(
        "verify_run",
        [](const std::string& out_dir, const std::string& config_json) {
            auto doc = config_json.empty() ? nlohmann::json::object()
                                           : nlohmann::json::parse(config_json);
            auto cfg = giva::runcfg::parse_run_config(doc);
            cfg.validate();
            return giva::runner::cmd_verify(cfg, out_dir);
        },
        py::arg("out_dir"), py::arg("config_json") = std::string(),
        "Runs the self-check battery; returns 0 when every check passes.");
}
