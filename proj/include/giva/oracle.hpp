#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "giva/adapters.hpp"
#include "giva/matrix.hpp"
#include "giva/nn.hpp"

namespace giva::oracle {

struct EquivalenceReport {
    std::string left;
    std::string right;
    double max_abs_diff = 0.0;
    double rel_fro_diff = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// The basis-selection objective || G A^T B^T B A - G ||_F by explicit
/// multiplication. A is r x d, B is m x r.
double objective_value(const Matrix& g, const Matrix& a, const Matrix& b);

/// Eckart-Young optimum sqrt(sum of squared singular values past r), from
/// the exact SVD.
double best_rank_r_error(const Matrix& g, index_t r);

/// Orthonormal columns from a seeded Gaussian draw.
Matrix random_orthonormal(index_t rows, index_t cols, std::uint64_t seed);

enum class BasisChoice { v_r_u_r, v_r_u_2r, v_r_q, vera_random };

/// Verifies the one-step guarantee: build bases from the probe gradient,
/// take one plain SGD step on the scaling factor in the space the update
/// rule is derived in (the full m x m left factor; its diagonal restriction
/// cannot realize the optimum), and compare the merged update against
/// -eta * (rank-r truncation of the gradient's SVD). The probe gradient must
/// be the gradient of this exact batch, else ContractError.
EquivalenceReport first_step_equivalence(const nn::LinearLayer& layer, const Matrix& probe_grad,
                                         index_t r, BasisChoice basis, double eta,
                                         const nn::Batch& batch,
                                         nn::LossKind loss = nn::LossKind::mse,
                                         std::uint64_t seed = 0, double tolerance = 1e-8);

/// Central finite differences (f(x + h e_i) - f(x - h e_i)) / 2h with
/// h = eps * max(1, |x_i|).
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta, double eps = 1e-5);

/// Worst per-component relative error between the analytic adapter gradients
/// and central finite differences over every trainable parameter in the
/// model. Parameters are restored afterwards.
double max_rel_grad_error(nn::Model& model, const nn::Batch& batch, double eps = 1e-5);

} // namespace giva::oracle
