#include "giva/oracle.hpp"

#include <cmath>

#include "giva/error.hpp"
#include "giva/linalg.hpp"
#include "giva/rng.hpp"
#include "giva/trainer.hpp"

namespace giva::oracle {

double objective_value(const Matrix& g, const Matrix& a, const Matrix& b) {
    if (a.cols() != g.cols() || b.rows() != g.rows() || a.rows() != b.cols()) {
        throw DimensionError("objective_value: shapes do not compose (G " +
                             std::to_string(g.rows()) + "x" + std::to_string(g.cols()) + ", A " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ", B " +
                             std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
    Matrix gat = matmul(g, transpose(a));
    Matrix btb = matmul(transpose(b), b);
    Matrix approx = matmul(matmul(gat, btb), a);
    return linalg::frobenius_norm(sub(approx, g));
}

double best_rank_r_error(const Matrix& g, index_t r) {
    const index_t k = std::min(g.rows(), g.cols());
    if (r < 1 || r > k) {
        throw RankError("best_rank_r_error: r=" + std::to_string(r) + " outside [1, " +
                        std::to_string(k) + "]");
    }
    linalg::SvdFactors f = linalg::svd_full(g);
    double sq = 0.0;
    for (index_t i = r; i < f.S.size(); ++i) {
        sq += f.S[i] * f.S[i];
    }
    return std::sqrt(sq);
}

Matrix random_orthonormal(index_t rows, index_t cols, std::uint64_t seed) {
    return linalg::qr_orthonormal(gaussian_matrix(rows, cols, seed));
}

EquivalenceReport first_step_equivalence(const nn::LinearLayer& layer, const Matrix& probe_grad,
                                         index_t r, BasisChoice basis, double eta,
                                         const nn::Batch& batch, nn::LossKind loss,
                                         std::uint64_t seed, double tolerance) {
    const index_t m = layer.out_dim();
    const index_t d = layer.in_dim();

    // Recompute the gradient on the supplied batch and insist it matches the
    // probe; the one-step identity only speaks about the batch the step uses.
    nn::Model model;
    nn::LinearLayer bare = layer;
    bare.adapter = nullptr;
    model.stages.push_back(nn::DenseStage{std::move(bare), nn::Activation::identity});
    model.loss = loss;
    auto [batch_loss, grads] = nn::loss_and_full_grad(model, batch);
    (void)batch_loss;
    const Matrix& g = grads[0];
    const double scale = std::max(1.0, max_abs(g));
    if (probe_grad.rows() != m || probe_grad.cols() != d ||
        max_abs_diff(g, probe_grad) > 1e-10 * scale) {
        throw ContractError("first_step_equivalence: probe gradient does not match the "
                            "gradient of the supplied batch; probe and step must share one "
                            "batch");
    }

    // Bases at the Gamma = 0, Lambda = I initialization.
    Matrix a, b;
    if (basis == BasisChoice::vera_random) {
        a = kaiming_uniform_matrix(r, d, d, mix_seed(seed, 21));
        b = kaiming_uniform_matrix(m, r, r, mix_seed(seed, 22));
    } else {
        const auto strategy = basis == BasisChoice::v_r_u_r   ? adapters::GivaBasis::v_r_u_r
                              : basis == BasisChoice::v_r_u_2r ? adapters::GivaBasis::v_r_u_2r
                                                               : adapters::GivaBasis::v_r_q;
        adapters::GivaBases gb = adapters::giva_bases_from_gradient(
            probe_grad, r, strategy, seed, adapters::SvdRoute::exact);
        a = *gb.a;
        b = *gb.b;
    }

    // One descent step on the left scaling factor in the space the update
    // rule is derived in: the gradient of the loss with respect to that
    // factor at zero is G A^T Lambda^T B^T with Lambda = I.
    Matrix gamma_grad = matmul(matmul(g, transpose(a)), transpose(b));
    Matrix gamma1(m, m);
    trainer::sgd_step(gamma1.data(), gamma_grad.data(), eta);
    Matrix delta_w1 = matmul(matmul(gamma1, b), a);

    // Lambda stays exactly at I for this step: its gradient vanishes at
    // Gamma = 0, so the second-order cross term is exactly zero.
    Matrix target = eta == 0.0
                        ? Matrix(m, d)
                        : scaled(linalg::reconstruct(
                                     linalg::truncate_rank(linalg::svd_full(g), r)),
                                 -eta);

    EquivalenceReport rep;
    rep.left = "merged update after one plain SGD step at the gradient-informed init";
    rep.right = "-eta * best rank-" + std::to_string(r) + " approximation of the batch gradient";
    rep.tolerance = tolerance;
    rep.max_abs_diff = max_abs_diff(delta_w1, target);
    const double denom = linalg::frobenius_norm(target);
    const double diff = linalg::frobenius_norm(sub(delta_w1, target));
    rep.rel_fro_diff = denom > 0.0 ? diff / denom : diff;
    rep.pass = rep.rel_fro_diff <= tolerance;
    return rep;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta, double eps) {
    if (!(eps > 0.0)) {
        throw ConfigError("finite_diff_grad: eps must be > 0");
    }
    std::vector<double> x(theta.begin(), theta.end());
    std::vector<double> grad(x.size(), 0.0);
    for (index_t i = 0; i < x.size(); ++i) {
        const double h = eps * std::max(1.0, std::abs(x[i]));
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericalError("finite_diff_grad: non-finite loss at coordinate " +
                                 std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_rel_grad_error(nn::Model& model, const nn::Batch& batch, double eps) {
    std::vector<trainer::ParamRef> params = trainer::trainable_params(model);
    std::vector<double> theta;
    for (const trainer::ParamRef& p : params) {
        theta.insert(theta.end(), p.values.begin(), p.values.end());
    }
    auto write_theta = [&](std::span<const double> t) {
        index_t off = 0;
        for (trainer::ParamRef& p : params) {
            std::copy(t.begin() + off, t.begin() + off + p.values.size(), p.values.begin());
            off += p.values.size();
        }
    };

    auto [loss, grads] = nn::loss_and_grads(model, batch);
    (void)loss;
    std::vector<double> analytic;
    for (const std::vector<double>& block : trainer::flatten_adapter_grads(grads)) {
        analytic.insert(analytic.end(), block.begin(), block.end());
    }
    if (analytic.size() != theta.size()) {
        throw ContractError("max_rel_grad_error: gradient size " +
                            std::to_string(analytic.size()) + " does not match parameter size " +
                            std::to_string(theta.size()));
    }

    auto f = [&](std::span<const double> t) {
        write_theta(t);
        return nn::evaluate(model, batch);
    };
    const std::vector<double> numeric = finite_diff_grad(f, theta, eps);
    write_theta(theta);

    double worst = 0.0;
    for (index_t i = 0; i < theta.size(); ++i) {
        const double rel =
            std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace giva::oracle
