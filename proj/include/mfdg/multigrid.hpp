#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mfdg/common.hpp"
#include "mfdg/krylov.hpp"
#include "mfdg/lowspace.hpp"

namespace mfdg {

/// Applies `sweeps` smoothing steps to A u = f, updating u in place.
using SmoothFn = std::function<void(std::span<const double> f, std::span<double> u, int sweeps)>;

struct MultigridConfig {
  int n_pre = 2;
  int n_post = 2;
};

/// Two-level V-cycle: DG block smoothing around a coarse correction in a
/// low-order subspace, the latter solved by its own multilevel method.
class HybridMG {
 public:
  HybridMG() = default;

  HybridMG(LinearMap apply, SmoothFn smoother, const Transfer& transfer, const GeometricCoarseSolver& coarse,
           MultigridConfig config = {})
      : apply_(std::move(apply)),
        smoother_(std::move(smoother)),
        transfer_(&transfer),
        coarse_(&coarse),
        config_(config) {
    if (config.n_pre < 0 || config.n_post < 0) throw std::invalid_argument("HybridMG: negative smoothing steps");
    check_size(coarse.size(), transfer.num_coarse(), "HybridMG");
    r_.resize(transfer.num_fine());
    rhat_.resize(transfer.num_coarse());
    uhat_.resize(transfer.num_coarse());
  }

  bool ready() const { return transfer_ != nullptr; }
  const MultigridConfig& config() const { return config_; }

  /// One V-cycle for A u = f starting from the value of u on entry.
  void mg_apply(std::span<const double> f, std::span<double> u) {
    if (!ready()) throw InvalidStateError("HybridMG: setup has not been performed");
    check_size(f.size(), r_.size(), "mg_apply");
    check_size(u.size(), r_.size(), "mg_apply");
    if (config_.n_pre > 0) smoother_(f, u, config_.n_pre);
    apply_(u, r_);
    for (std::size_t i = 0; i < r_.size(); ++i) r_[i] = f[i] - r_[i];
    transfer_->restrict(r_, rhat_);
    coarse_->solve(rhat_, uhat_);
    transfer_->prolongate_add(uhat_, u);
    if (config_.n_post > 0) smoother_(f, u, config_.n_post);
  }

  /// z = V-cycle applied to r from a zero guess; the preconditioner map.
  void precondition(std::span<const double> r, std::span<double> z) {
    std::fill(z.begin(), z.end(), 0.0);
    mg_apply(r, z);
  }

  LinearMap as_preconditioner() {
    return [this](std::span<const double> r, std::span<double> z) { precondition(r, z); };
  }

 private:
  LinearMap apply_;
  SmoothFn smoother_;
  const Transfer* transfer_ = nullptr;
  const GeometricCoarseSolver* coarse_ = nullptr;
  MultigridConfig config_;
  std::vector<double> r_, rhat_, uhat_;
};

}  // namespace mfdg
