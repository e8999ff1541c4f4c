#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dknd/errors.hpp"
#include "dknd/linalg.hpp"
#include "dknd/observables.hpp"
#include "dknd/types.hpp"

namespace dknd {

/// Nonnegative weights w1..w6 of the six loss terms, normalized to sum 1.
class LossWeights {
public:
  LossWeights() : LossWeights({0.35, 0.35, 0.075, 0.075, 0.075, 0.075}) {}

  explicit LossWeights(const std::array<double, 6>& raw) {
    double sum = 0.0;
    for (double w : raw) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw ConfigError("loss weights must not all be zero");
    for (std::size_t i = 0; i < 6; ++i) w_[i] = raw[i] / sum;
  }

  /// Data-fit terms only (plain deep Koopman learning).
  static LossWeights data_fit_only() { return LossWeights({0.5, 0.5, 0, 0, 0, 0}); }
  static LossWeights uniform() { return LossWeights({1, 1, 1, 1, 1, 1}); }
  static LossWeights one_hot(std::size_t i) {
    std::array<double, 6> w{};
    w.at(i) = 1.0;
    return LossWeights(w);
  }

  double operator[](std::size_t i) const { return w_[i]; }
  const std::array<double, 6>& values() const { return w_; }
  bool operator==(const LossWeights&) const = default;

private:
  std::array<double, 6> w_{};
};

/// ||G Gbar^T||_F^2 (Compact) or sum_k (g_k^T g_{k+1})^2 (PerSample).
enum class CrossTermForm { Compact, PerSample };
/// Reconstruction fit Y ~ C G (Current) or Ybar ~ C Gbar (Next).
enum class ReconstructionPairing { Current, Next };

struct LossConfig {
  LossWeights weights;
  CrossTermForm cross_term = CrossTermForm::Compact;
  ReconstructionPairing reconstruction = ReconstructionPairing::Current;

  LossConfig() = default;
  LossConfig(LossWeights w) : weights(w) {}  // NOLINT(google-explicit-constructor)
};

/// Snapshot pairs (y_k, u_k, y_{k+1}) stored column-wise.
template <typename Scalar>
struct Snapshots {
  MatrixX<Scalar> Y;     ///< n x T, column k = y_k
  MatrixX<Scalar> Ybar;  ///< n x T, column k = y_{k+1}
  MatrixX<Scalar> U;     ///< m x T

  Eigen::Index horizon() const { return Y.cols(); }

  /// True when Ybar is Y shifted by one column, so the T+1 states can be
  /// lifted in a single pass.
  bool contiguous() const {
    const Eigen::Index T = Y.cols();
    return T > 0 && Y.rightCols(T - 1) == Ybar.leftCols(T - 1);
  }
};

/// Pairs from one trajectory: states n x (T+1), inputs m x T.
template <typename D1, typename D2>
Snapshots<typename D1::Scalar> snapshots_from_trajectory(const Eigen::MatrixBase<D1>& states,
                                                         const Eigen::MatrixBase<D2>& inputs) {
  const Eigen::Index T = inputs.cols();
  if (states.cols() != T + 1) {
    throw ShapeMismatch("expected T+1 states for T inputs (got " + std::to_string(states.cols()) +
                        " states, " + std::to_string(T) + " inputs)");
  }
  return {states.leftCols(T), states.rightCols(T), inputs};
}

template <typename Scalar>
struct DataMatrices {
  MatrixX<Scalar> Y, Ybar, U, G, Gbar;
  Eigen::Index horizon() const { return Y.cols(); }
};

template <typename Scalar>
struct KoopmanMatrices {
  MatrixX<Scalar> A;  ///< r x r
  MatrixX<Scalar> B;  ///< r x m
  MatrixX<Scalar> C;  ///< n x r
};

template <typename Scalar>
struct KoopmanModel {
  MatrixX<Scalar> A, B, C;
  ObservableNet<Scalar> net;
};

namespace detail {

template <typename Scalar>
void check_snapshots(const Snapshots<Scalar>& s, const NetArchitecture& arch) {
  const Eigen::Index T = s.Y.cols();
  if (s.Ybar.cols() != T || s.U.cols() != T) throw ShapeMismatch("snapshot matrices disagree on T");
  if (s.Y.rows() != arch.input_dim() || s.Ybar.rows() != arch.input_dim()) {
    throw ShapeMismatch("snapshot state dimension does not match the observable input");
  }
  const Eigen::Index needed = arch.output_dim() + s.U.rows();
  if (T < needed) {
    throw HorizonTooShort("horizon T=" + std::to_string(T) + " is shorter than r+m=" +
                          std::to_string(needed));
  }
}

// Lift Y and Ybar, sharing the overlap when the pairs are contiguous.
template <typename Scalar>
struct Lifted {
  MatrixX<Scalar> G, Gbar;
  ForwardCache<Scalar> cache;
  bool contiguous = false;
};

template <typename Scalar>
Lifted<Scalar> lift(const ObservableNet<Scalar>& net, const Snapshots<Scalar>& s, bool keep_cache) {
  const Eigen::Index T = s.Y.cols();
  Lifted<Scalar> out;
  out.contiguous = s.contiguous();
  MatrixX<Scalar> inputs(s.Y.rows(), out.contiguous ? T + 1 : 2 * T);
  if (out.contiguous) {
    inputs << s.Y, s.Ybar.col(T - 1);
  } else {
    inputs << s.Y, s.Ybar;
  }
  MatrixX<Scalar> all;
  if (keep_cache) {
    auto [g, cache] = forward(net, inputs);
    all = std::move(g);
    out.cache = std::move(cache);
  } else {
    all = evaluate(net, inputs);
  }
  out.G = all.leftCols(T);
  out.Gbar = all.rightCols(T);
  return out;
}

template <typename Scalar>
MatrixX<Scalar> stack_rows(const MatrixX<Scalar>& top, const MatrixX<Scalar>& bottom) {
  MatrixX<Scalar> z(top.rows() + bottom.rows(), top.cols());
  z << top, bottom;
  return z;
}

}  // namespace detail

/// Lifts the snapshots with the net's current parameters.
template <typename Scalar>
DataMatrices<Scalar> build_data_matrices(const Snapshots<Scalar>& s, const ObservableNet<Scalar>& net) {
  detail::check_snapshots(s, net.arch());
  auto lifted = detail::lift(net, s, false);
  return {s.Y, s.Ybar, s.U, std::move(lifted.G), std::move(lifted.Gbar)};
}

struct RankReport {
  bool ok = false;
  double sigma_min_G = 0.0;
  double sigma_min_GU = 0.0;
};

/// Smallest singular values of G and [G; U]; ok iff both exceed the rank
/// tolerance used by the pseudoinverse.
template <typename Scalar>
RankReport check_rank_assumption(const DataMatrices<Scalar>& dm) {
  const double tol = std::sqrt(kRankTolerance);
  auto smallest = [](const MatrixX<Scalar>& M) -> double {
    if (M.rows() > M.cols()) return 0.0;
    const auto f = svd(M);
    return f.S.size() ? static_cast<double>(f.S(f.S.size() - 1)) : 0.0;
  };
  RankReport rep;
  rep.sigma_min_G = smallest(dm.G);
  rep.sigma_min_GU = smallest(detail::stack_rows(dm.G, dm.U));
  rep.ok = rep.sigma_min_G > tol && rep.sigma_min_GU > tol;
  return rep;
}

/// [A, B] = Gbar [G; U]^+ and C = Y G^+ (or Ybar Gbar^+ for the Next pairing).
template <typename Scalar>
KoopmanMatrices<Scalar> solve_koopman_matrices(const DataMatrices<Scalar>& dm,
                                               ReconstructionPairing pairing = ReconstructionPairing::Current) {
  const Eigen::Index r = dm.G.rows();
  const MatrixX<Scalar> AB = dm.Gbar * pinv_full_row_rank(detail::stack_rows(dm.G, dm.U));
  KoopmanMatrices<Scalar> km;
  km.A = AB.leftCols(r);
  km.B = AB.rightCols(AB.cols() - r);
  km.C = pairing == ReconstructionPairing::Current ? MatrixX<Scalar>(dm.Y * pinv_full_row_rank(dm.G))
                                                   : MatrixX<Scalar>(dm.Ybar * pinv_full_row_rank(dm.Gbar));
  return km;
}

namespace detail {

template <typename Scalar>
void check_model_shapes(const DataMatrices<Scalar>& dm, const MatrixX<Scalar>& A, const MatrixX<Scalar>& B,
                        const MatrixX<Scalar>& C) {
  const Eigen::Index r = dm.G.rows();
  if (A.rows() != r || A.cols() != r || B.rows() != r || B.cols() != dm.U.rows() ||
      C.rows() != dm.Y.rows() || C.cols() != r || dm.Gbar.rows() != r) {
    throw ShapeMismatch("Koopman matrices do not match the data matrices");
  }
}

template <typename Scalar>
Scalar cross_term(const MatrixX<Scalar>& G, const MatrixX<Scalar>& Gbar, CrossTermForm form) {
  if (form == CrossTermForm::Compact) return (G * Gbar.transpose()).squaredNorm();
  return (G.cwiseProduct(Gbar)).colwise().sum().squaredNorm();
}

}  // namespace detail

/// (1/2T)(||Gbar - [A,B][G;U]||_F^2 + ||Y - C G||_F^2).
template <typename Scalar>
Scalar loss_dkr(const DataMatrices<Scalar>& dm, const MatrixX<Scalar>& A, const MatrixX<Scalar>& B,
                const MatrixX<Scalar>& C, ReconstructionPairing pairing = ReconstructionPairing::Current) {
  detail::check_model_shapes(dm, A, B, C);
  const Scalar s = Scalar(1) / (Scalar(2) * Scalar(dm.horizon()));
  const Scalar fit = (dm.Gbar - A * dm.G - B * dm.U).squaredNorm();
  const Scalar rec = pairing == ReconstructionPairing::Current ? (dm.Y - C * dm.G).squaredNorm()
                                                               : (dm.Ybar - C * dm.Gbar).squaredNorm();
  return s * (fit + rec);
}

/// (1/2T)(||[A,B]||_F^2 + ||C||_F^2 + ||G||_F^2 + ||G Gbar^T||_F^2).
template <typename Scalar>
Scalar loss_w(const DataMatrices<Scalar>& dm, const MatrixX<Scalar>& A, const MatrixX<Scalar>& B,
              const MatrixX<Scalar>& C, CrossTermForm form = CrossTermForm::Compact) {
  detail::check_model_shapes(dm, A, B, C);
  const Scalar s = Scalar(1) / (Scalar(2) * Scalar(dm.horizon()));
  return s * (A.squaredNorm() + B.squaredNorm() + C.squaredNorm() + dm.G.squaredNorm() +
              detail::cross_term(dm.G, dm.Gbar, form));
}

/// The six unweighted squared norms that make up L_f, before the 1/2T factor.
template <typename Scalar>
std::array<Scalar, 6> loss_terms(const DataMatrices<Scalar>& dm, const MatrixX<Scalar>& A,
                                 const MatrixX<Scalar>& B, const MatrixX<Scalar>& C, const LossConfig& cfg) {
  detail::check_model_shapes(dm, A, B, C);
  const bool next = cfg.reconstruction == ReconstructionPairing::Next;
  const MatrixX<Scalar>& Yr = next ? dm.Ybar : dm.Y;
  const MatrixX<Scalar>& Gr = next ? dm.Gbar : dm.G;
  std::array<Scalar, 6> t{};
  t[0] = (dm.Gbar - A * dm.G - B * dm.U).squaredNorm();
  t[1] = (Yr - C * Gr).squaredNorm();
  if (cfg.weights[2] > 0.0) {
    t[2] = (dm.Gbar * pinv_full_row_rank(detail::stack_rows(dm.G, dm.U))).squaredNorm();
  }
  if (cfg.weights[3] > 0.0) t[3] = (Yr * pinv_full_row_rank(Gr)).squaredNorm();
  t[4] = dm.G.squaredNorm();
  t[5] = detail::cross_term(dm.G, dm.Gbar, cfg.cross_term);
  return t;
}

/// Weighted total loss L_f. With weights (1/2, 1/2, 0, 0, 0, 0) this is loss_dkr / 2.
template <typename Scalar>
Scalar loss_total(const DataMatrices<Scalar>& dm, const MatrixX<Scalar>& A, const MatrixX<Scalar>& B,
                  const MatrixX<Scalar>& C, const LossConfig& cfg) {
  const auto t = loss_terms(dm, A, B, C, cfg);
  Scalar acc(0);
  for (std::size_t i = 0; i < 6; ++i) {
    if (cfg.weights[i] > 0.0) acc += Scalar(cfg.weights[i]) * t[i];
  }
  return acc / (Scalar(2) * Scalar(dm.horizon()));
}

/// Loss and gradient state at one parameter vector. Construction lifts the
/// data, solves for (A, B, C) unless they are supplied, and evaluates the
/// losses; gradient() runs the reverse pass with (A, B, C) held fixed in the
/// data-fit terms.
template <typename Scalar>
class LossState {
public:
  LossState(const ObservableNet<Scalar>& net, const Snapshots<Scalar>& snaps, const LossConfig& cfg,
            const std::optional<KoopmanMatrices<Scalar>>& fixed = std::nullopt)
      : net_(net), cfg_(cfg) {
    detail::check_snapshots(snaps, net.arch());
    lifted_ = detail::lift(net, snaps, true);
    dm_ = {snaps.Y, snaps.Ybar, snaps.U, lifted_.G, lifted_.Gbar};
    km_ = fixed ? *fixed : solve_koopman_matrices(dm_, cfg.reconstruction);
    terms_ = loss_terms(dm_, km_.A, km_.B, km_.C, cfg_);
    const Scalar s = Scalar(1) / (Scalar(2) * Scalar(dm_.horizon()));
    total_ = Scalar(0);
    for (std::size_t i = 0; i < 6; ++i) {
      if (cfg_.weights[i] > 0.0) total_ += s * Scalar(cfg_.weights[i]) * terms_[i];
    }
  }

  const DataMatrices<Scalar>& data() const { return dm_; }
  const KoopmanMatrices<Scalar>& matrices() const { return km_; }
  Scalar total() const { return total_; }
  Scalar dkr() const { return loss_dkr(dm_, km_.A, km_.B, km_.C, cfg_.reconstruction); }
  Scalar noise_term() const { return loss_w(dm_, km_.A, km_.B, km_.C, cfg_.cross_term); }

  /// dL_f/dG and dL_f/dGbar.
  std::pair<MatrixX<Scalar>, MatrixX<Scalar>> gradient_wrt_lift() const {
    const auto& G = dm_.G;
    const auto& Gb = dm_.Gbar;
    const Eigen::Index r = G.rows();
    const bool next = cfg_.reconstruction == ReconstructionPairing::Next;
    MatrixX<Scalar> dG = MatrixX<Scalar>::Zero(G.rows(), G.cols());
    MatrixX<Scalar> dGb = MatrixX<Scalar>::Zero(Gb.rows(), Gb.cols());
    const auto w = [&](std::size_t i) { return Scalar(2) * Scalar(cfg_.weights[i]); };

    if (cfg_.weights[0] > 0.0) {
      const MatrixX<Scalar> R = Gb - km_.A * G - km_.B * dm_.U;
      dGb += w(0) * R;
      dG.noalias() -= w(0) * (km_.A.transpose() * R);
    }
    if (cfg_.weights[1] > 0.0) {
      MatrixX<Scalar>& target = next ? dGb : dG;
      const MatrixX<Scalar> R = (next ? dm_.Ybar : dm_.Y) - km_.C * (next ? Gb : G);
      target.noalias() -= w(1) * (km_.C.transpose() * R);
    }
    // ||X Z^+||_F^2 with Z^+ = Z^T (Z Z^T)^{-1}; the inverse is differentiated
    // through d(K^{-1}) = -K^{-1} dK K^{-1}.
    auto pinv_term = [](const MatrixX<Scalar>& X, const MatrixX<Scalar>& Z, MatrixX<Scalar>* dX,
                        MatrixX<Scalar>& dZ, Scalar weight) {
      const MatrixX<Scalar> Kinv = gram_inverse(Z);
      const MatrixX<Scalar> P = X * Z.transpose() * Kinv;
      const MatrixX<Scalar> N = Kinv * P.transpose() * P;
      if (dX) dX->noalias() += weight * (P * Kinv * Z);
      dZ.noalias() += weight * (Kinv * P.transpose() * X - (N + N.transpose()) * Z);
    };
    if (cfg_.weights[2] > 0.0) {
      const MatrixX<Scalar> Z = detail::stack_rows(G, dm_.U);
      MatrixX<Scalar> dZ = MatrixX<Scalar>::Zero(Z.rows(), Z.cols());
      pinv_term(Gb, Z, &dGb, dZ, w(2));
      dG += dZ.topRows(r);
    }
    if (cfg_.weights[3] > 0.0) {
      pinv_term(next ? dm_.Ybar : dm_.Y, next ? Gb : G, nullptr, next ? dGb : dG, w(3));
    }
    if (cfg_.weights[4] > 0.0) dG += w(4) * G;
    if (cfg_.weights[5] > 0.0) {
      if (cfg_.cross_term == CrossTermForm::Compact) {
        const MatrixX<Scalar> H = G * Gb.transpose();
        dG.noalias() += w(5) * (H * Gb);
        dGb.noalias() += w(5) * (H.transpose() * G);
      } else {
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> c = G.cwiseProduct(Gb).colwise().sum();
        dG += w(5) * (Gb.array().rowwise() * c.array()).matrix();
        dGb += w(5) * (G.array().rowwise() * c.array()).matrix();
      }
    }
    const Scalar s = Scalar(1) / (Scalar(2) * Scalar(dm_.horizon()));
    dG *= s;
    dGb *= s;
    return {std::move(dG), std::move(dGb)};
  }

  /// dL_f/dtheta.
  VectorX<Scalar> gradient() const {
    auto [dG, dGb] = gradient_wrt_lift();
    const Eigen::Index T = dG.cols();
    MatrixX<Scalar> upstream = MatrixX<Scalar>::Zero(dG.rows(), lifted_.cache.batch());
    upstream.leftCols(T) += dG;
    upstream.rightCols(T) += dGb;
    return backward(net_, lifted_.cache, upstream).theta;
  }

private:
  const ObservableNet<Scalar>& net_;
  LossConfig cfg_;
  detail::Lifted<Scalar> lifted_;
  DataMatrices<Scalar> dm_;
  KoopmanMatrices<Scalar> km_;
  std::array<Scalar, 6> terms_{};
  Scalar total_{};
};

/// L_f at the net's parameters, with (A, B, C) solved in closed form.
template <typename Scalar>
Scalar objective(const ObservableNet<Scalar>& net, const Snapshots<Scalar>& snaps, const LossConfig& cfg) {
  return LossState<Scalar>(net, snaps, cfg).total();
}

/// dL_f/dtheta. (A, B, C) in the data-fit terms are those of the most recent
/// solve: `fixed` when given, otherwise solved at the current parameters.
template <typename Scalar>
VectorX<Scalar> grad_loss_total(const ObservableNet<Scalar>& net, const Snapshots<Scalar>& snaps,
                                const LossConfig& cfg,
                                const std::optional<KoopmanMatrices<Scalar>>& fixed = std::nullopt) {
  return LossState<Scalar>(net, snaps, cfg, fixed).gradient();
}

/// C (A g(Y) + B U), column-wise.
template <typename Scalar, typename D1, typename D2>
MatrixX<Scalar> predict_batch(const KoopmanModel<Scalar>& model, const Eigen::MatrixBase<D1>& Y,
                              const Eigen::MatrixBase<D2>& U) {
  if (U.rows() != model.B.cols() || U.cols() != Y.cols()) {
    throw ShapeMismatch("predict: input dimension or batch size mismatch");
  }
  const MatrixX<Scalar> G = evaluate(model.net, Y);
  return model.C * (model.A * G + model.B * U);
}

template <typename Scalar, typename D1, typename D2>
VectorX<Scalar> predict_next(const KoopmanModel<Scalar>& model, const Eigen::MatrixBase<D1>& y,
                             const Eigen::MatrixBase<D2>& u) {
  if (y.cols() != 1 || u.cols() != 1) throw ShapeMismatch("predict_next: expected column vectors");
  return predict_batch(model, y, u);
}

/// Lift y0 once, then iterate z <- A z + B u_k and emit C z; inputs are m x K.
template <typename Scalar, typename D1, typename D2>
MatrixX<Scalar> rollout(const KoopmanModel<Scalar>& model, const Eigen::MatrixBase<D1>& y0,
                        const Eigen::MatrixBase<D2>& inputs) {
  if (y0.cols() != 1 || y0.rows() != model.net.arch().input_dim() || inputs.rows() != model.B.cols()) {
    throw ShapeMismatch("rollout: dimension mismatch");
  }
  MatrixX<Scalar> out(model.C.rows(), inputs.cols());
  VectorX<Scalar> z = evaluate(model.net, y0);
  for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
    z = model.A * z + model.B * inputs.col(k);
    out.col(k) = model.C * z;
  }
  return out;
}

}  // namespace dknd
