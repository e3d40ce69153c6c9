#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vidtext/common.hpp"
#include "vidtext/model.hpp"

namespace vidtext {

struct AdamWConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

// Adam with decoupled weight decay and global-norm gradient clipping.
// Weight decay applies to every tensor.
class AdamW {
 public:
  explicit AdamW(const ModelParams& params)
      : m_(zero_like(params)), v_(zero_like(params)) {}

  long steps_taken() const { return step_; }

  void step(ModelParams& params, ModelParams& grads, const AdamWConfig& cfg) {
    std::vector<Mat*> ps, gs, ms, vs;
    params.for_each([&ps](const std::string&, Mat& m) { ps.push_back(&m); });
    grads.for_each([&gs](const std::string&, Mat& m) { gs.push_back(&m); });
    m_.for_each([&ms](const std::string&, Mat& m) { ms.push_back(&m); });
    v_.for_each([&vs](const std::string&, Mat& m) { vs.push_back(&m); });

    double sq = 0.0;
    for (const Mat* g : gs) sq += g->squaredNorm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm))
      throw NumericError("optimizer: non-finite gradient norm");
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) {
      const double scale = cfg.clip_norm / norm;
      for (Mat* g : gs) *g *= scale;
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Mat& p = *ps[i];
      const Mat& g = *gs[i];
      Mat& m = *ms[i];
      Mat& v = *vs[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      for (Eigen::Index r = 0; r < p.rows(); ++r)
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
          const double mhat = m(r, c) / bc1;
          const double vhat = v(r, c) / bc2;
          p(r, c) -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                               cfg.weight_decay * p(r, c));
        }
    }
  }

 private:
  ModelParams m_, v_;
  long step_ = 0;
};

}  // namespace vidtext
