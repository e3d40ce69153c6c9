#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "vidtext/common.hpp"

namespace vidtext {

// Reverse-mode autodiff over Eigen matrices. A Tape owns the graph for one
// forward pass; ops append nodes in topological order and backward() walks
// them in reverse. Model parameters enter through param() leaves whose
// gradients are flushed into caller-owned sink matrices.
//
// Sequence-shaped ops (linear, layer_norm, attention) are computed row by
// row, so a token's output never depends on how many other tokens are in the
// sequence. Masked attention skips masked keys entirely instead of adding
// zero terms; together these make "same tokens, extra masked token" runs
// bit-identical, which the fusion degenerate-equivalence check relies on.
class Tape {
 public:
  using NodeId = int;

  struct Node {
    Mat value;
    Mat grad;  // lazily allocated on first accumulation
    bool needs_grad = false;
    std::function<void()> back;
  };

  const Mat& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Mat& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  std::size_t size() const { return nodes_.size(); }

  NodeId constant(Mat v) {
    return push(std::move(v), false);
  }

  // Leaf tracking gradients into an external sink (e.g. an input being
  // gradient-checked). The sink must outlive the tape.
  NodeId input(const Mat& v, Mat* grad_sink) {
    NodeId id = push(v, true);
    sinks_.emplace_back(id, grad_sink);
    return id;
  }

  // Model parameter leaf; identical to input(), kept separate for intent.
  NodeId param(const Mat& v, Mat* grad_sink) { return input(v, grad_sink); }

  // y = x * W + b, b broadcast over rows. Row-by-row forward.
  NodeId linear(NodeId x, NodeId w, NodeId b) {
    const Mat& xv = value(x);
    const Mat& wv = value(w);
    const Mat& bv = value(b);
    if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
      throw ConfigError("linear: dimension mismatch");
    Mat out(xv.rows(), wv.cols());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) out.row(i) = xv.row(i) * wv + bv;
    NodeId id = push(std::move(out), needs(x) || needs(w) || needs(b));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x, w, b] {
        const Mat& dy = node(id).grad;
        if (needs(x)) accum(x, dy * value(w).transpose());
        if (needs(w)) accum(w, value(x).transpose() * dy);
        if (needs(b)) accum(b, dy.colwise().sum());
      };
    }
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.cols() != bv.rows()) throw ConfigError("matmul: dimension mismatch");
    Mat out(av.rows(), bv.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) out.row(i) = av.row(i) * bv;
    NodeId id = push(std::move(out), needs(a) || needs(b));
    if (node(id).needs_grad) {
      node(id).back = [this, id, a, b] {
        const Mat& dy = node(id).grad;
        if (needs(a)) accum(a, dy * value(b).transpose());
        if (needs(b)) accum(b, value(a).transpose() * dy);
      };
    }
    return id;
  }

  NodeId add(NodeId a, NodeId b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols())
      throw ConfigError("add: shape mismatch");
    NodeId id = push(av + bv, needs(a) || needs(b));
    if (node(id).needs_grad) {
      node(id).back = [this, id, a, b] {
        if (needs(a)) accum(a, node(id).grad);
        if (needs(b)) accum(b, node(id).grad);
      };
    }
    return id;
  }

  NodeId scale(NodeId a, double c) {
    NodeId id = push(value(a) * c, needs(a));
    if (node(id).needs_grad)
      node(id).back = [this, id, a, c] { accum(a, node(id).grad * c); };
    return id;
  }

  // x + pos.topRows(T); learned positional table may be longer than the
  // sequence.
  NodeId add_positional(NodeId x, NodeId pos) {
    const Mat& xv = value(x);
    const Mat& pv = value(pos);
    if (pv.rows() < xv.rows() || pv.cols() != xv.cols())
      throw ConfigError("add_positional: table too small");
    NodeId id = push(xv + pv.topRows(xv.rows()), needs(x) || needs(pos));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x, pos] {
        const Mat& dy = node(id).grad;
        if (needs(x)) accum(x, dy);
        if (needs(pos)) {
          Mat dp = Mat::Zero(value(pos).rows(), value(pos).cols());
          dp.topRows(dy.rows()) = dy;
          accum(pos, dp);
        }
      };
    }
    return id;
  }

  // Row k*L+l gets temporal embedding k and spatial embedding l.
  NodeId add_spacetime_pos(NodeId x, NodeId temporal, NodeId spatial) {
    const Mat& xv = value(x);
    const Mat& tv = value(temporal);
    const Mat& sv = value(spatial);
    const Eigen::Index k = tv.rows(), l = sv.rows();
    if (xv.rows() != k * l || tv.cols() != xv.cols() || sv.cols() != xv.cols())
      throw ConfigError("add_spacetime_pos: shape mismatch");
    Mat out = xv;
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < l; ++j) out.row(i * l + j) += tv.row(i) + sv.row(j);
    NodeId id = push(std::move(out), needs(x) || needs(temporal) || needs(spatial));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x, temporal, spatial, k, l] {
        const Mat& dy = node(id).grad;
        if (needs(x)) accum(x, dy);
        if (needs(temporal)) {
          Mat dt = Mat::Zero(k, dy.cols());
          for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < l; ++j) dt.row(i) += dy.row(i * l + j);
          accum(temporal, dt);
        }
        if (needs(spatial)) {
          Mat ds = Mat::Zero(l, dy.cols());
          for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < l; ++j) ds.row(j) += dy.row(i * l + j);
          accum(spatial, ds);
        }
      };
    }
    return id;
  }

  // Per-row layer normalization with learned gain/offset (1 x D each).
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5) {
    const Mat& xv = value(x);
    const Mat& gv = value(gamma);
    const Mat& bv = value(beta);
    if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != xv.cols() || bv.cols() != xv.cols())
      throw ConfigError("layer_norm: shape mismatch");
    const Eigen::Index d = xv.cols();
    Mat xhat(xv.rows(), d);
    Vec inv_std(xv.rows());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      const double mu = xv.row(i).mean();
      const double var = (xv.row(i).array() - mu).square().sum() / static_cast<double>(d);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std(i) = is;
      xhat.row(i) = (xv.row(i).array() - mu) * is;
    }
    Mat out(xv.rows(), d);
    for (Eigen::Index i = 0; i < xv.rows(); ++i)
      out.row(i) = xhat.row(i).cwiseProduct(gv.row(0)) + bv.row(0);
    NodeId id = push(std::move(out), needs(x) || needs(gamma) || needs(beta));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x, gamma, beta, xhat = std::move(xhat),
                       inv_std = std::move(inv_std), d] {
        const Mat& dy = node(id).grad;
        if (needs(gamma)) accum(gamma, (dy.cwiseProduct(xhat)).colwise().sum());
        if (needs(beta)) accum(beta, dy.colwise().sum());
        if (needs(x)) {
          const Mat& gv = value(gamma);
          Mat dx(dy.rows(), d);
          for (Eigen::Index i = 0; i < dy.rows(); ++i) {
            const Eigen::RowVectorXd dyh = dy.row(i).cwiseProduct(gv.row(0));
            const double m1 = dyh.mean();
            const double m2 = dyh.cwiseProduct(xhat.row(i)).mean();
            dx.row(i) = (dyh.array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
          }
          accum(x, dx);
        }
      };
    }
    return id;
  }

  NodeId gelu(NodeId x) {
    const Mat& xv = value(x);
    Mat out = xv.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
    NodeId id = push(std::move(out), needs(x));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x] {
        const Mat& xv = value(x);
        const Mat dgelu = xv.unaryExpr([](double v) {
          const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
          const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
          return cdf + v * pdf;
        });
        accum(x, node(id).grad.cwiseProduct(dgelu));
      };
    }
    return id;
  }

  // Multi-head scaled dot-product attention over one sequence. q, k, v are
  // T x D with D divisible by heads. mask, when non-empty, marks which
  // positions may be attended to (keys); masked keys are skipped, not zeroed.
  NodeId attention(NodeId q, NodeId k, NodeId v, int heads,
                   const std::vector<char>& mask = {}) {
    const Mat& qv = value(q);
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    const Eigen::Index t = qv.rows();
    const Eigen::Index d = qv.cols();
    if (kv.rows() != t || vv.rows() != t || kv.cols() != d || vv.cols() != d)
      throw ConfigError("attention: q/k/v shape mismatch");
    if (heads < 1 || d % heads != 0)
      throw ConfigError("attention: embedding dim not divisible by head count");
    if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != t)
      throw ConfigError("attention: mask length mismatch");
    const Eigen::Index dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    auto live = [&mask](Eigen::Index j) { return mask.empty() || mask[static_cast<std::size_t>(j)]; };

    std::vector<Mat> attn(static_cast<std::size_t>(heads));
    Mat out = Mat::Zero(t, d);
    for (int h = 0; h < heads; ++h) {
      const auto qh = qv.middleCols(h * dh, dh);
      const auto kh = kv.middleCols(h * dh, dh);
      const auto vh = vv.middleCols(h * dh, dh);
      Mat a = Mat::Zero(t, t);
      for (Eigen::Index i = 0; i < t; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < t; ++j) {
          if (!live(j)) continue;
          const double s = qh.row(i).dot(kh.row(j)) * inv_sqrt_dh;
          a(i, j) = s;
          if (s > mx) mx = s;
        }
        double denom = 0.0;
        for (Eigen::Index j = 0; j < t; ++j) {
          if (!live(j)) continue;
          const double e = std::exp(a(i, j) - mx);
          a(i, j) = e;
          denom += e;
        }
        if (denom == 0.0) throw NumericError("attention: all positions masked");
        for (Eigen::Index j = 0; j < t; ++j) {
          if (!live(j)) {
            a(i, j) = 0.0;
            continue;
          }
          a(i, j) /= denom;
          out.row(i).segment(h * dh, dh) += a(i, j) * vh.row(j);
        }
      }
      attn[static_cast<std::size_t>(h)] = std::move(a);
    }
    NodeId id = push(std::move(out), needs(q) || needs(k) || needs(v));
    if (node(id).needs_grad) {
      node(id).back = [this, id, q, k, v, heads, dh, inv_sqrt_dh, attn = std::move(attn)] {
        const Mat& dy = node(id).grad;
        const Mat& qv = value(q);
        const Mat& kv = value(k);
        const Mat& vv = value(v);
        const Eigen::Index t = qv.rows();
        Mat dq = Mat::Zero(t, qv.cols());
        Mat dk = Mat::Zero(t, qv.cols());
        Mat dv = Mat::Zero(t, qv.cols());
        for (int h = 0; h < heads; ++h) {
          const Mat& a = attn[static_cast<std::size_t>(h)];
          const auto qh = qv.middleCols(h * dh, dh);
          const auto kh = kv.middleCols(h * dh, dh);
          const auto vh = vv.middleCols(h * dh, dh);
          const auto dyh = dy.middleCols(h * dh, dh);
          dv.middleCols(h * dh, dh) += a.transpose() * dyh;
          const Mat da = dyh * vh.transpose();  // T x T
          // softmax backward per query row; masked keys have a == 0.
          Mat ds(t, t);
          for (Eigen::Index i = 0; i < t; ++i) {
            const double dot = da.row(i).dot(a.row(i));
            ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
          }
          dq.middleCols(h * dh, dh) += ds * kh * inv_sqrt_dh;
          dk.middleCols(h * dh, dh) += ds.transpose() * qh * inv_sqrt_dh;
        }
        if (needs(q)) accum(q, dq);
        if (needs(k)) accum(k, dk);
        if (needs(v)) accum(v, dv);
      };
    }
    return id;
  }

  NodeId concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ConfigError("concat_rows: no parts");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts.front()).cols();
    bool any_grad = false;
    for (NodeId p : parts) {
      if (value(p).cols() != cols) throw ConfigError("concat_rows: column mismatch");
      rows += value(p).rows();
      any_grad = any_grad || needs(p);
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    for (NodeId p : parts) {
      out.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    NodeId id = push(std::move(out), any_grad);
    if (node(id).needs_grad) {
      node(id).back = [this, id, parts] {
        const Mat& dy = node(id).grad;
        Eigen::Index r = 0;
        for (NodeId p : parts) {
          const Eigen::Index n = value(p).rows();
          if (needs(p)) accum(p, dy.middleRows(r, n));
          r += n;
        }
      };
    }
    return id;
  }

  NodeId slice_row(NodeId x, Eigen::Index row) {
    const Mat& xv = value(x);
    if (row < 0 || row >= xv.rows()) throw ConfigError("slice_row: out of range");
    NodeId id = push(xv.row(row), needs(x));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x, row] {
        Mat dx = Mat::Zero(value(x).rows(), value(x).cols());
        dx.row(row) = node(id).grad;
        accum(x, dx);
      };
    }
    return id;
  }

  NodeId mean_rows(NodeId x) {
    const Mat& xv = value(x);
    if (xv.rows() < 1) throw ConfigError("mean_rows: empty input");
    NodeId id = push(xv.colwise().mean(), needs(x));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x] {
        const double inv = 1.0 / static_cast<double>(value(x).rows());
        accum(x, (node(id).grad * inv).replicate(value(x).rows(), 1));
      };
    }
    return id;
  }

  // Row-wise x / ||x||; a (near-)zero row is a degenerate embedding.
  NodeId l2_normalize_rows(NodeId x) {
    const Mat& xv = value(x);
    Mat out(xv.rows(), xv.cols());
    Vec norms(xv.rows());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      const double n = xv.row(i).norm();
      if (n < 1e-12)
        throw NumericError("l2_normalize: zero-norm row " + std::to_string(i));
      norms(i) = n;
      out.row(i) = xv.row(i) / n;
    }
    NodeId id = push(std::move(out), needs(x));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x, norms = std::move(norms)] {
        const Mat& dy = node(id).grad;
        const Mat& y = node(id).value;
        Mat dx(dy.rows(), dy.cols());
        for (Eigen::Index i = 0; i < dy.rows(); ++i) {
          const double proj = dy.row(i).dot(y.row(i));
          dx.row(i) = (dy.row(i) - proj * y.row(i)) / norms(i);
        }
        accum(x, dx);
      };
    }
    return id;
  }

  // Embedding lookup: out.row(i) = table.row(ids[i]).
  NodeId gather_rows(NodeId table, std::vector<int> ids) {
    const Mat& tv = value(table);
    Mat out(static_cast<Eigen::Index>(ids.size()), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= tv.rows())
        throw ConfigError("gather_rows: index out of range");
      out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
    }
    NodeId id = push(std::move(out), needs(table));
    if (node(id).needs_grad) {
      node(id).back = [this, id, table, ids = std::move(ids)] {
        Mat dt = Mat::Zero(value(table).rows(), value(table).cols());
        const Mat& dy = node(id).grad;
        for (std::size_t i = 0; i < ids.size(); ++i)
          dt.row(ids[i]) += dy.row(static_cast<Eigen::Index>(i));
        accum(table, dt);
      };
    }
    return id;
  }

  // Symmetric InfoNCE over matched pairs: rows of x are video embeddings,
  // rows of y the matching query embeddings. Returns a 1x1 node holding the
  // sum of the video-to-language and language-to-video cross-entropies, each
  // averaged over the batch, with logits x_i . y_j / sigma.
  NodeId info_nce(NodeId x, NodeId y, double sigma) {
    if (sigma <= 0.0) throw ConfigError("info_nce: temperature must be > 0");
    const Mat& xv = value(x);
    const Mat& yv = value(y);
    if (xv.rows() != yv.rows() || xv.cols() != yv.cols())
      throw ConfigError("info_nce: shape mismatch");
    const Eigen::Index n = xv.rows();
    if (n < 1) throw ConfigError("info_nce: empty batch");
    Mat logits(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) logits(i, j) = xv.row(i).dot(yv.row(j)) / sigma;
    auto logsumexp = [](const Eigen::RowVectorXd& r) {
      const double mx = r.maxCoeff();
      return mx + std::log((r.array() - mx).exp().sum());
    };
    double loss = 0.0;
    Vec row_lse(n), col_lse(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      row_lse(i) = logsumexp(logits.row(i));
      col_lse(i) = logsumexp(logits.col(i).transpose());
      loss += (row_lse(i) - logits(i, i)) + (col_lse(i) - logits(i, i));
    }
    loss /= static_cast<double>(n);
    Mat out(1, 1);
    out(0, 0) = loss;
    NodeId id = push(std::move(out), needs(x) || needs(y));
    if (node(id).needs_grad) {
      node(id).back = [this, id, x, y, sigma, logits = std::move(logits),
                       row_lse = std::move(row_lse), col_lse = std::move(col_lse), n] {
        const double g = node(id).grad(0, 0) / static_cast<double>(n);
        Mat dlogits(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j)
            dlogits(i, j) = g * (std::exp(logits(i, j) - row_lse(i)) +
                                 std::exp(logits(i, j) - col_lse(j)));
        for (Eigen::Index i = 0; i < n; ++i) dlogits(i, i) -= 2.0 * g;
        if (needs(x)) accum(x, dlogits * value(y) / sigma);
        if (needs(y)) accum(y, dlogits.transpose() * value(x) / sigma);
      };
    }
    return id;
  }

  // Seed d(out)/d(out) = 1 and propagate. out must be 1x1.
  void backward(NodeId out) {
    Node& o = node(out);
    if (o.value.rows() != 1 || o.value.cols() != 1)
      throw ConfigError("backward: output must be scalar");
    o.grad = Mat::Ones(1, 1);
    for (NodeId id = out; id >= 0; --id) {
      Node& nd = node(id);
      if (nd.grad.size() > 0 && nd.back) nd.back();
    }
    for (auto& [id, sink] : sinks_) {
      const Mat& g = node(id).grad;
      if (g.size() == 0) continue;
      if (sink->size() == 0) *sink = Mat::Zero(g.rows(), g.cols());
      *sink += g;
    }
  }

 private:
  Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  bool needs(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  NodeId push(Mat v, bool needs_grad) {
    Node nd;
    nd.value = std::move(v);
    nd.needs_grad = needs_grad;
    nodes_.push_back(std::move(nd));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  void accum(NodeId id, const Mat& g) {
    Node& nd = node(id);
    if (!nd.needs_grad) return;
    if (nd.grad.size() == 0)
      nd.grad = g;
    else
      nd.grad += g;
  }

  std::deque<Node> nodes_;
  std::vector<std::pair<NodeId, Mat*>> sinks_;
};

}  // namespace vidtext
