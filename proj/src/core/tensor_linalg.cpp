// Matrix products, batched attention kernels and the third-order TPR
// contractions. Eigen maps over the flat row-major buffers do the heavy
// lifting; everything here stays single-threaded so runs are reproducible.
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "core/tensor.hpp"

namespace aid {

namespace {

template <typename Real>
using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using EVec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <typename Real>
using MMap = Eigen::Map<EMat<Real>>;
template <typename Real>
using CMMap = Eigen::Map<const EMat<Real>>;
template <typename Real>
using VMap = Eigen::Map<EVec<Real>>;
template <typename Real>
using CVMap = Eigen::Map<const EVec<Real>>;

template <typename Real>
std::shared_ptr<detail::Node<Real>> make_node(Shape shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node<Real>>();
  n->shape = std::move(shape);
  n->value.resize(static_cast<size_t>(numel(n->shape)));
  n->requires_grad = requires_grad;
  return n;
}

// Sum in ascending value order: invariant to any permutation of the terms.
template <typename Real>
Real sorted_sum(Real* buf, int n) {
  std::sort(buf, buf + n);
  Real acc = Real(0);
  for (int i = 0; i < n; ++i) acc += buf[i];
  return acc;
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  AID_CHECK(a.rank() == 2 && b.rank() == 2, "matmul: operands must be rank 2");
  AID_CHECK(a.dim(1) == b.dim(0), "matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                                      shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = make_node<Real>({m, n}, a.requires_grad() || b.requires_grad());
  CMMap<Real> ma(a.data().data(), m, k);
  CMMap<Real> mb(b.data().data(), k, n);
  MMap<Real>(out->value.data(), m, n).noalias() = ma * mb;
  if (out->requires_grad) {
    out->parents = {a.node(), b.node()};
    out->backward = [m, k, n](detail::Node<Real>& self) {
      auto* ap = self.parents[0].get();
      auto* bp = self.parents[1].get();
      CMMap<Real> g(self.grad.data(), m, n);
      if (ap->requires_grad) {
        ap->ensure_grad();
        CMMap<Real> vb(bp->value.data(), k, n);
        MMap<Real>(ap->grad.data(), m, k).noalias() += g * vb.transpose();
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        CMMap<Real> va(ap->value.data(), m, k);
        MMap<Real>(bp->grad.data(), k, n).noalias() += va.transpose() * g;
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> outer(const Tensor<Real>& a, const Tensor<Real>& b) {
  AID_CHECK(a.rank() == 1 && b.rank() == 1, "outer: operands must be rank 1");
  AID_CHECK(a.size() > 0 && b.size() > 0, "outer: operands must be non-empty");
  int64_t m = a.dim(0), n = b.dim(0);
  auto out = make_node<Real>({m, n}, a.requires_grad() || b.requires_grad());
  CVMap<Real> va(a.data().data(), m);
  CVMap<Real> vb(b.data().data(), n);
  MMap<Real>(out->value.data(), m, n).noalias() = va * vb.transpose();
  if (out->requires_grad) {
    out->parents = {a.node(), b.node()};
    out->backward = [m, n](detail::Node<Real>& self) {
      auto* ap = self.parents[0].get();
      auto* bp = self.parents[1].get();
      CMMap<Real> g(self.grad.data(), m, n);
      if (ap->requires_grad) {
        ap->ensure_grad();
        VMap<Real>(ap->grad.data(), m).noalias() += g * CVMap<Real>(bp->value.data(), n);
      }
      if (bp->requires_grad) {
        bp->ensure_grad();
        VMap<Real>(bp->grad.data(), n).noalias() +=
            g.transpose() * CVMap<Real>(ap->value.data(), m);
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> bmm_nt(const Tensor<Real>& a, const Tensor<Real>& b) {
  AID_CHECK(a.rank() == 3 && b.rank() == 3, "bmm_nt: operands must be rank 3");
  AID_CHECK(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
            "bmm_nt: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  auto out = make_node<Real>({bs, m, n}, a.requires_grad() || b.requires_grad());
  for (int64_t i = 0; i < bs; ++i) {
    CMMap<Real> ma(a.data().data() + i * m * k, m, k);
    CMMap<Real> mb(b.data().data() + i * n * k, n, k);
    MMap<Real>(out->value.data() + i * m * n, m, n).noalias() = ma * mb.transpose();
  }
  if (out->requires_grad) {
    out->parents = {a.node(), b.node()};
    out->backward = [bs, m, k, n](detail::Node<Real>& self) {
      auto* ap = self.parents[0].get();
      auto* bp = self.parents[1].get();
      if (ap->requires_grad) ap->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
      for (int64_t i = 0; i < bs; ++i) {
        CMMap<Real> g(self.grad.data() + i * m * n, m, n);
        if (ap->requires_grad) {
          CMMap<Real> vb(bp->value.data() + i * n * k, n, k);
          MMap<Real>(ap->grad.data() + i * m * k, m, k).noalias() += g * vb;
        }
        if (bp->requires_grad) {
          CMMap<Real> va(ap->value.data() + i * m * k, m, k);
          MMap<Real>(bp->grad.data() + i * n * k, n, k).noalias() += g.transpose() * va;
        }
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> weighted_mean(const Tensor<Real>& attn, const Tensor<Real>& value, Real eps) {
  AID_CHECK(attn.rank() == 3 && value.rank() == 3, "weighted_mean: operands must be rank 3");
  AID_CHECK(attn.dim(0) == value.dim(0) && attn.dim(1) == value.dim(1),
            "weighted_mean: incompatible shapes " + shape_str(attn.shape()) + " vs " +
                shape_str(value.shape()));
  int64_t bs = attn.dim(0), m = attn.dim(1), n = attn.dim(2), d = value.dim(2);
  auto out = make_node<Real>({bs, n, d}, attn.requires_grad() || value.requires_grad());
  auto w = std::make_shared<std::vector<Real>>(static_cast<size_t>(bs * m * n));
  auto denom = std::make_shared<std::vector<Real>>(static_cast<size_t>(bs * n));

  std::vector<Real> buf(static_cast<size_t>(m));
  for (int64_t i = 0; i < bs; ++i) {
    const Real* pa = attn.data().data() + i * m * n;
    const Real* pv = value.data().data() + i * m * d;
    Real* pw = w->data() + i * m * n;
    Real* ps = denom->data() + i * n;
    for (int64_t j = 0; j < n; ++j) {
      for (int64_t l = 0; l < m; ++l) buf[static_cast<size_t>(l)] = pa[l * n + j] + eps;
      ps[j] = sorted_sum(buf.data(), static_cast<int>(m));
      Real inv = Real(1) / ps[j];
      for (int64_t l = 0; l < m; ++l) pw[l * n + j] = (pa[l * n + j] + eps) * inv;
    }
    Real* po = out->value.data() + i * n * d;
    for (int64_t j = 0; j < n; ++j)
      for (int64_t c = 0; c < d; ++c) {
        for (int64_t l = 0; l < m; ++l) buf[static_cast<size_t>(l)] = pw[l * n + j] * pv[l * d + c];
        po[j * d + c] = sorted_sum(buf.data(), static_cast<int>(m));
      }
  }

  if (out->requires_grad) {
    out->parents = {attn.node(), value.node()};
    out->backward = [w, denom, bs, m, n, d](detail::Node<Real>& self) {
      auto* ap = self.parents[0].get();
      auto* vp = self.parents[1].get();
      if (ap->requires_grad) ap->ensure_grad();
      if (vp->requires_grad) vp->ensure_grad();
      std::vector<Real> dw(static_cast<size_t>(m * n));
      std::vector<Real> buf(static_cast<size_t>(m));
      for (int64_t i = 0; i < bs; ++i) {
        CMMap<Real> g(self.grad.data() + i * n * d, n, d);
        const Real* pw = w->data() + i * m * n;
        if (vp->requires_grad) {
          // dvalue[l,:] += sum_j W[l,j] * g[j,:]
          CMMap<Real> mw(pw, m, n);
          MMap<Real>(vp->grad.data() + i * m * d, m, d).noalias() += mw * g;
        }
        if (ap->requires_grad) {
          // dW = value * g^T, then through the per-column normalization.
          CMMap<Real> mv(vp->value.data() + i * m * d, m, d);
          MMap<Real>(dw.data(), m, n).noalias() = mv * g.transpose();
          Real* da = ap->grad.data() + i * m * n;
          const Real* ps = denom->data() + i * n;
          for (int64_t j = 0; j < n; ++j) {
            for (int64_t l = 0; l < m; ++l)
              buf[static_cast<size_t>(l)] =
                  dw[static_cast<size_t>(l * n + j)] * pw[l * n + j];
            Real corr = sorted_sum(buf.data(), static_cast<int>(m));
            Real inv = Real(1) / ps[j];
            for (int64_t l = 0; l < m; ++l)
              da[l * n + j] += (dw[static_cast<size_t>(l * n + j)] - corr) * inv;
          }
        }
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

namespace {

template <typename Real>
void check_tpr_shapes(const Tensor<Real>& f, const Tensor<Real>& u1, const Tensor<Real>& u2,
                      const char* who) {
  AID_CHECK(f.rank() == 4, std::string(who) + ": memory must be [B,d,d,d]");
  int64_t bs = f.dim(0), d = f.dim(1);
  AID_CHECK(f.dim(2) == d && f.dim(3) == d, std::string(who) + ": memory must be cubic");
  AID_CHECK(u1.rank() == 2 && u1.dim(0) == bs && u1.dim(1) == d,
            std::string(who) + ": first operand must be [B,d], got " + shape_str(u1.shape()));
  AID_CHECK(u2.rank() == 2 && u2.dim(0) == bs && u2.dim(1) == d,
            std::string(who) + ": second operand must be [B,d], got " + shape_str(u2.shape()));
}

}  // namespace

template <typename Real>
Tensor<Real> tpr_read(const Tensor<Real>& f, const Tensor<Real>& u1, const Tensor<Real>& u2) {
  check_tpr_shapes(f, u1, u2, "tpr_read");
  int64_t bs = f.dim(0), d = f.dim(1);
  bool rg = f.requires_grad() || u1.requires_grad() || u2.requires_grad();
  auto out = make_node<Real>({bs, d}, rg);
  std::vector<Real> u12(static_cast<size_t>(d * d));
  for (int64_t i = 0; i < bs; ++i) {
    CVMap<Real> v1(u1.data().data() + i * d, d);
    CVMap<Real> v2(u2.data().data() + i * d, d);
    MMap<Real>(u12.data(), d, d).noalias() = v1 * v2.transpose();
    CMMap<Real> mf(f.data().data() + i * d * d * d, d * d, d);
    VMap<Real>(out->value.data() + i * d, d).noalias() =
        mf.transpose() * CVMap<Real>(u12.data(), d * d);
  }
  if (rg) {
    out->parents = {f.node(), u1.node(), u2.node()};
    out->backward = [bs, d](detail::Node<Real>& self) {
      auto* fp = self.parents[0].get();
      auto* p1 = self.parents[1].get();
      auto* p2 = self.parents[2].get();
      if (fp->requires_grad) fp->ensure_grad();
      if (p1->requires_grad) p1->ensure_grad();
      if (p2->requires_grad) p2->ensure_grad();
      std::vector<Real> u12(static_cast<size_t>(d * d));
      std::vector<Real> tmp(static_cast<size_t>(d * d));
      for (int64_t i = 0; i < bs; ++i) {
        CVMap<Real> g(self.grad.data() + i * d, d);
        CVMap<Real> v1(p1->value.data() + i * d, d);
        CVMap<Real> v2(p2->value.data() + i * d, d);
        if (fp->requires_grad) {
          MMap<Real>(u12.data(), d, d).noalias() = v1 * v2.transpose();
          MMap<Real> gf(fp->grad.data() + i * d * d * d, d * d, d);
          gf.noalias() += CVMap<Real>(u12.data(), d * d) * g.transpose();
        }
        if (p1->requires_grad || p2->requires_grad) {
          CMMap<Real> mf(fp->value.data() + i * d * d * d, d * d, d);
          VMap<Real>(tmp.data(), d * d).noalias() = mf * g;
          CMMap<Real> t(tmp.data(), d, d);
          if (p1->requires_grad)
            VMap<Real>(p1->grad.data() + i * d, d).noalias() += t * v2;
          if (p2->requires_grad)
            VMap<Real>(p2->grad.data() + i * d, d).noalias() += t.transpose() * v1;
        }
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

template <typename Real>
Tensor<Real> tpr_rank1_update(const Tensor<Real>& f, const Tensor<Real>& u1, const Tensor<Real>& u2,
                              const Tensor<Real>& w, const Tensor<Real>& beta) {
  check_tpr_shapes(f, u1, u2, "tpr_rank1_update");
  int64_t bs = f.dim(0), d = f.dim(1);
  AID_CHECK(w.rank() == 2 && w.dim(0) == bs && w.dim(1) == d,
            "tpr_rank1_update: filler must be [B,d]");
  AID_CHECK(beta.size() == bs, "tpr_rank1_update: beta must have one entry per batch element");
  bool rg = f.requires_grad() || u1.requires_grad() || u2.requires_grad() || w.requires_grad() ||
            beta.requires_grad();
  auto out = make_node<Real>(f.shape(), rg);
  out->value.assign(f.data().begin(), f.data().end());
  std::vector<Real> u12(static_cast<size_t>(d * d));
  for (int64_t i = 0; i < bs; ++i) {
    Real b = beta.data()[static_cast<size_t>(i)];
    CVMap<Real> v1(u1.data().data() + i * d, d);
    CVMap<Real> v2(u2.data().data() + i * d, d);
    CVMap<Real> vw(w.data().data() + i * d, d);
    MMap<Real>(u12.data(), d, d).noalias() = v1 * v2.transpose();
    MMap<Real> mo(out->value.data() + i * d * d * d, d * d, d);
    mo.noalias() += (b * CVMap<Real>(u12.data(), d * d)) * vw.transpose();
  }
  if (rg) {
    out->parents = {f.node(), u1.node(), u2.node(), w.node(), beta.node()};
    out->backward = [bs, d](detail::Node<Real>& self) {
      auto* fp = self.parents[0].get();
      auto* p1 = self.parents[1].get();
      auto* p2 = self.parents[2].get();
      auto* pw = self.parents[3].get();
      auto* pb = self.parents[4].get();
      if (fp->requires_grad) {
        fp->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) fp->grad[i] += self.grad[i];
      }
      if (p1->requires_grad) p1->ensure_grad();
      if (p2->requires_grad) p2->ensure_grad();
      if (pw->requires_grad) pw->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      std::vector<Real> tmp(static_cast<size_t>(d * d));
      std::vector<Real> u12(static_cast<size_t>(d * d));
      std::vector<Real> tv(static_cast<size_t>(d));
      for (int64_t i = 0; i < bs; ++i) {
        Real b = pb->value[static_cast<size_t>(i)];
        CMMap<Real> g(self.grad.data() + i * d * d * d, d * d, d);
        CVMap<Real> v1(p1->value.data() + i * d, d);
        CVMap<Real> v2(p2->value.data() + i * d, d);
        CVMap<Real> vw(pw->value.data() + i * d, d);
        // t[a,e] = sum_c g[(a,e),c] * w[c]
        VMap<Real>(tmp.data(), d * d).noalias() = g * vw;
        CMMap<Real> t(tmp.data(), d, d);
        VMap<Real> tv_map(tv.data(), d);
        tv_map.noalias() = t * v2;  // shared by gu1 and gbeta
        if (p1->requires_grad) VMap<Real>(p1->grad.data() + i * d, d).noalias() += b * tv_map;
        if (p2->requires_grad)
          VMap<Real>(p2->grad.data() + i * d, d).noalias() += b * (t.transpose() * v1);
        if (pw->requires_grad) {
          MMap<Real>(u12.data(), d, d).noalias() = v1 * v2.transpose();
          VMap<Real>(pw->grad.data() + i * d, d).noalias() +=
              b * (g.transpose() * CVMap<Real>(u12.data(), d * d));
        }
        if (pb->requires_grad) pb->grad[static_cast<size_t>(i)] += v1.dot(tv_map);
      }
    };
  }
  return Tensor<Real>::wrap(std::move(out));
}

#define AID_INSTANTIATE_LINALG(R)                                                              \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                               \
  template Tensor<R> outer(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> bmm_nt(const Tensor<R>&, const Tensor<R>&);                               \
  template Tensor<R> weighted_mean(const Tensor<R>&, const Tensor<R>&, R);                     \
  template Tensor<R> tpr_read(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);           \
  template Tensor<R> tpr_rank1_update(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,    \
                                      const Tensor<R>&, const Tensor<R>&);

AID_INSTANTIATE_LINALG(float)
AID_INSTANTIATE_LINALG(double)

#undef AID_INSTANTIATE_LINALG

}  // namespace aid
