#include "reina/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace reina::ad {
namespace {

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::invalid_argument("op input is an unbound Var");
    if (t && v.tape() != t) throw std::invalid_argument("op inputs live on different tapes");
    t = v.tape();
  }
  return *t;
}

bool any_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.requires_grad()) return true;
  }
  return false;
}

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_matrix(const Var& v, const char* op) {
  require(v.value().rank() == 2, op, "expected a matrix, got shape " + shape_string(v.shape()));
}

void require_vector(const Var& v, const char* op) {
  require(v.value().rank() == 1, op, "expected a vector, got shape " + shape_string(v.shape()));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  require(bv.rows() == k, "matmul",
          "inner dimensions differ: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("matmul", std::move(out), any_grad({a, b}), [ia, ib, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("add", std::move(out), any_grad({a, b}), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      Tensor& gi = tp.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("sub", std::move(out), any_grad({a, b}), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of({a, b});
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("mul", std::move(out), any_grad({a, b}), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  Tape& t = tape_of({a});
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.value()[i];
  const std::size_t ia = a.id();
  return t.record("scale", std::move(out), any_grad({a}), [ia, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = tape_of({x, bias});
  require_matrix(x, "add_bias");
  require_vector(bias, "add_bias");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  require(bias.size() == n, "add_bias", "bias length does not match columns");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.value()[i * n + j] + bias.value()[j];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return t.record("add_bias", std::move(out), any_grad({x, bias}), [ix, ib, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ix)) {
      Tensor& gx = tp.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
  });
}

Var gelu(Var x) {
  Tape& t = tape_of({x});
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double z = xv[i];
    out[i] = 0.5 * z * (1.0 + std::tanh(kC * (z + kA * z * z * z)));
  }
  const std::size_t ix = x.id();
  return t.record("gelu", std::move(out), any_grad({x}), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double z = xv[i];
      const double th = std::tanh(kC * (z + kA * z * z * z));
      const double d = 0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * z * z);
      gx[i] += g[i] * d;
    }
  });
}

Var relu(Var x) {
  Tape& t = tape_of({x});
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const std::size_t ix = x.id();
  return t.record("relu", std::move(out), any_grad({x}), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of({x});
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double z = xv[i];
    out[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  const std::size_t ix = x.id();
  return t.record("sigmoid", std::move(out), any_grad({x}), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var square(Var x) {
  Tape& t = tape_of({x});
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * xv[i];
  const std::size_t ix = x.id();
  return t.record("square", std::move(out), any_grad({x}), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xv = tp.value(ix);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of({x, gamma, beta});
  require_matrix(x, "layer_norm");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  require(gamma.size() == n && beta.size() == n, "layer_norm", "gamma/beta length mismatch");
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  std::vector<double> rstd(m);
  Tensor xhat(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = xv[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[i * n + j] - mu) * rstd[i];
      xhat[i * n + j] = h;
      out[i * n + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t.record("layer_norm", std::move(out), any_grad({x, gamma, beta}),
                  [ix, ig, ib, m, n, rstd = std::move(rstd), xhat = std::move(xhat)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& gv = tp.value(ig);
    if (tp.requires_grad(ig)) {
      Tensor& gg = tp.grad(ig);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
      }
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
    if (tp.requires_grad(ix)) {
      Tensor& gx = tp.grad(ix);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[i * n + j] * gv[j];
          mean_d += d;
          mean_dh += d * xhat[i * n + j];
        }
        mean_d *= inv_n;
        mean_dh *= inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[i * n + j] * gv[j];
          gx[i * n + j] += rstd[i] * (d - mean_d - xhat[i * n + j] * mean_dh);
        }
      }
    }
  });
}

Var attention(Var q, Var k, Var v, std::size_t heads, AttentionMask mask) {
  Tape& t = tape_of({q, k, v});
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  const std::size_t m = q.value().rows(), n = k.value().rows(), d = q.value().cols();
  require(k.value().cols() == d && v.value().cols() == d && v.value().rows() == n, "attention",
          "q/k/v shapes disagree");
  require(heads > 0 && d % heads == 0, "attention", "feature dim not divisible by heads");
  if (mask == AttentionMask::kCausal) require(n >= m, "attention", "causal mask needs keys >= queries");
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t offset = n - std::min(n, m);
  auto limit = [mask, n, offset](std::size_t i) {
    return mask == AttentionMask::kCausal ? i + offset + 1 : n;
  };

  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  // probs[h][i][j], j < limit(i)
  std::vector<double> probs(heads * m * n, 0.0);
  Tensor out({m, d});
  std::vector<double> scores(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t lim = limit(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < lim; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qv[i * d + c0 + c] * kv[j * d + c0 + c];
        s *= inv_scale;
        scores[j] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < lim; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      double* p = &probs[(h * m + i) * n];
      for (std::size_t j = 0; j < lim; ++j) p[j] = scores[j] / z;
      for (std::size_t j = 0; j < lim; ++j) {
        const double pj = p[j];
        for (std::size_t c = 0; c < dh; ++c) out[i * d + c0 + c] += pj * vv[j * d + c0 + c];
      }
    }
  }
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return t.record("attention", std::move(out), any_grad({q, k, v}),
                  [iq, ik, iv, m, n, d, dh, heads, inv_scale, limit, probs = std::move(probs)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& qv = tp.value(iq);
    const Tensor& kv = tp.value(ik);
    const Tensor& vv = tp.value(iv);
    const bool gq = tp.requires_grad(iq), gk = tp.requires_grad(ik), gvv = tp.requires_grad(iv);
    Tensor* gQ = gq ? &tp.grad(iq) : nullptr;
    Tensor* gK = gk ? &tp.grad(ik) : nullptr;
    Tensor* gV = gvv ? &tp.grad(iv) : nullptr;
    std::vector<double> dp(n);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lim = limit(i);
        const double* p = &probs[(h * m + i) * n];
        double dot_pd = 0.0;
        for (std::size_t j = 0; j < lim; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += g[i * d + c0 + c] * vv[j * d + c0 + c];
          dp[j] = s;
          dot_pd += p[j] * s;
          if (gV) {
            for (std::size_t c = 0; c < dh; ++c) (*gV)[j * d + c0 + c] += p[j] * g[i * d + c0 + c];
          }
        }
        for (std::size_t j = 0; j < lim; ++j) {
          const double ds = p[j] * (dp[j] - dot_pd) * inv_scale;
          if (gQ) {
            for (std::size_t c = 0; c < dh; ++c) (*gQ)[i * d + c0 + c] += ds * kv[j * d + c0 + c];
          }
          if (gK) {
            for (std::size_t c = 0; c < dh; ++c) (*gK)[j * d + c0 + c] += ds * qv[i * d + c0 + c];
          }
        }
      }
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Tape& t = tape_of({table});
  require_matrix(table, "embedding");
  require(!ids.empty(), "embedding", "empty id sequence");
  const std::size_t vocab = table.value().rows(), d = table.value().cols();
  std::vector<int> idv(ids.begin(), ids.end());
  for (int id : idv) {
    require(id >= 0 && static_cast<std::size_t>(id) < vocab, "embedding",
            "id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab));
  }
  Tensor out({idv.size(), d});
  for (std::size_t i = 0; i < idv.size(); ++i) {
    auto src = table.value().row(static_cast<std::size_t>(idv[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const std::size_t it = table.id();
  return t.record("embedding", std::move(out), any_grad({table}), [it, d, idv = std::move(idv)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gt = tp.grad(it);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      const std::size_t r = static_cast<std::size_t>(idv[i]);
      for (std::size_t c = 0; c < d; ++c) gt[r * d + c] += g[i * d + c];
    }
  });
}

Var log_softmax(Var x) {
  Tape& t = tape_of({x});
  const Tensor& xv = x.value();
  require(xv.rank() == 1 || xv.rank() == 2, "log_softmax", "expected a vector or matrix");
  require(xv.all_finite(), "log_softmax", "non-finite input");
  const std::size_t rows = xv.rank() == 1 ? 1 : xv.rows();
  const std::size_t n = xv.rank() == 1 ? xv.size() : xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * n;
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[j] - lse;
  }
  const std::size_t ix = x.id();
  return t.record("log_softmax", std::move(out), any_grad({x}), [ix, rows, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gsum;
    }
  });
}

Var pick(Var x, std::span<const int> idx) {
  Tape& t = tape_of({x});
  require_matrix(x, "pick");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  require(idx.size() == m, "pick", "index count does not match rows");
  std::vector<int> iv(idx.begin(), idx.end());
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    require(iv[i] >= 0 && static_cast<std::size_t>(iv[i]) < n, "pick", "column index out of range");
    out[i] = x.value()[i * n + static_cast<std::size_t>(iv[i])];
  }
  const std::size_t ixd = x.id();
  return t.record("pick", std::move(out), any_grad({x}), [ixd, n, iv = std::move(iv)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ixd);
    for (std::size_t i = 0; i < iv.size(); ++i) gx[i * n + static_cast<std::size_t>(iv[i])] += g[i];
  });
}

Var gather(Var v, std::span<const std::size_t> idx) {
  Tape& t = tape_of({v});
  require_vector(v, "gather");
  require(!idx.empty(), "gather", "empty index list");
  std::vector<std::size_t> iv(idx.begin(), idx.end());
  Tensor out({iv.size()});
  for (std::size_t j = 0; j < iv.size(); ++j) {
    require(iv[j] < v.size(), "gather", "index out of range");
    out[j] = v.value()[iv[j]];
  }
  const std::size_t id = v.id();
  return t.record("gather", std::move(out), any_grad({v}), [id, iv = std::move(iv)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gv = tp.grad(id);
    for (std::size_t j = 0; j < iv.size(); ++j) gv[iv[j]] += g[j];
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  Tape& t = tape_of({x});
  const Tensor& xv = x.value();
  require(begin < end && end <= xv.rows(), "slice_rows", "invalid row range");
  const std::size_t width = xv.rank() == 1 ? 1 : xv.cols();
  Shape shape = xv.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * width),
            xv.data().begin() + static_cast<std::ptrdiff_t>(end * width), out.data().begin());
  const std::size_t ix = x.id();
  return t.record("slice_rows", std::move(out), any_grad({x}), [ix, begin, width](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * width + i] += g[i];
  });
}

Var concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat", "no inputs");
  Tape& t = tape_of({parts[0]});
  const std::size_t rank = parts[0].value().rank();
  require(rank == 1 || rank == 2, "concat", "expected vectors or matrices");
  const std::size_t width = rank == 1 ? 1 : parts[0].value().cols();
  std::size_t rows = 0;
  bool grad = false;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    require(p.tape() == &t, "concat", "inputs on different tapes");
    require(p.value().rank() == rank && (rank == 1 || p.value().cols() == width), "concat",
            "inconsistent shapes");
    rows += p.value().rows();
    grad = grad || p.requires_grad();
    ids.push_back(p.id());
    sizes.push_back(p.size());
  }
  Shape shape = rank == 1 ? Shape{rows} : Shape{rows, width};
  Tensor out(shape);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
  return t.record("concat", std::move(out), grad, [ids = std::move(ids), sizes = std::move(sizes)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        Tensor& gi = tp.grad(ids[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) gi[i] += g[off + i];
      }
      off += sizes[k];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of({x});
  require(shape_size(shape) == x.size(), "reshape", "element count changes");
  Tensor out(std::move(shape), x.value().storage());
  const std::size_t ix = x.id();
  return t.record("reshape", std::move(out), any_grad({x}), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var sum(Var x) {
  Tape& t = tape_of({x});
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return t.record("sum", Tensor::scalar(s), any_grad({x}), [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean(Var x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var batch_norm(Var v, double eps) {
  Tape& t = tape_of({v});
  require_vector(v, "batch_norm");
  require(eps >= 0.0, "batch_norm", "eps must be nonnegative");
  const Tensor& x = v.value();
  const std::size_t n = x.size();
  double mu = 0.0;
  for (double a : x.data()) mu += a;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double a : x.data()) var += (a - mu) * (a - mu);
  var /= static_cast<double>(n);
  const double denom = var + eps;
  // Constant input with eps == 0: centered values are all zero, emit zeros.
  const double rstd = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mu) * rstd;
  const std::size_t ix = v.id();
  return t.record("batch_norm", std::move(out), any_grad({v}), [ix, n, rstd, denom](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ix);
    Tensor& gx = tp.grad(ix);
    // y = (x - mu) * rstd; with eps > 0 the normalized values are not unit
    // variance, so differentiate through the centered values directly.
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x[i];
    mu /= static_cast<double>(n);
    double mean_g = 0.0, mean_gc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_g += g[i];
      mean_gc += g[i] * (x[i] - mu);
    }
    mean_g /= static_cast<double>(n);
    mean_gc /= static_cast<double>(n);
    const double curv = denom > 0.0 ? rstd / denom : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gx[i] += rstd * (g[i] - mean_g) - curv * (x[i] - mu) * mean_gc;
    }
  });
}

Var monotonicity_hinge(Var q, double eps) {
  Tape& t = tape_of({q});
  require_vector(q, "monotonicity_hinge");
  const Tensor& qv = q.value();
  const std::size_t n = qv.size();
  Tensor out({n});
  std::vector<std::size_t> argmax(n, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    argmax[i] = best;
    out[i] = std::max(qv[best] - qv[i] - eps, 0.0);
    if (qv[i] > qv[best]) best = i;
  }
  const std::size_t iq = q.id();
  return t.record("monotonicity_hinge", std::move(out), any_grad({q}), [iq, n, argmax = std::move(argmax)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& gq = tp.grad(iq);
    for (std::size_t i = 1; i < n; ++i) {
      if (y[i] > 0.0) {
        gq[argmax[i]] += g[i];
        gq[i] -= g[i];
      }
    }
  });
}

Var dropout(Var x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  Tape& t = tape_of({x});
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = x.value()[i] * mask[i];
  }
  const std::size_t ix = x.id();
  return t.record("dropout", std::move(out), any_grad({x}), [ix, mask = std::move(mask)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var smoothed_nll(Var logp, std::span<const int> labels, std::span<const double> weights,
                 double smoothing) {
  Tape& t = tape_of({logp});
  require_matrix(logp, "smoothed_nll");
  const std::size_t m = logp.value().rows(), n = logp.value().cols();
  require(labels.size() == m && weights.size() == m, "smoothed_nll", "rows/labels/mask lengths disagree");
  require(smoothing >= 0.0 && smoothing < 1.0, "smoothed_nll", "smoothing must be in [0, 1)");
  double wsum = 0.0;
  for (double w : weights) {
    require(w >= 0.0, "smoothed_nll", "negative weight");
    wsum += w;
  }
  require(wsum > 0.0, "smoothed_nll", "all positions masked");
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> wts(weights.begin(), weights.end());
  const Tensor& lp = logp.value();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (wts[i] == 0.0) continue;
    require(lab[i] >= 0 && static_cast<std::size_t>(lab[i]) < n, "smoothed_nll", "label out of range");
    double row_mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) row_mean += lp[i * n + j];
    row_mean /= static_cast<double>(n);
    const double loss = -(1.0 - smoothing) * lp[i * n + static_cast<std::size_t>(lab[i])] - smoothing * row_mean;
    total += wts[i] * loss;
  }
  const std::size_t il = logp.id();
  return t.record("smoothed_nll", Tensor::scalar(total / wsum), any_grad({logp}),
                  [il, m, n, wsum, smoothing, lab = std::move(lab), wts = std::move(wts)](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0] / wsum;
    Tensor& gl = tp.grad(il);
    for (std::size_t i = 0; i < m; ++i) {
      if (wts[i] == 0.0) continue;
      const double gw = g * wts[i];
      for (std::size_t j = 0; j < n; ++j) gl[i * n + j] -= gw * smoothing / static_cast<double>(n);
      gl[i * n + static_cast<std::size_t>(lab[i])] -= gw * (1.0 - smoothing);
    }
  });
}

}  // namespace reina::ad
