#include "losses.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace mduit::losses {

namespace {

struct LogTerm {
  ag::Var value;
  int clamped = 0;
};

// mean(-log p) when `real`, mean(-log(1 - p)) otherwise.
LogTerm neg_log_mean(const ag::Var& p, bool real) {
  require(p.defined() && !p.value().empty(), "adversarial map is empty");
  require(p.value().all_finite(), "adversarial map has non-finite entries");
  const Tensor& v = p.value();
  const double n = static_cast<double>(v.size());
  double s = 0.0;
  int clamped = 0;
  for (double x : v.values()) {
    const double q = real ? x : 1.0 - x;
    if (q < kProbClamp) ++clamped;
    s -= std::log(std::max(q, kProbClamp));
  }
  ag::Var out = ag::make_op(Tensor::scalar(s / n), {p}, [real, n](ag::Node& self) {
    ag::Node& pn = *self.parents[0];
    Tensor& g = pn.grad_buffer();
    const double d = self.grad[0] / n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = real ? pn.value[i] : 1.0 - pn.value[i];
      if (q < kProbClamp) continue;
      g[i] += real ? -d / q : d / q;
    }
  });
  return {out, clamped};
}

ag::Var mean_abs_diff(const ag::Var& a, const ag::Var& b, const char* what) {
  require(a.defined() && b.defined() && a.shape() == b.shape(),
          std::string(what) + ": shape mismatch");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  return ag::make_op(Tensor::scalar(s / n), {a, b}, [n](ag::Node& self) {
    ag::Node& an = *self.parents[0];
    ag::Node& bn = *self.parents[1];
    const double d = self.grad[0] / n;
    for (std::size_t i = 0; i < an.value.size(); ++i) {
      const double diff = an.value[i] - bn.value[i];
      const double sg = diff > 0.0 ? d : (diff < 0.0 ? -d : 0.0);
      if (an.requires_grad) an.grad_buffer()[i] += sg;
      if (bn.requires_grad) bn.grad_buffer()[i] -= sg;
    }
  });
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_finite(const ag::Var& v, const std::string& name) {
  if (v.defined() && !std::isfinite(v.item()))
    fail(ErrorCode::kNumeric, "non-finite loss term '" + name + "'");
}

}  // namespace

Adversarial adv_image(const ag::Var& d_real_s, const ag::Var& d_real_t,
                      const ag::Var& d_fake) {
  const LogTerm rs = neg_log_mean(d_real_s, true);
  const LogTerm rt = neg_log_mean(d_real_t, true);
  const LogTerm ff = neg_log_mean(d_fake, false);
  const LogTerm fg = neg_log_mean(d_fake, true);
  return {ag::add(ag::add(rs.value, rt.value), ff.value), fg.value,
          rs.clamped + rt.clamped + ff.clamped + fg.clamped};
}

Adversarial adv_appearance(const ag::Var& d_same, const ag::Var& d_cross) {
  const LogTerm s = neg_log_mean(d_same, true);
  const LogTerm cf = neg_log_mean(d_cross, false);
  const LogTerm cg = neg_log_mean(d_cross, true);
  return {ag::add(s.value, cf.value), cg.value,
          s.clamped + cf.clamped + cg.clamped};
}

ag::Var adv_generator(const ag::Var& d_fake, int* clamped) {
  const LogTerm t = neg_log_mean(d_fake, true);
  if (clamped) *clamped += t.clamped;
  return t.value;
}

ag::Var rec_self(const ag::Var& reconstruction, const ag::Var& original) {
  return mean_abs_diff(reconstruction, original, "rec_self");
}

ag::Var rec_cycle(const ag::Var& cycled, const ag::Var& original) {
  return mean_abs_diff(cycled, original, "rec_cycle");
}

ag::Var cons_content(const ag::Var& f_s, const ag::Var& f_st,
                     const ag::Var& f_neg, double margin) {
  require(f_s.defined() && f_st.defined() && f_neg.defined() &&
              f_s.shape() == f_st.shape() && f_s.shape() == f_neg.shape(),
          "cons_content: shape mismatch");
  const Tensor& s = f_s.value();
  const Tensor& p = f_st.value();
  const Tensor& q = f_neg.value();
  const double n = static_cast<double>(s.size());
  double dpos = 0.0, dneg = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double a = s[i] - p[i], b = s[i] - q[i];
    dpos += a * a;
    dneg += b * b;
  }
  const double v = dpos / n - dneg / n + margin;
  const bool active = v > 0.0;
  return ag::make_op(
      Tensor::scalar(active ? v : 0.0), {f_s, f_st, f_neg},
      [active, n](ag::Node& self) {
        if (!active) return;
        ag::Node& sn = *self.parents[0];
        ag::Node& pn = *self.parents[1];
        ag::Node& qn = *self.parents[2];
        const double d = 2.0 * self.grad[0] / n;
        for (std::size_t i = 0; i < sn.value.size(); ++i) {
          const double a = sn.value[i] - pn.value[i];
          const double b = sn.value[i] - qn.value[i];
          if (sn.requires_grad) sn.grad_buffer()[i] += d * (a - b);
          if (pn.requires_grad) pn.grad_buffer()[i] -= d * a;
          if (qn.requires_grad) qn.grad_buffer()[i] += d * b;
        }
      });
}

ag::Var cons_appearance(const ag::Var& w_t, const ag::Var& w_st,
                        const ag::Var& w_neg) {
  require(w_t.defined() && w_st.defined() && w_neg.defined() &&
              w_t.value().size() == w_st.value().size() &&
              w_t.value().size() == w_neg.value().size(),
          "cons_appearance: shape mismatch");
  const Tensor& t = w_t.value();
  const Tensor& p = w_st.value();
  const Tensor& q = w_neg.value();
  const double nt = std::sqrt(dot(t, t)), np = std::sqrt(dot(p, p)),
               nq = std::sqrt(dot(q, q));
  require(nt > 0.0 && np > 0.0 && nq > 0.0,
          "cons_appearance: zero-norm appearance filter");
  const double cos_p = dot(t, p) / (nt * np);
  const double cos_q = dot(t, q) / (nt * nq);
  const double v = 1.0 - cos_p + cos_q;
  const bool active = v > 0.0;
  return ag::make_op(
      Tensor::scalar(active ? v : 0.0), {w_t, w_st, w_neg},
      [active, nt, np, nq, cos_p, cos_q](ag::Node& self) {
        if (!active) return;
        ag::Node& tn = *self.parents[0];
        ag::Node& pn = *self.parents[1];
        ag::Node& qn = *self.parents[2];
        const double d = self.grad[0];
        // d cos(a, b) / da = b / (|a||b|) - cos(a, b) a / |a|^2
        for (std::size_t i = 0; i < tn.value.size(); ++i) {
          const double t = tn.value[i], p = pn.value[i], q = qn.value[i];
          if (tn.requires_grad) {
            const double dcp = p / (nt * np) - cos_p * t / (nt * nt);
            const double dcq = q / (nt * nq) - cos_q * t / (nt * nt);
            tn.grad_buffer()[i] += d * (-dcp + dcq);
          }
          if (pn.requires_grad)
            pn.grad_buffer()[i] -= d * (t / (nt * np) - cos_p * p / (np * np));
          if (qn.requires_grad)
            qn.grad_buffer()[i] += d * (t / (nt * nq) - cos_q * q / (nq * nq));
        }
      });
}

ag::Var cons_appearance(const AppearanceFilter& w_t,
                        const AppearanceFilter& w_st,
                        const AppearanceFilter& w_neg) {
  return cons_appearance(flatten_weights(w_t), flatten_weights(w_st),
                         flatten_weights(w_neg));
}

ag::Var nce(const ag::Var& z_q, const ag::Var& z_pos,
            std::span<const ag::Var> z_negs, double tau) {
  require(!z_negs.empty(), "nce: at least one negative is required");
  require(tau > 0.0, "nce: temperature must be positive");
  auto unit = [](const ag::Var& z, const char* what) {
    require(z.defined() && z.value().rank() == 1,
            std::string("nce: ") + what + " must be a vector");
    const double n = std::sqrt(dot(z.value(), z.value()));
    require(std::abs(n - 1.0) <= 1e-5,
            std::string("nce: ") + what + " is not unit norm");
  };
  unit(z_q, "query");
  unit(z_pos, "positive");
  for (const auto& z : z_negs) {
    unit(z, "negative");
    require(z.value().size() == z_q.value().size(), "nce: dimension mismatch");
  }
  require(z_pos.value().size() == z_q.value().size(), "nce: dimension mismatch");

  const std::size_t m = z_negs.size();
  std::vector<double> logits(m + 1);
  logits[0] = dot(z_q.value(), z_pos.value()) / tau;
  for (std::size_t i = 0; i < m; ++i)
    logits[i + 1] = dot(z_q.value(), z_negs[i].value()) / tau;
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> terms(m + 1);
  for (std::size_t i = 0; i <= m; ++i) terms[i] = std::exp(logits[i] - mx);
  std::vector<double> sorted = terms;
  std::sort(sorted.begin(), sorted.end());
  double denom = 0.0;
  for (double t : sorted) denom += t;
  const double loss = std::log(denom) + mx - logits[0];

  std::vector<ag::Var> inputs{z_q, z_pos};
  inputs.insert(inputs.end(), z_negs.begin(), z_negs.end());
  std::vector<double> softmax(m + 1);
  for (std::size_t i = 0; i <= m; ++i) softmax[i] = terms[i] / denom;
  return ag::make_op(
      Tensor::scalar(loss), inputs,
      [tau, m, softmax = std::move(softmax)](ag::Node& self) {
        const double d = self.grad[0] / tau;
        ag::Node& q = *self.parents[0];
        ag::Node& pos = *self.parents[1];
        const std::size_t k = q.value.size();
        std::vector<double> dq(k, 0.0);
        // dL/dlogit_0 = s_0 - 1, dL/dlogit_i = s_i
        const double c0 = softmax[0] - 1.0;
        for (std::size_t j = 0; j < k; ++j) dq[j] += c0 * pos.value[j];
        if (pos.requires_grad)
          for (std::size_t j = 0; j < k; ++j)
            pos.grad_buffer()[j] += d * c0 * q.value[j];
        for (std::size_t i = 0; i < m; ++i) {
          ag::Node& neg = *self.parents[2 + i];
          for (std::size_t j = 0; j < k; ++j)
            dq[j] += softmax[i + 1] * neg.value[j];
          if (neg.requires_grad)
            for (std::size_t j = 0; j < k; ++j)
              neg.grad_buffer()[j] += d * softmax[i + 1] * q.value[j];
        }
        if (q.requires_grad)
          for (std::size_t j = 0; j < k; ++j) q.grad_buffer()[j] += d * dq[j];
      });
}

ag::Var generator_total(const GeneratorTerms& t, const LossWeights& b) {
  const std::pair<const ag::Var*, std::pair<const char*, double>> parts[] = {
      {&t.adv_image, {"adv_image", 1.0}},
      {&t.adv_appearance, {"adv_appearance", 1.0}},
      {&t.rec_self, {"rec_self", b.rec_self}},
      {&t.rec_cycle, {"rec_cycle", b.rec_cycle}},
      {&t.cons_content, {"cons_content", b.cons_content}},
      {&t.cons_appearance, {"cons_appearance", b.cons_appearance}},
      {&t.nce, {"nce", b.nce}},
  };
  ag::Var total;
  for (const auto& [var, meta] : parts) {
    if (!var->defined()) continue;
    check_finite(*var, meta.first);
    const ag::Var weighted = meta.second == 1.0 ? *var : ag::scale(*var, meta.second);
    total = total.defined() ? ag::add(total, weighted) : weighted;
  }
  require(total.defined(), "generator_total: no terms", ErrorCode::kInvalidArgument);
  return total;
}

ag::Var discriminator_total(const ag::Var& adv_image_d,
                            const ag::Var& adv_appearance_d) {
  check_finite(adv_image_d, "adv_image_d");
  check_finite(adv_appearance_d, "adv_appearance_d");
  return ag::add(adv_image_d, adv_appearance_d);
}

std::vector<TermValue> term_values(const GeneratorTerms& t) {
  std::vector<TermValue> out;
  auto push = [&out](const char* name, const ag::Var& v) {
    if (v.defined()) out.push_back({name, v.item()});
  };
  push("adv_image_g", t.adv_image);
  push("adv_appearance_g", t.adv_appearance);
  push("rec_self", t.rec_self);
  push("rec_cycle", t.rec_cycle);
  push("cons_content", t.cons_content);
  push("cons_appearance", t.cons_appearance);
  push("nce", t.nce);
  return out;
}

}  // namespace mduit::losses
