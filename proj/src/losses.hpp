#pragma once

#include <span>
#include <string>
#include <vector>

#include "adaptive_conv.hpp"
#include "core/autograd.hpp"
#include "datamodel.hpp"

// Training objectives as differentiable functions of network outputs.
// Reductions are means over elements (L1, squared L2) and over patches
// (adversarial terms).
namespace mduit::losses {

inline constexpr double kProbClamp = 1e-7;

struct Adversarial {
  ag::Var discriminator;  // minimized by D
  ag::Var generator;      // non-saturating, minimized by the generator side
  int clamped = 0;        // log arguments (p or 1 - p) floored at kProbClamp
};

// D: -[mean log D(I_s) + mean log D(I_t) + mean log(1 - D(I_s->t))]
// G: -mean log D(I_s->t)
Adversarial adv_image(const ag::Var& d_real_s, const ag::Var& d_real_t,
                      const ag::Var& d_fake);

// D: -[mean log D_a(I_t, I_t+) + mean log(1 - D_a(I_t, I_s->t))]
// G: -mean log D_a(I_t, I_s->t)
Adversarial adv_appearance(const ag::Var& d_same, const ag::Var& d_cross);

// Non-saturating generator term -mean log D(fake) on its own, for when the
// discriminator was updated after the fake was first scored.
ag::Var adv_generator(const ag::Var& d_fake, int* clamped = nullptr);

// Mean absolute difference.
ag::Var rec_self(const ag::Var& reconstruction, const ag::Var& original);
ag::Var rec_cycle(const ag::Var& cycled, const ag::Var& original);

// max(0, mean (f_s - f_st)^2 - mean (f_s - f_neg)^2 + margin)
ag::Var cons_content(const ag::Var& f_s, const ag::Var& f_st,
                     const ag::Var& f_neg, double margin);

// max(0, 1 - cos(w_t, w_st) + cos(w_t, w_neg)) over flattened weights.
ag::Var cons_appearance(const ag::Var& w_t, const ag::Var& w_st,
                        const ag::Var& w_neg);
ag::Var cons_appearance(const AppearanceFilter& w_t,
                        const AppearanceFilter& w_st,
                        const AppearanceFilter& w_neg);

// -log softmax of the positive logit among {z_q.z_pos, z_q.z_neg_i} / tau.
// Negative terms are summed in sorted order, so the value does not depend on
// the order of `z_negs`.
ag::Var nce(const ag::Var& z_q, const ag::Var& z_pos,
            std::span<const ag::Var> z_negs, double tau);

struct GeneratorTerms {
  ag::Var adv_image, adv_appearance, rec_self, rec_cycle, cons_content,
      cons_appearance, nce;
};

// adv_i + adv_a + b_rs rec_self + b_rc rec_cycle + b_cc cons_c + b_ca cons_a
// + b_nce nce. Undefined terms are skipped. A non-finite term throws a
// numeric error naming it.
ag::Var generator_total(const GeneratorTerms& terms, const LossWeights& betas);
ag::Var discriminator_total(const ag::Var& adv_image_d,
                            const ag::Var& adv_appearance_d);

struct TermValue {
  std::string name;
  double value;
};
std::vector<TermValue> term_values(const GeneratorTerms& terms);

}  // namespace mduit::losses
