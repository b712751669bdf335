#pragma once

// Pre-norm transformer encoder stack over [B,S,D] token sequences.

#include <string>
#include <vector>

#include "skelmae/autodiff.hpp"
#include "skelmae/nn.hpp"

namespace skelmae::nn {

struct EncoderLayer {
  LayerNorm ln1, ln2;
  Linear q, k, v, o, ff1, ff2;
  int heads = 1;

  EncoderLayer() = default;
  EncoderLayer(ParamSet& ps, const std::string& name, int dim, int n_heads, int ff_dim, Rng& rng)
      : ln1(ps, name + ".ln1", dim),
        ln2(ps, name + ".ln2", dim),
        q(ps, name + ".attn.q", dim, dim, rng),
        k(ps, name + ".attn.k", dim, dim, rng),
        v(ps, name + ".attn.v", dim, dim, rng),
        o(ps, name + ".attn.o", dim, dim, rng),
        ff1(ps, name + ".ff1", dim, ff_dim, rng),
        ff2(ps, name + ".ff2", ff_dim, dim, rng),
        heads(n_heads) {
    require(dim % n_heads == 0, ErrorCode::invalid_argument, "heads must divide the model dimension");
  }

  Var operator()(const Var& x, const std::vector<char>& key_valid) const {
    const Var h = ln1(x);
    Var y = ad::add(x, o(ad::attention(q(h), k(h), v(h), heads, key_valid)));
    return ad::add(y, ff2(ad::relu(ff1(ln2(y)))));
  }
};

class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(ParamSet& ps, const std::string& name, int layers, int dim, int heads, int ff_dim, Rng& rng) {
    for (int l = 0; l < layers; ++l)
      layers_.emplace_back(ps, name + ".layer" + std::to_string(l), dim, heads, ff_dim, rng);
    final_ = LayerNorm(ps, name + ".ln_out", dim);
  }

  /// key_valid: optional B·S mask of attendable tokens.
  Var operator()(Var x, const std::vector<char>& key_valid = {}) const {
    for (const auto& l : layers_) x = l(x, key_valid);
    return final_(x);
  }

  int depth() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<EncoderLayer> layers_;
  LayerNorm final_;
};

}  // namespace skelmae::nn
