#pragma once

// Template members of Parameters<T>; included from model.hpp.

#include <string>

namespace vbd::policy {

template <typename T>
template <typename F>
void Parameters<T>::visit(F&& f) {
  f(std::string("tok_emb"), tok_emb);
  f(std::string("patch_w"), patch_w);
  f(std::string("patch_b"), patch_b);
  f(std::string("slot_emb"), slot_emb);
  f(std::string("pos_emb"), pos_emb);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    auto& b = blocks[i];
    f(p + "ln1_g", b.ln1_g);
    f(p + "ln1_b", b.ln1_b);
    f(p + "w_qkv", b.w_qkv);
    f(p + "b_qkv", b.b_qkv);
    f(p + "w_o", b.w_o);
    f(p + "b_o", b.b_o);
    f(p + "ln2_g", b.ln2_g);
    f(p + "ln2_b", b.ln2_b);
    f(p + "w_ff1", b.w_ff1);
    f(p + "b_ff1", b.b_ff1);
    f(p + "w_ff2", b.w_ff2);
    f(p + "b_ff2", b.b_ff2);
  }
  f(std::string("lnf_g"), lnf_g);
  f(std::string("lnf_b"), lnf_b);
  f(std::string("w_out"), w_out);
  f(std::string("b_out"), b_out);
}

template <typename T>
template <typename F>
void Parameters<T>::visit(F&& f) const {
  const_cast<Parameters<T>*>(this)->visit(
      [&](const std::string& name, Mat<T>& m) { f(name, static_cast<const Mat<T>&>(m)); });
}

template <typename T>
template <typename U>
Parameters<U> Parameters<T>::cast() const {
  auto out = Parameters<U>::zeros(arch);
  std::vector<const Mat<T>*> src;
  visit([&](const std::string&, const Mat<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Mat<U>& m) { m = src[i++]->template cast<U>(); });
  return out;
}

}  // namespace vbd::policy
