#include "longtail/model.hpp"

#include <algorithm>
#include <cmath>

#include "longtail/errors.hpp"
#include "longtail/numeric.hpp"
#include "longtail/rng.hpp"

namespace longtail {

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::avg_pool: return "avg-pool";
    case Arch::recurrent: return "recurrent";
    case Arch::target_attention: return "target-attention";
  }
  return "?";
}

Arch arch_from_name(const std::string& name) {
  if (name == "avg-pool") return Arch::avg_pool;
  if (name == "recurrent") return Arch::recurrent;
  if (name == "target-attention") return Arch::target_attention;
  throw ArgumentError("unknown arch: " + name);
}

ParamTensor& TrunkParams::tensor(const std::string& name) {
  for (auto& p : params)
    if (p.name == name) return p;
  throw ArgumentError("no parameter named " + name);
}

const ParamTensor& TrunkParams::tensor(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw ArgumentError("no parameter named " + name);
}

bool TrunkParams::has(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return true;
  return false;
}

std::vector<ParamTensor*> TrunkParams::all_tensors() {
  std::vector<ParamTensor*> out;
  out.reserve(params.size());
  for (auto& p : params) out.push_back(&p);
  return out;
}

std::vector<ParamTensor*> TrunkParams::section_tensors(Section s) {
  std::vector<ParamTensor*> out;
  for (auto& p : params)
    if (p.section == s) out.push_back(&p);
  return out;
}

std::vector<const ParamTensor*> TrunkParams::section_tensors(Section s) const {
  std::vector<const ParamTensor*> out;
  for (const auto& p : params)
    if (p.section == s) out.push_back(&p);
  return out;
}

GradMap TrunkParams::zero_grads() const {
  GradMap g;
  for (const auto& p : params) g.emplace(p.name, DenseArray::zeros(p.data.shape));
  return g;
}

namespace {

void init_uniform(DenseArray& a, Rng& rng, double lo, double hi) {
  for (double& v : a.values) v = rng.uniform(lo, hi);
}

void push_weight(TrunkParams& t, std::string name, std::vector<std::size_t> shape,
                 Section sec, Rng& rng) {
  ParamTensor p{std::move(name), DenseArray::zeros(std::move(shape)), sec};
  init_uniform(p.data, rng, -0.1, 0.1);
  t.params.push_back(std::move(p));
}

void push_bias(TrunkParams& t, std::string name, std::size_t n, Section sec) {
  t.params.push_back(ParamTensor{std::move(name), DenseArray::zeros({n}), sec});
}

}  // namespace

TrunkParams build_model(Arch arch, std::size_t num_users, std::size_t num_items,
                        ModelDims dims, std::uint64_t seed) {
  if (num_users == 0 || num_items == 0)
    throw ArgumentError("build_model: vocabulary sizes must be positive");
  if (dims.embedding_dim == 0 || dims.hidden_dim == 0 || dims.max_seq_len == 0)
    throw ArgumentError("build_model: dims must be positive");
  if (arch == Arch::target_attention && dims.attention_dim == 0)
    throw ArgumentError("build_model: attention_dim must be positive");
  dims.num_users = num_users;
  dims.num_items = num_items;

  TrunkParams t;
  t.arch = arch;
  t.dims = dims;
  Rng rng(seed);

  const std::size_t d = dims.embedding_dim;
  const std::size_t h = dims.hidden_dim;

  push_weight(t, "emb.user", {num_users, d}, Section::embedding, rng);
  push_weight(t, "emb.item", {num_items, d}, Section::embedding, rng);

  if (arch == Arch::recurrent) {
    for (const char* gate : {"z", "r", "c"}) {
      const std::string g(gate);
      push_weight(t, "ext.gru.w" + g, {h, d}, Section::extractor, rng);
      push_weight(t, "ext.gru.u" + g, {h, h}, Section::extractor, rng);
      push_bias(t, "ext.gru.b" + g, h, Section::extractor);
    }
  } else if (arch == Arch::target_attention) {
    const std::size_t a = dims.attention_dim;
    push_weight(t, "ext.att.w1", {a, 3 * d}, Section::extractor, rng);
    push_bias(t, "ext.att.b1", a, Section::extractor);
    push_weight(t, "ext.att.w2", {a}, Section::extractor, rng);
    push_bias(t, "ext.att.b2", 1, Section::extractor);
  }

  std::size_t in = dims.concat_dim(arch);
  for (std::size_t k = 0; k < dims.extractor_layers; ++k) {
    const std::string base = "ext.fc" + std::to_string(k);
    push_weight(t, base + ".w", {h, in}, Section::extractor, rng);
    push_bias(t, base + ".b", h, Section::extractor);
    in = h;
  }

  push_weight(t, "cls.w", {dims.classifier_in(arch)}, Section::classifier, rng);
  push_bias(t, "cls.b", 1, Section::classifier);
  return t;
}

namespace {

// y = W x (W is [r, c], x has c entries, y has r entries)
void matvec(const DenseArray& w, const double* x, double* y) {
  const std::size_t r = w.rows(), c = w.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    const double* row = w.values.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

// dx += W^T dy
void matvec_t_acc(const DenseArray& w, const double* dy, double* dx) {
  const std::size_t r = w.rows(), c = w.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = w.values.data() + i * c;
    const double g = dy[i];
    for (std::size_t j = 0; j < c; ++j) dx[j] += row[j] * g;
  }
}

// dW += dy (outer) x
void outer_acc(DenseArray& dw, const double* dy, const double* x) {
  const std::size_t r = dw.rows(), c = dw.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = dw.values.data() + i * c;
    const double g = dy[i];
    for (std::size_t j = 0; j < c; ++j) row[j] += g * x[j];
  }
}

void check_batch(const TrunkParams& trunk, const Batch& batch, bool need_labels) {
  const auto& dims = trunk.dims;
  const std::size_t n = batch.users.size();
  if (batch.items.size() != n || batch.sequences.size() != n)
    throw ArgumentError("batch: parallel lists have unequal lengths");
  if (need_labels || !batch.labels.empty()) {
    if (batch.labels.size() != n) throw ArgumentError("batch: labels length mismatch");
    for (double y : batch.labels)
      if (y != 0.0 && y != 1.0) throw ArgumentError("batch: labels must be 0 or 1");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.users[i] < 0 || static_cast<std::size_t>(batch.users[i]) >= dims.num_users)
      throw ArgumentError("batch: user id out of vocabulary");
    if (batch.items[i] < 0 || static_cast<std::size_t>(batch.items[i]) >= dims.num_items)
      throw ArgumentError("batch: item id out of vocabulary");
    if (batch.sequences[i].size() > dims.max_seq_len)
      throw ArgumentError("batch: sequence longer than max_seq_len");
    for (std::int64_t s : batch.sequences[i]) {
      if (s >= 0 && static_cast<std::size_t>(s) >= dims.num_items)
        throw ArgumentError("batch: sequence item id out of vocabulary");
    }
  }
}

// Everything one sample needs on the way forward, kept so the backward pass
// can run right after.
struct SampleTrace {
  std::vector<std::int64_t> hist;  // real (unmasked) history item ids, in order

  std::vector<double> user_raw, item_raw;        // embedding rows
  std::vector<std::vector<double>> hist_raw;     // per real position
  std::vector<double> user_e, item_e;            // after adapter a
  std::vector<std::vector<double>> hist_e;

  // recurrent
  std::vector<std::vector<double>> gru_h;        // h_0..h_T
  std::vector<std::vector<double>> gru_z, gru_r, gru_c;

  // target attention
  std::vector<std::vector<double>> att_a1;       // tanh hidden per position
  std::vector<double> att_alpha;

  std::vector<double> pooled;
  std::vector<double> concat;
  std::vector<std::vector<double>> fc_out;       // post-tanh per layer
  std::vector<double> ext_out;                   // extractor output (= concat if 0 layers)
  std::vector<double> cls_in;                    // after adapter b
  double logit = 0.0;
  double score = 0.0;
};

struct AdapterGrads {
  DenseArray a_w, a_b, b_w, b_b;
  bool active_a = false, active_b = false;
};

void apply_adapter(const DenseArray* w, const DenseArray* b, const std::vector<double>& in,
                   std::vector<double>& out) {
  out = in;
  if (w == nullptr) return;
  std::vector<double> lin(w->rows(), 0.0);
  matvec(*w, in.data(), lin.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += lin[i] + (b ? b->values[i] : 0.0);
}

// din = dout + W^T dout; accumulates adapter grads.
void adapter_backward(const DenseArray* w, const std::vector<double>& in,
                      const std::vector<double>& dout, std::vector<double>& din,
                      DenseArray* dw, DenseArray* db) {
  din = dout;
  if (w == nullptr) return;
  matvec_t_acc(*w, dout.data(), din.data());
  outer_acc(*dw, dout.data(), in.data());
  for (std::size_t i = 0; i < dout.size(); ++i) db->values[i] += dout[i];
}

void forward_sample(const TrunkParams& trunk, const AdapterStack& ad, std::int64_t user,
                    std::int64_t item, const std::vector<std::int64_t>& seq,
                    SampleTrace& tr) {
  const auto& dims = trunk.dims;
  const std::size_t d = dims.embedding_dim;
  const Arch arch = trunk.arch;

  const DenseArray& ue = trunk.tensor("emb.user").data;
  const DenseArray& ie = trunk.tensor("emb.item").data;

  tr.hist.clear();
  for (std::int64_t s : seq)
    if (s >= 0) tr.hist.push_back(s);

  tr.user_raw.assign(ue.values.begin() + user * d, ue.values.begin() + (user + 1) * d);
  tr.item_raw.assign(ie.values.begin() + item * d, ie.values.begin() + (item + 1) * d);
  tr.hist_raw.resize(tr.hist.size());
  for (std::size_t t = 0; t < tr.hist.size(); ++t)
    tr.hist_raw[t].assign(ie.values.begin() + tr.hist[t] * d,
                          ie.values.begin() + (tr.hist[t] + 1) * d);

  apply_adapter(ad.a_w, ad.a_b, tr.user_raw, tr.user_e);
  apply_adapter(ad.a_w, ad.a_b, tr.item_raw, tr.item_e);
  tr.hist_e.resize(tr.hist.size());
  for (std::size_t t = 0; t < tr.hist.size(); ++t)
    apply_adapter(ad.a_w, ad.a_b, tr.hist_raw[t], tr.hist_e[t]);

  const std::size_t T = tr.hist.size();
  tr.pooled.assign(dims.pooled_dim(arch), 0.0);

  if (arch == Arch::avg_pool) {
    if (T > 0) {
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < d; ++k) tr.pooled[k] += tr.hist_e[t][k];
      for (double& v : tr.pooled) v /= static_cast<double>(T);
    }
  } else if (arch == Arch::recurrent) {
    const std::size_t h = dims.hidden_dim;
    const DenseArray& wz = trunk.tensor("ext.gru.wz").data;
    const DenseArray& uz = trunk.tensor("ext.gru.uz").data;
    const DenseArray& bz = trunk.tensor("ext.gru.bz").data;
    const DenseArray& wr = trunk.tensor("ext.gru.wr").data;
    const DenseArray& ur = trunk.tensor("ext.gru.ur").data;
    const DenseArray& br = trunk.tensor("ext.gru.br").data;
    const DenseArray& wc = trunk.tensor("ext.gru.wc").data;
    const DenseArray& uc = trunk.tensor("ext.gru.uc").data;
    const DenseArray& bc = trunk.tensor("ext.gru.bc").data;

    tr.gru_h.assign(T + 1, std::vector<double>(h, 0.0));
    tr.gru_z.assign(T, std::vector<double>(h, 0.0));
    tr.gru_r.assign(T, std::vector<double>(h, 0.0));
    tr.gru_c.assign(T, std::vector<double>(h, 0.0));

    std::vector<double> tmp1(h), tmp2(h), rh(h);
    for (std::size_t t = 0; t < T; ++t) {
      const double* x = tr.hist_e[t].data();
      const std::vector<double>& hp = tr.gru_h[t];
      matvec(wz, x, tmp1.data());
      matvec(uz, hp.data(), tmp2.data());
      for (std::size_t k = 0; k < h; ++k)
        tr.gru_z[t][k] = sigmoid(tmp1[k] + tmp2[k] + bz.values[k]);
      matvec(wr, x, tmp1.data());
      matvec(ur, hp.data(), tmp2.data());
      for (std::size_t k = 0; k < h; ++k)
        tr.gru_r[t][k] = sigmoid(tmp1[k] + tmp2[k] + br.values[k]);
      for (std::size_t k = 0; k < h; ++k) rh[k] = tr.gru_r[t][k] * hp[k];
      matvec(wc, x, tmp1.data());
      matvec(uc, rh.data(), tmp2.data());
      for (std::size_t k = 0; k < h; ++k)
        tr.gru_c[t][k] = std::tanh(tmp1[k] + tmp2[k] + bc.values[k]);
      for (std::size_t k = 0; k < h; ++k)
        tr.gru_h[t + 1][k] = (1.0 - tr.gru_z[t][k]) * hp[k] + tr.gru_z[t][k] * tr.gru_c[t][k];
    }
    tr.pooled = tr.gru_h[T];
  } else {  // target attention
    const std::size_t a = dims.attention_dim;
    const DenseArray& w1 = trunk.tensor("ext.att.w1").data;
    const DenseArray& b1 = trunk.tensor("ext.att.b1").data;
    const DenseArray& w2 = trunk.tensor("ext.att.w2").data;
    const DenseArray& b2 = trunk.tensor("ext.att.b2").data;

    tr.att_a1.assign(T, std::vector<double>(a, 0.0));
    tr.att_alpha.assign(T, 0.0);
    if (T > 0) {
      std::vector<double> u(3 * d), z1(a), scores(T);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < d; ++k) {
          u[k] = tr.hist_e[t][k];
          u[d + k] = tr.item_e[k];
          u[2 * d + k] = tr.hist_e[t][k] * tr.item_e[k];
        }
        matvec(w1, u.data(), z1.data());
        double s = b2.values[0];
        for (std::size_t k = 0; k < a; ++k) {
          tr.att_a1[t][k] = std::tanh(z1[k] + b1.values[k]);
          s += w2.values[k] * tr.att_a1[t][k];
        }
        scores[t] = s;
      }
      const double mx = *std::max_element(scores.begin(), scores.end());
      double denom = 0.0;
      for (std::size_t t = 0; t < T; ++t) denom += std::exp(scores[t] - mx);
      for (std::size_t t = 0; t < T; ++t) tr.att_alpha[t] = std::exp(scores[t] - mx) / denom;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < d; ++k) tr.pooled[k] += tr.att_alpha[t] * tr.hist_e[t][k];
    }
  }

  tr.concat.resize(dims.concat_dim(arch));
  std::copy(tr.user_e.begin(), tr.user_e.end(), tr.concat.begin());
  std::copy(tr.item_e.begin(), tr.item_e.end(), tr.concat.begin() + d);
  std::copy(tr.pooled.begin(), tr.pooled.end(), tr.concat.begin() + 2 * d);

  tr.fc_out.resize(dims.extractor_layers);
  const std::vector<double>* cur = &tr.concat;
  for (std::size_t k = 0; k < dims.extractor_layers; ++k) {
    const std::string base = "ext.fc" + std::to_string(k);
    const DenseArray& w = trunk.tensor(base + ".w").data;
    const DenseArray& b = trunk.tensor(base + ".b").data;
    tr.fc_out[k].assign(dims.hidden_dim, 0.0);
    matvec(w, cur->data(), tr.fc_out[k].data());
    for (std::size_t j = 0; j < dims.hidden_dim; ++j)
      tr.fc_out[k][j] = std::tanh(tr.fc_out[k][j] + b.values[j]);
    cur = &tr.fc_out[k];
  }
  tr.ext_out = *cur;

  apply_adapter(ad.b_w, ad.b_b, tr.ext_out, tr.cls_in);

  const DenseArray& cw = trunk.tensor("cls.w").data;
  const DenseArray& cb = trunk.tensor("cls.b").data;
  double logit = cb.values[0];
  for (std::size_t j = 0; j < tr.cls_in.size(); ++j) logit += cw.values[j] * tr.cls_in[j];
  tr.logit = logit;
  tr.score = sigmoid(logit);
}

// Backward for one sample given d(loss)/d(logit); accumulates into grads /
// adapter grads.
void backward_sample(const TrunkParams& trunk, const AdapterStack& ad, std::int64_t user,
                     std::int64_t item, const SampleTrace& tr, double dlogit,
                     GradMap& grads, AdapterGrads& ag) {
  const auto& dims = trunk.dims;
  const std::size_t d = dims.embedding_dim;
  const Arch arch = trunk.arch;
  const std::size_t T = tr.hist.size();

  // classifier
  const DenseArray& cw = trunk.tensor("cls.w").data;
  DenseArray& g_cw = grads.at("cls.w");
  DenseArray& g_cb = grads.at("cls.b");
  std::vector<double> d_cls_in(tr.cls_in.size(), 0.0);
  for (std::size_t j = 0; j < tr.cls_in.size(); ++j) {
    g_cw.values[j] += dlogit * tr.cls_in[j];
    d_cls_in[j] = dlogit * cw.values[j];
  }
  g_cb.values[0] += dlogit;

  // adapter b
  std::vector<double> d_ext(tr.ext_out.size(), 0.0);
  adapter_backward(ad.b_w, tr.ext_out, d_cls_in, d_ext, ag.active_b ? &ag.b_w : nullptr,
                   ag.active_b ? &ag.b_b : nullptr);

  // extractor MLP, reverse order
  std::vector<double> dz, dcur = std::move(d_ext);
  for (std::size_t kk = dims.extractor_layers; kk-- > 0;) {
    const std::string base = "ext.fc" + std::to_string(kk);
    const DenseArray& w = trunk.tensor(base + ".w").data;
    DenseArray& gw = grads.at(base + ".w");
    DenseArray& gb = grads.at(base + ".b");
    const std::vector<double>& out = tr.fc_out[kk];
    const std::vector<double>& in = (kk == 0) ? tr.concat : tr.fc_out[kk - 1];
    dz.assign(out.size(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j)
      dz[j] = dcur[j] * (1.0 - out[j] * out[j]);
    outer_acc(gw, dz.data(), in.data());
    for (std::size_t j = 0; j < dz.size(); ++j) gb.values[j] += dz[j];
    dcur.assign(in.size(), 0.0);
    matvec_t_acc(w, dz.data(), dcur.data());
  }
  // dcur is now d(concat)
  std::vector<double> d_user_e(dcur.begin(), dcur.begin() + d);
  std::vector<double> d_item_e(dcur.begin() + d, dcur.begin() + 2 * d);
  std::vector<double> d_pooled(dcur.begin() + 2 * d, dcur.end());
  std::vector<std::vector<double>> d_hist_e(T, std::vector<double>(d, 0.0));

  if (arch == Arch::avg_pool) {
    if (T > 0) {
      const double inv = 1.0 / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < d; ++k) d_hist_e[t][k] += d_pooled[k] * inv;
    }
  } else if (arch == Arch::recurrent) {
    const std::size_t h = dims.hidden_dim;
    const DenseArray& wz = trunk.tensor("ext.gru.wz").data;
    const DenseArray& uz = trunk.tensor("ext.gru.uz").data;
    const DenseArray& wr = trunk.tensor("ext.gru.wr").data;
    const DenseArray& ur = trunk.tensor("ext.gru.ur").data;
    const DenseArray& wc = trunk.tensor("ext.gru.wc").data;
    const DenseArray& uc = trunk.tensor("ext.gru.uc").data;
    DenseArray& g_wz = grads.at("ext.gru.wz");
    DenseArray& g_uz = grads.at("ext.gru.uz");
    DenseArray& g_bz = grads.at("ext.gru.bz");
    DenseArray& g_wr = grads.at("ext.gru.wr");
    DenseArray& g_ur = grads.at("ext.gru.ur");
    DenseArray& g_br = grads.at("ext.gru.br");
    DenseArray& g_wc = grads.at("ext.gru.wc");
    DenseArray& g_uc = grads.at("ext.gru.uc");
    DenseArray& g_bc = grads.at("ext.gru.bc");

    std::vector<double> dh = d_pooled;  // grad wrt h_T
    std::vector<double> dz_pre(h), dr_pre(h), dc_pre(h), drh(h), rh(h), dh_prev(h);
    for (std::size_t t = T; t-- > 0;) {
      const std::vector<double>& hp = tr.gru_h[t];
      const std::vector<double>& z = tr.gru_z[t];
      const std::vector<double>& r = tr.gru_r[t];
      const std::vector<double>& c = tr.gru_c[t];
      const double* x = tr.hist_e[t].data();

      for (std::size_t k = 0; k < h; ++k) {
        const double dzk = dh[k] * (c[k] - hp[k]);
        const double dck = dh[k] * z[k];
        dh_prev[k] = dh[k] * (1.0 - z[k]);
        dc_pre[k] = dck * (1.0 - c[k] * c[k]);
        dz_pre[k] = dzk * z[k] * (1.0 - z[k]);
        rh[k] = r[k] * hp[k];
      }
      outer_acc(g_wc, dc_pre.data(), x);
      outer_acc(g_uc, dc_pre.data(), rh.data());
      for (std::size_t k = 0; k < h; ++k) g_bc.values[k] += dc_pre[k];
      matvec_t_acc(wc, dc_pre.data(), d_hist_e[t].data());
      drh.assign(h, 0.0);
      matvec_t_acc(uc, dc_pre.data(), drh.data());
      for (std::size_t k = 0; k < h; ++k) {
        const double drk = drh[k] * hp[k];
        dh_prev[k] += drh[k] * r[k];
        dr_pre[k] = drk * r[k] * (1.0 - r[k]);
      }
      outer_acc(g_wz, dz_pre.data(), x);
      outer_acc(g_uz, dz_pre.data(), hp.data());
      for (std::size_t k = 0; k < h; ++k) g_bz.values[k] += dz_pre[k];
      matvec_t_acc(wz, dz_pre.data(), d_hist_e[t].data());
      matvec_t_acc(uz, dz_pre.data(), dh_prev.data());

      outer_acc(g_wr, dr_pre.data(), x);
      outer_acc(g_ur, dr_pre.data(), hp.data());
      for (std::size_t k = 0; k < h; ++k) g_br.values[k] += dr_pre[k];
      matvec_t_acc(wr, dr_pre.data(), d_hist_e[t].data());
      matvec_t_acc(ur, dr_pre.data(), dh_prev.data());

      dh = dh_prev;
    }
  } else {  // target attention
    if (T > 0) {
      const std::size_t a = dims.attention_dim;
      const DenseArray& w1 = trunk.tensor("ext.att.w1").data;
      const DenseArray& w2 = trunk.tensor("ext.att.w2").data;
      DenseArray& g_w1 = grads.at("ext.att.w1");
      DenseArray& g_b1 = grads.at("ext.att.b1");
      DenseArray& g_w2 = grads.at("ext.att.w2");
      DenseArray& g_b2 = grads.at("ext.att.b2");

      std::vector<double> dalpha(T, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < d; ++k) {
          dalpha[t] += d_pooled[k] * tr.hist_e[t][k];
          d_hist_e[t][k] += tr.att_alpha[t] * d_pooled[k];
        }
      }
      double mix = 0.0;
      for (std::size_t t = 0; t < T; ++t) mix += tr.att_alpha[t] * dalpha[t];

      std::vector<double> u(3 * d), dz1(a), du(3 * d);
      for (std::size_t t = 0; t < T; ++t) {
        const double ds = tr.att_alpha[t] * (dalpha[t] - mix);
        for (std::size_t k = 0; k < d; ++k) {
          u[k] = tr.hist_e[t][k];
          u[d + k] = tr.item_e[k];
          u[2 * d + k] = tr.hist_e[t][k] * tr.item_e[k];
        }
        for (std::size_t k = 0; k < a; ++k) {
          const double a1 = tr.att_a1[t][k];
          g_w2.values[k] += ds * a1;
          dz1[k] = ds * w2.values[k] * (1.0 - a1 * a1);
          g_b1.values[k] += dz1[k];
        }
        g_b2.values[0] += ds;
        outer_acc(g_w1, dz1.data(), u.data());
        du.assign(3 * d, 0.0);
        matvec_t_acc(w1, dz1.data(), du.data());
        for (std::size_t k = 0; k < d; ++k) {
          d_hist_e[t][k] += du[k] + du[2 * d + k] * tr.item_e[k];
          d_item_e[k] += du[d + k] + du[2 * d + k] * tr.hist_e[t][k];
        }
      }
    }
  }

  // adapter a, then scatter into the embedding tables
  DenseArray& g_ue = grads.at("emb.user");
  DenseArray& g_ie = grads.at("emb.item");
  std::vector<double> d_raw;

  adapter_backward(ad.a_w, tr.user_raw, d_user_e, d_raw, ag.active_a ? &ag.a_w : nullptr,
                   ag.active_a ? &ag.a_b : nullptr);
  for (std::size_t k = 0; k < d; ++k) g_ue.values[user * d + k] += d_raw[k];

  adapter_backward(ad.a_w, tr.item_raw, d_item_e, d_raw, ag.active_a ? &ag.a_w : nullptr,
                   ag.active_a ? &ag.a_b : nullptr);
  for (std::size_t k = 0; k < d; ++k) g_ie.values[item * d + k] += d_raw[k];

  for (std::size_t t = 0; t < T; ++t) {
    adapter_backward(ad.a_w, tr.hist_raw[t], d_hist_e[t], d_raw,
                     ag.active_a ? &ag.a_w : nullptr, ag.active_a ? &ag.a_b : nullptr);
    for (std::size_t k = 0; k < d; ++k) g_ie.values[tr.hist[t] * d + k] += d_raw[k];
  }
}

}  // namespace

std::vector<double> predict_with_adapters(const TrunkParams& trunk, const Batch& batch,
                                          const AdapterStack& adapters) {
  check_batch(trunk, batch, /*need_labels=*/false);
  std::vector<double> scores(batch.size());
  SampleTrace tr;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_sample(trunk, adapters, batch.users[i], batch.items[i], batch.sequences[i], tr);
    scores[i] = tr.score;
  }
  return scores;
}

std::vector<double> predict(const TrunkParams& trunk, const Batch& batch) {
  return predict_with_adapters(trunk, batch, AdapterStack{});
}

AdapterBackwardResult backward_with_adapters(const TrunkParams& trunk, const Batch& batch,
                                             const AdapterStack& adapters) {
  check_batch(trunk, batch, /*need_labels=*/true);
  if (batch.size() == 0) throw ArgumentError("backward: empty batch");

  AdapterBackwardResult res;
  res.trunk_grads = trunk.zero_grads();
  AdapterGrads ag;
  if (adapters.a_w != nullptr) {
    ag.active_a = true;
    ag.a_w = DenseArray::zeros(adapters.a_w->shape);
    ag.a_b = DenseArray::zeros(adapters.a_b->shape);
  }
  if (adapters.b_w != nullptr) {
    ag.active_b = true;
    ag.b_w = DenseArray::zeros(adapters.b_w->shape);
    ag.b_b = DenseArray::zeros(adapters.b_b->shape);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> scores(batch.size());
  SampleTrace tr;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_sample(trunk, adapters, batch.users[i], batch.items[i], batch.sequences[i], tr);
    scores[i] = tr.score;
    // d(mean BCE)/d(logit) through the sigmoid collapses to (score - y) / n.
    const double dlogit = (tr.score - batch.labels[i]) * inv_n;
    backward_sample(trunk, adapters, batch.users[i], batch.items[i], tr, dlogit,
                    res.trunk_grads, ag);
  }
  res.loss = bce_loss(scores, batch.labels);

  if (ag.active_a) {
    res.adapter_grads.emplace("plg.a.w", std::move(ag.a_w));
    res.adapter_grads.emplace("plg.a.b", std::move(ag.a_b));
  }
  if (ag.active_b) {
    res.adapter_grads.emplace("plg.b.w", std::move(ag.b_w));
    res.adapter_grads.emplace("plg.b.b", std::move(ag.b_b));
  }
  return res;
}

BackwardResult backward(const TrunkParams& trunk, const Batch& batch) {
  AdapterBackwardResult r = backward_with_adapters(trunk, batch, AdapterStack{});
  return BackwardResult{r.loss, std::move(r.trunk_grads)};
}

}  // namespace longtail
