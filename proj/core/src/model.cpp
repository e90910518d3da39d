#include "videdit/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace videdit {

using ag::Graph;
using ag::Var;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

CMapM m2(const Tensor& t) { return CMapM(t.data(), t.dim(0), t.dim(1)); }
MapM m2(Tensor& t) { return MapM(t.data(), t.dim(0), t.dim(1)); }

Tensor copy_rows(const Tensor& src, int row0, int n) {
    int cols = src.dim(1);
    Tensor out({n, cols});
    std::copy_n(src.data() + static_cast<int64_t>(row0) * cols, static_cast<int64_t>(n) * cols, out.data());
    return out;
}

Tensor vstack(const Tensor& a, const Tensor& b) {
    require(a.dim(1) == b.dim(1), "vstack: column mismatch");
    Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
    std::copy_n(a.data(), a.numel(), out.data());
    std::copy_n(b.data(), b.numel(), out.data() + a.numel());
    return out;
}

void add_rows(Tensor& dst, int row0, const Tensor& src) {
    int cols = dst.dim(1);
    double* d = dst.data() + static_cast<int64_t>(row0) * cols;
    for (int64_t i = 0; i < src.numel(); ++i) d[i] += src[i];
}

}  // namespace

uint64_t ModelConfig::hash() const {
    int fields[] = {in_channels, height,   width,      base_channels, mid_channels, heads,
                    text_dim,    max_tokens, time_dim, norm_groups,   ff_mult,      vocab_size};
    return fnv1a(fields, sizeof(fields));
}

// ---- ParamStore ----

void ParamStore::add(const std::string& name, Tensor t) {
    require(!params_.count(name), "ParamStore: duplicate parameter " + name);
    names_.push_back(name);
    params_.emplace(name, std::move(t));
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    require(it != params_.end(), "ParamStore: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), "ParamStore: unknown parameter " + name);
    return it->second;
}

bool ParamStore::has(const std::string& name) const { return params_.count(name) > 0; }

int64_t ParamStore::total_params() const {
    int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
}

uint64_t ParamStore::content_hash() const {
    return content_hash([](const std::string&) { return true; });
}

uint64_t ParamStore::content_hash(const std::function<bool(const std::string&)>& pred) const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& name : names_) {
        if (!pred(name)) continue;
        h = fnv1a(name.data(), name.size(), h);
        const Tensor& t = params_.at(name);
        h = fnv1a(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
    }
    return h;
}

// ---- ParamBinder ----

ParamBinder::ParamBinder(Graph& g, const ParamStore& store, std::function<bool(const std::string&)> trainable)
    : g_(g), store_(store), trainable_(std::move(trainable)) {}

Var ParamBinder::operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    bool req = trainable_ && trainable_(name);
    Var v = g_.leaf(store_.get(name), req);
    cache_.emplace(name, v);
    if (req) trainable_vars_.emplace_back(name, v);
    return v;
}

// ---- weight initialization ----

bool is_temporal_param(const std::string& name) { return name.find(".ta.") != std::string::npos; }

bool is_attention_param(const std::string& name) {
    return name.find(".sa.") != std::string::npos || name.find(".ca.") != std::string::npos ||
           is_temporal_param(name);
}

namespace {

void add_normal(ParamStore& s, Rng& rng, const std::string& name, std::vector<int> shape, double std) {
    Tensor t = rng.normal_tensor(std::move(shape));
    t *= std;
    s.add(name, std::move(t));
}

void add_conv(ParamStore& s, Rng& rng, const std::string& prefix, int co, int ci, int k) {
    add_normal(s, rng, prefix + ".w", {co, ci, k, k}, std::sqrt(2.0 / (ci * k * k)));
    s.add(prefix + ".b", Tensor({co}));
}

void add_linear(ParamStore& s, Rng& rng, const std::string& prefix, int din, int dout) {
    add_normal(s, rng, prefix + ".w", {din, dout}, 1.0 / std::sqrt(static_cast<double>(din)));
    s.add(prefix + ".b", Tensor({dout}));
}

void add_norm(ParamStore& s, const std::string& prefix, int c) {
    s.add(prefix + ".g", Tensor::full({c}, 1.0));
    s.add(prefix + ".b", Tensor({c}));
}

void add_res_block(ParamStore& s, Rng& rng, const std::string& p, int cin, int cout, int time_dim) {
    add_norm(s, p + ".norm1", cin);
    add_conv(s, rng, p + ".conv1", cout, cin, 3);
    add_linear(s, rng, p + ".tproj", time_dim, cout);
    add_norm(s, p + ".norm2", cout);
    add_conv(s, rng, p + ".conv2", cout, cout, 3);
    if (cin != cout) add_conv(s, rng, p + ".skip", cout, cin, 1);
}

void add_attention(ParamStore& s, Rng& rng, const std::string& p, int c, int kv_dim) {
    double sq = 1.0 / std::sqrt(static_cast<double>(c));
    double sk = 1.0 / std::sqrt(static_cast<double>(kv_dim));
    add_norm(s, p + ".norm", c);
    add_normal(s, rng, p + ".wq", {c, c}, sq);
    add_normal(s, rng, p + ".wk", {kv_dim, c}, sk);
    add_normal(s, rng, p + ".wv", {kv_dim, c}, sk);
    add_normal(s, rng, p + ".wo", {c, c}, sq);
    s.add(p + ".bo", Tensor({c}));
}

void add_attn_site_2d(ParamStore& s, Rng& rng, const std::string& site, const ModelConfig& cfg) {
    int c = cfg.mid_channels;
    add_attention(s, rng, site + ".sa", c, c);
    add_attention(s, rng, site + ".ca", c, cfg.text_dim);
    add_norm(s, site + ".ff.norm", c);
    add_linear(s, rng, site + ".ff.fc1", c, cfg.ff_mult * c);
    add_linear(s, rng, site + ".ff.fc2", cfg.ff_mult * c, c);
}

}  // namespace

ParamStore init_weights_2d(const ModelConfig& cfg, const Vocabulary& vocab, uint64_t seed) {
    require(cfg.mid_channels % cfg.heads == 0, "init_weights_2d: mid_channels must divide by heads");
    require(cfg.base_channels % cfg.norm_groups == 0 && cfg.mid_channels % cfg.norm_groups == 0,
            "init_weights_2d: channels must divide by norm_groups");
    require(cfg.height % 2 == 0 && cfg.width % 2 == 0, "init_weights_2d: spatial dims must be even");

    ModelConfig c = cfg;
    c.vocab_size = vocab.size();
    Rng rng(Rng::derive(seed, string_hash("init2d")));
    ParamStore s;
    add_normal(s, rng, "text.tok_emb", {c.vocab_size, c.text_dim}, 0.2);
    add_linear(s, rng, "time.fc1", c.time_dim, c.time_dim);
    add_linear(s, rng, "time.fc2", c.time_dim, c.time_dim);
    add_conv(s, rng, "conv_in", c.base_channels, c.in_channels, 3);
    add_res_block(s, rng, "down0.res", c.base_channels, c.base_channels, c.time_dim);
    add_conv(s, rng, "down0.down", c.mid_channels, c.base_channels, 3);
    add_res_block(s, rng, "down1.res", c.mid_channels, c.mid_channels, c.time_dim);
    add_attn_site_2d(s, rng, "down1", c);
    add_res_block(s, rng, "mid.res1", c.mid_channels, c.mid_channels, c.time_dim);
    add_attn_site_2d(s, rng, "mid", c);
    add_res_block(s, rng, "mid.res2", c.mid_channels, c.mid_channels, c.time_dim);
    add_res_block(s, rng, "up1.res", 2 * c.mid_channels, c.mid_channels, c.time_dim);
    add_attn_site_2d(s, rng, "up1", c);
    add_conv(s, rng, "up1.up", c.base_channels, c.mid_channels, 3);
    add_res_block(s, rng, "up0.res", 2 * c.base_channels, c.base_channels, c.time_dim);
    add_norm(s, "out.norm", c.base_channels);
    s.add("out.conv.w", Tensor({c.in_channels, c.base_channels, 3, 3}));  // zero-init output head
    s.add("out.conv.b", Tensor({c.in_channels}));
    return s;
}

ParamStore inflate(const ParamStore& weights2d, const ModelConfig& cfg) {
    ParamStore s;
    for (const auto& name : weights2d.names()) s.add(name, weights2d.get(name));
    // Temporal attention appended per site; the output projection starts at
    // zero so each frame initially passes through the 2D computation.
    Rng rng(Rng::derive(cfg.hash(), string_hash("inflate.ta")));
    int c = cfg.mid_channels;
    double sq = 1.0 / std::sqrt(static_cast<double>(c));
    for (const std::string& site : {"down1", "mid", "up1"}) {
        add_norm(s, site + std::string(".ta.norm"), c);
        add_normal(s, rng, site + std::string(".ta.wq"), {c, c}, sq);
        add_normal(s, rng, site + std::string(".ta.wk"), {c, c}, sq);
        add_normal(s, rng, site + std::string(".ta.wv"), {c, c}, sq);
        s.add(site + std::string(".ta.wo"), Tensor({c, c}));
        s.add(site + std::string(".ta.bo"), Tensor({c}));
    }
    return s;
}

// ---- attention graph ops ----

namespace {

struct AttnCache {
    std::vector<Tensor> q, k, v, o;  // per outer
    std::shared_ptr<SiteMaps> site;
};

// Q/K/V and softmax maps for one outer element.
void attn_maps_one(const Tensor& q_src, const Tensor& kv_src, const Tensor& wq, const Tensor& wk,
                   const Tensor& wv, int heads, Tensor& q, Tensor& k, Tensor& v, Tensor* maps) {
    ag::gemm(q_src, false, wq, false, q);
    ag::gemm(kv_src, false, wk, false, k);
    ag::gemm(kv_src, false, wv, false, v);
    int rows = q.dim(0), nk = k.dim(0), c = q.dim(1), d = c / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (int h = 0; h < heads; ++h) {
        Tensor& a = maps[h];
        a = Tensor({rows, nk});
        m2(a).noalias() = scale * (m2(q).middleCols(h * d, d) * m2(k).middleCols(h * d, d).transpose());
        ag::softmax_rows(a);
    }
}

// map*V and output projection for one outer element.
Tensor attn_output_one(const Tensor* maps, const Tensor& v, const Tensor& wo, const Tensor& bo, int heads,
                       Tensor& o) {
    int rows = maps[0].dim(0), c = v.dim(1), d = c / heads;
    o = Tensor({rows, c});
    for (int h = 0; h < heads; ++h)
        m2(o).middleCols(h * d, d).noalias() = m2(maps[h]) * m2(v).middleCols(h * d, d);
    Tensor y;
    ag::gemm(o, false, wo, false, y);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < c; ++j) y.at(i, j) += bo[j];
    return y;
}

// Backward through one outer element. dY: [rows, C]. q_src/kv_src are the
// forward inputs; gradients are accumulated into the provided sinks (null
// sinks are skipped).
void attn_backward_one(const Tensor& dy, const AttnCache& cache, int outer_idx, const Tensor& q_src,
                       const Tensor& kv_src, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                       const Tensor& wo, int heads, Tensor* gq_src, Tensor* gkv, Tensor* gwq, Tensor* gwk,
                       Tensor* gwv, Tensor* gwo, Tensor* gbo) {
    const Tensor& q = cache.q[static_cast<size_t>(outer_idx)];
    const Tensor& k = cache.k[static_cast<size_t>(outer_idx)];
    const Tensor& v = cache.v[static_cast<size_t>(outer_idx)];
    const Tensor& o = cache.o[static_cast<size_t>(outer_idx)];
    int rows = dy.dim(0), c = dy.dim(1), nk = k.dim(0), d = c / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(d));

    if (gwo) ag::gemm(o, true, dy, false, *gwo, true);
    if (gbo)
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < c; ++j) (*gbo)[j] += dy.at(i, j);

    Tensor dO;
    ag::gemm(dy, false, wo, true, dO);

    Tensor dQ({rows, c}), dK({nk, c}), dV({nk, c});
    Tensor dA, dS;
    for (int h = 0; h < heads; ++h) {
        const Tensor& a = cache.site->map(outer_idx, h);
        dA = Tensor({rows, nk});
        m2(dA).noalias() = m2(dO).middleCols(h * d, d) * m2(v).middleCols(h * d, d).transpose();
        m2(dV).middleCols(h * d, d).noalias() += m2(a).transpose() * m2(dO).middleCols(h * d, d);
        ag::softmax_rows_backward(a, dA, dS);
        m2(dQ).middleCols(h * d, d).noalias() += scale * (m2(dS) * m2(k).middleCols(h * d, d));
        m2(dK).middleCols(h * d, d).noalias() += scale * (m2(dS).transpose() * m2(q).middleCols(h * d, d));
    }
    if (gq_src) ag::gemm(dQ, false, wq, true, *gq_src, true);
    if (gwq) ag::gemm(q_src, true, dQ, false, *gwq, true);
    if (gkv) {
        ag::gemm(dK, false, wk, true, *gkv, true);
        ag::gemm(dV, false, wv, true, *gkv, true);
    }
    if (gwk) ag::gemm(kv_src, true, dK, false, *gwk, true);
    if (gwv) ag::gemm(kv_src, true, dV, false, *gwv, true);
}

void maybe_emit_record(const ForwardOptions& opt, const SiteMaps& site) {
    if (opt.record && opt.records)
        opt.records->push_back(AttentionRecord{site.layer_id, site.type, -1, site.head_averaged()});
}

void check_hook_legal(Graph& g, const ForwardOptions& opt, std::initializer_list<Var> inputs) {
    if (!opt.hook || !g.grad_enabled) return;
    for (const auto& v : inputs)
        require(!v->requires_grad, "attention hook is not allowed on a gradient path");
}

// Spatial self-attention (2D) or sparse spatio-temporal attention (3D).
// tok: [B*hw, C]; for ST mode keys/values come from frames {0, b-1} with
// the first frame duplicated at b == 0.
Var attn_spatial_op(Graph& g, Var tok, int B, int hw, Var wq, Var wk, Var wv, Var wo, Var bo, int heads,
                    bool st_mode, const std::string& layer_id, const ForwardOptions& opt) {
    check_hook_legal(g, opt, {tok, wq, wk, wv, wo, bo});
    const Tensor& X = tok->val;
    int c = X.dim(1);
    auto cache = std::make_shared<AttnCache>();
    cache->site = std::make_shared<SiteMaps>();
    cache->site->layer_id = layer_id;
    cache->site->type = AttnType::SpatioTemporal;
    cache->site->outer = B;
    cache->site->heads = heads;
    cache->site->maps.resize(static_cast<size_t>(B) * heads);
    cache->q.resize(static_cast<size_t>(B));
    cache->k.resize(static_cast<size_t>(B));
    cache->v.resize(static_cast<size_t>(B));
    cache->o.resize(static_cast<size_t>(B));

    for (int b = 0; b < B; ++b) {
        Tensor q_src = copy_rows(X, b * hw, hw);
        Tensor kv = st_mode ? vstack(copy_rows(X, 0, hw), copy_rows(X, (b > 0 ? b - 1 : 0) * hw, hw)) : q_src;
        attn_maps_one(q_src, kv, wq->val, wk->val, wv->val, heads, cache->q[b], cache->k[b], cache->v[b],
                      &cache->site->maps[static_cast<size_t>(b) * heads]);
    }
    if (opt.hook) opt.hook(*cache->site);
    if (st_mode) maybe_emit_record(opt, *cache->site);

    Tensor out({B * hw, c});
    for (int b = 0; b < B; ++b) {
        Tensor y = attn_output_one(&cache->site->maps[static_cast<size_t>(b) * heads], cache->v[b], wo->val,
                                   bo->val, heads, cache->o[b]);
        std::copy_n(y.data(), y.numel(), out.data() + static_cast<int64_t>(b) * hw * c);
    }

    return g.make(std::move(out), {tok, wq, wk, wv, wo, bo},
                  [tok, wq, wk, wv, wo, bo, heads, B, hw, st_mode, cache](ag::Node& n) {
        const Tensor& X = tok->val;
        int c = X.dim(1);
        Tensor* gx = tok->requires_grad ? &tok->g() : nullptr;
        for (int b = 0; b < B; ++b) {
            Tensor dy = copy_rows(n.grad, b * hw, hw);
            Tensor q_src = copy_rows(X, b * hw, hw);
            Tensor kv = st_mode ? vstack(copy_rows(X, 0, hw), copy_rows(X, (b > 0 ? b - 1 : 0) * hw, hw)) : q_src;
            Tensor gq_src = gx ? Tensor({hw, c}) : Tensor();
            Tensor gkv = gx ? Tensor({kv.dim(0), c}) : Tensor();
            attn_backward_one(dy, *cache, b, q_src, kv, wq->val, wk->val, wv->val, wo->val, heads,
                              gx ? &gq_src : nullptr, gx ? &gkv : nullptr,
                              wq->requires_grad ? &wq->g() : nullptr, wk->requires_grad ? &wk->g() : nullptr,
                              wv->requires_grad ? &wv->g() : nullptr, wo->requires_grad ? &wo->g() : nullptr,
                              bo->requires_grad ? &bo->g() : nullptr);
            if (gx) {
                add_rows(*gx, b * hw, gq_src);
                if (st_mode) {
                    add_rows(*gx, 0, copy_rows(gkv, 0, hw));
                    add_rows(*gx, (b > 0 ? b - 1 : 0) * hw, copy_rows(gkv, hw, hw));
                } else {
                    add_rows(*gx, b * hw, gkv);
                }
            }
        }
    });
}

// Cross attention between image tokens and a text embedding matrix.
Var attn_cross_op(Graph& g, Var tok, int B, int hw, const std::vector<Var>& texts, Var wq, Var wk, Var wv,
                  Var wo, Var bo, int heads, const std::string& layer_id, const ForwardOptions& opt) {
    require(texts.size() == 1 || static_cast<int>(texts.size()) == B,
            "cross attention: need 1 or B text embeddings");
    check_hook_legal(g, opt, {tok, wq, wk, wv, wo, bo});
    const Tensor& X = tok->val;
    int c = X.dim(1);
    auto cache = std::make_shared<AttnCache>();
    cache->site = std::make_shared<SiteMaps>();
    cache->site->layer_id = layer_id;
    cache->site->type = AttnType::Cross;
    cache->site->outer = B;
    cache->site->heads = heads;
    cache->site->maps.resize(static_cast<size_t>(B) * heads);
    cache->q.resize(static_cast<size_t>(B));
    cache->k.resize(static_cast<size_t>(B));
    cache->v.resize(static_cast<size_t>(B));
    cache->o.resize(static_cast<size_t>(B));

    auto text_of = [&](int b) -> const Var& { return texts.size() == 1 ? texts[0] : texts[static_cast<size_t>(b)]; };
    for (int b = 0; b < B; ++b) {
        Tensor q_src = copy_rows(X, b * hw, hw);
        attn_maps_one(q_src, text_of(b)->val, wq->val, wk->val, wv->val, heads, cache->q[b], cache->k[b],
                      cache->v[b], &cache->site->maps[static_cast<size_t>(b) * heads]);
    }
    if (opt.hook) opt.hook(*cache->site);
    maybe_emit_record(opt, *cache->site);

    Tensor out({B * hw, c});
    for (int b = 0; b < B; ++b) {
        Tensor y = attn_output_one(&cache->site->maps[static_cast<size_t>(b) * heads], cache->v[b], wo->val,
                                   bo->val, heads, cache->o[b]);
        std::copy_n(y.data(), y.numel(), out.data() + static_cast<int64_t>(b) * hw * c);
    }

    std::vector<Var> parents = {tok, wq, wk, wv, wo, bo};
    for (const auto& t : texts) parents.push_back(t);
    return g.make(std::move(out), std::move(parents),
                  [tok, texts, wq, wk, wv, wo, bo, heads, B, hw, cache](ag::Node& n) {
        const Tensor& X = tok->val;
        int c = X.dim(1);
        Tensor* gx = tok->requires_grad ? &tok->g() : nullptr;
        auto text_of = [&](int b) -> const Var& { return texts.size() == 1 ? texts[0] : texts[static_cast<size_t>(b)]; };
        for (int b = 0; b < B; ++b) {
            Tensor dy = copy_rows(n.grad, b * hw, hw);
            Tensor q_src = copy_rows(X, b * hw, hw);
            const Var& text = text_of(b);
            Tensor gq_src = gx ? Tensor({hw, c}) : Tensor();
            attn_backward_one(dy, *cache, b, q_src, text->val, wq->val, wk->val, wv->val, wo->val, heads,
                              gx ? &gq_src : nullptr, text->requires_grad ? &text->g() : nullptr,
                              wq->requires_grad ? &wq->g() : nullptr, wk->requires_grad ? &wk->g() : nullptr,
                              wv->requires_grad ? &wv->g() : nullptr, wo->requires_grad ? &wo->g() : nullptr,
                              bo->requires_grad ? &bo->g() : nullptr);
            if (gx) add_rows(*gx, b * hw, gq_src);
        }
    });
}

// Attention along the frame axis at each spatial location.
Var attn_temporal_op(Graph& g, Var tok, int F, int hw, Var wq, Var wk, Var wv, Var wo, Var bo, int heads,
                     const std::string& layer_id, const ForwardOptions& opt) {
    check_hook_legal(g, opt, {tok, wq, wk, wv, wo, bo});
    const Tensor& X = tok->val;
    int c = X.dim(1);
    auto cache = std::make_shared<AttnCache>();
    cache->site = std::make_shared<SiteMaps>();
    cache->site->layer_id = layer_id;
    cache->site->type = AttnType::Temporal;
    cache->site->outer = hw;
    cache->site->heads = heads;
    cache->site->maps.resize(static_cast<size_t>(hw) * heads);
    cache->q.resize(static_cast<size_t>(hw));
    cache->k.resize(static_cast<size_t>(hw));
    cache->v.resize(static_cast<size_t>(hw));
    cache->o.resize(static_cast<size_t>(hw));

    auto gather_loc = [&](const Tensor& src, int p) {
        Tensor out({F, c});
        for (int f = 0; f < F; ++f)
            std::copy_n(src.data() + (static_cast<int64_t>(f) * hw + p) * c, c, out.data() + static_cast<int64_t>(f) * c);
        return out;
    };

    for (int p = 0; p < hw; ++p) {
        Tensor q_src = gather_loc(X, p);
        attn_maps_one(q_src, q_src, wq->val, wk->val, wv->val, heads, cache->q[p], cache->k[p], cache->v[p],
                      &cache->site->maps[static_cast<size_t>(p) * heads]);
    }
    if (opt.hook) opt.hook(*cache->site);
    maybe_emit_record(opt, *cache->site);

    Tensor out({F * hw, c});
    for (int p = 0; p < hw; ++p) {
        Tensor y = attn_output_one(&cache->site->maps[static_cast<size_t>(p) * heads], cache->v[p], wo->val,
                                   bo->val, heads, cache->o[p]);
        for (int f = 0; f < F; ++f)
            std::copy_n(y.data() + static_cast<int64_t>(f) * c, c,
                        out.data() + (static_cast<int64_t>(f) * hw + p) * c);
    }

    return g.make(std::move(out), {tok, wq, wk, wv, wo, bo},
                  [tok, wq, wk, wv, wo, bo, heads, F, hw, cache](ag::Node& n) {
        const Tensor& X = tok->val;
        int c = X.dim(1);
        Tensor* gx = tok->requires_grad ? &tok->g() : nullptr;
        for (int p = 0; p < hw; ++p) {
            Tensor dy({F, c});
            for (int f = 0; f < F; ++f)
                std::copy_n(n.grad.data() + (static_cast<int64_t>(f) * hw + p) * c, c,
                            dy.data() + static_cast<int64_t>(f) * c);
            Tensor q_src({F, c});
            for (int f = 0; f < F; ++f)
                std::copy_n(X.data() + (static_cast<int64_t>(f) * hw + p) * c, c,
                            q_src.data() + static_cast<int64_t>(f) * c);
            Tensor gq_src = gx ? Tensor({F, c}) : Tensor();
            Tensor gkv = gx ? Tensor({F, c}) : Tensor();
            attn_backward_one(dy, *cache, p, q_src, q_src, wq->val, wk->val, wv->val, wo->val, heads,
                              gx ? &gq_src : nullptr, gx ? &gkv : nullptr,
                              wq->requires_grad ? &wq->g() : nullptr, wk->requires_grad ? &wk->g() : nullptr,
                              wv->requires_grad ? &wv->g() : nullptr, wo->requires_grad ? &wo->g() : nullptr,
                              bo->requires_grad ? &bo->g() : nullptr);
            if (gx)
                for (int f = 0; f < F; ++f) {
                    double* dst = gx->data() + (static_cast<int64_t>(f) * hw + p) * c;
                    for (int j = 0; j < c; ++j) dst[j] += gq_src.at(f, j) + gkv.at(f, j);
                }
        }
    });
}

// [B,C,H,W] -> [B*HW, C]
Var to_tokens(Graph& g, Var x) {
    const Tensor& X = x->val;
    int B = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3), hw = h * w;
    Tensor out({B * hw, c});
    for (int b = 0; b < B; ++b)
        for (int cc = 0; cc < c; ++cc) {
            const double* src = X.data() + (static_cast<int64_t>(b) * c + cc) * hw;
            for (int p = 0; p < hw; ++p) out.at(b * hw + p, cc) = src[p];
        }
    return g.make(std::move(out), {x}, [x, B, c, hw](ag::Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int b = 0; b < B; ++b)
            for (int cc = 0; cc < c; ++cc) {
                double* dst = gx.data() + (static_cast<int64_t>(b) * c + cc) * hw;
                for (int p = 0; p < hw; ++p) dst[p] += n.grad.at(b * hw + p, cc);
            }
    });
}

// [B*HW, C] -> [B,C,H,W]
Var from_tokens(Graph& g, Var tok, int B, int c, int h, int w) {
    const Tensor& X = tok->val;
    int hw = h * w;
    Tensor out({B, c, h, w});
    for (int b = 0; b < B; ++b)
        for (int cc = 0; cc < c; ++cc) {
            double* dst = out.data() + (static_cast<int64_t>(b) * c + cc) * hw;
            for (int p = 0; p < hw; ++p) dst[p] = X.at(b * hw + p, cc);
        }
    return g.make(std::move(out), {tok}, [tok, B, c, hw](ag::Node& n) {
        if (!tok->requires_grad) return;
        Tensor& gt = tok->g();
        for (int b = 0; b < B; ++b)
            for (int cc = 0; cc < c; ++cc) {
                const double* src = n.grad.data() + (static_cast<int64_t>(b) * c + cc) * hw;
                for (int p = 0; p < hw; ++p) gt.at(b * hw + p, cc) += src[p];
            }
    });
}

Tensor time_features(const std::vector<int>& t, int dim) {
    int half = dim / 2;
    Tensor out({static_cast<int>(t.size()), dim});
    for (size_t b = 0; b < t.size(); ++b)
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half - 1));
            double arg = static_cast<double>(t[b]) * freq;
            out.at(static_cast<int>(b), i) = std::sin(arg);
            out.at(static_cast<int>(b), half + i) = std::cos(arg);
        }
    return out;
}

Var res_block(Graph& g, ParamBinder& P, const std::string& p, Var x, Var stemb, int groups, bool has_skip) {
    Var h = ag::group_norm(g, x, P(p + ".norm1.g"), P(p + ".norm1.b"), groups);
    h = ag::silu(g, h);
    h = ag::conv2d(g, h, P(p + ".conv1.w"), P(p + ".conv1.b"), 1, 1);
    Var tp = ag::affine(g, stemb, P(p + ".tproj.w"), P(p + ".tproj.b"));
    h = ag::add_channel_bias(g, h, tp);
    h = ag::group_norm(g, h, P(p + ".norm2.g"), P(p + ".norm2.b"), groups);
    h = ag::silu(g, h);
    h = ag::conv2d(g, h, P(p + ".conv2.w"), P(p + ".conv2.b"), 1, 1);
    Var skip = has_skip ? ag::conv2d(g, x, P(p + ".skip.w"), P(p + ".skip.b"), 1, 0) : x;
    return ag::add(g, h, skip);
}

Var attn_block(Graph& g, ParamBinder& P, const ModelConfig& cfg, const std::string& site, Var x,
               const std::vector<Var>& texts, bool video_mode, const ForwardOptions& opt) {
    int B = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3), hw = h * w;
    auto attn_tok = [&](const std::string& mod, auto&& fn) {
        Var n = ag::group_norm(g, x, P(site + "." + mod + ".norm.g"), P(site + "." + mod + ".norm.b"),
                               cfg.norm_groups);
        Var tokens = to_tokens(g, n);
        Var out_tok = fn(tokens, mod);
        x = ag::add(g, x, from_tokens(g, out_tok, B, c, h, w));
    };

    attn_tok("sa", [&](Var tokens, const std::string& mod) {
        return attn_spatial_op(g, tokens, B, hw, P(site + "." + mod + ".wq"), P(site + "." + mod + ".wk"),
                               P(site + "." + mod + ".wv"), P(site + "." + mod + ".wo"),
                               P(site + "." + mod + ".bo"), cfg.heads, video_mode, site, opt);
    });
    attn_tok("ca", [&](Var tokens, const std::string& mod) {
        return attn_cross_op(g, tokens, B, hw, texts, P(site + "." + mod + ".wq"), P(site + "." + mod + ".wk"),
                             P(site + "." + mod + ".wv"), P(site + "." + mod + ".wo"), P(site + "." + mod + ".bo"),
                             cfg.heads, site, opt);
    });
    {
        Var n = ag::group_norm(g, x, P(site + ".ff.norm.g"), P(site + ".ff.norm.b"), cfg.norm_groups);
        Var tokens = to_tokens(g, n);
        Var f1 = ag::affine(g, tokens, P(site + ".ff.fc1.w"), P(site + ".ff.fc1.b"));
        f1 = ag::silu(g, f1);
        Var f2 = ag::affine(g, f1, P(site + ".ff.fc2.w"), P(site + ".ff.fc2.b"));
        x = ag::add(g, x, from_tokens(g, f2, B, c, h, w));
    }
    if (video_mode) {
        attn_tok("ta", [&](Var tokens, const std::string& mod) {
            return attn_temporal_op(g, tokens, B, hw, P(site + "." + mod + ".wq"), P(site + "." + mod + ".wk"),
                                    P(site + "." + mod + ".wv"), P(site + "." + mod + ".wo"),
                                    P(site + "." + mod + ".bo"), cfg.heads, site, opt);
        });
    }
    return x;
}

Var unet_forward(Graph& g, ParamBinder& P, const ModelConfig& cfg, Var x, const std::vector<int>& ts,
                 const std::vector<Var>& texts, bool video_mode, const ForwardOptions& opt) {
    const Tensor& X = x->val;
    require(X.ndim() == 4, "forward: expected [B,C,H,W]");
    require(X.dim(1) == cfg.in_channels && X.dim(2) == cfg.height && X.dim(3) == cfg.width,
            "forward: input shape " + X.shape_str() + " does not match the model config");
    int B = X.dim(0);
    require(B >= 1, "forward: need at least one frame/sample");
    require(static_cast<int>(ts.size()) == B, "forward: timestep count mismatch");

    Var tf = g.constant(time_features(ts, cfg.time_dim));
    Var temb = ag::affine(g, tf, P("time.fc1.w"), P("time.fc1.b"));
    temb = ag::silu(g, temb);
    temb = ag::affine(g, temb, P("time.fc2.w"), P("time.fc2.b"));
    Var stemb = ag::silu(g, temb);

    Var h0 = ag::conv2d(g, x, P("conv_in.w"), P("conv_in.b"), 1, 1);
    Var h1 = res_block(g, P, "down0.res", h0, stemb, cfg.norm_groups, false);
    Var d1 = ag::conv2d(g, h1, P("down0.down.w"), P("down0.down.b"), 2, 1);
    Var h2 = res_block(g, P, "down1.res", d1, stemb, cfg.norm_groups, false);
    h2 = attn_block(g, P, cfg, "down1", h2, texts, video_mode, opt);
    Var m = res_block(g, P, "mid.res1", h2, stemb, cfg.norm_groups, false);
    m = attn_block(g, P, cfg, "mid", m, texts, video_mode, opt);
    m = res_block(g, P, "mid.res2", m, stemb, cfg.norm_groups, false);
    Var u = ag::concat_channels(g, m, h2);
    u = res_block(g, P, "up1.res", u, stemb, cfg.norm_groups, true);
    u = attn_block(g, P, cfg, "up1", u, texts, video_mode, opt);
    u = ag::upsample_nearest2x(g, u);
    u = ag::conv2d(g, u, P("up1.up.w"), P("up1.up.b"), 1, 1);
    u = ag::concat_channels(g, u, h1);
    u = res_block(g, P, "up0.res", u, stemb, cfg.norm_groups, true);
    Var o = ag::group_norm(g, u, P("out.norm.g"), P("out.norm.b"), cfg.norm_groups);
    o = ag::silu(g, o);
    o = ag::conv2d(g, o, P("out.conv.w"), P("out.conv.b"), 1, 1);
    if (!o->val.all_finite()) throw std::runtime_error("forward: non-finite output at out.conv");
    return o;
}

}  // namespace

Var forward_2d(Graph& g, ParamBinder& params, const ModelConfig& cfg, Var x, const std::vector<int>& t,
               const std::vector<Var>& texts) {
    ForwardOptions opt;
    return unet_forward(g, params, cfg, x, t, texts, false, opt);
}

Var forward_3d(Graph& g, ParamBinder& params, const ModelConfig& cfg, Var video, int t, Var text,
               const ForwardOptions& opt) {
    std::vector<int> ts(static_cast<size_t>(video->val.dim(0)), t);
    return unet_forward(g, params, cfg, video, ts, {text}, true, opt);
}

Tensor forward_2d_value(const ParamStore& w, const ModelConfig& cfg, const Tensor& x,
                        const std::vector<int>& t, const std::vector<Tensor>& texts) {
    Graph g(false);
    ParamBinder P(g, w);
    std::vector<Var> tv;
    tv.reserve(texts.size());
    for (const auto& e : texts) tv.push_back(g.constant(e));
    return forward_2d(g, P, cfg, g.constant(x), t, tv)->val;
}

Tensor forward_3d_value(const ParamStore& w, const ModelConfig& cfg, const Tensor& video, int t,
                        const Tensor& text, const ForwardOptions& opt) {
    Graph g(false);
    ParamBinder P(g, w);
    return forward_3d(g, P, cfg, g.constant(video), t, g.constant(text), opt)->val;
}

TextEmbedding model_encode_text(const ParamStore& w, const ModelConfig& cfg, const Vocabulary& vocab,
                                const std::string& prompt) {
    return encode_text(prompt, vocab, w.get("text.tok_emb"), cfg.max_tokens);
}

Tensor frame_feature_embedding(const ParamStore& w, const ModelConfig& cfg, const Tensor& frame) {
    require(frame.ndim() == 3, "frame_feature_embedding: expected [C,H,W]");
    Graph g(false);
    ParamBinder P(g, w);
    Var x = g.constant(frame.reshaped({1, frame.dim(0), frame.dim(1), frame.dim(2)}));
    Var tf = g.constant(time_features({1}, cfg.time_dim));
    Var temb = ag::affine(g, tf, P("time.fc1.w"), P("time.fc1.b"));
    temb = ag::silu(g, temb);
    temb = ag::affine(g, temb, P("time.fc2.w"), P("time.fc2.b"));
    Var stemb = ag::silu(g, temb);

    Var h0 = ag::conv2d(g, x, P("conv_in.w"), P("conv_in.b"), 1, 1);
    Var h1 = res_block(g, P, "down0.res", h0, stemb, cfg.norm_groups, false);
    Var d1 = ag::conv2d(g, h1, P("down0.down.w"), P("down0.down.b"), 2, 1);
    Var h2 = res_block(g, P, "down1.res", d1, stemb, cfg.norm_groups, false);

    // spatial mean of the coarse features, mapped to text space by wk
    const Tensor& feat = h2->val;  // [1, C, h, w]
    int c = feat.dim(1);
    int64_t hw = static_cast<int64_t>(feat.dim(2)) * feat.dim(3);
    Tensor pooled({c});
    for (int cc = 0; cc < c; ++cc) {
        const double* p = feat.data() + static_cast<int64_t>(cc) * hw;
        double s = 0.0;
        for (int64_t i = 0; i < hw; ++i) s += p[i];
        pooled[cc] = s / static_cast<double>(hw);
    }
    const Tensor& wk = w.get("mid.ca.wk");  // [d_text, C]
    Tensor emb({wk.dim(0)});
    for (int d = 0; d < wk.dim(0); ++d) {
        double s = 0.0;
        for (int cc = 0; cc < c; ++cc) s += wk.at(d, cc) * pooled[cc];
        emb[d] = s;
    }
    return emb;
}

// ---- standalone kernels ----

std::pair<Tensor, Tensor> st_attention(const Tensor& z_f, const Tensor& z_first, const Tensor& z_prev,
                                       const AttnWeights& w) {
    require(z_f.ndim() == 2 && z_first.same_shape(z_f) && z_prev.same_shape(z_f),
            "st_attention: token matrices must be [HW, C] and share a shape");
    require(w.heads >= 1 && w.wq.dim(1) % w.heads == 0, "st_attention: bad head count");
    require(w.wq.dim(1) / w.heads > 0, "st_attention: zero projection dimension");
    Tensor kv = vstack(z_first, z_prev);
    Tensor q, k, v;
    std::vector<Tensor> maps(static_cast<size_t>(w.heads));
    attn_maps_one(z_f, kv, w.wq, w.wk, w.wv, w.heads, q, k, v, maps.data());
    Tensor o;
    Tensor y = attn_output_one(maps.data(), v, w.wo, w.bo, w.heads, o);
    Tensor avg({maps[0].dim(0), maps[0].dim(1)});
    for (const auto& m : maps)
        for (int64_t i = 0; i < avg.numel(); ++i) avg[i] += m[i] / static_cast<double>(w.heads);
    return {y, avg};
}

Tensor temporal_attention(const Tensor& video, const AttnWeights& w) {
    require(video.ndim() == 4, "temporal_attention: expected [F,C,H,W]");
    int F = video.dim(0), c = video.dim(1), h = video.dim(2), wd = video.dim(3), hw = h * wd;
    Tensor out = video;
    Tensor q, k, v, o;
    std::vector<Tensor> maps(static_cast<size_t>(w.heads));
    for (int p = 0; p < hw; ++p) {
        Tensor loc({F, c});
        for (int f = 0; f < F; ++f)
            for (int cc = 0; cc < c; ++cc) loc.at(f, cc) = video[(static_cast<int64_t>(f) * c + cc) * hw + p];
        attn_maps_one(loc, loc, w.wq, w.wk, w.wv, w.heads, q, k, v, maps.data());
        Tensor y = attn_output_one(maps.data(), v, w.wo, w.bo, w.heads, o);
        for (int f = 0; f < F; ++f)
            for (int cc = 0; cc < c; ++cc) out[(static_cast<int64_t>(f) * c + cc) * hw + p] += y.at(f, cc);
    }
    return out;
}

}  // namespace videdit
