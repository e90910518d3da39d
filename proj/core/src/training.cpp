#include "videdit/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "videdit/rng.hpp"

namespace videdit {

bool TrainConfig::selects(const std::string& name) const {
    if (trainable_substrings.empty()) return true;
    for (const auto& s : trainable_substrings)
        if (name.find(s) != std::string::npos) return true;
    return false;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(Tensor& param, const Tensor& grad, const std::string& name) {
    State& st = state_[name];
    if (st.m.empty()) {
        st.m = Tensor::zeros(param.shape());
        st.v = Tensor::zeros(param.shape());
    }
    st.t += 1;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    for (int64_t i = 0; i < param.numel(); ++i) {
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * grad[i];
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * grad[i] * grad[i];
        double mh = st.m[i] / bc1;
        double vh = st.v[i] / bc2;
        param[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
}

namespace {

// Per-sample forward diffusion with independent timesteps.
Tensor noise_batch(const Tensor& x0, const Tensor& eps, const std::vector<int>& ts, const NoiseSchedule& sched) {
    Tensor out = x0;
    int b = x0.dim(0);
    int64_t per = x0.numel() / b;
    for (int i = 0; i < b; ++i) {
        double ab = sched.alpha_bar_at(ts[static_cast<size_t>(i)]);
        double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
        double* p = out.data() + static_cast<int64_t>(i) * per;
        const double* e = eps.data() + static_cast<int64_t>(i) * per;
        for (int64_t j = 0; j < per; ++j) p[j] = a * p[j] + s * e[j];
    }
    return out;
}

}  // namespace

PretrainResult pretrain_2d(const std::vector<CaptionedImage>& dataset, const ModelConfig& cfg,
                           const Vocabulary& vocab, const NoiseSchedule& sched, const TrainConfig& tc) {
    require(!dataset.empty(), "pretrain_2d: empty dataset");
    PretrainResult res;
    res.weights = init_weights_2d(cfg, vocab, tc.seed);
    if (tc.steps == 0) return res;

    ModelConfig cfg2 = cfg;
    cfg2.vocab_size = vocab.size();
    Rng rng(Rng::derive(tc.seed, string_hash("pretrain")));
    Adam opt(tc.learning_rate);
    auto filter = [&tc](const std::string& n) { return tc.selects(n); };

    int b = tc.batch;
    for (int step = 0; step < tc.steps; ++step) {
        Tensor x0({b, cfg.in_channels, cfg.height, cfg.width});
        std::vector<int> ts(static_cast<size_t>(b));
        std::vector<std::vector<int>> ids(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i) {
            const auto& sample = dataset[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(dataset.size()) - 1))];
            std::copy_n(sample.image.data(), sample.image.numel(),
                        x0.data() + static_cast<int64_t>(i) * sample.image.numel());
            ts[static_cast<size_t>(i)] = rng.uniform_int(1, sched.T);
            std::string caption = rng.uniform() < tc.uncond_prob ? "" : sample.caption;
            ids[static_cast<size_t>(i)] = vocab.tokenize(caption, cfg.max_tokens);
        }
        Tensor eps = rng.normal_tensor(x0.shape());
        Tensor xt = noise_batch(x0, eps, ts, sched);

        ag::Graph g;
        ParamBinder P(g, res.weights, filter);
        std::vector<ag::Var> texts;
        texts.reserve(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i) texts.push_back(ag::gather_rows(g, P("text.tok_emb"), ids[static_cast<size_t>(i)]));
        ag::Var pred = forward_2d(g, P, cfg2, g.constant(xt), ts, texts);
        ag::Var loss = ag::mse_loss(g, pred, eps);
        double lv = loss->val[0];
        if (!std::isfinite(lv)) throw std::runtime_error("pretrain_2d: non-finite loss at step " + std::to_string(step));
        res.loss_curve.push_back(lv);
        g.backward(loss);
        for (const auto& [name, var] : P.trainable_vars()) {
            if (!var->has_grad()) continue;
            opt.step(res.weights.get(name), var->grad, name);
        }
    }
    return res;
}

FinetuneResult finetune_one_shot(const ParamStore& weights3d, const ModelConfig& cfg, const Vocabulary& vocab,
                                 const NoiseSchedule& sched, const Tensor& video, const std::string& prompt,
                                 const TrainConfig& tc) {
    FinetuneResult res;
    res.weights = ParamStore();
    for (const auto& name : weights3d.names()) res.weights.add(name, weights3d.get(name));
    if (tc.steps == 0) return res;

    ModelConfig cfg2 = cfg;
    cfg2.vocab_size = vocab.size();
    Rng rng(Rng::derive(tc.seed, string_hash("finetune")));
    Adam opt(tc.learning_rate);
    auto filter = [&tc](const std::string& n) { return tc.selects(n); };
    std::vector<int> ids = vocab.tokenize(prompt, cfg.max_tokens);

    for (int step = 0; step < tc.steps; ++step) {
        int t = rng.uniform_int(1, sched.T);
        Tensor eps = rng.normal_tensor(video.shape());
        Tensor xt = add_noise(video, eps, t, sched);

        ag::Graph g;
        ParamBinder P(g, res.weights, filter);
        ag::Var text = ag::gather_rows(g, P("text.tok_emb"), ids);
        ag::Var pred = forward_3d(g, P, cfg2, g.constant(xt), t, text);
        ag::Var loss = ag::mse_loss(g, pred, eps);
        double lv = loss->val[0];
        if (!std::isfinite(lv))
            throw std::runtime_error("finetune_one_shot: non-finite loss at step " + std::to_string(step));
        res.loss_curve.push_back(lv);
        g.backward(loss);
        for (const auto& [name, var] : P.trainable_vars()) {
            if (!var->has_grad()) continue;
            opt.step(res.weights.get(name), var->grad, name);
        }
    }
    return res;
}

std::vector<Tensor> NullEmbeddingSet::matrices() const {
    std::vector<Tensor> out;
    out.reserve(per_step.size());
    for (const auto& e : per_step) out.push_back(e.embeddings);
    return out;
}

NtiResult null_text_invert(const ParamStore& weights3d, const ModelConfig& cfg, const NoiseSchedule& sched,
                           const Trajectory& inversion, const TextEmbedding& cond,
                           const TextEmbedding& initial_null, double w, int inner_iters, double lr) {
    int S = sched.num_sampler_steps();
    require(static_cast<int>(inversion.size()) == S + 1, "null_text_invert: trajectory length != S+1");
    require(initial_null.null_flag, "null_text_invert: initial embedding must be the null embedding");

    NtiResult res;
    res.nulls.per_step.resize(static_cast<size_t>(S));
    res.losses.resize(static_cast<size_t>(S));

    if (w == 1.0) {
        // CFG collapses to the conditional branch; the objective has no
        // dependence on the null embedding.
        for (int i = 0; i < S; ++i) res.nulls.per_step[static_cast<size_t>(i)] = initial_null;
        return res;
    }

    Tensor zbar = inversion.back().z;
    Tensor null = initial_null.embeddings;

    for (int i = 0; i < S; ++i) {
        int t = sched.sampler_steps[static_cast<size_t>(i)];
        int tp = sched.prev_timestep(i);
        const Tensor& target = inversion.at_timestep(tp).z;
        DdimCoeffs kc = ddim_step_coeffs(sched, t, tp);
        Tensor eps_cond = forward_3d_value(weights3d, cfg, zbar, t, cond.embeddings);

        auto objective = [&](const Tensor& null_mat) {
            Tensor eps_u = forward_3d_value(weights3d, cfg, zbar, t, null_mat);
            Tensor pred = zbar;
            for (int64_t j = 0; j < pred.numel(); ++j) {
                double e = eps_u[j] + w * (eps_cond[j] - eps_u[j]);
                pred[j] = kc.k_z * pred[j] + kc.k_eps * e;
            }
            double s = 0.0;
            for (int64_t j = 0; j < pred.numel(); ++j) {
                double d = pred[j] - target[j];
                s += d * d;
            }
            return s / static_cast<double>(pred.numel());
        };

        double cur = -1.0;
        double step_lr = lr;
        for (int it = 0; it < inner_iters; ++it) {
            ag::Graph g;
            ParamBinder P(g, weights3d);
            ag::Var null_var = g.leaf(null, true);
            ag::Var eps_u = forward_3d(g, P, cfg, g.constant(zbar), t, null_var);
            ag::Var eps = ag::add_scaled(g, eps_u, 1.0 - w, g.constant(eps_cond), w);
            ag::Var pred = ag::add_scaled(g, g.constant(zbar), kc.k_z, eps, kc.k_eps);
            ag::Var loss = ag::mse_loss(g, pred, target);
            cur = loss->val[0];
            if (!std::isfinite(cur))
                throw std::runtime_error("null_text_invert: non-finite loss at step " + std::to_string(i));
            if (it == 0) res.losses[static_cast<size_t>(i)].push_back(cur);
            g.backward(loss);
            const Tensor& grad = null_var->grad;

            // fixed-step descent with halving on non-decrease, so the
            // per-step objective is non-increasing by construction
            bool accepted = false;
            for (int h = 0; h < 8; ++h) {
                Tensor cand = null;
                for (int64_t j = 0; j < cand.numel(); ++j) cand[j] -= step_lr * grad[j];
                double cv = objective(cand);
                if (cv <= cur) {
                    null = cand;
                    cur = cv;
                    accepted = true;
                    break;
                }
                step_lr *= 0.5;
            }
            res.losses[static_cast<size_t>(i)].push_back(cur);
            if (!accepted) break;  // no descent direction at this scale
        }

        // advance the optimized trajectory
        Tensor eps_u = forward_3d_value(weights3d, cfg, zbar, t, null);
        Tensor eps = cfg_combine(eps_u, eps_cond, w);
        zbar = ddim_step(zbar, eps, t, tp, sched);

        TextEmbedding e;
        e.token_ids = initial_null.token_ids;
        e.embeddings = null;
        e.null_flag = true;
        res.nulls.per_step[static_cast<size_t>(i)] = e;
    }
    return res;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
    std::ofstream f(path);
    require(f.good(), "write_loss_csv: cannot open " + path);
    f << "step,loss\n";
    for (size_t i = 0; i < losses.size(); ++i) f << i << "," << losses[i] << "\n";
}

}  // namespace videdit
