#include "foxp2/model.hpp"

#include "foxp2/hash.hpp"

#include <cmath>

namespace foxp2 {

// ---- vocab ----

int Vocab::word(Lang l, int k) const {
  if (k < 0 || k >= n_words) throw std::out_of_range("word index");
  switch (l) {
    case Lang::En: return k;
    case Lang::Hi: return n_words + k;
    case Lang::Es: return 2 * n_words + n_shared + k;
  }
  return -1;
}

int Vocab::directive(Lang target) const {
  if (target == Lang::En) throw ConfigError("no directive token for en");
  return 3 * n_words + n_shared + (target == Lang::Hi ? 0 : 1);
}

Vocab::Block Vocab::block_of(int tok) const {
  if (tok < 0 || tok >= size()) throw std::out_of_range("token id");
  if (tok < n_words) return Block::En;
  if (tok < 2 * n_words) return Block::Hi;
  if (tok < 2 * n_words + n_shared) return Block::Shared;
  if (tok < 3 * n_words + n_shared) return Block::Es;
  return Block::Directive;
}

std::optional<Lang> Vocab::lang_of(int tok) const {
  switch (block_of(tok)) {
    case Block::En: return Lang::En;
    case Block::Hi: return Lang::Hi;
    case Block::Es: return Lang::Es;
    default: return std::nullopt;
  }
}

int Vocab::word_index(int tok) const {
  switch (block_of(tok)) {
    case Block::En: return tok;
    case Block::Hi: return tok - n_words;
    case Block::Es: return tok - 2 * n_words - n_shared;
    default: return -1;
  }
}

bool Vocab::is_entity(int tok) const {
  return tok >= shared_begin() && tok < shared_begin() + 10;
}

namespace {

std::string letters(int k, int width) {
  std::string s(width, 'a');
  for (int i = width - 1; i >= 0; --i) {
    s[i] = static_cast<char>('a' + k % 26);
    k /= 26;
  }
  return s;
}

void append_utf8(std::string& s, char32_t cp) {
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

std::string Vocab::str(int tok) const {
  switch (block_of(tok)) {
    case Block::En: return "w" + letters(tok, 2);
    case Block::Hi: {
      int k = tok - n_words;
      if (romanized_hi(k)) return "hn" + letters(k, 2);
      std::string s;
      append_utf8(s, 0x0915 + k % 33);
      append_utf8(s, 0x093E + (k / 33) % 7);
      return s;
    }
    case Block::Es: {
      int k = word_index(tok);
      if (k == 0) return "¿";
      if (k == 1) return "¡";
      static const char* marks[] = {"ñ", "á", "é", "ó"};
      return "s" + letters(k, 2) + marks[k % 4];
    }
    case Block::Shared: {
      int i = tok - shared_begin();
      if (i < 10) return "Ent" + std::to_string(i);
      static const char* fmt[] = {"-", "*", "[", "]", ":", "|", ">", "<", "#", "~"};
      if (i < 20) return fmt[i - 10];
      int f = i - 20;
      static const char* fill[] = {".", ",", "!", "?", ";", "(", ")", "।", "॥", "..."};
      if (f < 10) return fill[f];
      if (f < 20) return std::to_string(f - 10);
      return "x" + std::to_string(f);
    }
    case Block::Directive: return tok == directive(Lang::Hi) ? "<to:hi>" : "<to:es>";
  }
  return "";
}

std::vector<int> Vocab::block_tokens(Lang l) const {
  std::vector<int> out;
  for (int k = 0; k < n_words; ++k) out.push_back(word(l, k));
  return out;
}

// ---- config ----

void PlantedConfig::validate() const {
  if (d < 24) throw ConfigError("planted model needs d >= 24");
  if (L < 3) throw ConfigError("planted model needs L >= 3");
  if (window_lo < 2 || window_hi < window_lo || window_hi >= L)
    throw ConfigError("planted window must satisfy 2 <= lo <= hi < L");
  if (n_words < 10 || n_shared < 30) throw ConfigError("vocabulary too small");
  if (decay <= 0.0 || decay > 1.0) throw ConfigError("decay must lie in (0,1]");
  if (max_context < 8) throw ConfigError("max_context too small");
}

void to_json(nlohmann::json& j, const PlantedConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"L", c.L},
                     {"d_ff", c.d_ff},
                     {"n_words", c.n_words},
                     {"n_shared", c.n_shared},
                     {"window_lo", c.window_lo},
                     {"window_hi", c.window_hi},
                     {"decay", c.decay},
                     {"max_context", c.max_context},
                     {"emb_scale", c.emb_scale},
                     {"content_mix", c.content_mix},
                     {"cue_gain", c.cue_gain},
                     {"directive_gain", c.directive_gain},
                     {"detector_kappa", c.detector_kappa},
                     {"detector_theta", c.detector_theta},
                     {"detector_cap", c.detector_cap},
                     {"amp", c.amp},
                     {"commit_gain", c.commit_gain},
                     {"readout", c.readout},
                     {"content_readout", c.content_readout},
                     {"topic_pref", c.topic_pref},
                     {"bias_en", c.bias_en},
                     {"bias_es", c.bias_es},
                     {"bias_shared", c.bias_shared},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PlantedConfig& c) {
  PlantedConfig def;
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  c = def;
  get("d", c.d);
  get("L", c.L);
  get("d_ff", c.d_ff);
  get("n_words", c.n_words);
  get("n_shared", c.n_shared);
  get("window_lo", c.window_lo);
  get("window_hi", c.window_hi);
  get("decay", c.decay);
  get("max_context", c.max_context);
  get("emb_scale", c.emb_scale);
  get("content_mix", c.content_mix);
  get("cue_gain", c.cue_gain);
  get("directive_gain", c.directive_gain);
  get("detector_kappa", c.detector_kappa);
  get("detector_theta", c.detector_theta);
  get("detector_cap", c.detector_cap);
  get("amp", c.amp);
  get("commit_gain", c.commit_gain);
  get("readout", c.readout);
  get("content_readout", c.content_readout);
  get("topic_pref", c.topic_pref);
  get("bias_en", c.bias_en);
  get("bias_es", c.bias_es);
  get("bias_shared", c.bias_shared);
  get("seed", c.seed);
}

// ---- ground truth ----

const ChannelTruth& GroundTruth::channel(Lang l) const {
  if (l == Lang::Hi) return hi;
  if (l == Lang::Es) return es;
  throw ConfigError("en has no planted channel");
}

double GroundTruth::channel_gain(int layer) const {
  if (layer < window_lo) return 0.0;
  if (layer <= window_hi) return readout * commit_gain * std::pow(amp, window_hi - layer);
  return readout;
}

// ---- model ----

namespace {

Vec positive_unit(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = std::abs(nd(rng)) + 0.2;
  return v / v.norm();
}

Vec embed_coords(int d, const std::vector<int>& coords, const Vec& vals) {
  Vec out = Vec::Zero(d);
  for (std::size_t i = 0; i < coords.size(); ++i) out[coords[i]] = vals[static_cast<Eigen::Index>(i)];
  return out;
}

std::vector<int> range(int lo, int n) {
  std::vector<int> r(n);
  for (int i = 0; i < n; ++i) r[i] = lo + i;
  return r;
}

constexpr int kChannelSlots = 12;

}  // namespace

Model Model::planted(const PlantedConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.vocab_.n_words = cfg.n_words;
  m.vocab_.n_shared = cfg.n_shared;
  const int d = cfg.d;
  const int c = cfg.content_dims();
  const int V = m.vocab_.size();

  auto rng = make_rng(cfg.seed, "planted_model");
  std::normal_distribution<double> nd(0.0, 1.0);

  GroundTruth& gt = m.truth_;
  gt.window_lo = cfg.window_lo;
  gt.window_hi = cfg.window_hi;
  gt.amp = cfg.amp;
  gt.commit_gain = cfg.commit_gain;
  gt.readout = cfg.readout;
  for (Lang l : {Lang::Hi, Lang::Es}) {
    ChannelTruth& ch = (l == Lang::Hi) ? gt.hi : gt.es;
    int off = (l == Lang::Hi) ? 0 : 1;
    ch.lang = l;
    ch.v_coords = range(c + 3 * off, 3);
    ch.cue_coords = range(c + 6 + 4 * off, 4);
    ch.out_coords = range(c + 14 + 3 * off, 3);
    ch.v_star = embed_coords(d, ch.v_coords, positive_unit(3, rng));
    ch.o_star = embed_coords(d, ch.out_coords, positive_unit(3, rng));
    ch.channel_units.assign(cfg.L, {});
  }

  // embeddings
  Mat base(cfg.n_words, c);
  for (int k = 0; k < cfg.n_words; ++k)
    for (int i = 0; i < c; ++i) base(k, i) = nd(rng) * cfg.emb_scale / std::sqrt(double(c));
  Mat shared_base(cfg.n_shared, c);
  for (int k = 0; k < cfg.n_shared; ++k)
    for (int i = 0; i < c; ++i) shared_base(k, i) = nd(rng) * cfg.emb_scale / std::sqrt(double(c));

  m.E_ = Mat::Zero(V, d);
  const Vec cue_hi = cfg.cue_gain * embed_coords(d, gt.hi.cue_coords, positive_unit(4, rng));
  const Vec cue_es = cfg.cue_gain * embed_coords(d, gt.es.cue_coords, positive_unit(4, rng));
  for (int k = 0; k < cfg.n_words; ++k) {
    for (Lang l : {Lang::En, Lang::Hi, Lang::Es}) m.E_.row(m.vocab_.word(l, k)).head(c) = base.row(k);
    m.E_.row(m.vocab_.word(Lang::Hi, k)) += cue_hi.transpose();
    m.E_.row(m.vocab_.word(Lang::Es, k)) += cue_es.transpose();
  }
  for (int k = 0; k < cfg.n_shared; ++k) m.E_.row(m.vocab_.shared_begin() + k).head(c) = shared_base.row(k);
  for (Lang l : {Lang::Hi, Lang::Es}) {
    const auto& ch = gt.channel(l);
    m.E_.row(m.vocab_.directive(l)) =
        cfg.directive_gain * embed_coords(d, ch.cue_coords, Vec::Constant(4, 0.5)).transpose();
  }

  // layers
  const int H = cfg.d_ff + 2 * kChannelSlots;
  m.layers_.resize(cfg.L);
  for (int l = 1; l <= cfg.L; ++l) {
    LayerWeights& lw = m.layers_[l - 1];
    lw.W_in = Mat::Zero(H, d);
    lw.b_in = Vec::Zero(H);
    lw.W_out = Mat::Zero(d, H);
    for (int u = 0; u < cfg.d_ff; ++u) {
      for (int i = 0; i < c; ++i) {
        lw.W_in(u, i) = nd(rng) / std::sqrt(double(c));
        lw.W_out(i, u) = nd(rng) * cfg.content_mix / std::sqrt(double(cfg.d_ff));
      }
      lw.b_in[u] = 0.1 * nd(rng);
    }
    for (Lang lang : {Lang::Hi, Lang::Es}) {
      ChannelTruth& ch = (lang == Lang::Hi) ? gt.hi : gt.es;
      const int s0 = cfg.d_ff + (lang == Lang::Hi ? 0 : kChannelSlots);
      const Vec& v = ch.v_star;
      auto pair = [&](const Vec& read, const Vec& write, int slot) {
        lw.W_in.row(s0 + slot) = read.transpose();
        lw.W_out.col(s0 + slot) = write;
        lw.W_in.row(s0 + slot + 1) = -read.transpose();
        lw.W_out.col(s0 + slot + 1) = -write;
      };
      if (l == cfg.window_lo) {
        Vec ones_c = embed_coords(d, ch.cue_coords, Vec::Constant(4, 1.0));
        lw.W_in.row(s0) = cfg.detector_kappa * ones_c.transpose();
        lw.b_in[s0] = -cfg.detector_theta;
        lw.W_out.col(s0) = v;
        lw.W_in.row(s0 + 1) = cfg.detector_kappa * ones_c.transpose();
        lw.b_in[s0 + 1] = -cfg.detector_theta - cfg.detector_cap;
        lw.W_out.col(s0 + 1) = -v;
        pair(v, -v, 2);  // clear any incoming v*
        for (int k = 0; k < 4; ++k) {
          Vec e = Vec::Zero(d);
          e[ch.cue_coords[k]] = 1.0;
          pair(e, -e, 4 + 2 * k);  // consume the cue
        }
        ch.channel_units[l - 1] = {s0, s0 + 1, s0 + 2, s0 + 3};
      } else if (l > cfg.window_lo && l <= cfg.window_hi) {
        pair(v, (cfg.amp - 1.0) * v, 0);
        ch.channel_units[l - 1] = {s0, s0 + 1};
      } else if (l == cfg.window_hi + 1) {
        pair(v, cfg.commit_gain * ch.o_star - v, 0);
        ch.channel_units[l - 1] = {s0, s0 + 1};
      }
    }
  }

  // unembedding
  Vec q(c);
  for (int i = 0; i < c; ++i) q[i] = nd(rng) * cfg.topic_pref;
  m.U_ = Mat::Zero(V, d);
  m.bias_ = Vec::Zero(V);
  const Vec hi_dir = cfg.readout * (gt.hi.v_star + gt.hi.o_star);
  const Vec es_dir = cfg.readout * (gt.es.v_star + gt.es.o_star);
  for (int k = 0; k < cfg.n_words; ++k) {
    int te = m.vocab_.word(Lang::En, k), th = m.vocab_.word(Lang::Hi, k), ts = m.vocab_.word(Lang::Es, k);
    for (int t : {te, th, ts}) m.U_.row(t).head(c) = cfg.content_readout * base.row(k);
    m.U_.row(te).head(c) += q.transpose();
    m.U_.row(th) += hi_dir.transpose();
    m.U_.row(ts) += es_dir.transpose();
    m.bias_[te] = cfg.bias_en;
    m.bias_[ts] = cfg.bias_es;
  }
  for (int k = 0; k < cfg.n_shared; ++k) {
    int t = m.vocab_.shared_begin() + k;
    m.U_.row(t).head(c) = cfg.content_readout * shared_base.row(k);
    m.bias_[t] = cfg.bias_shared;
  }
  for (Lang l : {Lang::Hi, Lang::Es}) m.bias_[m.vocab_.directive(l)] = -30.0;
  return m;
}

Vec Model::embed_context(const std::vector<int>& ctx) const {
  if (ctx.empty()) throw ConfigError("empty context");
  if (static_cast<int>(ctx.size()) > cfg_.max_context)
    throw ContextOverflow("context length " + std::to_string(ctx.size()) + " exceeds max_context " +
                          std::to_string(cfg_.max_context));
  Vec h = Vec::Zero(cfg_.d);
  double wsum = 0.0;
  for (int tok : ctx) {
    if (tok < 0 || tok >= vocab_size()) throw std::out_of_range("token id");
    h = cfg_.decay * h + E_.row(tok).transpose();
    wsum = cfg_.decay * wsum + 1.0;
  }
  return h / wsum;
}

void Model::block(int layer, Vec& h, int step, const Hooks* hooks) const {
  const LayerWeights& lw = layers_[layer - 1];
  Vec a = (lw.W_in * h + lw.b_in).cwiseMax(0.0);
  if (hooks && hooks->ffn) hooks->ffn(layer, step, a);
  h += lw.W_out * a;
  if (hooks && hooks->residual) hooks->residual(layer, step, h);
}

Vec Model::logits(const Vec& h_final, int step, const Hooks* hooks) const {
  Vec z = U_ * h_final + bias_;
  if (hooks && hooks->logits) hooks->logits(step, z);
  return z;
}

Vec Model::forward(const std::vector<int>& ctx, int step, const Hooks* hooks,
                   std::vector<Vec>* residuals) const {
  Vec h = embed_context(ctx);
  if (residuals) {
    residuals->assign(cfg_.L + 1, Vec());
    (*residuals)[0] = h;
  }
  for (int l = 1; l <= cfg_.L; ++l) {
    block(l, h, step, hooks);
    if (residuals) (*residuals)[l] = h;
  }
  return logits(h, step, hooks);
}

Vec Model::forward_from(int layer, Vec h, int step, const Hooks* hooks) const {
  for (int l = layer + 1; l <= cfg_.L; ++l) block(l, h, step, hooks);
  return logits(h, step, hooks);
}

std::string Model::weights_sha256() const {
  std::string bytes;
  auto add = [&](const auto& mtx) {
    bytes.append(reinterpret_cast<const char*>(mtx.data()), sizeof(double) * mtx.size());
  };
  add(E_);
  for (const auto& lw : layers_) {
    add(lw.W_in);
    add(lw.b_in);
    add(lw.W_out);
  }
  add(U_);
  add(bias_);
  return sha256_hex(bytes);
}

std::vector<Vec> teacher_forced_logits(const Model& m, const std::vector<int>& prompt,
                                       const std::vector<int>& prefix, int n_steps,
                                       const Hooks* hooks) {
  if (static_cast<int>(prefix.size()) < n_steps - 1) throw ConfigError("prefix shorter than horizon");
  std::vector<int> ctx = prompt;
  std::vector<Vec> out;
  out.reserve(n_steps);
  for (int t = 1; t <= n_steps; ++t) {
    out.push_back(m.forward(ctx, t, hooks));
    if (t < n_steps) ctx.push_back(prefix[t - 1]);
  }
  return out;
}

std::vector<int> greedy_decode(const Model& m, const std::vector<int>& prompt, int n_steps,
                               const Hooks* hooks) {
  std::vector<int> ctx = prompt;
  std::vector<int> out;
  for (int t = 1; t <= n_steps; ++t) {
    int tok = argmax(m.forward(ctx, t, hooks));
    out.push_back(tok);
    ctx.push_back(tok);
  }
  return out;
}

Vec softmax(const Vec& logits) {
  double mx = logits.maxCoeff();
  Vec p = (logits.array() - mx).exp();
  return p / p.sum();
}

int argmax(const Vec& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

}  // namespace foxp2
