#include "ptedit/denoiser.hpp"

#include "denoiser_tape.hpp"

#include "ptedit/error.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace ptedit {

GuidanceCondition
GuidanceCondition::reconstruction(const PointCloud& x)
{
  return GuidanceCondition{ full_condition(x), kNullPrompt };
}

GuidanceCondition
GuidanceCondition::inpainting(const PointCloud& x, const EditMask& mask, const TokenIds& prompt)
{
  return GuidanceCondition{ apply_mask(x, mask), prompt };
}

bool
GuidanceCondition::is_reconstruction() const
{
  return prompt == kNullPrompt && cloud.flags.isZero(0.0);
}

std::size_t
DenoiserConfig::parameter_count() const
{
  const std::size_t e = embed;
  return vocab * e + e * e + 21 * e + 3 + blocks * (8 * e * e + 11 * e);
}

namespace {

// Tensor layout: globals, then kPerBlock tensors per block, then the output head.
enum Global : std::size_t { kTok, kInW, kInB, kPairW, kEntity, kTimeW, kTimeB, kNumGlobal };
enum BlockParam : std::size_t {
  kLn1G, kLn1B, kQW, kQB, kKW, kKB, kVW, kVB, kOW, kOB, kLn2G, kLn2B, kFf1W, kFf1B, kFf2W, kFf2B, kPerBlock
};
enum Head : std::size_t { kLnfG, kLnfB, kOutW, kOutB, kNumHead };

constexpr double kLnEps = 1e-5;

std::size_t
block_index(std::size_t block, BlockParam p)
{
  return kNumGlobal + block * kPerBlock + p;
}

std::size_t
head_index(const DenoiserConfig& c, Head h)
{
  return kNumGlobal + c.blocks * kPerBlock + h;
}

template <typename S>
Matrix<S>
layer_norm(const Matrix<S>& x, const Matrix<S>& g, const Matrix<S>& b, LnCache<S>& cache)
{
  const auto n = x.cols();
  const Eigen::Matrix<S, Eigen::Dynamic, 1> mean = x.rowwise().mean();
  cache.xhat = x.colwise() - mean;
  const Eigen::Matrix<S, Eigen::Dynamic, 1> var = cache.xhat.rowwise().squaredNorm() / static_cast<S>(n);
  cache.inv_std = (var.array() + static_cast<S>(kLnEps)).rsqrt();
  cache.xhat.array().colwise() *= cache.inv_std.array();
  Matrix<S> y = cache.xhat.array().rowwise() * g.row(0).array();
  y.rowwise() += b.row(0);
  return y;
}

template <typename S>
Matrix<S>
layer_norm_backward(const Matrix<S>& dy, const Matrix<S>& g, const LnCache<S>& cache, Matrix<S>& dg, Matrix<S>& db)
{
  dg.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Matrix<S> dxhat = dy.array().rowwise() * g.row(0).array();
  const S inv_n = S(1) / static_cast<S>(dy.cols());
  const Eigen::Matrix<S, Eigen::Dynamic, 1> m1 = dxhat.rowwise().sum() * inv_n;
  const Eigen::Matrix<S, Eigen::Dynamic, 1> m2 = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix() * inv_n;
  Matrix<S> dx = dxhat;
  dx.colwise() -= m1;
  dx.array() -= cache.xhat.array().colwise() * m2.array();
  dx.array().colwise() *= cache.inv_std.array();
  return dx;
}

template <typename S>
Matrix<S>
affine(const Matrix<S>& x, const Matrix<S>& w, const Matrix<S>& b)
{
  Matrix<S> y(x.rows(), w.cols());
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
  return y;
}

// Tanh approximation of GELU.
constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <typename S>
Matrix<S>
gelu(const Matrix<S>& x)
{
  const auto u = (static_cast<S>(kGeluC) * (x.array() + static_cast<S>(kGeluA) * x.array().cube())).tanh();
  return (static_cast<S>(0.5) * x.array() * (S(1) + u)).matrix();
}

template <typename S>
Matrix<S>
gelu_backward(const Matrix<S>& x, const Matrix<S>& dy)
{
  const auto x2 = x.array().square();
  const Matrix<S> u = (static_cast<S>(kGeluC) * (x.array() + static_cast<S>(kGeluA) * x.array() * x2)).tanh().matrix();
  const auto du = static_cast<S>(kGeluC) * (S(1) + static_cast<S>(3 * kGeluA) * x2);
  const auto d = static_cast<S>(0.5) * (S(1) + u.array()) +
                 static_cast<S>(0.5) * x.array() * (S(1) - u.array().square()) * du;
  return (dy.array() * d).matrix();
}

template <typename S>
Matrix<S>
time_features(int t, std::size_t dim)
{
  Matrix<S> f(1, static_cast<Eigen::Index>(dim));
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    f(0, static_cast<Eigen::Index>(i)) = static_cast<S>(std::sin(t * freq));
    f(0, static_cast<Eigen::Index>(half + i)) = static_cast<S>(std::cos(t * freq));
  }
  if (dim % 2 == 1)
    f(0, static_cast<Eigen::Index>(dim - 1)) = S(0);
  return f;
}

template <typename S>
void
fill_normal(Matrix<S>& m, double stddev, std::mt19937_64& rng)
{
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<S>(n(rng));
}

} // namespace

template <typename S>
DenoiserT<S>::DenoiserT(const DenoiserConfig& config) : config_(config)
{
  if (config.embed == 0 || config.heads == 0 || config.embed % config.heads != 0 || config.vocab == 0)
    throw Error(ErrorKind::InvalidParams, "embedding width must be a positive multiple of the head count");
  const auto e = static_cast<Eigen::Index>(config.embed);
  const auto v = static_cast<Eigen::Index>(config.vocab);
  const auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    tensors_.push_back({ std::move(name), Matrix<S>::Zero(rows, cols) });
  };
  add("tok", v, e);
  add("in.w", 6, e);
  add("in.b", 1, e);
  add("pair.w", 6, e);
  add("entity", 2, e);
  add("time.w", e, e);
  add("time.b", 1, e);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    add(p + "ln1.g", 1, e);
    add(p + "ln1.b", 1, e);
    for (const char* n : { "q", "k", "v", "o" }) {
      add(p + n + ".w", e, e);
      add(p + n + ".b", 1, e);
    }
    add(p + "ln2.g", 1, e);
    add(p + "ln2.b", 1, e);
    add(p + "ff1.w", e, 2 * e);
    add(p + "ff1.b", 1, 2 * e);
    add(p + "ff2.w", 2 * e, e);
    add(p + "ff2.b", 1, e);
  }
  add("out.ln.g", 1, e);
  add("out.ln.b", 1, e);
  add("out.w", e, 3);
  add("out.b", 1, 3);
}

template <typename S>
DenoiserT<S>
DenoiserT<S>::initialized(const DenoiserConfig& config, std::uint64_t seed)
{
  DenoiserT den(config);
  std::mt19937_64 rng(seed);
  auto& ts = den.tensors_;
  const double e = static_cast<double>(config.embed);
  fill_normal(ts[kTok].value, 1.0, rng);
  fill_normal(ts[kInW].value, 1.0 / std::sqrt(6.0), rng);
  fill_normal(ts[kPairW].value, 1.0 / std::sqrt(6.0), rng);
  fill_normal(ts[kEntity].value, 0.5, rng);
  fill_normal(ts[kTimeW].value, 1.0 / std::sqrt(e), rng);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    ts[block_index(b, kLn1G)].value.setOnes();
    ts[block_index(b, kLn2G)].value.setOnes();
    for (auto p : { kQW, kKW, kVW, kOW, kFf1W })
      fill_normal(ts[block_index(b, p)].value, 1.0 / std::sqrt(e), rng);
    fill_normal(ts[block_index(b, kFf2W)].value, 1.0 / std::sqrt(2.0 * e), rng);
  }
  ts[head_index(config, kLnfG)].value.setOnes();
  fill_normal(ts[head_index(config, kOutW)].value, 0.1 / std::sqrt(e), rng);
  return den;
}

template <typename S>
std::size_t
DenoiserT<S>::parameter_count() const
{
  std::size_t n = 0;
  for (const auto& t : tensors_)
    n += static_cast<std::size_t>(t.value.size());
  return n;
}

template <typename S>
bool
DenoiserT<S>::all_finite() const
{
  for (const auto& t : tensors_)
    if (!t.value.allFinite())
      return false;
  return true;
}

template <typename S>
std::vector<Matrix<S>>
DenoiserT<S>::zero_grads() const
{
  std::vector<Matrix<S>> g;
  g.reserve(tensors_.size());
  for (const auto& t : tensors_)
    g.push_back(Matrix<S>::Zero(t.value.rows(), t.value.cols()));
  return g;
}

template <typename S>
Matrix<S>
DenoiserT<S>::forward(const Matrix<S>& x_t, int t, const GuidanceCondition& cond) const
{
  thread_local Tape tape; // reused buffers; allocation dominates otherwise
  return forward(x_t, t, cond, tape);
}

template <typename S>
Matrix<S>
DenoiserT<S>::forward(const Matrix<S>& x_t, int t, const GuidanceCondition& cond, Tape& tape) const
{
  const auto k = x_t.rows();
  if (x_t.cols() != 3 || cond.cloud.coords.rows() != k || cond.cloud.flags.rows() != k)
    throw Error(ErrorKind::ShapeMismatch, "denoiser input and condition differ in shape");
  for (auto id : cond.prompt)
    if (id >= config_.vocab)
      throw Error(ErrorKind::ShapeMismatch, "token id outside the embedding table");

  const auto& P = tensors_;
  const auto e = static_cast<Eigen::Index>(config_.embed);
  const auto heads = static_cast<Eigen::Index>(config_.heads);
  const Eigen::Index dh = e / heads;
  const Eigen::Index m = k + static_cast<Eigen::Index>(kPromptLength) + 1; // context rows
  const Eigen::Index n = k + m;                                            // attended rows
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  tape.x_t = x_t;
  tape.c6.resize(k, 6);
  tape.c6.leftCols(3) = cond.cloud.coords.template cast<S>();
  tape.c6.rightCols(3) = cond.cloud.flags.template cast<S>();
  tape.prompt = cond.prompt;
  tape.time_feat = time_features<S>(t, config_.embed);

  // Noisy tokens: coordinate projection plus the index-aligned condition point.
  Matrix<S> h(k, e);
  h.noalias() = x_t * P[kInW].value.topRows(3);
  h.noalias() += tape.c6 * P[kPairW].value;
  h.rowwise() += P[kInB].value.row(0) + P[kEntity].value.row(0);

  Matrix<S> ctx(m, e);
  ctx.topRows(k).noalias() = tape.c6 * P[kInW].value;
  ctx.topRows(k).rowwise() += P[kInB].value.row(0) + P[kEntity].value.row(1);
  for (std::size_t j = 0; j < kPromptLength; ++j)
    ctx.row(k + static_cast<Eigen::Index>(j)) = P[kTok].value.row(cond.prompt[j]);
  ctx.row(m - 1).noalias() = tape.time_feat * P[kTimeW].value;
  ctx.row(m - 1) += P[kTimeB].value.row(0);

  tape.blocks.resize(config_.blocks);
  Matrix<S> z(n, e);
  z.bottomRows(m) = ctx;
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    auto& bt = tape.blocks[b];
    const auto W = [&](BlockParam p) -> const Matrix<S>& { return P[block_index(b, p)].value; };

    z.topRows(k) = h;
    bt.a = layer_norm(z, W(kLn1G), W(kLn1B), bt.ln1);
    bt.q = affine<S>(bt.a.topRows(k), W(kQW), W(kQB));
    bt.k = affine<S>(bt.a, W(kKW), W(kKB));
    bt.v = affine<S>(bt.a, W(kVW), W(kVB));
    bt.o.resize(k, e);
    bt.p.resize(static_cast<std::size_t>(heads));
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      auto& p = bt.p[static_cast<std::size_t>(hd)];
      p.resize(k, n);
      p.noalias() = bt.q.middleCols(hd * dh, dh) * bt.k.middleCols(hd * dh, dh).transpose();
      p *= scale;
      const Eigen::Matrix<S, Eigen::Dynamic, 1> mx = p.rowwise().maxCoeff();
      p.colwise() -= mx;
      p = p.array().exp();
      const Eigen::Matrix<S, Eigen::Dynamic, 1> inv_sum = p.rowwise().sum().cwiseInverse();
      p.array().colwise() *= inv_sum.array();
      bt.o.middleCols(hd * dh, dh).noalias() = p * bt.v.middleCols(hd * dh, dh);
    }
    h.noalias() += bt.o * W(kOW);
    h.rowwise() += W(kOB).row(0);

    bt.u = layer_norm(h, W(kLn2G), W(kLn2B), bt.ln2);
    bt.pre = affine(bt.u, W(kFf1W), W(kFf1B));
    bt.f = gelu(bt.pre);
    h.noalias() += bt.f * W(kFf2W);
    h.rowwise() += W(kFf2B).row(0);
  }

  tape.hf = layer_norm(h, P[head_index(config_, kLnfG)].value, P[head_index(config_, kLnfB)].value, tape.lnf);
  return affine(tape.hf, P[head_index(config_, kOutW)].value, P[head_index(config_, kOutB)].value);
}

template <typename S>
void
DenoiserT<S>::backward(const Tape& tape, const Matrix<S>& d_out, std::vector<Matrix<S>>& grads) const
{
  const auto& P = tensors_;
  const auto k = tape.x_t.rows();
  const auto e = static_cast<Eigen::Index>(config_.embed);
  const auto heads = static_cast<Eigen::Index>(config_.heads);
  const Eigen::Index dh = e / heads;
  const Eigen::Index m = k + static_cast<Eigen::Index>(kPromptLength) + 1;
  const Eigen::Index n = k + m;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  const auto hi = [&](Head h) { return head_index(config_, h); };
  grads[hi(kOutW)].noalias() += tape.hf.transpose() * d_out;
  grads[hi(kOutB)].row(0) += d_out.colwise().sum();
  Matrix<S> dhf = d_out * P[hi(kOutW)].value.transpose();
  Matrix<S> dh_ = layer_norm_backward(dhf, P[hi(kLnfG)].value, tape.lnf, grads[hi(kLnfG)], grads[hi(kLnfB)]);

  Matrix<S> dctx = Matrix<S>::Zero(m, e);
  Matrix<S> da(n, e);
  Matrix<S> dq(k, e), dk(n, e), dv(n, e);
  Matrix<S> dp;
  for (std::size_t bi = config_.blocks; bi-- > 0;) {
    const auto& bt = tape.blocks[bi];
    const auto W = [&](BlockParam p) -> const Matrix<S>& { return P[block_index(bi, p)].value; };
    const auto G = [&](BlockParam p) -> Matrix<S>& { return grads[block_index(bi, p)]; };

    // feedforward residual
    G(kFf2W).noalias() += bt.f.transpose() * dh_;
    G(kFf2B).row(0) += dh_.colwise().sum();
    Matrix<S> df = dh_ * W(kFf2W).transpose();
    const Matrix<S> dpre = gelu_backward(bt.pre, df);
    G(kFf1W).noalias() += bt.u.transpose() * dpre;
    G(kFf1B).row(0) += dpre.colwise().sum();
    const Matrix<S> du = dpre * W(kFf1W).transpose();
    dh_ += layer_norm_backward(du, W(kLn2G), bt.ln2, G(kLn2G), G(kLn2B));

    // attention residual
    G(kOW).noalias() += bt.o.transpose() * dh_;
    G(kOB).row(0) += dh_.colwise().sum();
    const Matrix<S> d_o = dh_ * W(kOW).transpose();
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      const auto& p = bt.p[static_cast<std::size_t>(hd)];
      const auto cols = Eigen::seqN(hd * dh, dh);
      dp.noalias() = d_o(Eigen::all, cols) * bt.v(Eigen::all, cols).transpose();
      dv(Eigen::all, cols).noalias() = p.transpose() * d_o(Eigen::all, cols);
      const Eigen::Matrix<S, Eigen::Dynamic, 1> rs = (dp.array() * p.array()).rowwise().sum();
      dp.colwise() -= rs;
      dp.array() *= p.array() * scale;
      dq(Eigen::all, cols).noalias() = dp * bt.k(Eigen::all, cols);
      dk(Eigen::all, cols).noalias() = dp.transpose() * bt.q(Eigen::all, cols);
    }
    G(kQW).noalias() += bt.a.topRows(k).transpose() * dq;
    G(kQB).row(0) += dq.colwise().sum();
    G(kKW).noalias() += bt.a.transpose() * dk;
    G(kKB).row(0) += dk.colwise().sum();
    G(kVW).noalias() += bt.a.transpose() * dv;
    G(kVB).row(0) += dv.colwise().sum();
    da.noalias() = dk * W(kKW).transpose();
    da.noalias() += dv * W(kVW).transpose();
    da.topRows(k).noalias() += dq * W(kQW).transpose();
    const Matrix<S> dz = layer_norm_backward(da, W(kLn1G), bt.ln1, G(kLn1G), G(kLn1B));
    dh_ += dz.topRows(k);
    dctx += dz.bottomRows(m);
  }

  // embeddings
  grads[kInW].topRows(3).noalias() += tape.x_t.transpose() * dh_;
  grads[kPairW].noalias() += tape.c6.transpose() * dh_;
  const auto dh_sum = dh_.colwise().sum();
  grads[kInB].row(0) += dh_sum;
  grads[kEntity].row(0) += dh_sum;

  const auto dc = dctx.topRows(k);
  grads[kInW].noalias() += tape.c6.transpose() * dc;
  const auto dc_sum = dc.colwise().sum();
  grads[kInB].row(0) += dc_sum;
  grads[kEntity].row(1) += dc_sum;
  for (std::size_t j = 0; j < kPromptLength; ++j)
    grads[kTok].row(tape.prompt[j]) += dctx.row(k + static_cast<Eigen::Index>(j));
  grads[kTimeW].noalias() += tape.time_feat.transpose() * dctx.row(m - 1);
  grads[kTimeB].row(0) += dctx.row(m - 1);
}

template class DenoiserT<float>;
template class DenoiserT<double>;

Points
predict_noise(const Denoiser& den, const Points& x_t, int t, const GuidanceCondition& cond)
{
  const Matrix<float> xf = x_t.cast<float>();
  return den.forward(xf, t, cond).cast<double>();
}

// Checkpoints -----------------------------------------------------------------

namespace {

// The head count does not show in any tensor shape, so it travels as a 1x1 tensor.
constexpr const char* kHeadsTensor = "meta.heads";

} // namespace

void
write_checkpoint(std::ostream& out, const Denoiser& den, std::uint64_t step)
{
  TensorFile file;
  file.step = step;
  file.tensors.push_back({ kHeadsTensor, Matrix<float>::Constant(1, 1, static_cast<float>(den.config().heads)) });
  for (const auto& t : den.tensors())
    file.tensors.push_back(t);
  write_tensor_file(out, file);
}

void
write_checkpoint(const std::filesystem::path& path, const Denoiser& den, std::uint64_t step)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  write_checkpoint(out, den, step);
}

Checkpoint
read_checkpoint(std::istream& in)
{
  auto file = read_tensor_file(in);
  auto& loaded = file.tensors;
  const auto mismatch = [](const std::string& what) { return Error(ErrorKind::CheckpointMismatch, what); };
  if (loaded.size() < 2 || loaded[0].name != kHeadsTensor || loaded[0].value.size() != 1 || loaded[1].name != "tok")
    throw mismatch("checkpoint does not start with the head count and token table");
  DenoiserConfig cfg;
  cfg.heads = static_cast<std::size_t>(loaded[0].value(0, 0));
  cfg.vocab = static_cast<std::size_t>(loaded[1].value.rows());
  cfg.embed = static_cast<std::size_t>(loaded[1].value.cols());
  cfg.blocks = (loaded.size() - 1 - kNumGlobal - kNumHead) / kPerBlock;
  if (cfg.vocab != Vocabulary::builtin().size())
    throw mismatch("token table has " + std::to_string(cfg.vocab) + " rows, vocabulary has " +
                   std::to_string(Vocabulary::builtin().size()));
  if (cfg.heads == 0 || cfg.embed % cfg.heads != 0)
    throw mismatch("head count does not divide the embedding width");
  Denoiser den(cfg);
  auto& ts = den.tensors();
  if (ts.size() + 1 != loaded.size())
    throw mismatch("unexpected tensor count");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto& src = loaded[i + 1];
    if (src.name != ts[i].name || src.value.rows() != ts[i].value.rows() || src.value.cols() != ts[i].value.cols())
      throw mismatch("tensor " + src.name + " does not match the expected layout");
    ts[i].value = std::move(src.value);
  }
  return Checkpoint{ std::move(den), file.step };
}

Checkpoint
read_checkpoint(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_checkpoint(in);
}

} // namespace ptedit
