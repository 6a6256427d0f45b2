#include "tactis/model/tactis.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tactis/data/csv_io.hpp"
#include "tactis/error.hpp"

namespace tactis::model {

namespace {
constexpr const char* kCheckpointMagic = "tactis-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

WindowLayout layout_of(const data::TimeSeriesBatch& window) {
  WindowLayout out;
  for (std::size_t k = 0; k < window.num_series * window.length; ++k)
    (window.mask[k] ? out.observed : out.missing).push_back(k);
  return out;
}

TactisModel::TactisModel(const Config& config, std::size_t num_covariates, std::vector<int> series_ids,
                         std::uint64_t seed)
    : config_(config), num_covariates_(num_covariates), series_ids_(std::move(series_ids)) {
  config_.validate();
  if (series_ids_.empty()) throw DataError("model needs at least one series");
  Rng rng = Rng(seed).split("init");
  const std::size_t d = config_.encoder.embed_dim;
  encoder_ = Encoder::create(params_, config_.encoder, num_covariates_, series_ids_.size(), rng);
  flow_ = MarginalFlow::create(params_, config_.flow, d, config_.copula.mlp_dim, config_.copula.mlp_layers, rng);
  copula_ = AttentionalCopula::create(params_, config_.copula, d, rng);
}

std::vector<std::size_t> TactisModel::embedding_ids(const data::TimeSeriesBatch& window) const {
  std::vector<std::size_t> out;
  out.reserve(window.num_series);
  for (int id : window.series_ids) {
    const auto it = std::find(series_ids_.begin(), series_ids_.end(), id);
    if (it == series_ids_.end())
      throw DataError("series id " + std::to_string(id) + " was not part of the training data");
    out.push_back(static_cast<std::size_t>(it - series_ids_.begin()));
  }
  return out;
}

Tensor TactisModel::log_likelihood(const std::vector<const data::TimeSeriesBatch*>& windows,
                                   const std::vector<std::vector<std::size_t>>& permutations,
                                   Rng* dropout_rng) const {
  if (windows.empty() || windows.size() != permutations.size())
    throw DataError("log_likelihood: one permutation per window expected");
  bool same = true;
  for (const auto* w : windows)
    same = same && w->num_series == windows[0]->num_series && w->length == windows[0]->length &&
           w->mask == windows[0]->mask;
  if (same) return log_likelihood_group(windows, permutations, dropout_rng);
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < windows.size(); ++b)
    parts.push_back(log_likelihood_group({windows[b]}, {permutations[b]}, dropout_rng));
  return ad::concat(parts, 0);
}

Tensor TactisModel::log_likelihood_group(const std::vector<const data::TimeSeriesBatch*>& windows,
                                         const std::vector<std::vector<std::size_t>>& permutations,
                                         Rng* dropout_rng) const {
  const std::size_t bsz = windows.size();
  const std::size_t nl = windows[0]->num_series * windows[0]->length;
  const std::size_t d = config_.encoder.embed_dim;
  const WindowLayout layout = layout_of(*windows[0]);
  const std::size_t no = layout.observed.size(), nm = layout.missing.size();
  if (nm == 0) throw DataError("log_likelihood: window has no missing tokens");

  std::vector<std::vector<std::size_t>> ids;
  std::vector<double> x(bsz * nl);
  std::vector<std::size_t> obs_idx, mis_idx;
  for (std::size_t b = 0; b < bsz; ++b) {
    ids.push_back(embedding_ids(*windows[b]));
    std::copy(windows[b]->values.begin(), windows[b]->values.end(), x.begin() + static_cast<std::ptrdiff_t>(b * nl));
    for (std::size_t k : layout.observed) obs_idx.push_back(b * nl + k);
    const auto& perm = permutations[b];
    if (perm.size() != nm) throw DataError("log_likelihood: permutation size differs from missing-token count");
    std::vector<std::uint8_t> seen(nm, 0);
    for (std::size_t p : perm) {
      if (p >= nm || seen[p]) throw DataError("log_likelihood: invalid permutation");
      seen[p] = 1;
      mis_idx.push_back(b * nl + layout.missing[p]);
    }
  }

  Tensor z = ad::reshape(encoder_.encode(windows, ids, dropout_rng), {bsz * nl, d});
  const FlowOutput f = flow_.forward(z, Tensor::constant({bsz * nl}, std::move(x)));

  Tensor z_obs, u_obs;
  if (no > 0) {
    z_obs = ad::reshape(ad::index_select(z, obs_idx), {bsz, no, d});
    u_obs = ad::reshape(ad::index_select(f.u, obs_idx), {bsz, no});
  }
  Tensor z_mis = ad::reshape(ad::index_select(z, mis_idx), {bsz, nm, d});
  Tensor u_mis = ad::reshape(ad::index_select(f.u, mis_idx), {bsz, nm});
  Tensor log_f = ad::sum(ad::reshape(ad::index_select(f.log_pdf, mis_idx), {bsz, nm}), 1);
  return copula_.log_density(z_obs, u_obs, z_mis, u_mis) + log_f;
}

TactisModel::Draws TactisModel::sample(const data::TimeSeriesBatch& window, std::size_t num_samples, Rng& rng,
                                       bool invert) const {
  ad::NoGradScope no_grad;
  const WindowLayout layout = layout_of(window);
  const std::size_t nl = window.num_series * window.length, d = config_.encoder.embed_dim;
  const std::size_t no = layout.observed.size(), nm = layout.missing.size();
  if (nm == 0) throw DataError("sample: window has no missing tokens");

  Draws out;
  out.num_samples = num_samples;
  out.missing = layout.missing;
  const auto perm = rng.permutation(nm);

  Tensor z = ad::reshape(encoder_.encode({&window}, {embedding_ids(window)}), {nl, d});
  Tensor raw = flow_.raw_params(z);
  const FlowOutput f = flow_forward(raw, Tensor::constant({nl}, window.values), config_.flow.layers,
                                    config_.flow.hidden_dim);
  std::vector<std::size_t> mis_idx(nm);
  for (std::size_t k = 0; k < nm; ++k) mis_idx[k] = layout.missing[perm[k]];
  Tensor z_obs, u_obs;
  if (no > 0) {
    z_obs = ad::index_select(z, layout.observed);
    u_obs = ad::index_select(f.u, layout.observed);
  }
  const auto u_perm = copula_.sample(z_obs, u_obs, ad::index_select(z, mis_idx), num_samples, rng);

  out.u.assign(num_samples * nm, 0.0);
  for (std::size_t s = 0; s < num_samples; ++s)
    for (std::size_t k = 0; k < nm; ++k) out.u[s * nm + perm[k]] = u_perm[s * nm + k];
  if (!invert) return out;

  const std::size_t r = flow_.raw_size();
  std::vector<FlowParams> params;
  params.reserve(nm);
  for (std::size_t k = 0; k < nm; ++k)
    params.push_back(FlowParams::from_raw(raw.data().subspan(layout.missing[k] * r, r), config_.flow.layers,
                                          config_.flow.hidden_dim));
  out.x.assign(num_samples * nm, 0.0);
  for (std::size_t s = 0; s < num_samples; ++s)
    for (std::size_t k = 0; k < nm; ++k) out.x[s * nm + k] = flow_inverse_cdf(out.u[s * nm + k], params[k]);
  return out;
}

std::vector<std::vector<double>> TactisModel::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : params_.entries()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void TactisModel::restore(const std::vector<std::vector<double>>& values) {
  auto& entries = params_.entries();
  if (values.size() != entries.size()) throw Error("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    Tensor t = entries[i].second;
    if (values[i].size() != t.numel()) throw Error("restore: size mismatch for " + entries[i].first);
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

void save_checkpoint(const std::filesystem::path& path, const TactisModel& model, const CheckpointInfo& info) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "epoch " << info.epoch << '\n';
  out << "validation_loss " << data::format_double(info.validation_loss) << '\n';
  out << "num_covariates " << model.num_covariates() << '\n';
  out << "series_ids";
  for (int id : model.series_ids()) out << ' ' << id;
  out << '\n';
  const std::string cfg = model.config().to_text();
  out << "config " << std::count(cfg.begin(), cfg.end(), '\n') << '\n' << cfg;
  out << "tensors " << model.parameters().entries().size() << '\n';
  for (const auto& [name, t] : model.parameters().entries()) {
    out << "tensor " << name << ' ' << t.dim();
    for (std::size_t s : t.shape()) out << ' ' << s;
    out << '\n';
    for (std::size_t i = 0; i < t.numel(); ++i) out << (i ? " " : "") << data::format_double(t[i]);
    out << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

TactisModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open checkpoint");
  auto fail = [&](const std::string& msg) -> DataError { return DataError(path.string() + ": " + msg); };
  auto expect = [&](const std::string& word) {
    std::string w;
    if (!(in >> w) || w != word) throw fail("malformed checkpoint, expected '" + word + "'");
  };
  auto read_double = [&]() {
    std::string tok;
    in >> tok;
    double v = 0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
      if (tok == "nan") return std::numeric_limits<double>::quiet_NaN();
      throw fail("malformed number '" + tok + "'");
    }
    return v;
  };

  expect(kCheckpointMagic);
  int version = 0;
  in >> version;
  if (version != kCheckpointVersion) throw fail("unsupported checkpoint version " + std::to_string(version));
  CheckpointInfo meta;
  expect("epoch");
  in >> meta.epoch;
  expect("validation_loss");
  meta.validation_loss = read_double();
  expect("num_covariates");
  std::size_t num_cov = 0;
  in >> num_cov;
  expect("series_ids");
  std::string line;
  std::getline(in, line);
  std::vector<int> ids;
  {
    std::istringstream ss(line);
    int id;
    while (ss >> id) ids.push_back(id);
  }
  expect("config");
  std::size_t cfg_lines = 0;
  in >> cfg_lines;
  std::getline(in, line);
  std::string cfg_text;
  for (std::size_t i = 0; i < cfg_lines && std::getline(in, line); ++i) cfg_text += line + "\n";
  const Config cfg = parse_config(cfg_text, path.string());

  TactisModel model(cfg, num_cov, ids, 0);
  expect("tensors");
  std::size_t count = 0;
  in >> count;
  auto& entries = model.parameters().entries();
  if (count != entries.size()) throw fail("tensor count does not match the architecture");
  for (std::size_t i = 0; i < count; ++i) {
    expect("tensor");
    std::string name;
    std::size_t rank = 0;
    in >> name >> rank;
    ad::Shape shape(rank);
    for (auto& s : shape) in >> s;
    Tensor t = entries[i].second;
    if (name != entries[i].first || shape != t.shape())
      throw fail("tensor " + name + " " + ad::to_string(shape) + " does not match " + entries[i].first + " " +
                 ad::to_string(t.shape()));
    auto dst = t.mutable_data();
    for (auto& v : dst) v = read_double();
  }
  if (!in) throw fail("truncated checkpoint");
  if (info) *info = meta;
  return model;
}

}  // namespace tactis::model
