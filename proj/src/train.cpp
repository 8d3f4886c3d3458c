#include "dmnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dmnet/config.hpp"
#include "dmnet/image_io.hpp"
#include "dmnet/ops.hpp"
#include "dmnet/weight_file.hpp"

namespace dmnet {

TrainConfig TrainConfig::defaults(Mode mode) {
  TrainConfig c;
  if (mode == Mode::SuperResolution) {
    c.model = ModelSpec::super_resolution();
    c.degradation.mode = DegradeMode::SuperResolution;
    c.losses = LossWeights::super_resolution();
    c.patch_size = 96;
  } else {
    c.model = ModelSpec::detail_enhance();
    c.degradation.mode = DegradeMode::Enhance;
    c.losses = LossWeights::detail_enhance();
    c.patch_size = 64;
  }
  c.schedule = scaled_schedule(1e-4, c.iterations);
  return c;
}

void TrainConfig::validate() const {
  model.validate();
  degradation.validate();
  losses.validate();
  if (iterations <= 0) throw std::invalid_argument("train.iterations must be > 0");
  if (batch_size <= 0) throw std::invalid_argument("train.batch_size must be > 0");
  if (checkpoint_every <= 0 || log_every <= 0) {
    throw std::invalid_argument("train.checkpoint_every and train.log_every must be > 0");
  }
  if (patch_size <= 0 || patch_size % degradation.scale != 0) {
    throw std::invalid_argument("train.patch_size must be a positive multiple of degradation.scale");
  }
  if (schedule.initial_lr <= 0 || schedule.halve_every <= 0 || schedule.num_halvings < 0) {
    throw std::invalid_argument("optim schedule must have lr > 0, halve_every > 0, num_halvings >= 0");
  }
  const bool sr_model = model.mode == Mode::SuperResolution;
  const bool sr_data = degradation.mode == DegradeMode::SuperResolution;
  if (sr_model != sr_data) {
    throw std::invalid_argument("degradation.mode sr pairs only with model.mode sr");
  }
  if (sr_model && degradation.scale != model.scale) {
    throw std::invalid_argument("degradation.scale must equal model.scale in sr mode");
  }
  if (!sr_model && patch_size % model.scale != 0) {
    throw std::invalid_argument("train.patch_size must be divisible by model.scale");
  }
  if (adversarial() && patch_size < 16) {
    throw std::invalid_argument("adversarial training needs train.patch_size >= 16");
  }
  if (losses.ssim > 0 && patch_size < SsimConstants::kWindow) {
    throw std::invalid_argument("ssim loss needs train.patch_size >= 11");
  }
}

Rng sample_rng(std::uint64_t seed, std::int64_t iteration, int sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(iteration) >> 32),
                    static_cast<std::uint32_t>(sample)};
  return Rng(seq);
}

std::vector<Tensorf> load_image_folder(const std::filesystem::path& dir,
                                       const std::function<void(const std::string&)>& warn) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Tensorf> images;
  for (const auto& f : files) {
    try {
      images.push_back(load_png(f));
    } catch (const std::exception& e) {
      if (warn) warn("skipping " + f.string() + ": " + e.what());
    }
  }
  return images;
}

namespace {

Tensorf crop(const Tensorf& img, int y0, int x0, int size) {
  auto out = Tensorf::zeros(Shape(1, 3, size, size));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(0, c, y, x) = img.at(0, c, y0 + y, x0 + x);
  return out;
}

Tensorf stack(const std::vector<Tensorf>& items) {
  const Shape& s = items.front().shape();
  std::vector<float> values;
  values.reserve(s.numel() * items.size());
  for (const auto& t : items) values.insert(values.end(), t.data().begin(), t.data().end());
  return Tensorf::from_vector(Shape(static_cast<int>(items.size()), s.c(), s.h(), s.w()),
                              std::move(values));
}

bool finite(double v) { return std::isfinite(v); }

Tensorf weighted_sum(Tape<float>& tape, const std::vector<std::pair<double, Tensorf>>& terms) {
  Tensorf total;
  for (const auto& [w, t] : terms) {
    auto scaled = ops::scalar_affine(tape, t, static_cast<float>(w), 0.0f);
    total = total.defined() ? ops::add(tape, total, scaled) : scaled;
  }
  return total;
}

void put_moments(ParamStore<float>& out, const std::string& prefix, const ParamStore<float>& params,
                 const AdamState& state) {
  if (state.m.size() != params.size()) return;
  const auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Shape& s = entries[i].tensor.shape();
    out.add(prefix + ".m/" + entries[i].name, Tensorf::from_vector(s, state.m[i]));
    out.add(prefix + ".v/" + entries[i].name, Tensorf::from_vector(s, state.v[i]));
  }
}

void get_moments(const ParamStore<float>& in, const std::string& prefix,
                 const ParamStore<float>& params, AdamState& state) {
  const auto& entries = params.entries();
  if (entries.empty() || !in.contains(prefix + ".m/" + entries.front().name)) {
    state.m.clear();
    state.v.clear();
    return;
  }
  state.m.assign(entries.size(), {});
  state.v.assign(entries.size(), {});
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& m = in.get(prefix + ".m/" + entries[i].name);
    const auto& v = in.get(prefix + ".v/" + entries[i].name);
    state.m[i].assign(m.data().begin(), m.data().end());
    state.v[i].assign(v.data().begin(), v.data().end());
  }
}

void copy_values(ParamStore<float>& dst, const ParamStore<float>& src, const std::string& prefix) {
  for (auto& e : dst.entries()) {
    const auto& s = src.get(prefix + e.name);
    if (s.shape() != e.tensor.shape()) {
      throw WeightFileError("checkpoint entry " + prefix + e.name + " has shape " +
                            s.shape().str() + ", expected " + e.tensor.shape().str());
    }
    std::copy(s.data().begin(), s.data().end(), e.tensor.data().begin());
  }
}

}  // namespace

Trainer::Trainer(TrainConfig config, std::vector<Tensorf> images)
    : config_(std::move(config)), images_(std::move(images)) {
  config_.validate();
  if (images_.empty()) throw std::invalid_argument("Trainer: no training images");
  for (const auto& img : images_) {
    if (img.shape().n() != 1 || img.shape().c() != 3) {
      throw ShapeError("Trainer: images must be [1,3,H,W], got " + img.shape().str());
    }
    if (img.shape().h() < config_.patch_size || img.shape().w() < config_.patch_size) {
      throw std::invalid_argument("Trainer: image " + img.shape().str() +
                                  " smaller than train.patch_size " +
                                  std::to_string(config_.patch_size));
    }
  }
  generator_ = build_generator(config_.model);
  if (config_.adversarial()) critic_ = build_critic(config_.model.seed + 0x9e3779b97f4a7c15ULL);
  if (config_.losses.perceptual > 0) extractor_ = FeatureExtractor<float>::random(config_.feature_seed);
  for (AdamState* s : {&gen_adam_, &critic_adam_}) {
    s->beta1 = config_.adam.beta1;
    s->beta2 = config_.adam.beta2;
    s->eps = config_.adam.eps;
  }
}

TrainingPair Trainer::batch(std::int64_t iteration) const {
  std::vector<Tensorf> inputs, targets;
  const int p = config_.patch_size;
  for (int b = 0; b < config_.batch_size; ++b) {
    Rng rng = sample_rng(config_.seed, iteration, b);
    const auto& img = images_[std::uniform_int_distribution<std::size_t>(0, images_.size() - 1)(rng)];
    const int y0 = std::uniform_int_distribution<int>(0, img.shape().h() - p)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, img.shape().w() - p)(rng);
    TrainingPair pair = make_pair(crop(img, y0, x0, p), config_.degradation, rng);
    inputs.push_back(std::move(pair.input));
    targets.push_back(std::move(pair.target));
  }
  return {stack(inputs), stack(targets)};
}

double Trainer::critic_step(const TrainingPair& pair) {
  Tape<float> off(false, config_.conv_algo);
  const Tensorf fake = generator_forward(off, generator_, config_.model, pair.input);
  Tape<float> tape(true, config_.conv_algo);
  auto c_real = critic_forward(tape, critic_, pair.target);
  auto c_fake = critic_forward(tape, critic_, fake);
  auto d_loss = rgan_losses(tape, c_real, c_fake).discriminator;
  const double value = d_loss.item();
  if (!finite(value)) {
    throw TrainingDiverged("non-finite critic loss at iteration " + std::to_string(iteration_ + 1));
  }
  critic_.zero_grad();
  tape.backward(d_loss);
  adam_step(critic_, critic_adam_, lr_at(config_.schedule, iteration_));
  return value;
}

StepStats Trainer::step() {
  StepStats stats;
  stats.iteration = iteration_ + 1;
  stats.lr = lr_at(config_.schedule, iteration_);
  const TrainingPair pair = batch(iteration_);
  if (config_.adversarial()) stats.critic = critic_step(pair);

  Tape<float> tape(true, config_.conv_algo);
  auto pred = generator_forward(tape, generator_, config_.model, pair.input);
  std::vector<std::pair<double, Tensorf>> terms;
  const LossWeights& w = config_.losses;
  if (w.fidelity > 0) {
    auto t = fidelity_loss(tape, pred, pair.target, config_.fidelity_kind);
    stats.fidelity = t.item();
    terms.emplace_back(w.fidelity, t);
  }
  if (w.ssim > 0) {
    auto t = ssim_loss(tape, pred, pair.target);
    stats.ssim = t.item();
    terms.emplace_back(w.ssim, t);
  }
  if (w.perceptual > 0) {
    auto t = perceptual_loss(tape, pred, pair.target, *extractor_);
    stats.perceptual = t.item();
    terms.emplace_back(w.perceptual, t);
  }
  if (w.adversarial > 0) {
    critic_.set_requires_grad(false);
    Tape<float> off(false, config_.conv_algo);
    auto c_real = critic_forward(off, critic_, pair.target);
    auto c_fake = critic_forward(tape, critic_, pred);
    critic_.set_requires_grad(true);
    auto t = rgan_losses(tape, c_real, c_fake).generator;
    stats.adversarial = t.item();
    terms.emplace_back(w.adversarial, t);
  }
  if (terms.empty()) throw std::invalid_argument("all loss weights are zero");
  auto total = weighted_sum(tape, terms);
  stats.total = total.item();
  if (!finite(stats.total)) {
    throw TrainingDiverged("non-finite generator loss at iteration " + std::to_string(stats.iteration));
  }
  generator_.zero_grad();
  tape.backward(total);
  adam_step(generator_, gen_adam_, stats.lr);
  ++iteration_;
  return stats;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::string tag = std::to_string(iteration_);
  save_weights(dir / ("weights_" + tag + ".dmbn"), generator_);
  ParamStore<float> state;
  for (const auto& e : critic_.entries()) state.add("critic/" + e.name, e.tensor);
  put_moments(state, "adam.gen", generator_, gen_adam_);
  put_moments(state, "adam.critic", critic_, critic_adam_);
  save_weights(dir / ("state_" + tag + ".dmbn"), state);
  std::ofstream f(dir / ("state_" + tag + ".txt"), std::ios::trunc);
  f << "iteration=" << iteration_ << '\n'
    << "gen_adam_step=" << gen_adam_.step << '\n'
    << "critic_adam_step=" << critic_adam_.step << '\n'
    << "weights=weights_" << tag << ".dmbn\n"
    << "state=state_" << tag << ".dmbn\n";
  if (!f) throw std::runtime_error("cannot write checkpoint state in " + dir.string());
}

void Trainer::load_checkpoint(const std::filesystem::path& state_txt) {
  std::ifstream f(state_txt);
  if (!f) throw std::runtime_error("cannot open checkpoint " + state_txt.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const auto kv = parse_key_values(ss.str());
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error("checkpoint " + state_txt.string() + " lacks " + k);
    return it->second;
  };
  const auto dir = state_txt.parent_path();
  const ParamStore<float> weights = load_weights(dir / need("weights"));
  check_compatible(generator_, weights);
  copy_values(generator_, weights, "");
  const ParamStore<float> state = load_weights(dir / need("state"));
  if (critic_.size() > 0) copy_values(critic_, state, "critic/");
  get_moments(state, "adam.gen", generator_, gen_adam_);
  get_moments(state, "adam.critic", critic_, critic_adam_);
  iteration_ = std::stoll(need("iteration"));
  gen_adam_.step = std::stoll(need("gen_adam_step"));
  critic_adam_.step = std::stoll(need("critic_adam_step"));
}

std::string log_header() {
  return "# iteration fidelity ssim perceptual adversarial critic total lr";
}

std::string format_log_line(const StepStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld %.9g %.9g %.9g %.9g %.9g %.9g %.9g",
                static_cast<long long>(s.iteration), s.fidelity, s.ssim, s.perceptual,
                s.adversarial, s.critic, s.total, s.lr);
  return buf;
}

ParamStore<float> run_training(const TrainConfig& config, const RunOptions& options) {
  auto images = load_image_folder(config.data_dir, options.warn);
  if (images.empty()) {
    throw std::runtime_error("no readable images in " + config.data_dir.string());
  }
  Trainer trainer(config, std::move(images));
  const bool resuming = options.resume_state.has_value();
  if (resuming) trainer.load_checkpoint(*options.resume_state);

  std::filesystem::create_directories(config.out_dir);
  {
    std::ofstream cfg(config.out_dir / "config.txt", std::ios::trunc);
    cfg << to_text(config);
  }
  const auto mode = resuming ? std::ios::app : std::ios::trunc;
  std::ofstream log(config.out_dir / "metrics.log", std::ios::out | mode);
  std::ofstream timing(config.out_dir / "timing.log", std::ios::out | mode);
  if (!resuming) {
    log << log_header() << '\n';
    timing << "# iteration wall_seconds\n";
  }
  const auto start = std::chrono::steady_clock::now();
  while (trainer.iteration() < config.iterations) {
    StepStats stats;
    try {
      stats = trainer.step();
    } catch (const TrainingDiverged&) {
      trainer.save_checkpoint(config.out_dir / "diverged");
      throw;
    }
    if (options.on_step) options.on_step(stats);
    if (stats.iteration % config.log_every == 0 || stats.iteration == config.iterations) {
      log << format_log_line(stats) << '\n' << std::flush;
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      timing << stats.iteration << ' ' << secs << '\n' << std::flush;
    }
    if (stats.iteration % config.checkpoint_every == 0) trainer.save_checkpoint(config.out_dir);
  }
  save_weights(config.out_dir / "weights_final.dmbn", trainer.generator());
  return trainer.generator().clone();
}

}  // namespace dmnet
