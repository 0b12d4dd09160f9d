#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "adaptive_conv.hpp"
#include "core/error.hpp"
#include "core/hash.hpp"
#include "core/log.hpp"
#include "image_io.hpp"
#include "losses.hpp"

namespace mduit {

namespace {

constexpr std::uint64_t kEpochStream = 1;
constexpr std::uint64_t kStepStream = 2;

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t counter) {
  return mix_seed(mix_seed(seed, stream), counter);
}

int pick(std::mt19937_64& rng, const std::vector<int>& pool) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

}  // namespace

void init_params(ModelParams& params, double init_std, std::uint64_t seed,
                 bool fan_in) {
  for (ParamCollection* pc : params.all()) {
    for (auto& p : pc->entries()) {
      Tensor& t = p.var.mutable_value();
      switch (p.kind) {
        case ParamKind::kBias:
          t.fill(0.0);
          break;
        case ParamKind::kGemExponent:
          t.fill(3.0);
          break;
        case ParamKind::kWeight: {
          std::mt19937_64 rng(mix_seed(seed, fnv1a64(p.name)));
          const double sigma =
              fan_in ? std::sqrt(2.0 * t.dim(0) / static_cast<double>(t.size()))
                     : init_std;
          std::normal_distribution<double> normal(0.0, sigma);
          for (double& v : t.values()) v = normal(rng);
          break;
        }
      }
    }
  }
}

ModelParams init_params(const TrainConfig& config) {
  ModelParams p = allocate_params(config.network());
  init_params(p, config.hp.init_std, config.seed,
              config.init_scheme == "fan_in");
  return p;
}

double lr_at(int epoch, const HyperParams& hp) {
  require(epoch >= 0 && epoch < hp.total_epochs(),
          "epoch " + std::to_string(epoch) + " outside [0, " +
              std::to_string(hp.total_epochs()) + ")",
          ErrorCode::kInvalidArgument);
  if (epoch < hp.epochs_flat) return hp.lr;
  const int k = epoch - hp.epochs_flat + 1;
  return hp.lr * (1.0 - static_cast<double>(k) / hp.epochs_decay);
}

TrainingSet load_training_set(const Manifest& manifest, int image_size) {
  TrainingSet set;
  set.manifest = manifest;
  set.images.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    Image img = read_png(manifest.resolve(r));
    require(img.height() == image_size && img.width() == image_size,
            r.image_path + " is " + std::to_string(img.height()) + "x" +
                std::to_string(img.width()) + ", expected " +
                std::to_string(image_size) + "x" + std::to_string(image_size));
    set.images.push_back(std::move(img));
  }
  return set;
}

double StepMetrics::get(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  fail(ErrorCode::kInvalidArgument, "no metric named '" + name + "'");
}

std::string StepMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["lr"] = lr;
  for (const auto& [k, v] : values) j[k] = v;
  return j.dump();
}

std::uint64_t params_checksum(const ParamCollection& pc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : pc.entries()) {
    const auto& v = p.var.value().storage();
    h = fnv1a64(std::span(reinterpret_cast<const unsigned char*>(v.data()),
                          v.size() * sizeof(double)),
                h);
  }
  return h;
}

Trainer::Trainer(TrainConfig config, const TrainingSet& data)
    : config_(std::move(config)),
      data_(&data),
      model_(config_.network(), init_params(config_)),
      adam_(config_.hp.adam_beta1, config_.hp.adam_beta2) {
  config_.validate();
  check_data();
}

Trainer::Trainer(Checkpoint ck, const TrainingSet& data)
    : config_(std::move(ck.config)),
      data_(&data),
      model_(config_.network(), std::move(ck.params)),
      adam_(std::move(ck.optimizer)),
      epoch_(ck.epoch),
      step_(ck.step) {
  config_.validate();
  check_data();
}

void Trainer::check_data() const {
  const auto& records = data_->manifest.records;
  require(records.size() == data_->images.size(),
          "training set images and records differ in length");
  std::map<std::string, int> per_domain;
  for (const auto& r : records) ++per_domain[r.domain.name];
  require(per_domain.size() >= 2, "training needs at least 2 domains");
  for (const auto& [name, n] : per_domain)
    require(n >= 2, "domain '" + name + "' needs at least 2 images");
  for (const auto& img : data_->images)
    require(img.height() == config_.image_size &&
                img.width() == config_.image_size,
            "training image size does not match image_size");
}

int Trainer::steps_per_epoch() const {
  return config_.steps_per_epoch > 0
             ? config_.steps_per_epoch
             : static_cast<int>(data_->manifest.records.size());
}

const std::vector<int>& Trainer::positives_of(int record) const {
  return positives_.at(record);
}

void Trainer::refresh_pairs() {
  const auto& records = data_->manifest.records;
  bank_.clear();
  bank_.reserve(records.size());
  for (const auto& img : data_->images) bank_.push_back(model_.embedding_of(img));
  assignments_ = refresh_source_target(records, bank_);

  positives_.assign(records.size(), {});
  std::vector<int> refs;
  for (int i = 0; i < static_cast<int>(records.size()); ++i)
    if (records[i].is_reference) refs.push_back(i);
  if (refs.size() < 2) return;
  std::vector<DatasetRecord> ref_records;
  std::vector<Embedding> ref_emb;
  for (int i : refs) {
    ref_records.push_back(records[i]);
    ref_emb.push_back(bank_[i]);
  }
  const auto mined =
      mine_positives(ref_records, ref_emb, config_.k_candidates,
                     config_.hp.rot_thresh_deg, config_.hp.trans_thresh_m);
  for (std::size_t q = 0; q < refs.size(); ++q)
    for (int p : mined[q].positives) positives_[refs[q]].push_back(refs[p]);
}

Batch Trainer::assemble_batch(int source, int target, std::uint64_t seed) const {
  const auto& records = data_->manifest.records;
  const int n = static_cast<int>(records.size());
  std::mt19937_64 rng(seed);
  const DatasetRecord& s = records[source];
  const DatasetRecord& t = records[target];
  Batch b;
  b.source = source;
  b.target = target;

  std::vector<int> same_domain, other_content, other_domain;
  for (int i = 0; i < n; ++i) {
    const DatasetRecord& r = records[i];
    if (i != target && r.domain.name == t.domain.name) same_domain.push_back(i);
    if (r.domain.name != t.domain.name) other_domain.push_back(i);
    const bool same_scene = s.scene && r.scene && *s.scene == *r.scene;
    if (i != source && !same_scene && r.image_path != s.image_path)
      other_content.push_back(i);
  }
  require(!same_domain.empty() && !other_content.empty() && !other_domain.empty(),
          "cannot assemble a batch for source " + s.image_path);
  b.target_same = pick(rng, same_domain);
  b.source_neg = pick(rng, other_content);
  b.target_neg = pick(rng, other_domain);

  std::vector<int> excluded = positives_.empty() ? std::vector<int>{}
                                                 : positives_[source];
  if (s.scene)
    for (int i = 0; i < n; ++i)
      if (records[i].scene == s.scene) excluded.push_back(i);
  b.nce_negatives = sample_nce_negatives(source, n, excluded, config_.hp.n_neg,
                                         rng());
  return b;
}

Image Trainer::jittered(const Image& image, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  const double s = config_.jitter_strength;
  std::uniform_real_distribution<double> u(-s, s);
  Tensor t = image.tensor();
  const int plane = image.height() * image.width();
  for (int c = 0; c < 3; ++c) {
    const double gain = 1.0 + u(rng), shift = u(rng);
    for (int i = 0; i < plane; ++i) {
      double& v = t[static_cast<std::size_t>(c) * plane + i];
      v = gain * v + shift;
    }
  }
  return Image::clamped(std::move(t));
}

void Trainer::check_grads(ParamCollection& pc) const {
  for (const auto& p : pc.entries())
    if (p.var.has_grad() && !p.var.grad().all_finite())
      fail(ErrorCode::kNumeric, "non-finite gradient in " + p.name);
}

StepMetrics Trainer::forward_losses(const Batch& batch, double lr, bool update) {
  namespace L = losses;
  auto& params = model_.params();
  const auto& img = data_->images;
  const ag::Var I_s(img[batch.source].tensor());
  const ag::Var I_t(img[batch.target].tensor());

  StepMetrics m;
  m.step = step_;
  m.epoch = epoch_;
  m.lr = lr;
  auto record = [&m](const char* name, const ag::Var& v) {
    m.values.emplace_back(name, v.item());
  };

  std::vector<ag::Var> negs;
  for (int i : batch.nce_negatives)
    negs.emplace_back(Tensor(Shape{static_cast<int>(bank_[i].dim())},
                             bank_[i].values()));

  if (config_.ablation_no_i2i) {
    const Image jit = jittered(img[batch.source],
                               stream_seed(config_.seed, kStepStream + 1, step_));
    const ag::Var z_s = model_.embed(model_.encode_content(I_s));
    const ag::Var z_st = model_.embed(model_.encode_content(ag::Var(jit.tensor())));
    L::GeneratorTerms terms;
    terms.nce = L::nce(z_s, z_st, negs, config_.hp.temperature);
    const ag::Var total = L::generator_total(terms, config_.hp.betas);
    record("nce", terms.nce);
    record("generator_total", total);
    if (update) {
      ag::backward(total);
      for (ParamCollection* pc : params.generator_side()) {
        check_grads(*pc);
        adam_.step(*pc, lr);
      }
    }
    return m;
  }

  const ag::Var I_tp(img[batch.target_same].tensor());
  const ag::Var I_sn(img[batch.source_neg].tensor());
  const ag::Var I_tn(img[batch.target_neg].tensor());

  const ag::Var f_s = model_.encode_content(I_s);
  const AppearanceFilter W_t = model_.appearance_filter(I_t);
  const AppearanceFilter W_s = model_.appearance_filter(I_s);
  const ag::Var I_st = model_.generate_image(apply(f_s, W_t));
  const ag::Var I_ss = model_.generate_image(apply(f_s, W_s));
  const ag::Var f_st = model_.encode_content(I_st);
  const ag::Var I_sts = model_.generate_image(apply(f_st, W_s));
  const ag::Var f_sn = model_.encode_content(I_sn);
  const AppearanceFilter W_st = model_.appearance_filter(I_st);
  const AppearanceFilter W_tn = model_.appearance_filter(I_tn);
  const ag::Var z_s = model_.embed(f_s);
  const ag::Var z_st = model_.embed(f_st);

  // Discriminator half-step on a detached fake.
  std::uint64_t g_before = 0;
  if (update && check_isolation_)
    for (const ParamCollection* pc : params.generator_side())
      g_before = mix_seed(g_before, params_checksum(*pc));
  const ag::Var fake = I_st.detach();
  const L::Adversarial adv_i =
      L::adv_image(model_.discriminate_image(I_s), model_.discriminate_image(I_t),
                   model_.discriminate_image(fake));
  const L::Adversarial adv_a =
      L::adv_appearance(model_.discriminate_appearance(I_t, I_tp),
                        model_.discriminate_appearance(I_t, fake));
  const ag::Var d_total =
      L::discriminator_total(adv_i.discriminator, adv_a.discriminator);
  if (update) {
    ag::backward(d_total);
    for (ParamCollection* pc : params.discriminator_side()) {
      check_grads(*pc);
      adam_.step(*pc, lr);
      pc->zero_grad();
    }
    if (check_isolation_) {
      std::uint64_t g_after = 0;
      for (const ParamCollection* pc : params.generator_side())
        g_after = mix_seed(g_after, params_checksum(*pc));
      require(g_before == g_after,
              "discriminator update modified generator-side parameters",
              ErrorCode::kNumeric);
    }
  }

  // Generator half-step against the updated discriminators.
  int clamped = adv_i.clamped + adv_a.clamped;
  L::GeneratorTerms terms;
  terms.adv_image = L::adv_generator(model_.discriminate_image(I_st), &clamped);
  terms.adv_appearance =
      L::adv_generator(model_.discriminate_appearance(I_t, I_st), &clamped);
  terms.rec_self = L::rec_self(I_ss, I_s);
  terms.rec_cycle = L::rec_cycle(I_sts, I_s);
  terms.cons_content = L::cons_content(f_s, f_st, f_sn, config_.hp.margin_content);
  terms.cons_appearance = L::cons_appearance(W_t, W_st, W_tn);
  terms.nce = L::nce(z_s, z_st, negs, config_.hp.temperature);
  const ag::Var g_total = L::generator_total(terms, config_.hp.betas);

  record("adv_image_d", adv_i.discriminator);
  record("adv_appearance_d", adv_a.discriminator);
  for (const auto& [name, v] : L::term_values(terms)) m.values.emplace_back(name, v);
  record("generator_total", g_total);
  record("discriminator_total", d_total);
  m.values.emplace_back("clamped", clamped);

  if (update) {
    std::uint64_t d_before = 0;
    if (check_isolation_)
      for (ParamCollection* pc : params.discriminator_side())
        d_before = mix_seed(d_before, params_checksum(*pc));
    ag::backward(g_total);
    for (ParamCollection* pc : params.generator_side()) {
      check_grads(*pc);
      adam_.step(*pc, lr);
    }
    if (check_isolation_) {
      std::uint64_t d_after = 0;
      for (ParamCollection* pc : params.discriminator_side())
        d_after = mix_seed(d_after, params_checksum(*pc));
      require(d_before == d_after,
              "generator update modified discriminator parameters",
              ErrorCode::kNumeric);
    }
  }
  return m;
}

StepMetrics Trainer::train_step(const Batch& batch, double lr) {
  for (ParamCollection* pc : model_.params().all()) pc->zero_grad();
  StepMetrics m = forward_losses(batch, lr, true);
  for (ParamCollection* pc : model_.params().all()) {
    pc->zero_grad();
    for (const auto& p : pc->entries())
      if (!p.var.value().all_finite())
        fail(ErrorCode::kNumeric, "non-finite parameter " + p.name +
                                      " after step " + std::to_string(step_));
  }
  ++step_;
  return m;
}

StepMetrics Trainer::evaluate(const Batch& batch) const {
  ag::NoGradGuard guard;
  // forward_losses only mutates state when asked to update.
  return const_cast<Trainer*>(this)->forward_losses(batch, 0.0, false);
}

std::vector<StepMetrics> Trainer::run_epoch(
    const std::function<void(const StepMetrics&)>& on_step) {
  require(epoch_ < total_epochs(), "training already finished",
          ErrorCode::kInvalidArgument);
  refresh_pairs();
  const double lr = lr_at(epoch_, config_.hp);
  std::vector<int> order(assignments_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(stream_seed(config_.seed, kEpochStream, epoch_));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<StepMetrics> out;
  const int steps = steps_per_epoch();
  for (int k = 0; k < steps; ++k) {
    const PairAssignment& a = assignments_[order[k % order.size()]];
    const Batch b = assemble_batch(a.source_idx, a.target_idx,
                                   stream_seed(config_.seed, kStepStream, step_));
    StepMetrics m = train_step(b, lr);
    if (on_step) on_step(m);
    out.push_back(std::move(m));
  }
  ++epoch_;
  return out;
}

void Trainer::save(const std::filesystem::path& path) const {
  save_checkpoint(path, config_, model_.params(), adam_, epoch_, step_);
}

namespace {

// Keeps metrics lines up to and including `last_step`.
void truncate_metrics(const std::filesystem::path& path, long last_step) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> kept;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.contains("step") && j["step"].get<long>() <= last_step)
      kept.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

std::filesystem::path fit(const Manifest& manifest, const TrainConfig& config,
                          const FitOptions& options) {
  namespace fs = std::filesystem;
  config.validate();
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec)
    fail(ErrorCode::kIo, "cannot create " + options.out_dir.string() + ": " +
                             ec.message());

  const TrainingSet data = load_training_set(manifest, config.image_size);
  std::optional<Trainer> trainer;
  const fs::path metrics_path = options.out_dir / "metrics.jsonl";
  if (options.resume_from) {
    Checkpoint ck = load_checkpoint(*options.resume_from);
    require(ck.config.hash() == config.hash(),
            "checkpoint config differs from the requested config",
            ErrorCode::kConfig);
    truncate_metrics(metrics_path, ck.step - 1);
    trainer.emplace(std::move(ck), data);
    log::info("resuming at epoch " + std::to_string(trainer->epoch()));
  } else {
    trainer.emplace(config, data);
    std::ofstream(metrics_path, std::ios::trunc);
  }
  save_config(options.out_dir / "config.txt", config);

  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) fail(ErrorCode::kIo, "cannot write " + metrics_path.string());

  fs::path last = options.resume_from.value_or(fs::path{});
  while (trainer->epoch() < trainer->total_epochs()) {
    if (options.stop_after_epoch && trainer->epoch() >= *options.stop_after_epoch)
      break;
    const auto steps = trainer->run_epoch([&](const StepMetrics& m) {
      metrics << m.to_json() << '\n';
      if (options.on_step) options.on_step(m);
    });
    metrics.flush();
    const int done = trainer->epoch();
    double g_sum = 0.0;
    for (const auto& m : steps) g_sum += m.get("generator_total");
    log::info("epoch " + std::to_string(done) + "/" +
              std::to_string(trainer->total_epochs()) + " mean generator loss " +
              format_double(g_sum / std::max<std::size_t>(steps.size(), 1)));
    if (done % config.checkpoint_interval == 0 || done == trainer->total_epochs()) {
      char name[64];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", done);
      last = options.out_dir / name;
      trainer->save(last);
    }
  }
  if (trainer->epoch() == trainer->total_epochs()) {
    last = options.out_dir / "final.ckpt";
    trainer->save(last);
  }
  if (!metrics) fail(ErrorCode::kIo, "failed writing " + metrics_path.string());
  return last;
}

}  // namespace mduit
