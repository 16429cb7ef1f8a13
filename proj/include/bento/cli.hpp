#pragma once

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "bento/checkpoint.hpp"
#include "bento/config.hpp"
#include "bento/dataset.hpp"
#include "bento/gradcheck_suite.hpp"
#include "bento/image_io.hpp"
#include "bento/layout.hpp"
#include "bento/metrics.hpp"
#include "bento/optim.hpp"
#include "bento/ordering.hpp"
#include "bento/t2i.hpp"

namespace bento::cli {

inline constexpr uint64_t kPipelineLayout = 1;
inline constexpr uint64_t kPipelineT2I = 2;

// Root seed for evaluation noise. Fixed rather than config-derived so that
// training-time validation and cmd_eval score a checkpoint identically.
inline constexpr uint64_t kEvalSeed = 0xeba1;

namespace detail {

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << text;
  if (!f) throw IoError("short write: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void add_scalar_f32(ckpt::Checkpoint& ck, const std::string& name,
                           double value) {
  Tensor t = Tensor::zeros({1});
  t.data()[0] = value;
  ck.add_f32(name, t);
}

inline double read_scalar_f32(const ckpt::Checkpoint& ck,
                              const std::string& name) {
  Tensor t = Tensor::zeros({1});
  ck.read_f32(name, t);
  return t.data()[0];
}

/// Serializes optimizer moments under `<prefix>.<param>.m/.v`, sorted by
/// name so the file bytes do not depend on hash-map iteration order.
inline void pack_adam(ckpt::Checkpoint& ck, const std::string& prefix,
                      const Adam& opt) {
  ck.add_u64(prefix + ".step", uint64_t(opt.step_count()));
  std::vector<std::string> names;
  for (const auto& [name, slot] : opt.slots()) names.push_back(name);
  std::sort(names.begin(), names.end());
  for (const auto& name : names) {
    const auto& slot = opt.slots().at(name);
    Tensor m = Tensor::zeros({int(slot.m.size())});
    m.data() = slot.m;
    ck.add_f32(prefix + "." + name + ".m", m);
    Tensor v = Tensor::zeros({int(slot.v.size())});
    v.data() = slot.v;
    ck.add_f32(prefix + "." + name + ".v", v);
  }
}

/// Restores whatever moments the checkpoint holds for params in `ps`.
/// Absent entries leave the optimizer cold for that parameter.
inline void unpack_adam(const ckpt::Checkpoint& ck, const std::string& prefix,
                        Adam& opt, const ParamSet& ps) {
  if (!ck.find(prefix + ".step")) return;
  opt.set_step_count(int64_t(ck.read_u64(prefix + ".step")));
  for (const auto& [name, p] : ps) {
    if (!ck.find(prefix + "." + name + ".m")) continue;
    Tensor m = Tensor::zeros({int(p.size())});
    ck.read_f32(prefix + "." + name + ".m", m);
    Tensor v = Tensor::zeros({int(p.size())});
    ck.read_f32(prefix + "." + name + ".v", v);
    auto& slot = opt.slot(name);
    slot.m = m.data();
    slot.v = v.data();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset directory helpers.

/// Sorted list of annotation json paths under `dir`.
inline std::vector<std::string> list_annotations(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw IoError("not a dataset directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

inline std::vector<Scene> load_dataset(const std::string& dir) {
  std::vector<Scene> scenes;
  for (const auto& p : list_annotations(dir))
    scenes.push_back(data::load_annotation(p));
  if (scenes.empty()) throw DataError("no annotation files in " + dir);
  return scenes;
}

// ---------------------------------------------------------------------------
// cmd_gen_data

struct GenDataResult {
  int count = 0;
  std::string dir;
};

/// Writes `count` synthetic scenes to `out_dir`. `type_spec` is "1", "2",
/// "3", or "mixed" (round-robin over the three presentation types). Scene
/// seeds derive from (seed, index), so any scene can be regenerated alone.
inline GenDataResult cmd_gen_data(const std::string& type_spec, int count,
                                  uint64_t seed, const std::string& out_dir) {
  if (count <= 0) throw ValueError("gen_data: count must be positive");
  int fixed_type = 0;
  if (type_spec == "mixed")
    fixed_type = 0;
  else if (type_spec == "1" || type_spec == "2" || type_spec == "3")
    fixed_type = type_spec[0] - '0';
  else
    throw ValueError("gen_data: type must be one of 1|2|3|mixed, got '" +
                     type_spec + "'");
  detail::ensure_dir(out_dir);
  for (int i = 0; i < count; ++i) {
    int type = fixed_type ? fixed_type : 1 + (i % 3);
    Scene scene = data::generate_synthetic_scene(type, Rng::derive(seed, i),
                                                 data::DatasetConfig{});
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05d_t%d", i, type);
    scene.scene_id = buf;
    data::write_annotation(scene, out_dir);
  }
  return {count, out_dir};
}

// ---------------------------------------------------------------------------
// Checkpoint bundles. A checkpoint is self-describing: structural fields are
// stored alongside the parameters, so loading never needs the config file.

struct LayoutBundle {
  layout::CompositionModels m;
  int64_t step = 0;
  uint64_t config_hash = 0;
  double best = 0.0;
};

struct T2IBundle {
  t2i::T2IModels m;
  int64_t step = 0;
  uint64_t config_hash = 0;
  double best = 0.0;
  double cycle0 = 0.0;
};

inline void save_layout_checkpoint(const std::string& path,
                                   const layout::CompositionModels& m,
                                   const Adam* opt_g, const Adam* opt_d,
                                   int64_t step, uint64_t config_hash,
                                   double best) {
  ckpt::Checkpoint ck;
  ck.add_u64("meta.pipeline", kPipelineLayout);
  ck.add_u64("meta.canvas", uint64_t(m.cfg.canvas));
  ck.add_u64("meta.z_dim", uint64_t(m.cfg.z_dim));
  ck.add_u64("meta.step", uint64_t(step));
  ck.add_u64("meta.config_hash", config_hash);
  detail::add_scalar_f32(ck, "meta.best", best);
  ckpt::pack_params(ck, m.all_params());
  ck.add_f32("layout.category_rank", m.category_rank);
  if (opt_g) detail::pack_adam(ck, "opt_g", *opt_g);
  if (opt_d) detail::pack_adam(ck, "opt_d", *opt_d);
  ckpt::save_checkpoint(path, ck);
}

inline LayoutBundle load_layout_checkpoint(const std::string& path,
                                           Adam* opt_g = nullptr,
                                           Adam* opt_d = nullptr) {
  ckpt::Checkpoint ck = ckpt::load_checkpoint(path);
  uint64_t pipe = ck.read_u64("meta.pipeline");
  if (pipe != kPipelineLayout)
    throw DataError("checkpoint " + path + " holds pipeline tag " +
                    std::to_string(pipe) + ", expected layout (" +
                    std::to_string(kPipelineLayout) + ")");
  layout::CompositionConfig mc;
  mc.canvas = int(ck.read_u64("meta.canvas"));
  mc.z_dim = int(ck.read_u64("meta.z_dim"));
  Rng scratch(0);
  LayoutBundle b;
  b.m = layout::CompositionModels::make(mc, scratch);
  ckpt::unpack_params(ck, b.m.all_params());
  ck.read_f32("layout.category_rank", b.m.category_rank);
  b.step = int64_t(ck.read_u64("meta.step"));
  b.config_hash = ck.read_u64("meta.config_hash");
  b.best = detail::read_scalar_f32(ck, "meta.best");
  if (opt_g) detail::unpack_adam(ck, "opt_g", *opt_g, b.m.all_params());
  if (opt_d) detail::unpack_adam(ck, "opt_d", *opt_d, b.m.all_params());
  return b;
}

inline void save_t2i_checkpoint(const std::string& path,
                                const t2i::T2IModels& m, const Adam* opt_g,
                                const Adam* opt_d, int64_t step,
                                uint64_t config_hash, double best,
                                double cycle0) {
  ckpt::Checkpoint ck;
  ck.add_u64("meta.pipeline", kPipelineT2I);
  ck.add_u64("meta.stages", uint64_t(m.cfg.num_stages));
  ck.add_u64("meta.base_res", uint64_t(m.cfg.base_res));
  ck.add_u64("meta.z_dim", uint64_t(m.cfg.z_dim));
  ck.add_u64("meta.d_text", uint64_t(m.cfg.d_text));
  ck.add_u64("meta.max_len", uint64_t(m.cfg.max_len));
  ck.add_u64("meta.step", uint64_t(step));
  ck.add_u64("meta.config_hash", config_hash);
  detail::add_scalar_f32(ck, "meta.best", best);
  detail::add_scalar_f32(ck, "meta.cycle0", cycle0);
  ckpt::pack_params(ck, m.all_params());
  if (opt_g) detail::pack_adam(ck, "opt_g", *opt_g);
  if (opt_d) detail::pack_adam(ck, "opt_d", *opt_d);
  ckpt::save_checkpoint(path, ck);
}

inline T2IBundle load_t2i_checkpoint(const std::string& path,
                                     Adam* opt_g = nullptr,
                                     Adam* opt_d = nullptr) {
  ckpt::Checkpoint ck = ckpt::load_checkpoint(path);
  uint64_t pipe = ck.read_u64("meta.pipeline");
  if (pipe != kPipelineT2I)
    throw DataError("checkpoint " + path + " holds pipeline tag " +
                    std::to_string(pipe) + ", expected t2i (" +
                    std::to_string(kPipelineT2I) + ")");
  t2i::StageConfig sc;
  sc.num_stages = int(ck.read_u64("meta.stages"));
  sc.base_res = int(ck.read_u64("meta.base_res"));
  sc.z_dim = int(ck.read_u64("meta.z_dim"));
  sc.d_text = int(ck.read_u64("meta.d_text"));
  sc.max_len = int(ck.read_u64("meta.max_len"));
  Rng scratch(0);
  T2IBundle b;
  b.m = t2i::T2IModels::make(sc, int(data::vocab().size()), scratch);
  ckpt::unpack_params(ck, b.m.all_params());
  b.step = int64_t(ck.read_u64("meta.step"));
  b.config_hash = ck.read_u64("meta.config_hash");
  b.best = detail::read_scalar_f32(ck, "meta.best");
  b.cycle0 = detail::read_scalar_f32(ck, "meta.cycle0");
  if (opt_g) detail::unpack_adam(ck, "opt_g", *opt_g, b.m.all_params());
  if (opt_d) detail::unpack_adam(ck, "opt_d", *opt_d, b.m.all_params());
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation cores, shared between the trainers and cmd_eval.

namespace detail {

struct SceneOrderView {
  std::vector<int> categories;   // per item index
  PlacementOrder order;          // ground-truth placement (ascending z)
  std::vector<LayoutBox> boxes;  // in placement order
};

inline SceneOrderView scene_order_view(const Scene& scene) {
  SceneOrderView v;
  v.order.ids.resize(scene.items.size());
  for (size_t i = 0; i < scene.items.size(); ++i) {
    v.categories.push_back(int(scene.items[i].category));
    v.order.ids[i] = int(i);
  }
  std::stable_sort(v.order.ids.begin(), v.order.ids.end(),
                   [&](int a, int b) { return scene.items[a].z < scene.items[b].z; });
  for (int id : v.order.ids) v.boxes.push_back(scene.items[size_t(id)].bbox);
  return v;
}

}  // namespace detail

/// Mean layout IoU over scenes, generating boxes for the ground-truth order
/// under per-scene fixed noise.
inline double eval_layout_iou(const std::vector<Scene>& scenes,
                              const layout::CompositionModels& m) {
  if (scenes.empty()) throw ValueError("eval_layout_iou: no scenes");
  NoGradScope ng;
  double acc = 0.0;
  for (size_t i = 0; i < scenes.size(); ++i) {
    auto v = detail::scene_order_view(scenes[i]);
    Rng nz(Rng::derive(kEvalSeed, i));
    Tensor noise = Tensor::randn({m.cfg.z_dim}, nz);
    auto pred = layout::layout_generate(v.categories, v.order, noise, m);
    acc += mean_iou(pred, v.boxes);
  }
  return acc / double(scenes.size());
}

/// Per-scene caption token lists (those that fit max_len) and the rendered
/// image rescaled to [-1,1]. Fails loudly on canvas/caption mismatches.
struct T2IData {
  std::vector<Tensor> images;
  std::vector<std::vector<std::vector<int>>> tokens;
};

inline T2IData prepare_t2i_data(const std::vector<Scene>& scenes,
                                const t2i::StageConfig& cfg) {
  NoGradScope ng;
  T2IData d;
  for (const auto& scene : scenes) {
    if (scene.canvas_h != cfg.final_res() || scene.canvas_w != cfg.final_res())
      throw DataError("scene " + scene.scene_id + " canvas " +
                      std::to_string(scene.canvas_h) +
                      " does not match generator final resolution " +
                      std::to_string(cfg.final_res()));
    d.images.push_back(
        add_scalar(scale(data::render_scene(scene), 2.0), -1.0));
    std::vector<std::vector<int>> toks;
    for (const auto& c : scene.captions) {
      auto t = data::tokenize(c);
      if (int(t.size()) + 1 <= cfg.max_len) toks.push_back(std::move(t));
    }
    if (toks.empty())
      throw DataError("scene " + scene.scene_id + " has no caption fitting max_len " +
                      std::to_string(cfg.max_len));
    d.tokens.push_back(std::move(toks));
  }
  return d;
}

struct T2IEval {
  double acc = 0.0;             // decoded caption class == scene type
  double cycle = 0.0;           // teacher-forced cycle loss, mean over scenes
  std::vector<double> id_m;     // identity loss per stage, mean over scenes
};

inline T2IEval eval_t2i(const std::vector<Scene>& scenes, const T2IData& data,
                        const t2i::T2IModels& m) {
  if (scenes.empty()) throw ValueError("eval_t2i: no scenes");
  NoGradScope ng;
  const auto& cfg = m.cfg;
  T2IEval ev;
  ev.id_m.assign(size_t(cfg.num_stages), 0.0);
  for (size_t i = 0; i < scenes.size(); ++i) {
    const auto& toks = data.tokens[i][0];
    Rng nz(Rng::derive(kEvalSeed, i));
    Tensor noise = Tensor::randn({cfg.z_dim}, nz);
    auto stages = t2i::generate_stages(m.embedder.embed(toks), noise, m, cfg);
    if (t2i::decoded_caption_class(stages.back(), m) == scenes[i].type)
      ev.acc += 1.0;
    ev.cycle +=
        t2i::cycle_loss(t2i::caption_branch_teacher(stages.back(), toks, m), toks)
            .item();
    for (int s = 0; s < cfg.num_stages; ++s) {
      Tensor real =
          t2i::box_downsample(data.images[i], cfg.final_res() / cfg.resolution(s));
      ev.id_m[size_t(s)] += t2i::identity_loss(stages[size_t(s)], real).item();
    }
  }
  double n = double(scenes.size());
  ev.acc /= n;
  ev.cycle /= n;
  for (auto& x : ev.id_m) x /= n;
  return ev;
}

// ---------------------------------------------------------------------------
// cmd_train

struct TrainSummary {
  int64_t final_step = 0;
  double best = 0.0;       // layout: best validation IoU; t2i: best accuracy
  double last_eval = 0.0;  // layout: last validation IoU; t2i: last accuracy
  double cycle0 = 0.0;
  double last_cycle = 0.0;
  bool reached_target = false;
};

namespace detail {

inline std::vector<std::string> layout_csv_header() {
  return {"step", "l_layout", "l_image", "l_stn", "l_total"};
}

inline std::vector<std::string> t2i_csv_header(int num_stages) {
  std::vector<std::string> h{"step"};
  for (int s = 0; s < num_stages; ++s) h.push_back("l_g_m" + std::to_string(s));
  for (int s = 0; s < num_stages; ++s) h.push_back("l_d_m" + std::to_string(s));
  for (int s = 0; s < num_stages; ++s) h.push_back("l_id_m" + std::to_string(s));
  h.push_back("l_cycle");
  h.push_back("l_g_total");
  h.push_back("l_d_total");
  return h;
}

inline void check_resume_hash(uint64_t saved, uint64_t current, bool force) {
  if (saved != current && !force)
    throw DataError(
        "resume: checkpoint config hash " + std::to_string(saved) +
        " does not match current config hash " + std::to_string(current) +
        "; pass --force to resume anyway");
}

inline TrainSummary train_layout(const RunConfig& cfg, const std::string& out_dir,
                                 const std::string& resume_path, bool force,
                                 std::ostream& log) {
  std::vector<Scene> scenes = load_dataset(cfg.data_dir);
  int holdout = cfg.holdout;
  if (holdout < 0 || holdout >= int(scenes.size()))
    throw ValueError("train: holdout " + std::to_string(holdout) +
                     " must lie in [0, dataset size)");
  std::vector<Scene> train(scenes.begin(), scenes.end() - holdout);
  std::vector<Scene> val(scenes.end() - holdout, scenes.end());
  if (val.empty()) val = train;

  const uint64_t hash = cfg.hash();
  layout::CompositionConfig mc;
  mc.canvas = cfg.canvas;
  mc.z_dim = cfg.z_dim;

  layout::CompositionModels m;
  Adam opt_g({cfg.lr, cfg.beta1, cfg.beta2, 1e-8});
  Adam opt_d({cfg.lr_d, cfg.beta1, cfg.beta2, 1e-8});
  int64_t start = 0;
  double best = -1.0;

  const std::string csv_path = detail::join_path(out_dir, "metrics.csv");
  const std::string ckpt_path = detail::join_path(out_dir, "checkpoint.bnt");
  const std::string best_path = detail::join_path(out_dir, "best.bnt");

  std::unique_ptr<CsvLog> csv;
  if (!resume_path.empty()) {
    LayoutBundle b = load_layout_checkpoint(resume_path, &opt_g, &opt_d);
    check_resume_hash(b.config_hash, hash, force);
    m = std::move(b.m);
    start = b.step;
    best = b.best;
    csv = std::make_unique<CsvLog>(CsvLog::append_to(csv_path, layout_csv_header()));
    log << "resumed from " << resume_path << " at step " << start << "\n";
  } else {
    Rng mrng(Rng::derive(cfg.seed, 0x6d6f));
    m = layout::CompositionModels::make(mc, mrng);
    Tensor rank = layout::fit_category_rank(train);
    m.category_rank.data() = rank.data();
    save_layout_checkpoint(detail::join_path(out_dir, "initial.bnt"), m, &opt_g,
                           &opt_d, 0, hash, best);
    csv = std::make_unique<CsvLog>(csv_path, layout_csv_header());
  }

  TrainSummary sum;
  const uint64_t step_root = Rng::derive(cfg.seed, 0x57e9);
  int64_t step = start;
  for (; step < cfg.steps; ++step) {
    Rng srng(Rng::derive(step_root, uint64_t(step)));
    std::vector<Scene> batch;
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(train[size_t(srng.uniform_int(0, int64_t(train.size()) - 1))]);
    layout::TrainWeights w{cfg.w_layout, cfg.w_image, cfg.w_stn};
    if (step < cfg.stn_pretrain_steps) {
      w.w_layout = 0.0;
      w.w_image = 0.0;
    }
    auto rep = layout::train_step_composition(batch, m, opt_g, opt_d, srng, w);
    csv->row({double(step + 1), rep.l_layout, rep.l_image, rep.l_stn, rep.l_total});
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      save_layout_checkpoint(ckpt_path, m, &opt_g, &opt_d, step + 1, hash, best);
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) {
      double iou = eval_layout_iou(val, m);
      sum.last_eval = iou;
      log << "step " << (step + 1) << " val_iou " << iou << "\n";
      if (iou > best) {
        best = iou;
        save_layout_checkpoint(best_path, m, &opt_g, &opt_d, step + 1, hash, best);
      }
      if (best >= cfg.target_iou) {
        sum.reached_target = true;
        ++step;
        break;
      }
    }
  }
  save_layout_checkpoint(ckpt_path, m, &opt_g, &opt_d, step, hash, best);
  if (!std::filesystem::exists(best_path))
    save_layout_checkpoint(best_path, m, &opt_g, &opt_d, step, hash, best);
  sum.final_step = step;
  sum.best = best;
  return sum;
}

inline TrainSummary train_t2i(const RunConfig& cfg, const std::string& out_dir,
                              const std::string& resume_path, bool force,
                              std::ostream& log) {
  std::vector<Scene> scenes = load_dataset(cfg.data_dir);
  t2i::StageConfig sc;
  sc.num_stages = cfg.stages;
  sc.base_res = cfg.base_res;
  sc.z_dim = cfg.z_dim;
  sc.d_text = cfg.d_text;
  sc.max_len = cfg.max_len;
  sc.validate();
  if (sc.final_res() != cfg.canvas)
    throw DataError("config canvas " + std::to_string(cfg.canvas) +
                    " does not match generator final resolution " +
                    std::to_string(sc.final_res()));
  T2IData td = prepare_t2i_data(scenes, sc);

  const uint64_t hash = cfg.hash();
  t2i::T2IModels m;
  Adam opt_g({cfg.lr, cfg.beta1, cfg.beta2, 1e-8});
  Adam opt_d({cfg.lr_d, cfg.beta1, cfg.beta2, 1e-8});
  int64_t start = 0;
  double best = -1.0;
  double cycle0 = 0.0;

  const std::string csv_path = detail::join_path(out_dir, "metrics.csv");
  const std::string ckpt_path = detail::join_path(out_dir, "checkpoint.bnt");
  const std::string best_path = detail::join_path(out_dir, "best.bnt");

  std::unique_ptr<CsvLog> csv;
  if (!resume_path.empty()) {
    T2IBundle b = load_t2i_checkpoint(resume_path, &opt_g, &opt_d);
    check_resume_hash(b.config_hash, hash, force);
    m = std::move(b.m);
    start = b.step;
    best = b.best;
    cycle0 = b.cycle0;
    csv = std::make_unique<CsvLog>(
        CsvLog::append_to(csv_path, t2i_csv_header(sc.num_stages)));
    log << "resumed from " << resume_path << " at step " << start << "\n";
  } else {
    Rng mrng(Rng::derive(cfg.seed, 0x6d6f));
    m = t2i::T2IModels::make(sc, int(data::vocab().size()), mrng);
    cycle0 = eval_t2i(scenes, td, m).cycle;
    log << "step 0 cycle " << cycle0 << "\n";
    save_t2i_checkpoint(detail::join_path(out_dir, "initial.bnt"), m, &opt_g,
                        &opt_d, 0, hash, best, cycle0);
    csv = std::make_unique<CsvLog>(csv_path, t2i_csv_header(sc.num_stages));
  }

  TrainSummary sum;
  sum.cycle0 = cycle0;
  const uint64_t step_root = Rng::derive(cfg.seed, 0x57e9);
  int64_t step = start;
  for (; step < cfg.steps; ++step) {
    Rng srng(Rng::derive(step_root, uint64_t(step)));
    std::vector<t2i::T2IExample> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      size_t i = size_t(srng.uniform_int(0, int64_t(scenes.size()) - 1));
      const auto& pool = td.tokens[i];
      const auto& toks = pool[size_t(srng.uniform_int(0, int64_t(pool.size()) - 1))];
      batch.push_back({toks, td.images[i]});
    }
    t2i::T2ITrainWeights w{cfg.w_id, cfg.w_cycle};
    auto rep = t2i::train_step_t2i(batch, m, opt_g, opt_d, srng, w);
    std::vector<double> row{double(step + 1)};
    for (double x : rep.l_g_m) row.push_back(x);
    for (double x : rep.l_d_m) row.push_back(x);
    for (double x : rep.l_id_m) row.push_back(x);
    row.push_back(rep.l_cycle);
    row.push_back(rep.l_g_total);
    row.push_back(rep.l_d_total);
    csv->row(row);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      save_t2i_checkpoint(ckpt_path, m, &opt_g, &opt_d, step + 1, hash, best,
                          cycle0);
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) {
      T2IEval ev = eval_t2i(scenes, td, m);
      sum.last_eval = ev.acc;
      sum.last_cycle = ev.cycle;
      log << "step " << (step + 1) << " acc " << ev.acc << " cycle " << ev.cycle
          << "\n";
      bool hit = ev.acc >= cfg.target_caption_acc &&
                 ev.cycle <= cfg.target_cycle_frac * cycle0;
      if (ev.acc > best || hit) {
        best = std::max(best, ev.acc);
        save_t2i_checkpoint(best_path, m, &opt_g, &opt_d, step + 1, hash, best,
                            cycle0);
      }
      if (hit) {
        sum.reached_target = true;
        ++step;
        break;
      }
    }
  }
  save_t2i_checkpoint(ckpt_path, m, &opt_g, &opt_d, step, hash, best, cycle0);
  if (!std::filesystem::exists(best_path))
    save_t2i_checkpoint(best_path, m, &opt_g, &opt_d, step, hash, best, cycle0);
  sum.final_step = step;
  sum.best = best;
  return sum;
}

}  // namespace detail

/// Runs a training loop. `config_path` may be empty (defaults); --data and
/// --out override the config file's data_dir/out_dir. Writes the echoed
/// config, a CSV metrics log, periodic checkpoints, and a best-validation
/// checkpoint under out_dir.
inline TrainSummary cmd_train(const std::string& pipeline,
                              const std::string& config_path,
                              const std::string& data_dir,
                              const std::string& out_dir,
                              const std::string& resume_path = "",
                              bool force = false,
                              std::ostream& log = std::cout) {
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (cfg.data_dir.empty()) throw ValueError("train: no data directory given");
  if (cfg.out_dir.empty()) throw ValueError("train: no output directory given");
  detail::ensure_dir(cfg.out_dir);
  detail::write_text_file(detail::join_path(cfg.out_dir, "config.txt"),
                          cfg.echo());
  if (pipeline == "layout")
    return detail::train_layout(cfg, cfg.out_dir, resume_path, force, log);
  if (pipeline == "t2i")
    return detail::train_t2i(cfg, cfg.out_dir, resume_path, force, log);
  throw ValueError("train: pipeline must be layout|t2i, got '" + pipeline + "'");
}

// ---------------------------------------------------------------------------
// cmd_generate

/// Frozen-phase generation. Layout: `input` is an annotation json; each
/// sample writes a composite PNG plus a boxes json. T2I: `input` is a text
/// file whose first non-empty line is the caption; each sample writes one
/// PNG per stage. Derives per-sample noise from (seed, sample index).
inline int cmd_generate(const std::string& pipeline,
                        const std::string& checkpoint_path,
                        const std::string& input, int samples, uint64_t seed,
                        const std::string& out_dir) {
  if (samples <= 0) throw ValueError("generate: samples must be positive");
  detail::ensure_dir(out_dir);
  if (pipeline == "layout") {
    LayoutBundle b = load_layout_checkpoint(checkpoint_path);
    b.m.frozen = true;
    Scene scene = data::load_annotation(input);
    std::vector<Tensor> items;
    std::vector<int> cats;
    for (const auto& it : scene.items) {
      items.push_back(it.cutout);
      cats.push_back(int(it.category));
    }
    for (int k = 0; k < samples; ++k) {
      Rng nz(Rng::derive(seed, uint64_t(k)));
      Tensor noise = Tensor::randn({b.m.cfg.z_dim}, nz);
      auto res = layout::infer_composition(items, cats, noise, b.m);
      std::string stem = "sample_" + std::to_string(k);
      io::write_png(detail::join_path(out_dir, stem + ".png"),
                    io::tensor_to_image(res.image));
      nlohmann::json j;
      j["order"] = res.order.ids;
      auto& boxes = j["boxes"] = nlohmann::json::array();
      for (const auto& box : res.boxes)
        boxes.push_back({box.cx, box.cy, box.w, box.h});
      detail::write_text_file(detail::join_path(out_dir, stem + "_boxes.json"),
                              j.dump(2) + "\n");
    }
    return samples;
  }
  if (pipeline == "t2i") {
    T2IBundle b = load_t2i_checkpoint(checkpoint_path);
    b.m.frozen = true;
    std::istringstream is(detail::read_text_file(input));
    std::string line, caption;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) {
        caption = line;
        break;
      }
    }
    if (caption.empty()) throw DataError("generate: no caption in " + input);
    auto toks = data::tokenize(caption);
    if (int(toks.size()) + 1 > b.m.cfg.max_len)
      throw DataError("generate: caption has " + std::to_string(toks.size()) +
                      " tokens, checkpoint max_len is " +
                      std::to_string(b.m.cfg.max_len));
    for (int k = 0; k < samples; ++k) {
      Rng nz(Rng::derive(seed, uint64_t(k)));
      Tensor noise = Tensor::randn({b.m.cfg.z_dim}, nz);
      auto stages = t2i::infer_t2i(toks, noise, b.m);
      for (size_t s = 0; s < stages.size(); ++s) {
        Tensor img01 = scale(add_scalar(stages[s], 1.0), 0.5);
        io::write_png(detail::join_path(out_dir,
                                        "sample_" + std::to_string(k) +
                                            "_stage" + std::to_string(s) + ".png"),
                      io::tensor_to_image(img01));
      }
    }
    return samples;
  }
  throw ValueError("generate: pipeline must be layout|t2i, got '" + pipeline +
                   "'");
}

// ---------------------------------------------------------------------------
// cmd_eval

/// Scores a checkpoint on a dataset directory; returns the printable report.
inline std::string cmd_eval(const std::string& pipeline,
                            const std::string& checkpoint_path,
                            const std::string& data_dir) {
  std::vector<Scene> scenes = load_dataset(data_dir);
  if (pipeline == "layout") {
    LayoutBundle b = load_layout_checkpoint(checkpoint_path);
    b.m.frozen = true;
    NoGradScope ng;
    double iou = eval_layout_iou(scenes, b.m);
    double exact = 0.0, pairwise = 0.0, l1 = 0.0;
    for (size_t i = 0; i < scenes.size(); ++i) {
      const Scene& scene = scenes[i];
      auto v = detail::scene_order_view(scene);
      auto om = ordering::order_metrics(ordering::recover_order(ordering::build_occlusion_graph(scene)), v.order);
      exact += om.exact ? 1.0 : 0.0;
      pairwise += om.pairwise_accuracy;
      std::vector<Tensor> items;
      std::vector<int> cats;
      for (const auto& it : scene.items) {
        items.push_back(it.cutout);
        cats.push_back(int(it.category));
      }
      Rng nz(Rng::derive(kEvalSeed, i));
      Tensor noise = Tensor::randn({b.m.cfg.z_dim}, nz);
      auto res = layout::infer_composition(items, cats, noise, b.m);
      l1 += l1_loss(res.image, data::render_scene(scene)).item();
    }
    double n = double(scenes.size());
    return format_report({{"n_scenes", n},
                          {"mean_iou", iou},
                          {"order_exact_rate", exact / n},
                          {"order_pairwise_accuracy", pairwise / n},
                          {"composite_l1", l1 / n}});
  }
  if (pipeline == "t2i") {
    T2IBundle b = load_t2i_checkpoint(checkpoint_path);
    b.m.frozen = true;
    T2IData data = prepare_t2i_data(scenes, b.m.cfg);
    T2IEval ev = eval_t2i(scenes, data, b.m);
    std::vector<std::pair<std::string, double>> kv{
        {"n_scenes", double(scenes.size())},
        {"caption_class_accuracy", ev.acc},
        {"l_cycle_mean", ev.cycle}};
    double id_total = 0.0;
    for (size_t s = 0; s < ev.id_m.size(); ++s) {
      kv.emplace_back("l_id_m" + std::to_string(s), ev.id_m[s]);
      id_total += ev.id_m[s];
    }
    kv.emplace_back("l_id_total", id_total);
    return format_report(kv);
  }
  throw ValueError("eval: pipeline must be layout|t2i, got '" + pipeline + "'");
}

// ---------------------------------------------------------------------------
// cmd_gradcheck

/// Runs the registered finite-difference checks; returns the failure count.
inline int cmd_gradcheck(const std::string& module, std::ostream& out) {
  auto res = gradcheck::run_checks(module);
  for (const auto& line : res.lines) out << line << "\n";
  out << "gradcheck: " << (res.ran - res.failed) << "/" << res.ran
      << " checks passed\n";
  return res.failed;
}

}  // namespace bento::cli
