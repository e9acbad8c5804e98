#include "cmguard/checkpoint.hpp"

#include "json_util.hpp"

namespace cmguard {

using detail::field;
using detail::json;

namespace {

json train_json(const TrainConfig& c) {
  return {{"episodes", c.episodes},
          {"gamma", c.gamma},
          {"eps_start", c.eps_start},
          {"eps_end", c.eps_end},
          {"eps_decay_fraction", c.eps_decay_fraction},
          {"buffer_capacity", c.buffer_capacity},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"target_sync", c.target_sync},
          {"update_every", c.update_every},
          {"grad_clip", c.grad_clip},
          {"eval_every", c.eval_every},
          {"keep_best", c.keep_best},
          {"seed", c.seed},
          {"reward",
           {{"lambda", c.reward.lambda},
            {"utility", c.reward.utility == Utility::log_rate ? "log_rate" : "sum_rate"},
            {"rate_unit", c.reward.rate_unit}}}};
}

TrainConfig train_from(const json& j, const GnnDims& dims) {
  TrainConfig c;
  c.episodes = field<int>(j, "episodes");
  c.gamma = field<double>(j, "gamma");
  c.eps_start = field<double>(j, "eps_start");
  c.eps_end = field<double>(j, "eps_end");
  c.eps_decay_fraction = field<double>(j, "eps_decay_fraction");
  c.buffer_capacity = field<std::size_t>(j, "buffer_capacity");
  c.batch_size = field<std::size_t>(j, "batch_size");
  c.lr = field<double>(j, "lr");
  c.target_sync = field<int>(j, "target_sync");
  c.update_every = field<int>(j, "update_every");
  c.grad_clip = field<double>(j, "grad_clip");
  c.eval_every = field<int>(j, "eval_every");
  c.keep_best = field<bool>(j, "keep_best");
  c.seed = field<std::uint64_t>(j, "seed");
  c.dims = dims;
  const json& r = j.at("reward");
  c.reward.lambda = field<double>(r, "lambda");
  const auto u = field<std::string>(r, "utility");
  if (u != "log_rate" && u != "sum_rate") throw DataError("unknown utility '" + u + "'");
  c.reward.utility = u == "log_rate" ? Utility::log_rate : Utility::sum_rate;
  c.reward.rate_unit = field<double>(r, "rate_unit");
  return c;
}

json defense_json(const DefenseConfig& d) {
  return {{"kind", to_string(d.kind)},
          {"pnr_train_range", d.pnr_train_range},
          {"kappa", d.kappa},
          {"hinge_cap", d.hinge_cap},
          {"margin_on", d.margin_on == MarginOn::probs ? "probs" : "raw_q"},
          {"inner_steps", d.inner_steps},
          {"inner_restarts", d.inner_restarts},
          {"hinge_states", d.hinge_states},
          {"episodes", d.episodes},
          {"benign_per_attacked", d.benign_per_attacked},
          {"store_perturbed", d.store_perturbed},
          {"lr", d.lr},
          {"epsilon", d.epsilon},
          {"seed", d.seed},
          {"eval_every", d.eval_every},
          {"select_pnrs", d.select_pnrs}};
}

DefenseConfig defense_from(const json& j) {
  DefenseConfig d;
  d.kind = defense_kind_from(field<std::string>(j, "kind"));
  d.pnr_train_range = field<std::vector<double>>(j, "pnr_train_range");
  d.kappa = field<double>(j, "kappa");
  d.hinge_cap = field<double>(j, "hinge_cap");
  d.margin_on = field<std::string>(j, "margin_on") == "raw_q" ? MarginOn::raw_q : MarginOn::probs;
  d.inner_steps = field<int>(j, "inner_steps");
  d.inner_restarts = field<int>(j, "inner_restarts");
  d.hinge_states = field<int>(j, "hinge_states");
  d.episodes = field<int>(j, "episodes");
  d.benign_per_attacked = field<int>(j, "benign_per_attacked");
  d.store_perturbed = field<bool>(j, "store_perturbed");
  d.lr = field<double>(j, "lr");
  d.epsilon = field<double>(j, "epsilon");
  d.seed = field<std::uint64_t>(j, "seed");
  d.eval_every = field<int>(j, "eval_every");
  d.select_pnrs = field<std::vector<double>>(j, "select_pnrs");
  return d;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json params = json::object();
  ck.params.visit([&](const std::string& name, const Eigen::MatrixXd& m) { params[name] = detail::matrix_to_json(m); });
  json doc = {{"format", "cmguard-checkpoint"},
              {"version", kCheckpointVersion},
              {"dims", {{"hidden", ck.params.dims.hidden}, {"layers", ck.params.dims.layers}}},
              {"params", std::move(params)},
              {"norm", {{"min", ck.norm.min}, {"max", ck.norm.max}}},
              {"train", train_json(ck.train)}};
  if (ck.defense) doc["defense"] = defense_json(*ck.defense);
  detail::write_json_file(path, doc);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json doc = detail::read_json_file(path);
  if (field<std::string>(doc, "format") != "cmguard-checkpoint") throw DataError("not a checkpoint file");
  if (field<int>(doc, "version") != kCheckpointVersion)
    throw DataError("checkpoint version mismatch: expected " + std::to_string(kCheckpointVersion));
  Checkpoint ck;
  try {
    GnnDims dims;
    dims.hidden = field<int>(doc.at("dims"), "hidden");
    dims.layers = field<int>(doc.at("dims"), "layers");
    if (dims.hidden < 1 || dims.layers < 0 || dims.hidden > 4096 || dims.layers > 64)
      throw DataError("implausible dims header");
    ck.params = GnnParams::zeros(dims);
    const json& params = doc.at("params");
    std::size_t blocks = 0;
    ck.params.visit([&](const std::string& name, Eigen::MatrixXd& m) {
      if (!params.contains(name)) throw DataError("missing parameter block " + name);
      m = detail::matrix_from_json(params.at(name), m.rows(), m.cols(), name);
      ++blocks;
    });
    if (blocks != params.size()) throw DataError("unexpected parameter blocks for the dims header");
    if (!ck.params.all_finite()) throw DataError("non-finite parameters");
    const json& norm = doc.at("norm");
    ck.norm.min = field<std::array<double, 6>>(norm, "min");
    ck.norm.max = field<std::array<double, 6>>(norm, "max");
    ck.train = train_from(doc.at("train"), dims);
    if (doc.contains("defense")) ck.defense = defense_from(doc.at("defense"));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  return ck;
}

}  // namespace cmguard
