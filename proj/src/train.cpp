#include "fsncsr/train.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fsncsr/autodiff.hpp"

namespace fsncsr {

using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (total_steps < 1) throw std::invalid_argument("train.total_steps must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("train.checkpoint_every must be >= 1");
    optimizer.validate();
    noise.validate();
}

StepResult train_step(flow::FlowModel& model, const std::vector<Image>& batch,
                      const TrainConfig& cfg, std::int64_t step, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const int scale = model.config().scale;

    std::vector<TrainingPair> pairs;
    pairs.reserve(batch.size());
    for (const Image& crop : batch) {
        pairs.push_back(make_training_pair(crop, scale, cfg.noise, rng));
    }

    if (!model.actnorm_initialized()) {
        std::vector<Tensor> xs;
        std::vector<flow::Condition> conds;
        for (const auto& p : pairs) {
            xs.push_back(p.x_hf_plus);
            conds.push_back(p.cond);
        }
        model.init_actnorm_from_batch(xs, conds);
    }

    ad::Graph g;
    ad::Value loss;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ad::Value term = model.nll_bits_value(g, pairs[i].x_hf_plus, pairs[i].cond);
        loss = i == 0 ? term : ad::add(loss, term);
    }
    loss = ad::mul_scalar(loss, 1.0 / static_cast<double>(pairs.size()));

    StepResult result;
    result.bits_per_dim = loss.scalar();
    result.lr = optim::lr_schedule(step, cfg.optimizer);
    if (!std::isfinite(result.bits_per_dim)) {
        std::string layer;
        for (const auto& p : pairs) {
            layer = model.diagnose_non_finite(p.x_hf_plus, p.cond);
            if (!layer.empty()) break;
        }
        throw TrainDivergence("non-finite loss at step " + std::to_string(step) +
                              (layer.empty() ? "" : " (first bad layer: " + layer + ")"));
    }

    g.backward(loss);
    optim::adam_step(model.params(), g.grads(), cfg.optimizer, step);
    return result;
}

namespace {

json rng_state_json(const Rng& rng) {
    const Rng::FullState st = rng.full_state();
    return json{{"words", st.words}, {"has_spare", st.has_spare}, {"spare_bits", st.spare_bits}};
}

void restore_rng_state(Rng& rng, const json& j) {
    Rng::FullState st;
    const auto words = j.at("words").get<std::vector<std::uint64_t>>();
    if (words.size() != 4) throw std::runtime_error("checkpoint: malformed rng state");
    std::copy(words.begin(), words.end(), st.words.begin());
    st.has_spare = j.at("has_spare").get<bool>();
    st.spare_bits = j.at("spare_bits").get<std::uint64_t>();
    rng.set_full_state(st);
}

void atomic_rename_save(const flow::FlowModel& model, std::int64_t step, const json& extra,
                        const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    flow::save_checkpoint(tmp, model, step, extra.dump());
    std::filesystem::rename(tmp, path);
}

}  // namespace

TrainResult train_loop(flow::FlowModel& model, const Dataset& data, const TrainConfig& cfg,
                       const TrainLoopOptions& opt) {
    cfg.validate();
    std::filesystem::create_directories(opt.out_dir);
    const std::filesystem::path log_path = opt.out_dir / opt.log_name;

    Rng rng(cfg.seed);
    std::int64_t start_step = 0;
    if (!opt.resume_from.empty()) {
        flow::Checkpoint ckpt = flow::load_checkpoint(opt.resume_from);
        if (ckpt.config.hash() != model.config().hash()) {
            throw std::runtime_error("resume: checkpoint config hash does not match this model");
        }
        flow::restore_params(model, ckpt);
        const json extra = json::parse(ckpt.extra_state_json);
        restore_rng_state(rng, extra.at("rng"));
        start_step = ckpt.step;
        if (start_step >= cfg.total_steps) {
            throw std::runtime_error("resume: checkpoint is already at or past total_steps");
        }
    }

    std::ofstream log(log_path, start_step == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open training log " + log_path.string());

    TrainResult result;
    for (std::int64_t step = start_step + 1; step <= cfg.total_steps; ++step) {
        std::vector<Image> batch = sample_batch(data, cfg.batch_size, rng);
        const StepResult sr = train_step(model, batch, cfg, step, rng);
        char line[128];
        std::snprintf(line, sizeof(line), "%lld\t%.10g\t%.10g\n", static_cast<long long>(step),
                      sr.lr, sr.bits_per_dim);
        log << line;
        log.flush();
        if (opt.echo) std::fputs(line, stdout);
        result.bits_history.push_back(sr.bits_per_dim);
        ++result.steps_run;

        const bool at_end = step == cfg.total_steps;
        if (step % cfg.checkpoint_every == 0 && !at_end) {
            const auto path =
                opt.out_dir / (opt.ckpt_prefix + "_step" + std::to_string(step) + ".fsnc");
            atomic_rename_save(model, step, json{{"rng", rng_state_json(rng)}}, path);
        }
        if (at_end) {
            result.final_checkpoint = opt.out_dir / (opt.ckpt_prefix + "_final.fsnc");
            atomic_rename_save(model, step, json{{"rng", rng_state_json(rng)}},
                               result.final_checkpoint);
        }
    }
    return result;
}

}  // namespace fsncsr
