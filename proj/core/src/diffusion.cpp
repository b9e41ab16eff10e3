#include "medsynth/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "medsynth/error.hpp"
#include "medsynth/parallel.hpp"

namespace medsynth {
namespace {

constexpr const char* kMomentPrefix = "adam.m/";
constexpr const char* kVariancePrefix = "adam.v/";

void adam_update(NetworkParams& params, const std::vector<std::vector<double>>& grads, double lr, AdamState& s) {
    if (s.m.size() != params.tensors.size() || s.v.size() != params.tensors.size())
        throw ShapeError("optimizer state does not match the parameter list");
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        auto& p = params.tensors[k].values;
        auto& m = s.m[k];
        auto& v = s.v[k];
        const auto& g = grads[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
        }
        round_to_float32(m);
        round_to_float32(v);
        if (lr == 0.0) continue;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
        round_to_float32(p);
    }
}

std::string encode_history(const TrainingHistory& h) {
    std::string out;
    for (const auto& r : h.records) {
        if (!out.empty()) out += ';';
        out += std::to_string(r.epoch) + ':' + format_number(r.loss) + ':' + format_number(r.fid) + ':' +
               format_number(r.ssim) + ':' + format_number(r.psnr);
    }
    return out;
}

TrainingHistory decode_history(const std::string& text) {
    TrainingHistory h;
    std::istringstream rows(text);
    for (std::string row; std::getline(rows, row, ';');) {
        if (row.empty()) continue;
        std::string csv = row;
        std::replace(csv.begin(), csv.end(), ':', ',');
        TrainingHistory one = parse_history_csv(history_csv_header() + "\n" + csv + "\n");
        h.records.insert(h.records.end(), one.records.begin(), one.records.end());
    }
    return h;
}

const std::string& meta(const Checkpoint& c, const std::string& key) {
    auto it = c.metadata.find(key);
    if (it == c.metadata.end()) throw DataError("checkpoint lacks training state '" + key + "'");
    return it->second;
}

Checkpoint make_checkpoint(const NetworkParams& params, const NoiseSchedule& schedule, const TrainConfig& config,
                           const AdamState& adam, const Rng& rng, int epoch, const TrainingHistory& history,
                           const std::map<std::string, std::string>& extra) {
    Checkpoint c;
    c.params = params;
    c.metadata = extra;
    c.schedule = schedule;
    c.metadata["train.epoch"] = std::to_string(epoch);
    c.metadata["train.seed"] = std::to_string(config.seed);
    c.metadata["train.rng"] = rng.state();
    c.metadata["train.adam_step"] = std::to_string(adam.step);
    c.metadata["train.history"] = encode_history(history);
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        const auto& t = params.tensors[k];
        c.optimizer.push_back({kMomentPrefix + t.name, t.shape, adam.m[k]});
        c.optimizer.push_back({kVariancePrefix + t.name, t.shape, adam.v[k]});
    }
    return c;
}

void restore_optimizer(const Checkpoint& c, AdamState& adam) {
    adam.step = std::stol(meta(c, "train.adam_step"));
    for (std::size_t k = 0; k < c.params.tensors.size(); ++k) {
        const std::string& name = c.params.tensors[k].name;
        bool found_m = false, found_v = false;
        for (const auto& t : c.optimizer) {
            if (t.values.size() != adam.m[k].size()) continue;
            if (t.name == kMomentPrefix + name) adam.m[k] = t.values, found_m = true;
            if (t.name == kVariancePrefix + name) adam.v[k] = t.values, found_v = true;
        }
        if (!found_m || !found_v) throw DataError("checkpoint lacks optimizer state for " + name);
    }
}

void check_output(const ImageTensor& img, int t) {
    if (!img.all_finite()) throw DivergenceError("non-finite value while sampling at step " + std::to_string(t), t);
}

} // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
    if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be finite and >= 0");
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw InvalidArgument("p_drop must lie in [0, 1]");
    if (eval_every < 0) throw InvalidArgument("eval_every must be non-negative");
}

void GuidanceConfig::validate(const NoiseSchedule& schedule) const {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("guidance weight w must be finite and >= 0");
    if (sample_steps < 0 || sample_steps > schedule.steps)
        throw InvalidArgument("sample_steps must lie in [1, " + std::to_string(schedule.steps) + "]");
}

AdamState AdamState::for_params(const NetworkParams& params) {
    AdamState s;
    for (const auto& t : params.tensors) {
        s.m.emplace_back(t.numel(), 0.0);
        s.v.emplace_back(t.numel(), 0.0);
    }
    return s;
}

MaskedContext apply_context_mask(const OneHotBatch& classes, double p_drop, Rng& rng) {
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw InvalidArgument("p_drop must lie in [0, 1]");
    MaskedContext out{classes, {}};
    const std::size_t n = classes.batch_size();
    out.mask.keep.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool keep = !rng.bernoulli(p_drop);
        out.mask.keep[i] = keep ? 1 : 0;
        if (!keep)
            std::fill_n(out.classes.values.begin() + static_cast<long>(i * classes.n_classes), classes.n_classes, 0.0);
    }
    return out;
}

double train_step(NetworkParams& params, std::span<const ImageTensor> images, std::span<const int> labels,
                  const NoiseSchedule& schedule, const TrainConfig& config, AdamState& optimizer, Rng& rng) {
    if (images.empty()) throw InvalidArgument("train_step needs a non-empty batch");
    if (labels.size() != images.size()) throw ShapeError("one label per image is required");
    config.validate();

    NetworkInput input;
    input.steps = schedule.steps;
    std::vector<ImageTensor> eps;
    eps.reserve(images.size());
    for (const auto& x0 : images) {
        const int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(schedule.steps)));
        ImageTensor e(x0.height, x0.width);
        for (double& v : e.values) v = rng.normal();
        input.xt.push_back(q_sample(x0, t, e, schedule));
        input.t.push_back(t);
        eps.push_back(std::move(e));
    }
    MaskedContext ctx = apply_context_mask(OneHotBatch::from_labels(labels, params.config.n_classes), config.p_drop, rng);
    input.classes = std::move(ctx.classes);
    input.mask = std::move(ctx.mask);

    LossGradients lg = gradients(params, input, eps, NormMode::Train);
    if (!std::isfinite(lg.loss)) throw DivergenceError("non-finite training loss", -1);
    adam_update(params, lg.grads, config.learning_rate, optimizer);
    update_running_stats(params, lg.batch_stats);
    return lg.loss;
}

TrainResult train(const LabeledImageSet& dataset, const NetworkConfig& network, const TrainConfig& config,
                  const NoiseSchedule& schedule, const TrainOptions& options) {
    config.validate();
    network.validate();
    if (dataset.empty()) throw InvalidArgument("training set is empty");
    dataset.validate();
    for (int label : dataset.labels)
        if (label < 0 || label >= network.n_classes) throw InvalidArgument("label outside [0, n_classes)");

    std::vector<ImageTensor> images;
    images.reserve(dataset.size());
    for (const auto& img : dataset.images) {
        if (img.height != network.image_size || img.width != network.image_size)
            throw ShapeError("dataset image size differs from the network config");
        images.push_back(to_model_range(img));
    }

    TrainResult result;
    NetworkParams params;
    AdamState adam;
    Rng rng(derive_seed(config.seed, 1));
    int start_epoch = 0;
    if (options.resume) {
        const Checkpoint& c = *options.resume;
        if (!(c.params.config == network)) throw InvalidArgument("resume checkpoint has a different network config");
        if (c.schedule.steps != schedule.steps || c.schedule.beta_start != schedule.beta_start ||
            c.schedule.beta_end != schedule.beta_end)
            throw InvalidArgument("resume checkpoint has a different noise schedule");
        params = c.params;
        adam = AdamState::for_params(params);
        restore_optimizer(c, adam);
        rng.restore(meta(c, "train.rng"));
        start_epoch = std::stoi(meta(c, "train.epoch"));
        result.history = decode_history(meta(c, "train.history"));
    } else {
        params = init_network(network, derive_seed(config.seed, 0));
        adam = AdamState::for_params(params);
    }

    std::vector<std::size_t> order(images.size());
    std::vector<ImageTensor> batch;
    std::vector<int> batch_labels;
    for (int epoch = start_epoch + 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t seen = 0;
        try {
            for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
                batch.clear();
                batch_labels.clear();
                for (std::size_t k = begin; k < end; ++k) {
                    batch.push_back(images[order[k]]);
                    batch_labels.push_back(dataset.labels[order[k]]);
                }
                const double loss = train_step(params, batch, batch_labels, schedule, config, adam, rng);
                loss_sum += loss * static_cast<double>(end - begin);
                seen += end - begin;
            }
        } catch (const DivergenceError& e) {
            throw DivergenceError(std::string(e.what()) + " in epoch " + std::to_string(epoch), epoch);
        }
        const double epoch_loss = loss_sum / static_cast<double>(seen);
        result.epoch_losses.push_back(epoch_loss);
        if (options.on_epoch) options.on_epoch(epoch, epoch_loss);

        if (config.eval_every > 0 && epoch % config.eval_every == 0) {
            HistoryRecord rec{epoch, epoch_loss, std::nan(""), std::nan(""), std::nan("")};
            if (options.evaluate) {
                const EvalPoint p = options.evaluate(params, epoch);
                rec.fid = p.fid;
                rec.ssim = p.ssim;
                rec.psnr = p.psnr;
            }
            result.history.records.push_back(rec);
        }
        if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 && epoch % options.checkpoint_every == 0)
            save_checkpoint(options.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"),
                            make_checkpoint(params, schedule, config, adam, rng, epoch, result.history, options.metadata));
    }

    const int last = std::max(start_epoch, config.epochs);
    result.checkpoint = make_checkpoint(params, schedule, config, adam, rng, last, result.history, options.metadata);
    if (!options.checkpoint_dir.empty()) save_checkpoint(options.checkpoint_dir / "final.ckpt", result.checkpoint);
    return result;
}

ImageTensor cfg_combine(const ImageTensor& eps_cond, const ImageTensor& eps_uncond, double w) {
    if (!eps_cond.same_shape(eps_uncond) || eps_cond.size() != eps_uncond.size())
        throw ShapeError("cfg_combine: prediction shapes differ");
    if (!(w >= 0.0)) throw InvalidArgument("guidance weight must be >= 0");
    ImageTensor out(eps_cond.height, eps_cond.width);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = cfg_combine(eps_cond.values[i], eps_uncond.values[i], w);
    return out;
}

double cfg_combine(double eps_cond, double eps_uncond, double w) { return (1.0 + w) * eps_cond - w * eps_uncond; }

NoisePredictor network_predictor(const NetworkParams& params) {
    return [&params](const NetworkInput& input) { return forward(params, input, NormMode::Inference); };
}

std::vector<ImageTensor> sample_with(const NoisePredictor& predictor, const NoiseSchedule& schedule, int n_classes,
                                     int image_size, int class_label, int count, const GuidanceConfig& guidance,
                                     std::uint64_t seed, const SampleOptions& options) {
    guidance.validate(schedule);
    if (class_label < 0 || class_label >= n_classes) throw InvalidArgument("class label outside [0, n_classes)");
    if (count < 0) throw InvalidArgument("count must be non-negative");
    if (options.chunk < 1) throw InvalidArgument("chunk size must be positive");
    const int steps = guidance.sample_steps == 0 ? schedule.steps : guidance.sample_steps;
    const bool guided = guidance.w != 0.0;

    std::vector<ImageTensor> out(static_cast<std::size_t>(count));
    const std::size_t chunks = (out.size() + options.chunk - 1) / options.chunk;
    parallel_for(chunks, options.threads, [&](std::size_t c) {
        const std::size_t begin = c * options.chunk;
        const std::size_t end = std::min(out.size(), begin + options.chunk);
        const std::size_t n = end - begin;
        std::vector<Rng> rngs;
        std::vector<ImageTensor> x;
        for (std::size_t i = begin; i < end; ++i) {
            rngs.emplace_back(derive_seed(seed, i));
            ImageTensor img(image_size, image_size);
            for (double& v : img.values) v = rngs.back().normal();
            x.push_back(std::move(img));
        }

        NetworkInput input;
        input.steps = schedule.steps;
        const std::size_t rows = guided ? 2 * n : n;
        input.classes.n_classes = n_classes;
        input.classes.values.assign(rows * n_classes, 0.0);
        input.mask.keep.assign(rows, 0);
        for (std::size_t i = 0; i < n; ++i) {
            input.classes.values[i * n_classes + class_label] = 1.0;
            input.mask.keep[i] = 1;
        }
        for (int t = steps; t >= 1; --t) {
            input.xt = x;
            if (guided) input.xt.insert(input.xt.end(), x.begin(), x.end());
            input.t.assign(rows, t);
            std::vector<ImageTensor> eps;
            try {
                eps = predictor(input);
            } catch (const DivergenceError&) {
                throw DivergenceError("non-finite value while sampling at step " + std::to_string(t), t);
            }
            if (eps.size() != rows) throw ShapeError("noise predictor returned the wrong batch size");
            for (std::size_t i = 0; i < n; ++i) {
                const ImageTensor combined = guided ? cfg_combine(eps[i], eps[n + i], guidance.w) : eps[i];
                ImageTensor z(image_size, image_size);
                if (t > 1)
                    for (double& v : z.values) v = rngs[i].normal();
                x[i] = reverse_step(x[i], t, combined, z, schedule);
                check_output(x[i], t);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (double& v : x[i].values) v = std::clamp(v, -1.0, 1.0);
            out[begin + i] = std::move(x[i]);
        }
    });
    return out;
}

std::vector<ImageTensor> sample(const NetworkParams& params, const NoiseSchedule& schedule, int class_label,
                                int count, const GuidanceConfig& guidance, std::uint64_t seed,
                                const SampleOptions& options) {
    return sample_with(network_predictor(params), schedule, params.config.n_classes, params.config.image_size,
                       class_label, count, guidance, seed, options);
}

LabeledImageSet sample_dataset(const NetworkParams& params, const NoiseSchedule& schedule,
                               const std::vector<std::string>& class_names, int per_class,
                               const GuidanceConfig& guidance, std::uint64_t seed, const SampleOptions& options) {
    if (static_cast<int>(class_names.size()) != params.config.n_classes)
        throw InvalidArgument("class name count differs from the network's n_classes");
    LabeledImageSet set;
    set.class_names = class_names;
    for (int c = 0; c < params.config.n_classes; ++c) {
        for (auto& img : sample(params, schedule, c, per_class, guidance, derive_seed(seed, static_cast<std::uint64_t>(c)), options)) {
            set.images.push_back(to_file_range(img));
            set.labels.push_back(c);
        }
    }
    return set;
}

} // namespace medsynth
