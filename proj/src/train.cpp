#include "colontcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

namespace ctcn {

void OptimConfig::validate() const {
    if (lr_final > lr0) throw ConfigError("optim: lr_final must be <= lr0");
    if (total_iters < 1) throw ConfigError("optim: total_iters must be >= 1");
    if (batch_size < 1) throw ConfigError("optim: batch_size must be >= 1");
    if (eval_every < 1) throw ConfigError("optim: eval_every must be >= 1");
    if (burn_in_iters < 0) throw ConfigError("optim: burn_in_iters must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be >= 0");
}

double lr_at(std::int64_t iter, const OptimConfig& cfg) {
    require(iter >= 0 && iter <= cfg.total_iters, "lr_at: iteration out of range");
    const double t = double(iter) / double(cfg.total_iters);
    return cfg.lr0 + (cfg.lr_final - cfg.lr0) * t;
}

OptimState init_optim_state(ModelParams& params) {
    OptimState st;
    for_each_tensor(params, [&](const std::string&, std::vector<double>& value,
                                std::vector<double>&) {
        st.m.emplace_back(value.size(), 0.0);
        st.v.emplace_back(value.size(), 0.0);
    });
    return st;
}

void adamw_step(ModelParams& params, OptimState& state, double lr, const OptimConfig& cfg) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    std::size_t idx = 0;
    for_each_tensor(params, [&](const std::string& name, std::vector<double>& theta,
                                std::vector<double>& grad) {
        std::vector<double>& m = state.m[idx];
        std::vector<double>& v = state.v[idx];
        ++idx;
        // Biases are exempt from decoupled weight decay.
        const bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, "/b") == 0;
        const double wd = is_bias ? 0.0 : cfg.weight_decay;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = grad[i];
            if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient in " + name);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + wd * theta[i]);
        }
    });
}

// ---- folds ----

void validate_folds(const std::vector<FoldSpec>& folds) {
    std::map<std::string, int> tested;
    for (const FoldSpec& f : folds) {
        std::set<std::string> seen;
        auto check = [&](const std::vector<std::string>& ids, const char* split) {
            for (const std::string& id : ids)
                if (!seen.insert(id).second)
                    throw ConfigError("fold " + std::to_string(f.fold_id) + ": video " + id +
                                      " appears in more than one split (" + split + ")");
        };
        check(f.train_ids, "train");
        check(f.valid_ids, "valid");
        check(f.test_ids, "test");
        if (f.train_ids.empty() || f.test_ids.empty())
            throw ConfigError("fold " + std::to_string(f.fold_id) + ": empty train or test split");
        for (const std::string& id : f.test_ids) {
            auto [it, fresh] = tested.emplace(id, f.fold_id);
            if (!fresh)
                throw ConfigError("video " + id + " is tested in folds " +
                                  std::to_string(it->second) + " and " +
                                  std::to_string(f.fold_id));
        }
    }
}

std::vector<FoldSpec> load_folds(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open folds file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("folds " + path + ": " + e.what());
    }
    std::vector<FoldSpec> folds;
    try {
        for (const auto& jf : j.at("folds")) {
            FoldSpec f;
            f.fold_id = jf.at("fold_id").get<int>();
            f.scheme = j.at("scheme").get<std::string>();
            f.train_ids = jf.at("train").get<std::vector<std::string>>();
            f.valid_ids = jf.at("valid").get<std::vector<std::string>>();
            f.test_ids = jf.at("test").get<std::vector<std::string>>();
            folds.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("folds " + path + ": " + e.what());
    }
    return folds;
}

void save_folds(const std::vector<FoldSpec>& folds, const std::string& path) {
    nlohmann::json j;
    j["scheme"] = folds.empty() ? "" : folds.front().scheme;
    j["folds"] = nlohmann::json::array();
    for (const FoldSpec& f : folds)
        j["folds"].push_back({{"fold_id", f.fold_id},
                              {"train", f.train_ids},
                              {"valid", f.valid_ids},
                              {"test", f.test_ids}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write folds file: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("failed writing folds file: " + path);
}

namespace {

std::map<std::string, std::vector<std::string>> videos_by_cohort(const Manifest& manifest) {
    std::map<std::string, std::vector<std::string>> by_cohort;
    for (const ManifestEntry& e : manifest.videos) by_cohort[e.cohort].push_back(e.video_id);
    return by_cohort;
}

}  // namespace

std::vector<FoldSpec> make_5fold(const Manifest& manifest, RngStream& rng) {
    auto by_cohort = videos_by_cohort(manifest);
    // Shuffle each cohort once, then rotate disjoint test windows so each
    // video lands in exactly one test set.
    std::map<std::string, std::vector<std::string>> shuffled;
    for (auto& [cohort, ids] : by_cohort) {
        std::vector<std::string> v = ids;
        std::sort(v.begin(), v.end());
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[rng.next_below(i)]);
        shuffled[cohort] = std::move(v);
    }

    const int k = 5;
    std::vector<FoldSpec> folds;
    for (int f = 0; f < k; ++f) {
        FoldSpec spec;
        spec.fold_id = f + 1;
        spec.scheme = "5fold";
        for (auto& [cohort, ids] : shuffled) {
            const std::size_t n = ids.size();
            const std::size_t chunk = n / k;
            if (chunk == 0)
                throw ConfigError("make_5fold: cohort " + cohort + " has fewer than 5 videos");
            const std::size_t lo = std::size_t(f) * chunk;
            const std::size_t hi = (f == k - 1) ? n : lo + chunk;
            for (std::size_t i = 0; i < n; ++i) {
                if (i >= lo && i < hi)
                    spec.test_ids.push_back(ids[i]);
                else if (i == (hi % n))
                    spec.valid_ids.push_back(ids[i]);
                else
                    spec.train_ids.push_back(ids[i]);
            }
        }
        folds.push_back(std::move(spec));
    }
    validate_folds(folds);
    return folds;
}

std::vector<FoldSpec> make_4fold(const Manifest& manifest) {
    auto by_cohort = videos_by_cohort(manifest);
    if (by_cohort.size() < 3)
        throw ConfigError("make_4fold: needs at least 3 cohorts, got " +
                          std::to_string(by_cohort.size()));
    std::vector<std::string> cohorts;
    for (auto& [cohort, ids] : by_cohort) cohorts.push_back(cohort);
    std::sort(cohorts.begin(), cohorts.end());

    std::vector<FoldSpec> folds;
    for (std::size_t f = 0; f < cohorts.size(); ++f) {
        FoldSpec spec;
        spec.fold_id = int(f) + 1;
        spec.scheme = "4fold";
        const std::string& test_cohort = cohorts[f];
        const std::string& valid_cohort = cohorts[(f + 1) % cohorts.size()];
        for (const std::string& cohort : cohorts) {
            const std::vector<std::string>& ids = by_cohort[cohort];
            if (cohort == test_cohort)
                spec.test_ids.insert(spec.test_ids.end(), ids.begin(), ids.end());
            else if (cohort == valid_cohort)
                spec.valid_ids.insert(spec.valid_ids.end(), ids.begin(), ids.end());
            else
                spec.train_ids.insert(spec.train_ids.end(), ids.begin(), ids.end());
        }
        folds.push_back(std::move(spec));
    }
    validate_folds(folds);
    return folds;
}

// ---- training ----

ClassWeights train_split_class_weights(const std::vector<FeatureSequence>& train,
                                       int num_classes) {
    std::vector<std::int64_t> counts(std::size_t(num_classes), 0);
    for (const FeatureSequence& seq : train)
        for (std::size_t t = 0; t < seq.labels.size(); ++t)
            if (seq.mask[t] && seq.labels[t] >= 0 && seq.labels[t] < num_classes)
                ++counts[std::size_t(seq.labels[t])];
    return median_frequency_weights(counts);
}

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

struct SeqView {
    const SeqMatrix* features;
    const std::vector<int>* labels;
    const FrameMask* mask;
    std::size_t frames;
};

// Forward + loss (+ optional backward) for one sequence, trimmed to its true
// length so padded frames are never touched.
double sequence_loss(const SeqView& sv, const ModelConfig& cfg, const ModelParams& params,
                     const ClassWeights& weights, const LossConfig& loss_cfg, RngStream rng,
                     bool training, ModelParams* grad_sink, double grad_scale) {
    SeqMatrix x(sv.frames, sv.features->cols());
    std::copy(sv.features->data(), sv.features->data() + x.size(), x.data());
    std::vector<int> labels(sv.labels->begin(), sv.labels->begin() + long(sv.frames));
    FrameMask mask(sv.mask->begin(), sv.mask->begin() + long(sv.frames));

    if (!grad_sink) {
        ProbOutput out = multistage_forward(x, cfg, params, rng, training);
        std::vector<SeqMatrix> logs;
        std::vector<const SeqMatrix*> ptrs;
        logs.reserve(out.stages.size());
        for (const SeqMatrix& probs : out.stages) {
            SeqMatrix lp(probs.rows(), probs.cols());
            for (std::size_t i = 0; i < probs.size(); ++i)
                lp.data()[i] = std::log(probs.data()[i]);
            logs.push_back(std::move(lp));
        }
        for (const SeqMatrix& lp : logs) ptrs.push_back(&lp);
        std::vector<SeqMatrix> no_grads;
        return combined_loss_grad(ptrs, labels, weights, loss_cfg, mask, no_grads);
    }

    std::vector<StageTape> tapes = multistage_forward_tape(x, cfg, params, rng, training);
    std::vector<const SeqMatrix*> ptrs;
    for (const StageTape& t : tapes) ptrs.push_back(&t.log_probs);
    std::vector<SeqMatrix> grads(tapes.size());
    const double value = combined_loss_grad(ptrs, labels, weights, loss_cfg, mask, grads);
    for (SeqMatrix& g : grads)
        for (double& v : g.raw()) v *= grad_scale;
    multistage_backward(tapes, cfg, *grad_sink, grads);
    return value;
}

void accumulate_grads(ModelParams& dst, ModelParams& src) {
    std::vector<std::vector<double>*> dst_grads, src_grads;
    for_each_tensor(dst, [&](const std::string&, std::vector<double>&, std::vector<double>& g) {
        dst_grads.push_back(&g);
    });
    for_each_tensor(src, [&](const std::string&, std::vector<double>&, std::vector<double>& g) {
        src_grads.push_back(&g);
    });
    for (std::size_t i = 0; i < dst_grads.size(); ++i) {
        std::vector<double>& a = *dst_grads[i];
        const std::vector<double>& b = *src_grads[i];
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    }
}

}  // namespace

double batch_loss(const Batch& batch, const ModelConfig& cfg, const ModelParams& params,
                  const ClassWeights& weights, const LossConfig& loss_cfg, RngStream& rng,
                  bool training, ModelParams* params_grad, int threads) {
    require(batch.size() > 0, "batch_loss: empty batch");
    const int nthreads = std::min<int>(resolve_threads(threads), int(batch.size()));
    const double grad_scale = 1.0 / double(batch.size());

    std::vector<SeqView> views(batch.size());
    std::vector<RngStream> streams(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        views[b] = {&batch.features[b], &batch.labels[b], &batch.masks[b], batch.lengths[b]};
        streams[b] = rng.derive(b);
    }
    rng.next_u64();  // advance the parent stream once per batch

    std::vector<double> losses(batch.size(), 0.0);
    std::vector<ModelParams> locals;
    std::exception_ptr failure;
    std::mutex failure_mu;

    if (params_grad) {
        // Private sinks carry the parameter values too: the backward pass
        // reads weights while accumulating into the sink's gradient buffers.
        locals.reserve(std::size_t(nthreads));
        for (int i = 0; i < nthreads; ++i) {
            locals.push_back(params);
            locals.back().zero_grads();
        }
    }

    auto worker = [&](int tid) {
        try {
            for (std::size_t b = std::size_t(tid); b < batch.size(); b += std::size_t(nthreads)) {
                ModelParams* sink = params_grad ? &locals[std::size_t(tid)] : nullptr;
                losses[b] = sequence_loss(views[b], cfg, params, weights, loss_cfg, streams[b],
                                          training, sink, grad_scale);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
        }
    };

    if (nthreads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    // Merge private buffers in fixed thread order for bit determinism.
    if (params_grad)
        for (ModelParams& local : locals) accumulate_grads(*params_grad, local);

    double total = 0.0;
    for (double l : losses) total += l;
    return total / double(batch.size());
}

std::vector<int> predict_labels(const SeqMatrix& features, const ModelConfig& cfg,
                                const ModelParams& params) {
    RngStream rng(0);
    ProbOutput out = multistage_forward(features, cfg, params, rng, /*training=*/false);
    const SeqMatrix& probs = out.last();
    std::vector<int> labels(probs.rows());
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        const double* row = probs.row(t);
        int best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (row[c] > row[std::size_t(best)]) best = int(c);
        labels[t] = best;
    }
    return labels;
}

MetricsReport evaluate_videos(const std::vector<FeatureSequence>& videos, const ModelConfig& cfg,
                              const ModelParams& params, int threads) {
    require(!videos.empty(), "evaluate_videos: no videos");
    const int nthreads = std::min<int>(resolve_threads(threads), int(videos.size()));

    std::vector<ConfusionCounts> counts(videos.size());
    std::vector<VideoWithdrawal> withdrawals(videos.size());
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto worker = [&](int tid) {
        try {
            for (std::size_t i = std::size_t(tid); i < videos.size(); i += std::size_t(nthreads)) {
                const FeatureSequence& v = videos[i];
                const std::vector<int> pred = predict_labels(v.features, cfg, params);
                counts[i] = confusion(pred, v.labels, v.mask, std::size_t(cfg.base.num_classes));
                VideoWithdrawal w;
                w.video_id = v.video_id;
                w.actual = withdrawal_frames(v.labels, v.mask, int(LabelClass::Outside),
                                             int(LabelClass::Insertion));
                w.predicted = withdrawal_frames(pred, v.mask, int(LabelClass::Outside),
                                                int(LabelClass::Insertion));
                withdrawals[i] = std::move(w);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
        }
    };
    if (nthreads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    ConfusionCounts total(std::size_t(cfg.base.num_classes));
    for (const ConfusionCounts& c : counts) total += c;
    return make_report(total, withdrawals);
}

TrainResult train_loop(const TrainDataset& data, const TrainOptions& opts,
                       const std::function<void(const HistoryRecord&)>& on_iter,
                       const std::function<void(const EvalRecord&)>& on_eval) {
    if (data.train.empty() || data.valid.empty())
        throw DataError("train_loop: train and validation splits must be non-empty");
    opts.model.validate();
    opts.optim.validate();

    RngStream run_rng(opts.seed);
    RngStream init_rng = run_rng.derive(1);
    RngStream shuffle_rng = run_rng.derive(2);
    RngStream augment_rng = run_rng.derive(3);

    ModelParams params = opts.resume ? opts.resume->params : init_params(opts.model, init_rng);
    OptimState optim = opts.resume && opts.resume->optim ? *opts.resume->optim
                                                         : init_optim_state(params);
    const std::int64_t start_iter = opts.resume ? opts.resume->iteration : 0;

    const ClassWeights weights =
        train_split_class_weights(data.train, opts.model.base.num_classes);

    TrainResult result;
    result.best.config = opts.model;
    result.best.seed = opts.seed;
    result.best.validation_wf1 = opts.resume ? opts.resume->validation_wf1 : -1.0;
    result.best.iteration = opts.resume ? opts.resume->iteration : 0;
    if (opts.resume && opts.resume->validation_wf1 >= 0.0) result.best.params = opts.resume->params;

    // Shuffled epoch order over train videos, consumed batch by batch.
    std::vector<std::size_t> order;
    auto refill = [&]() {
        order.resize(data.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    };
    // Replay the shuffle/augment streams consumed before the resume point.
    std::size_t cursor = 0;
    refill();
    for (std::int64_t it = 0; it < start_iter; ++it) {
        for (int b = 0; b < opts.optim.batch_size; ++b) {
            if (cursor == order.size()) {
                refill();
                cursor = 0;
            }
            if (opts.temporal_augment) augment_rng.next_u64();
            ++cursor;
        }
    }

    ModelParams grad_sink = zero_params(opts.model);

    for (std::int64_t iter = start_iter; iter < opts.optim.total_iters; ++iter) {
        // Assemble the batch for this iteration, keeping draw order.
        std::vector<FeatureSequence> augmented;
        augmented.reserve(std::size_t(opts.optim.batch_size));
        std::vector<const FeatureSequence*> members;
        for (int b = 0; b < opts.optim.batch_size; ++b) {
            if (cursor == order.size()) {
                refill();
                cursor = 0;
            }
            const FeatureSequence& seq = data.train[order[cursor]];
            ++cursor;
            if (opts.temporal_augment) {
                RngStream arng = augment_rng.derive(augment_rng.next_u64());
                if (seq.fps > opts.target_fps) {
                    augmented.push_back(temporal_augment(seq, arng, opts.target_fps));
                    members.push_back(&augmented.back());
                    continue;
                }
            }
            members.push_back(&seq);
        }

        Batch batch = make_batch(members);
        grad_sink.zero_grads();
        RngStream iter_rng = run_rng.derive(0x1000 + std::uint64_t(iter));
        const double loss = batch_loss(batch, opts.model, params, weights, opts.loss, iter_rng,
                                       /*training=*/true, &grad_sink, opts.threads);
        if (!std::isfinite(loss))
            throw NumericError("train_loop: diverged at iteration " + std::to_string(iter + 1) +
                               " (non-finite loss)");

        // Move gradients into the parameter buffers seen by the optimizer.
        {
            std::vector<std::vector<double>*> src;
            for_each_tensor(grad_sink, [&](const std::string&, std::vector<double>&,
                                           std::vector<double>& g) { src.push_back(&g); });
            std::size_t i = 0;
            for_each_tensor(params, [&](const std::string&, std::vector<double>&,
                                        std::vector<double>& g) { g = *src[i++]; });
        }
        const double lr = lr_at(iter, opts.optim);
        adamw_step(params, optim, lr, opts.optim);

        HistoryRecord rec{iter + 1, lr, loss};
        result.history.push_back(rec);
        if (on_iter) on_iter(rec);

        const bool last = iter + 1 == opts.optim.total_iters;
        if ((iter + 1) % opts.optim.eval_every == 0 || last) {
            const MetricsReport report =
                evaluate_videos(data.valid, opts.model, params, opts.threads);
            EvalRecord ev{iter + 1, report.wf1, report.wjacc, false};
            if (iter + 1 >= opts.optim.burn_in_iters &&
                report.wf1 > result.best.validation_wf1) {
                ev.best = true;
                result.best.params = params;
                result.best.optim = optim;
                result.best.iteration = iter + 1;
                result.best.validation_wf1 = report.wf1;
            }
            result.evals.push_back(ev);
            if (on_eval) on_eval(ev);
        }
    }

    if (result.best.validation_wf1 < 0.0)
        throw ConfigError("train_loop: no validation evaluation at or after burn_in_iters");
    return result;
}

CvResult run_cv(const std::vector<FoldSpec>& folds, const CvVideoSource& source,
                const TrainOptions& opts,
                const std::function<void(int, const MetricsReport&)>& on_fold) {
    require(!folds.empty(), "run_cv: no folds");
    validate_folds(folds);

    CvResult result;
    for (const FoldSpec& fold : folds) {
        TrainDataset data;
        for (const std::string& id : fold.train_ids) data.train.push_back(source.load(id));
        for (const std::string& id : fold.valid_ids) data.valid.push_back(source.load(id));

        TrainOptions fold_opts = opts;
        fold_opts.seed = RngStream::mix(opts.seed ^ std::uint64_t(fold.fold_id));
        TrainResult trained = train_loop(data, fold_opts);

        std::vector<FeatureSequence> test;
        for (const std::string& id : fold.test_ids) test.push_back(source.load(id));
        MetricsReport report =
            evaluate_videos(test, opts.model, trained.best.params, opts.threads);
        if (on_fold) on_fold(fold.fold_id, report);
        result.per_fold.push_back(std::move(report));
    }

    // Cross-fold aggregate: means over folds.
    MetricsReport& mean = result.mean;
    const std::size_t C = result.per_fold.front().f1.size();
    mean.f1.assign(C, 0.0);
    mean.jaccard.assign(C, 0.0);
    mean.precision.assign(C, 0.0);
    mean.recall.assign(C, 0.0);
    for (const MetricsReport& r : result.per_fold) {
        for (std::size_t c = 0; c < C; ++c) {
            mean.f1[c] += r.f1[c];
            mean.jaccard[c] += r.jaccard[c];
            mean.precision[c] += r.precision[c];
            mean.recall[c] += r.recall[c];
        }
        mean.wf1 += r.wf1;
        mean.wjacc += r.wjacc;
        mean.wf1_inverse += r.wf1_inverse;
        mean.wjacc_inverse += r.wjacc_inverse;
        mean.wmape += r.wmape;
        mean.evaluated_frames += r.evaluated_frames;
        mean.videos.insert(mean.videos.end(), r.videos.begin(), r.videos.end());
    }
    const double inv = 1.0 / double(result.per_fold.size());
    for (std::size_t c = 0; c < C; ++c) {
        mean.f1[c] *= inv;
        mean.jaccard[c] *= inv;
        mean.precision[c] *= inv;
        mean.recall[c] *= inv;
    }
    mean.wf1 *= inv;
    mean.wjacc *= inv;
    mean.wf1_inverse *= inv;
    mean.wjacc_inverse *= inv;
    mean.wmape *= inv;
    return result;
}

}  // namespace ctcn
