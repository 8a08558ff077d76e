#include "tsexam/irt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "tsexam/rng.hpp"
#include "tsexam/templates.hpp"

namespace tsexam::irt {

ResponseMatrix::ResponseMatrix(std::vector<std::string> question_ids, std::vector<std::string> candidate_ids)
    : question_ids_(std::move(question_ids)),
      candidate_ids_(std::move(candidate_ids)),
      entries_(question_ids_.size() * candidate_ids_.size(), kMissing) {}

void ResponseMatrix::set(std::size_t q, std::size_t c, std::int8_t v) {
    if (q >= questions() || c >= candidates()) throw InvalidParameter("index", "response index out of range");
    if (v != 0 && v != 1 && v != kMissing) throw InvalidParameter("entry", "must be 0, 1 or missing");
    entries_[q * candidates() + c] = v;
}

void ResponseMatrix::validate() const {
    if (std::set<std::string>(question_ids_.begin(), question_ids_.end()).size() != question_ids_.size())
        throw InvalidParameter("question_ids", "duplicate question id");
    if (std::set<std::string>(candidate_ids_.begin(), candidate_ids_.end()).size() != candidate_ids_.size())
        throw InvalidParameter("candidate_ids", "duplicate candidate id");
    for (std::size_t q = 0; q < questions(); ++q) {
        bool any = false;
        for (std::size_t c = 0; c < candidates() && !any; ++c) any = at(q, c) != kMissing;
        if (!any) throw InvalidParameter("entries", "question '" + question_ids_[q] + "' has no observed response");
    }
}

double predict_prob(double a, double b, double theta) noexcept {
    const double z = a * (theta - b);
    // Branches keep exp() from overflowing for large |z|.
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

// log(sigmoid(z)) and log(1 - sigmoid(z)) without cancellation.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

}  // namespace

double log_likelihood(const ResponseMatrix& r, const std::vector<double>& a, const std::vector<double>& b,
                      const std::vector<double>& theta) {
    double ll = 0.0;
    for (std::size_t q = 0; q < r.questions(); ++q) {
        for (std::size_t c = 0; c < r.candidates(); ++c) {
            const auto v = r.at(q, c);
            if (v == ResponseMatrix::kMissing) continue;
            const double z = a[q] * (theta[c] - b[q]);
            ll += v == 1 ? log_sigmoid(z) : log_sigmoid(-z);
        }
    }
    return ll;
}

double log_posterior(const ResponseMatrix& r, const Params& p, const FitConfig& cfg) {
    std::vector<double> a(p.log_a.size());
    std::transform(p.log_a.begin(), p.log_a.end(), a.begin(), [](double x) { return std::exp(x); });
    double lp = log_likelihood(r, a, p.b, p.theta);
    for (double x : p.log_a) lp -= x * x / (2 * cfg.prior_sd_log_a * cfg.prior_sd_log_a);
    for (double x : p.b) lp -= x * x / (2 * cfg.prior_sd_b * cfg.prior_sd_b);
    for (double x : p.theta) lp -= x * x / (2 * cfg.prior_sd_theta * cfg.prior_sd_theta);
    return lp;
}

Params gradient(const ResponseMatrix& r, const Params& p, const FitConfig& cfg) {
    Params g{std::vector<double>(p.log_a.size(), 0.0), std::vector<double>(p.b.size(), 0.0),
             std::vector<double>(p.theta.size(), 0.0)};
    for (std::size_t q = 0; q < r.questions(); ++q) {
        const double a = std::exp(p.log_a[q]);
        for (std::size_t c = 0; c < r.candidates(); ++c) {
            const auto v = r.at(q, c);
            if (v == ResponseMatrix::kMissing) continue;
            const double diff = p.theta[c] - p.b[q];
            const double resid = double(v) - predict_prob(a, p.b[q], p.theta[c]);
            g.log_a[q] += resid * a * diff;
            g.b[q] -= resid * a;
            g.theta[c] += resid * a;
        }
    }
    for (std::size_t q = 0; q < p.log_a.size(); ++q) {
        g.log_a[q] -= p.log_a[q] / (cfg.prior_sd_log_a * cfg.prior_sd_log_a);
        g.b[q] -= p.b[q] / (cfg.prior_sd_b * cfg.prior_sd_b);
    }
    for (std::size_t c = 0; c < p.theta.size(); ++c) g.theta[c] -= p.theta[c] / (cfg.prior_sd_theta * cfg.prior_sd_theta);
    return g;
}

IrtFit fit_2pl(const ResponseMatrix& responses, const FitConfig& cfg) {
    responses.validate();
    const std::size_t nq = responses.questions();
    const std::size_t nc = responses.candidates();
    if (nq < 2 || nc < 2) throw InvalidParameter("responses", "need at least 2 questions and 2 candidates");
    if (cfg.epochs < 1 || !(cfg.lr > 0)) throw InvalidParameter("config", "epochs and lr must be positive");

    IrtFit fit;
    std::vector<double> q_obs(nq, 0.0), c_obs(nc, 0.0);
    for (std::size_t q = 0; q < nq; ++q) {
        int correct = 0, seen = 0;
        for (std::size_t c = 0; c < nc; ++c) {
            const auto v = responses.at(q, c);
            if (v == ResponseMatrix::kMissing) continue;
            ++seen;
            correct += v;
            q_obs[q] += 1;
            c_obs[c] += 1;
        }
        if (correct == 0 || correct == seen) fit.degenerate_questions.push_back(responses.question_ids()[q]);
    }
    for (auto& n : c_obs) n = std::max(n, 1.0);

    const double log_a_min = std::log(cfg.a_min), log_a_max = std::log(cfg.a_max);
    Params p{std::vector<double>(nq, 0.0), std::vector<double>(nq, 0.0), std::vector<double>(nc, 0.0)};
    double lr = cfg.lr;
    constexpr int kCheckEvery = 100;
    double last_lp = -std::numeric_limits<double>::infinity();
    int epoch = 0;
    for (; epoch < cfg.epochs; ++epoch) {
        const Params g = gradient(responses, p, cfg);
        for (std::size_t q = 0; q < nq; ++q) {
            p.log_a[q] += lr * g.log_a[q] / q_obs[q];
            p.b[q] += lr * g.b[q] / q_obs[q];
        }
        for (std::size_t c = 0; c < nc; ++c) p.theta[c] += lr * g.theta[c] / c_obs[c];

        // Identification: standardize theta and transform item parameters so a*(theta-b) is unchanged.
        const double mean = std::accumulate(p.theta.begin(), p.theta.end(), 0.0) / double(nc);
        double var = 0.0;
        for (double t : p.theta) var += (t - mean) * (t - mean);
        const double sd = std::sqrt(var / double(nc));
        if (sd > 1e-12) {
            for (auto& t : p.theta) t = (t - mean) / sd;
            for (std::size_t q = 0; q < nq; ++q) {
                p.b[q] = (p.b[q] - mean) / sd;
                p.log_a[q] += std::log(sd);
            }
        } else {
            for (auto& t : p.theta) t -= mean;
            for (auto& b : p.b) b -= mean;
        }
        for (auto& la : p.log_a) la = std::clamp(la, log_a_min, log_a_max);

        lr *= cfg.lr_decay;
        if ((epoch + 1) % kCheckEvery == 0) {
            const double lp = log_posterior(responses, p, cfg);
            if (std::abs(lp - last_lp) <= cfg.tolerance * (1.0 + std::abs(lp))) {
                fit.converged = true;
                ++epoch;
                break;
            }
            last_lp = lp;
        }
    }
    fit.epochs_run = epoch;
    fit.a.resize(nq);
    std::transform(p.log_a.begin(), p.log_a.end(), fit.a.begin(), [](double x) { return std::exp(x); });
    fit.b = std::move(p.b);
    fit.theta = std::move(p.theta);
    fit.log_likelihood = log_likelihood(responses, fit.a, fit.b, fit.theta);
    return fit;
}

std::vector<double> minmax(const std::vector<double>& v) {
    if (v.empty()) return {};
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    std::vector<double> out(v.size(), 0.5);
    if (range > 0) {
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
    }
    return out;
}

NormalizedParams normalize_params(const IrtFit& fit) { return {minmax(fit.a), minmax(fit.b)}; }

double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw InvalidParameter("values", "quantile of an empty set");
    std::sort(v.begin(), v.end());
    p = std::clamp(p, 0.0, 1.0);
    const double pos = p * double(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

json to_json(const RoundTrace& t) {
    return {{"round", t.round},
            {"best_candidate", t.best_candidate},
            {"threshold", t.threshold},
            {"dropped", t.dropped},
            {"replacements", t.replacements},
            {"mean_a_norm", t.mean_a_norm},
            {"mean_a", t.mean_a},
            {"log_likelihood", t.log_likelihood}};
}

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

void check_alignment(const Exam& exam, const ResponseMatrix& r) {
    if (r.questions() != exam.questions.size())
        throw InvalidParameter("responses", "row count does not match the exam");
    for (std::size_t q = 0; q < r.questions(); ++q) {
        if (r.question_ids()[q] != exam.questions[q].id)
            throw InvalidParameter("responses", "row " + std::to_string(q) + " is '" + r.question_ids()[q] +
                                                    "', exam has '" + exam.questions[q].id + "'");
    }
}

// Highest raw accuracy over observed entries; ties go to the earlier candidate id in sorted order.
std::size_t best_candidate(const ResponseMatrix& r) {
    std::vector<std::size_t> order(r.candidates());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return r.candidate_ids()[x] < r.candidate_ids()[y]; });
    std::size_t best = order.front();
    double best_acc = -1.0;
    for (std::size_t c : order) {
        int correct = 0, seen = 0;
        for (std::size_t q = 0; q < r.questions(); ++q) {
            const auto v = r.at(q, c);
            if (v == ResponseMatrix::kMissing) continue;
            ++seen;
            correct += v;
        }
        const double acc = seen ? double(correct) / seen : 0.0;
        if (acc > best_acc) {
            best_acc = acc;
            best = c;
        }
    }
    return best;
}

}  // namespace

RefineResult refine(Exam exam, ResponseMatrix responses, const RefineOptions& options, const Resampler& resampler,
                    const TakeExam& take_exam) {
    if (options.num_iterations < 0) throw InvalidParameter("num_iterations", "must be non-negative");
    if (options.drop_percentage > 1.0) throw InvalidParameter("drop_percentage", "must be at most 1");
    check_alignment(exam, responses);

    RefineResult result;
    for (int round = 1; round <= options.num_iterations; ++round) {
        const IrtFit fit = fit_2pl(responses, options.fit);
        const NormalizedParams norm = normalize_params(fit);
        std::vector<double> score(exam.questions.size());
        for (std::size_t q = 0; q < score.size(); ++q) score[q] = norm.a_norm[q] + norm.b_norm[q];

        RoundTrace trace;
        trace.round = round;
        trace.mean_a_norm = mean_of(norm.a_norm);
        trace.mean_a = mean_of(fit.a);
        trace.log_likelihood = fit.log_likelihood;
        const std::size_t best = best_candidate(responses);
        trace.best_candidate = responses.candidate_ids()[best];

        std::vector<double> answered;
        for (std::size_t q = 0; q < score.size(); ++q) {
            if (responses.at(q, best) == 1) answered.push_back(score[q]);
        }
        if (answered.empty()) answered = score;
        trace.threshold = quantile(answered, options.drop_percentage);

        std::vector<std::size_t> drop;
        if (options.drop_percentage > 0) {
            for (std::size_t q = 0; q < score.size(); ++q) {
                if (score[q] < trace.threshold) drop.push_back(q);
            }
        }

        std::vector<std::size_t> unreplaced;
        for (std::size_t k = 0; k < drop.size(); ++k) {
            QuestionInstance& old = exam.questions[drop[k]];
            trace.dropped.push_back(old.id);
            const std::string new_id = old.id + "-r" + std::to_string(round);
            const std::uint64_t seed = derive_seed(derive_seed(options.seed, std::uint64_t(round)), old.id);
            auto fresh = resampler(old.category.name, new_id, seed);
            if (!fresh) {
                unreplaced.push_back(drop[k]);
                continue;
            }
            if (fresh->category.name != old.category.name)
                throw InvalidParameter("resampler", "replacement for '" + old.id + "' changed category");
            trace.replacements.push_back(fresh->id);
            old = std::move(*fresh);
        }
        result.trace.push_back(trace);
        exam.metadata.round = round;

        if (!unreplaced.empty()) {
            for (auto it = unreplaced.rbegin(); it != unreplaced.rend(); ++it)
                exam.questions.erase(exam.questions.begin() + static_cast<std::ptrdiff_t>(*it));
            result.aborted = true;
            result.diagnostic = "resampler exhausted in round " + std::to_string(round) + ": " +
                                std::to_string(unreplaced.size()) + " dropped question(s) could not be replaced";
            result.exam = std::move(exam);
            result.responses = std::move(responses);
            return result;
        }
        if (!drop.empty()) {
            responses = take_exam(exam);
            check_alignment(exam, responses);
        }
    }

    const IrtFit final_fit = fit_2pl(responses, options.fit);
    const NormalizedParams norm = normalize_params(final_fit);
    RoundTrace last;
    last.round = options.num_iterations + 1;
    last.mean_a_norm = mean_of(norm.a_norm);
    last.mean_a = mean_of(final_fit.a);
    last.log_likelihood = final_fit.log_likelihood;
    last.best_candidate = responses.candidate_ids()[best_candidate(responses)];
    result.trace.push_back(last);
    result.exam = std::move(exam);
    result.responses = std::move(responses);
    return result;
}

Resampler builtin_resampler() {
    return [](CategoryName category, const std::string& new_id, std::uint64_t seed) -> std::optional<QuestionInstance> {
        return templates::sample_question(category, seed, new_id);
    };
}

}  // namespace tsexam::irt
