#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsexam/exam.hpp"

namespace tsexam::irt {

/// Question x candidate response matrix. Entries are 1 (correct), 0 (wrong) or kMissing.
class ResponseMatrix {
public:
    static constexpr std::int8_t kMissing = -1;

    ResponseMatrix() = default;
    ResponseMatrix(std::vector<std::string> question_ids, std::vector<std::string> candidate_ids);

    std::size_t questions() const noexcept { return question_ids_.size(); }
    std::size_t candidates() const noexcept { return candidate_ids_.size(); }
    const std::vector<std::string>& question_ids() const noexcept { return question_ids_; }
    const std::vector<std::string>& candidate_ids() const noexcept { return candidate_ids_; }

    std::int8_t at(std::size_t q, std::size_t c) const { return entries_[q * candidate_ids_.size() + c]; }
    void set(std::size_t q, std::size_t c, std::int8_t v);

    /// Throws InvalidParameter on duplicate ids or a question with no observed entry.
    void validate() const;

    friend bool operator==(const ResponseMatrix&, const ResponseMatrix&) = default;

private:
    std::vector<std::string> question_ids_;
    std::vector<std::string> candidate_ids_;
    std::vector<std::int8_t> entries_;
};

struct FitConfig {
    int epochs = 2000;
    double lr = 0.1;
    double lr_decay = 0.9999;
    double a_min = 0.01;
    double a_max = 5.0;
    double prior_sd_log_a = 2.0;
    double prior_sd_b = 2.0;
    double prior_sd_theta = 2.0;
    double tolerance = 1e-6;  // early stop on relative log-posterior change over 100 epochs
};

struct IrtFit {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> theta;
    double log_likelihood = 0.0;
    int epochs_run = 0;
    bool converged = false;
    /// Questions answered identically by every observed candidate (estimates lean on the priors).
    std::vector<std::string> degenerate_questions;
};

double predict_prob(double a, double b, double theta) noexcept;

/// Unconstrained parameterization used by the optimizer: a = exp(log_a).
struct Params {
    std::vector<double> log_a;
    std::vector<double> b;
    std::vector<double> theta;
};

/// Bernoulli log-likelihood over observed entries.
double log_likelihood(const ResponseMatrix& r, const std::vector<double>& a, const std::vector<double>& b,
                      const std::vector<double>& theta);

/// Log-likelihood plus the Gaussian log-priors of FitConfig (up to a constant).
double log_posterior(const ResponseMatrix& r, const Params& p, const FitConfig& cfg);

/// Gradient of log_posterior with respect to every entry of p.
Params gradient(const ResponseMatrix& r, const Params& p, const FitConfig& cfg);

/// Joint MAP fit by per-parameter gradient ascent; theta is standardized after every epoch.
IrtFit fit_2pl(const ResponseMatrix& responses, const FitConfig& cfg = {});

/// Min-max scaling to [0,1]; a constant vector maps to 0.5.
std::vector<double> minmax(const std::vector<double>& v);

struct NormalizedParams {
    std::vector<double> a_norm;
    std::vector<double> b_norm;
};
NormalizedParams normalize_params(const IrtFit& fit);

/// Quantile with linear interpolation between order statistics; p clamped to [0,1].
double quantile(std::vector<double> v, double p);

struct RoundTrace {
    int round = 0;
    std::string best_candidate;
    double threshold = 0.0;
    std::vector<std::string> dropped;
    std::vector<std::string> replacements;
    double mean_a_norm = 0.0;
    double mean_a = 0.0;
    double log_likelihood = 0.0;
};

json to_json(const RoundTrace& t);

struct RefineOptions {
    double drop_percentage = 0.2;
    int num_iterations = 3;
    std::uint64_t seed = 0;
    FitConfig fit;
};

/// Produces a replacement question in `category` with the given id, or nullopt when exhausted.
using Resampler = std::function<std::optional<QuestionInstance>(CategoryName category, const std::string& new_id,
                                                                std::uint64_t seed)>;
/// Administers an exam and returns the full response matrix (rows in exam order).
using TakeExam = std::function<ResponseMatrix(const Exam&)>;

struct RefineResult {
    Exam exam;
    /// One entry per refinement round, plus a final entry fitted on the returned exam (no drops).
    std::vector<RoundTrace> trace;
    ResponseMatrix responses;
    bool aborted = false;
    std::string diagnostic;
};

/// Iterative refinement: fit, score S = a_norm + b_norm, drop questions scoring below the
/// drop_percentage quantile of the scores of questions the best candidate answered correctly,
/// replace them from the same category, and re-administer.
RefineResult refine(Exam exam, ResponseMatrix responses, const RefineOptions& options, const Resampler& resampler,
                    const TakeExam& take_exam);

/// Resampler drawing fresh builtin-template questions.
Resampler builtin_resampler();

}  // namespace tsexam::irt
