#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "io.hpp"

namespace chorus {

Prf prf(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth) {
    if (pred.size() != truth.size())
        throw UsageError("prf: length mismatch " + std::to_string(pred.size()) +
                         " vs " + std::to_string(truth.size()));
    Prf r;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i]) ++r.tp;
        else if (pred[i]) ++r.fp;
        else if (truth[i]) ++r.fn;
        else ++r.tn;
    }
    r.precision = r.tp + r.fp ? double(r.tp) / (r.tp + r.fp) : 0.0;
    r.recall = r.tp + r.fn ? double(r.tp) / (r.tp + r.fn) : 0.0;
    r.f1 = r.precision + r.recall > 0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

std::optional<double> auc(const std::vector<double>& scores,
                          const std::vector<uint8_t>& truth) {
    if (scores.size() != truth.size())
        throw UsageError("auc: length mismatch");
    long n_pos = 0, n_neg = 0;
    for (uint8_t t : truth) (t ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // rank-sum formulation with midranks for ties: O(n log n)
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * double(i + 1 + j); // average of ranks i+1..j
        for (size_t k = i; k < j; ++k)
            if (truth[order[k]]) pos_rank_sum += midrank;
        i = j;
    }
    const double u = pos_rank_sum - double(n_pos) * (n_pos + 1) / 2.0;
    return u / (double(n_pos) * double(n_neg));
}

std::vector<double> ssm(const std::vector<double>& rows, long n, long d,
                        Distance distance) {
    if (n < 1 || d < 1 || rows.size() != static_cast<size_t>(n * d))
        throw UsageError("ssm: bad embedding dims");
    std::vector<double> m(static_cast<size_t>(n * n), 0.0);
    std::vector<double> norms(static_cast<size_t>(n), 0.0);
    if (distance == Distance::Cosine)
        for (long i = 0; i < n; ++i) {
            double s = 0;
            for (long k = 0; k < d; ++k) s += rows[i * d + k] * rows[i * d + k];
            norms[i] = std::sqrt(s);
        }
    for (long i = 0; i < n; ++i)
        for (long j = i + 1; j < n; ++j) {
            double v;
            if (distance == Distance::Euclidean) {
                double s = 0;
                for (long k = 0; k < d; ++k) {
                    const double diff = rows[i * d + k] - rows[j * d + k];
                    s += diff * diff;
                }
                v = std::sqrt(s);
            } else {
                double dot = 0;
                for (long k = 0; k < d; ++k) dot += rows[i * d + k] * rows[j * d + k];
                const double nn = norms[i] * norms[j];
                // zero vectors are at maximal cosine distance from everything
                v = nn > 0 ? 1.0 - dot / nn : 1.0;
                v = std::clamp(v, 0.0, 2.0);
            }
            m[i * n + j] = m[j * n + i] = v;
        }
    return m;
}

std::vector<double> ssm(const TensorPtr<float>& e, Distance distance) {
    if (!e || e->rank() != 2) throw UsageError("ssm: expected a (n, d) embedding");
    std::vector<double> rows(e->data.begin(), e->data.end());
    return ssm(rows, e->dim(0), e->dim(1), distance);
}

void write_ssm_csv(const std::vector<double>& matrix, long n, const std::string& path) {
    if (matrix.size() != static_cast<size_t>(n * n))
        throw UsageError("write_ssm_csv: matrix is not n*n");
    std::ostringstream os;
    char buf[32];
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", matrix[i * n + j]);
            os << buf << (j + 1 < n ? "," : "\n");
        }
    }
    io::write_text_file(path, os.str());
}

EvalReport summarize(std::vector<SongEval> songs) {
    EvalReport r;
    r.songs = std::move(songs);
    if (r.songs.empty()) return r;
    for (const auto& s : r.songs) {
        r.mean_f1 += s.counts.f1;
        r.mean_precision += s.counts.precision;
        r.mean_recall += s.counts.recall;
        if (s.auc_value) {
            r.mean_auc += *s.auc_value;
            ++r.auc_defined;
        }
    }
    const double n = double(r.songs.size());
    r.mean_f1 /= n;
    r.mean_precision /= n;
    r.mean_recall /= n;
    if (r.auc_defined) r.mean_auc /= r.auc_defined;
    return r;
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ostringstream os;
    os << "id\tf1\tauc\trecall\tprecision\ttp\tfp\tfn\ttn\n";
    char buf[160];
    for (const auto& s : report.songs) {
        char aucbuf[32];
        if (s.auc_value)
            std::snprintf(aucbuf, sizeof aucbuf, "%.6f", *s.auc_value);
        else
            std::snprintf(aucbuf, sizeof aucbuf, "nan");
        std::snprintf(buf, sizeof buf, "%s\t%.6f\t%s\t%.6f\t%.6f\t%ld\t%ld\t%ld\t%ld\n",
                      s.id.c_str(), s.counts.f1, aucbuf, s.counts.recall,
                      s.counts.precision, s.counts.tp, s.counts.fp, s.counts.fn,
                      s.counts.tn);
        os << buf;
    }
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& s : report.songs) {
        tp += s.counts.tp;
        fp += s.counts.fp;
        fn += s.counts.fn;
        tn += s.counts.tn;
    }
    char aucbuf[32];
    if (report.auc_defined)
        std::snprintf(aucbuf, sizeof aucbuf, "%.6f", report.mean_auc);
    else
        std::snprintf(aucbuf, sizeof aucbuf, "nan");
    std::snprintf(buf, sizeof buf, "MEAN\t%.6f\t%s\t%.6f\t%.6f\t%ld\t%ld\t%ld\t%ld\n",
                  report.mean_f1, aucbuf, report.mean_recall, report.mean_precision,
                  tp, fp, fn, tn);
    os << buf;
    io::write_text_file(path, os.str());
}

} // namespace chorus
