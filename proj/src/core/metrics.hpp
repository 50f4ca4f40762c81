#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "tensor.hpp"

namespace chorus {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

// 0/0 cases (no predicted or no true positives) resolve to 0.
Prf prf(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth);

// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
// ties counted half. nullopt when the truth is single-class.
std::optional<double> auc(const std::vector<double>& scores,
                          const std::vector<uint8_t>& truth);

enum class Distance { Euclidean, Cosine };

// Pairwise self-distance matrix (n x n, row-major) of a (n, d) embedding.
std::vector<double> ssm(const TensorPtr<float>& e, Distance distance);
std::vector<double> ssm(const std::vector<double>& rows, long n, long d,
                        Distance distance);

void write_ssm_csv(const std::vector<double>& matrix, long n, const std::string& path);

struct SongEval {
    std::string id;
    Prf counts;
    std::optional<double> auc_value;
};

struct EvalReport {
    std::vector<SongEval> songs;
    double mean_f1 = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_auc = 0.0;   // over songs where AUC is defined
    long auc_defined = 0;    // how many songs that was
};

EvalReport summarize(std::vector<SongEval> songs);

// report.tsv: header, one row per song, final MEAN row.
void write_report(const EvalReport& report, const std::string& path);

} // namespace chorus
