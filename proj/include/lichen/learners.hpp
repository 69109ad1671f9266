#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lichen/exec.hpp"
#include "lichen/features.hpp"
#include "lichen/slic.hpp"

namespace lichen::learners {

// Dense row-major design matrix with labels in {0, 1}.
struct Dataset {
    int n = 0;
    int d = 0;
    std::vector<double> x;
    std::vector<int> y;

    const double* row(int i) const { return x.data() + static_cast<std::size_t>(i) * d; }
    void validate() const;
};

Dataset toDataset(const features::LabeledTable& t);
Dataset toDataset(const std::vector<features::FeatureRow>& rows); // labels left empty

// ---- SVM -------------------------------------------------------------------

enum class Kernel { Rbf, Linear, Poly };
enum class GammaMode { Scale, Auto, Value };

std::string toString(Kernel k);
Kernel parseKernel(const std::string& s);
std::string toString(GammaMode g);

struct SvmParams {
    double C = 1;
    Kernel kernel = Kernel::Rbf;
    int degree = 3; // poly only
    GammaMode gamma = GammaMode::Scale;
    double gammaValue = 0; // GammaMode::Value
    int maxIter = -1;      // SMO pair updates; -1 = until converged
    double tol = 1e-3;     // maximal KKT violation at convergence
    std::size_t cacheBytes = std::size_t(256) << 20;
    Exec exec = Exec::Parallel;

    std::string describe() const;
};

double kernelValue(Kernel k, int degree, double gamma, const double* a, const double* b, int d);
// 1/(d var X) for Scale (1/d if X has no variance), 1/d for Auto.
double resolveGamma(const Dataset& data, const SvmParams& p);

// Raw dual solution in the caller's row order.
struct SvmSolution {
    std::vector<double> alpha;
    double rho = 0;
    double gamma = 0;
    double objective = 0; // dual: sum(alpha) - 1/2 a'Qa
    int iterations = 0;
    bool converged = false;
};

// SMO with maximal-violator / second-order pair selection. Rows are first
// put in a canonical order (lexicographic by features, then label) and
// ties are broken by the lowest index in that order, so the result does
// not depend on how the caller ordered the rows.
SvmSolution solveSvmDual(const Dataset& data, const SvmParams& p);

// One row of the kernel matrix; the serial and parallel paths are equal.
void kernelRow(const Dataset& data, Kernel k, int degree, double gamma, int i, double* out, Exec exec);

struct SvmModel {
    Kernel kernel = Kernel::Rbf;
    int degree = 3;
    double gamma = 0;
    int dim = 0;
    std::vector<double> supportVectors; // nSv x dim
    std::vector<double> coef;           // alpha_i * y_i
    double rho = 0;
    int iterations = 0;
    bool converged = false;

    int supportCount() const { return static_cast<int>(coef.size()); }
    double decision(const double* x) const;
};

SvmModel trainSvm(const Dataset& data, const SvmParams& p);

// Largest KKT violation of a solution against its own bias.
double maxKktViolation(const Dataset& data, const SvmParams& p, const SvmSolution& s);

// ---- Random forest -----------------------------------------------------------

enum class Criterion { Gini, Entropy };
std::string toString(Criterion c);

double impurity(Criterion c, double positives, double total);

struct ForestParams {
    int nEstimators = 100;
    Criterion criterion = Criterion::Gini;
    std::uint64_t seed = 0;
    Exec exec = Exec::Parallel;

    std::string describe() const;
};

struct TreeNode {
    int feature = -1; // -1 for leaves
    double threshold = 0;
    int left = -1, right = -1;
    int label = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;
    int predict(const double* x) const;
    int depth() const;
};

struct ForestModel {
    std::vector<Tree> trees;
    int dim = 0;
    double oobScore = 0; // accuracy over rows with at least one out-of-bag vote

    int votes(const double* x) const; // trees voting lichen
    int predict(const double* x) const;
};

// One unpruned tree on the given (possibly repeated) sample indices.
Tree growTree(const Dataset& data, std::vector<int> samples, Criterion c, std::uint64_t seed);

ForestModel trainForest(const Dataset& data, const ForestParams& p);

// ---- Trained model container -------------------------------------------------

enum class Family { Svm, Forest };
std::string toString(Family f);

struct TrainedModel {
    Family family = Family::Svm;
    SvmParams svmParams;
    ForestParams forestParams;
    SvmModel svm;
    ForestModel forest;
    slic::SlicParams slic;
    features::FeatureOptions features;
    int dimension = 0;

    std::string describe() const;
};

TrainedModel train(const features::LabeledTable& table, Family family, const SvmParams& sp, const ForestParams& fp);

std::vector<int> predict(const TrainedModel& m, const std::vector<features::FeatureRow>& rows);
std::vector<int> predict(const TrainedModel& m, const Dataset& data);

// Segments with the model's bound SLIC parameters, extracts features with
// its feature options, classifies each segment and paints the result.
BinaryMask classifyImage(const TrainedModel& m, const Raster& rgb);

nlohmann::json toJson(const TrainedModel& m);
TrainedModel fromJson(const nlohmann::json& j);
void saveModel(const std::filesystem::path& path, const TrainedModel& m);
TrainedModel loadModel(const std::filesystem::path& path);

} // namespace lichen::learners
