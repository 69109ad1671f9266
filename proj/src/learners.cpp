#include "lichen/learners.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <list>
#include <numeric>
#include <sstream>

#include "lichen/error.hpp"
#include "lichen/rng.hpp"

namespace lichen::learners {

using nlohmann::json;

void Dataset::validate() const {
    if (n < 0 || d <= 0) throw InvalidArgument("dataset: empty feature dimension");
    if (x.size() != static_cast<std::size_t>(n) * d) throw InvalidArgument("dataset: feature buffer size mismatch");
    for (double v : x)
        if (!std::isfinite(v)) throw InvalidArgument("dataset: non-finite feature");
}

Dataset toDataset(const std::vector<features::FeatureRow>& rows) {
    Dataset ds;
    ds.n = static_cast<int>(rows.size());
    ds.d = rows.empty() ? 0 : static_cast<int>(rows.front().histogram.size());
    ds.x.reserve(static_cast<std::size_t>(ds.n) * ds.d);
    for (const auto& r : rows) {
        if (static_cast<int>(r.histogram.size()) != ds.d) throw InvalidArgument("feature rows have mixed dimensions");
        ds.x.insert(ds.x.end(), r.histogram.begin(), r.histogram.end());
    }
    return ds;
}

Dataset toDataset(const features::LabeledTable& t) {
    if (t.rows.size() != t.labels.size()) throw InvalidArgument("labeled table: rows and labels differ in length");
    Dataset ds = toDataset(t.rows);
    ds.y = t.labels;
    return ds;
}

namespace {

void requireTwoClasses(const Dataset& data) {
    data.validate();
    if (data.y.size() != static_cast<std::size_t>(data.n)) throw InvalidArgument("dataset: missing labels");
    bool pos = false, neg = false;
    for (int v : data.y) {
        if (v != 0 && v != 1) throw InvalidArgument("dataset: labels must be 0 or 1");
        (v ? pos : neg) = true;
    }
    if (!pos || !neg) throw InvalidTrainingSet("training set must contain both classes");
}

double dot(const double* a, const double* b, int d) {
    double s = 0;
    for (int k = 0; k < d; ++k) s += a[k] * b[k];
    return s;
}

} // namespace

// ---- SVM -------------------------------------------------------------------

std::string toString(Kernel k) {
    switch (k) {
    case Kernel::Rbf: return "rbf";
    case Kernel::Linear: return "linear";
    case Kernel::Poly: return "poly";
    }
    return "?";
}

Kernel parseKernel(const std::string& s) {
    if (s == "rbf") return Kernel::Rbf;
    if (s == "linear") return Kernel::Linear;
    if (s == "poly") return Kernel::Poly;
    throw InvalidArgument("unknown kernel '" + s + "'");
}

std::string toString(GammaMode g) {
    switch (g) {
    case GammaMode::Scale: return "scale";
    case GammaMode::Auto: return "auto";
    case GammaMode::Value: return "value";
    }
    return "?";
}

std::string SvmParams::describe() const {
    std::ostringstream os;
    os << "C=" << C << " kernel=" << toString(kernel);
    if (kernel == Kernel::Poly) os << " degree=" << degree;
    if (kernel != Kernel::Linear) {
        os << " gamma=";
        if (gamma == GammaMode::Value)
            os << gammaValue;
        else
            os << toString(gamma);
    }
    os << " max_iter=" << maxIter;
    return os.str();
}

double kernelValue(Kernel k, int degree, double gamma, const double* a, const double* b, int d) {
    switch (k) {
    case Kernel::Linear: return dot(a, b, d);
    case Kernel::Poly: return std::pow(gamma * dot(a, b, d) + 1.0, degree);
    case Kernel::Rbf: {
        double s = 0;
        for (int i = 0; i < d; ++i) {
            const double t = a[i] - b[i];
            s += t * t;
        }
        return std::exp(-gamma * s);
    }
    }
    return 0;
}

double resolveGamma(const Dataset& data, const SvmParams& p) {
    switch (p.gamma) {
    case GammaMode::Value:
        if (!(p.gammaValue > 0)) throw InvalidArgument("svm: explicit gamma must be positive");
        return p.gammaValue;
    case GammaMode::Auto: return 1.0 / data.d;
    case GammaMode::Scale: {
        if (data.x.empty()) return 1.0 / data.d;
        double mean = 0;
        for (double v : data.x) mean += v;
        mean /= static_cast<double>(data.x.size());
        double var = 0;
        for (double v : data.x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(data.x.size());
        return var > 0 ? 1.0 / (data.d * var) : 1.0 / data.d;
    }
    }
    return 1.0;
}

void kernelRow(const Dataset& data, Kernel k, int degree, double gamma, int i, double* out, Exec exec) {
    const double* xi = data.row(i);
    const int n = data.n, d = data.d;
    const bool par = exec == Exec::Parallel && n >= 256;
#pragma omp parallel for schedule(static) if (par)
    for (int j = 0; j < n; ++j) out[j] = kernelValue(k, degree, gamma, xi, data.row(j), d);
}

namespace {

// Rows sorted lexicographically by features, then label. Stable, so exact
// duplicates keep their relative order (they are interchangeable anyway).
std::vector<int> canonicalOrder(const Dataset& data) {
    std::vector<int> idx(data.n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double* ra = data.row(a);
        const double* rb = data.row(b);
        for (int k = 0; k < data.d; ++k)
            if (ra[k] != rb[k]) return ra[k] < rb[k];
        return data.y[a] < data.y[b];
    });
    return idx;
}

Dataset permuted(const Dataset& data, const std::vector<int>& order) {
    Dataset out;
    out.n = data.n;
    out.d = data.d;
    out.x.resize(data.x.size());
    out.y.resize(data.n);
    for (int i = 0; i < data.n; ++i) {
        std::copy_n(data.row(order[i]), data.d, out.x.begin() + static_cast<std::ptrdiff_t>(i) * data.d);
        out.y[i] = data.y[order[i]];
    }
    return out;
}

// LRU cache of Q rows, Q_ij = y_i y_j K_ij.
class QCache {
public:
    QCache(const Dataset& data, const std::vector<double>& y, const SvmParams& p, double gamma)
        : data_(data), y_(y), p_(p), gamma_(gamma), rows_(data.n) {
        const std::size_t rowBytes = std::max<std::size_t>(1, static_cast<std::size_t>(data.n) * sizeof(double));
        capacity_ = std::max<std::size_t>(2, p.cacheBytes / rowBytes);
        where_.resize(data.n, lru_.end());
    }

    const double* row(int i) {
        if (!rows_[i].empty()) {
            lru_.splice(lru_.end(), lru_, where_[i]);
            return rows_[i].data();
        }
        if (lru_.size() >= capacity_) {
            const int victim = lru_.front();
            lru_.pop_front();
            where_[victim] = lru_.end();
            rows_[i].swap(rows_[victim]);
            rows_[victim].clear();
            rows_[victim].shrink_to_fit();
        }
        rows_[i].resize(data_.n);
        kernelRow(data_, p_.kernel, p_.degree, gamma_, i, rows_[i].data(), p_.exec);
        for (int j = 0; j < data_.n; ++j) rows_[i][j] *= y_[i] * y_[j];
        where_[i] = lru_.insert(lru_.end(), i);
        return rows_[i].data();
    }

private:
    const Dataset& data_;
    const std::vector<double>& y_;
    const SvmParams& p_;
    double gamma_;
    std::size_t capacity_;
    std::vector<std::vector<double>> rows_;
    std::list<int> lru_;
    std::vector<std::list<int>::iterator> where_;
};

constexpr double kTau = 1e-12;

struct SmoResult {
    std::vector<double> alpha;
    std::vector<double> grad;
    double rho = 0;
    int iterations = 0;
    bool converged = false;
};

// libsvm-style solver for min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0, without
// shrinking. Every argmax/argmin keeps the first (lowest) index on ties.
SmoResult smo(const Dataset& data, const std::vector<double>& y, const SvmParams& p, double gamma) {
    const int n = data.n;
    const double C = p.C;
    QCache cache(data, y, p, gamma);
    std::vector<double> qd(n);
    for (int i = 0; i < n; ++i) qd[i] = kernelValue(p.kernel, p.degree, gamma, data.row(i), data.row(i), data.d);

    SmoResult r;
    r.alpha.assign(n, 0.0);
    r.grad.assign(n, -1.0);
    auto& a = r.alpha;
    auto& G = r.grad;
    const auto isUpper = [&](int t) { return a[t] >= C; };
    const auto isLower = [&](int t) { return a[t] <= 0; };

    while (p.maxIter < 0 || r.iterations < p.maxIter) {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        int gi = -1, gj = -1;
        for (int t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (!isUpper(t) && -G[t] > gmax) {
                    gmax = -G[t];
                    gi = t;
                }
            } else if (!isLower(t) && G[t] > gmax) {
                gmax = G[t];
                gi = t;
            }
        }
        const double* qi = gi >= 0 ? cache.row(gi) : nullptr;
        double objMin = std::numeric_limits<double>::infinity();
        for (int t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (isLower(t)) continue;
                const double gd = gmax + G[t];
                gmax2 = std::max(gmax2, G[t]);
                if (gd > 0) {
                    double quad = qd[gi] + qd[t] - 2.0 * y[gi] * qi[t];
                    if (quad <= 0) quad = kTau;
                    const double obj = -(gd * gd) / quad;
                    if (obj < objMin) {
                        objMin = obj;
                        gj = t;
                    }
                }
            } else {
                if (isUpper(t)) continue;
                const double gd = gmax - G[t];
                gmax2 = std::max(gmax2, -G[t]);
                if (gd > 0) {
                    double quad = qd[gi] + qd[t] + 2.0 * y[gi] * qi[t];
                    if (quad <= 0) quad = kTau;
                    const double obj = -(gd * gd) / quad;
                    if (obj < objMin) {
                        objMin = obj;
                        gj = t;
                    }
                }
            }
        }
        if (gmax + gmax2 < p.tol || gj < 0) {
            r.converged = true;
            break;
        }
        ++r.iterations;

        const int i = gi, j = gj;
        qi = cache.row(i);
        const double* qj = cache.row(j);
        const double oldAi = a[i], oldAj = a[j];
        if (y[i] != y[j]) {
            double quad = qd[i] + qd[j] + 2 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0) {
                if (a[j] < 0) {
                    a[j] = 0;
                    a[i] = diff;
                }
            } else if (a[i] < 0) {
                a[i] = 0;
                a[j] = -diff;
            }
            if (diff > 0) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = C - diff;
                }
            } else if (a[j] > C) {
                a[j] = C;
                a[i] = C + diff;
            }
        } else {
            double quad = qd[i] + qd[j] - 2 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > C) {
                if (a[i] > C) {
                    a[i] = C;
                    a[j] = sum - C;
                }
            } else if (a[j] < 0) {
                a[j] = 0;
                a[i] = sum;
            }
            if (sum > C) {
                if (a[j] > C) {
                    a[j] = C;
                    a[i] = sum - C;
                }
            } else if (a[i] < 0) {
                a[i] = 0;
                a[j] = sum;
            }
        }
        const double di = a[i] - oldAi, dj = a[j] - oldAj;
        for (int t = 0; t < n; ++t) G[t] += qi[t] * di + qj[t] * dj;
    }

    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sumFree = 0;
    int nFree = 0;
    for (int t = 0; t < n; ++t) {
        const double yg = y[t] * G[t];
        if (isUpper(t)) {
            if (y[t] < 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else if (isLower(t)) {
            if (y[t] > 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else {
            ++nFree;
            sumFree += yg;
        }
    }
    r.rho = nFree > 0 ? sumFree / nFree : (ub + lb) / 2;
    return r;
}

void validateSvm(const SvmParams& p) {
    if (!(p.C > 0) || !std::isfinite(p.C)) throw InvalidArgument("svm: C must be positive");
    if (p.kernel == Kernel::Poly && p.degree < 1) throw InvalidArgument("svm: poly degree must be >= 1");
    if (p.maxIter < -1 || p.maxIter == 0) throw InvalidArgument("svm: maxIter must be positive or -1");
    if (!(p.tol > 0)) throw InvalidArgument("svm: tolerance must be positive");
}

struct CanonicalSolve {
    Dataset data;
    std::vector<int> order;
    std::vector<double> y;
    double gamma = 0;
    SmoResult smo;
};

CanonicalSolve solveCanonical(const Dataset& data, const SvmParams& p) {
    validateSvm(p);
    requireTwoClasses(data);
    CanonicalSolve s;
    s.order = canonicalOrder(data);
    s.data = permuted(data, s.order);
    s.y.resize(data.n);
    for (int i = 0; i < data.n; ++i) s.y[i] = s.data.y[i] ? 1.0 : -1.0;
    s.gamma = p.kernel == Kernel::Linear ? 0.0 : resolveGamma(s.data, p);
    s.smo = smo(s.data, s.y, p, s.gamma);
    return s;
}

} // namespace

SvmSolution solveSvmDual(const Dataset& data, const SvmParams& p) {
    const CanonicalSolve s = solveCanonical(data, p);
    SvmSolution out;
    out.alpha.assign(data.n, 0.0);
    double obj = 0;
    for (int i = 0; i < data.n; ++i) {
        out.alpha[s.order[i]] = s.smo.alpha[i];
        // f(a) = 1/2 a'(G - e) for G = Qa - e; the dual value is -f.
        obj += s.smo.alpha[i] * (s.smo.grad[i] - 1.0);
    }
    out.objective = -0.5 * obj;
    out.rho = s.smo.rho;
    out.gamma = s.gamma;
    out.iterations = s.smo.iterations;
    out.converged = s.smo.converged;
    return out;
}

SvmModel trainSvm(const Dataset& data, const SvmParams& p) {
    const CanonicalSolve s = solveCanonical(data, p);
    SvmModel m;
    m.kernel = p.kernel;
    m.degree = p.degree;
    m.gamma = s.gamma;
    m.dim = data.d;
    m.rho = s.smo.rho;
    m.iterations = s.smo.iterations;
    m.converged = s.smo.converged;
    for (int i = 0; i < data.n; ++i) {
        if (s.smo.alpha[i] <= 0) continue;
        m.supportVectors.insert(m.supportVectors.end(), s.data.row(i), s.data.row(i) + data.d);
        m.coef.push_back(s.smo.alpha[i] * s.y[i]);
    }
    return m;
}

double SvmModel::decision(const double* x) const {
    double f = 0;
    for (std::size_t k = 0; k < coef.size(); ++k)
        f += coef[k] * kernelValue(kernel, degree, gamma, supportVectors.data() + k * dim, x, dim);
    return f - rho;
}

double maxKktViolation(const Dataset& data, const SvmParams& p, const SvmSolution& s) {
    const double gamma = p.kernel == Kernel::Linear ? 0.0 : s.gamma;
    double worst = 0;
    for (int i = 0; i < data.n; ++i) {
        double f = -s.rho;
        for (int j = 0; j < data.n; ++j)
            if (s.alpha[j] > 0)
                f += s.alpha[j] * (data.y[j] ? 1.0 : -1.0) *
                     kernelValue(p.kernel, p.degree, gamma, data.row(j), data.row(i), data.d);
        const double yf = (data.y[i] ? 1.0 : -1.0) * f;
        double v;
        if (s.alpha[i] <= 0)
            v = std::max(0.0, 1.0 - yf);
        else if (s.alpha[i] >= p.C)
            v = std::max(0.0, yf - 1.0);
        else
            v = std::fabs(yf - 1.0);
        worst = std::max(worst, v);
    }
    return worst;
}

// ---- Random forest -----------------------------------------------------------

std::string toString(Criterion c) { return c == Criterion::Gini ? "gini" : "entropy"; }

double impurity(Criterion c, double positives, double total) {
    if (total <= 0) return 0;
    const double p = positives / total, q = 1.0 - p;
    if (c == Criterion::Gini) return 1.0 - p * p - q * q;
    double h = 0;
    if (p > 0) h -= p * std::log2(p);
    if (q > 0) h -= q * std::log2(q);
    return h;
}

std::string ForestParams::describe() const {
    std::ostringstream os;
    os << "n_estimators=" << nEstimators << " criterion=" << toString(criterion);
    return os.str();
}

int Tree::predict(const double* x) const {
    int k = 0;
    while (nodes[k].feature >= 0) k = x[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
    return nodes[k].label;
}

int Tree::depth() const {
    std::vector<int> dep(nodes.size(), 0);
    int best = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        best = std::max(best, dep[k]);
        if (nodes[k].feature >= 0) dep[nodes[k].left] = dep[nodes[k].right] = dep[k] + 1;
    }
    return best;
}

int ForestModel::votes(const double* x) const {
    int v = 0;
    for (const auto& t : trees) v += t.predict(x);
    return v;
}

int ForestModel::predict(const double* x) const {
    return 2 * votes(x) > static_cast<int>(trees.size()) ? 1 : 0;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, Criterion crit, Rng& rng) : data_(data), crit_(crit), rng_(rng) {
        mtry_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(data.d))));
        features_.resize(data.d);
        std::iota(features_.begin(), features_.end(), 0);
    }

    Tree build(std::vector<int> samples) {
        Tree t;
        t.nodes.emplace_back();
        struct Job {
            int node, lo, hi;
        };
        samples_ = std::move(samples);
        std::vector<Job> stack{{0, 0, static_cast<int>(samples_.size())}};
        while (!stack.empty()) {
            const Job job = stack.back();
            stack.pop_back();
            int pos = 0;
            for (int k = job.lo; k < job.hi; ++k) pos += data_.y[samples_[k]];
            const int count = job.hi - job.lo;
            t.nodes[job.node].label = 2 * pos > count ? 1 : 0;
            if (pos == 0 || pos == count || count < 2) continue;
            const auto split = findSplit(job.lo, job.hi, pos);
            if (split.feature < 0) continue;
            const auto mid = std::stable_partition(samples_.begin() + job.lo, samples_.begin() + job.hi, [&](int s) {
                return data_.row(s)[split.feature] <= split.threshold;
            });
            const int m = static_cast<int>(mid - samples_.begin());
            const int l = static_cast<int>(t.nodes.size());
            t.nodes.emplace_back();
            t.nodes.emplace_back();
            t.nodes[job.node].feature = split.feature;
            t.nodes[job.node].threshold = split.threshold;
            t.nodes[job.node].left = l;
            t.nodes[job.node].right = l + 1;
            stack.push_back({l + 1, m, job.hi});
            stack.push_back({l, job.lo, m});
        }
        return t;
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0;
        double score = -std::numeric_limits<double>::infinity();
    };

    // Visits features in a random order; the first mtry are always examined,
    // further ones only while nothing splittable has been found.
    Split findSplit(int lo, int hi, int pos) {
        const int count = hi - lo;
        const double parent = impurity(crit_, pos, count);
        Split best;
        for (int f = 0; f < data_.d; ++f) {
            const int pick = f + static_cast<int>(rng_.below(static_cast<std::uint64_t>(data_.d - f)));
            std::swap(features_[f], features_[pick]);
            if (f >= mtry_ && best.feature >= 0) break;
            const int feat = features_[f];
            vals_.clear();
            for (int k = lo; k < hi; ++k) vals_.push_back({data_.row(samples_[k])[feat], data_.y[samples_[k]]});
            std::sort(vals_.begin(), vals_.end());
            int leftPos = 0;
            for (int k = 0; k + 1 < count; ++k) {
                leftPos += vals_[k].second;
                if (vals_[k].first == vals_[k + 1].first) continue;
                const int nl = k + 1, nr = count - nl;
                const double child = (nl * impurity(crit_, leftPos, nl) + nr * impurity(crit_, pos - leftPos, nr)) / count;
                const double score = parent - child;
                if (score > best.score) {
                    best.score = score;
                    best.feature = feat;
                    double thr = 0.5 * (vals_[k].first + vals_[k + 1].first);
                    if (thr >= vals_[k + 1].first) thr = vals_[k].first;
                    best.threshold = thr;
                }
            }
        }
        return best;
    }

    const Dataset& data_;
    Criterion crit_;
    Rng& rng_;
    int mtry_;
    std::vector<int> features_;
    std::vector<int> samples_;
    std::vector<std::pair<double, int>> vals_;
};

} // namespace

Tree growTree(const Dataset& data, std::vector<int> samples, Criterion c, std::uint64_t seed) {
    data.validate();
    for (int s : samples)
        if (s < 0 || s >= data.n) throw InvalidArgument("growTree: sample index out of range");
    Rng rng(seed);
    TreeBuilder b(data, c, rng);
    return b.build(std::move(samples));
}

ForestModel trainForest(const Dataset& data, const ForestParams& p) {
    if (p.nEstimators < 1) throw InvalidArgument("forest: nEstimators must be >= 1");
    requireTwoClasses(data);
    const int n = data.n, T = p.nEstimators;
    ForestModel m;
    m.dim = data.d;
    m.trees.resize(T);
    std::vector<std::vector<char>> inBag(T, std::vector<char>(n, 0));
    const bool par = p.exec == Exec::Parallel;
#pragma omp parallel for schedule(dynamic) if (par)
    for (int t = 0; t < T; ++t) {
        Rng rng(p.seed + static_cast<std::uint64_t>(t));
        std::vector<int> sample(n);
        for (int k = 0; k < n; ++k) {
            sample[k] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            inBag[t][sample[k]] = 1;
        }
        TreeBuilder b(data, p.criterion, rng);
        m.trees[t] = b.build(std::move(sample));
    }

    int scored = 0, correct = 0;
    for (int i = 0; i < n; ++i) {
        int votes = 0, pos = 0;
        for (int t = 0; t < T; ++t) {
            if (inBag[t][i]) continue;
            ++votes;
            pos += m.trees[t].predict(data.row(i));
        }
        if (!votes) continue;
        ++scored;
        correct += (2 * pos > votes ? 1 : 0) == data.y[i];
    }
    m.oobScore = scored ? static_cast<double>(correct) / scored : 0.0;
    return m;
}

// ---- Trained model container -------------------------------------------------

std::string toString(Family f) { return f == Family::Svm ? "svm" : "forest"; }

std::string TrainedModel::describe() const {
    return family == Family::Svm ? svmParams.describe() : forestParams.describe();
}

TrainedModel train(const features::LabeledTable& table, Family family, const SvmParams& sp, const ForestParams& fp) {
    const features::FeatureOptions& fo = table.features;
    const Dataset data = toDataset(table);
    if (data.n > 0 && data.d != fo.dimension())
        throw InvalidArgument("training table dimension does not match the feature options");
    TrainedModel m;
    m.family = family;
    m.svmParams = sp;
    m.forestParams = fp;
    m.slic = table.slic;
    m.features = fo;
    m.dimension = data.d;
    if (family == Family::Svm)
        m.svm = trainSvm(data, sp);
    else
        m.forest = trainForest(data, fp);
    return m;
}

std::vector<int> predict(const TrainedModel& m, const Dataset& data) {
    if (data.n > 0 && data.d != m.dimension)
        throw InvalidArgument("feature dimension " + std::to_string(data.d) + " does not match the model's " +
                              std::to_string(m.dimension));
    std::vector<int> out(data.n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < data.n; ++i)
        out[i] = m.family == Family::Svm ? (m.svm.decision(data.row(i)) > 0 ? 1 : 0) : m.forest.predict(data.row(i));
    return out;
}

std::vector<int> predict(const TrainedModel& m, const std::vector<features::FeatureRow>& rows) {
    for (const auto& r : rows)
        if (static_cast<int>(r.histogram.size()) != m.dimension)
            throw InvalidArgument("feature dimension " + std::to_string(r.histogram.size()) +
                                  " does not match the model's " + std::to_string(m.dimension));
    return predict(m, toDataset(rows));
}

BinaryMask classifyImage(const TrainedModel& m, const Raster& rgb) {
    const slic::SuperpixelMap spx = slic::slic(rgb, m.slic);
    return features::paintSegments(spx, predict(m, features::extractFeatures(rgb, spx, m.features)));
}

// ---- JSON ----------------------------------------------------------------------

namespace {

constexpr int kFormatVersion = 1;

json treeToJson(const Tree& t) {
    json f = json::array(), th = json::array(), l = json::array(), r = json::array(), lab = json::array();
    for (const auto& n : t.nodes) {
        f.push_back(n.feature);
        th.push_back(n.threshold);
        l.push_back(n.left);
        r.push_back(n.right);
        lab.push_back(n.label);
    }
    return {{"feature", f}, {"threshold", th}, {"left", l}, {"right", r}, {"label", lab}};
}

Tree treeFromJson(const json& j, int dim) {
    Tree t;
    const auto& f = j.at("feature");
    t.nodes.resize(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
        auto& n = t.nodes[k];
        n.feature = f[k].get<int>();
        n.threshold = j.at("threshold")[k].get<double>();
        n.left = j.at("left")[k].get<int>();
        n.right = j.at("right")[k].get<int>();
        n.label = j.at("label")[k].get<int>();
        const int size = static_cast<int>(f.size());
        if (n.feature >= dim || (n.feature >= 0 && (n.left <= static_cast<int>(k) || n.right <= static_cast<int>(k) ||
                                                    n.left >= size || n.right >= size)))
            throw IoError("model file: malformed tree");
    }
    if (t.nodes.empty()) throw IoError("model file: empty tree");
    return t;
}

} // namespace

json toJson(const TrainedModel& m) {
    json j;
    j["format"] = "lichenmeter-model";
    j["version"] = kFormatVersion;
    j["family"] = toString(m.family);
    j["dimension"] = m.dimension;
    j["slic"] = {{"n_segments", m.slic.nSegments}, {"compactness", m.slic.compactness}, {"sigma", m.slic.sigma}};
    j["features"] = {{"bins", m.features.bins},
                     {"mode", m.features.mode == features::HistogramMode::Joint ? "joint" : "per-channel"}};
    if (m.family == Family::Svm) {
        const auto& p = m.svmParams;
        j["params"] = {{"C", p.C},           {"kernel", toString(p.kernel)}, {"degree", p.degree},
                       {"gamma", toString(p.gamma)}, {"gamma_value", p.gammaValue}, {"max_iter", p.maxIter},
                       {"tol", p.tol}};
        const auto& s = m.svm;
        j["svm"] = {{"gamma", s.gamma},
                    {"rho", s.rho},
                    {"coef", s.coef},
                    {"support_vectors", s.supportVectors},
                    {"iterations", s.iterations},
                    {"converged", s.converged}};
    } else {
        const auto& p = m.forestParams;
        j["params"] = {{"n_estimators", p.nEstimators}, {"criterion", toString(p.criterion)}, {"seed", p.seed}};
        json trees = json::array();
        for (const auto& t : m.forest.trees) trees.push_back(treeToJson(t));
        j["forest"] = {{"oob_score", m.forest.oobScore}, {"trees", trees}};
    }
    return j;
}

TrainedModel fromJson(const json& j) {
    try {
        if (j.at("format") != "lichenmeter-model") throw IoError("not a lichenmeter model");
        if (j.at("version").get<int>() != kFormatVersion) throw IoError("unsupported model version");
        TrainedModel m;
        const std::string fam = j.at("family");
        if (fam != "svm" && fam != "forest") throw IoError("model file: unknown family '" + fam + "'");
        m.family = fam == "svm" ? Family::Svm : Family::Forest;
        m.dimension = j.at("dimension");
        m.slic.nSegments = j.at("slic").at("n_segments");
        m.slic.compactness = j.at("slic").at("compactness");
        m.slic.sigma = j.at("slic").at("sigma");
        m.features.bins = j.at("features").at("bins");
        m.features.mode = j.at("features").at("mode") == "joint" ? features::HistogramMode::Joint
                                                                 : features::HistogramMode::PerChannel;
        if (m.features.bins < 1 || m.dimension != m.features.dimension())
            throw InvalidArgument("model dimension " + std::to_string(m.dimension) +
                                  " does not match its feature configuration");
        const json& p = j.at("params");
        if (m.family == Family::Svm) {
            m.svmParams.C = p.at("C");
            m.svmParams.kernel = parseKernel(p.at("kernel"));
            m.svmParams.degree = p.at("degree");
            const std::string g = p.at("gamma");
            m.svmParams.gamma = g == "scale" ? GammaMode::Scale : g == "auto" ? GammaMode::Auto : GammaMode::Value;
            m.svmParams.gammaValue = p.at("gamma_value");
            m.svmParams.maxIter = p.at("max_iter");
            m.svmParams.tol = p.at("tol");
            const json& s = j.at("svm");
            m.svm.kernel = m.svmParams.kernel;
            m.svm.degree = m.svmParams.degree;
            m.svm.gamma = s.at("gamma");
            m.svm.rho = s.at("rho");
            m.svm.coef = s.at("coef").get<std::vector<double>>();
            m.svm.supportVectors = s.at("support_vectors").get<std::vector<double>>();
            m.svm.iterations = s.at("iterations");
            m.svm.converged = s.at("converged");
            m.svm.dim = m.dimension;
            if (m.svm.supportVectors.size() != m.svm.coef.size() * static_cast<std::size_t>(m.dimension))
                throw InvalidArgument("support vectors do not match the model dimension");
        } else {
            m.forestParams.nEstimators = p.at("n_estimators");
            m.forestParams.criterion = p.at("criterion") == "entropy" ? Criterion::Entropy : Criterion::Gini;
            m.forestParams.seed = p.at("seed");
            m.forest.dim = m.dimension;
            m.forest.oobScore = j.at("forest").at("oob_score");
            for (const auto& t : j.at("forest").at("trees")) m.forest.trees.push_back(treeFromJson(t, m.dimension));
            if (m.forest.trees.empty()) throw IoError("model file: forest has no trees");
        }
        return m;
    } catch (const json::exception& e) {
        throw IoError(std::string("model file: ") + e.what());
    }
}

void saveModel(const std::filesystem::path& path, const TrainedModel& m) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << toJson(m).dump() << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

TrainedModel loadModel(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw IoError("model file " + path.string() + ": " + e.what());
    }
    return fromJson(j);
}

} // namespace lichen::learners
