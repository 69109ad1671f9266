#pragma once

// Exact dual maximisation for tiny SVM problems by enumerating which
// variables sit at 0, at C, or strictly between. On each face the concave
// dual restricted to the free variables has a stationary point given by a
// linear KKT system; the best feasible one over all 3^n faces is optimal.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "lichen/learners.hpp"
#include "lichen/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd gramQ(const lichen::learners::Dataset& d, const lichen::learners::SvmParams& p, double gamma) {
    Eigen::MatrixXd q(d.n, d.n);
    for (int i = 0; i < d.n; ++i)
        for (int j = 0; j < d.n; ++j) {
            const double yi = d.y[i] ? 1 : -1, yj = d.y[j] ? 1 : -1;
            q(i, j) = yi * yj * lichen::learners::kernelValue(p.kernel, p.degree, gamma, d.row(i), d.row(j), d.d);
        }
    return q;
}

inline double dualObjective(const Eigen::MatrixXd& q, const Eigen::VectorXd& a) {
    return a.sum() - 0.5 * a.dot(q * a);
}

struct OracleResult {
    double objective = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd alpha;
};

inline OracleResult bruteForceDual(const lichen::learners::Dataset& d, const lichen::learners::SvmParams& p,
                                   double gamma) {
    const int n = d.n;
    const double C = p.C;
    const Eigen::MatrixXd q = gramQ(d, p, gamma);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = d.y[i] ? 1 : -1;

    OracleResult best;
    int faces = 1;
    for (int i = 0; i < n; ++i) faces *= 3;
    for (int code = 0; code < faces; ++code) {
        std::vector<int> state(n), freeIdx;
        int c = code;
        Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            state[i] = c % 3;
            c /= 3;
            if (state[i] == 1) a(i) = C;
            if (state[i] == 2) freeIdx.push_back(i);
        }
        const int f = static_cast<int>(freeIdx.size());
        if (f > 0) {
            // [Q_FF  -y_F] [a_F]   [1 - Q_FB a_B]
            // [y_F'   0  ] [nu ] = [  -y_B' a_B ]
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(f + 1, f + 1);
            Eigen::VectorXd rhs(f + 1);
            const Eigen::VectorXd qa = q * a;
            for (int r = 0; r < f; ++r) {
                for (int s = 0; s < f; ++s) m(r, s) = q(freeIdx[r], freeIdx[s]);
                m(r, f) = -y(freeIdx[r]);
                m(f, r) = y(freeIdx[r]);
                rhs(r) = 1.0 - qa(freeIdx[r]);
            }
            rhs(f) = -y.dot(a);
            const Eigen::VectorXd sol = m.completeOrthogonalDecomposition().solve(rhs);
            if ((m * sol - rhs).norm() > 1e-8 * (1 + rhs.norm())) continue;
            bool ok = true;
            for (int r = 0; r < f; ++r) {
                if (sol(r) < -1e-12 || sol(r) > C + 1e-12) ok = false;
                a(freeIdx[r]) = std::clamp(sol(r), 0.0, C);
            }
            if (!ok) continue;
        }
        if (std::fabs(y.dot(a)) > 1e-9 * (1 + C)) continue;
        const double obj = dualObjective(q, a);
        if (obj > best.objective) {
            best.objective = obj;
            best.alpha = a;
        }
    }
    return best;
}

struct BatteryCase {
    lichen::learners::Dataset data;
    lichen::learners::SvmParams params;
};

// Fixed set of 2..6 point problems across kernels and C values.
inline std::vector<BatteryCase> svmBattery() {
    using namespace lichen::learners;
    std::vector<BatteryCase> out;
    lichen::Rng rng(4242);
    const Kernel kernels[] = {Kernel::Linear, Kernel::Rbf, Kernel::Poly};
    const double cs[] = {1, 10, 100};
    for (int n = 2; n <= 6; ++n)
        for (int rep = 0; rep < 4; ++rep)
            for (Kernel k : kernels)
                for (double C : cs) {
                    BatteryCase bc;
                    bc.data.n = n;
                    bc.data.d = 2 + static_cast<int>(rng.below(2));
                    for (int i = 0; i < n * bc.data.d; ++i) bc.data.x.push_back(rng.uniform(-1, 1));
                    for (int i = 0; i < n; ++i) bc.data.y.push_back(static_cast<int>(rng.below(2)));
                    bc.data.y[0] = 0;
                    bc.data.y[1] = 1;
                    bc.params.kernel = k;
                    bc.params.C = C;
                    bc.params.degree = 2 + static_cast<int>(rng.below(4));
                    bc.params.gamma = rep % 2 ? GammaMode::Auto : GammaMode::Scale;
                    bc.params.exec = lichen::Exec::Serial;
                    out.push_back(std::move(bc));
                }
    // XOR with rbf gamma=1, C=100.
    BatteryCase x;
    x.data.n = 4;
    x.data.d = 2;
    x.data.x = {0, 0, 1, 1, 0, 1, 1, 0};
    x.data.y = {0, 0, 1, 1};
    x.params.kernel = Kernel::Rbf;
    x.params.gamma = GammaMode::Value;
    x.params.gammaValue = 1;
    x.params.C = 100;
    out.push_back(x);
    return out;
}

} // namespace testutil
