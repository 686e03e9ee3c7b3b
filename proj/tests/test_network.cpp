#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "patsvd/network.hpp"
#include "patsvd/util.hpp"

namespace {

using namespace patsvd;

Vector random_vector(int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = gauss(rng);
    return v;
}

Matrix random_matrix(int rows, int cols, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix a(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) a(i, j) = gauss(rng);
    return a;
}

TEST(Network, ZeroWeightsGiveZeroOutput) {
    UNet net({16, {4, 8}});
    const Vector out = network_forward(net, random_vector(256, 1));
    EXPECT_EQ(out.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(Network, DegenerateNetIsTheIdentityWhenToldSo) {
    UNet net({8, {}}); // single linear 1x1 conv
    ASSERT_EQ(net.num_params(), 2u);
    net.set_params({1.0, 0.0});
    const Vector z = random_vector(64, 2);
    EXPECT_EQ(network_forward(net, z), z);
    net.set_params({2.0, 0.5});
    const Vector out = network_forward(net, z);
    for (int i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(out[i], 2.0 * z[i] + 0.5);
}

TEST(Network, InitializationIsSeedDeterministic) {
    UNet a({16, {4, 8}}), b({16, {4, 8}});
    a.init_weights(5);
    b.init_weights(5);
    EXPECT_EQ(a.flatten_params(), b.flatten_params());
    b.init_weights(6);
    EXPECT_NE(a.flatten_params(), b.flatten_params());
}

TEST(Network, ParameterRoundTrip) {
    UNet net({16, {4, 8}});
    net.init_weights(11);
    const std::vector<double> p = net.flatten_params();
    UNet other({16, {4, 8}});
    other.set_params(p);
    EXPECT_EQ(other.flatten_params(), p);
    EXPECT_EQ(network_forward(other, random_vector(256, 3)),
              network_forward(net, random_vector(256, 3)));
    EXPECT_THROW(other.set_params(std::vector<double>(p.size() + 1, 0.0)), std::invalid_argument);
}

TEST(Network, PinnedForwardRegression) {
    // frozen fingerprint of the full forward pass: any change to layer
    // order, padding, pooling or init breaks this
    UNet net({16, {4, 8, 16}});
    net.init_weights(20240317);
    const Vector out = network_forward(net, random_vector(256, 20240318));
    const uint64_t hash = fnv1a64(out.data(), size_t(out.size()) * sizeof(double));
    EXPECT_EQ(hash, 0x8797a9ab068f2d90ull);
}

TEST(Network, GradientMatchesFiniteDifferencesLinear) {
    UNet net({8, {}});
    net.set_params({0.7, -0.2});
    const GradientCheckReport rep = gradient_check(net, random_vector(64, 4), 1e-8, 2);
    EXPECT_TRUE(rep.pass) << "max relative deviation " << rep.max_relative_deviation;
}

TEST(Network, GradientMatchesFiniteDifferencesDeep) {
    UNet net({8, {3, 5}});
    net.init_weights(31);
    const GradientCheckReport rep = gradient_check(net, random_vector(64, 5), 1e-4, 60);
    EXPECT_TRUE(rep.pass) << "max relative deviation " << rep.max_relative_deviation;
}

TEST(Network, ProjectedRangeIsOrthogonalToKeptSubspace) {
    const Matrix a = random_matrix(30, 16, 41);
    const SvdFactors f = svd_factorize(a);
    const TruncationPolicy policy = TruncationPolicy::keep(f, 6);
    UNet net({4, {3, 5}});
    net.init_weights(42);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector phi = projected_forward(net, f, policy, random_vector(16, 500 + trial));
        for (int i = 0; i < 6; ++i)
            EXPECT_LE(std::abs(f.v.col(i).dot(phi)), 1e-12) << "trial " << trial;
    }
}

TEST(Network, ReconstructionPreservesKeptCoefficients) {
    const Matrix a = random_matrix(30, 16, 51);
    const SvdFactors f = svd_factorize(a);
    const TruncationPolicy policy = TruncationPolicy::keep(f, 6);
    UNet net({4, {3, 5}});
    net.init_weights(52);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector y = random_vector(30, 600 + trial);
        const Vector base = tsvd_apply(f, policy, y);
        const Vector full = reconstruct(net, f, policy, y);
        for (int i = 0; i < 6; ++i)
            EXPECT_NEAR(f.v.col(i).dot(full), f.v.col(i).dot(base), 1e-12) << "trial " << trial;
    }
}

TEST(Network, ZeroNetworkReconstructionIsPlainTsvd) {
    const Matrix a = random_matrix(30, 16, 61);
    const SvdFactors f = svd_factorize(a);
    const TruncationPolicy policy = TruncationPolicy::keep(f, 5);
    UNet net({4, {3, 5}}); // all-zero weights
    const Vector y = random_vector(30, 62);
    EXPECT_EQ(reconstruct(net, f, policy, y), tsvd_apply(f, policy, y));
}

TEST(Network, LossGradientMatchesClosedFormForLinearNet) {
    const Matrix a = random_matrix(20, 16, 71);
    const SvdFactors f = svd_factorize(a);
    const TruncationPolicy policy = TruncationPolicy::keep(f, 5);
    const double w = 0.3, b = -0.1;
    UNet net({4, {}});
    net.set_params({w, b});

    const Vector x = random_vector(16, 72);
    const Vector z = random_vector(16, 73);
    UNet::Gradients grads = net.make_gradients();
    const double loss =
        loss_and_gradient(net, f, policy, {&x}, {&z}, grads);

    const Vector ones = Vector::Ones(16);
    const Vector resid = z + complement_project(f, policy, w * z + b * ones) - x;
    EXPECT_NEAR(loss, resid.squaredNorm(), 1e-12);
    const Vector pr = complement_project(f, policy, resid);
    const std::vector<double> g = grads.flatten();
    EXPECT_NEAR(g[0], 2.0 * pr.dot(z), 1e-10);
    EXPECT_NEAR(g[1], 2.0 * pr.sum(), 1e-10);
}

TEST(Network, LossIsZeroOnKeptSubspaceTargets) {
    const Matrix a = random_matrix(24, 16, 81);
    const SvdFactors f = svd_factorize(a);
    const TruncationPolicy policy = TruncationPolicy::keep(f, 5);
    // target inside the kept subspace: B_a A x reproduces it exactly
    Vector x = Vector::Zero(16);
    for (int i = 0; i < 5; ++i) x += double(i + 1) * f.v.col(i);
    const Vector z = tsvd_apply(f, policy, a * x);
    ASSERT_LE((z - x).norm(), 1e-10);

    UNet net({4, {3, 5}}); // zero weights: network adds nothing
    UNet::Gradients grads = net.make_gradients();
    const double loss = loss_and_gradient(net, f, policy, {&x}, {&z}, grads);
    EXPECT_LE(loss, 1e-20);
    // residual ~ 0 forces a ~ 0 gradient everywhere
    for (double g : grads.flatten()) EXPECT_LE(std::abs(g), 1e-9);
}

Dataset toy_training_set(const Matrix& a, const BasisGrid& grid, int count) {
    Dataset ds;
    ds.role = Role::train;
    ds.rho = 0.0;
    ds.grid_n = grid.n;
    for (int i = 0; i < count; ++i) {
        ds.x.push_back(generate_phantom(phantom_seed(77, Role::train, i), grid));
        ds.y.push_back(a * ds.x.back());
    }
    return ds;
}

TEST(Network, TrainingReducesTheLossAndIsDeterministic) {
    const BasisGrid grid{8, {}};
    const Matrix a = random_matrix(40, 64, 91);
    const SvdFactors f = svd_factorize(a);
    const TruncationPolicy policy = TruncationPolicy::keep(f, 20);
    const Dataset ds = toy_training_set(a, grid, 10);

    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.learning_rate = 1e-3;
    cfg.momentum = 0.9;
    cfg.batch_size = 4;
    cfg.seed = 7;
    const UNet::Config arch{8, {4, 8}};
    const TrainResult run = train(ds, f, policy, arch, cfg);
    ASSERT_EQ(run.epoch_loss.size(), 40u);
    EXPECT_LT(run.epoch_loss.back(), 0.7 * run.epoch_loss.front());

    const TrainResult rerun = train(ds, f, policy, arch, cfg);
    EXPECT_EQ(rerun.epoch_loss, run.epoch_loss);
    EXPECT_EQ(rerun.net.flatten_params(), run.net.flatten_params());
}

TEST(Network, TrainRejectsWrongRoleOrNoisyData) {
    const BasisGrid grid{8, {}};
    const Matrix a = random_matrix(40, 64, 92);
    const SvdFactors f = svd_factorize(a);
    Dataset ds = toy_training_set(a, grid, 2);
    ds.role = Role::test;
    EXPECT_THROW(train(ds, f, {0.0}, {8, {}}, {}), std::invalid_argument);
    ds.role = Role::train;
    ds.rho = 0.05;
    EXPECT_THROW(train(ds, f, {0.0}, {8, {}}, {}), std::invalid_argument);
}

TEST(Network, ValidatesArchitecture) {
    EXPECT_THROW(UNet({10, {4, 8, 8}}), std::invalid_argument); // 10 not divisible by 4
    EXPECT_THROW(UNet({4, {2, 4, 8}}), std::invalid_argument);  // bottom level below 2x2
    EXPECT_THROW(network_forward(UNet({16, {4}}), Vector::Zero(64)), std::invalid_argument);
}

} // namespace
