// Frozen reference values for the test suite.
//
// Each constant was computed independently of the library: either by a
// closed-form hand derivation, or by high-resolution numerical integration
// (adaptive quadrature / dense trapezoid grids in double precision) of the
// defining integral. Tests compare library output against these values at
// the stated tolerances; none of them were produced by the code under test.
#pragma once

namespace expected {

// ---------------------------------------------------------------------------
// Tilted-distribution log normalizers, means, variances.
// logZ(t, d) = log E_prior[exp(t b - d b^2 / 2)], then moments of the
// reweighted distribution.
// ---------------------------------------------------------------------------

// Gaussian prior N(0.7, 1), tilt (t, d) = (0.4, 0.9).
inline constexpr double kGaussTiltLogZ = -0.24750589045461374;
inline constexpr double kGaussTiltMean = 0.57894736842105;     // exact 11/19
inline constexpr double kGaussTiltVar = 0.5263157894736832;    // exact 10/19

// Two-point prior pi = 0.3 on {0, 1}, tilt (1.2, 0.8).
inline constexpr double kBerTiltLogZ = 0.3131029163157272;
inline constexpr double kBerTiltMean = 0.4881777387738595;
inline constexpr double kBerTiltVar = 0.2498602341395009;

// Spike-and-slab pi = 0.4, tau = 1.5, tilt (0.9, 1.1).
inline constexpr double kSsTiltLogZ = -0.2004425505142478;
inline constexpr double kSsTiltMean = 0.29790671589513035;
inline constexpr double kSsTiltVar = 0.41585936718715144;

// Two-component location mixture theta = (-0.8, 0.6), tilt (0.5, 1.3).
inline constexpr double kGmmTiltLogZ = -0.3402575465083417;
inline constexpr double kGmmTiltMean = 0.3146942876633157;
inline constexpr double kGmmTiltVar = 0.3765950685504669;

// Symmetric two-component mixture theta = 0.9, tilt (-0.7, 0.6).
inline constexpr double kSymTiltLogZ = -0.15815627215946337;
inline constexpr double kSymTiltMean = -0.6482060652218536;
inline constexpr double kSymTiltVar = 0.8970092040787232;

// Heavy-tailed location prior theta = 0.3, tilt (0.8, 1.2).
inline constexpr double kCauchyTiltLogZ = -0.4661560190579019;
inline constexpr double kCauchyTiltMean = 0.505131361811942;
inline constexpr double kCauchyTiltVar = 0.4736107816443212;

// ---------------------------------------------------------------------------
// Parameter scores and Hessians at spot points.
// ---------------------------------------------------------------------------

// Spike-and-slab (0.4, 1.5) at b = 0.7.
inline constexpr double kSsGrad1 = -1.6666666666666667;   // -1/(1-pi)
inline constexpr double kSsGrad2 = -0.5214814814814814;   // (b^2-tau^2)/tau^3
inline constexpr double kSsHess22 = 0.15407407407407403;  // 1/tau^2-3b^2/tau^4

// Location mixture (-0.8, 0.6) at b = 0.5.
inline constexpr double kGmmGrad1 = 0.23365487411552976;
inline constexpr double kGmmGrad2 = -0.3281061925486384;

// Symmetric mixture theta = 0.9 at b = 0.5.
inline constexpr double kSymGrad = -0.6890504973267042;

// Heavy-tailed location theta = 0.3 at b = 1.4.
inline constexpr double kCauchyGrad = 0.9954751131221721;
inline constexpr double kCauchyHess = 0.08599332527999025;

// ---------------------------------------------------------------------------
// Prior Fisher information at reference parameters.
// ---------------------------------------------------------------------------

inline constexpr double kFisherBer03 = 4.761904761904762;  // 1/(pi(1-pi))
// Spike-and-slab (0.4, 1.5): diag(1/(pi(1-pi)), 2(1-pi)/tau^2), off-diag 0.
inline constexpr double kFisherSs11 = 4.166666666666667;
inline constexpr double kFisherSs22 = 0.5333333333333333;
// Location mixture (-0.8, 0.6).
inline constexpr double kFisherGmm11 = 0.3130874615227456;
inline constexpr double kFisherGmm12 = 0.007191041965267176;
inline constexpr double kFisherGmm22 = 1.2445146426242009;
// Symmetric mixture theta = 0.9.
inline constexpr double kFisherSym = 0.6738871489024385;
// Heavy-tailed location: 1/2 at every theta.
inline constexpr double kFisherCauchy = 0.5;

// ---------------------------------------------------------------------------
// Asymptotic quantities at d0 = 1 (unit noise variance), derived by dense
// numerical integration of the defining data-marginal expectations.
// ---------------------------------------------------------------------------

// Two-point prior, pi = 0.5 (symmetric point: the bias constant vanishes).
inline constexpr double kBerV05 = 0.8162170625340013;
inline constexpr double kBerJ05 = 0.7959457343664997;
inline constexpr double kBerUps05 = 0.19898643359162493;
inline constexpr double kBerKappa05 = 0.0;

// Two-point prior, pi = 0.3.
inline constexpr double kBerV03 = 0.8753327394836985;
inline constexpr double kBerJ03 = 0.8161801247084235;
inline constexpr double kBerUps03 = 0.17139782618876892;
inline constexpr double kBerKappa03 = 0.03547125563031213;

// Spike-and-slab (0.5, 1.0).
inline constexpr double kSsV11 = 0.20360577743573927;
inline constexpr double kSsV12 = -0.18051315549774094;
inline constexpr double kSsV22 = 0.1998080045183781;
inline constexpr double kSsJ1 = 0.0;  // odd symmetry in b
inline constexpr double kSsJ2 = 0.0;
inline constexpr double kSsUps = 0.3235090305806979;
inline constexpr double kSsKappa1 = -0.10188971350527262;
inline constexpr double kSsKappa2 = 0.08886198607854771;

// Location mixture (-1, 1).
inline constexpr double kGmmV11 = 0.15285163485780554;
inline constexpr double kGmmV12 = 0.00898616582677259;
inline constexpr double kGmmV22 = 0.24355157417301104;
inline constexpr double kGmmJ1 = 0.16183780068457812;
inline constexpr double kGmmJ2 = 0.25253773999978363;
inline constexpr double kGmmUps = 0.5856244593156383;
inline constexpr double kGmmKappa1 = -0.09047298314282287;
inline constexpr double kGmmKappa2 = 0.16450577439443187;

// Symmetric mixture theta = 1 (J vanishes by symmetry).
inline constexpr double kSymV = 0.2656127795087321;
inline constexpr double kSymJ = 0.0;
inline constexpr double kSymUps = 0.6624716488312172;
inline constexpr double kSymKappa = 0.23438714178271502;

// Gaussian prior, unit noise: V = J = upsilon = 1/(1+sigma2), kappa = 0,
// Fisher information 1 (all closed form).
inline constexpr double kGaussV = 0.5;

// Heavy-tailed location family at d0 = 1, unit scale. Monte Carlo over a
// wide importance grid (tail mass 1 - 1.6e-5); good to ~1e-3. The location
// structure forces V = J here; the second moment diverges so kappa does not
// exist.
inline constexpr double kCauchyV = 0.22927204024358883;
inline constexpr double kCauchyJ = 0.22927204000458448;
inline constexpr double kCauchyUps = 0.7707279604032106;

// ---------------------------------------------------------------------------
// Standard normal quantiles.
// ---------------------------------------------------------------------------

inline constexpr double kZ95 = 1.6448536269514722;
inline constexpr double kZ975 = 1.959963984540054;

// ---------------------------------------------------------------------------
// Replication-study reference values (Monte Carlo targets used by the
// acceptance gate; tolerances are stated at the point of use).
// ---------------------------------------------------------------------------

// Two-point prior pi = 0.5, n = p^2: mean squared error of the variational
// fit at p = 25, 50, 100.
inline constexpr double kMseTwoPointP25 = 0.042;
inline constexpr double kMseTwoPointP50 = 0.023;
inline constexpr double kMseTwoPointP100 = 0.011;

// Coverage study at p = 100, n = 10000, 90% nominal:
// oracle interval width for the two-point prior, and adjusted-interval
// widths for the average and contrast projections.
inline constexpr double kOracleWidthBer = 1.47;
inline constexpr double kAdjustedWidthAvg = 3.22;
inline constexpr double kAdjustedWidthCon = 1.44;

}  // namespace expected
