#include <doctest.h>

#include "giocal/gnss.hpp"
#include "oracles.hpp"

using namespace giocal;

namespace {

// Builds one synthetic epoch pair with explicit clock/bias terms; the oracle
// keeps the true geometric ranges on the side.
struct SyntheticEpoch {
  EpochObservations rover, base;
  std::map<std::pair<int, int>, double> rho_rover, rho_base;  // (sat,band)
  std::map<std::pair<int, int>, long long> n_rover, n_base;
};

SyntheticEpoch make_epoch(int n_sats, double rcv_clock_rover_s,
                          double rcv_clock_base_s, bool with_sat_terms) {
  SyntheticEpoch out;
  const Vec3 rover_pos(0, 0, 6378137.0);
  const Vec3 base_pos = rover_pos + Vec3(4000.0, 500.0, 2.0);
  for (int s = 1; s <= n_sats; ++s) {
    const double az = 0.61 * s;
    const double el = 0.3 + 0.05 * s;
    const Vec3 dir(std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el));
    const Vec3 sat_pos = rover_pos + 2.2e7 * dir;
    const double t_s = with_sat_terms ? 1e-3 * std::sin(3.0 * s) : 0.0;
    const double b_s = with_sat_terms ? 2.0 * std::cos(5.0 * s) : 0.0;
    const double iono = with_sat_terms ? 3.0 / std::sin(el) : 0.0;
    const double tropo = with_sat_terms ? 2.3 / std::sin(el) : 0.0;
    for (int band = 0; band < 2; ++band) {
      const double lambda = band_wavelength(band);
      auto make = [&](const Vec3& rcv, double t_r, long long n,
                      std::map<std::pair<int, int>, double>* rho_map) {
        GnssRawMeasurement m;
        m.t = 0.0;
        m.sat = s;
        m.band = band;
        m.wavelength = lambda;
        m.sat_pos = sat_pos;
        m.sat_vel = Vec3(100.0 * std::sin(s), -50.0, 20.0);
        m.sat_clk = t_s;
        m.sat_clk_drift = 0.0;
        const double rho = (sat_pos - rcv).norm();
        (*rho_map)[{s, band}] = rho;
        m.elevation = el;
        m.azimuth = az;
        m.pseudorange = rho + iono + tropo + kSpeedOfLight * (t_r - t_s) + (1.5 - b_s);
        m.carrier_cycles =
            (rho - iono + tropo + kSpeedOfLight * (t_r - t_s) + lambda * (0.3 + b_s) +
             lambda * double(n)) /
            lambda;
        m.doppler = 0.0;
        return m;
      };
      const long long n_r = 1000 * s + 17 * band + 5;
      const long long n_b = -700 * s + 13 * band - 2;
      out.n_rover[{s, band}] = n_r;
      out.n_base[{s, band}] = n_b;
      out.rover.push_back(make(rover_pos, rcv_clock_rover_s, n_r, &out.rho_rover));
      out.base.push_back(make(base_pos, rcv_clock_base_s, n_b, &out.rho_base));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("elevation variance model") {
  CHECK(elevation_variance(M_PI / 2, 0.3) == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(elevation_variance(30.0 * kDegToRad, 0.003) ==
        doctest::Approx(2.7e-5).epsilon(1e-12));
  double prev = elevation_variance(0.02, 0.3);
  for (double el = 0.05; el <= M_PI / 2 + 1e-9; el += 0.02) {
    const double v = elevation_variance(std::min(el, M_PI / 2), 0.3);
    CHECK(v < prev);
    prev = v;
  }
  CHECK_THROWS_AS(elevation_variance(0.0, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(elevation_variance(-0.1, 0.3), std::invalid_argument);
}

TEST_CASE("double differences cancel clock terms exactly") {
  // receiver clock bias c*t_r = 3e5 m on the rover side, satellite terms on
  const SyntheticEpoch e = make_epoch(8, 1e-3, -4e-4, true);
  const auto dds = form_double_differences(e.rover, e.base, 0.3, 0.003);
  CHECK(dds.size() == 2 * 7);
  for (const auto& dd : dds) {
    const double rho_dd =
        (e.rho_rover.at({dd.sat_other, dd.band}) - e.rho_base.at({dd.sat_other, dd.band})) -
        (e.rho_rover.at({dd.sat_ref, dd.band}) - e.rho_base.at({dd.sat_ref, dd.band}));
    CHECK(std::abs(dd.p_dd - rho_dd) < 1e-9);
    // carrier keeps the integer: (L_DD - rho_DD)/lambda is an integer
    const double n_float = (dd.l_dd - rho_dd) / dd.wavelength;
    const long long n_true =
        (e.n_rover.at({dd.sat_other, dd.band}) - e.n_base.at({dd.sat_other, dd.band})) -
        (e.n_rover.at({dd.sat_ref, dd.band}) - e.n_base.at({dd.sat_ref, dd.band}));
    CHECK(std::abs(n_float - double(n_true)) < 1e-6);
  }
}

TEST_CASE("zero baseline: identical lists difference to zero") {
  const SyntheticEpoch e = make_epoch(5, 2e-4, 2e-4, true);
  const auto dds = form_double_differences(e.rover, e.rover, 0.3, 0.003);
  for (const auto& dd : dds) {
    CHECK(std::abs(dd.p_dd) < 1e-9);
    CHECK(std::abs(dd.l_dd) < 1e-9);
  }
}

TEST_CASE("19 common satellites give 18 DD per band") {
  const SyntheticEpoch e = make_epoch(19, 0.0, 0.0, false);
  const auto dds = form_double_differences(e.rover, e.base, 0.3, 0.003);
  int per_band[2] = {0, 0};
  for (const auto& dd : dds) per_band[dd.band]++;
  CHECK(per_band[0] == 18);
  CHECK(per_band[1] == 18);
}

TEST_CASE("fewer than two common satellites yields nothing") {
  const SyntheticEpoch e = make_epoch(1, 0.0, 0.0, false);
  CHECK(form_double_differences(e.rover, e.base, 0.3, 0.003).empty());
}

TEST_CASE("DD invariant to an arbitrary per-epoch receiver bias, fuzzed") {
  for (int trial = 0; trial < 20; ++trial) {
    SyntheticEpoch e = make_epoch(6, 1e-4, -2e-4, true);
    const auto before = form_double_differences(e.rover, e.base, 0.3, 0.003);
    const double bias = test::randu(-1e4, 1e4);
    for (auto& m : e.rover) {
      m.pseudorange += bias;
      m.carrier_cycles += bias / m.wavelength;
    }
    const auto after = form_double_differences(e.rover, e.base, 0.3, 0.003);
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) {
      CHECK(std::abs(before[i].p_dd - after[i].p_dd) < 1e-8);
      CHECK(std::abs(before[i].l_dd - after[i].l_dd) < 1e-8);
    }
  }
}

TEST_CASE("DD variance composes the four measurement legs") {
  const SyntheticEpoch e = make_epoch(3, 0.0, 0.0, false);
  const auto dds = form_double_differences(e.rover, e.base, 0.3, 0.003);
  std::map<std::pair<int, int>, double> el_rov, el_base;
  for (const auto& m : e.rover) el_rov[{m.sat, m.band}] = m.elevation;
  for (const auto& m : e.base) el_base[{m.sat, m.band}] = m.elevation;
  for (const auto& dd : dds) {
    const double expected = elevation_variance(el_rov.at({dd.sat_ref, dd.band}), 0.3) +
                            elevation_variance(el_base.at({dd.sat_ref, dd.band}), 0.3) +
                            elevation_variance(el_rov.at({dd.sat_other, dd.band}), 0.3) +
                            elevation_variance(el_base.at({dd.sat_other, dd.band}), 0.3);
    CHECK(dd.var_p == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("reference satellite is the highest-elevation common satellite") {
  const SyntheticEpoch e = make_epoch(7, 0.0, 0.0, false);
  double max_el = 0.0;
  int best = -1;
  for (const auto& m : e.rover) {
    if (m.elevation > max_el) {
      max_el = m.elevation;
      best = m.sat;
    }
  }
  for (const auto& dd : form_double_differences(e.rover, e.base, 0.3, 0.003)) {
    CHECK(dd.sat_ref == best);
    CHECK(dd.sat_other != dd.sat_ref);
  }
}

TEST_CASE("antenna transform: identity cases") {
  LeverArm lever;
  lever.p_bg = Vec3(1, 0, 0);
  Vec3 p, v;
  antenna_position_velocity(Vec3::Zero(), Vec3::Zero(), Quat::Identity(), lever,
                            Vec3::Zero(), Mat3::Identity(), Mat3::Identity(), &p, &v);
  CHECK((p - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK(v.norm() < 1e-15);

  antenna_position_velocity(Vec3::Zero(), Vec3::Zero(), Quat::Identity(), lever,
                            Vec3(0, 0, 1), Mat3::Identity(), Mat3::Identity(), &p, &v);
  CHECK((v - Vec3(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("antenna velocity equals the numeric derivative of antenna position") {
  for (int trial = 0; trial < 50; ++trial) {
    LeverArm lever;
    lever.p_bg = test::rand_vec3(1.0);
    const Vec3 p0 = test::rand_vec3(100.0);
    const Vec3 v0 = test::rand_vec3(2.0);
    const Quat q0 = test::rand_quat();
    const Vec3 w = test::rand_vec3(0.5);
    const Mat3 r_en = quat_to_rot(test::rand_quat());
    const Mat3 r_nw = quat_to_rot(test::rand_quat());

    Vec3 v_model;
    antenna_position_velocity(p0, v0, q0, lever, w, r_en, r_nw, nullptr, &v_model);

    const double h = 1e-4;
    auto pos_at = [&](double dt) {
      Vec3 p;
      antenna_position_velocity(p0 + v0 * dt, v0, quat_boxplus(q0, w * dt), lever, w,
                                r_en, r_nw, &p, nullptr);
      return p;
    };
    const Vec3 v_fd = (pos_at(h) - pos_at(-h)) / (2.0 * h);
    CHECK((v_fd - v_model).norm() < 1e-6);
  }
}

TEST_CASE("predicted Doppler geometry") {
  const Vec3 sat_pos(2.0e7, 0, 0);
  // receding radially at 100 m/s
  CHECK(doppler_predicted(sat_pos, Vec3(100, 0, 0), Vec3::Zero(), Vec3::Zero(), 0.0,
                          0.0) == doctest::Approx(100.0).epsilon(1e-12));
  // tangential motion: zero range rate
  CHECK(doppler_predicted(sat_pos, Vec3(0, 250, 0), Vec3::Zero(), Vec3::Zero(), 0.0,
                          0.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(doppler_predicted(Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                                    Vec3::Zero(), 0.0, 0.0),
                  std::invalid_argument);
}

namespace {

// Two-epoch satellite stream whose pseudo-range changes match the Doppler:
// range rate synthesized directly from the relative geometry.
std::vector<EpochObservations> make_stream(double step_m) {
  std::vector<EpochObservations> epochs(2);
  for (int k = 0; k < 2; ++k) {
    for (int s = 1; s <= 4; ++s) {
      GnssRawMeasurement m;
      m.t = double(k);
      m.sat = s;
      m.band = 0;
      m.wavelength = band_wavelength(0);
      m.elevation = 0.5 + 0.1 * s;
      const double rate = 50.0 * s;  // m/s, constant
      m.pseudorange = 2.0e7 + 1000.0 * s + rate * k;
      if (k == 1 && s == 2) m.pseudorange += step_m;
      m.doppler = rate / m.wavelength;
      epochs[k].push_back(m);
    }
  }
  return epochs;
}

}  // namespace

TEST_CASE("stage-1 screen flags stepped pseudo-ranges only") {
  Stage1Config cfg;
  cfg.sigma_pr = 0.3;
  cfg.sigma_doppler = 0.1;
  CHECK(screen_outliers_stage1(make_stream(0.0), cfg).empty());
  const auto flagged = screen_outliers_stage1(make_stream(10.0), cfg);
  REQUIRE(flagged.size() == 1);
  CHECK(flagged[0].sat == 2);
  CHECK(flagged[0].stage == 1);
  CHECK(flagged[0].rejected);
  CHECK(flagged[0].statistic > flagged[0].threshold);
  CHECK(screen_outliers_stage1(make_stream(0.01), cfg).empty());
}

TEST_CASE("stage-2 screen flags biased DD against a good prediction") {
  const SyntheticEpoch e = make_epoch(6, 1e-4, -1e-4, true);
  auto dds = form_double_differences(e.rover, e.base, 0.3, 0.003);
  std::map<std::pair<int, int>, Vec3> sat_pos;
  for (const auto& m : e.rover) sat_pos[{m.sat, m.band}] = m.sat_pos;
  const Vec3 rover_pos(0, 0, 6378137.0);
  const Vec3 base_pos = rover_pos + Vec3(4000.0, 500.0, 2.0);
  Stage2Config cfg;

  CHECK(screen_outliers_stage2(dds, sat_pos, rover_pos, 0.01, base_pos, cfg).empty());

  auto biased = dds;
  biased[3].p_dd += 5.0;
  const auto flagged =
      screen_outliers_stage2(biased, sat_pos, rover_pos, 0.01, base_pos, cfg);
  REQUIRE(flagged.size() == 1);
  CHECK(flagged[0].sat == biased[3].sat_other);
  CHECK(flagged[0].stage == 2);

  // a bias common to every satellite cancels in the DD already
  SyntheticEpoch common = make_epoch(6, 1e-4, -1e-4, true);
  for (auto& m : common.rover) m.pseudorange += 7.5;
  auto dds_common = form_double_differences(common.rover, common.base, 0.3, 0.003);
  CHECK(screen_outliers_stage2(dds_common, sat_pos, rover_pos, 0.01, base_pos, cfg)
            .empty());
}
