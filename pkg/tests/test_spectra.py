import numpy as np
import pytest

from coread_core.config.run_spec import MatrixKind, PopulationRule, SynthConfig
from coread_core.domain.errors import DomainError, InsufficientDataError, UndefinedStatisticError
from coread_core.domain.models import JournalFilter, ReadProfile, Sample
from coread_core.pipeline.coread import build_coread, build_incidence
from coread_core.pipeline.logstore import dedup_reads, parse_events
from coread_core.pipeline.population import draw_sample, filter_population
from coread_core.pipeline.spectra import (
    SpectralSummary,
    eigendecompose,
    fit_alpha,
    fit_power_law,
    nested_sweep,
    separation_statistic,
    spectral_density,
    symmetrized,
)
from coread_core.pipeline.synth import generate
from coread_core.utils.report import configure


def make_matrices(paper_sets):
    users = tuple(paper_sets)
    profiles = {
        u: ReadProfile(u, frozenset(papers), {"2005-01": len(papers)}, len(papers))
        for u, papers in paper_sets.items()
    }
    sample = Sample(users, {u: i for i, u in enumerate(users, start=1)}, profiles, len(users))
    return build_coread(build_incidence(sample), users)


@pytest.fixture(scope="module")
def synthetic_sample():
    log_text, _ = generate(SynthConfig(n_users=600, n_papers=1500, noise_users=0, seed=7))
    profiles = dedup_reads(parse_events(log_text).events, JournalFilter())
    population = filter_population(profiles, PopulationRule())
    return draw_sample(population, len(population))


def test_disjoint_readers_have_unit_spectrum():
    m = make_matrices({"A": {"a", "b", "c"}, "B": {"d"}, "C": {"e", "f"}})
    summary = eigendecompose(m)

    np.testing.assert_allclose(summary.eigenvalues, [1.0, 1.0, 1.0], atol=1e-12)
    assert summary.full_spectrum
    assert summary.trace == pytest.approx(3.0)


def test_two_overlapping_users():
    m = make_matrices({"A": {"p", "q"}, "B": {"q", "r"}})
    summary = eigendecompose(m)
    np.testing.assert_allclose(summary.eigenvalues, [1.5, 0.5], atol=1e-12)


def test_identical_readers_give_zero_eigenvalue():
    papers = {f"p{i}" for i in range(5)}
    summary = eigendecompose(make_matrices({"A": papers, "B": papers}))

    np.testing.assert_allclose(summary.eigenvalues, [2.0, 0.0], atol=1e-12)
    assert summary.eigenvalues[-1] >= -1e-10


def test_eigenvectors_orthonormal_with_sign_convention(synthetic_sample):
    sample = draw_sample(synthetic_sample.profiles, 120)
    m = build_coread(build_incidence(sample), sample.users)
    summary = eigendecompose(m)
    U = summary.eigenvectors

    np.testing.assert_allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-10)
    pivots = np.argmax(np.abs(U), axis=0)
    assert (U[pivots, np.arange(U.shape[1])] > 0).all()


def test_spectrum_invariants(synthetic_sample):
    sample = draw_sample(synthetic_sample.profiles, 150)
    m = build_coread(build_incidence(sample), sample.users)
    summary = eigendecompose(m)
    S = symmetrized(m)

    # S与N相似：迹等于Ns
    assert summary.eigenvalues.sum() == pytest.approx(m.n_users, rel=1e-8)
    assert summary.trace_residual <= 1e-8
    assert summary.eigenvalues[-1] >= -1e-10
    assert summary.max_residual <= 1e-7 * np.linalg.norm(S)
    assert list(summary.eigenvalues) == sorted(summary.eigenvalues, reverse=True)
    assert summary.epsilon1 >= 1.0


def test_symmetrized_is_exactly_symmetric(synthetic_sample):
    sample = draw_sample(synthetic_sample.profiles, 90)
    S = symmetrized(build_coread(build_incidence(sample), sample.users))
    assert np.array_equal(S, S.T)


def test_eigenvalues_of_n_match_symmetrized(synthetic_sample):
    sample = draw_sample(synthetic_sample.profiles, 40)
    m = build_coread(build_incidence(sample), sample.users)
    direct = np.sort(np.linalg.eigvals(m.dense_n()).real)[::-1]
    np.testing.assert_allclose(eigendecompose(m).eigenvalues, direct, atol=1e-8)


def test_coread_matrix_kind_trace_is_total_reads():
    m = make_matrices({"A": {"p", "q"}, "B": {"q", "r", "s"}})
    summary = eigendecompose(m, MatrixKind.COREAD)
    assert summary.matrix == MatrixKind.COREAD
    assert summary.eigenvalues.sum() == pytest.approx(5.0)


def test_iterative_path_matches_dense_top_eigenvalues(synthetic_sample, capsys):
    configure()
    sample = draw_sample(synthetic_sample.profiles, 200)
    m = build_coread(build_incidence(sample), sample.users)
    dense = eigendecompose(m)
    partial = eigendecompose(m, dense_threshold=100, top_k=5)

    assert not partial.full_spectrum
    np.testing.assert_allclose(partial.eigenvalues[:5], dense.eigenvalues[:5], rtol=1e-8)
    assert '"status": "warning"' in capsys.readouterr().out
    with pytest.raises(DomainError):
        spectral_density(partial)


class TestSpectralDensity:
    def test_two_bins(self):
        density = spectral_density(SpectralSummary.from_eigenvalues([0, 1, 2, 3]), bins=2)
        np.testing.assert_allclose(density.bin_edges, [0.0, 1.5, 3.0])
        np.testing.assert_allclose(density.density, [1 / 3, 1 / 3])
        assert density.integral == pytest.approx(1.0)

    def test_degenerate_spectrum(self, capsys):
        configure()
        density = spectral_density(SpectralSummary.from_eigenvalues([1.0, 1.0, 1.0]))
        assert density.degenerate
        assert len(density.density) == 1
        assert density.integral == pytest.approx(1.0)
        assert '"status": "warning"' in capsys.readouterr().out

    def test_auto_bins_floor(self):
        density = spectral_density(SpectralSummary.from_eigenvalues(np.linspace(0, 1, 20)))
        assert len(density.density) >= 10
        assert density.integral == pytest.approx(1.0)
        assert density.bin_edges[0] == 0.0
        assert density.bin_edges[-1] == 1.0

    def test_needs_two_eigenvalues(self):
        with pytest.raises(InsufficientDataError):
            spectral_density(SpectralSummary.from_eigenvalues([2.0]))


class TestSeparationStatistic:
    def test_three_eigenvalues(self):
        assert separation_statistic(SpectralSummary.from_eigenvalues([3, 1, 0])) == pytest.approx(2.0)

    def test_four_eigenvalues(self):
        assert separation_statistic(SpectralSummary.from_eigenvalues([5, 2, 1, 0])) == pytest.approx(1.5)

    def test_zero_width_bulk(self):
        with pytest.raises(UndefinedStatisticError):
            separation_statistic(SpectralSummary.from_eigenvalues([1, 1, 1]))

    def test_too_few_eigenvalues(self):
        with pytest.raises(UndefinedStatisticError):
            separation_statistic(SpectralSummary.from_eigenvalues([1.5, 0.5]))


class TestFitAlpha:
    def test_exact_power_law(self):
        fit = fit_alpha([(n, 2.0 * n ** 0.25) for n in (50, 100, 200, 400)])
        assert fit.alpha == pytest.approx(0.25, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.log_intercept == pytest.approx(np.log(2.0), abs=1e-10)

    def test_another_exponent(self):
        fit = fit_alpha([(n, 0.7 * n ** 0.1344) for n in (100, 300, 1000, 3000)])
        assert fit.alpha == pytest.approx(0.1344, abs=1e-10)

    def test_constant_input(self):
        fit = fit_alpha([(50, 3.0), (100, 3.0), (200, 3.0)])
        assert fit.alpha == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == 1.0

    def test_needs_three_points(self):
        with pytest.raises(InsufficientDataError):
            fit_alpha([(50, 1.0), (100, 2.0)])

    def test_needs_distinct_sizes(self):
        with pytest.raises(InsufficientDataError):
            fit_alpha([(50, 1.0), (50, 2.0), (100, 3.0)])

    def test_rejects_non_positive_eigenvalue(self):
        with pytest.raises(DomainError):
            fit_alpha([(50, 1.0), (100, 0.0), (200, 3.0)])


class TestFitPowerLaw:
    def test_decaying_series(self):
        fit = fit_power_law([(n, 300.0 * n ** -0.5) for n in (50, 100, 200, 400, 800)], "R_stat")
        assert fit.alpha == pytest.approx(-0.5, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.log_intercept == pytest.approx(np.log(300.0), abs=1e-10)

    def test_error_names_the_quantity(self):
        with pytest.raises(DomainError, match="R_stat"):
            fit_power_law([(50, 1.0), (100, -2.0), (200, 3.0)], "R_stat")

    def test_fit_alpha_agrees(self):
        points = [(50, 20.0), (100, 31.0), (200, 55.0), (400, 80.0)]
        assert fit_alpha(points) == fit_power_law(points)


class TestNestedSweep:
    def test_prefix_samples(self, synthetic_sample):
        summaries = nested_sweep(synthetic_sample, [50, 100])
        assert [s.n_s for s in summaries] == [50, 100]

        prefix = draw_sample(synthetic_sample.profiles, 50)
        assert prefix.users == synthetic_sample.users[:50]
        alone = eigendecompose(build_coread(build_incidence(prefix), prefix.users))
        np.testing.assert_array_equal(summaries[0].eigenvalues, alone.eigenvalues)

    def test_single_size(self, synthetic_sample):
        assert len(nested_sweep(synthetic_sample, [3])) == 1

    def test_rejects_bad_sizes(self, synthetic_sample):
        with pytest.raises(DomainError):
            nested_sweep(synthetic_sample, [100, 50])
        with pytest.raises(DomainError):
            nested_sweep(synthetic_sample, [2, 50])
        with pytest.raises(DomainError):
            nested_sweep(synthetic_sample, [50, synthetic_sample.size + 1])

    def test_largest_eigenvalue_grows_and_separates(self, synthetic_sample):
        assert synthetic_sample.size >= 400
        summaries = nested_sweep(synthetic_sample, [50, 100, 200, 400])
        eps1 = [s.epsilon1 for s in summaries]

        assert all(b > a for a, b in zip(eps1, eps1[1:]))
        assert min(eps1) >= 1.0
        for summary in summaries[2:]:
            assert separation_statistic(summary) > 1.0


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_default_synthetic_log_has_scale_free_signature(seed):
    log_text, _ = generate(SynthConfig(seed=seed))
    profiles = dedup_reads(parse_events(log_text).events, JournalFilter())
    population = filter_population(profiles, PopulationRule())
    sizes = [50, 100, 200, 400, 800, 1600]
    sample = draw_sample(population, sizes[-1])
    assert sample.size == sizes[-1]

    summaries = nested_sweep(sample, sizes)
    eps1 = [s.epsilon1 for s in summaries]
    assert all(b > a for a, b in zip(eps1, eps1[1:]))
    assert min(eps1) >= 1.0

    fit = fit_alpha(list(zip(sizes, eps1)))
    assert fit.alpha > 0
    assert fit.r_squared >= 0.9

    for summary in summaries:
        if summary.n_s >= 200:
            assert separation_statistic(summary) > 1.0
