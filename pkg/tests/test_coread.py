import numpy as np
import pytest
from scipy import sparse

from coread_core.domain.errors import DomainError, InvariantError
from coread_core.domain.models import ReadProfile, Sample
from coread_core.pipeline.coread import (
    Incidence,
    brute_force_coread,
    build_coread,
    build_incidence,
)


def make_sample(paper_sets):
    """
    按给定顺序构造样本，编号即字典顺序
    """
    users = tuple(paper_sets)
    profiles = {
        u: ReadProfile(u, frozenset(papers), {"2005-01": len(papers)}, len(papers))
        for u, papers in paper_sets.items()
    }
    return Sample(users, {u: i for i, u in enumerate(users, start=1)}, profiles, len(users))


def random_sample(rng, n_users, n_papers=300):
    # 偏斜的文章热度，保证有大量重叠
    weights = 1.0 / np.arange(1, n_papers + 1)
    weights /= weights.sum()
    paper_sets = {}
    for i in range(n_users):
        size = int(rng.integers(1, 40))
        chosen = rng.choice(n_papers, size=size, replace=False, p=weights)
        paper_sets[f"u{i:04d}"] = {f"p{j:04d}" for j in chosen}
    return make_sample(paper_sets)


def test_single_user_incidence():
    inc = build_incidence(make_sample({"A": {"p", "q", "r"}}))
    assert inc.reader_lists == [(1,), (1,), (1,)]
    assert list(inc.user_degrees) == [3]


def test_overlapping_users_incidence():
    inc = build_incidence(make_sample({"A": {"p", "q"}, "B": {"q", "r"}}))
    assert inc.paper_index == {"p": 0, "q": 1, "r": 2}
    assert inc.reader_lists == [(1,), (1, 2), (2,)]
    assert list(inc.user_degrees) == [2, 2]


def test_reader_lists_use_sample_indices():
    sample = make_sample({"B": {"q", "r"}, "A": {"p", "q"}})
    inc = build_incidence(sample)
    readers_of_q = inc.reader_lists[inc.paper_index["q"]]
    assert sorted(sample.users[i - 1] for i in readers_of_q) == ["A", "B"]
    assert set(readers_of_q) == {sample.index_of["A"], sample.index_of["B"]}


def test_identical_readers_incidence():
    papers = {f"p{i}" for i in range(5)}
    inc = build_incidence(make_sample({"A": papers, "B": papers}))
    assert inc.reader_lists == [(1, 2)] * 5


def test_coread_two_overlapping_users():
    m = build_coread(build_incidence(make_sample({"A": {"p", "q"}, "B": {"q", "r"}})))
    assert m.R.toarray().tolist() == [[2, 1], [1, 2]]
    np.testing.assert_array_equal(m.N.toarray(), [[1.0, 0.5], [0.5, 1.0]])
    assert list(m.degrees) == [2, 2]


def test_coread_disjoint_users():
    m = build_coread(build_incidence(make_sample({"A": {"a", "b", "c"}, "B": {"d", "e", "f", "g"}})))
    assert m.R.toarray().tolist() == [[3, 0], [0, 4]]
    np.testing.assert_array_equal(m.N.toarray(), np.eye(2))


def test_matches_brute_force_on_random_samples():
    rng = np.random.default_rng(20050101)
    sizes = list(rng.integers(2, 60, size=98)) + [200, 200]
    for n_users in sizes:
        sample = random_sample(rng, int(n_users))
        fast = build_coread(build_incidence(sample), sample.users)
        slow = brute_force_coread(sample)

        np.testing.assert_array_equal(fast.R.toarray(), slow.R.toarray())
        np.testing.assert_array_equal(fast.N.toarray(), slow.N.toarray())


def test_normalized_matrix_properties():
    sample = random_sample(np.random.default_rng(11), 80)
    m = build_coread(build_incidence(sample), sample.users)
    R = m.R.toarray()
    N = m.N.toarray()
    d = m.degrees.astype(float)

    assert (R == R.T).all()
    np.testing.assert_array_equal(np.diag(N), np.ones(len(d)))
    assert N.min() >= 0.0
    assert N.max() <= 1.0
    # d_k * n_kl == d_l * n_lk
    np.testing.assert_allclose(d[:, None] * N, (d[:, None] * N).T, rtol=0, atol=1e-12)
    for k in range(len(d)):
        assert R[k, k] == sample.profile_at(k + 1).total_reads


def test_shared_paper_increments_pair_only():
    base = {"A": {"p"}, "B": {"q"}, "C": {"r"}}
    grown = {"A": {"p", "x"}, "B": {"q", "x"}, "C": {"r"}}
    before = build_coread(build_incidence(make_sample(base))).R.toarray()
    after = build_coread(build_incidence(make_sample(grown))).R.toarray()

    diff = after - before
    assert diff[0, 1] == diff[1, 0] == 1
    assert diff[0, 0] == diff[1, 1] == 1
    assert diff[2].tolist() == [0, 0, 0]


def test_triplets_are_upper_triangle_one_based():
    m = build_coread(build_incidence(make_sample({"A": {"p", "q"}, "B": {"q", "r"}})))
    assert list(m.triplets()) == [(1, 1, 2), (1, 2, 1), (2, 2, 2)]


def test_dense_n_respects_threshold():
    sample = make_sample({"A": {"p"}, "B": {"p"}})
    m = build_coread(build_incidence(sample), sample.users, dense_threshold=1)
    with pytest.raises(DomainError):
        m.dense_n()


def test_zero_degree_user_is_an_invariant_violation():
    matrix = sparse.csr_matrix(np.array([[1], [0]], dtype=np.int64))
    inc = Incidence(n_users=2, paper_index={"p": 0}, matrix=matrix)
    with pytest.raises(InvariantError):
        build_coread(inc)


def test_brute_force_refuses_large_samples():
    sample = make_sample({f"u{i}": {f"p{i}"} for i in range(501)})
    with pytest.raises(DomainError):
        brute_force_coread(sample)
