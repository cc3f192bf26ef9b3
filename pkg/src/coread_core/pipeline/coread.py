from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np
from scipy import sparse

from coread_core.domain.errors import DomainError, InvariantError
from coread_core.domain.models import Sample
from coread_core.utils.report import emit_step

DEFAULT_DENSE_THRESHOLD = 5000
BRUTE_FORCE_MAX_USERS = 500


@dataclass(frozen=True)
class Incidence:
    """
    用户-文章关联矩阵

    Attributes:
        n_users (int): 样本大小Ns
        paper_index (dict): bibcode -> 列号（bibcode升序）
        matrix (csr_matrix): Ns x 文章数 的0/1矩阵，第i行是编号为i+1的用户
    """
    n_users: int
    paper_index: Dict[str, int]
    matrix: sparse.csr_matrix

    @property
    def reader_lists(self) -> List[Tuple[int, ...]]:
        """
        每篇文章的读者编号（与Sample.index_of一致，从1开始，升序），按列号排列
        """
        csc = self.matrix.tocsc()
        csc.sort_indices()
        return [
            tuple(int(i) + 1 for i in csc.indices[csc.indptr[j]:csc.indptr[j + 1]])
            for j in range(csc.shape[1])
        ]

    @property
    def user_degrees(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel().astype(np.int64)


@dataclass(frozen=True)
class CoreadMatrices:
    """
    共读矩阵R和归一化共读矩阵N

    Attributes:
        R (csr_matrix): 对称整数矩阵，r_kl = |papers(k) ∩ papers(l)|
        N (csr_matrix): n_kl = r_kl / r_kk，对角线全为1
        degrees (ndarray): d_k = r_kk
        users (tuple): 行号对应的cookie_id
    """
    R: sparse.csr_matrix
    N: sparse.csr_matrix
    degrees: np.ndarray
    users: Tuple[str, ...] = ()
    dense_threshold: int = DEFAULT_DENSE_THRESHOLD

    @property
    def n_users(self) -> int:
        return self.R.shape[0]

    def dense_n(self) -> np.ndarray:
        """
        稠密形式的N，仅在Ns不超过dense_threshold时可用
        """
        if self.n_users > self.dense_threshold:
            raise DomainError(
                f"refusing to materialise a dense {self.n_users}x{self.n_users} N "
                f"(dense threshold {self.dense_threshold})"
            )
        return self.N.toarray()

    def triplets(self) -> Iterator[Tuple[int, int, int]]:
        """
        上三角（含对角线）非零元素，(k, l, r_kl)，编号从1开始
        """
        upper = sparse.triu(self.R, format='coo')
        order = np.lexsort((upper.col, upper.row))
        for idx in order:
            yield int(upper.row[idx]) + 1, int(upper.col[idx]) + 1, int(upper.data[idx])


def build_incidence(sample: Sample) -> Incidence:
    """
    由样本构建用户-文章关联矩阵（倒排索引）

    Args:
        sample (Sample): 样本

    Returns:
        Incidence: 关联结构
    """
    papers = sorted({bibcode for profile in sample.ordered_profiles() for bibcode in profile.papers})
    paper_index = {bibcode: j for j, bibcode in enumerate(papers)}

    rows = []
    cols = []
    for row, profile in enumerate(sample.ordered_profiles()):
        for bibcode in profile.papers:
            rows.append(row)
            cols.append(paper_index[bibcode])

    data = np.ones(len(rows), dtype=np.int64)
    matrix = sparse.csr_matrix(
        (data, (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(sample.size, len(papers)),
        dtype=np.int64,
    )
    matrix.sort_indices()
    return Incidence(n_users=sample.size, paper_index=paper_index, matrix=matrix)


def _normalize_rows(R: sparse.csr_matrix, degrees: np.ndarray) -> sparse.csr_matrix:
    # n_kl = r_kl / r_kk，逐元素除法，保证与暴力算法结果逐位一致
    row_of = np.repeat(np.arange(R.shape[0]), np.diff(R.indptr))
    N = sparse.csr_matrix(
        (R.data.astype(np.float64) / degrees[row_of].astype(np.float64), R.indices.copy(), R.indptr.copy()),
        shape=R.shape,
    )
    return N


def _finish(R: sparse.csr_matrix, users: Tuple[str, ...], dense_threshold: int) -> CoreadMatrices:
    R = R.tocsr()
    R.sum_duplicates()
    R.sort_indices()

    degrees = R.diagonal().astype(np.int64)
    zero = np.flatnonzero(degrees <= 0)
    if zero.size:
        raise InvariantError(f"user row {int(zero[0]) + 1} has zero reads; it should have been excluded upstream")

    if (R != R.T).nnz:
        raise InvariantError("co-read matrix is not symmetric")

    return CoreadMatrices(R=R, N=_normalize_rows(R, degrees), degrees=degrees,
                          users=users, dense_threshold=dense_threshold)


def build_coread(inc: Incidence, users: Tuple[str, ...] = (),
                 dense_threshold: int = DEFAULT_DENSE_THRESHOLD) -> CoreadMatrices:
    """
    构建共读矩阵 R = A·Aᵀ 和归一化矩阵 N

    稀疏乘法只累计每篇文章读者列表内的用户对，复杂度为 Σ_p |readers(p)|²。

    Args:
        inc (Incidence): 关联结构
        users (tuple): 行号对应的cookie_id，可选
        dense_threshold (int): 允许稠密化N的最大Ns

    Returns:
        CoreadMatrices: R、N和度向量

    Raises:
        InvariantError: 存在零度用户或R不对称
    """
    A = inc.matrix
    R = (A @ A.T).astype(np.int64)
    matrices = _finish(R, users, dense_threshold)
    emit_step("coread", n_users=matrices.n_users, n_papers=A.shape[1], nnz=int(matrices.R.nnz))
    return matrices


def brute_force_coread(sample: Sample, max_users: int = BRUTE_FORCE_MAX_USERS,
                       dense_threshold: int = DEFAULT_DENSE_THRESHOLD) -> CoreadMatrices:
    """
    用两两集合交集直接计算共读矩阵，作为build_coread的对照

    Args:
        sample (Sample): 样本
        max_users (int): 允许的最大样本数

    Returns:
        CoreadMatrices: 与build_coread结果逐位一致

    Raises:
        DomainError: 样本超过max_users
    """
    if sample.size > max_users:
        raise DomainError(
            f"brute-force co-read oracle is O(Ns^2 * papers); refusing Ns={sample.size} > {max_users}"
        )

    paper_sets = [profile.papers for profile in sample.ordered_profiles()]
    n = len(paper_sets)
    dense = np.zeros((n, n), dtype=np.int64)
    for k in range(n):
        for l in range(k, n):
            common = len(paper_sets[k] & paper_sets[l])
            dense[k, l] = common
            dense[l, k] = common

    return _finish(sparse.csr_matrix(dense), sample.users, dense_threshold)
