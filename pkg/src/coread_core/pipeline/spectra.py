from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse, stats
from scipy.sparse import linalg as sparse_linalg

from coread_core.config.run_spec import MatrixKind
from coread_core.domain.errors import (
    DomainError,
    EigenSolverError,
    InsufficientDataError,
    InvariantError,
    UndefinedStatisticError,
)
from coread_core.domain.models import Sample
from coread_core.pipeline.coread import DEFAULT_DENSE_THRESHOLD, CoreadMatrices, build_coread, build_incidence
from coread_core.pipeline.population import draw_sample
from coread_core.utils.report import emit_step, emit_warning

TRACE_TOLERANCE = 1e-8
PSD_TOLERANCE = 1e-10
RESIDUAL_TOLERANCE = 1e-7
RESIDUAL_PAIRS = 10
DEFAULT_ITERATIVE_K = 50
MIN_AUTO_BINS = 10
# 谱主体宽度小于此比例（相对ε₁）时视为零宽
BULK_WIDTH_TOLERANCE = 1e-12


@dataclass
class SpectralSummary:
    """
    一次特征分解的结果

    Attributes:
        eigenvalues (ndarray): 降序排列的实特征值
        eigenvectors (ndarray): 列为对称矩阵S的单位正交特征向量，与eigenvalues对应；可为None
        n_s (int): 样本大小
        matrix (MatrixKind): 分解的矩阵
        full_spectrum (bool): 是否为完整谱
        trace (float): 矩阵的迹
        trace_residual (float): |Σε - trace| / trace
        max_residual (float): 前若干对特征对的最大残差 |S·u - ε·u|₂
    """
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray]
    n_s: int
    matrix: MatrixKind = MatrixKind.NORMALIZED
    full_spectrum: bool = True
    trace: float = 0.0
    trace_residual: float = 0.0
    max_residual: float = 0.0

    @property
    def epsilon1(self) -> float:
        return float(self.eigenvalues[0])

    @classmethod
    def from_eigenvalues(cls, values: Sequence[float]) -> "SpectralSummary":
        """
        只由特征值构造（不含特征向量），用于统计量计算和外部数据
        """
        eigenvalues = np.sort(np.asarray(values, dtype=np.float64))[::-1]
        return cls(eigenvalues=eigenvalues, eigenvectors=None, n_s=len(eigenvalues),
                   trace=float(eigenvalues.sum()))


@dataclass
class SpectralDensity:
    """
    特征值密度直方图，∫ρ dλ = 1
    """
    bin_edges: np.ndarray
    density: np.ndarray
    degenerate: bool = False

    @property
    def integral(self) -> float:
        return float(np.sum(self.density * np.diff(self.bin_edges)))

    def rows(self):
        for lo, hi, rho in zip(self.bin_edges[:-1], self.bin_edges[1:], self.density):
            yield float(lo), float(hi), float(rho)


@dataclass
class ScalingFit:
    """
    y ∝ Ns^α 的对数-对数最小二乘拟合（ε₁或R）
    """
    points: List[Tuple[int, float]] = field(default_factory=list)
    alpha: float = 0.0
    log_intercept: float = 0.0
    r_squared: float = 0.0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "log_intercept": self.log_intercept,
            "r_squared": self.r_squared,
            "points": [[n, eps] for n, eps in self.points],
        }


def symmetrized(m: CoreadMatrices, matrix: MatrixKind = MatrixKind.NORMALIZED,
                dense: bool = True) -> Union[np.ndarray, sparse.csr_matrix]:
    """
    构造对称矩阵 S = D^(-1/2)·R·D^(-1/2)，与N相似，因而特征值相同且为实数

    matrix为COREAD时直接返回R。

    Args:
        m (CoreadMatrices): 共读矩阵
        matrix (MatrixKind): normalized或coread
        dense (bool): 返回稠密数组还是CSR矩阵

    Returns:
        严格对称的矩阵
    """
    R = m.R.astype(np.float64).tocoo()
    if MatrixKind(matrix) == MatrixKind.NORMALIZED:
        scale = 1.0 / np.sqrt(m.degrees.astype(np.float64))
        # s_k*s_l == s_l*s_k，与对称的R逐元素相乘后S仍严格对称
        R.data = R.data * (scale[R.row] * scale[R.col])
    S = R.tocsr()
    S.sort_indices()

    if (S != S.T).nnz:
        raise InvariantError("symmetrized matrix S is not exactly symmetric")
    return S.toarray() if dense else S


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # 每个特征向量绝对值最大的分量取正
    if vectors.size == 0:
        return vectors
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _check_spectrum(S, values: np.ndarray, vectors: np.ndarray, full: bool) -> Tuple[float, float, float]:
    if sparse.issparse(S):
        trace = float(S.diagonal().sum())
        frobenius = float(sparse_linalg.norm(S))
    else:
        trace = float(np.trace(S))
        frobenius = float(np.linalg.norm(S))

    trace_residual = 0.0
    if full:
        trace_residual = abs(float(values.sum()) - trace) / max(abs(trace), 1.0)
        if trace_residual > TRACE_TOLERANCE:
            raise InvariantError(f"trace not conserved: sum of eigenvalues {values.sum()!r} vs trace {trace!r}")
        if values[-1] < -PSD_TOLERANCE:
            raise InvariantError(f"matrix is not positive semidefinite: min eigenvalue {values[-1]!r}")

    top = min(RESIDUAL_PAIRS, vectors.shape[1])
    residuals = np.linalg.norm(S @ vectors[:, :top] - vectors[:, :top] * values[:top], axis=0)
    max_residual = float(residuals.max()) if top else 0.0
    if max_residual > RESIDUAL_TOLERANCE * max(frobenius, 1.0):
        raise InvariantError(f"eigenpair residual {max_residual!r} exceeds {RESIDUAL_TOLERANCE} * |S|_F")
    return trace, trace_residual, max_residual


def eigendecompose(m: CoreadMatrices, matrix: MatrixKind = MatrixKind.NORMALIZED,
                   dense_threshold: int = DEFAULT_DENSE_THRESHOLD,
                   top_k: Optional[int] = None) -> SpectralSummary:
    """
    计算N（或R）的实特征谱

    Ns不超过dense_threshold时做完整的稠密对称分解；否则用Lanczos（ARPACK）只求前top_k个。

    Args:
        m (CoreadMatrices): 共读矩阵
        matrix (MatrixKind): normalized或coread
        dense_threshold (int): 稠密分解的最大Ns
        top_k (int): 迭代求解时的特征对数

    Returns:
        SpectralSummary: 降序特征值和单位正交特征向量

    Raises:
        DomainError: 存在零度用户
        EigenSolverError: 求解器不收敛
        InvariantError: 迹守恒、半正定或残差检查失败
    """
    matrix = MatrixKind(matrix)
    n = m.n_users
    if np.any(m.degrees <= 0):
        raise DomainError("every user must have at least one read")

    dense = n <= dense_threshold
    S = symmetrized(m, matrix, dense=dense)

    if dense:
        try:
            values, vectors = linalg.eigh(S)
        except linalg.LinAlgError as e:
            raise EigenSolverError(f"dense eigensolver failed: {e}", {"n": n, "driver": "eigh"}) from e
        full = True
    else:
        k = min(top_k or DEFAULT_ITERATIVE_K, n - 1)
        emit_warning(
            "spectra",
            f"Ns={n} exceeds dense threshold {dense_threshold}; computing top {k} eigenpairs only, "
            f"spectral density needs the full spectrum",
        )
        try:
            # 固定初始向量，保证结果可复现
            v0 = np.full(n, 1.0 / np.sqrt(n))
            values, vectors = sparse_linalg.eigsh(S, k=k, which='LA', v0=v0)
        except sparse_linalg.ArpackNoConvergence as e:
            raise EigenSolverError(
                f"Lanczos did not converge: {len(e.eigenvalues)} of {k} eigenpairs found",
                {"n": n, "k": k, "converged": len(e.eigenvalues)},
            ) from e
        full = False

    order = np.argsort(values, kind='stable')[::-1]
    values = values[order]
    vectors = _fix_signs(vectors[:, order])

    trace, trace_residual, max_residual = _check_spectrum(S, values, vectors, full)

    summary = SpectralSummary(
        eigenvalues=values,
        eigenvectors=vectors,
        n_s=n,
        matrix=matrix,
        full_spectrum=full,
        trace=trace,
        trace_residual=trace_residual,
        max_residual=max_residual,
    )
    emit_step("spectra", n_s=n, matrix=matrix.value, epsilon1=summary.epsilon1,
              full_spectrum=full, trace_residual=trace_residual)
    return summary


def spectral_density(summary: SpectralSummary, bins: Union[int, str] = "auto") -> SpectralDensity:
    """
    特征值密度直方图，覆盖[ε_Ns, ε₁]并归一化到单位积分

    Args:
        summary (SpectralSummary): 完整谱
        bins (int | "auto"): 分箱数；auto为Freedman–Diaconis规则，至少10个

    Returns:
        SpectralDensity: 直方图

    Raises:
        DomainError: 只有部分谱或bins非法
        InsufficientDataError: 少于2个特征值
    """
    if not summary.full_spectrum:
        raise DomainError("spectral density needs the full spectrum")
    values = np.asarray(summary.eigenvalues, dtype=np.float64)
    if values.size < 2:
        raise InsufficientDataError("spectral density needs at least 2 eigenvalues")

    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        width = np.finfo(np.float64).eps * max(abs(lo), 1.0)
        emit_warning("density", f"all {values.size} eigenvalues equal {lo!r}; using a single degenerate bin")
        edges = np.array([lo - width / 2, lo + width / 2])
        return SpectralDensity(bin_edges=edges, density=np.array([1.0 / (edges[1] - edges[0])]), degenerate=True)

    if bins == "auto":
        n_bins = max(MIN_AUTO_BINS, len(np.histogram_bin_edges(values, bins='fd', range=(lo, hi))) - 1)
    else:
        n_bins = int(bins)
        if n_bins < 1:
            raise DomainError(f"bins must be positive, got {bins!r}")

    density, edges = np.histogram(values, bins=n_bins, range=(lo, hi), density=True)
    return SpectralDensity(bin_edges=edges, density=density)


def separation_statistic(summary: SpectralSummary) -> float:
    """
    R = (ε₁−ε₂)/(ε₂−ε_Ns)：最大特征值离谱主体的距离，以主体宽度归一化

    Raises:
        UndefinedStatisticError: Ns < 3 或谱主体宽度为0
    """
    values = summary.eigenvalues
    if len(values) < 3:
        raise UndefinedStatisticError("separation statistic undefined for n_s < 3")
    if not summary.full_spectrum:
        raise UndefinedStatisticError("separation statistic needs the smallest eigenvalue (full spectrum)")

    eps1, eps2, eps_last = float(values[0]), float(values[1]), float(values[-1])
    bulk = eps2 - eps_last
    if bulk <= BULK_WIDTH_TOLERANCE * max(abs(eps1), 1.0):
        raise UndefinedStatisticError(f"separation statistic undefined: zero-width bulk (eps2 = eps_Ns = {eps2!r})")
    return (eps1 - eps2) / bulk


def fit_power_law(runs: Sequence[Tuple[int, float]], quantity: str = "epsilon1") -> ScalingFit:
    """
    在(log Ns, log y)上做普通最小二乘，斜率即幂律指数

    Args:
        runs (list): (n_s, y) 点列
        quantity (str): y的名字，只用于错误信息

    Returns:
        ScalingFit: 指数(alpha)、截距和r²

    Raises:
        InsufficientDataError: 少于3个不同的n_s
        DomainError: 存在y <= 0或n_s <= 0
    """
    points = [(int(n), float(value)) for n, value in runs]
    if len(points) < 3:
        raise InsufficientDataError(f"fit of {quantity} needs at least 3 points, got {len(points)}")
    sizes = [n for n, _ in points]
    if len(set(sizes)) != len(sizes):
        raise InsufficientDataError(f"fit of {quantity} needs distinct n_s values")
    for n, value in points:
        if n <= 0:
            raise DomainError(f"n_s must be positive, got {n}")
        if not value > 0:
            raise DomainError(f"{quantity} must be positive for a log-log fit, got {value!r} at n_s={n}")

    x = np.log(np.asarray(sizes, dtype=np.float64))
    y = np.log(np.asarray([value for _, value in points], dtype=np.float64))
    fit = stats.linregress(x, y)

    # 常数输入时回归完全拟合
    if np.ptp(y) == 0:
        r_squared = 1.0
    else:
        r_squared = float(min(max(fit.rvalue ** 2, 0.0), 1.0))

    return ScalingFit(points=points, alpha=float(fit.slope), log_intercept=float(fit.intercept), r_squared=r_squared)


def fit_alpha(runs: Sequence[Tuple[int, float]]) -> ScalingFit:
    """
    ε₁ ∝ Ns^α 的拟合，见fit_power_law
    """
    return fit_power_law(runs, "epsilon1")


def nested_sweep(sample: Sample, sizes: Sequence[int], matrix: MatrixKind = MatrixKind.NORMALIZED,
                 dense_threshold: int = DEFAULT_DENSE_THRESHOLD) -> List[SpectralSummary]:
    """
    对一组递增的样本大小依次做 取样 -> 共读 -> 特征分解

    每个样本都是排序后用户列表的前缀，所以结果是确定的。

    Args:
        sample (Sample): 最大的样本
        sizes (list): 严格递增的样本大小

    Returns:
        list: 与sizes对应的SpectralSummary

    Raises:
        DomainError: sizes非递增、小于3或超过样本大小
    """
    sizes = [int(n) for n in sizes]
    if not sizes:
        raise DomainError("sweep needs at least one sample size")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise DomainError(f"sweep sizes must be strictly ascending: {sizes}")
    if sizes[0] < 3:
        raise DomainError(f"sweep sizes must be >= 3, got {sizes[0]}")
    if sizes[-1] > sample.size:
        raise DomainError(f"sweep size {sizes[-1]} exceeds the sample of {sample.size} users")

    summaries = []
    for n in sizes:
        sub = draw_sample(sample.profiles, n)
        matrices = build_coread(build_incidence(sub), sub.users, dense_threshold)
        summaries.append(eigendecompose(matrices, matrix, dense_threshold))
    return summaries
