from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from coread_core.domain.errors import DomainError, InsufficientDataError
from coread_core.domain.models import Sample
from coread_core.pipeline.coread import CoreadMatrices
from coread_core.pipeline.spectra import SpectralSummary

DEFAULT_COMPONENTS = 3
# 超过该点数时改用k-d树查询
LINEAR_SCAN_LIMIT = 100_000


@dataclass
class ProjectionCloud:
    """
    用户在前k个特征向量上的投影坐标

    Attributes:
        k (int): 分量数
        coords (ndarray): Ns x k，第i行是编号为i+1的用户
        users (tuple): 行号对应的cookie_id
    """
    k: int
    coords: np.ndarray
    users: Tuple[str, ...] = ()
    _tree: Optional[cKDTree] = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.coords)
        return self._tree

    def rows(self):
        """
        导出行：index, cookie_id, c1..ck
        """
        for i, point in enumerate(self.coords, start=1):
            cookie_id = self.users[i - 1] if self.users else ''
            yield (i, cookie_id, *(float(c) for c in point))


@dataclass(frozen=True)
class CitationTable:
    """
    bibcode -> 引用数；不在表中的bibcode按0处理
    """
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for bibcode, count in self.counts.items():
            if count < 0:
                raise DomainError(f"citation count must be >= 0: {bibcode} has {count}")

    def get(self, bibcode: str) -> int:
        return int(self.counts.get(bibcode, 0))


@dataclass(frozen=True)
class PaperEntry:
    bibcode: str
    citations: int
    readers: int


@dataclass
class CommunityReport:
    """
    一次球形探测的结果
    """
    center: List[float]
    radius: float
    member_users: List[str]
    papers: List[PaperEntry]
    min_citations: int

    def to_dict(self) -> dict:
        return {
            "center": [float(c) for c in self.center],
            "radius": float(self.radius),
            "min_citations": self.min_citations,
            "members": list(self.member_users),
            "papers": [
                {"bibcode": p.bibcode, "citations": p.citations, "readers": p.readers}
                for p in self.papers
            ],
        }


def project(m: CoreadMatrices, summary: SpectralSummary, k: int = DEFAULT_COMPONENTS) -> ProjectionCloud:
    """
    把每个用户的共读向量（N的一行）投影到前k个单位正交特征向量上

    不做均值中心化。

    Args:
        m (CoreadMatrices): 共读矩阵
        summary (SpectralSummary): 特征分解结果
        k (int): 分量数

    Returns:
        ProjectionCloud: c_u[i] = <row_u(N), u_i>

    Raises:
        DomainError: k超出范围或特征向量不足
    """
    n = m.n_users
    if k < 1 or k > n:
        raise DomainError(f"k must be in 1..{n}, got {k}")
    if summary.eigenvectors is None or summary.eigenvectors.shape[1] < k:
        available = 0 if summary.eigenvectors is None else summary.eigenvectors.shape[1]
        raise DomainError(f"projection needs {k} eigenvectors, summary has {available}")
    if summary.eigenvectors.shape[0] != n:
        raise DomainError("eigenvectors do not match the co-read matrices")

    basis = summary.eigenvectors[:, :k]
    coords = np.asarray(m.N @ basis)
    return ProjectionCloud(k=k, coords=coords, users=tuple(m.users))


def sphere_query(cloud: ProjectionCloud, center: Sequence[float], radius: float) -> List[int]:
    """
    返回与center的欧氏距离不超过radius的所有用户（含边界），按距离升序、编号升序

    Args:
        cloud (ProjectionCloud): 投影点云
        center (list): k维中心
        radius (float): 半径

    Returns:
        list: 用户编号（从1开始）

    Raises:
        DomainError: 半径为负或维度不符
    """
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (cloud.k,):
        raise DomainError(f"center has dimension {center.size}, projection has k={cloud.k}")
    if np.isnan(radius) or radius < 0:
        raise DomainError(f"radius must be non-negative, got {radius!r}")

    if len(cloud) > LINEAR_SCAN_LIMIT:
        # 稍微放宽半径取候选，再用同样的距离公式精确筛选，结果与线性扫描一致
        candidates = np.asarray(sorted(cloud.tree().query_ball_point(center, radius * (1 + 1e-9) + 1e-12)),
                                dtype=np.int64)
    else:
        candidates = np.arange(len(cloud))

    if candidates.size == 0:
        return []

    distances = np.linalg.norm(cloud.coords[candidates] - center, axis=1)
    inside = distances <= radius
    hits = candidates[inside]
    order = np.lexsort((hits, distances[inside]))
    return [int(i) + 1 for i in hits[order]]


def community_report(cloud: ProjectionCloud, users: Sequence[int], sample: Sample,
                     citations: CitationTable, min_citations: int = 0,
                     center: Optional[Sequence[float]] = None,
                     radius: Optional[float] = None) -> CommunityReport:
    """
    把一组用户映射回他们读过的文章，按引用数过滤和排序

    Args:
        cloud (ProjectionCloud): 投影点云
        users (list): sphere_query返回的用户编号
        sample (Sample): 样本（提供每个用户的文章集合）
        citations (CitationTable): 引用数表
        min_citations (int): 最少引用数
        center (list): 球心；省略时取成员坐标的质心
        radius (float): 半径；省略时取成员到球心的最大距离

    Returns:
        CommunityReport: 文章按引用数降序、读者数降序、bibcode升序排列

    Raises:
        InsufficientDataError: users为空
        DomainError: min_citations为负
    """
    if not users:
        raise InsufficientDataError("no users inside the sphere; try a larger radius")
    if min_citations < 0:
        raise DomainError(f"min_citations must be >= 0, got {min_citations}")

    rows = np.asarray(users, dtype=np.int64) - 1
    points = cloud.coords[rows]
    if center is None:
        center = points.mean(axis=0)
    center = np.asarray(center, dtype=np.float64)
    if radius is None:
        radius = float(np.linalg.norm(points - center, axis=1).max())

    readers: Dict[str, int] = {}
    members = []
    for index in users:
        profile = sample.profile_at(int(index))
        members.append(profile.cookie_id)
        for bibcode in profile.papers:
            readers[bibcode] = readers.get(bibcode, 0) + 1

    papers = [
        PaperEntry(bibcode, citations.get(bibcode), count)
        for bibcode, count in readers.items()
        if citations.get(bibcode) >= min_citations
    ]
    papers.sort(key=lambda p: (-p.citations, -p.readers, p.bibcode))

    return CommunityReport(
        center=[float(c) for c in center],
        radius=float(radius),
        member_users=members,
        papers=papers,
        min_citations=min_citations,
    )
