import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from coread_core.config.load import MANIFEST_FORMAT, MANIFEST_VERSION, load_manifest
from coread_core.config.run_spec import RateBasis, RunConfig, SynthConfig
from coread_core.domain.errors import (
    CoreadError,
    DomainError,
    InsufficientDataError,
    StageError,
    UndefinedStatisticError,
)
from coread_core.domain.models import JournalFilter, ReadProfile, Sample
from coread_core.format.tables import (
    read_citation_counts,
    read_scaling_rows,
    render_coread_triplets,
    write_csv,
    write_json,
)
from coread_core.pipeline.communities import CitationTable, community_report, project, sphere_query
from coread_core.pipeline.coread import CoreadMatrices, build_coread, build_incidence
from coread_core.pipeline.logstore import dedup_reads, read_event_logs
from coread_core.pipeline.population import draw_sample, filter_population, interval_span, sample_rows
from coread_core.pipeline.spectra import (
    SpectralSummary,
    eigendecompose,
    fit_alpha,
    fit_power_law,
    nested_sweep,
    separation_statistic,
    spectral_density,
)
from coread_core.pipeline.synth import generate
from coread_core.utils.hashing import file_crc32
from coread_core.utils.io import atomic_write
from coread_core.utils.report import emit_detail, emit_step, emit_warning

PathLike = Union[str, Path]


@contextmanager
def stage(name: str):
    """
    把某个阶段内的错误包装成StageError，并输出错误步骤
    """
    started = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (CoreadError, OSError, UnicodeDecodeError) as e:
        emit_step(name, "error", message=str(e))
        raise StageError(name, e) from e
    emit_detail(name, seconds=round(time.perf_counter() - started, 6))


def write_manifest(out_dir: PathLike, command: str, params: dict, seed: int, outputs: List[str]) -> Path:
    """
    写出manifest.json：所有参数、种子以及每个输出文件的CRC32

    Args:
        out_dir (str): 输出目录
        command (str): 子命令
        params (dict): 参数
        seed (int): 随机种子
        outputs (list): 输出文件名

    Returns:
        Path: manifest路径
    """
    out_dir = Path(out_dir)
    manifest = {
        "format": MANIFEST_FORMAT,
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "seed": seed,
        "params": params,
        "outputs": {name: file_crc32(out_dir / name) for name in outputs},
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path


def _absolute(paths: List[str]) -> List[str]:
    return [str(Path(p).resolve()) for p in paths]


def run_synth(config: SynthConfig, out_dir: PathLike) -> dict:
    """
    生成合成日志，写出events.log、truth.json和manifest.json

    Returns:
        dict: 输出文件路径
    """
    out_dir = Path(out_dir)
    with stage("synth"):
        log_text, truth = generate(config)
        atomic_write(out_dir / "events.log", log_text)
        write_json(out_dir / "truth.json", truth.to_dict())
        write_manifest(out_dir, "synth", config.to_dict(), config.seed, ["events.log", "truth.json"])
    return {"events": str(out_dir / "events.log"), "truth": str(out_dir / "truth.json")}


def ingest(run: RunConfig) -> Tuple[int, Dict[str, ReadProfile]]:
    """
    读取日志并去重

    Returns:
        tuple: (坏行数, cookie_id -> ReadProfile)
    """
    with stage("ingest"):
        if not run.logs:
            raise DomainError("no input log given")
        parsed = read_event_logs(run.logs, run.max_malformed)
        profiles = dedup_reads(parsed.events, JournalFilter(tuple(run.journal_tags)), run.period)
        emit_step("dedup", users=len(profiles), period=run.period.value)
    return parsed.malformed_count, profiles


def select_sample(run: RunConfig, profiles: Dict[str, ReadProfile], n_s: int) -> Tuple[int, Sample]:
    """
    人群过滤后取前n_s个用户

    全区间口径且未指定月数时，月数取全部数据覆盖的跨度。

    Returns:
        tuple: (人群大小, Sample)
    """
    with stage("population"):
        rule = run.population_rule()
        if rule.rate_basis == RateBasis.MEAN_OVER_FULL_INTERVAL and rule.interval_months is None:
            rule = replace(rule, interval_months=interval_span(profiles.values()) or None)
        population = filter_population(profiles, rule)
        sample = draw_sample(population, n_s)
        emit_step("sample", requested=n_s, sample_size=sample.size, population_size=len(population))
    return len(population), sample


def build_matrices(run: RunConfig, sample: Sample) -> CoreadMatrices:
    with stage("coread"):
        return build_coread(build_incidence(sample), sample.users, run.dense_threshold)


def decompose(run: RunConfig, matrices: CoreadMatrices) -> SpectralSummary:
    with stage("spectra"):
        return eigendecompose(matrices, run.matrix, run.dense_threshold)


def _separation(summary: SpectralSummary) -> Tuple[Optional[float], Optional[str]]:
    try:
        return separation_statistic(summary), None
    except UndefinedStatisticError as e:
        emit_step("separation", "error", n_s=summary.n_s, message=str(e))
        return None, str(e)


def run_analyze(run: RunConfig, out_dir: PathLike) -> dict:
    """
    ingest -> population -> sample -> coread -> spectra，写出特征值、密度和汇总

    Returns:
        dict: summary.json的内容
    """
    out_dir = Path(out_dir)
    run.logs = _absolute(run.logs)

    malformed, profiles = ingest(run)
    population_size, sample = select_sample(run, profiles, run.n_s)
    matrices = build_matrices(run, sample)
    summary = decompose(run, matrices)

    with stage("density"):
        density = spectral_density(summary, run.bins)

    r_stat, r_error = _separation(summary)

    result = {
        "n_s": summary.n_s,
        "population_size": population_size,
        "malformed_lines": malformed,
        "matrix": summary.matrix.value,
        "epsilon1": summary.epsilon1,
        "r_stat": r_stat,
        "r_stat_error": r_error,
        "trace_residual": summary.trace_residual,
        "min_eigenvalue": float(summary.eigenvalues[-1]),
        "max_residual": summary.max_residual,
        "top_eigenvalues": [float(v) for v in summary.eigenvalues[:run.top]],
    }

    outputs = ["sample.csv", "eigenvalues.csv", "density.csv", "summary.json"]
    with stage("write"):
        write_csv(out_dir / "sample.csv", ("index", "cookie_id", "total_reads"), sample_rows(sample))
        write_csv(out_dir / "eigenvalues.csv", ("rank", "eigenvalue"),
                  ((rank, float(value)) for rank, value in enumerate(summary.eigenvalues, start=1)))
        write_csv(out_dir / "density.csv", ("bin_lo", "bin_hi", "rho"), density.rows())
        if run.export_coread:
            atomic_write(out_dir / "coread.txt", render_coread_triplets(matrices.triplets()))
            outputs.append("coread.txt")
        write_json(out_dir / "summary.json", result)
        write_manifest(out_dir, "analyze", run.to_dict(), run.seed, outputs)
    return result


def _normalize_sizes(sizes: List[int]) -> List[int]:
    unique = sorted(set(int(n) for n in sizes))
    if len(unique) != len(sizes):
        emit_warning("sweep", "duplicate sample sizes removed", sizes=unique)
    return unique


def _separation_fit(rows: List[Tuple[int, float, Optional[float]]]) -> dict:
    # R随Ns按幂律衰减；只用R有定义的行
    points = [(n, r) for n, _, r in rows if r is not None]
    try:
        fit = fit_power_law(points, "R_stat")
    except (InsufficientDataError, DomainError) as e:
        emit_warning("fit", str(e), quantity="R_stat")
        return {"r_exponent": None, "r_log_intercept": None, "r_r_squared": None, "r_error": str(e)}
    emit_step("fit", quantity="R_stat", exponent=fit.alpha, r_squared=fit.r_squared, points=len(fit.points))
    return {"r_exponent": fit.alpha, "r_log_intercept": fit.log_intercept, "r_r_squared": fit.r_squared}


def _fit_document(rows: List[Tuple[int, float, Optional[float]]]) -> dict:
    points = [(n, eps) for n, eps, _ in rows]
    with stage("fit"):
        try:
            fit = fit_alpha(points)
        except InsufficientDataError as e:
            emit_warning("fit", str(e))
            document = {"alpha": None, "log_intercept": None, "r_squared": None,
                        "points": [[n, eps] for n, eps in points], "error": str(e)}
        else:
            emit_step("fit", alpha=fit.alpha, r_squared=fit.r_squared, points=len(fit.points))
            document = fit.to_dict()
        document.update(_separation_fit(rows))
        return document


def run_sweep(run: RunConfig, out_dir: PathLike) -> dict:
    """
    在嵌套样本上扫描Ns，写出scaling.csv、top_eigenvalues.csv和fit.json

    fit.json同时给出ε₁的指数α和R的幂律指数。
    run.from_scaling给出已有的scaling.csv时直接重新拟合。

    Returns:
        dict: fit.json的内容
    """
    out_dir = Path(out_dir)

    if run.from_scaling:
        with stage("fit"):
            scaling_rows = read_scaling_rows(run.from_scaling)
        fit = _fit_document(scaling_rows)
        with stage("write"):
            write_json(out_dir / "fit.json", fit)
            write_manifest(out_dir, "sweep", run.to_dict(), run.seed, ["fit.json"])
        return fit

    run.logs = _absolute(run.logs)
    sizes = _normalize_sizes(run.sizes)
    if not sizes:
        raise StageError("sweep", DomainError("no sample sizes given"))
    run.sizes = sizes

    _, profiles = ingest(run)
    population_size, sample = select_sample(run, profiles, sizes[-1])
    if sample.size < sizes[-1]:
        error = DomainError(f"sweep size {sizes[-1]} exceeds the population of {population_size} users")
        emit_step("sweep", "error", message=str(error))
        raise StageError("sweep", error)

    with stage("sweep"):
        summaries = nested_sweep(sample, sizes, run.matrix, run.dense_threshold)

    scaling_rows = []
    top_rows = []
    for summary in summaries:
        r_stat, _ = _separation(summary)
        scaling_rows.append((summary.n_s, summary.epsilon1, r_stat))
        for rank, value in enumerate(summary.eigenvalues[:run.top], start=1):
            top_rows.append((summary.n_s, rank, float(value)))

    fit = _fit_document(scaling_rows)
    with stage("write"):
        write_csv(out_dir / "scaling.csv", ("n_s", "epsilon1", "R_stat"), scaling_rows)
        write_csv(out_dir / "top_eigenvalues.csv", ("n_s", "rank", "eigenvalue"), top_rows)
        write_json(out_dir / "fit.json", fit)
        write_manifest(out_dir, "sweep", run.to_dict(), run.seed, ["scaling.csv", "top_eigenvalues.csv", "fit.json"])
    return fit


def run_probe(run: RunConfig, out_dir: PathLike) -> dict:
    """
    载入一次analyze运行，投影到前k个特征向量并做球形探测

    Returns:
        dict: report.json的内容
    """
    out_dir = Path(out_dir)

    with stage("probe"):
        if not run.run_dir:
            raise DomainError("probe needs the directory of a prior analyze run")
        run.run_dir = str(Path(run.run_dir).resolve())
        command, analysis = load_manifest(str(Path(run.run_dir) / "manifest.json"))
        if command != "analyze":
            raise DomainError(f"{run.run_dir} holds a '{command}' run, expected 'analyze'")
        if len(run.center) != run.k:
            raise DomainError(f"center has dimension {len(run.center)}, projection has k={run.k}")
        counts = read_citation_counts(run.citations) if run.citations else {}
        citations = CitationTable(counts)

    _, profiles = ingest(analysis)
    _, sample = select_sample(analysis, profiles, analysis.n_s)
    matrices = build_matrices(analysis, sample)
    summary = decompose(analysis, matrices)

    with stage("community"):
        cloud = project(matrices, summary, run.k)
        members = sphere_query(cloud, run.center, run.radius)
        report = community_report(cloud, members, sample, citations, run.min_citations,
                                  center=run.center, radius=run.radius)
        emit_step("community", members=len(report.member_users), papers=len(report.papers))

    header = ("index", "cookie_id") + tuple(f"c{i}" for i in range(1, run.k + 1))
    document = report.to_dict()
    params = run.to_dict()
    if run.citations:
        params["citations"] = str(Path(run.citations).resolve())

    with stage("write"):
        write_csv(out_dir / "points.csv", header, cloud.rows())
        write_json(out_dir / "report.json", document)
        write_manifest(out_dir, "probe", params, run.seed, ["points.csv", "report.json"])
    return document


def replay(manifest_path: PathLike, out_dir: PathLike) -> Tuple[str, dict]:
    """
    按manifest.json重新运行，输出写到out_dir

    Returns:
        tuple: (子命令, 运行结果)
    """
    with stage("manifest"):
        command, config = load_manifest(str(manifest_path))
    runners = {"synth": run_synth, "analyze": run_analyze, "sweep": run_sweep, "probe": run_probe}
    return command, runners[command](config, out_dir)
