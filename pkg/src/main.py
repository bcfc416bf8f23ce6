"""
Multiview SBM Test - Command Line
=================================

    python -m src.main test-networks binary.tsv cocomplex.tsv --k1 auto --k2 auto --perms 10000
    python -m src.main test-netcov network.tsv features.csv --row-labels
    python -m src.main simulate --generator netcov --n 500 --delta 0.9 --out sim/
    python -m src.main power-study --grid-delta 0,0.5,0.9 --reps 200 --out study/
    python -m src.main estimate-k network.tsv
    python -m src.main fetch URL --out data/hint_binary.tsv
    python -m src.main verify-ledger

Exit codes: 0 success, 1 test or domain error, 2 usage, parameter, parse or I/O error.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
from pydantic import ValidationError

from .exceptions import EdgeListParseError, MatrixParseError, MultiviewError, ParameterError
from .models import EdgeListFormat, PopularitySpec, SimulationDesign, StudyGrid, TestConfig
from .services import DataService, SimulationService, TestService
from .settings import get_settings

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
GENERATORS = ["sbm", "dcsbm", "dcsbm-shared-popularity", "netcov", "dc-netcov"]
TESTS = ["p2lrt-true-k", "p2lrt-auto-k", "gtest-true-k", "gtest-auto-k"]


class KParam(click.ParamType):
    """A positive integer or the word 'auto'"""
    name = "int|auto"

    def convert(self, value, param, ctx):
        if isinstance(value, int) or value == "auto":
            return value
        try:
            k = int(value)
        except ValueError:
            self.fail(f"{value!r} is neither an integer nor 'auto'", param, ctx)
        if k < 1:
            self.fail("number of communities must be at least 1", param, ctx)
        return k


class NumberList(click.ParamType):
    """Comma separated numbers, e.g. 0,0.5,0.9"""
    name = "list"

    def __init__(self, cast=float):
        self.cast = cast

    def convert(self, value, param, ctx):
        if isinstance(value, list):
            return value
        try:
            items = [self.cast(v) for v in str(value).split(",") if v.strip()]
        except ValueError:
            self.fail(f"{value!r} is not a comma separated list of numbers", param, ctx)
        if not items:
            self.fail("the list is empty", param, ctx)
        return items


class ExitCodeGroup(click.Group):
    """Map domain errors to exit 1 and parameter, parse or I/O errors to exit 2"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (EdgeListParseError, MatrixParseError, ParameterError) as e:
            click.echo(f"error: {e}", err=True)
            ctx.exit(2)
        except MultiviewError as e:
            click.echo(f"error: {e}", err=True)
            ctx.exit(1)
        except ValidationError as e:
            click.echo(f"error: invalid parameters\n{e}", err=True)
            ctx.exit(2)
        except OSError as e:
            click.echo(f"error: {e}", err=True)
            ctx.exit(2)


# Shared options

def _edge_format_options(fn):
    fn = click.option("--whitespace", is_flag=True, help="Split edge-list lines on any whitespace instead of tabs")(fn)
    fn = click.option("--skip-header", is_flag=True, help="Ignore the first non-comment edge-list line")(fn)
    fn = click.option("--columns", type=(int, int), default=(0, 1), show_default=True,
                      help="Zero-based columns of the two endpoints")(fn)
    return fn


def _test_options(fn):
    fn = click.option("--k1", type=KParam(), default="auto", show_default=True)(fn)
    fn = click.option("--k2", type=KParam(), default="auto", show_default=True)(fn)
    fn = click.option("--perms", "-M", type=click.IntRange(min=1), default=None, help="Number of permutations")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.05,
                      show_default=True, help="Level reported next to the p-value")(fn)
    fn = click.option("--plus-one", is_flag=True, help="Use (1 + count) / (1 + M) p-values")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)(fn)
    fn = click.option("--threads", type=int, default=None, help="Permutation workers (default: all cores)")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)(fn)
    return fn


def _edge_format(whitespace: bool, skip_header: bool, columns: Sequence[int]) -> EdgeListFormat:
    return EdgeListFormat(delimiter=None if whitespace else "\t", skip_header=skip_header, columns=tuple(columns))


def _test_config(threads: Optional[int], plus_one: bool) -> TestConfig:
    return TestConfig(n_jobs=threads or get_settings().threads, plus_one_pvalue=plus_one)


def _out_dir(out: Optional[Path], name: str) -> Path:
    return out if out is not None else get_settings().output_dir / name


def _emit(record: Dict[str, Any], fmt: str) -> None:
    if fmt == "json":
        click.echo(json.dumps(record, indent=2, sort_keys=True))
    else:
        keys = list(record)
        click.echo(",".join(keys))
        click.echo(",".join("" if record[k] is None else str(record[k]) for k in keys))


def _emit_rows(rows: List[Dict[str, Any]], fmt: str) -> None:
    if fmt == "json":
        click.echo(json.dumps(rows, indent=2))
        return
    if rows:
        keys = list(rows[0])
        click.echo(",".join(keys))
        for row in rows:
            click.echo(",".join("" if row[k] is None else str(row[k]) for k in keys))


# =============================================================================
# COMMANDS
# =============================================================================

@click.group(cls=ExitCodeGroup)
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Default comes from MVTEST_LOG_LEVEL")
def cli(log_level: Optional[str]):
    """Tests of association between the communities of two network views."""
    level = (log_level or get_settings().log_level).upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


@cli.command("test-networks")
@click.argument("view1", type=click.Path(path_type=Path))
@click.argument("view2", type=click.Path(path_type=Path))
@_edge_format_options
@_test_options
def test_networks(view1, view2, whitespace, skip_header, columns, k1, k2, perms, seed, alpha, plus_one, out, threads, fmt):
    """P2LRT for two networks given as edge lists."""
    perms = perms or get_settings().default_perms
    result, _ = TestService().test_networks(
        view1, view2, k1, k2, perms, seed, _out_dir(out, "test-networks"),
        _test_config(threads, plus_one), _edge_format(whitespace, skip_header, columns),
    )
    _emit({**result.summary(), "alpha": alpha, "rejected": result.p_value <= alpha}, fmt)


@cli.command("test-netcov")
@click.argument("network", type=click.Path(path_type=Path))
@click.argument("matrix", type=click.Path(path_type=Path))
@click.option("--header", is_flag=True, help="The matrix file has a header row")
@click.option("--row-labels", is_flag=True, help="The first matrix column holds node labels")
@click.option("--matrix-delimiter", default=",", show_default=True)
@_edge_format_options
@_test_options
def test_netcov(network, matrix, header, row_labels, matrix_delimiter, whitespace, skip_header, columns,
                k1, k2, perms, seed, alpha, plus_one, out, threads, fmt):
    """P2LRT for a network and a numeric node feature matrix."""
    perms = perms or get_settings().default_perms
    result, _ = TestService().test_netcov(
        network, matrix, k1, k2, perms, seed, _out_dir(out, "test-netcov"),
        _test_config(threads, plus_one), _edge_format(whitespace, skip_header, columns),
        header=header, row_labels=row_labels, delimiter=matrix_delimiter,
    )
    _emit({**result.summary(), "alpha": alpha, "rejected": result.p_value <= alpha}, fmt)


def _parse_theta(theta: Optional[str]) -> Optional[List[List[float]]]:
    if not theta:
        return None
    try:
        return json.loads(theta)
    except json.JSONDecodeError as e:
        raise click.BadParameter(f"not valid JSON: {e}", param_hint="--theta") from e


def _popularity(kind: Optional[str]) -> Optional[PopularitySpec]:
    if kind is None:
        return None
    settings = get_settings()
    return PopularitySpec(kind=kind, low=settings.uniform_popularity_low, high=settings.uniform_popularity_high)


@cli.command()
@click.option("--generator", type=click.Choice(GENERATORS), default="sbm", show_default=True)
@click.option("--n", type=click.IntRange(min=2), default=1000, show_default=True)
@click.option("--k1", type=click.IntRange(min=1), default=6, show_default=True)
@click.option("--k2", type=click.IntRange(min=1), default=None, help="Defaults to --k1")
@click.option("--delta", type=click.FloatRange(0, 1), default=0.0, show_default=True)
@click.option("--r", type=float, default=3.0, show_default=True, help="Within / between block density ratio")
@click.option("--s", type=float, default=0.02, show_default=True, help="Expected edge density")
@click.option("--sigma", type=float, default=1.0, show_default=True, help="Feature noise level")
@click.option("--theta", default=None, help="Explicit block matrix as JSON, e.g. [[0.5,0.25],[0.25,1]]")
@click.option("--popularity", type=click.Choice(["two_point", "uniform"]), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)
def simulate(generator, n, k1, k2, delta, r, s, sigma, theta, popularity, seed, out):
    """Write one synthetic data set plus its ground truth."""
    design = SimulationDesign(
        generator=generator, n=n, k1=k1, k2=k2 or k1, delta=delta, r=r, s=s, sigma=sigma,
        theta=_parse_theta(theta), popularity=_popularity(popularity),
    )
    _, paths = SimulationService().simulate(design, seed, _out_dir(out, "simulate"))
    for path in paths:
        click.echo(str(path))


@cli.command("power-study")
@click.option("--generator", type=click.Choice(GENERATORS), default="sbm", show_default=True)
@click.option("--n", type=click.IntRange(min=2), default=1000, show_default=True)
@click.option("--k", type=click.IntRange(min=1), default=6, show_default=True)
@click.option("--grid-delta", type=NumberList(), default="0", show_default=True)
@click.option("--grid-r", type=NumberList(), default="3", show_default=True)
@click.option("--grid-s", type=NumberList(), default="0.02", show_default=True)
@click.option("--grid-sigma", type=NumberList(), default="1", show_default=True)
@click.option("--k-sweep", type=NumberList(int), default=None, help="Numbers of communities used at fixed data")
@click.option("--tests", type=click.Choice(TESTS), multiple=True, help="Repeatable; default: all four")
@click.option("--theta", default=None, help="Explicit block matrix as JSON")
@click.option("--popularity", type=click.Choice(["two_point", "uniform"]), default=None)
@click.option("--reps", type=click.IntRange(min=1), default=None)
@click.option("--perms", "-M", type=click.IntRange(min=1), default=None)
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--plus-one", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--threads", type=int, default=None, help="Replicate workers (default: all cores)")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="csv", show_default=True)
def power_study(generator, n, k, grid_delta, grid_r, grid_s, grid_sigma, k_sweep, tests, theta, popularity,
                reps, perms, alpha, seed, plus_one, out, threads, fmt):
    """Rejection rates of the tests over a simulation grid."""
    settings = get_settings()
    grid = StudyGrid(
        generator=generator, n=n, k=k, deltas=grid_delta, rs=grid_r, ss=grid_s, sigmas=grid_sigma,
        reps=reps or settings.default_reps, alpha=alpha, perms=perms or settings.default_perms,
        tests=list(tests) or TESTS, k_sweep=k_sweep, seed=seed,
        theta=_parse_theta(theta), popularity=_popularity(popularity),
    )
    _, aggregate = SimulationService().power_study(
        grid, _out_dir(out, "power-study"), TestConfig(plus_one_pvalue=plus_one), threads
    )
    _emit_rows([a.to_dict() for a in aggregate], fmt)


@cli.command("estimate-k")
@click.argument("path", type=click.Path(path_type=Path))
@_edge_format_options
def estimate_k(path, whitespace, skip_header, columns):
    """Bethe Hessian estimate of the number of communities."""
    click.echo(TestService().estimate_k(path, _edge_format(whitespace, skip_header, columns)))


@cli.command()
@click.argument("url")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--timeout", type=float, default=60.0, show_default=True)
def fetch(url, out_path, timeout):
    """Download an interaction file, e.g. a HINT interactome."""
    click.echo(str(DataService().fetch(url, out_path, timeout)))


@cli.command("verify-ledger")
def verify_ledger():
    """Check the hash chain of the run ledger."""
    report = DataService().verify_ledger()
    click.echo(json.dumps(report, indent=2))
    if not report["integrity"]:
        sys.exit(1)


if __name__ == "__main__":
    cli()
