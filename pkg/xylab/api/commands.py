import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from xylab import __version__
from xylab.core.errors import ConfigError, HypothesisViolation, SearchTooLargeError
from xylab.core.logging import logger
from xylab.models.experiment import ExperimentConfig
from xylab.models.results import SCAN_COLUMNS
from xylab.services import ldp, sampler, zero_temp
from xylab.services.maxplus import periodic_orbit_oracle, solve_maxplus, uniqueness_probe


class RunContext:
    """Resolved config plus output location shared by every command."""

    def __init__(self, config: ExperimentConfig, out: Optional[Path] = None, threads: int = 1,
                 formats: Optional[Sequence[str]] = None):
        self.config = config
        self.out = Path(out or config.outputs.directory)
        self.threads = max(int(threads), 1)
        self.formats = list(formats or config.outputs.formats)
        self.pot = config.build_potential()
        self.grid = config.build_grid()
        self.written: List[Path] = []
        self._sub = None

    @property
    def sub(self):
        if self._sub is None:
            self._sub = solve_maxplus(self.pot, self.grid, method=self.config.maxplus_method)
        return self._sub

    def header(self) -> dict:
        return {
            "config": self.config.model_dump(mode="json"),
            "version": __version__,
            "generated": datetime.now(timezone.utc).isoformat(),
        }

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def write_json(self, name: str, data) -> None:
        if "json" not in self.formats:
            return
        path = self.path(name)
        payload = {"header": self.header(), "data": data}
        path.write_text(json.dumps(payload, indent=2, default=_to_builtin) + "\n", encoding="utf-8")
        self.written.append(path)
        logger.info(f"wrote {path}")

    def write_csv(self, name: str, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
        if "csv" not in self.formats:
            return
        path = self.path(name)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(self.header(), default=_to_builtin) + "\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.written.append(path)
        logger.info(f"wrote {path}")


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _tag(c: float) -> str:
    return f"{c:g}".replace(".", "p")


# ========== Eigendata ==========
def cmd_eig(ctx: RunContext) -> List[Path]:
    """Leading eigendata of L_{cf} for every c of the schedule"""
    systems = zero_temp.eigensystems(ctx.pot, ctx.grid, ctx.config.c_schedule, threads=ctx.threads)
    for es in systems:
        ctx.write_json(f"eig_c{_tag(es.c)}.json", es.to_export())
    ctx.write_csv(
        "eig.csv",
        ["c", "log_beta_c", "residual", "adjoint_residual", "iterations"],
        [[es.c, es.log_beta_c, es.residual, es.adjoint_residual, es.iterations] for es in systems],
    )
    return ctx.written


# ========== Subaction ==========
def cmd_subaction(ctx: RunContext) -> List[Path]:
    """β(f), calibrated subaction and the uniqueness verdict"""
    sub = ctx.sub
    report = uniqueness_probe(sub)
    data = sub.to_export(
        degenerate=report.degenerate,
        recurrent_class=[angles[0] for angles in report.support_angles],
    )
    data["verdict"] = report.verdict
    data["method"] = sub.method
    try:
        best, orbit = periodic_orbit_oracle(ctx.pot, ctx.grid, ctx.config.max_period)
        data["orbit_oracle"] = {"max_period": ctx.config.max_period, "mean": best, "orbit": list(orbit.periodic_tail)}
    except SearchTooLargeError as exc:
        logger.warning(f"orbit oracle skipped: {exc}")
        data["orbit_oracle"] = None
    ctx.write_json("subaction.json", data)
    ctx.write_csv("subaction.csv", ["state", "V"], [[s, v] for s, v in enumerate(sub.V)])
    return ctx.written


# ========== Temperature scan ==========
def cmd_scan(ctx: RunContext) -> List[Path]:
    """Scan records, selection report and fibre-mass check"""
    sub = ctx.sub
    records = zero_temp.run_scan(ctx.pot, ctx.grid, ctx.config.c_schedule, sub=sub, threads=ctx.threads)
    ctx.write_csv("scan.csv", SCAN_COLUMNS, [r.csv_row() for r in records])

    report = {}
    if len(records) >= 3:
        selection = zero_temp.selection_report(records, sub, gap=ctx.config.selection_gap)
        report["selection"] = selection.model_dump(mode="json")
    else:
        logger.warning("selection report needs at least 3 scan points; skipped")
    es = zero_temp.eigensystems(ctx.pot, ctx.grid, [records[-1].c])[0]
    fiber = zero_temp.fiber_mass_check(es, sub, ctx.config.eps_list, ctx.config.build_probes(), records)
    report["fiber_mass"] = fiber.model_dump(mode="json")
    ctx.write_json("selection.json", report)
    return ctx.written


# ========== Large deviations ==========
def cmd_ldp(ctx: RunContext) -> List[Path]:
    """Empirical LDP slopes against the R₊ rate for every configured set"""
    sets = ctx.config.build_sets()
    if not sets:
        raise ConfigError("ldp needs at least one set", field="sets")
    probes = ctx.config.build_probes()
    schedule = ctx.config.c_schedule
    for i, arc_set in enumerate(sets):
        mu = ldp.empirical_mu_rate(ctx.pot, ctx.grid, arc_set, schedule, sub=ctx.sub, threads=ctx.threads)
        by_point = ldp.operator_rate_by_point(
            ctx.pot, ctx.grid, arc_set, probes, schedule, ctx.config.n_schedule,
            sub=ctx.sub, threads=ctx.threads,
        )
        ctx.write_json(f"ldp_set{i}.json", {
            "mu": mu.to_export(),
            "operator_by_point": by_point.to_export(),
        })
        ctx.write_csv(
            f"ldp_set{i}_grid.csv",
            ["point", "c", "n", "value"],
            [[k, s.c, s.n, s.value] for k, op in enumerate(by_point.reports) for s in op.grid_values],
        )

    cancellation = ldp.beta_cancellation_check(
        ctx.pot, ctx.grid, schedule, ctx.config.n_schedule, probes, sub=ctx.sub, threads=ctx.threads,
    )
    ctx.write_json("ldp_cancellation.json", cancellation.model_dump(mode="json"))
    return ctx.written


# ========== Sampler ==========
def cmd_sample(ctx: RunContext) -> List[Path]:
    """Chains at the sampler c values with Birkhoff and marginal checks"""
    cfg = ctx.config.sampler
    reports = []
    systems = zero_temp.eigensystems(ctx.pot, ctx.grid, ctx.config.sampler_c, threads=ctx.threads)
    for es in systems:
        chain = sampler.sample_chain(es, cfg)
        ctx.write_csv(f"chain_c{_tag(es.c)}.csv", ["x"], [[a] for a in chain.angles])
        reports.append({
            "c": es.c,
            "seed": cfg.seed,
            "degenerate_cdf": chain.degenerate_cdf,
            "stationarity_defect": sampler.stationarity_defect(es),
            "birkhoff": sampler.birkhoff_check(chain, ctx.pot, es).model_dump(mode="json"),
            "marginal": sampler.empirical_vs_marginal(chain, es).model_dump(mode="json"),
        })
    ladder = sampler.birkhoff_ladder(ctx.pot, ctx.grid, ctx.config.sampler_c, cfg, sub=ctx.sub)
    ctx.write_json("sample.json", {
        "thresholds": {"z_score": 3.0, "w1_ratio": list(sampler.SCALING_RANGE)},
        "chains": reports,
        "ladder": ladder.model_dump(mode="json"),
    })
    return ctx.written


def cmd_all(ctx: RunContext) -> List[Path]:
    """Every command in order; ldp is skipped for degenerate potentials"""
    cmd_eig(ctx)
    cmd_subaction(ctx)
    cmd_scan(ctx)
    if ctx.config.sets:
        try:
            cmd_ldp(ctx)
        except HypothesisViolation as exc:
            logger.warning(f"ldp skipped: {exc}")
    if ctx.sub.structure.window == 1:
        cmd_sample(ctx)
    return ctx.written


COMMANDS: Dict[str, Callable[[RunContext], List[Path]]] = {
    "eig": cmd_eig,
    "subaction": cmd_subaction,
    "scan": cmd_scan,
    "ldp": cmd_ldp,
    "sample": cmd_sample,
    "all": cmd_all,
}
